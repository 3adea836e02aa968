/* Copyright 2026 The locdistill Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "locdistill/toydet.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "locdistill/errors.h"

namespace locdistill {
namespace {

// Edges observed with the large noise scale, per class parity. Even classes
// are blurry at the bottom and right, odd classes at the top and left.
std::array<bool, 4> ambiguous_edges(int class_id) {
  if (class_id % 2 == 0) return {false, true, false, true};
  return {true, false, true, false};
}

std::vector<double> observe(const std::array<double, 4>& offsets,
                            const std::array<double, 4>& sigma,
                            std::size_t distractors, std::mt19937_64& rng) {
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<double> features;
  features.reserve(4 + distractors);
  for (std::size_t k = 0; k < 4; ++k) {
    double obs = offsets[k];
    if (sigma[k] > 0.0) obs += sigma[k] * unit(rng);
    features.push_back((obs - kFeatureCenter) / kFeatureScale);
  }
  for (std::size_t k = 0; k < distractors; ++k) features.push_back(unit(rng));
  return features;
}

}  // namespace

std::size_t feature_dim(const SceneOptions& options) {
  return 4 + options.distractors;
}

std::vector<SceneSample> generate_dataset(std::size_t count, double sigma,
                                          std::uint64_t seed,
                                          const SceneOptions& options) {
  if (count < 1) throw DomainError("dataset needs at least one sample");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw DomainError("sigma must be finite and >= 0");
  }
  if (options.n_classes < 2) throw DomainError("need at least two classes");
  if (!(options.min_offset >= 0.0 && options.min_offset < options.max_offset)) {
    throw DomainError("invalid offset range");
  }

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_class(0, options.n_classes - 1);
  const double mid = 0.5 * (options.min_offset + options.max_offset);
  std::uniform_real_distribution<double> long_side(
      mid - 0.25 * (options.max_offset - options.min_offset), options.max_offset);
  std::uniform_real_distribution<double> short_side(
      options.min_offset, mid + 0.25 * (options.max_offset - options.min_offset));
  std::uniform_real_distribution<double> position(16.0, 48.0);

  std::vector<SceneSample> samples;
  samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SceneSample s;
    s.scene_id = i;
    s.gt_class = pick_class(rng);
    // Even classes are wide, odd classes are tall.
    const bool wide = s.gt_class % 2 == 0;
    std::array<double, 4> offsets{};
    offsets[0] = wide ? short_side(rng) : long_side(rng);
    offsets[1] = wide ? short_side(rng) : long_side(rng);
    offsets[2] = wide ? long_side(rng) : short_side(rng);
    offsets[3] = wide ? long_side(rng) : short_side(rng);
    s.anchor = {position(rng), position(rng)};

    const auto blurry = ambiguous_edges(s.gt_class);
    for (std::size_t k = 0; k < 4; ++k) {
      s.sigma[k] = blurry[k] ? sigma : sigma / options.crisp_ratio;
    }
    s.gt_box = decode_box(s.anchor, {offsets[0], offsets[1], offsets[2], offsets[3]});
    s.gt_box.class_id = s.gt_class;
    s.features = observe(offsets, s.sigma, options.distractors, rng);
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<SceneSample> jittered_views(const SceneSample& sample,
                                        std::size_t count, double jitter,
                                        std::uint64_t seed,
                                        const SceneOptions& options) {
  if (!(jitter >= 0.0)) throw DomainError("jitter must be >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> shift(-jitter, jitter);
  std::vector<SceneSample> views;
  views.reserve(count);
  for (std::size_t v = 0; v < count; ++v) {
    SceneSample view = sample;
    view.anchor.x = std::clamp(sample.anchor.x + shift(rng), sample.gt_box.x1,
                               sample.gt_box.x2);
    view.anchor.y = std::clamp(sample.anchor.y + shift(rng), sample.gt_box.y1,
                               sample.gt_box.y2);
    const auto offsets = encode_box(view.anchor, sample.gt_box).as_array();
    view.features = observe(offsets, sample.sigma, options.distractors, rng);
    views.push_back(std::move(view));
  }
  return views;
}

std::size_t count_clamped_targets(std::span<const SceneSample> samples,
                                  const EdgeSupport& support) {
  std::size_t clamped = 0;
  for (const SceneSample& s : samples) {
    for (double y : encode_box(s.anchor, s.gt_box).as_array()) {
      if (project_target(y, support).clamped) ++clamped;
    }
  }
  return clamped;
}

namespace {

template <typename Range>
void write_list(std::ostream& os, const Range& values) {
  bool first = true;
  for (double v : values) {
    if (!first) os << ',';
    os << v;
    first = false;
  }
}

std::vector<double> parse_list(const std::string& text, std::size_t line) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ParseError(line, "bad number '" + item + "'");
    }
  }
  return out;
}

}  // namespace

void write_dataset(std::ostream& os, std::span<const SceneSample> samples) {
  os << "# locdistill-dataset v1\n";
  os << std::setprecision(17);
  for (const SceneSample& s : samples) {
    os << "scene=" << s.scene_id << " class=" << s.gt_class << " anchor=";
    write_list(os, std::array<double, 2>{s.anchor.x, s.anchor.y});
    os << " gt=";
    write_list(os, s.gt_box.corners());
    os << " sigma=";
    write_list(os, s.sigma);
    os << " features=";
    write_list(os, s.features);
    os << '\n';
  }
}

std::vector<SceneSample> read_dataset(std::istream& is) {
  std::vector<SceneSample> samples;
  std::string text;
  std::size_t line = 0;
  while (std::getline(is, text)) {
    ++line;
    if (text.empty() || text[0] == '#') continue;
    SceneSample s;
    std::istringstream fields(text);
    std::string field;
    int seen = 0;
    while (fields >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw ParseError(line, "expected key=value");
      const std::string key = field.substr(0, eq);
      const std::string value = field.substr(eq + 1);
      auto numbers = [&](std::size_t expected) {
        auto v = parse_list(value, line);
        if (expected != 0 && v.size() != expected) {
          throw ParseError(line, "field '" + key + "' has wrong arity");
        }
        return v;
      };
      if (key == "scene") {
        s.scene_id = static_cast<std::size_t>(numbers(1)[0]);
      } else if (key == "class") {
        s.gt_class = static_cast<int>(numbers(1)[0]);
      } else if (key == "anchor") {
        auto v = numbers(2);
        s.anchor = {v[0], v[1]};
      } else if (key == "gt") {
        auto v = numbers(4);
        s.gt_box = {v[0], v[1], v[2], v[3], 1.0, 0};
      } else if (key == "sigma") {
        auto v = numbers(4);
        std::copy(v.begin(), v.end(), s.sigma.begin());
      } else if (key == "features") {
        s.features = numbers(0);
      } else {
        throw ParseError(line, "unknown field '" + key + "'");
      }
      ++seen;
    }
    if (seen != 6) throw ParseError(line, "expected 6 fields");
    s.gt_box.class_id = s.gt_class;
    if (!is_valid_box(s.gt_box)) throw ParseError(line, "invalid gt box");
    samples.push_back(std::move(s));
  }
  return samples;
}

std::size_t ModelConfig::capacity() const {
  std::size_t total = 0;
  std::size_t in = input_dim;
  for (std::size_t w : hidden) {
    total += w * in + w;
    in = w;
  }
  return total + output_dim() * in + output_dim();
}

void ModelConfig::validate() const {
  for (std::size_t w : hidden) {
    if (w < 1) throw ConfigError("hidden widths must be >= 1");
  }
  if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
  if (n_bins < 2) throw ConfigError("n_bins must be >= 2");
  if (!(e_min < e_max)) throw ConfigError("e_min must be < e_max");
  if (n_classes < 2) throw ConfigError("n_classes must be >= 2");
}

std::uint64_t ModelParams::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  for (const Layer& l : layers) {
    for (double v : l.weights) mix(v);
    for (double v : l.bias) mix(v);
  }
  return h;
}

bool ModelParams::all_finite() const {
  for (const Layer& l : layers) {
    for (double v : l.weights) {
      if (!std::isfinite(v)) return false;
    }
    for (double v : l.bias) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

namespace {

std::vector<std::size_t> layer_widths(const ModelConfig& config) {
  std::vector<std::size_t> widths{config.input_dim};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(config.output_dim());
  return widths;
}

}  // namespace

ModelParams zero_params(const ModelConfig& config) {
  config.validate();
  const auto widths = layer_widths(config);
  ModelParams params;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    Layer l;
    l.cols = widths[i];
    l.rows = widths[i + 1];
    l.weights.assign(l.rows * l.cols, 0.0);
    l.bias.assign(l.rows, 0.0);
    params.layers.push_back(std::move(l));
  }
  return params;
}

ModelParams init_params(const ModelConfig& config) {
  ModelParams params = zero_params(config);
  std::mt19937_64 rng(config.seed);
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    Layer& l = params.layers[i];
    const bool last = i + 1 == params.layers.size();
    const double scale =
        std::sqrt(2.0 / static_cast<double>(l.cols)) * (last ? 0.1 : 1.0);
    std::normal_distribution<double> dist(0.0, scale);
    for (double& w : l.weights) w = dist(rng);
  }
  return params;
}

void check_shapes(const ModelParams& params, const ModelConfig& config) {
  const auto widths = layer_widths(config);
  if (params.layers.size() + 1 != widths.size()) {
    throw DomainError("parameter layer count does not match model config");
  }
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const Layer& l = params.layers[i];
    if (l.cols != widths[i] || l.rows != widths[i + 1] ||
        l.weights.size() != l.rows * l.cols || l.bias.size() != l.rows) {
      throw DomainError("parameter shapes do not match model config at layer " +
                        std::to_string(i));
    }
  }
}

void write_params(std::ostream& os, const ModelParams& params) {
  os << "# locdistill-params v1\n";
  os << std::setprecision(17);
  os << "layers " << params.layers.size() << '\n';
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const Layer& l = params.layers[i];
    os << "layer." << i << ".weights " << l.rows << ' ' << l.cols;
    for (double v : l.weights) os << ' ' << v;
    os << '\n';
    os << "layer." << i << ".bias " << l.rows;
    for (double v : l.bias) os << ' ' << v;
    os << '\n';
  }
}

ModelParams read_params(std::istream& is) {
  ModelParams params;
  std::string text;
  std::size_t line = 0;
  std::size_t expected_layers = 0;
  bool have_count = false;
  auto read_values = [&](std::istringstream& in, std::size_t n) {
    std::vector<double> out(n);
    for (double& v : out) {
      std::string tok;
      if (!(in >> tok)) throw ParseError(line, "too few values");
      try {
        v = std::stod(tok);
      } catch (const std::exception&) {
        throw ParseError(line, "bad number '" + tok + "'");
      }
    }
    std::string extra;
    if (in >> extra) throw ParseError(line, "too many values");
    return out;
  };
  while (std::getline(is, text)) {
    ++line;
    if (text.empty() || text[0] == '#') continue;
    std::istringstream in(text);
    std::string key;
    in >> key;
    if (key == "layers") {
      if (!(in >> expected_layers)) throw ParseError(line, "bad layer count");
      have_count = true;
      params.layers.resize(expected_layers);
      continue;
    }
    if (!have_count) throw ParseError(line, "missing 'layers' header");
    std::size_t idx = 0;
    std::string field;
    if (key.rfind("layer.", 0) != 0) throw ParseError(line, "unknown key " + key);
    const auto dot = key.find('.', 6);
    if (dot == std::string::npos) throw ParseError(line, "bad key " + key);
    try {
      idx = std::stoul(key.substr(6, dot - 6));
    } catch (const std::exception&) {
      throw ParseError(line, "bad layer index in " + key);
    }
    field = key.substr(dot + 1);
    if (idx >= params.layers.size()) throw ParseError(line, "layer index out of range");
    Layer& l = params.layers[idx];
    if (field == "weights") {
      if (!(in >> l.rows >> l.cols)) throw ParseError(line, "bad shape");
      l.weights = read_values(in, l.rows * l.cols);
    } else if (field == "bias") {
      std::size_t rows = 0;
      if (!(in >> rows)) throw ParseError(line, "bad shape");
      l.bias = read_values(in, rows);
    } else {
      throw ParseError(line, "unknown field " + field);
    }
  }
  if (!have_count) throw ParseError(line, "empty parameter file");
  return params;
}

ModelOutput forward(const ModelParams& params, const ModelConfig& config,
                    std::span<const double> features) {
  if (features.size() != config.input_dim) {
    throw DomainError("feature length does not match model input");
  }
  check_shapes(params, config);
  std::vector<double> h(features.begin(), features.end());
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const Layer& l = params.layers[i];
    std::vector<double> out(l.bias);
    for (std::size_t r = 0; r < l.rows; ++r) {
      const double* row = l.weights.data() + r * l.cols;
      double acc = 0.0;
      for (std::size_t c = 0; c < l.cols; ++c) acc += row[c] * h[c];
      out[r] += acc;
    }
    if (i + 1 < params.layers.size()) {
      for (double& v : out) v = v > 0.0 ? v : 0.0;
    }
    h = std::move(out);
  }
  const std::size_t loc = 4 * config.n_bins;
  ModelOutput result;
  result.box_logits.assign(h.begin(), h.begin() + loc);
  result.class_logits.assign(h.begin() + loc, h.end());
  return result;
}

ParamVars record_params(Tape& tape, const ModelParams& params, bool frozen) {
  ParamVars vars;
  for (const Layer& l : params.layers) {
    vars.weights.push_back(frozen ? tape.frozen(l.weights) : tape.input(l.weights));
    vars.bias.push_back(frozen ? tape.frozen(l.bias) : tape.input(l.bias));
  }
  return vars;
}

OutputVars forward(Tape& tape, const ParamVars& params,
                   const ModelConfig& config, std::span<const double> features) {
  if (features.size() != config.input_dim) {
    throw DomainError("feature length does not match model input");
  }
  Var h = tape.constant(std::vector<double>(features.begin(), features.end()));
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    h = affine(params.weights[i], h, params.bias[i]);
    if (i + 1 < params.weights.size()) h = relu(h);
  }
  if (h.size() != config.output_dim()) {
    throw DomainError("network output size does not match model config");
  }
  const std::size_t loc = 4 * config.n_bins;
  return {slice(h, 0, loc), slice(h, loc, config.n_classes)};
}

std::vector<Detection> predict_detections(const ModelParams& params,
                                          const ModelConfig& config,
                                          std::span<const SceneSample> samples,
                                          double nms_threshold) {
  if (!(nms_threshold >= 0.0 && nms_threshold <= 1.0)) {
    throw DomainError("nms threshold must lie in [0, 1]");
  }
  const EdgeSupport support = config.support();
  std::vector<Detection> candidates;
  candidates.reserve(samples.size());
  for (const SceneSample& s : samples) {
    const ModelOutput out = forward(params, config, s.features);
    Box box = decode_bbox(BoxDistribution(support, out.box_logits), s.anchor);
    const EdgeDistribution cls =
        softmax_with_temperature(EdgeLogits{out.class_logits}, 1.0);
    std::size_t best = 0;
    for (std::size_t c = 1; c < cls.size(); ++c) {
      if (cls[c] > cls[best]) best = c;
    }
    box.score = std::clamp(cls[best], 0.0, 1.0);
    box.class_id = static_cast<int>(best);
    candidates.push_back({s.scene_id, box});
  }

  // Group by scene, keeping first-appearance order of scenes.
  std::map<std::size_t, std::vector<std::size_t>> by_scene;
  std::vector<std::size_t> scene_order;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto& group = by_scene[candidates[i].scene_id];
    if (group.empty()) scene_order.push_back(candidates[i].scene_id);
    group.push_back(i);
  }
  std::vector<Detection> kept;
  for (std::size_t scene : scene_order) {
    const auto& group = by_scene[scene];
    std::vector<Box> boxes;
    boxes.reserve(group.size());
    for (std::size_t i : group) boxes.push_back(candidates[i].box);
    for (std::size_t k : nms(boxes, nms_threshold)) {
      kept.push_back(candidates[group[k]]);
    }
  }
  return kept;
}

std::vector<GroundTruth> ground_truths(std::span<const SceneSample> samples) {
  std::vector<GroundTruth> out;
  std::vector<std::size_t> seen;
  for (const SceneSample& s : samples) {
    if (std::find(seen.begin(), seen.end(), s.scene_id) != seen.end()) continue;
    seen.push_back(s.scene_id);
    out.push_back({s.scene_id, s.gt_box});
  }
  return out;
}

std::array<double, 10> ap_thresholds() {
  std::array<double, 10> t{};
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = std::round((0.5 + 0.05 * static_cast<double>(i)) * 100.0) / 100.0;
  }
  return t;
}

double Metrics::ap(double threshold) const {
  for (const auto& [t, v] : ap_at) {
    if (std::abs(t - threshold) < 1e-9) return v;
  }
  throw DomainError("no AP recorded at requested threshold");
}

namespace {

double average_precision(std::span<const Detection> predictions,
                         std::span<const GroundTruth> truths, int class_id,
                         double threshold) {
  std::vector<std::size_t> gt_idx;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths[i].box.class_id == class_id) gt_idx.push_back(i);
  }
  if (gt_idx.empty()) return 0.0;

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].box.class_id == class_id) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return predictions[a].box.score > predictions[b].box.score;
  });

  std::vector<bool> matched(truths.size(), false);
  std::vector<double> precision, recall;
  double tp = 0.0, fp = 0.0;
  for (std::size_t p : order) {
    const Detection& det = predictions[p];
    double best = threshold;
    std::size_t best_gt = truths.size();
    for (std::size_t g : gt_idx) {
      if (matched[g] || truths[g].scene_id != det.scene_id) continue;
      const double overlap = iou(det.box, truths[g].box);
      if (overlap >= best) {
        best = overlap;
        best_gt = g;
      }
    }
    if (best_gt < truths.size()) {
      matched[best_gt] = true;
      tp += 1.0;
    } else {
      fp += 1.0;
    }
    precision.push_back(tp / (tp + fp));
    recall.push_back(tp / static_cast<double>(gt_idx.size()));
  }
  for (std::size_t i = precision.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double total = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double r = static_cast<double>(k) / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), r - 1e-12);
    if (it != recall.end()) {
      total += precision[static_cast<std::size_t>(it - recall.begin())];
    }
  }
  return total / 101.0;
}

}  // namespace

Metrics evaluate_metrics(std::span<const Detection> predictions,
                         std::span<const GroundTruth> truths) {
  if (truths.empty()) throw DomainError("empty ground-truth set");
  Metrics m;

  double iou_total = 0.0;
  for (const GroundTruth& gt : truths) {
    double best = 0.0;
    for (const Detection& det : predictions) {
      if (det.scene_id == gt.scene_id) best = std::max(best, iou(det.box, gt.box));
    }
    iou_total += best;
  }
  m.mean_iou = iou_total / static_cast<double>(truths.size());

  std::vector<int> classes;
  for (const GroundTruth& gt : truths) classes.push_back(gt.box.class_id);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

  double ap_total = 0.0;
  for (double t : ap_thresholds()) {
    double per_class = 0.0;
    for (int c : classes) per_class += average_precision(predictions, truths, c, t);
    const double ap = per_class / static_cast<double>(classes.size());
    m.ap_at[t] = ap;
    ap_total += ap;
  }
  m.mean_ap = ap_total / static_cast<double>(m.ap_at.size());
  return m;
}

Metrics evaluate_model(const ModelParams& params, const ModelConfig& config,
                       std::span<const SceneSample> samples,
                       double nms_threshold) {
  const auto detections =
      predict_detections(params, config, samples, nms_threshold);
  const auto truths = ground_truths(samples);
  return evaluate_metrics(detections, truths);
}

}  // namespace locdistill
