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
#include "locdistill/distill.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "locdistill/errors.h"

namespace locdistill {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be >= 0");
  if (!(decay_factor > 0.0)) throw ConfigError("decay_factor must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(class_weight >= 0.0)) throw ConfigError("class_weight must be >= 0");
}

int TrainConfig::resolved_decay_epoch() const {
  if (decay_epoch < 0) return 0;
  if (decay_epoch > 0) return decay_epoch;
  return static_cast<int>(epochs * 0.75);
}

namespace {

struct TeacherView {
  const ModelConfig* config = nullptr;
  std::vector<ModelOutput> outputs;  // one per training sample
  std::vector<Box> boxes;            // decoded, for the TBR gate
};

bool needs_teacher(const DistillConfig& dcfg) {
  if (dcfg.class_kd) return true;
  if (dcfg.method == DistillMethod::kTeacherBoundedRegression) return true;
  return dcfg.weights.ld > 0.0;
}

DistillConfig effective_config(const DistillConfig& dcfg, bool has_teacher) {
  DistillConfig eff = dcfg;
  if (!has_teacher) {
    eff.weights.ld = 0.0;
    eff.class_kd = false;
    eff.method = DistillMethod::kLocalization;
  }
  return eff;
}

std::optional<TeacherView> teacher_view(const ModelParams* teacher,
                                        const ModelConfig* teacher_config,
                                        const ModelConfig& student_config,
                                        std::span<const SceneSample> data,
                                        const DistillConfig& eff) {
  if (!teacher || !needs_teacher(eff)) return std::nullopt;
  if (!teacher_config) throw ConfigError("teacher given without its config");
  if (!(teacher_config->support() == student_config.support()) ||
      teacher_config->n_classes != student_config.n_classes) {
    throw ConfigError("teacher and student use different edge supports");
  }
  check_shapes(*teacher, *teacher_config);
  TeacherView view;
  view.config = teacher_config;
  const EdgeSupport support = teacher_config->support();
  view.outputs.reserve(data.size());
  for (const SceneSample& s : data) {
    view.outputs.push_back(forward(*teacher, *teacher_config, s.features));
    view.boxes.push_back(decode_bbox(
        BoxDistribution(support, view.outputs.back().box_logits), s.anchor));
  }
  return view;
}

Var sample_objective(Tape& tape, const ParamVars& params,
                     const ModelConfig& config, const EdgeSupport& support,
                     const SceneSample& sample, const ModelOutput* teacher_out,
                     const Box* teacher_box, const DistillConfig& eff,
                     double class_weight) {
  OutputVars out = forward(tape, params, config, sample.features);

  DistillConfig reg_cfg = eff;
  std::optional<std::span<const double>> teacher_loc;
  const bool tbr = eff.method == DistillMethod::kTeacherBoundedRegression;
  if (tbr || !teacher_out) {
    reg_cfg.weights.ld = 0.0;
  } else {
    teacher_loc = std::span<const double>(teacher_out->box_logits);
  }
  LossTerms terms = total_loss(out.box_logits, support, sample.anchor,
                               sample.gt_box, teacher_loc, reg_cfg);
  Var objective = terms.total;
  if (tbr && teacher_box) {
    objective = objective + tbr_loss(expected_offsets(out.box_logits, support),
                                     sample.anchor, *teacher_box,
                                     sample.gt_box, eff.epsilon,
                                     eff.tbr_lambda, eff.tbr_gate);
  }

  if (eff.class_kd && teacher_out) {
    std::vector<double> one_hot(config.n_classes, 0.0);
    one_hot[static_cast<std::size_t>(sample.gt_class)] = 1.0;
    objective = objective +
                kd_class_loss(out.class_logits, teacher_out->class_logits,
                              one_hot, eff.temperature, class_weight,
                              eff.class_kd_weight,
                              {eff.orientation, eff.scale_by_tau_squared});
  } else if (class_weight > 0.0) {
    objective = objective +
                class_cross_entropy(out.class_logits, sample.gt_class) *
                    class_weight;
  }
  return objective;
}

}  // namespace

double mean_objective(const ModelParams& params, const ModelConfig& config,
                      std::span<const SceneSample> data,
                      const ModelParams* teacher,
                      const ModelConfig* teacher_config,
                      const DistillConfig& dcfg, double class_weight) {
  if (data.empty()) throw DomainError("empty dataset");
  const DistillConfig eff = effective_config(dcfg, teacher != nullptr);
  if (needs_teacher(dcfg) && dcfg.weights.ld > 0.0 && !teacher) {
    throw ConfigError("lambda_ld > 0 but no teacher was given");
  }
  const auto view = teacher_view(teacher, teacher_config, config, data, eff);
  const EdgeSupport support = config.support();
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Tape tape;
    ParamVars pv = record_params(tape, params, /*frozen=*/true);
    total += sample_objective(tape, pv, config, support, data[i],
                              view ? &view->outputs[i] : nullptr,
                              view ? &view->boxes[i] : nullptr, eff,
                              class_weight)
                 .scalar();
  }
  return total / static_cast<double>(data.size());
}

TrainResult train_model(const ModelConfig& config, const TrainConfig& tcfg,
                        std::span<const SceneSample> data,
                        const ModelParams* teacher,
                        const ModelConfig* teacher_config,
                        const DistillConfig& dcfg,
                        const EpochCallback& on_epoch,
                        const ModelParams* warm_start) {
  config.validate();
  tcfg.validate();
  dcfg.validate();
  if (data.empty()) throw DomainError("empty training set");

  const DistillConfig eff = effective_config(dcfg, teacher != nullptr);
  const auto view = teacher_view(teacher, teacher_config, config, data, eff);
  const EdgeSupport support = config.support();

  TrainResult result;
  if (warm_start) {
    check_shapes(*warm_start, config);
    result.params = *warm_start;
  } else {
    result.params = init_params(config);
  }
  result.initial = result.params;
  result.clamped_targets = count_clamped_targets(data, support);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(tcfg.seed);

  ModelParams& params = result.params;
  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    double lr = tcfg.lr;
    const int decay_at = tcfg.resolved_decay_epoch();
    if (decay_at > 0 && epoch >= decay_at) {
      lr *= tcfg.decay_factor;
    }
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + tcfg.batch_size);
      Tape tape;
      ParamVars pv = record_params(tape, params);
      Var batch;
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t i = order[k];
        Var obj = sample_objective(tape, pv, config, support, data[i],
                                   view ? &view->outputs[i] : nullptr,
                                   view ? &view->boxes[i] : nullptr, eff,
                                   tcfg.class_weight);
        batch = k == start ? obj : batch + obj;
      }
      const double count = static_cast<double>(stop - start);
      Var mean = batch * (1.0 / count);
      const double value = mean.scalar();
      if (!std::isfinite(value)) {
        throw NumericError("training loss is not finite in epoch " +
                           std::to_string(epoch));
      }
      epoch_loss += value * count;
      if (lr == 0.0) continue;

      Gradients grads;
      try {
        grads = tape.backward(mean);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " in epoch " +
                           std::to_string(epoch));
      }
      for (std::size_t l = 0; l < params.layers.size(); ++l) {
        Layer& layer = params.layers[l];
        const auto gw = grads.of(pv.weights[l]);
        const auto gb = grads.of(pv.bias[l]);
        for (std::size_t j = 0; j < gw.size(); ++j) layer.weights[j] -= lr * gw[j];
        for (std::size_t j = 0; j < gb.size(); ++j) layer.bias[j] -= lr * gb[j];
      }
    }
    EpochStats stats{epoch, epoch_loss / static_cast<double>(data.size())};
    if (!std::isfinite(stats.loss) || !params.all_finite()) {
      throw NumericError("training diverged in epoch " + std::to_string(epoch));
    }
    result.curve.push_back(stats);
    if (on_epoch) on_epoch(stats, params);
  }
  return result;
}

TrainResult distill_student(const ModelParams& teacher,
                            const ModelConfig& teacher_config,
                            const ModelConfig& student_config,
                            const TrainConfig& tcfg,
                            std::span<const SceneSample> data,
                            const DistillConfig& dcfg,
                            const EpochCallback& on_epoch) {
  if (!(teacher_config.support() == student_config.support())) {
    throw ConfigError("teacher and student use different edge supports");
  }
  return train_model(student_config, tcfg, data, &teacher, &teacher_config,
                     dcfg, on_epoch);
}

SelfDistillResult self_distill(const ModelConfig& config,
                               const TrainConfig& tcfg,
                               std::span<const SceneSample> data,
                               const DistillConfig& dcfg) {
  SelfDistillResult out;
  out.teacher = train_model(config, tcfg, data, nullptr, nullptr, dcfg);
  out.student =
      distill_student(out.teacher.params, config, config, tcfg, data, dcfg);
  out.rounds = 1;
  return out;
}

std::string TAPath::label() const {
  std::string out;
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (i) out += '>';
    out += models[i].name;
  }
  return out;
}

std::vector<TAPath> enumerate_ta_paths(const ModelLadder& ladder) {
  std::vector<const ModelConfig*> chain{&ladder.teacher};
  for (const ModelConfig& a : ladder.assistants) chain.push_back(&a);
  chain.push_back(&ladder.student);
  for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
    if (!(chain[i]->capacity() > chain[i + 1]->capacity())) {
      throw ConfigError("model ladder is not strictly decreasing in capacity at " +
                        chain[i]->name + " -> " + chain[i + 1]->name);
    }
  }
  const std::size_t m = ladder.assistants.size();
  if (m >= 32) throw ConfigError("too many assistants");
  std::vector<TAPath> paths;
  paths.reserve(std::size_t{1} << m);
  for (std::size_t mask = 0; mask < (std::size_t{1} << m); ++mask) {
    TAPath path;
    path.models.push_back(ladder.teacher);
    for (std::size_t k = 0; k < m; ++k) {
      if (mask & (std::size_t{1} << k)) path.models.push_back(ladder.assistants[k]);
    }
    path.models.push_back(ladder.student);
    paths.push_back(std::move(path));
  }
  return paths;
}

namespace {

struct TrainedModel {
  ModelParams params;
  StageRecord stage;
};

using PrefixCache = std::map<std::string, TrainedModel>;

std::string prefix_label(const TAPath& path, std::size_t upto) {
  std::string out;
  for (std::size_t i = 0; i <= upto; ++i) {
    if (i) out += '>';
    out += path.models[i].name;
  }
  return out;
}

std::string snapshot(const TAPath& path, const TrainConfig& tcfg,
                     const DistillConfig& dcfg, const SequenceOptions& opt) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (const ModelConfig& m : path.models) {
    os << "model." << m.name << ".hidden = ";
    for (std::size_t i = 0; i < m.hidden.size(); ++i) {
      os << (i ? "," : "") << m.hidden[i];
    }
    os << "\nmodel." << m.name << ".seed = " << m.seed << '\n';
  }
  os << "train.epochs = " << tcfg.epochs << "\ntrain.head_epochs = "
     << (opt.head_epochs > 0 ? opt.head_epochs : tcfg.epochs)
     << "\ntrain.lr = " << tcfg.lr << "\ntrain.batch_size = " << tcfg.batch_size
     << "\ndistill.temperature = " << dcfg.temperature
     << "\ndistill.lambda_reg = " << dcfg.weights.reg
     << "\ndistill.lambda_dfl = " << dcfg.weights.dfl
     << "\ndistill.lambda_ld = " << dcfg.weights.ld
     << "\nwarm_start = " << (opt.warm_start ? "true" : "false") << '\n';
  return os.str();
}

RunRecord run_sequence(const TAPath& path, std::span<const SceneSample> train,
                       std::span<const SceneSample> test,
                       const TrainConfig& tcfg, const DistillConfig& dcfg,
                       const SequenceOptions& options, PrefixCache& cache) {
  if (path.models.size() < 2) throw ConfigError("a TA path needs >= 2 models");
  const auto started = std::chrono::steady_clock::now();
  RunRecord record;
  record.path = path.label();
  record.config_snapshot = snapshot(path, tcfg, dcfg, options);

  auto curve_tracker = [&](std::vector<CurvePoint>& curve,
                           const ModelConfig& cfg) -> EpochCallback {
    if (!options.track_curves) {
      return [&curve](const EpochStats& s, const ModelParams&) {
        curve.push_back({s.epoch, s.loss, 0.0, 0.0});
      };
    }
    return [&curve, &cfg, test, &options](const EpochStats& s,
                                          const ModelParams& p) {
      const Metrics m = evaluate_model(p, cfg, test, options.nms_threshold);
      curve.push_back({s.epoch, s.loss, m.mean_iou, m.mean_ap});
    };
  };

  const std::string head_key = prefix_label(path, 0);
  if (!cache.count(head_key)) {
    TrainConfig head_cfg = tcfg;
    if (options.head_epochs > 0) head_cfg.epochs = options.head_epochs;
    TrainedModel head;
    head.stage.model = path.models[0].name;
    auto cb = curve_tracker(head.stage.curve, path.models[0]);
    head.params = train_model(path.models[0], head_cfg, train, nullptr, nullptr,
                              dcfg, cb)
                      .params;
    head.stage.metrics =
        evaluate_model(head.params, path.models[0], test, options.nms_threshold);
    cache.emplace(head_key, std::move(head));
  }
  record.head_metrics = cache.at(head_key).stage.metrics;

  for (std::size_t i = 1; i < path.models.size(); ++i) {
    const std::string key = prefix_label(path, i);
    if (!cache.count(key)) {
      const TrainedModel& prev = cache.at(prefix_label(path, i - 1));
      const ModelConfig& cfg = path.models[i];
      TrainedModel next;
      next.stage.model = cfg.name;
      next.stage.teacher = path.models[i - 1].name;
      const ModelParams* warm = nullptr;
      if (options.warm_start) {
        check_shapes(prev.params, cfg);
        warm = &prev.params;
      }
      auto cb = curve_tracker(next.stage.curve, cfg);
      next.params = train_model(cfg, tcfg, train, &prev.params,
                                &path.models[i - 1], dcfg, cb, warm)
                        .params;
      next.stage.metrics =
          evaluate_model(next.params, cfg, test, options.nms_threshold);
      cache.emplace(key, std::move(next));
    }
    record.stages.push_back(cache.at(key).stage);
  }
  record.wall_seconds = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - started)
                            .count();
  return record;
}

}  // namespace

RunRecord run_ta_sequence(const TAPath& path, std::span<const SceneSample> train,
                          std::span<const SceneSample> test,
                          const TrainConfig& tcfg, const DistillConfig& dcfg,
                          const SequenceOptions& options,
                          const ModelParams* head) {
  PrefixCache cache;
  if (head && !path.models.empty()) {
    TrainedModel h;
    h.params = *head;
    h.stage.model = path.models[0].name;
    h.stage.metrics =
        evaluate_model(*head, path.models[0], test, options.nms_threshold);
    cache.emplace(path.models[0].name, std::move(h));
  }
  return run_sequence(path, train, test, tcfg, dcfg, options, cache);
}

std::vector<RunRecord> run_ta_sweep(const ModelLadder& ladder,
                                    std::span<const SceneSample> train,
                                    std::span<const SceneSample> test,
                                    const TrainConfig& tcfg,
                                    const DistillConfig& dcfg,
                                    const SequenceOptions& options) {
  PrefixCache cache;
  std::vector<RunRecord> records;
  for (const TAPath& path : enumerate_ta_paths(ladder)) {
    records.push_back(run_sequence(path, train, test, tcfg, dcfg, options, cache));
  }
  return records;
}

namespace {

void write_metrics(std::ostream& os, const std::string& prefix,
                   const Metrics& m) {
  os << prefix << ".mean_iou = " << m.mean_iou << '\n';
  os << prefix << ".mean_ap = " << m.mean_ap << '\n';
  for (const auto& [t, v] : m.ap_at) {
    os << prefix << ".ap" << static_cast<int>(std::lround(t * 100)) << " = " << v
       << '\n';
  }
}

}  // namespace

void write_run_record(std::ostream& os, const RunRecord& record) {
  os << "# locdistill-run v1\n" << std::setprecision(10);
  os << "path = " << record.path << '\n';
  os << "wall_seconds = " << record.wall_seconds << '\n';
  write_metrics(os, "head", record.head_metrics);
  os << "stages = " << record.stages.size() << '\n';
  for (std::size_t i = 0; i < record.stages.size(); ++i) {
    const StageRecord& s = record.stages[i];
    const std::string prefix = "stage." + std::to_string(i + 1);
    os << prefix << ".model = " << s.model << '\n';
    os << prefix << ".teacher = " << s.teacher << '\n';
    write_metrics(os, prefix, s.metrics);
    if (!s.curve.empty()) {
      os << prefix << ".final_loss = " << s.curve.back().loss << '\n';
    }
  }
  std::istringstream snap(record.config_snapshot);
  std::string line;
  while (std::getline(snap, line)) os << "config." << line << '\n';
}

void write_curve_csv(std::ostream& os, std::span<const RunRecord> records) {
  os << "path,stage,model,epoch,loss,mean_iou,mean_ap\n" << std::setprecision(10);
  for (const RunRecord& r : records) {
    for (std::size_t i = 0; i < r.stages.size(); ++i) {
      for (const CurvePoint& p : r.stages[i].curve) {
        os << r.path << ',' << (i + 1) << ',' << r.stages[i].model << ','
           << p.epoch << ',' << p.loss << ',' << p.mean_iou << ',' << p.mean_ap
           << '\n';
      }
    }
  }
}

}  // namespace locdistill
