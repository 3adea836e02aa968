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
#include "locdistill/experiment.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "locdistill/errors.h"
#include "locdistill/seed.h"

namespace locdistill {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

class ValueReader {
 public:
  ValueReader(std::size_t line, std::string key, std::string value)
      : line_(line), key_(std::move(key)), value_(std::move(value)) {}

  double real() const { return real_of(value_); }

  std::uint64_t unsigned_int() const {
    if (value_.empty() || value_[0] == '-') fail("expected a non-negative integer");
    try {
      std::size_t used = 0;
      const auto v = std::stoull(value_, &used);
      if (used != value_.size()) fail("expected an integer");
      return v;
    } catch (const std::logic_error&) {
      fail("expected an integer");
    }
  }

  int integer() const {
    try {
      std::size_t used = 0;
      const int v = std::stoi(value_, &used);
      if (used != value_.size()) fail("expected an integer");
      return v;
    } catch (const std::logic_error&) {
      fail("expected an integer");
    }
  }

  bool boolean() const {
    std::string v = value_;
    std::transform(v.begin(), v.end(), v.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    fail("expected true or false");
  }

  std::vector<std::size_t> widths() const { return widths_of(value_); }

  std::vector<std::vector<std::size_t>> width_groups() const {
    std::vector<std::vector<std::size_t>> out;
    if (value_.empty() || value_ == "none") return out;
    for (const std::string& group : split(value_, ';')) {
      out.push_back(widths_of(group));
    }
    return out;
  }

  std::vector<double> reals() const {
    std::vector<double> out;
    if (value_.empty()) return out;
    for (const std::string& item : split(value_, ',')) out.push_back(real_of(item));
    return out;
  }

  const std::string& text() const { return value_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(line_, key_ + ": " + what + " (got '" + value_ + "')");
  }

 private:
  double real_of(const std::string& s) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) fail("expected a number");
      return v;
    } catch (const std::logic_error&) {
      fail("expected a number");
    }
  }

  std::vector<std::size_t> widths_of(const std::string& s) const {
    std::vector<std::size_t> out;
    for (const std::string& item : split(s, ',')) {
      if (item.empty() || item[0] == '-') fail("expected positive widths");
      try {
        std::size_t used = 0;
        out.push_back(std::stoul(item, &used));
        if (used != item.size()) fail("expected positive widths");
      } catch (const std::logic_error&) {
        fail("expected positive widths");
      }
    }
    return out;
  }

  std::size_t line_;
  std::string key_;
  std::string value_;
};

void apply(ExperimentConfig& c, const ValueReader& v, const std::string& key) {
  if (key == "seed") c.seed = v.unsigned_int();
  else if (key == "output.dir") c.output_dir = v.text();
  else if (key == "output.curves") c.track_curves = v.boolean();
  else if (key == "data.count") c.train_count = v.unsigned_int();
  else if (key == "data.test_count") c.test_count = v.unsigned_int();
  else if (key == "data.sigma") c.sigma = v.real();
  else if (key == "model.teacher") c.teacher_hidden = v.widths();
  else if (key == "model.assistants") c.assistant_hidden = v.width_groups();
  else if (key == "model.student") c.student_hidden = v.widths();
  else if (key == "model.n_bins") c.n_bins = v.unsigned_int();
  else if (key == "model.e_min") c.e_min = v.real();
  else if (key == "model.e_max") c.e_max = v.real();
  else if (key == "train.epochs") c.train.epochs = v.integer();
  else if (key == "train.head_epochs") c.head_epochs = v.integer();
  else if (key == "train.lr") c.train.lr = v.real();
  else if (key == "train.decay_factor") c.train.decay_factor = v.real();
  else if (key == "train.decay_epoch") c.train.decay_epoch = v.integer();
  else if (key == "train.batch_size") c.train.batch_size = v.unsigned_int();
  else if (key == "train.class_weight") c.train.class_weight = v.real();
  else if (key == "distill.temperature") c.distill.temperature = v.real();
  else if (key == "distill.lambda_reg") c.distill.weights.reg = v.real();
  else if (key == "distill.lambda_dfl") c.distill.weights.dfl = v.real();
  else if (key == "distill.lambda_ld") c.distill.weights.ld = v.real();
  else if (key == "distill.epsilon") c.distill.epsilon = v.real();
  else if (key == "distill.tbr_lambda") c.distill.tbr_lambda = v.real();
  else if (key == "distill.tau_squared") c.distill.scale_by_tau_squared = v.boolean();
  else if (key == "distill.class_kd") c.distill.class_kd = v.boolean();
  else if (key == "distill.class_kd_weight") c.distill.class_kd_weight = v.real();
  else if (key == "distill.warm_start") c.warm_start = v.boolean();
  else if (key == "distill.method") {
    if (v.text() == "ld") c.distill.method = DistillMethod::kLocalization;
    else if (v.text() == "tbr") c.distill.method = DistillMethod::kTeacherBoundedRegression;
    else v.fail("expected ld or tbr");
  } else if (key == "distill.tbr_gate") {
    if (v.text() == "student_inferior") c.distill.tbr_gate = TbrGate::kStudentInferior;
    else if (v.text() == "formula") c.distill.tbr_gate = TbrGate::kFormula;
    else v.fail("expected student_inferior or formula");
  } else if (key == "distill.kl_orientation") {
    if (v.text() == "teacher_reference") {
      c.distill.orientation = KlOrientation::kTeacherReference;
    } else if (v.text() == "student_reference") {
      c.distill.orientation = KlOrientation::kStudentReference;
    } else {
      v.fail("expected teacher_reference or student_reference");
    }
  } else if (key == "nms.threshold") c.nms_threshold = v.real();
  else if (key == "sweep.seeds") c.sweep_seeds = v.unsigned_int();
  else if (key == "sweep.temperatures") c.sweep_temperatures = v.reals();
  else if (key == "nms_demo.views") c.nms_views = v.unsigned_int();
  else if (key == "nms_demo.jitter") c.nms_jitter = v.real();
  else v.fail("unknown key");
}

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (train_count < 1) throw ConfigError("data.count must be >= 1");
  if (test_count < 1) throw ConfigError("data.test_count must be >= 1");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw ConfigError("data.sigma must be >= 0");
  }
  if (head_epochs < 1) throw ConfigError("train.head_epochs must be >= 1");
  if (!(nms_threshold >= 0.0 && nms_threshold <= 1.0)) {
    throw ConfigError("nms.threshold must lie in [0, 1]");
  }
  if (sweep_seeds < 1) throw ConfigError("sweep.seeds must be >= 1");
  for (double t : sweep_temperatures) {
    if (!(t > 0.0)) throw ConfigError("sweep.temperatures must all be > 0");
  }
  if (!(nms_jitter >= 0.0)) throw ConfigError("nms_demo.jitter must be >= 0");
  if (nms_views < 1) throw ConfigError("nms_demo.views must be >= 1");
  try {
    train.validate();
    distill.validate();
    const ModelLadder l = ladder(seed);
    l.teacher.validate();
    for (const ModelConfig& a : l.assistants) a.validate();
    l.student.validate();
    enumerate_ta_paths(l);
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
}

ModelLadder ExperimentConfig::ladder(std::uint64_t run_seed) const {
  auto make = [&](const std::string& name,
                  const std::vector<std::size_t>& hidden) {
    ModelConfig m;
    m.name = name;
    m.hidden = hidden;
    m.input_dim = feature_dim();
    m.n_bins = n_bins;
    m.e_min = e_min;
    m.e_max = e_max;
    m.n_classes = 2;
    m.seed = derive_seed(run_seed, "init/" + name);
    return m;
  };
  ModelLadder l;
  l.teacher = make("T", teacher_hidden);
  for (std::size_t i = 0; i < assistant_hidden.size(); ++i) {
    l.assistants.push_back(make("A" + std::to_string(i + 1), assistant_hidden[i]));
  }
  l.student = make("S", student_hidden);
  return l;
}

TrainConfig ExperimentConfig::student_schedule(std::uint64_t run_seed) const {
  TrainConfig t = train;
  t.seed = derive_seed(run_seed, "shuffle");
  return t;
}

TrainConfig ExperimentConfig::head_schedule(std::uint64_t run_seed) const {
  TrainConfig t = student_schedule(run_seed);
  t.epochs = head_epochs;
  t.decay_epoch = train.decay_epoch < 0 ? -1 : 0;
  return t;
}

ExperimentConfig parse_config(std::istream& is) {
  ExperimentConfig config;
  std::string text;
  std::size_t line = 0;
  while (std::getline(is, text)) {
    ++line;
    const auto hash = text.find('#');
    if (hash != std::string::npos) text.resize(hash);
    text = trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ParseError(line, "expected 'key = value'");
    const std::string key = trim(text.substr(0, eq));
    apply(config, ValueReader(line, key, trim(text.substr(eq + 1))), key);
  }
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_config(in);
}

void save_config(std::ostream& os, const ExperimentConfig& c) {
  os << std::setprecision(17);
  auto method = c.distill.method == DistillMethod::kLocalization ? "ld" : "tbr";
  auto gate = c.distill.tbr_gate == TbrGate::kStudentInferior ? "student_inferior"
                                                               : "formula";
  auto orientation = c.distill.orientation == KlOrientation::kTeacherReference
                         ? "teacher_reference"
                         : "student_reference";
  std::string assistants;
  for (std::size_t i = 0; i < c.assistant_hidden.size(); ++i) {
    if (i) assistants += ';';
    assistants += join(c.assistant_hidden[i]);
  }
  if (assistants.empty()) assistants = "none";
  std::string temps;
  {
    std::ostringstream ts;
    ts << std::setprecision(17);
    for (std::size_t i = 0; i < c.sweep_temperatures.size(); ++i) {
      ts << (i ? "," : "") << c.sweep_temperatures[i];
    }
    temps = ts.str();
  }
  auto flag = [](bool b) { return b ? "true" : "false"; };

  os << "seed = " << c.seed << '\n'
     << "output.dir = " << c.output_dir << '\n'
     << "output.curves = " << flag(c.track_curves) << '\n'
     << "data.count = " << c.train_count << '\n'
     << "data.test_count = " << c.test_count << '\n'
     << "data.sigma = " << c.sigma << '\n'
     << "model.teacher = " << join(c.teacher_hidden) << '\n'
     << "model.assistants = " << assistants << '\n'
     << "model.student = " << join(c.student_hidden) << '\n'
     << "model.n_bins = " << c.n_bins << '\n'
     << "model.e_min = " << c.e_min << '\n'
     << "model.e_max = " << c.e_max << '\n'
     << "train.epochs = " << c.train.epochs << '\n'
     << "train.head_epochs = " << c.head_epochs << '\n'
     << "train.lr = " << c.train.lr << '\n'
     << "train.decay_factor = " << c.train.decay_factor << '\n'
     << "train.decay_epoch = " << c.train.decay_epoch << '\n'
     << "train.batch_size = " << c.train.batch_size << '\n'
     << "train.class_weight = " << c.train.class_weight << '\n'
     << "distill.method = " << method << '\n'
     << "distill.temperature = " << c.distill.temperature << '\n'
     << "distill.lambda_reg = " << c.distill.weights.reg << '\n'
     << "distill.lambda_dfl = " << c.distill.weights.dfl << '\n'
     << "distill.lambda_ld = " << c.distill.weights.ld << '\n'
     << "distill.epsilon = " << c.distill.epsilon << '\n'
     << "distill.tbr_lambda = " << c.distill.tbr_lambda << '\n'
     << "distill.tbr_gate = " << gate << '\n'
     << "distill.kl_orientation = " << orientation << '\n'
     << "distill.tau_squared = " << flag(c.distill.scale_by_tau_squared) << '\n'
     << "distill.class_kd = " << flag(c.distill.class_kd) << '\n'
     << "distill.class_kd_weight = " << c.distill.class_kd_weight << '\n'
     << "distill.warm_start = " << flag(c.warm_start) << '\n'
     << "nms.threshold = " << c.nms_threshold << '\n'
     << "sweep.seeds = " << c.sweep_seeds << '\n'
     << "sweep.temperatures = " << temps << '\n'
     << "nms_demo.views = " << c.nms_views << '\n'
     << "nms_demo.jitter = " << c.nms_jitter << '\n';
}

DataSplit make_data(const ExperimentConfig& config, std::uint64_t run_seed) {
  DataSplit d;
  d.train = generate_dataset(config.train_count, config.sigma,
                             derive_seed(run_seed, "data"));
  d.test = generate_dataset(config.test_count, config.sigma,
                            derive_seed(run_seed, "data/test"));
  return d;
}

double strict_ap(const Metrics& metrics) {
  double total = 0.0;
  int count = 0;
  for (const auto& [t, v] : metrics.ap_at) {
    if (t >= 0.75 - 1e-9) {
      total += v;
      ++count;
    }
  }
  return count ? total / count : 0.0;
}

LdComparison compare_ld(const ExperimentConfig& config, std::uint64_t run_seed) {
  const DataSplit data = make_data(config, run_seed);
  const ModelLadder ladder = config.ladder(run_seed);
  const TrainConfig schedule = config.student_schedule(run_seed);
  LdComparison out;
  out.teacher = train_model(ladder.teacher, config.head_schedule(run_seed),
                            data.train, nullptr, nullptr, config.distill)
                    .params;
  out.baseline = train_model(ladder.student, schedule, data.train, nullptr,
                             nullptr, config.distill)
                     .params;
  out.distilled = distill_student(out.teacher, ladder.teacher, ladder.student,
                                  schedule, data.train, config.distill)
                      .params;
  const double thr = config.nms_threshold;
  out.teacher_metrics = evaluate_model(out.teacher, ladder.teacher, data.test, thr);
  out.baseline_metrics =
      evaluate_model(out.baseline, ladder.student, data.test, thr);
  out.distilled_metrics =
      evaluate_model(out.distilled, ladder.student, data.test, thr);
  return out;
}

SelfLdOutcome run_self_ld(const ExperimentConfig& config,
                          std::uint64_t run_seed) {
  const DataSplit data = make_data(config, run_seed);
  const ModelConfig model = config.ladder(run_seed).student;
  const SelfDistillResult r = self_distill(
      model, config.student_schedule(run_seed), data.train, config.distill);
  SelfLdOutcome out;
  out.rounds = r.rounds;
  out.before = evaluate_model(r.teacher.params, model, data.test,
                              config.nms_threshold);
  out.after = evaluate_model(r.student.params, model, data.test,
                             config.nms_threshold);
  return out;
}

std::vector<TempSweepRow> run_temp_sweep(const ExperimentConfig& config) {
  std::vector<TempSweepRow> rows(config.sweep_temperatures.size());
  const double thr = config.nms_threshold;
  for (std::size_t k = 0; k < config.sweep_seeds; ++k) {
    const std::uint64_t run_seed = config.seed + k;
    const DataSplit data = make_data(config, run_seed);
    const ModelLadder ladder = config.ladder(run_seed);
    const TrainConfig schedule = config.student_schedule(run_seed);
    const ModelParams teacher =
        train_model(ladder.teacher, config.head_schedule(run_seed), data.train,
                    nullptr, nullptr, config.distill)
            .params;
    const Metrics base = evaluate_model(
        train_model(ladder.student, schedule, data.train, nullptr, nullptr,
                    config.distill)
            .params,
        ladder.student, data.test, thr);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      DistillConfig dcfg = config.distill;
      dcfg.temperature = config.sweep_temperatures[i];
      const Metrics ld = evaluate_model(
          distill_student(teacher, ladder.teacher, ladder.student, schedule,
                          data.train, dcfg)
              .params,
          ladder.student, data.test, thr);
      TempSweepRow& row = rows[i];
      row.temperature = dcfg.temperature;
      row.ld_mean_iou += ld.mean_iou;
      row.ld_mean_ap += ld.mean_ap;
      row.ld_ap75 += ld.ap(0.75);
      row.baseline_mean_iou += base.mean_iou;
      row.baseline_mean_ap += base.mean_ap;
      row.baseline_ap75 += base.ap(0.75);
    }
  }
  const double n = static_cast<double>(config.sweep_seeds);
  for (TempSweepRow& row : rows) {
    row.ld_mean_iou /= n;
    row.ld_mean_ap /= n;
    row.ld_ap75 /= n;
    row.baseline_mean_iou /= n;
    row.baseline_mean_ap /= n;
    row.baseline_ap75 /= n;
  }
  return rows;
}

void write_temp_sweep_csv(std::ostream& os,
                          const std::vector<TempSweepRow>& rows) {
  os << "tau,ld_mean_iou,ld_mean_ap,ld_ap75,baseline_mean_iou,"
        "baseline_mean_ap,baseline_ap75\n"
     << std::setprecision(10);
  for (const TempSweepRow& r : rows) {
    os << r.temperature << ',' << r.ld_mean_iou << ',' << r.ld_mean_ap << ','
       << r.ld_ap75 << ',' << r.baseline_mean_iou << ',' << r.baseline_mean_ap
       << ',' << r.baseline_ap75 << '\n';
  }
}

std::vector<NmsDemoRow> run_nms_demo(const ExperimentConfig& config,
                                     std::uint64_t run_seed) {
  const LdComparison models = compare_ld(config, run_seed);
  const DataSplit data = make_data(config, run_seed);
  const ModelConfig student = config.ladder(run_seed).student;

  std::vector<SceneSample> views;
  const std::uint64_t view_seed = derive_seed(run_seed, "views");
  for (const SceneSample& s : data.test) {
    auto v = jittered_views(s, config.nms_views, config.nms_jitter,
                            splitmix64(view_seed + s.scene_id));
    views.insert(views.end(), v.begin(), v.end());
  }
  const auto truths = ground_truths(data.test);
  const double scenes = static_cast<double>(data.test.size());

  std::vector<NmsDemoRow> rows;
  const std::pair<const char*, const ModelParams*> runs[] = {
      {"baseline", &models.baseline}, {"ld", &models.distilled}};
  for (const auto& [name, params] : runs) {
    for (double thr : {config.nms_threshold, 0.95}) {
      const auto dets = predict_detections(*params, student, views, thr);
      const Metrics m = evaluate_metrics(dets, truths);
      rows.push_back({name, thr, static_cast<double>(dets.size()) / scenes,
                      m.mean_iou, m.mean_ap, m.ap(0.75)});
    }
  }
  return rows;
}

void write_nms_demo_csv(std::ostream& os, const std::vector<NmsDemoRow>& rows) {
  os << "model,nms_threshold,boxes_per_scene,mean_iou,mean_ap,ap75\n"
     << std::setprecision(10);
  for (const NmsDemoRow& r : rows) {
    os << r.model << ',' << r.nms_threshold << ',' << r.boxes_per_scene << ','
       << r.mean_iou << ',' << r.mean_ap << ',' << r.ap75 << '\n';
  }
}

std::vector<RunRecord> run_ta_experiment(const ExperimentConfig& config,
                                         std::uint64_t run_seed) {
  const DataSplit data = make_data(config, run_seed);
  SequenceOptions options;
  options.head_epochs = config.head_epochs;
  options.warm_start = config.warm_start;
  options.track_curves = config.track_curves;
  options.nms_threshold = config.nms_threshold;
  return run_ta_sweep(config.ladder(run_seed), data.train, data.test,
                      config.student_schedule(run_seed), config.distill,
                      options);
}

void write_ta_summary_csv(std::ostream& os, std::span<const RunRecord> records) {
  os << "path,stages,student_mean_iou,student_mean_ap,student_strict_ap\n"
     << std::setprecision(10);
  for (const RunRecord& r : records) {
    const Metrics& m = r.stages.back().metrics;
    os << r.path << ',' << r.stages.size() << ',' << m.mean_iou << ','
       << m.mean_ap << ',' << strict_ap(m) << '\n';
  }
}

void write_metrics_header(std::ostream& os) {
  os << "model,mean_iou,mean_ap,ap50,ap75,strict_ap\n";
}

void write_metrics_row(std::ostream& os, const std::string& model,
                       const Metrics& m) {
  const auto old = os.precision(10);
  os << model << ',' << m.mean_iou << ',' << m.mean_ap << ',' << m.ap(0.5)
     << ',' << m.ap(0.75) << ',' << strict_ap(m) << '\n';
  os.precision(old);
}

}  // namespace locdistill
