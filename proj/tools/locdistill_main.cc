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
// Command-line driver. Every subcommand loads an ExperimentConfig (file, then
// LOCDISTILL_* environment variables, then flags) and writes its results into
// the output directory.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "locdistill/errors.h"
#include "locdistill/experiment.h"

namespace fs = std::filesystem;
using namespace locdistill;

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> tau;
  std::optional<double> nms_thr;
  std::optional<int> epochs;
  std::optional<double> sigma;
  std::optional<double> lr;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "Config file (key = value lines)")
      ->envname("LOCDISTILL_CONFIG");
  cmd->add_option("--seed", o.seed, "Top-level seed")->envname("LOCDISTILL_SEED");
  cmd->add_option("--out", o.out, "Output directory")->envname("LOCDISTILL_OUT");
  cmd->add_option("--tau", o.tau, "Distillation temperature")
      ->envname("LOCDISTILL_TAU");
  cmd->add_option("--nms-thr", o.nms_thr, "NMS IoU threshold")
      ->envname("LOCDISTILL_NMS_THR");
  cmd->add_option("--epochs", o.epochs, "Training epochs")
      ->envname("LOCDISTILL_EPOCHS");
  cmd->add_option("--sigma", o.sigma, "Ambiguous-edge noise scale")
      ->envname("LOCDISTILL_SIGMA");
  cmd->add_option("--lr", o.lr, "Learning rate")->envname("LOCDISTILL_LR");
}

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig c;
  if (!o.config_path.empty()) c = load_config(o.config_path);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.output_dir = *o.out;
  if (o.tau) c.distill.temperature = *o.tau;
  if (o.nms_thr) c.nms_threshold = *o.nms_thr;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.sigma) c.sigma = *o.sigma;
  if (o.lr) c.train.lr = *o.lr;
  c.validate();
  return c;
}

fs::path prepare_output(const ExperimentConfig& c) {
  fs::path dir(c.output_dir);
  fs::create_directories(dir);
  std::ofstream cfg(dir / "config.cfg");
  save_config(cfg, c);
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  return os;
}

ModelConfig pick_model(const ExperimentConfig& c, const std::string& name) {
  const ModelLadder l = c.ladder(c.seed);
  if (name == "S" || name == "student") return l.student;
  if (name == "T" || name == "teacher") return l.teacher;
  for (const ModelConfig& a : l.assistants) {
    if (a.name == name) return a;
  }
  throw ConfigError("unknown model '" + name + "' (expected T, S or A1..Am)");
}

std::vector<SceneSample> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset " + path);
  return read_dataset(in);
}

ModelParams load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open params " + path);
  return read_params(in);
}

int cmd_gen_data(const ExperimentConfig& c) {
  const fs::path dir = prepare_output(c);
  const DataSplit d = make_data(c, c.seed);
  auto train = open_out(dir / "train.txt");
  write_dataset(train, d.train);
  auto test = open_out(dir / "test.txt");
  write_dataset(test, d.test);
  std::cout << "wrote " << d.train.size() << " train and " << d.test.size()
            << " test scenes to " << dir.string() << "\n";
  return 0;
}

int cmd_train(const ExperimentConfig& c, const std::string& model_name,
              const std::string& data_path) {
  const fs::path dir = prepare_output(c);
  const ModelConfig model = pick_model(c, model_name);
  const DataSplit d = make_data(c, c.seed);
  const std::vector<SceneSample> train =
      data_path.empty() ? d.train : load_dataset(data_path);
  const TrainConfig schedule =
      model.name == "T" ? c.head_schedule(c.seed) : c.student_schedule(c.seed);

  std::vector<CurvePoint> curve;
  auto on_epoch = [&](const EpochStats& s, const ModelParams& p) {
    CurvePoint pt{s.epoch, s.loss, 0.0, 0.0};
    if (c.track_curves) {
      const Metrics m = evaluate_model(p, model, d.test, c.nms_threshold);
      pt.mean_iou = m.mean_iou;
      pt.mean_ap = m.mean_ap;
    }
    curve.push_back(pt);
  };
  const TrainResult r =
      train_model(model, schedule, train, nullptr, nullptr, c.distill, on_epoch);

  auto init = open_out(dir / "params_init.txt");
  write_params(init, r.initial);
  auto params = open_out(dir / "params.txt");
  write_params(params, r.params);
  auto csv = open_out(dir / "curve.csv");
  csv << "epoch,loss,mean_iou,mean_ap\n" << std::setprecision(10);
  for (const CurvePoint& p : curve) {
    csv << p.epoch << ',' << p.loss << ',' << p.mean_iou << ',' << p.mean_ap
        << '\n';
  }
  auto metrics = open_out(dir / "metrics.csv");
  write_metrics_header(metrics);
  const Metrics m = evaluate_model(r.params, model, d.test, c.nms_threshold);
  write_metrics_row(metrics, model.name, m);
  std::cout << model.name << ": mean_iou " << m.mean_iou << ", mean_ap "
            << m.mean_ap << "\n";
  if (r.clamped_targets > 0) {
    std::cout << "note: " << r.clamped_targets
              << " target offsets were clamped into the support\n";
  }
  return 0;
}

int cmd_distill(const ExperimentConfig& c) {
  const fs::path dir = prepare_output(c);
  const LdComparison r = compare_ld(c, c.seed);
  auto t = open_out(dir / "teacher_params.txt");
  write_params(t, r.teacher);
  auto b = open_out(dir / "baseline_params.txt");
  write_params(b, r.baseline);
  auto s = open_out(dir / "student_params.txt");
  write_params(s, r.distilled);
  auto csv = open_out(dir / "metrics.csv");
  write_metrics_header(csv);
  write_metrics_row(csv, "teacher", r.teacher_metrics);
  write_metrics_row(csv, "baseline", r.baseline_metrics);
  write_metrics_row(csv, "ld", r.distilled_metrics);
  write_metrics_header(std::cout);
  write_metrics_row(std::cout, "teacher", r.teacher_metrics);
  write_metrics_row(std::cout, "baseline", r.baseline_metrics);
  write_metrics_row(std::cout, "ld", r.distilled_metrics);
  return 0;
}

int cmd_self_ld(const ExperimentConfig& c) {
  const fs::path dir = prepare_output(c);
  const SelfLdOutcome r = run_self_ld(c, c.seed);
  auto csv = open_out(dir / "metrics.csv");
  write_metrics_header(csv);
  write_metrics_row(csv, "before", r.before);
  write_metrics_row(csv, "after", r.after);
  std::cout << "self-LD (" << r.rounds << " round): mean_iou "
            << r.before.mean_iou << " -> " << r.after.mean_iou << " (change "
            << r.after.mean_iou - r.before.mean_iou << ")\n";
  return 0;
}

std::string sanitize(std::string label) {
  for (char& ch : label) {
    if (ch == '>') ch = '-';
  }
  return label;
}

int cmd_ta_sweep(const ExperimentConfig& c) {
  const fs::path dir = prepare_output(c);
  const std::vector<RunRecord> records = run_ta_experiment(c, c.seed);
  for (const RunRecord& r : records) {
    const fs::path run_dir = dir / "runs" / sanitize(r.path);
    fs::create_directories(run_dir);
    auto rec = open_out(run_dir / "record.txt");
    write_run_record(rec, r);
    auto curve = open_out(run_dir / "curve.csv");
    write_curve_csv(curve, std::span<const RunRecord>(&r, 1));
  }
  auto csv = open_out(dir / "ta_sweep.csv");
  write_ta_summary_csv(csv, records);
  write_ta_summary_csv(std::cout, records);
  return 0;
}

int cmd_temp_sweep(const ExperimentConfig& c) {
  const fs::path dir = prepare_output(c);
  const auto rows = run_temp_sweep(c);
  auto csv = open_out(dir / "temp_sweep.csv");
  write_temp_sweep_csv(csv, rows);
  write_temp_sweep_csv(std::cout, rows);
  return 0;
}

int cmd_nms_demo(const ExperimentConfig& c) {
  const fs::path dir = prepare_output(c);
  const auto rows = run_nms_demo(c, c.seed);
  auto csv = open_out(dir / "nms_demo.csv");
  write_nms_demo_csv(csv, rows);
  write_nms_demo_csv(std::cout, rows);
  return 0;
}

int cmd_eval(const ExperimentConfig& c, const std::string& model_name,
             const std::string& params_path, const std::string& data_path) {
  if (params_path.empty()) throw ConfigError("eval needs --params");
  const fs::path dir = prepare_output(c);
  const ModelConfig model = pick_model(c, model_name);
  const ModelParams params = load_params(params_path);
  check_shapes(params, model);
  const std::vector<SceneSample> test =
      data_path.empty() ? make_data(c, c.seed).test : load_dataset(data_path);
  const Metrics m = evaluate_model(params, model, test, c.nms_threshold);
  auto csv = open_out(dir / "eval.csv");
  write_metrics_header(csv);
  write_metrics_row(csv, model.name, m);
  write_metrics_header(std::cout);
  write_metrics_row(std::cout, model.name, m);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Localization distillation on a toy detector"};
  app.require_subcommand(1);

  Overrides o;
  std::string model_name = "S";
  std::string params_path;
  std::string data_path;

  auto* gen = app.add_subcommand("gen-data", "Write the train/test scenes");
  auto* train = app.add_subcommand("train", "Train one model without distillation");
  auto* distill = app.add_subcommand(
      "distill", "Train a teacher, a baseline student and an LD student");
  auto* self = app.add_subcommand("self-ld", "One round of self-distillation");
  auto* ta = app.add_subcommand("ta-sweep", "Distil along every assistant path");
  auto* temp = app.add_subcommand("temp-sweep", "LD over several temperatures");
  auto* nms = app.add_subcommand(
      "nms-demo", "Redundant boxes under NMS 0.6 and 0.95, with and without LD");
  auto* eval = app.add_subcommand("eval", "Evaluate a parameter file");

  for (CLI::App* cmd : {gen, train, distill, self, ta, temp, nms, eval}) {
    add_common(cmd, o);
  }
  for (CLI::App* cmd : {train, eval}) {
    cmd->add_option("--model", model_name, "T, S or A1..Am")
        ->envname("LOCDISTILL_MODEL");
    cmd->add_option("--data", data_path, "Dataset file (default: generated)")
        ->envname("LOCDISTILL_DATA");
  }
  eval->add_option("--params", params_path, "Parameter file")
      ->envname("LOCDISTILL_PARAMS");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    const ExperimentConfig c = resolve(o);
    if (gen->parsed()) return cmd_gen_data(c);
    if (train->parsed()) return cmd_train(c, model_name, data_path);
    if (distill->parsed()) return cmd_distill(c);
    if (self->parsed()) return cmd_self_ld(c);
    if (ta->parsed()) return cmd_ta_sweep(c);
    if (temp->parsed()) return cmd_temp_sweep(c);
    if (nms->parsed()) return cmd_nms_demo(c);
    if (eval->parsed()) return cmd_eval(c, model_name, params_path, data_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
