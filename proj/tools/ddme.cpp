// Copyright 2026 The DDME Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ddme/config.hpp"
#include "ddme/distill.hpp"
#include "ddme/error.hpp"
#include "ddme/eval.hpp"
#include "ddme/io.hpp"
#include "ddme/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct CommonOpts {
  std::string config_path;
  std::string mode;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "pipeline config file")
      ->required();
  cmd->add_option("--mode", opts.mode,
                  "run mode: baseline | ddme_single | ddme_full");
  cmd->add_option("--seed", opts.seed, "root random seed");
  cmd->add_flag("--deterministic", opts.deterministic,
                "force bit-reproducible single-worker training");
  cmd->add_option("--out", opts.out, "output directory");
}

ddme::PipelineConfig resolve(const CommonOpts& opts) {
  ddme::PipelineConfig cfg = ddme::load_config(opts.config_path);
  if (!opts.mode.empty()) cfg.mode = ddme::run_mode_from_name(opts.mode);
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.deterministic) cfg.deterministic = true;
  if (!opts.out.empty()) cfg.out_dir = opts.out;
  return cfg;
}

ddme::ClickDataset load_train_data(const ddme::PipelineConfig& cfg,
                                   const std::string& data_override) {
  std::optional<ddme::LabelSpace> fixed;
  if (!cfg.label_space_file.empty()) {
    fixed = ddme::load_label_space(cfg.label_space_file);
  } else if (fs::exists(cfg.out_dir / "data" / "labels.txt")) {
    // label space written by `generate` / `run` alongside the datasets
    fixed = ddme::load_label_space(cfg.out_dir / "data" / "labels.txt");
  }
  if (!data_override.empty()) {
    return ddme::load_dataset(data_override, fixed ? &*fixed : nullptr);
  }
  if (!cfg.train_data.empty()) {
    return ddme::load_dataset(cfg.train_data, fixed ? &*fixed : nullptr);
  }
  const fs::path observed = cfg.out_dir / "data" / "observed.tsv";
  if (fs::exists(observed)) {
    return ddme::load_dataset(observed, fixed ? &*fixed : nullptr);
  }
  throw ddme::Error(
      "no training data: pass --data, set paths.train_data, or run "
      "`ddme generate` first");
}

int cmd_generate(const CommonOpts& opts) {
  ddme::PipelineConfig cfg = resolve(opts);
  if (!cfg.synth_enabled) {
    throw ddme::Error("generate: config must set synth.enabled = true");
  }
  const fs::path dir = cfg.out_dir / "data";
  fs::create_directories(dir);
  const ddme::SyntheticCorpus corpus =
      ddme::generate_synthetic(cfg.effective_synth());
  ddme::save_label_space(corpus.full.label_space, dir / "labels.txt");
  ddme::save_dataset(corpus.full, dir / "full.tsv");
  ddme::save_dataset(corpus.observed, dir / "observed.tsv");
  ddme::save_dataset(corpus.heldout_t1, dir / "heldout_t1.tsv");
  ddme::save_dataset(corpus.heldout_t30, dir / "heldout_t30.tsv");
  std::printf("wrote %zu training queries (k=%d) under %s\n",
              corpus.observed.size(), corpus.full.label_space.k(),
              dir.string().c_str());
  return kExitOk;
}

int cmd_train_expert(const CommonOpts& opts, const std::string& loss,
                     const std::string& data, const std::string& out_file) {
  ddme::PipelineConfig cfg = resolve(opts);
  const ddme::ExpertMode mode = ddme::expert_mode_from_name(loss);
  const ddme::ClickDataset train = load_train_data(cfg, data);
  const ddme::ExpertTrainConfig tc = ddme::expert_config_for_run(cfg, mode);
  ddme::TrainLog log;
  const ddme::ExpertModel model =
      ddme::train_expert(train, mode, tc, cfg.expert_featurizer, &log);
  const fs::path path =
      out_file.empty()
          ? cfg.out_dir / "models" /
                ("expert_" + std::string(ddme::expert_mode_name(mode)) + ".bin")
          : fs::path(out_file);
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  ddme::save_expert(model, path);
  std::printf("trained %s expert on %zu queries, final loss %.6f -> %s\n",
              loss.c_str(), train.size(),
              log.epoch_loss.empty() ? 0.0 : log.epoch_loss.back(),
              path.string().c_str());
  return kExitOk;
}

int cmd_infer_experts(const CommonOpts& opts, const std::string& data,
                      const std::string& models_dir) {
  ddme::PipelineConfig cfg = resolve(opts);
  const ddme::ClickDataset train = load_train_data(cfg, data);
  const fs::path models =
      models_dir.empty() ? cfg.out_dir / "models" : fs::path(models_dir);
  const fs::path out_data = cfg.out_dir / "data";
  fs::create_directories(out_data);

  std::vector<ddme::ExpertModel> experts;
  const ddme::RunMode mode = cfg.mode == ddme::RunMode::baseline
                                 ? ddme::RunMode::ddme_full
                                 : cfg.mode;
  for (ddme::ExpertMode m : ddme::experts_for_mode(mode)) {
    const fs::path path =
        models / ("expert_" + std::string(ddme::expert_mode_name(m)) + ".bin");
    if (!fs::exists(path)) {
      throw ddme::Error("missing expert model " + path.string());
    }
    experts.push_back(ddme::load_expert(path));
    if (!(experts.back().label_space == train.label_space)) {
      throw ddme::Error(path.string() +
                        ": expert label space does not match the dataset "
                        "(pass the matching paths.label_space)");
    }
  }

  std::vector<std::vector<ddme::Prediction>> union_preds(train.size());
  for (const ddme::ExpertModel& model : experts) {
    std::vector<std::vector<ddme::Prediction>> preds(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
      const std::vector<double> scores =
          ddme::expert_score_all(model, train.records[i].text);
      for (std::int32_t cat : ddme::select_labels(scores, cfg.tau, cfg.m_cap)) {
        const double s = scores[static_cast<std::size_t>(cat)];
        preds[i].push_back({cat, s});
        auto& u = union_preds[i];
        auto it = std::find_if(u.begin(), u.end(),
                               [cat](const ddme::Prediction& p) {
                                 return p.category == cat;
                               });
        if (it == u.end()) {
          u.push_back({cat, s});
        } else {
          it->score = std::max(it->score, s);
        }
      }
    }
    ddme::save_inference(
        train, preds,
        out_data / ("infer_" +
                    std::string(ddme::expert_mode_name(model.mode)) + ".tsv"));
  }
  for (auto& u : union_preds) {
    std::sort(u.begin(), u.end(),
              [](const ddme::Prediction& a, const ddme::Prediction& b) {
                return a.category < b.category;
              });
  }
  ddme::save_inference(train, union_preds, out_data / "inference.tsv");
  std::printf("wrote inference files for %zu experts under %s\n",
              experts.size(), out_data.string().c_str());
  return kExitOk;
}

int cmd_augment(const CommonOpts& opts, const std::string& data,
                const std::string& inference) {
  ddme::PipelineConfig cfg = resolve(opts);
  const ddme::ClickDataset train = load_train_data(cfg, data);
  const fs::path inf_path = inference.empty()
                                ? cfg.out_dir / "data" / "inference.tsv"
                                : fs::path(inference);
  ddme::InferenceDataset inf;
  inf.unioned = ddme::load_inference_labels(inf_path, train.label_space);
  if (inf.unioned.size() != train.size()) {
    throw ddme::Error("inference file does not align with training data");
  }
  const ddme::MergeResult merge = ddme::merge_labels(train, inf);
  const ddme::AllocationConfig alloc{cfg.resolve_m(train.total_pv_mass()),
                                     cfg.zero_prior_floor};
  auto [aug, report] = ddme::allocate_pv(train, merge, alloc);
  fs::create_directories(cfg.out_dir / "data");
  fs::create_directories(cfg.out_dir / "reports");
  ddme::emit_augmented(aug, cfg.out_dir / "data" / "augmented.tsv",
                       cfg.out_dir / "data" / "augmented.prov");
  ddme::write_allocation_report_json(
      report, train.label_space, cfg.out_dir / "reports" / "allocation.json");
  ddme::write_file(cfg.out_dir / "reports" / "allocation.txt",
                   ddme::allocation_report_table(report, train.label_space));
  std::printf("augmented %lld pairs -> %lld (added mass %.4f, M=%.4f)\n",
              static_cast<long long>(aug.pair_count() - aug.new_pair_count()),
              static_cast<long long>(aug.pair_count()), report.total_added,
              report.m);
  return kExitOk;
}

int cmd_train_student(const CommonOpts& opts, const std::string& data,
                      const std::string& out_file) {
  ddme::PipelineConfig cfg = resolve(opts);
  ddme::ClickDataset train;
  if (!data.empty()) {
    train = load_train_data(cfg, data);
  } else if (cfg.mode != ddme::RunMode::baseline &&
             fs::exists(cfg.out_dir / "data" / "augmented.tsv")) {
    train = ddme::load_augmented(cfg.out_dir / "data" / "augmented.tsv",
                                 cfg.out_dir / "data" / "augmented.prov")
                .data;
  } else {
    train = load_train_data(cfg, "");
  }
  const ddme::StudentTrainConfig tc = ddme::student_config_for_run(cfg);
  ddme::TrainLog log;
  const ddme::StudentModel model =
      ddme::train_student(train, tc, cfg.featurizer, &log);
  const fs::path path = out_file.empty()
                            ? cfg.out_dir / "models" / "student.bin"
                            : fs::path(out_file);
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  ddme::save_model(model, path);
  std::printf("trained student on %zu queries, final loss %.6f -> %s\n",
              train.size(),
              log.epoch_loss.empty() ? 0.0 : log.epoch_loss.back(),
              path.string().c_str());
  return kExitOk;
}

int cmd_evaluate(const CommonOpts& opts, const std::string& model_path,
                 const std::string& data, const std::string& annotations,
                 const std::string& report_path) {
  ddme::PipelineConfig cfg = resolve(opts);
  const fs::path mp = model_path.empty()
                          ? cfg.out_dir / "models" / "student.bin"
                          : fs::path(model_path);
  const ddme::StudentModel model = ddme::load_model(mp);
  fs::path dp;
  if (!data.empty()) {
    dp = data;
  } else if (!cfg.eval_data.empty()) {
    dp = cfg.eval_data;
  } else if (fs::exists(cfg.out_dir / "data" / "full.tsv")) {
    dp = cfg.out_dir / "data" / "full.tsv";
  } else {
    throw ddme::Error("evaluate: no dataset (pass --data)");
  }
  const ddme::ClickDataset ds = ddme::load_dataset(dp, &model.label_space);
  const ddme::EvalResult result = ddme::band_report(
      model, ds, cfg.bands, cfg.eval_topk, cfg.eval_threshold);
  ddme::EvalReportMeta meta;
  meta.split = dp.stem().string();
  meta.dataset_digest = ddme::file_digest(dp);
  meta.model_digest = ddme::file_digest(mp);
  std::printf("%s", ddme::eval_report_table(result, meta).c_str());
  if (!annotations.empty()) {
    const ddme::AnnotationSet ann = ddme::load_annotations(annotations);
    std::printf("acc: %.4f   acc w/o pv: %.4f   (%zu pairs)\n",
                ddme::pair_accuracy(ann, true),
                ddme::pair_accuracy(ann, false), ann.size());
  }
  if (!report_path.empty()) {
    ddme::write_eval_report_json(result, meta, report_path);
  }
  return kExitOk;
}

int cmd_run(const CommonOpts& opts) {
  const ddme::PipelineConfig cfg = resolve(opts);
  const ddme::RunManifest manifest = ddme::run_pipeline(cfg);
  double total = 0;
  for (const auto& t : manifest.timings) {
    if (!t.skipped) {
      std::printf("step %-14s %8.2fs\n", t.name.c_str(), t.seconds);
      total += t.seconds;
    }
  }
  std::printf("pipeline '%s' done in %.2fs, manifest at %s\n",
              manifest.mode.c_str(), total,
              (cfg.out_dir / "manifest.json").string().c_str());
  for (const auto& [split, result] : manifest.evals) {
    std::printf("  %-12s P@5 %.4f  R@5 %.4f  (n=%lld)\n", split.c_str(),
                result.overall.p_at_5, result.overall.r_at_5,
                static_cast<long long>(result.overall.n));
  }
  return kExitOk;
}

int cmd_toy(const CommonOpts& opts) {
  const ddme::PipelineConfig cfg = resolve(opts);
  const ddme::ToyReport report = ddme::run_toy_experiment(cfg);
  ddme::write_toy_report(report, cfg.out_dir / "reports");
  std::printf("%s",
              ddme::read_file(cfg.out_dir / "reports" / "toy.txt").c_str());
  return kExitOk;
}

int cmd_ablation(const CommonOpts& opts) {
  const ddme::PipelineConfig cfg = resolve(opts);
  const ddme::AblationReport report = ddme::run_ablation(cfg);
  ddme::write_ablation_report(report, cfg.out_dir / "reports");
  std::printf(
      "%s", ddme::read_file(cfg.out_dir / "reports" / "ablation.txt").c_str());
  return kExitOk;
}

int cmd_validate(const CommonOpts& opts) {
  const ddme::PipelineConfig cfg = resolve(opts);
  std::printf("config ok\n");
  for (const auto& [k, v] : cfg.resolved()) {
    std::printf("%s = %s\n", k.c_str(), v.c_str());
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "DDME: distribution-diverse multi-expert distillation for long-tail "
      "query classification"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string loss = "uniform";
  std::string data, out_file, models_dir, inference, model_path, annotations,
      report_path;

  auto* generate = app.add_subcommand("generate", "write a synthetic corpus");
  add_common(generate, opts);

  auto* train_expert =
      app.add_subcommand("train-expert", "train one teacher model");
  add_common(train_expert, opts);
  train_expert->add_option("--loss", loss,
                           "expert loss: forward | uniform | backward");
  train_expert->add_option("--data", data, "training dataset override");
  train_expert->add_option("--out-file", out_file, "model file path");

  auto* infer = app.add_subcommand("infer-experts",
                                   "batch inference over training data");
  add_common(infer, opts);
  infer->add_option("--data", data, "dataset override");
  infer->add_option("--models", models_dir, "expert model directory");

  auto* augment =
      app.add_subcommand("augment", "merge labels and reallocate PV mass");
  add_common(augment, opts);
  augment->add_option("--data", data, "dataset override");
  augment->add_option("--inference", inference, "inference file override");

  auto* train_student =
      app.add_subcommand("train-student", "train the online classifier");
  add_common(train_student, opts);
  train_student->add_option("--data", data, "training dataset override");
  train_student->add_option("--out-file", out_file, "model file path");

  auto* evaluate = app.add_subcommand("evaluate", "score a student model");
  add_common(evaluate, opts);
  evaluate->add_option("--model", model_path, "student model file");
  evaluate->add_option("--data", data, "evaluation dataset");
  evaluate->add_option("--annotations", annotations, "annotation pair file");
  evaluate->add_option("--report", report_path, "write a JSON report here");

  auto* run = app.add_subcommand("run", "execute the full offline pipeline");
  add_common(run, opts);

  auto* toy = app.add_subcommand("toy", "memorize-vs-generalize comparison");
  add_common(toy, opts);

  auto* ablation =
      app.add_subcommand("ablation", "baseline / single-expert / full sweep");
  add_common(ablation, opts);

  auto* validate = app.add_subcommand("validate", "check a config file");
  add_common(validate, opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (generate->parsed()) return cmd_generate(opts);
    if (train_expert->parsed())
      return cmd_train_expert(opts, loss, data, out_file);
    if (infer->parsed()) return cmd_infer_experts(opts, data, models_dir);
    if (augment->parsed()) return cmd_augment(opts, data, inference);
    if (train_student->parsed())
      return cmd_train_student(opts, data, out_file);
    if (evaluate->parsed()) {
      return cmd_evaluate(opts, model_path, data, annotations, report_path);
    }
    if (run->parsed()) return cmd_run(opts);
    if (toy->parsed()) return cmd_toy(opts);
    if (ablation->parsed()) return cmd_ablation(opts);
    if (validate->parsed()) return cmd_validate(opts);
  } catch (const ddme::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
