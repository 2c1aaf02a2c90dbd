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

#include "ddme/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <optional>

#include "ddme/distill.hpp"
#include "ddme/error.hpp"
#include "ddme/io.hpp"
#include "ddme/rng.hpp"

namespace ddme {

namespace fs = std::filesystem;

namespace {

// One pipeline process per output directory.
class LockFile {
 public:
  explicit LockFile(const fs::path& path) : path_(path) {
    std::FILE* f = std::fopen(path.string().c_str(), "wx");
    if (f == nullptr) {
      throw Error("output directory is locked by another run (" +
                  path.string() + " exists)");
    }
    std::fclose(f);
  }
  ~LockFile() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  LockFile(const LockFile&) = delete;
  LockFile& operator=(const LockFile&) = delete;

 private:
  fs::path path_;
};

class StepRunner {
 public:
  explicit StepRunner(RunManifest& manifest) : manifest_(manifest) {}

  template <typename F>
  void run(const std::string& name, bool skip, F&& body) {
    if (skip) {
      manifest_.timings.push_back({name, 0.0, true});
      return;
    }
    const auto start = std::chrono::steady_clock::now();
    try {
      body();
    } catch (const std::exception& e) {
      throw Error("step '" + name + "' failed: " + e.what());
    }
    const std::chrono::duration<double> elapsed =
        std::chrono::steady_clock::now() - start;
    manifest_.timings.push_back({name, elapsed.count(), false});
  }

 private:
  RunManifest& manifest_;
};

}  // namespace

std::vector<ExpertMode> experts_for_mode(RunMode mode) {
  switch (mode) {
    case RunMode::baseline: return {};
    case RunMode::ddme_single: return {ExpertMode::uniform};
    case RunMode::ddme_full:
      return {ExpertMode::forward, ExpertMode::uniform, ExpertMode::backward};
  }
  return {};
}

StudentTrainConfig student_config_for_run(const PipelineConfig& cfg) {
  StudentTrainConfig out = cfg.student;
  out.seed = derive_seed(cfg.seed, "train-student");
  out.deterministic = cfg.deterministic;
  return out;
}

ExpertTrainConfig expert_config_for_run(const PipelineConfig& cfg,
                                        ExpertMode mode) {
  ExpertTrainConfig out = cfg.expert;
  out.seed = derive_seed(cfg.seed,
                         "train-expert-" + std::string(expert_mode_name(mode)));
  out.deterministic = cfg.deterministic;
  return out;
}

void write_manifest(const RunManifest& manifest, const fs::path& path) {
  JsonWriter j;
  j.begin_object();
  j.kv("tool_version", manifest.tool_version);
  j.kv("mode", manifest.mode);
  j.kv("deterministic", manifest.deterministic);
  j.kv("seed", manifest.seed);
  j.key("config").begin_object();
  for (const auto& [k, v] : manifest.config) j.kv(k, v);
  j.end_object();
  j.key("steps").begin_array();
  for (const auto& t : manifest.timings) {
    j.begin_object();
    j.kv("name", t.name);
    j.kv("seconds", t.seconds);
    j.kv("skipped", t.skipped);
    j.end_object();
  }
  j.end_array();
  j.key("hashes").begin_object();
  for (const auto& [k, v] : manifest.hashes) j.kv(k, v);
  j.end_object();
  j.key("evals").begin_object();
  for (const auto& [split, result] : manifest.evals) {
    j.key(split).begin_object();
    auto slice = [&](std::string_view name, const SliceMetrics& m) {
      j.key(name).begin_object();
      j.kv("n", static_cast<std::int64_t>(m.n));
      j.kv("p_at_5", m.p_at_5);
      j.kv("r_at_5", m.r_at_5);
      j.end_object();
    };
    slice("overall", result.overall);
    for (const auto& [band, metrics] : result.bands) {
      slice(band_name(band), metrics);
    }
    j.end_object();
  }
  j.end_object();
  j.end_object();
  write_file(path, j.str() + "\n");
}

RunManifest run_pipeline(const PipelineConfig& cfg) {
  const fs::path out = cfg.out_dir;
  fs::create_directories(out / "data");
  fs::create_directories(out / "models");
  fs::create_directories(out / "reports");
  LockFile lock(out / ".lock");

  RunManifest manifest;
  manifest.tool_version = std::string(kToolVersion);
  manifest.mode = std::string(run_mode_name(cfg.mode));
  manifest.deterministic = cfg.deterministic;
  manifest.seed = cfg.seed;
  manifest.config = cfg.resolved();
  StepRunner steps(manifest);

  auto persist = [&](const fs::path& path) {
    manifest.hashes[fs::relative(path, out).generic_string()] =
        file_digest(path);
  };

  // Step 0: prepare data.
  ClickDataset train;
  std::vector<std::pair<std::string, ClickDataset>> eval_splits;
  steps.run("prepare_data", false, [&] {
    std::optional<LabelSpace> fixed;
    if (!cfg.label_space_file.empty()) {
      fixed = load_label_space(cfg.label_space_file);
    }
    if (cfg.synth_enabled) {
      SyntheticCorpus corpus = generate_synthetic(cfg.effective_synth());
      save_label_space(corpus.full.label_space, out / "data" / "labels.txt");
      save_dataset(corpus.full, out / "data" / "full.tsv");
      save_dataset(corpus.observed, out / "data" / "observed.tsv");
      save_dataset(corpus.heldout_t1, out / "data" / "heldout_t1.tsv");
      save_dataset(corpus.heldout_t30, out / "data" / "heldout_t30.tsv");
      for (const char* name :
           {"labels.txt", "full.tsv", "observed.tsv", "heldout_t1.tsv",
            "heldout_t30.tsv"}) {
        persist(out / "data" / name);
      }
      train = std::move(corpus.observed);
      eval_splits.emplace_back("full", std::move(corpus.full));
      eval_splits.emplace_back("heldout_t1", std::move(corpus.heldout_t1));
      eval_splits.emplace_back("heldout_t30", std::move(corpus.heldout_t30));
    } else {
      train = load_dataset(cfg.train_data, fixed ? &*fixed : nullptr);
      manifest.hashes["input/train"] = file_digest(cfg.train_data);
      eval_splits.emplace_back("train", train);
      if (!cfg.eval_data.empty()) {
        eval_splits.emplace_back(
            "eval", load_dataset(cfg.eval_data, &train.label_space));
        manifest.hashes["input/eval"] = file_digest(cfg.eval_data);
      }
    }
  });

  const std::vector<ExpertMode> expert_modes = experts_for_mode(cfg.mode);
  const bool baseline = expert_modes.empty();

  // Step 1: train the experts.
  std::vector<ExpertModel> experts;
  steps.run("train_experts", baseline, [&] {
    for (ExpertMode mode : expert_modes) {
      const ExpertTrainConfig tc = expert_config_for_run(cfg, mode);
      ExpertModel model =
          train_expert(train, mode, tc, cfg.expert_featurizer, nullptr);
      const fs::path path =
          out / "models" /
          ("expert_" + std::string(expert_mode_name(mode)) + ".bin");
      save_expert(model, path);
      persist(path);
      experts.push_back(std::move(model));
    }
  });

  // Step 2: batch inference over the training queries.
  steps.run("infer_experts", baseline, [&] {
    std::vector<std::vector<Prediction>> union_preds(train.size());
    for (const ExpertModel& model : experts) {
      std::vector<std::vector<Prediction>> preds(train.size());
      for (std::size_t i = 0; i < train.size(); ++i) {
        const std::vector<double> scores =
            expert_score_all(model, train.records[i].text);
        for (std::int32_t cat : select_labels(scores, cfg.tau, cfg.m_cap)) {
          const double s = scores[static_cast<std::size_t>(cat)];
          preds[i].push_back({cat, s});
          auto& u = union_preds[i];
          auto it = std::find_if(u.begin(), u.end(), [cat](const Prediction& p) {
            return p.category == cat;
          });
          if (it == u.end()) {
            u.push_back({cat, s});
          } else {
            it->score = std::max(it->score, s);
          }
        }
      }
      const fs::path path =
          out / "data" /
          ("infer_" + std::string(expert_mode_name(model.mode)) + ".tsv");
      save_inference(train, preds, path);
      persist(path);
    }
    for (auto& u : union_preds) {
      std::sort(u.begin(), u.end(),
                [](const Prediction& a, const Prediction& b) {
                  return a.category < b.category;
                });
    }
    save_inference(train, union_preds, out / "data" / "inference.tsv");
    persist(out / "data" / "inference.tsv");
  });

  // Step 3: training data generation (merge + prior-preserving allocation).
  steps.run("augment", baseline, [&] {
    InferenceDataset inf;
    inf.unioned =
        load_inference_labels(out / "data" / "inference.tsv", train.label_space);
    if (inf.unioned.size() != train.size()) {
      throw Error("inference file does not align with training data");
    }
    const MergeResult merge = merge_labels(train, inf);
    const AllocationConfig alloc_cfg{cfg.resolve_m(train.total_pv_mass()),
                                     cfg.zero_prior_floor};
    auto [aug, report] = allocate_pv(train, merge, alloc_cfg);
    emit_augmented(aug, out / "data" / "augmented.tsv",
                   out / "data" / "augmented.prov");
    write_allocation_report_json(report, train.label_space,
                                 out / "reports" / "allocation.json");
    write_file(out / "reports" / "allocation.txt",
               allocation_report_table(report, train.label_space));
    persist(out / "data" / "augmented.tsv");
    persist(out / "data" / "augmented.prov");
    persist(out / "reports" / "allocation.json");
    persist(out / "reports" / "allocation.txt");
  });

  // Step 4: student training (on the augmented file in ddme modes).
  steps.run("train_student", false, [&] {
    const StudentTrainConfig tc = student_config_for_run(cfg);
    StudentModel model;
    if (baseline) {
      model = train_student(train, tc, cfg.featurizer, nullptr);
    } else {
      const AugmentedDataset aug =
          load_augmented(out / "data" / "augmented.tsv",
                         out / "data" / "augmented.prov", &train.label_space);
      model = train_student(aug.data, tc, cfg.featurizer, nullptr);
    }
    save_model(model, out / "models" / "student.bin");
    persist(out / "models" / "student.bin");
  });

  // Step 5: evaluation reports.
  steps.run("evaluate", false, [&] {
    const StudentModel model = load_model(out / "models" / "student.bin");
    const std::string model_digest = file_digest(out / "models" / "student.bin");
    for (const auto& [split, ds] : eval_splits) {
      const EvalResult result =
          band_report(model, ds, cfg.bands, cfg.eval_topk, cfg.eval_threshold);
      EvalReportMeta meta;
      meta.split = split;
      meta.model_digest = model_digest;
      meta.dataset_digest = "n/a";
      if (cfg.synth_enabled) {
        const std::string file =
            split == "full" ? "full.tsv" : split + std::string(".tsv");
        meta.dataset_digest = file_digest(out / "data" / file);
      } else if (split == "train") {
        meta.dataset_digest = file_digest(cfg.train_data);
      } else if (!cfg.eval_data.empty()) {
        meta.dataset_digest = file_digest(cfg.eval_data);
      }
      const fs::path json = out / "reports" / ("eval_" + split + ".json");
      const fs::path txt = out / "reports" / ("eval_" + split + ".txt");
      write_eval_report_json(result, meta, json);
      write_file(txt, eval_report_table(result, meta));
      persist(json);
      persist(txt);
      manifest.evals.emplace(split, result);
    }
    if (!cfg.annotations.empty()) {
      const AnnotationSet ann = load_annotations(cfg.annotations);
      JsonWriter j;
      j.begin_object();
      j.kv("acc", pair_accuracy(ann, true));
      j.kv("acc_wo_pv", pair_accuracy(ann, false));
      j.kv("pairs", static_cast<std::int64_t>(ann.size()));
      j.end_object();
      write_file(out / "reports" / "annotation_accuracy.json", j.str() + "\n");
      persist(out / "reports" / "annotation_accuracy.json");
    }
  });

  write_manifest(manifest, out / "manifest.json");
  return manifest;
}

namespace {

ToyCell overall_cell(const EvalResult& r) {
  return {r.overall.p_at_5, r.overall.r_at_5};
}

EvalResult eval_expert_ranked(const ExpertModel& model, const ClickDataset& ds,
                              const BandCuts& cuts) {
  std::vector<std::vector<std::int32_t>> ranked(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto preds = expert_predict_topk(model, ds.records[i].text, 5, 0.0);
    for (const auto& p : preds) ranked[i].push_back(p.category);
  }
  return evaluate_ranked(ranked, ds, cuts);
}

}  // namespace

double ToyReport::student_gap() const {
  double sum = 0;
  for (const auto& s : seeds) {
    sum += s.student_t1.r_at_5 - s.student_t30.r_at_5;
  }
  return seeds.empty() ? 0 : sum / static_cast<double>(seeds.size());
}

double ToyReport::expert_gap() const {
  double sum = 0;
  for (const auto& s : seeds) {
    sum += s.expert_t1.r_at_5 - s.expert_t30.r_at_5;
  }
  return seeds.empty() ? 0 : sum / static_cast<double>(seeds.size());
}

ToyReport run_toy_experiment(const PipelineConfig& cfg) {
  if (!cfg.synth_enabled) {
    throw Error("toy experiment requires synth.enabled = true");
  }
  ToyReport report;
  for (std::uint64_t seed : cfg.experiment_seeds) {
    SyntheticSpec spec = cfg.synth;
    spec.seed = derive_seed(seed, "synthetic-corpus");
    const SyntheticCorpus corpus = generate_synthetic(spec);

    StudentTrainConfig sc = cfg.student;
    sc.seed = derive_seed(seed, "toy-student");
    sc.deterministic = cfg.deterministic;
    const StudentModel student =
        train_student(corpus.observed, sc, cfg.featurizer, nullptr);

    ExpertTrainConfig ec = cfg.expert;
    ec.seed = derive_seed(seed, "toy-expert");
    ec.deterministic = cfg.deterministic;
    const ExpertModel expert = train_expert(
        corpus.observed, ExpertMode::uniform, ec, cfg.expert_featurizer, nullptr);

    ToySeedResult row;
    row.seed = seed;
    row.student_t1 = overall_cell(
        band_report(student, corpus.heldout_t1, cfg.bands, 5, 0.0));
    row.student_t30 = overall_cell(
        band_report(student, corpus.heldout_t30, cfg.bands, 5, 0.0));
    row.expert_t1 =
        overall_cell(eval_expert_ranked(expert, corpus.heldout_t1, cfg.bands));
    row.expert_t30 =
        overall_cell(eval_expert_ranked(expert, corpus.heldout_t30, cfg.bands));
    report.seeds.push_back(row);
  }
  return report;
}

double AblationReport::mean_r5(RunMode mode, const std::string& slice) const {
  for (const auto& m : modes) {
    if (m.mode != mode) continue;
    for (const auto& s : m.mean) {
      if (s.slice == slice) return s.r_at_5;
    }
  }
  throw Error("ablation report: no slice '" + slice + "'");
}

AblationReport run_ablation(const PipelineConfig& cfg) {
  if (!cfg.synth_enabled) {
    throw Error("ablation requires synth.enabled = true");
  }
  const RunMode modes[] = {RunMode::baseline, RunMode::ddme_single,
                           RunMode::ddme_full};
  AblationReport report;
  report.seeds = cfg.experiment_seeds;

  for (RunMode mode : modes) {
    AblationModeResult mode_result;
    mode_result.mode = mode;
    for (std::uint64_t seed : cfg.experiment_seeds) {
      PipelineConfig sub = cfg;
      sub.mode = mode;
      sub.seed = seed;  // the synthetic corpus seed derives from this,
                        // so all three modes share the corpus per seed
      sub.out_dir = cfg.out_dir / "ablation" /
                    ("seed" + std::to_string(seed)) /
                    std::string(run_mode_name(mode));
      const RunManifest manifest = run_pipeline(sub);
      const auto it = manifest.evals.find("full");
      if (it == manifest.evals.end()) {
        throw Error("ablation: pipeline produced no 'full' evaluation");
      }
      std::vector<AblationSlice> slices;
      slices.push_back(
          {"overall", it->second.overall.p_at_5, it->second.overall.r_at_5});
      for (const auto& [band, m] : it->second.bands) {
        slices.push_back({std::string(band_name(band)), m.p_at_5, m.r_at_5});
      }
      mode_result.per_seed.push_back(std::move(slices));
    }
    // seed-average matching slice names
    std::vector<AblationSlice> mean;
    for (const auto& slice : mode_result.per_seed.front()) {
      AblationSlice m{slice.slice, 0, 0};
      int count = 0;
      for (const auto& seed_slices : mode_result.per_seed) {
        for (const auto& s : seed_slices) {
          if (s.slice == m.slice) {
            m.p_at_5 += s.p_at_5;
            m.r_at_5 += s.r_at_5;
            ++count;
          }
        }
      }
      if (count > 0) {
        m.p_at_5 /= count;
        m.r_at_5 /= count;
      }
      mean.push_back(m);
    }
    mode_result.mean = std::move(mean);
    report.modes.push_back(std::move(mode_result));
  }
  return report;
}

void write_toy_report(const ToyReport& report, const fs::path& dir) {
  fs::create_directories(dir);
  JsonWriter j;
  j.begin_object();
  j.key("seeds").begin_array();
  for (const auto& s : report.seeds) {
    j.begin_object();
    j.kv("seed", s.seed);
    auto cell = [&](std::string_view name, const ToyCell& c) {
      j.key(name).begin_object();
      j.kv("p_at_5", c.p_at_5);
      j.kv("r_at_5", c.r_at_5);
      j.end_object();
    };
    cell("student_t1", s.student_t1);
    cell("student_t30", s.student_t30);
    cell("expert_t1", s.expert_t1);
    cell("expert_t30", s.expert_t30);
    j.end_object();
  }
  j.end_array();
  j.kv("student_r5_gap", report.student_gap());
  j.kv("expert_r5_gap", report.expert_gap());
  j.end_object();
  write_file(dir / "toy.json", j.str() + "\n");

  std::string txt;
  txt += "model    split      P@5      R@5   (per seed)\n";
  for (const auto& s : report.seeds) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "seed %llu\n"
                  "  student  T+1   %7.4f %7.4f\n"
                  "  student  T+30  %7.4f %7.4f\n"
                  "  expert   T+1   %7.4f %7.4f\n"
                  "  expert   T+30  %7.4f %7.4f\n",
                  static_cast<unsigned long long>(s.seed), s.student_t1.p_at_5,
                  s.student_t1.r_at_5, s.student_t30.p_at_5,
                  s.student_t30.r_at_5, s.expert_t1.p_at_5, s.expert_t1.r_at_5,
                  s.expert_t30.p_at_5, s.expert_t30.r_at_5);
    txt += buf;
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "mean R@5 gap (T+1 - T+30): student %+.4f, expert %+.4f\n",
                report.student_gap(), report.expert_gap());
  txt += buf;
  write_file(dir / "toy.txt", txt);
}

void write_ablation_report(const AblationReport& report, const fs::path& dir) {
  fs::create_directories(dir);
  JsonWriter j;
  j.begin_object();
  j.key("seeds").begin_array();
  for (std::uint64_t s : report.seeds) j.value(s);
  j.end_array();
  j.key("modes").begin_array();
  for (const auto& m : report.modes) {
    j.begin_object();
    j.kv("mode", std::string(run_mode_name(m.mode)));
    j.key("mean").begin_array();
    for (const auto& s : m.mean) {
      j.begin_object();
      j.kv("slice", s.slice);
      j.kv("p_at_5", s.p_at_5);
      j.kv("r_at_5", s.r_at_5);
      j.end_object();
    }
    j.end_array();
    j.key("per_seed").begin_array();
    for (std::size_t i = 0; i < m.per_seed.size(); ++i) {
      j.begin_object();
      j.kv("seed", report.seeds[i]);
      j.key("slices").begin_array();
      for (const auto& s : m.per_seed[i]) {
        j.begin_object();
        j.kv("slice", s.slice);
        j.kv("p_at_5", s.p_at_5);
        j.kv("r_at_5", s.r_at_5);
        j.end_object();
      }
      j.end_array();
      j.end_object();
    }
    j.end_array();
    j.end_object();
  }
  j.end_array();
  j.end_object();
  write_file(dir / "ablation.json", j.str() + "\n");

  std::string txt;
  txt += "mode         slice      P@5      R@5   (seed mean)\n";
  for (const auto& m : report.modes) {
    for (const auto& s : m.mean) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "%-12s %-8s %7.4f %7.4f\n",
                    std::string(run_mode_name(m.mode)).c_str(),
                    s.slice.c_str(), s.p_at_5, s.r_at_5);
      txt += buf;
    }
  }
  write_file(dir / "ablation.txt", txt);
}

}  // namespace ddme
