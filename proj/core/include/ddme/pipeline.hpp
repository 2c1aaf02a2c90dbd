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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ddme/config.hpp"
#include "ddme/eval.hpp"

namespace ddme {

inline constexpr std::string_view kToolVersion = "0.1.0";

struct StepTiming {
  std::string name;
  double seconds = 0;
  bool skipped = false;
};

/// Snapshot of one pipeline run. `hashes` maps out-dir-relative paths of
/// every persisted artifact to its content digest; in deterministic mode the
/// map fully determines reproducibility.
struct RunManifest {
  std::string tool_version;
  std::string mode;
  bool deterministic = false;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<StepTiming> timings;
  std::map<std::string, std::string> hashes;
  std::map<std::string, EvalResult> evals;  // per evaluation split
};

void write_manifest(const RunManifest& manifest,
                    const std::filesystem::path& path);

// Training configs as the pipeline derives them (per-step seed fan-out from
// the run seed). Calling the trainers directly with these reproduces the
// pipeline's models byte for byte.
StudentTrainConfig student_config_for_run(const PipelineConfig& cfg);
ExpertTrainConfig expert_config_for_run(const PipelineConfig& cfg,
                                        ExpertMode mode);

/// Experts a run mode trains: none, {uniform}, or {forward,uniform,backward}.
std::vector<ExpertMode> experts_for_mode(RunMode mode);

// Executes the offline workflow: prepare data, train experts, batch
// inference, augment, train student, evaluate. Baseline mode skips the expert
// steps and trains the student on raw historical data. Artifacts land under
// cfg.out_dir (data/, models/, reports/, manifest.json); a failing step
// aborts with the step named, keeping partial outputs.
RunManifest run_pipeline(const PipelineConfig& cfg);

struct ToyCell {
  double p_at_5 = 0;
  double r_at_5 = 0;
};

struct ToySeedResult {
  std::uint64_t seed = 0;
  ToyCell student_t1, student_t30;
  ToyCell expert_t1, expert_t30;
};

/// Memorize-vs-generalize comparison: a student and a uniform expert trained
/// on `observed`, both scored on the T+1 and T+30 splits against ground
/// truth.
struct ToyReport {
  std::vector<ToySeedResult> seeds;

  double student_gap() const;  // mean R@5(T1) - R@5(T30)
  double expert_gap() const;
};

ToyReport run_toy_experiment(const PipelineConfig& cfg);

struct AblationSlice {
  std::string slice;  // "overall", "high", "middle", "low"
  double p_at_5 = 0;
  double r_at_5 = 0;
};

struct AblationModeResult {
  RunMode mode = RunMode::baseline;
  std::vector<AblationSlice> mean;                    // seed-averaged
  std::vector<std::vector<AblationSlice>> per_seed;   // raw numbers, per seed
};

struct AblationReport {
  std::vector<std::uint64_t> seeds;
  std::vector<AblationModeResult> modes;  // baseline, ddme_single, ddme_full

  double mean_r5(RunMode mode, const std::string& slice) const;
};

/// Runs baseline / ddme_single / ddme_full end-to-end per experiment seed and
/// aggregates overall and per-band metrics on the ground-truth split.
AblationReport run_ablation(const PipelineConfig& cfg);

void write_toy_report(const ToyReport& report, const std::filesystem::path& dir);
void write_ablation_report(const AblationReport& report,
                           const std::filesystem::path& dir);

}  // namespace ddme
