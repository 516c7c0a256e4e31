/*
 * Copyright 2026 The cdstl authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef CDSTL_EVAL_HPP
#define CDSTL_EVAL_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cdstl/dataset.hpp"
#include "cdstl/distill.hpp"
#include "cdstl/distilled.hpp"
#include "cdstl/model.hpp"
#include "cdstl/pruning.hpp"

namespace cdstl {

struct ArchResult {
  Arch arch = Arch::MLP;
  std::vector<double> accuracies;       // one per repeat, fractions in [0,1]
  double mean = 0.0, stddev = 0.0;      // sample std-dev (n-1)
  std::vector<std::string> init_hashes; // fresh-init guard, one per repeat
};

struct EvalReport {
  std::vector<ArchResult> per_arch;
  int repeats = 0;
  std::string baseline_tag;  // full | pruned-easy | pruned-hard
  std::string container_hash, test_hash, config_hash;
  // both aggregations: across architecture means, and pooled over all runs
  double mean_of_arch_means = 0.0, std_across_archs = 0.0;
  double pooled_mean = 0.0, pooled_std = 0.0;

  void recompute_aggregates();  // aggregates are pure functions of the runs
  void validate() const;
};

struct EvalParams {
  std::vector<Arch> archs;  // empty -> default (backbone excluded)
  int repeats = 5;
  int epochs = 200;
  int64_t batch = 32;
  double lr = 0.05;
  uint64_t seed = 0;
  int jobs = 1;
  // Test hook: force every repeat to the same init/train seed.
  std::optional<uint64_t> force_repeat_seed;
};

// Default evaluation architectures: the distillation backbone (ConvNetS)
// is excluded so every result is a cross-architecture result.
std::vector<Arch> default_eval_archs();

// For each architecture x repeat: fresh seeded init, train from scratch on
// the distilled images only, report top-1 accuracy on the real test split.
// Latent containers must be rendered to pixels first. Jobs run in parallel;
// results are independent of the worker count.
EvalReport evaluate(const DistilledContainer& container, const LabeledDataset& test,
                    const EvalParams& params);

struct SweepCell {
  double r = 1.0;
  PruneMode mode = PruneMode::easy;
  bool ok = false;
  EvalReport report;
  std::string error;  // failed cells are recorded, not fatal
};

struct SweepResult {
  std::vector<double> r_values;  // strictly increasing
  std::vector<PruneMode> modes;
  std::vector<SweepCell> cells;  // row-major: r-major, then mode
  EvalReport reference;          // the r = 1.0 evaluation
  double reference_mean = 0.0;

  const SweepCell* cell(double r, PruneMode mode) const;
};

// prune -> distill -> evaluate over the (r, mode) grid. r_values must lie in
// (0,1] and include 1.0 (the reference). The scorer ranking is computed once
// and sliced per cell; per-cell distill/eval seeds derive from the r value
// (not the mode), so easy/hard cells at the same r are seed-paired. Cells
// execute on a work queue of `jobs` workers.
SweepResult sweep_r(const LabeledDataset& train, const LabeledDataset& test,
                    const Model& scorer, const DistillConfig& cfg, int64_t ipc,
                    const std::vector<PruneMode>& modes, std::vector<double> r_values,
                    const EvalParams& eval_params, int jobs);

struct DeltaRow {
  Arch arch = Arch::MLP;
  double delta_mean_pp = 0.0;  // percentage points, signed
  double delta_std_pp = 0.0;
};

struct DeltaTable {
  std::vector<DeltaRow> rows;
  double overall_delta_pp = 0.0;  // across architecture means
  std::string text;               // sign-coded rendering
};

// b relative to a; requires identical architecture lists and test-set hash.
DeltaTable compare_reports(const EvalReport& a, const EvalReport& b);

// CSV: "# ..." provenance comments, raw rows (arch,repeat,accuracy), then a
// summary section (arch,mean,std) plus overall_by_arch / overall_pooled rows.
void write_report_csv(const EvalReport& report, const std::string& path);
EvalReport read_report_csv(const std::string& path);

// CSV: r,mode,mean,std rows (missing cells keep empty value fields) after a
// "# reference_mean=..." comment.
void write_sweep_csv(const SweepResult& sweep, const std::string& path);
void write_delta_csv(const DeltaTable& delta, const std::string& path);

}  // namespace cdstl

#endif  // CDSTL_EVAL_HPP
