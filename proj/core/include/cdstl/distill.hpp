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

#ifndef CDSTL_DISTILL_HPP
#define CDSTL_DISTILL_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cdstl/dataset.hpp"
#include "cdstl/distilled.hpp"
#include "cdstl/model.hpp"
#include "cdstl/pruning.hpp"

namespace cdstl {

enum class DistillMethod { dc, dm, mtt };
enum class DcGranularity { global, per_layer };
enum class InitStrategy { real_sample, noise };

const char* method_name(DistillMethod m);
DistillMethod method_from_name(const std::string& s);

// Learnable synthetic set in pixel space. Labels are fixed (ipc copies per
// class, class-major) and never change; the payload is clamped to [0,1]
// after every update step.
struct SyntheticSet {
  Tensor payload;  // [M,C,H,W], leaf, requires_grad
  std::vector<int> labels;
  int64_t class_count = 0;
  int64_t ipc = 0;
  double lr = 0.0;
  int64_t step_count = 0;
  std::vector<int64_t> init_indices;  // source rows for real-sample init

  std::vector<int64_t> rows_of_class(int64_t c) const;
};

struct ExpertTrajectory {
  Arch arch = Arch::ConvNetS;
  std::vector<Tensor> snapshots;  // flat parameter vectors [P], step 0 first
  int snapshot_interval = 0;
  int total_steps = 0;
  double lr = 0.0;
  int64_t batch = 0;
  uint64_t seed = 0;
  bool degenerate = false;  // all snapshots identical (lr == 0)
  std::string config_hash;

  int64_t snapshot_count() const { return static_cast<int64_t>(snapshots.size()); }
};

struct DistillConfig {
  DistillMethod method = DistillMethod::dm;
  int iterations = 500;
  double synthetic_lr = 1.0;
  int inner_steps = 4;             // MTT student steps N
  int expert_steps = 2;            // MTT target horizon, in snapshots
  int models_per_iteration = 1;
  int64_t batch_per_class = 16;
  uint64_t seed = 0;
  InitStrategy init = InitStrategy::real_sample;
  DcGranularity dc_granularity = DcGranularity::global;
  double inner_lr = 0.02;          // MTT student update rate

  // expert recording (MTT)
  int expert_total_steps = 60;
  int expert_snapshot_interval = 10;
  double expert_lr = 0.05;
  int64_t expert_batch = 32;
  int expert_count = 3;

  void validate() const;
  std::string dump() const;  // one-line summary for diagnostics
};

// Draws ipc synthetic images per class: real-sample copies distinct core-set
// members bitwise (canonical ascending order, so a class with exactly ipc
// members initializes identically for every seed); noise draws uniform [0,1].
SyntheticSet init_synthetic(const CoreSet& core, const LabeledDataset& ds, int64_t ipc,
                            InitStrategy strategy, uint64_t seed);

// Gradient-matching loss: 1 - cos(grad_theta CE(syn), grad_theta CE(real)),
// over the concatenated flat gradient (global) or summed per parameter
// tensor (per_layer). Differentiable w.r.t. the synthetic batch; the real
// gradient is treated as a constant. Gradient norms below 1e-12 raise
// numeric_error.
Tensor dc_loss(const Tensor& syn_batch, const std::vector<int>& syn_labels,
               const Tensor& real_batch, const std::vector<int>& real_labels,
               const Model& model, DcGranularity granularity = DcGranularity::global);

// Distribution-matching loss: sum_c || mean psi(real_c) - mean psi(syn_c) ||^2
// with psi = embed(). Real embeddings are constants; differentiable w.r.t.
// the synthetic views.
Tensor dm_loss_views(const std::vector<Tensor>& syn_by_class,
                     const std::vector<Tensor>& real_by_class, const Model& embedder);
Tensor dm_loss(const SyntheticSet& syn, const std::vector<Tensor>& real_by_class,
               const Model& embedder);

// Trains a fresh model on the core-set with seeded batching and snapshots
// the flat parameters every `snapshot_interval` steps, step 0 included.
ExpertTrajectory record_expert(const CoreSet& core, const LabeledDataset& ds, Arch arch,
                               int total_steps, int snapshot_interval, double lr,
                               int64_t batch, uint64_t seed);

// || student - expert[t+M] ||^2 / || expert[t] - expert[t+M] ||^2.
// Differentiable through student_final; a denominator below 1e-20 raises
// numeric_error (degenerate expert).
Tensor mtt_loss(const Tensor& student_final, const ExpertTrajectory& expert, int64_t t,
                int64_t expert_steps);

struct LossPoint {
  int64_t iteration;
  double loss;
  int64_t wall_ms;
};

struct DistillResult {
  DistilledContainer container;
  std::vector<LossPoint> history;
  std::vector<ExpertTrajectory> experts;  // recorded for MTT runs
};

// Differentiable view from an optimizable leaf to synthetic pixels; the
// pixel engine gathers payload rows directly, the latent engine decodes
// gathered codes. clamp01 applies to the leaf after each step.
struct SynTarget {
  Tensor payload;                                             // leaf to optimize
  std::function<Tensor(const std::vector<int64_t>&)> render;  // rows -> [n,C,H,W]
  bool clamp01 = true;
};

struct EngineResult {
  std::vector<LossPoint> history;
  std::vector<ExpertTrajectory> experts;  // recorded for MTT runs
};

// Shared optimization loop for all three methods over an arbitrary target.
// `labels` are the fixed synthetic labels (class-major, ipc per class).
EngineResult run_distill_engine(const CoreSet& core, const LabeledDataset& ds,
                                const DistillConfig& cfg, int64_t ipc, SynTarget& target,
                                const std::vector<int>& labels);

// Pixel-space distillation with the method selected by cfg.method. The
// provenance argument is merged into the container's provenance block.
DistillResult distill_run(const CoreSet& core, const LabeledDataset& ds,
                          const DistillConfig& cfg, int64_t ipc,
                          Provenance provenance = {});

// Loss history CSV: "iteration,loss,wall_ms".
void write_loss_csv(const std::vector<LossPoint>& history, const std::string& path);

// One NNC1 checkpoint per snapshot plus a manifest text file.
void save_expert_trajectory(const ExpertTrajectory& traj, const Model& proto,
                            const std::string& dir, const std::string& name);

}  // namespace cdstl

#endif  // CDSTL_DISTILL_HPP
