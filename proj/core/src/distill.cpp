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

#include "cdstl/distill.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "cdstl/binio.hpp"
#include "cdstl/errors.hpp"
#include "cdstl/hash.hpp"
#include "cdstl/log.hpp"

namespace cdstl {

namespace {
// The distillation backbone; evaluation architectures are elsewhere.
constexpr Arch kBackbone = Arch::ConvNetS;
constexpr double kGradNormFloor = 1e-12;
constexpr double kExpertNormFloor = 1e-20;
}  // namespace

const char* method_name(DistillMethod m) {
  switch (m) {
    case DistillMethod::dc: return "dc";
    case DistillMethod::dm: return "dm";
    case DistillMethod::mtt: return "mtt";
  }
  return "unknown";
}

DistillMethod method_from_name(const std::string& s) {
  if (s == "dc") return DistillMethod::dc;
  if (s == "dm") return DistillMethod::dm;
  if (s == "mtt") return DistillMethod::mtt;
  throw config_error("unknown distillation method: " + s);
}

std::vector<int64_t> SyntheticSet::rows_of_class(int64_t c) const {
  std::vector<int64_t> rows;
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == c) rows.push_back(static_cast<int64_t>(i));
  return rows;
}

void DistillConfig::validate() const {
  if (iterations < 0) throw config_error("distill: iterations must be >= 0");
  if (!(synthetic_lr > 0.0)) throw config_error("distill: synthetic_lr must be > 0");
  if (inner_steps < 1 || expert_steps < 1 || models_per_iteration < 1 || batch_per_class < 1)
    throw config_error("distill: counts must be >= 1");
  if (!(inner_lr > 0.0)) throw config_error("distill: inner_lr must be > 0");
  if (method == DistillMethod::mtt) {
    if (expert_total_steps < 2 * expert_snapshot_interval)
      throw config_error("distill: expert_total_steps must be >= 2 * snapshot interval");
    int64_t snapshots = 1 + expert_total_steps / expert_snapshot_interval;
    if (snapshots - expert_steps < 1)
      throw config_error("distill: expert_steps exceeds the recorded horizon");
    if (expert_count < 1) throw config_error("distill: expert_count must be >= 1");
  }
}

std::string DistillConfig::dump() const {
  std::ostringstream os;
  os << "method=" << method_name(method) << " iterations=" << iterations
     << " synthetic_lr=" << synthetic_lr << " inner_steps=" << inner_steps
     << " expert_steps=" << expert_steps << " models_per_iteration=" << models_per_iteration
     << " batch_per_class=" << batch_per_class << " seed=" << seed
     << " init=" << (init == InitStrategy::real_sample ? "real-sample" : "noise")
     << " dc_granularity=" << (dc_granularity == DcGranularity::global ? "global" : "per-layer")
     << " inner_lr=" << inner_lr << " expert_total_steps=" << expert_total_steps
     << " expert_snapshot_interval=" << expert_snapshot_interval << " expert_lr=" << expert_lr
     << " expert_batch=" << expert_batch << " expert_count=" << expert_count;
  return os.str();
}

SyntheticSet init_synthetic(const CoreSet& core, const LabeledDataset& ds, int64_t ipc,
                            InitStrategy strategy, uint64_t seed) {
  if (ipc < 1) throw config_error("init_synthetic: ipc must be >= 1");
  auto by_class = core.kept_by_class(ds);
  int64_t k = ds.class_count;
  int64_t m = k * ipc;
  int64_t c_ch = ds.channels(), h = ds.height(), w = ds.width();
  int64_t row_elems = c_ch * h * w;

  SyntheticSet syn;
  syn.class_count = k;
  syn.ipc = ipc;
  for (int64_t c = 0; c < k; ++c)
    for (int64_t i = 0; i < ipc; ++i) syn.labels.push_back(static_cast<int>(c));

  Rng rng(seed);
  std::vector<double> payload(static_cast<size_t>(m * row_elems));
  if (strategy == InitStrategy::noise) {
    for (auto& v : payload) v = rng.next_double();
  } else {
    for (int64_t c = 0; c < k; ++c) {
      const auto& members = by_class[static_cast<size_t>(c)];
      int64_t n_c = static_cast<int64_t>(members.size());
      if (n_c < ipc)
        throw config_error("init_synthetic: class " + std::to_string(c) + " has only " +
                           std::to_string(n_c) + " core members for ipc=" + std::to_string(ipc) +
                           "; use the noise strategy instead");
      std::vector<int64_t> chosen;
      if (n_c == ipc) {
        chosen = members;  // no choice: deterministic for every seed
      } else {
        auto picks = rng.sample_without_replacement(n_c, ipc);
        for (auto p : picks) chosen.push_back(members[static_cast<size_t>(p)]);
        std::sort(chosen.begin(), chosen.end());
      }
      for (int64_t i = 0; i < ipc; ++i) {
        int64_t dst_row = c * ipc + i;
        std::copy(ds.images.raw().begin() + chosen[static_cast<size_t>(i)] * row_elems,
                  ds.images.raw().begin() + (chosen[static_cast<size_t>(i)] + 1) * row_elems,
                  payload.begin() + dst_row * row_elems);
        syn.init_indices.push_back(chosen[static_cast<size_t>(i)]);
      }
    }
  }
  syn.payload = Tensor::leaf({m, c_ch, h, w}, std::move(payload), true);
  return syn;
}

namespace {

// Cosine distance 1 - (a.b)/(|a||b|) with a degenerate-gradient guard.
Tensor cosine_distance(const Tensor& gs, const Tensor& gt) {
  double ns = 0.0, nt = 0.0;
  for (double v : gs.raw()) ns += v * v;
  for (double v : gt.raw()) nt += v * v;
  if (std::sqrt(ns) < kGradNormFloor || std::sqrt(nt) < kGradNormFloor)
    throw numeric_error("dc_loss: degenerate gradient (norm below 1e-12)");
  return sub(1.0, div(dot(gs, gt), mul(norm(gs), norm(gt))));
}

}  // namespace

Tensor dc_loss(const Tensor& syn_batch, const std::vector<int>& syn_labels,
               const Tensor& real_batch, const std::vector<int>& real_labels,
               const Model& model, DcGranularity granularity) {
  if (syn_batch.dim(0) == 0 || real_batch.dim(0) == 0)
    throw validation_error("dc_loss: batches must be nonempty");
  if (!grad_enabled())
    throw usage_error("dc_loss: needs gradient mode (the loss value is built from "
                      "parameter gradients)");
  auto params = model.param_tensors();

  // synthetic side: gradients stay on the graph so the loss can reach pixels
  Tensor loss_s = cross_entropy(forward(model, syn_batch), syn_labels);
  auto gs = grad_of(loss_s, params, /*create_graph=*/true);

  // real side: plain gradients, constants of the loss
  Tensor loss_t = cross_entropy(forward(model, real_batch), real_labels);
  auto gt = grad_of(loss_t, params, /*create_graph=*/false);

  if (granularity == DcGranularity::global) {
    Tensor gs_flat = flatten_tensor_list(gs);
    Tensor gt_flat = flatten_tensor_list(gt);
    return cosine_distance(gs_flat, gt_flat);
  }
  Tensor total;
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor term = cosine_distance(reshape(gs[i], {gs[i].numel()}),
                                  reshape(gt[i], {gt[i].numel()}));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

Tensor dm_loss_views(const std::vector<Tensor>& syn_by_class,
                     const std::vector<Tensor>& real_by_class, const Model& embedder) {
  if (syn_by_class.size() != real_by_class.size())
    throw validation_error("dm_loss: class count mismatch between real and synthetic sides");
  Tensor total;
  for (size_t c = 0; c < syn_by_class.size(); ++c) {
    if (!syn_by_class[c].defined() || !real_by_class[c].defined() ||
        syn_by_class[c].dim(0) == 0 || real_by_class[c].dim(0) == 0)
      throw validation_error("dm_loss: class " + std::to_string(c) + " missing on one side");
    Tensor real_mean;
    {
      NoGradGuard ng;
      real_mean = mean_axes(embed(embedder, real_by_class[c]), {0}, false);
    }
    Tensor syn_mean = mean_axes(embed(embedder, syn_by_class[c]), {0}, false);
    Tensor term = sq_norm(sub(real_mean, syn_mean));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

Tensor dm_loss(const SyntheticSet& syn, const std::vector<Tensor>& real_by_class,
               const Model& embedder) {
  std::vector<Tensor> views;
  for (int64_t c = 0; c < syn.class_count; ++c)
    views.push_back(gather_rows(syn.payload, syn.rows_of_class(c)));
  return dm_loss_views(views, real_by_class, embedder);
}

ExpertTrajectory record_expert(const CoreSet& core, const LabeledDataset& ds, Arch arch,
                               int total_steps, int snapshot_interval, double lr,
                               int64_t batch, uint64_t seed) {
  if (snapshot_interval < 1) throw config_error("record_expert: snapshot interval must be >= 1");
  if (total_steps < 2 * snapshot_interval)
    throw config_error("record_expert: total_steps must be >= 2 * snapshot_interval");

  if (core.kept.empty()) throw validation_error("record_expert: empty core-set");
  Tensor images;
  {
    NoGradGuard ng;
    images = gather_rows(ds.images, core.kept);
  }
  std::vector<int> labels;
  labels.reserve(core.kept.size());
  for (auto i : core.kept) labels.push_back(ds.labels[static_cast<size_t>(i)]);

  Rng rng(seed);
  Model model = make_model(arch, ds.channels(), ds.height(), ds.width(), ds.class_count, rng);

  ExpertTrajectory traj;
  traj.arch = arch;
  traj.snapshot_interval = snapshot_interval;
  traj.total_steps = total_steps;
  traj.lr = lr;
  traj.batch = batch;
  traj.seed = seed;
  {
    std::ostringstream os;
    os << "arch=" << arch_name(arch) << " steps=" << total_steps
       << " interval=" << snapshot_interval << " lr=" << lr << " batch=" << batch
       << " seed=" << seed;
    traj.config_hash = hex64(fnv1a64(os.str()));
  }
  traj.snapshots.push_back(flatten_params(model));

  train_steps(model, images, labels, total_steps, batch, lr, rng, [&](int step) {
    if (step % snapshot_interval == 0) traj.snapshots.push_back(flatten_params(model));
  });

  traj.degenerate = true;
  for (size_t i = 1; i < traj.snapshots.size() && traj.degenerate; ++i) {
    const auto& a = traj.snapshots[i - 1].raw();
    const auto& b = traj.snapshots[i].raw();
    for (size_t j = 0; j < a.size(); ++j)
      if (a[j] != b[j]) {
        traj.degenerate = false;
        break;
      }
  }
  if (traj.degenerate) log_info("record_expert: degenerate trajectory (snapshots identical)");
  return traj;
}

Tensor mtt_loss(const Tensor& student_final, const ExpertTrajectory& expert, int64_t t,
                int64_t expert_steps) {
  if (t < 0 || t + expert_steps >= expert.snapshot_count())
    throw usage_error("mtt_loss: snapshot window out of range");
  const Tensor& start = expert.snapshots[static_cast<size_t>(t)];
  const Tensor& target = expert.snapshots[static_cast<size_t>(t + expert_steps)];
  if (student_final.numel() != target.numel())
    throw usage_error("mtt_loss: parameter length mismatch");

  double denom = 0.0;
  for (int64_t i = 0; i < start.numel(); ++i) {
    double d = start.at(i) - target.at(i);
    denom += d * d;
  }
  if (denom < kExpertNormFloor)
    throw numeric_error("mtt_loss: degenerate expert (displacement below 1e-20)");
  return div(sq_norm(sub(student_final, target)), denom);
}

namespace {

std::vector<int64_t> rows_for_class(const std::vector<int>& labels, int64_t c) {
  std::vector<int64_t> rows;
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == c) rows.push_back(static_cast<int64_t>(i));
  return rows;
}

Tensor real_class_batch(const LabeledDataset& ds, const std::vector<int64_t>& members,
                        int64_t batch, Rng& rng) {
  int64_t take = std::min<int64_t>(batch, static_cast<int64_t>(members.size()));
  auto picks = rng.sample_without_replacement(static_cast<int64_t>(members.size()), take);
  std::vector<int64_t> idx;
  idx.reserve(static_cast<size_t>(take));
  for (auto p : picks) idx.push_back(members[static_cast<size_t>(p)]);
  NoGradGuard ng;
  return gather_rows(ds.images, idx);
}

void apply_synthetic_step(SynTarget& target, double lr) {
  Tensor g = target.payload.grad();
  if (!g.defined())
    throw numeric_error("distill: loss does not depend on the synthetic payload");
  auto& data = target.payload.raw();
  const auto& gd = g.raw();
  for (size_t i = 0; i < data.size(); ++i) {
    data[i] -= lr * gd[i];
    if (target.clamp01) data[i] = std::clamp(data[i], 0.0, 1.0);
  }
}

}  // namespace

EngineResult run_distill_engine(const CoreSet& core, const LabeledDataset& ds,
                                const DistillConfig& cfg, int64_t ipc, SynTarget& target,
                                const std::vector<int>& labels) {
  cfg.validate();
  ds.validate();
  if (static_cast<int64_t>(labels.size()) != ds.class_count * ipc)
    throw usage_error("distill: expected " + std::to_string(ds.class_count * ipc) +
                      " synthetic labels, got " + std::to_string(labels.size()));
  auto by_class = core.kept_by_class(ds);
  for (int64_t c = 0; c < ds.class_count; ++c)
    if (by_class[static_cast<size_t>(c)].empty())
      throw validation_error("distill: core-set has no members of class " + std::to_string(c));

  const int64_t k = ds.class_count;
  Rng proto_rng(derive_seed(cfg.seed, "proto"));
  Model proto = make_model(kBackbone, ds.channels(), ds.height(), ds.width(), k, proto_rng);
  auto proto_shapes = proto.param_shapes();

  std::vector<ExpertTrajectory> experts;
  if (cfg.method == DistillMethod::mtt) {
    for (int e = 0; e < cfg.expert_count; ++e) {
      experts.push_back(record_expert(core, ds, kBackbone, cfg.expert_total_steps,
                                      cfg.expert_snapshot_interval, cfg.expert_lr,
                                      cfg.expert_batch,
                                      derive_seed(cfg.seed, "expert-" + std::to_string(e))));
    }
  }

  std::vector<int64_t> all_rows(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) all_rows[i] = static_cast<int64_t>(i);

  Rng rng(derive_seed(cfg.seed, "loop"));
  EngineResult result;
  auto start_time = std::chrono::steady_clock::now();

  for (int64_t it = 0; it < cfg.iterations; ++it) {
    target.payload.zero_grad();
    Tensor total;

    for (int m = 0; m < cfg.models_per_iteration; ++m) {
      uint64_t model_seed = rng.next_u64();
      Tensor loss;
      switch (cfg.method) {
        case DistillMethod::dc: {
          int64_t c = it % k;
          Rng mrng(model_seed);
          Model model = make_model(kBackbone, ds.channels(), ds.height(), ds.width(), k, mrng);
          Tensor real =
              real_class_batch(ds, by_class[static_cast<size_t>(c)], cfg.batch_per_class, rng);
          std::vector<int> real_labels(static_cast<size_t>(real.dim(0)), static_cast<int>(c));
          Tensor syn = target.render(rows_for_class(labels, c));
          std::vector<int> syn_labels(static_cast<size_t>(syn.dim(0)), static_cast<int>(c));
          loss = dc_loss(syn, syn_labels, real, real_labels, model, cfg.dc_granularity);
          break;
        }
        case DistillMethod::dm: {
          Rng mrng(model_seed);
          Model model = make_model(kBackbone, ds.channels(), ds.height(), ds.width(), k, mrng);
          std::vector<Tensor> real_by_class, syn_by_class;
          for (int64_t c = 0; c < k; ++c) {
            real_by_class.push_back(real_class_batch(ds, by_class[static_cast<size_t>(c)],
                                                     cfg.batch_per_class, rng));
            syn_by_class.push_back(target.render(rows_for_class(labels, c)));
          }
          loss = dm_loss_views(syn_by_class, real_by_class, model);
          break;
        }
        case DistillMethod::mtt: {
          int64_t e = rng.next_below(static_cast<int64_t>(experts.size()));
          const ExpertTrajectory& expert = experts[static_cast<size_t>(e)];
          int64_t t = rng.next_below(expert.snapshot_count() - cfg.expert_steps);
          auto theta = split_flat(expert.snapshots[static_cast<size_t>(t)], proto_shapes,
                                  /*requires_grad=*/true);
          Tensor syn_all = target.render(all_rows);
          for (int n = 0; n < cfg.inner_steps; ++n) {
            Tensor inner = cross_entropy(forward_with(proto, theta, syn_all), labels);
            auto grads = grad_of(inner, theta, /*create_graph=*/true);
            for (size_t p = 0; p < theta.size(); ++p)
              theta[p] = sub(theta[p], mul(grads[p], cfg.inner_lr));
          }
          loss = mtt_loss(flatten_tensor_list(theta), expert, t, cfg.expert_steps);
          break;
        }
      }
      total = total.defined() ? add(total, loss) : loss;
    }
    if (cfg.models_per_iteration > 1)
      total = mul(total, 1.0 / static_cast<double>(cfg.models_per_iteration));

    double loss_val = total.item();
    if (!std::isfinite(loss_val))
      throw numeric_error("distill: non-finite loss at iteration " + std::to_string(it) + " [" +
                          cfg.dump() + "]");
    total.backward();
    apply_synthetic_step(target, cfg.synthetic_lr);

    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                  std::chrono::steady_clock::now() - start_time)
                  .count();
    result.history.push_back({it, loss_val, static_cast<int64_t>(ms)});
    if ((it + 1) % 100 == 0)
      log_debug("distill " + std::string(method_name(cfg.method)) + " iteration " +
                std::to_string(it + 1) + "/" + std::to_string(cfg.iterations) + " loss " +
                std::to_string(loss_val));
  }
  result.experts = std::move(experts);
  return result;
}

DistillResult distill_run(const CoreSet& core, const LabeledDataset& ds,
                          const DistillConfig& cfg, int64_t ipc, Provenance provenance) {
  SyntheticSet syn = init_synthetic(core, ds, ipc, cfg.init, derive_seed(cfg.seed, "init"));
  syn.lr = cfg.synthetic_lr;

  SynTarget target;
  target.payload = syn.payload;
  target.clamp01 = true;
  Tensor payload_handle = target.payload;
  target.render = [payload_handle](const std::vector<int64_t>& rows) {
    return gather_rows(payload_handle, rows);
  };

  EngineResult engine = run_distill_engine(core, ds, cfg, ipc, target, syn.labels);

  DistillResult out;
  out.history = std::move(engine.history);
  out.experts = std::move(engine.experts);
  out.container.space = SynSpace::pixel;
  out.container.class_count = ds.class_count;
  out.container.ipc = ipc;
  out.container.payload = target.payload.detach();
  out.container.labels = syn.labels;

  Provenance prov = std::move(provenance);
  prov["method"] = method_name(cfg.method);
  char rbuf[32];
  std::snprintf(rbuf, sizeof(rbuf), "%.17g", core.r);
  prov["r"] = rbuf;
  prov["mode"] = prune_mode_name(core.mode);
  prov["seed"] = std::to_string(cfg.seed);
  prov["ipc"] = std::to_string(ipc);
  prov["iterations"] = std::to_string(cfg.iterations);
  prov["dataset_hash"] = hex64(dataset_hash(ds));
  if (!core.scorer_hash.empty()) prov["scorer_hash"] = core.scorer_hash;
  if (cfg.method == DistillMethod::mtt) prov["experts_on"] = "coreset";
  out.container.provenance = std::move(prov);
  out.container.validate();
  return out;
}

void write_loss_csv(const std::vector<LossPoint>& history, const std::string& path) {
  std::ostringstream os;
  os << "iteration,loss,wall_ms\n";
  char buf[64];
  for (const auto& p : history) {
    std::snprintf(buf, sizeof(buf), "%.12g", p.loss);
    os << p.iteration << "," << buf << "," << p.wall_ms << "\n";
  }
  write_file_atomic(path, os.str());
}

void save_expert_trajectory(const ExpertTrajectory& traj, const Model& proto,
                            const std::string& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  Model scratch = proto;
  for (auto& [pname, t] : scratch.params) t = t.clone_leaf(true);

  std::ostringstream manifest;
  manifest << "expert v1 arch=" << arch_name(traj.arch) << " interval=" << traj.snapshot_interval
           << " steps=" << traj.total_steps << " lr=" << traj.lr << " batch=" << traj.batch
           << " seed=" << traj.seed << " degenerate=" << (traj.degenerate ? 1 : 0)
           << " config=" << traj.config_hash << "\n";
  for (size_t i = 0; i < traj.snapshots.size(); ++i) {
    char fname[64];
    std::snprintf(fname, sizeof(fname), "%s_snapshot_%03zu.nnc", name.c_str(), i);
    unflatten_params(scratch, traj.snapshots[i]);
    save_model(scratch, dir + "/" + fname);
    manifest << fname << "\n";
  }
  write_file_atomic(dir + "/" + name + "_manifest.txt", manifest.str());
}

}  // namespace cdstl
