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

#include "cdstl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cdstl/binio.hpp"
#include "cdstl/errors.hpp"
#include "cdstl/hash.hpp"
#include "cdstl/log.hpp"
#include "cdstl/parallel.hpp"

namespace cdstl {

namespace {

constexpr Arch kBackbone = Arch::ConvNetS;

double sample_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = sample_mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

}  // namespace

std::vector<Arch> default_eval_archs() {
  return {Arch::ConvNetDeep, Arch::MLP, Arch::LinearProbe};
}

void EvalReport::recompute_aggregates() {
  std::vector<double> arch_means;
  std::vector<double> pooled;
  for (auto& a : per_arch) {
    a.mean = sample_mean(a.accuracies);
    a.stddev = sample_std(a.accuracies);
    arch_means.push_back(a.mean);
    pooled.insert(pooled.end(), a.accuracies.begin(), a.accuracies.end());
  }
  mean_of_arch_means = sample_mean(arch_means);
  std_across_archs = sample_std(arch_means);
  pooled_mean = sample_mean(pooled);
  pooled_std = sample_std(pooled);
}

void EvalReport::validate() const {
  if (repeats < 2) throw validation_error("eval report: repeats must be >= 2");
  for (const auto& a : per_arch) {
    if (static_cast<int>(a.accuracies.size()) != repeats)
      throw validation_error("eval report: run count != repeats");
    for (double acc : a.accuracies)
      if (!(acc >= 0.0 && acc <= 1.0))
        throw validation_error("eval report: accuracy outside [0,1]");
    if (std::fabs(a.mean - sample_mean(a.accuracies)) > 1e-12 ||
        std::fabs(a.stddev - sample_std(a.accuracies)) > 1e-12)
      throw validation_error("eval report: stored aggregates do not match runs");
  }
}

EvalReport evaluate(const DistilledContainer& container, const LabeledDataset& test,
                    const EvalParams& params) {
  container.validate();
  if (container.space != SynSpace::pixel)
    throw validation_error("evaluate: latent containers must be rendered to pixels first");
  if (container.class_count != test.class_count)
    throw validation_error("evaluate: container classes (" +
                           std::to_string(container.class_count) + ") != test classes (" +
                           std::to_string(test.class_count) + ")");
  if (params.repeats < 2) throw config_error("evaluate: repeats must be >= 2");
  if (params.epochs < 1) throw config_error("evaluate: epochs must be >= 1");

  std::vector<Arch> archs = params.archs.empty() ? default_eval_archs() : params.archs;
  for (Arch a : archs) {
    // architecture/resolution compatibility, reported as a config error
    int div = a == Arch::ConvNetDeep ? 8 : (a == Arch::ConvNetS ? 4 : 1);
    if (test.height() % div != 0 || test.width() % div != 0 || test.height() < div)
      throw config_error(std::string("evaluate: ") + arch_name(a) +
                         " is incompatible with resolution " + std::to_string(test.height()) +
                         "x" + std::to_string(test.width()));
  }

  const Tensor& syn_images = container.payload;
  const std::vector<int>& syn_labels = container.labels;
  int64_t train_batch = std::min<int64_t>(params.batch, syn_images.dim(0));

  struct Cell {
    double accuracy = 0.0;
    std::string init_hash;
  };
  int64_t n_arch = static_cast<int64_t>(archs.size());
  int64_t n_jobs = n_arch * params.repeats;
  std::vector<Cell> cells(static_cast<size_t>(n_jobs));

  run_jobs(params.jobs, n_jobs, [&](int64_t j) {
    int64_t ai = j / params.repeats;
    int64_t rep = j % params.repeats;
    Arch arch = archs[static_cast<size_t>(ai)];
    uint64_t job_seed =
        params.force_repeat_seed
            ? derive_seed(*params.force_repeat_seed, arch_name(arch))
            : derive_seed(params.seed,
                          std::string("eval-") + arch_name(arch) + "-" + std::to_string(rep));
    Rng rng(job_seed);
    Model model = make_model(arch, test.channels(), test.height(), test.width(),
                             test.class_count, rng);
    Cell cell;
    cell.init_hash = hex64(model_param_hash(model));
    Rng train_rng(derive_seed(job_seed, "train"));
    train_epochs(model, syn_images, syn_labels, params.epochs, train_batch, params.lr,
                 train_rng);
    cell.accuracy = accuracy(model, test.images, test.labels);
    cells[static_cast<size_t>(j)] = std::move(cell);
  });

  EvalReport report;
  report.repeats = params.repeats;
  for (int64_t ai = 0; ai < n_arch; ++ai) {
    ArchResult ar;
    ar.arch = archs[static_cast<size_t>(ai)];
    for (int64_t rep = 0; rep < params.repeats; ++rep) {
      const Cell& cell = cells[static_cast<size_t>(ai * params.repeats + rep)];
      ar.accuracies.push_back(cell.accuracy);
      ar.init_hashes.push_back(cell.init_hash);
    }
    report.per_arch.push_back(std::move(ar));
  }
  report.recompute_aggregates();
  auto container_bytes = encode_distilled(container);
  report.container_hash = hex64(fnv1a64(container_bytes.data(), container_bytes.size()));
  report.test_hash = hex64(dataset_hash(test));
  return report;
}

const SweepCell* SweepResult::cell(double r, PruneMode mode) const {
  for (const auto& c : cells)
    if (c.r == r && c.mode == mode) return &c;
  return nullptr;
}

SweepResult sweep_r(const LabeledDataset& train, const LabeledDataset& test,
                    const Model& scorer, const DistillConfig& cfg, int64_t ipc,
                    const std::vector<PruneMode>& modes, std::vector<double> r_values,
                    const EvalParams& eval_params, int jobs) {
  std::sort(r_values.begin(), r_values.end());
  if (r_values.empty() || r_values.front() <= 0.0 || r_values.back() > 1.0)
    throw config_error("sweep_r: r values must lie in (0,1]");
  if (r_values.back() != 1.0)
    throw config_error("sweep_r: the grid must include r=1.0 (the reference)");
  for (size_t i = 1; i < r_values.size(); ++i)
    if (r_values[i] == r_values[i - 1]) throw config_error("sweep_r: duplicate r value");

  LossRanking ranking = score_losses(train, scorer);

  SweepResult sweep;
  sweep.r_values = r_values;
  sweep.modes = modes;
  sweep.cells.resize(r_values.size() * modes.size());

  auto run_cell = [&](double r, PruneMode mode) -> EvalReport {
    CoreSet core = select_coreset(ranking, r, mode);
    core.dataset_id = hex64(dataset_hash(train));
    DistillConfig cell_cfg = cfg;
    cell_cfg.seed = derive_seed(cfg.seed, "cell-" + fmt(r, "%.17g"));
    DistillResult dr = distill_run(core, train, cell_cfg, ipc);
    EvalParams ep = eval_params;
    ep.seed = derive_seed(eval_params.seed, "cell-" + fmt(r, "%.17g"));
    ep.jobs = 1;  // cells are already parallel
    EvalReport report = evaluate(dr.container, test, ep);
    report.baseline_tag = r == 1.0 ? "full"
                                   : (mode == PruneMode::easy ? "pruned-easy" : "pruned-hard");
    return report;
  };

  // Reference first (r=1.0 keeps everything in either mode, so one run is
  // reused for both mode rows and the reference line).
  sweep.reference = run_cell(1.0, PruneMode::easy);
  sweep.reference.baseline_tag = "full";
  sweep.reference_mean = sweep.reference.mean_of_arch_means;

  struct Job {
    size_t cell_index;
    double r;
    PruneMode mode;
  };
  std::vector<Job> work;
  for (size_t ri = 0; ri < r_values.size(); ++ri) {
    for (size_t mi = 0; mi < modes.size(); ++mi) {
      size_t idx = ri * modes.size() + mi;
      SweepCell& cell = sweep.cells[idx];
      cell.r = r_values[ri];
      cell.mode = modes[mi];
      if (r_values[ri] == 1.0) {
        cell.ok = true;
        cell.report = sweep.reference;
      } else {
        work.push_back({idx, r_values[ri], modes[mi]});
      }
    }
  }

  run_jobs(jobs, static_cast<int64_t>(work.size()), [&](int64_t wi) {
    const Job& job = work[static_cast<size_t>(wi)];
    SweepCell& cell = sweep.cells[job.cell_index];
    try {
      cell.report = run_cell(job.r, job.mode);
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.error = e.what();
      log_error("sweep cell r=" + fmt(job.r, "%.3g") + " mode=" + prune_mode_name(job.mode) +
                " failed: " + cell.error);
    }
  });
  return sweep;
}

DeltaTable compare_reports(const EvalReport& a, const EvalReport& b) {
  if (a.per_arch.size() != b.per_arch.size())
    throw validation_error("compare_reports: architecture lists differ");
  for (size_t i = 0; i < a.per_arch.size(); ++i)
    if (a.per_arch[i].arch != b.per_arch[i].arch)
      throw validation_error("compare_reports: architecture lists differ");
  if (a.test_hash != b.test_hash)
    throw validation_error("compare_reports: test sets differ (" + a.test_hash + " vs " +
                           b.test_hash + ")");

  DeltaTable table;
  std::ostringstream os;
  for (size_t i = 0; i < a.per_arch.size(); ++i) {
    DeltaRow row;
    row.arch = a.per_arch[i].arch;
    row.delta_mean_pp = (b.per_arch[i].mean - a.per_arch[i].mean) * 100.0;
    row.delta_std_pp = (b.per_arch[i].stddev - a.per_arch[i].stddev) * 100.0;
    table.rows.push_back(row);
    os << arch_name(row.arch) << ": " << (row.delta_mean_pp >= 0 ? "+" : "")
       << fmt(row.delta_mean_pp, "%.2f") << " p.p. (std " << (row.delta_std_pp >= 0 ? "+" : "")
       << fmt(row.delta_std_pp, "%.2f") << ")\n";
  }
  table.overall_delta_pp = (b.mean_of_arch_means - a.mean_of_arch_means) * 100.0;
  os << "overall: " << (table.overall_delta_pp >= 0 ? "+" : "")
     << fmt(table.overall_delta_pp, "%.2f") << " p.p.\n";
  table.text = os.str();
  return table;
}

void write_report_csv(const EvalReport& report, const std::string& path) {
  std::ostringstream os;
  os << "# cdstl report v1\n";
  os << "# baseline=" << report.baseline_tag << " repeats=" << report.repeats
     << " container=" << report.container_hash << " testset=" << report.test_hash
     << " config=" << report.config_hash << "\n";
  os << "arch,repeat,accuracy\n";
  for (const auto& a : report.per_arch)
    for (size_t rep = 0; rep < a.accuracies.size(); ++rep)
      os << arch_name(a.arch) << "," << rep << "," << fmt(a.accuracies[rep]) << "\n";
  os << "arch,mean,std\n";
  for (const auto& a : report.per_arch)
    os << arch_name(a.arch) << "," << fmt(a.mean) << "," << fmt(a.stddev) << "\n";
  os << "overall_by_arch," << fmt(report.mean_of_arch_means) << ","
     << fmt(report.std_across_archs) << "\n";
  os << "overall_pooled," << fmt(report.pooled_mean) << "," << fmt(report.pooled_std) << "\n";
  write_file_atomic(path, os.str());
}

EvalReport read_report_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw io_error("cannot open report: " + path);
  EvalReport report;
  std::string line;
  bool in_raw = false;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string kv;
      while (hs >> kv) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
        if (key == "baseline") report.baseline_tag = value;
        else if (key == "repeats") report.repeats = std::stoi(value);
        else if (key == "container") report.container_hash = value;
        else if (key == "testset") report.test_hash = value;
        else if (key == "config") report.config_hash = value;
      }
      continue;
    }
    if (line == "arch,repeat,accuracy") {
      in_raw = true;
      continue;
    }
    if (line == "arch,mean,std") {
      in_raw = false;
      continue;
    }
    std::istringstream ls(line);
    std::string arch_s, second, third;
    std::getline(ls, arch_s, ',');
    std::getline(ls, second, ',');
    std::getline(ls, third, ',');
    if (in_raw) {
      Arch arch = arch_from_name(arch_s);
      if (report.per_arch.empty() || report.per_arch.back().arch != arch) {
        ArchResult ar;
        ar.arch = arch;
        report.per_arch.push_back(ar);
      }
      report.per_arch.back().accuracies.push_back(std::stod(third));
    }
    // summary rows are recomputed below
  }
  report.recompute_aggregates();
  return report;
}

void write_sweep_csv(const SweepResult& sweep, const std::string& path) {
  std::ostringstream os;
  os << "# cdstl sweep v1\n";
  os << "# reference_mean=" << fmt(sweep.reference_mean) << "\n";
  os << "r,mode,mean,std\n";
  for (const auto& cell : sweep.cells) {
    os << fmt(cell.r, "%.6g") << "," << prune_mode_name(cell.mode) << ",";
    if (cell.ok)
      os << fmt(cell.report.mean_of_arch_means) << "," << fmt(cell.report.std_across_archs);
    else
      os << ",";
    os << "\n";
  }
  write_file_atomic(path, os.str());
}

void write_delta_csv(const DeltaTable& delta, const std::string& path) {
  std::ostringstream os;
  os << "arch,delta_mean_pp,delta_std_pp\n";
  for (const auto& row : delta.rows)
    os << arch_name(row.arch) << "," << (row.delta_mean_pp >= 0 ? "+" : "")
       << fmt(row.delta_mean_pp, "%.4f") << "," << (row.delta_std_pp >= 0 ? "+" : "")
       << fmt(row.delta_std_pp, "%.4f") << "\n";
  os << "overall," << (delta.overall_delta_pp >= 0 ? "+" : "")
     << fmt(delta.overall_delta_pp, "%.4f") << ",\n";
  write_file_atomic(path, os.str());
}

}  // namespace cdstl
