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

// cdstl: core-set selection + dataset distillation pipeline.
//
// Subcommands mirror the pipeline stages; `run` chains them all. Every stage
// works off artifacts persisted by the previous one, so any prefix of the
// chain can be re-run in isolation and still produce byte-identical outputs.
//
// Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure, 5 I/O.

#include <CLI11.hpp>
#include <iostream>

#include "cdstl/errors.hpp"
#include "cdstl/log.hpp"
#include "cdstl/pipeline.hpp"

namespace {

struct GlobalOpts {
  std::string config_path;
  std::string out_dir;
  uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 1;
  std::string grid;
};

cdstl::StageContext make_context(const GlobalOpts& opts) {
  if (opts.config_path.empty()) throw cdstl::config_error("--config is required");
  cdstl::StageContext ctx;
  ctx.cfg = cdstl::ExperimentConfig::load(opts.config_path);
  if (opts.seed_set) ctx.cfg.dataset.seed = opts.seed;
  ctx.out_dir = opts.out_dir.empty() ? ctx.cfg.output.dir : opts.out_dir;
  if (ctx.out_dir.empty()) throw cdstl::config_error("output dir is empty");
  ctx.jobs = opts.jobs;
  if (ctx.jobs < 1) throw cdstl::config_error("--jobs must be >= 1");
  return ctx;
}

int dispatch(const std::string& command, const GlobalOpts& opts,
             const std::string& compare_a, const std::string& compare_b) {
  using namespace cdstl;
  if (command == "compare") {
    std::string out = opts.out_dir.empty() ? "" : opts.out_dir + "/delta.csv";
    stage_compare(compare_a, compare_b, out);
    return 0;
  }
  StageContext ctx = make_context(opts);
  if (command == "run") run_all(ctx);
  else if (command == "make-data") stage_make_data(ctx);
  else if (command == "train-scorer") stage_train_scorer(ctx);
  else if (command == "prune") stage_prune(ctx);
  else if (command == "distill") stage_distill(ctx);
  else if (command == "eval") stage_eval(ctx);
  else if (command == "sweep") stage_sweep(ctx, opts.grid);
  else throw config_error("unknown command: " + command);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"core-set pruning + dataset distillation pipeline"};
  app.require_subcommand(1);

  GlobalOpts opts;
  std::string compare_a, compare_b;

  auto add_common = [&opts](CLI::App* cmd, bool needs_config) {
    auto* c = cmd->add_option("--config", opts.config_path, "experiment config file");
    if (needs_config) c->required();
    cmd->add_option("--out", opts.out_dir, "output directory (overrides config)");
    cmd->add_option("--seed", opts.seed, "root seed (overrides config)")
        ->each([&opts](const std::string&) { opts.seed_set = true; });
    cmd->add_option("--jobs", opts.jobs, "worker cap for independent jobs")
        ->check(CLI::PositiveNumber);
  };

  for (const char* name : {"run", "make-data", "train-scorer", "prune", "distill", "eval"})
    add_common(app.add_subcommand(name), true);

  auto* sweep_cmd = app.add_subcommand("sweep", "pruning-ratio sweep (easy + hard curves)");
  add_common(sweep_cmd, true);
  sweep_cmd->add_option("--grid", opts.grid, "r grid: coarse or fine")
      ->check(CLI::IsMember({"coarse", "fine"}));

  auto* compare_cmd = app.add_subcommand("compare", "delta table between two report CSVs");
  compare_cmd->add_option("report_a", compare_a, "baseline report CSV")->required();
  compare_cmd->add_option("report_b", compare_b, "candidate report CSV")->required();
  compare_cmd->add_option("--out", opts.out_dir, "directory for delta.csv");

  CLI11_PARSE(app, argc, argv);

  std::string command = app.get_subcommands().front()->get_name();
  try {
    return dispatch(command, opts, compare_a, compare_b);
  } catch (const cdstl::config_error& e) {
    cdstl::log_error(std::string("config error: ") + e.what());
    return 2;
  } catch (const cdstl::numeric_error& e) {
    cdstl::log_error(std::string("numeric failure: ") + e.what());
    return 4;
  } catch (const cdstl::io_error& e) {
    cdstl::log_error(std::string("io error: ") + e.what());
    return 5;
  } catch (const cdstl::data_error& e) {
    cdstl::log_error(std::string("data error: ") + e.what());
    return 3;
  } catch (const std::exception& e) {
    cdstl::log_error(e.what());
    return 1;
  }
}
