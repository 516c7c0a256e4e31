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

#include "cdstl/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "cdstl/binio.hpp"
#include "cdstl/errors.hpp"
#include "cdstl/hash.hpp"
#include "cdstl/idx.hpp"
#include "cdstl/latent.hpp"
#include "cdstl/log.hpp"
#include "cdstl/shapes.hpp"
#include "cdstl/svg.hpp"

namespace cdstl {

namespace {

void write_prov(const std::string& path, const std::map<std::string, std::string>& kv) {
  std::ostringstream os;
  for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
  write_file_atomic(path, os.str());
}

std::map<std::string, std::string> read_prov(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw io_error("cannot open provenance sidecar: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(f, line)) {
    auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

void require_file(const std::string& path, const std::string& produced_by) {
  if (!std::filesystem::exists(path))
    throw data_error("missing artifact " + path + " (run " + produced_by + " first)");
}

void check_upstream(const std::map<std::string, std::string>& prov, const std::string& key,
                    const std::string& actual, const std::string& what) {
  auto it = prov.find(key);
  if (it == prov.end()) return;
  if (it->second != actual)
    throw integrity_error(what + ": artifact hash mismatch (" + key + " recorded " + it->second +
                          ", found " + actual + ")");
}

std::string dataset_pair_hash(const std::string& images_path, const std::string& labels_path) {
  uint64_t h = hash_file(images_path);
  return hex64(h ^ (hash_file(labels_path) * 0x9e3779b97f4a7c15ULL));
}

}  // namespace

LabeledDataset load_train_split(const ArtifactPaths& p, int64_t classes) {
  auto ds = load_idx(p.train_images(), p.train_labels());
  if (classes > 0) ds.class_count = classes;
  ds.split = SplitTag::train;
  ds.validate();
  return ds;
}

LabeledDataset load_test_split(const ArtifactPaths& p, int64_t classes) {
  auto ds = load_idx(p.test_images(), p.test_labels());
  if (classes > 0) ds.class_count = classes;
  ds.split = SplitTag::test;
  ds.validate();
  return ds;
}

void stage_make_data(const StageContext& ctx) {
  const auto& cfg = ctx.cfg;
  ArtifactPaths p = ctx.paths();
  std::filesystem::create_directories(ctx.out_dir);

  LabeledDataset full;
  if (cfg.dataset.source == "shapes") {
    full = make_shapes(derive_seed(cfg.dataset.seed, "shapes"), cfg.dataset.per_class,
                       cfg.dataset.resolution, cfg.dataset.classes, cfg.dataset.noise);
  } else {
    full = load_idx(cfg.dataset.images, cfg.dataset.labels);
  }

  LabeledDataset train, test;
  if (cfg.dataset.source == "idx" && !cfg.dataset.test_images.empty()) {
    train = std::move(full);
    test = load_idx(cfg.dataset.test_images, cfg.dataset.test_labels);
    test.split = SplitTag::test;
    if (test.class_count < train.class_count) test.class_count = train.class_count;
  } else {
    auto split = stratified_holdout(full, cfg.dataset.test_fraction,
                                    derive_seed(cfg.dataset.seed, "holdout"));
    train = std::move(split.first);
    test = std::move(split.second);
  }
  train.validate();
  test.validate();

  save_idx(train, p.train_images(), p.train_labels());
  save_idx(test, p.test_images(), p.test_labels());
  write_prov(p.dataset_prov(),
             {{"config", cfg.config_hash_hex()},
              {"classes", std::to_string(train.class_count)},
              {"train", dataset_pair_hash(p.train_images(), p.train_labels())},
              {"test", dataset_pair_hash(p.test_images(), p.test_labels())},
              {"train_content", hex64(dataset_hash(train))},
              {"test_content", hex64(dataset_hash(test))}});
  log_info("make-data: train " + std::to_string(train.size()) + ", test " +
           std::to_string(test.size()) + " samples");
}

void stage_train_scorer(const StageContext& ctx) {
  const auto& cfg = ctx.cfg;
  ArtifactPaths p = ctx.paths();
  require_file(p.train_images(), "make-data");

  LabeledDataset train = load_train_split(p, cfg.dataset.known_classes());
  Rng rng(derive_seed(cfg.dataset.seed, "scorer"));
  Model scorer = make_model(arch_from_name(cfg.scorer.arch), train.channels(), train.height(),
                            train.width(), train.class_count, rng);
  Rng train_rng(derive_seed(cfg.dataset.seed, "scorer-train"));
  double final_loss = train_epochs(scorer, train.images, train.labels, cfg.scorer.epochs,
                                   cfg.scorer.batch, cfg.scorer.lr, train_rng);
  double train_acc = accuracy(scorer, train.images, train.labels);
  save_model(scorer, p.scorer());
  write_prov(p.scorer_prov(), {{"config", cfg.config_hash_hex()},
                               {"dataset", hex64(dataset_hash(train))},
                               {"params", hex64(model_param_hash(scorer))},
                               {"final_loss", std::to_string(final_loss)},
                               {"train_accuracy", std::to_string(train_acc)}});
  log_info("train-scorer: final loss " + std::to_string(final_loss) + ", train accuracy " +
           std::to_string(train_acc));
}

void stage_prune(const StageContext& ctx) {
  const auto& cfg = ctx.cfg;
  ArtifactPaths p = ctx.paths();
  require_file(p.train_images(), "make-data");
  require_file(p.scorer(), "train-scorer");

  LabeledDataset train = load_train_split(p, cfg.dataset.known_classes());
  Model scorer = load_model(p.scorer());
  auto sprov = read_prov(p.scorer_prov());
  check_upstream(sprov, "dataset", hex64(dataset_hash(train)), "prune");

  CoreSet cs = prune(train, scorer, cfg.prune.r, prune_mode_from_name(cfg.prune.mode));
  save_coreset(cs, p.coreset());
  log_info("prune: kept " + std::to_string(cs.kept.size()) + " of " +
           std::to_string(train.size()) + " samples (r=" + std::to_string(cfg.prune.r) +
           ", " + cfg.prune.mode + ")");
}

void stage_distill(const StageContext& ctx) {
  const auto& cfg = ctx.cfg;
  ArtifactPaths p = ctx.paths();
  require_file(p.train_images(), "make-data");
  require_file(p.coreset(), "prune");

  LabeledDataset train = load_train_split(p, cfg.dataset.known_classes());
  CoreSet core = load_coreset(p.coreset());
  if (!core.dataset_id.empty() && core.dataset_id != hex64(dataset_hash(train)))
    throw integrity_error("distill: core-set was built for dataset " + core.dataset_id +
                          ", found " + hex64(dataset_hash(train)));

  DistillConfig dcfg = cfg.distill_config();
  Provenance prov;
  prov["config_hash"] = cfg.config_hash_hex();
  prov["coreset_file"] = hash_file_hex(p.coreset());

  if (cfg.distill.space == "pixel") {
    DistillResult result = distill_run(core, train, dcfg, cfg.distill.ipc, prov);
    save_distilled(result.container, p.distilled());
    write_loss_csv(result.history, p.losses());
    if (!result.experts.empty()) {
      Rng proto_rng(derive_seed(dcfg.seed, "proto"));
      Model proto = make_model(Arch::ConvNetS, train.channels(), train.height(), train.width(),
                               train.class_count, proto_rng);
      for (size_t e = 0; e < result.experts.size(); ++e)
        save_expert_trajectory(result.experts[e], proto, p.experts_dir(),
                               "expert" + std::to_string(e));
    }
  } else {
    Decoder dec;
    double recon = 0.0;
    if (cfg.latent.decoder_mode == "pretrained") {
      dec = pretrain_decoder(train, cfg.latent.decoder_epochs, cfg.latent.decoder_lr,
                             cfg.latent.decoder_batch, derive_seed(cfg.dataset.seed, "decoder"),
                             cfg.latent.latent_d, cfg.latent.min_compression, &recon);
    } else {
      dec = make_decoder(cfg.latent.latent_d, train.height() / 4, train.width() / 4,
                         train.channels(), derive_seed(cfg.dataset.seed, "decoder"),
                         cfg.latent.min_compression);
    }
    save_decoder(dec, p.decoder());
    write_prov(p.decoder_prov(), {{"config", cfg.config_hash_hex()},
                                  {"params", hex64(decoder_param_hash(dec))},
                                  {"mode", cfg.latent.decoder_mode},
                                  {"reconstruction_mse", std::to_string(recon)}});
    LatentDistillResult result = distill_latent_run(core, train, dcfg, cfg.distill.ipc, dec, prov);
    save_distilled(result.codes, p.distilled());
    save_distilled(result.rendered, p.rendered());
    write_loss_csv(result.history, p.losses());
    if (!result.experts.empty()) {
      Rng proto_rng(derive_seed(dcfg.seed, "proto"));
      Model proto = make_model(Arch::ConvNetS, train.channels(), train.height(), train.width(),
                               train.class_count, proto_rng);
      for (size_t e = 0; e < result.experts.size(); ++e)
        save_expert_trajectory(result.experts[e], proto, p.experts_dir(),
                               "expert" + std::to_string(e));
    }
  }
  log_info("distill: wrote " + p.distilled());
}

void stage_eval(const StageContext& ctx) {
  const auto& cfg = ctx.cfg;
  ArtifactPaths p = ctx.paths();
  require_file(p.test_images(), "make-data");
  require_file(p.distilled(), "distill");

  LabeledDataset test = load_test_split(p, cfg.dataset.known_classes());
  DistilledContainer container = load_distilled(p.distilled());
  if (container.space == SynSpace::latent) {
    require_file(p.rendered(), "distill");
    DistilledContainer rendered = load_distilled(p.rendered());
    auto it = container.provenance.find("decoder_hash");
    auto rt = rendered.provenance.find("decoder_hash");
    if (it == container.provenance.end() || rt == rendered.provenance.end() ||
        it->second != rt->second)
      throw integrity_error("eval: rendered container does not match the latent codes");
    container = std::move(rendered);
  }

  EvalParams params = cfg.eval_params(ctx.jobs);
  EvalReport report = evaluate(container, test, params);
  report.config_hash = cfg.config_hash_hex();
  report.baseline_tag = cfg.prune.r == 1.0
                            ? "full"
                            : (cfg.prune.mode == "easy" ? "pruned-easy" : "pruned-hard");
  write_report_csv(report, p.report());
  log_info("eval: overall mean accuracy " + std::to_string(report.mean_of_arch_means));
}

void stage_sweep(const StageContext& ctx, const std::string& grid_override) {
  const auto& cfg = ctx.cfg;
  ArtifactPaths p = ctx.paths();
  require_file(p.train_images(), "make-data");
  require_file(p.scorer(), "train-scorer");

  LabeledDataset train = load_train_split(p, cfg.dataset.known_classes());
  LabeledDataset test = load_test_split(p, cfg.dataset.known_classes());
  Model scorer = load_model(p.scorer());
  auto sprov = read_prov(p.scorer_prov());
  check_upstream(sprov, "dataset", hex64(dataset_hash(train)), "sweep");

  std::string grid = grid_override.empty() ? cfg.sweep.grid : grid_override;
  auto r_values = cfg.grid_values(grid);

  DistillConfig dcfg = cfg.distill_config();
  EvalParams eval_params = cfg.eval_params(1);
  SweepResult sweep =
      sweep_r(train, test, scorer, dcfg, cfg.distill.ipc,
              {PruneMode::easy, PruneMode::hard}, r_values, eval_params, ctx.jobs);

  write_sweep_csv(sweep, p.sweep_csv());
  write_sweep_svg(sweep, p.sweep_svg());
  std::filesystem::create_directories(p.cells_dir());
  for (const auto& cell : sweep.cells) {
    if (!cell.ok) continue;
    char name[64];
    std::snprintf(name, sizeof(name), "report_r%03d_%s.csv",
                  static_cast<int>(cell.r * 100.0 + 0.5), prune_mode_name(cell.mode));
    EvalReport rep = cell.report;
    rep.config_hash = cfg.config_hash_hex();
    write_report_csv(rep, p.cells_dir() + "/" + name);
  }
  log_info("sweep: wrote " + p.sweep_csv() + " and " + p.sweep_svg());
}

void run_all(const StageContext& ctx) {
  stage_make_data(ctx);
  stage_train_scorer(ctx);
  stage_prune(ctx);
  stage_distill(ctx);
  stage_eval(ctx);
}

DeltaTable stage_compare(const std::string& report_a, const std::string& report_b,
                         const std::string& out_path) {
  EvalReport a = read_report_csv(report_a);
  EvalReport b = read_report_csv(report_b);
  DeltaTable delta = compare_reports(a, b);
  std::cout << delta.text;
  if (!out_path.empty()) write_delta_csv(delta, out_path);
  return delta;
}

}  // namespace cdstl
