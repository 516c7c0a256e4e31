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

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "cdstl/errors.hpp"
#include "cdstl/eval.hpp"
#include "cdstl/hash.hpp"
#include "cdstl/shapes.hpp"
#include "cdstl/svg.hpp"
#include "helpers.hpp"

using namespace cdstl;
using namespace cdstl::testing;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

// Linearly separable two-class fixture: class 0 lights the left half,
// class 1 the right half.
LabeledDataset separable_test_set(int64_t per_class) {
  LabeledDataset ds;
  ds.class_count = 2;
  std::vector<double> pix;
  Rng rng(8);
  for (int64_t i = 0; i < per_class * 2; ++i) {
    int cls = i < per_class ? 0 : 1;
    std::vector<double> img(16, 0.02 * rng.next_double());
    for (int64_t y = 0; y < 4; ++y)
      for (int64_t x = 0; x < 2; ++x)
        img[static_cast<size_t>(y * 4 + (cls == 0 ? x : x + 2))] = 0.85 + 0.1 * rng.next_double();
    pix.insert(pix.end(), img.begin(), img.end());
    ds.labels.push_back(cls);
  }
  ds.images = Tensor::from({per_class * 2, 1, 4, 4}, pix);
  ds.split = SplitTag::test;
  return ds;
}

DistilledContainer perfect_prototypes() {
  DistilledContainer c;
  c.space = SynSpace::pixel;
  c.class_count = 2;
  c.ipc = 1;
  std::vector<double> pay(2 * 16, 0.0);
  for (int64_t y = 0; y < 4; ++y)
    for (int64_t x = 0; x < 2; ++x) {
      pay[static_cast<size_t>(y * 4 + x)] = 0.9;            // class 0 prototype
      pay[static_cast<size_t>(16 + y * 4 + x + 2)] = 0.9;   // class 1 prototype
    }
  c.payload = Tensor::from({2, 1, 4, 4}, pay);
  c.labels = {0, 1};
  c.provenance = {{"method", "fixture"}, {"r", "1"}, {"mode", "easy"},
                  {"seed", "0"},         {"config_hash", "t"}};
  return c;
}

}  // namespace

TEST_CASE("forced equal per-repeat seeds give zero std and equal init hashes") {
  auto test = separable_test_set(8);
  auto proto = perfect_prototypes();
  EvalParams p;
  p.archs = {Arch::MLP};
  p.repeats = 2;
  p.epochs = 5;
  p.lr = 0.1;
  p.seed = 3;
  p.force_repeat_seed = 42;
  auto report = evaluate(proto, test, p);
  CHECK(report.per_arch[0].stddev == 0.0);
  CHECK(report.per_arch[0].accuracies[0] == report.per_arch[0].accuracies[1]);
  CHECK(report.per_arch[0].init_hashes[0] == report.per_arch[0].init_hashes[1]);
}

TEST_CASE("fresh-init guard: hashes differ across repeats by default") {
  auto test = separable_test_set(8);
  auto proto = perfect_prototypes();
  EvalParams p;
  p.archs = {Arch::MLP, Arch::LinearProbe};
  p.repeats = 3;
  p.epochs = 3;
  p.seed = 4;
  auto report = evaluate(proto, test, p);
  for (const auto& a : report.per_arch) {
    std::set<std::string> hashes(a.init_hashes.begin(), a.init_hashes.end());
    CHECK(hashes.size() == a.init_hashes.size());
  }
}

TEST_CASE("a perfect prototype pair solves the separable toy with a linear probe") {
  auto test = separable_test_set(16);
  // closed-form oracle first: the difference-of-prototypes linear classifier
  // must separate the test set, confirming separability
  auto proto = perfect_prototypes();
  {
    int64_t hw = 16;
    std::vector<double> w(static_cast<size_t>(hw));
    for (int64_t i = 0; i < hw; ++i)
      w[static_cast<size_t>(i)] = proto.payload.at(hw + i) - proto.payload.at(i);
    for (int64_t i = 0; i < test.size(); ++i) {
      double score = 0;
      for (int64_t j = 0; j < hw; ++j) score += w[static_cast<size_t>(j)] * test.images.at(i * hw + j);
      int pred = score > 0 ? 1 : 0;
      REQUIRE(pred == test.labels[static_cast<size_t>(i)]);
    }
  }
  EvalParams p;
  p.archs = {Arch::LinearProbe};
  p.repeats = 3;
  p.epochs = 60;
  p.lr = 0.2;
  p.seed = 5;
  auto report = evaluate(proto, test, p);
  CHECK(report.per_arch[0].mean == doctest::Approx(1.0));
}

TEST_CASE("random-noise distilled set stays in the chance band") {
  auto ds = make_shapes(60, 12, 16, 10, 0.2);
  ds.split = SplitTag::test;
  DistilledContainer noise;
  noise.space = SynSpace::pixel;
  noise.class_count = 10;
  noise.ipc = 1;
  Rng rng(61);
  noise.payload = Tensor::from({10, 1, 16, 16}, random_vec(rng, 10 * 256, 0.0, 1.0));
  for (int c = 0; c < 10; ++c) noise.labels.push_back(c);
  noise.provenance = {{"method", "noise"}, {"r", "1"}, {"mode", "easy"},
                      {"seed", "0"},       {"config_hash", "t"}};
  EvalParams p;
  p.archs = {Arch::MLP, Arch::LinearProbe};
  p.repeats = 5;
  p.epochs = 30;
  p.seed = 62;
  p.jobs = 2;
  auto report = evaluate(noise, ds, p);
  for (const auto& a : report.per_arch) {
    CHECK(a.mean >= 0.0);
    CHECK(a.mean <= 0.3);  // chance is 0.1
  }
}

TEST_CASE("aggregates are pure functions of the run list") {
  EvalReport r;
  r.repeats = 3;
  ArchResult a;
  a.arch = Arch::MLP;
  a.accuracies = {0.5, 0.7, 0.6};
  ArchResult b;
  b.arch = Arch::LinearProbe;
  b.accuracies = {0.4, 0.4, 0.4};
  r.per_arch = {a, b};
  r.recompute_aggregates();
  CHECK(r.per_arch[0].mean == doctest::Approx(0.6));
  CHECK(r.per_arch[0].stddev == doctest::Approx(0.1));
  CHECK(r.per_arch[1].stddev < 1e-15);  // identical runs, up to fp summation
  CHECK(r.mean_of_arch_means == doctest::Approx(0.5));
  CHECK(r.pooled_mean == doctest::Approx((0.5 + 0.7 + 0.6 + 1.2) / 6.0));
  r.validate();

  r.per_arch[0].mean = 0.9;  // corrupt a stored aggregate
  CHECK_THROWS_AS(r.validate(), validation_error);
}

TEST_CASE("evaluate rejects latent containers and class mismatches") {
  auto test = separable_test_set(4);
  auto proto = perfect_prototypes();
  EvalParams p;
  p.archs = {Arch::LinearProbe};
  p.repeats = 2;
  p.epochs = 1;

  DistilledContainer latent = proto;
  latent.space = SynSpace::latent;
  latent.provenance["decoder_hash"] = "xx";
  CHECK_THROWS_AS(evaluate(latent, test, p), validation_error);

  auto three = separable_test_set(4);
  three.class_count = 3;
  three.labels.back() = 2;
  CHECK_THROWS_AS(evaluate(proto, three, p), validation_error);
}

TEST_CASE("evaluate flags architecture/resolution mismatches as config errors") {
  auto test = separable_test_set(4);  // 4x4 images: too small for conv stacks
  auto proto = perfect_prototypes();
  EvalParams p;
  p.archs = {Arch::ConvNetDeep};
  p.repeats = 2;
  p.epochs = 1;
  CHECK_THROWS_AS(evaluate(proto, test, p), config_error);
}

TEST_CASE("default evaluation architectures exclude the backbone") {
  auto archs = default_eval_archs();
  for (Arch a : archs) CHECK(a != Arch::ConvNetS);
  CHECK(archs.size() == 3);
}

TEST_CASE("evaluate is independent of the worker count") {
  auto test = separable_test_set(8);
  auto proto = perfect_prototypes();
  EvalParams p;
  p.archs = {Arch::MLP, Arch::LinearProbe};
  p.repeats = 3;
  p.epochs = 8;
  p.seed = 77;
  p.jobs = 1;
  auto r1 = evaluate(proto, test, p);
  p.jobs = 8;
  auto r8 = evaluate(proto, test, p);
  for (size_t a = 0; a < r1.per_arch.size(); ++a)
    for (int rep = 0; rep < 3; ++rep)
      CHECK(r1.per_arch[a].accuracies[static_cast<size_t>(rep)] ==
            r8.per_arch[a].accuracies[static_cast<size_t>(rep)]);
}

TEST_CASE("compare_reports deltas and error paths") {
  EvalReport a, b;
  a.repeats = b.repeats = 2;
  a.test_hash = b.test_hash = "t1";
  ArchResult ra;
  ra.arch = Arch::MLP;
  ra.accuracies = {0.25, 0.25};
  a.per_arch = {ra};
  a.recompute_aggregates();
  ArchResult rb;
  rb.arch = Arch::MLP;
  rb.accuracies = {0.30, 0.30};
  b.per_arch = {rb};
  b.recompute_aggregates();

  SUBCASE("identical reports give zero deltas") {
    auto d = compare_reports(a, a);
    CHECK(d.rows[0].delta_mean_pp == 0.0);
    CHECK(d.overall_delta_pp == 0.0);
  }

  SUBCASE("0.30 vs 0.25 is +5 percentage points") {
    auto d = compare_reports(a, b);
    CHECK(d.rows[0].delta_mean_pp == doctest::Approx(5.0));
    CHECK(d.text.find("+5.00") != std::string::npos);
  }

  SUBCASE("mismatched test sets are rejected") {
    b.test_hash = "t2";
    CHECK_THROWS_AS(compare_reports(a, b), validation_error);
  }
}

TEST_CASE("report CSV round trip rebuilds identical aggregates") {
  auto test = separable_test_set(8);
  auto proto = perfect_prototypes();
  EvalParams p;
  p.archs = {Arch::MLP, Arch::LinearProbe};
  p.repeats = 3;
  p.epochs = 5;
  p.seed = 9;
  auto report = evaluate(proto, test, p);
  report.baseline_tag = "full";
  report.config_hash = "cfg1";

  std::string path = temp_path("cdstl_report_rt.csv");
  write_report_csv(report, path);
  auto back = read_report_csv(path);
  CHECK(back.baseline_tag == report.baseline_tag);
  CHECK(back.test_hash == report.test_hash);
  REQUIRE(back.per_arch.size() == report.per_arch.size());
  for (size_t i = 0; i < back.per_arch.size(); ++i) {
    CHECK(back.per_arch[i].arch == report.per_arch[i].arch);
    // written at 1e-6 precision
    CHECK(std::fabs(back.per_arch[i].mean - report.per_arch[i].mean) < 1e-5);
  }
  std::filesystem::remove(path);
}

TEST_CASE("single-cell sweep at r=1 equals a direct evaluation") {
  auto ds = make_shapes(70, 10, 16, 3, 0.2);
  auto [train, test] = stratified_holdout(ds, 0.25, 71);
  Rng rng(72);
  Model scorer = make_model(Arch::LinearProbe, 1, 16, 16, 3, rng);

  DistillConfig cfg;
  cfg.method = DistillMethod::dm;
  cfg.iterations = 4;
  cfg.synthetic_lr = 0.1;
  cfg.batch_per_class = 4;
  cfg.seed = 73;
  EvalParams ep;
  ep.archs = {Arch::MLP, Arch::LinearProbe};
  ep.repeats = 2;
  ep.epochs = 5;
  ep.seed = 74;

  auto sweep = sweep_r(train, test, scorer, cfg, 1, {PruneMode::easy}, {1.0}, ep, 1);
  REQUIRE(sweep.cells.size() == 1);
  CHECK(sweep.cells[0].ok);
  CHECK(sweep.reference_mean == sweep.cells[0].report.mean_of_arch_means);
  CHECK(sweep.cells[0].report.baseline_tag == "full");

  // direct route: full coreset -> distill -> evaluate with the same seeds
  CoreSet core = select_coreset(score_losses(train, scorer), 1.0, PruneMode::easy);
  core.dataset_id = hex64(dataset_hash(train));
  DistillConfig cell_cfg = cfg;
  cell_cfg.seed = derive_seed(cfg.seed, "cell-1");
  auto dr = distill_run(core, train, cell_cfg, 1);
  EvalParams cell_ep = ep;
  cell_ep.seed = derive_seed(ep.seed, "cell-1");
  auto direct = evaluate(dr.container, test, cell_ep);
  CHECK(direct.mean_of_arch_means == sweep.reference_mean);
}

TEST_CASE("failed sweep cells are recorded as missing, not fatal") {
  auto ds = make_shapes(80, 6, 16, 3, 0.2);
  auto [train, test] = stratified_holdout(ds, 0.25, 81);
  Rng rng(82);
  Model scorer = make_model(Arch::LinearProbe, 1, 16, 16, 3, rng);
  DistillConfig cfg;
  cfg.method = DistillMethod::dm;
  cfg.iterations = 2;
  cfg.synthetic_lr = 0.1;
  cfg.batch_per_class = 2;
  cfg.seed = 83;
  EvalParams ep;
  ep.archs = {Arch::LinearProbe};
  ep.repeats = 2;
  ep.epochs = 2;
  ep.seed = 84;
  // r=0.1 of 4-5 train members per class truncates to 0 kept -> the cell
  // fails (no members), but the sweep survives
  auto sweep = sweep_r(train, test, scorer, cfg, 1, {PruneMode::easy, PruneMode::hard},
                       {0.1, 1.0}, ep, 2);
  const SweepCell* bad = sweep.cell(0.1, PruneMode::easy);
  REQUIRE(bad != nullptr);
  CHECK_FALSE(bad->ok);
  CHECK_FALSE(bad->error.empty());
  const SweepCell* ref = sweep.cell(1.0, PruneMode::hard);
  REQUIRE(ref != nullptr);
  CHECK(ref->ok);
}

TEST_CASE("sweep validates its grid") {
  auto ds = make_shapes(90, 6, 16, 2, 0.2);
  auto [train, test] = stratified_holdout(ds, 0.25, 91);
  Rng rng(92);
  Model scorer = make_model(Arch::LinearProbe, 1, 16, 16, 2, rng);
  DistillConfig cfg;
  cfg.seed = 93;
  EvalParams ep;
  ep.repeats = 2;
  CHECK_THROWS_AS(sweep_r(train, test, scorer, cfg, 1, {PruneMode::easy}, {0.5}, ep, 1),
                  config_error);  // missing 1.0
  CHECK_THROWS_AS(sweep_r(train, test, scorer, cfg, 1, {PruneMode::easy}, {0.0, 1.0}, ep, 1),
                  config_error);
  CHECK_THROWS_AS(sweep_r(train, test, scorer, cfg, 1, {PruneMode::easy}, {}, ep, 1),
                  config_error);
}

TEST_CASE("sweep CSV and SVG artifacts carry the reference") {
  SweepResult sweep;
  sweep.r_values = {0.5, 1.0};
  sweep.modes = {PruneMode::easy, PruneMode::hard};
  sweep.reference_mean = 0.62;
  auto mk_cell = [](double r, PruneMode m, double mean) {
    SweepCell c;
    c.r = r;
    c.mode = m;
    c.ok = true;
    ArchResult a;
    a.arch = Arch::MLP;
    a.accuracies = {mean, mean};
    c.report.per_arch = {a};
    c.report.repeats = 2;
    c.report.recompute_aggregates();
    return c;
  };
  sweep.cells = {mk_cell(0.5, PruneMode::easy, 0.60), mk_cell(0.5, PruneMode::hard, 0.40),
                 mk_cell(1.0, PruneMode::easy, 0.62), mk_cell(1.0, PruneMode::hard, 0.62)};

  std::string csv = temp_path("cdstl_sweep.csv"), svg = temp_path("cdstl_sweep.svg");
  write_sweep_csv(sweep, csv);
  write_sweep_svg(sweep, svg);

  std::ifstream cf(csv);
  std::string content((std::istreambuf_iterator<char>(cf)), std::istreambuf_iterator<char>());
  CHECK(content.find("# reference_mean=0.620000") != std::string::npos);
  CHECK(content.find("r,mode,mean,std") != std::string::npos);
  CHECK(content.find("0.5,easy,0.600000") != std::string::npos);

  std::ifstream sf(svg);
  std::string svg_content((std::istreambuf_iterator<char>(sf)),
                          std::istreambuf_iterator<char>());
  CHECK(svg_content.find("class=\"reference\"") != std::string::npos);
  CHECK(svg_content.find("stroke-dasharray") != std::string::npos);
  CHECK(svg_content.find("relative dataset size (%)") != std::string::npos);
  CHECK(svg_content.find("accuracy (%)") != std::string::npos);
  CHECK(svg_content.find("mode-easy") != std::string::npos);
  CHECK(svg_content.find("mode-hard") != std::string::npos);
  std::filesystem::remove(csv);
  std::filesystem::remove(svg);
}
