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

#include <benchmark/benchmark.h>

#include "cdstl/distill.hpp"
#include "cdstl/model.hpp"
#include "cdstl/pruning.hpp"
#include "cdstl/rng.hpp"
#include "cdstl/shapes.hpp"
#include "cdstl/tensor.hpp"

using namespace cdstl;

namespace {

Tensor random_batch(int64_t b, int64_t res, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(static_cast<size_t>(b * res * res));
  for (auto& x : v) x = rng.next_double();
  return Tensor::from({b, 1, res, res}, std::move(v));
}

void bench_matmul(benchmark::State& state) {
  int64_t n = state.range(0);
  Rng rng(1);
  std::vector<double> a(static_cast<size_t>(n * n)), b(static_cast<size_t>(n * n));
  for (auto& x : a) x = rng.next_double();
  for (auto& x : b) x = rng.next_double();
  Tensor ta = Tensor::from({n, n}, a), tb = Tensor::from({n, n}, b);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(ta, tb));
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(bench_matmul)->Arg(64)->Arg(128)->Arg(256);

void bench_convnet_forward(benchmark::State& state) {
  int64_t batch = state.range(0);
  Rng rng(2);
  Model m = make_model(Arch::ConvNetS, 1, 16, 16, 4, rng);
  Tensor x = random_batch(batch, 16, 3);
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(forward(m, x));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(bench_convnet_forward)->Arg(1)->Arg(16)->Arg(64);

void bench_convnet_train_step(benchmark::State& state) {
  int64_t batch = state.range(0);
  Rng rng(4);
  Model m = make_model(Arch::ConvNetS, 1, 16, 16, 4, rng);
  Tensor x = random_batch(batch, 16, 5);
  std::vector<int> labels(static_cast<size_t>(batch));
  for (size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 4);
  for (auto _ : state) {
    zero_grads(m);
    Tensor loss = cross_entropy(forward(m, x), labels);
    loss.backward();
    sgd_step(m, 0.01);
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(bench_convnet_train_step)->Arg(16)->Arg(64);

void bench_dc_loss(benchmark::State& state) {
  Rng rng(6);
  Model m = make_model(Arch::ConvNetS, 1, 16, 16, 4, rng);
  Tensor syn = random_batch(4, 16, 7);
  Tensor real = random_batch(16, 16, 8);
  std::vector<int> sl = {0, 1, 2, 3};
  std::vector<int> rl(16);
  for (size_t i = 0; i < rl.size(); ++i) rl[i] = static_cast<int>(i % 4);
  for (auto _ : state) benchmark::DoNotOptimize(dc_loss(syn, sl, real, rl, m));
}
BENCHMARK(bench_dc_loss);

void bench_dm_iteration(benchmark::State& state) {
  Rng rng(9);
  Model m = make_model(Arch::ConvNetS, 1, 16, 16, 4, rng);
  std::vector<Tensor> real, syn;
  for (int c = 0; c < 4; ++c) {
    real.push_back(random_batch(16, 16, 10 + static_cast<uint64_t>(c)));
    syn.push_back(random_batch(1, 16, 20 + static_cast<uint64_t>(c)));
  }
  for (auto _ : state) benchmark::DoNotOptimize(dm_loss_views(syn, real, m));
}
BENCHMARK(bench_dm_iteration);

void bench_shapes_render(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(make_shapes(1, 10, 16, 4, 0.3));
  state.SetItemsProcessed(state.iterations() * 40);
}
BENCHMARK(bench_shapes_render);

void bench_score_losses(benchmark::State& state) {
  auto ds = make_shapes(2, 25, 16, 4, 0.3);
  Rng rng(11);
  Model scorer = make_model(Arch::ConvNetS, 1, 16, 16, 4, rng);
  for (auto _ : state) benchmark::DoNotOptimize(score_losses(ds, scorer));
  state.SetItemsProcessed(state.iterations() * ds.size());
}
BENCHMARK(bench_score_losses);

}  // namespace

BENCHMARK_MAIN();
