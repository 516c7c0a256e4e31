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

#include "cdstl/errors.hpp"
#include "cdstl/rng.hpp"
#include "cdstl/tensor.hpp"
#include "helpers.hpp"

using namespace cdstl;
using namespace cdstl::testing;

TEST_CASE("backward of x^2 at x=3 gives 6") {
  Tensor x = Tensor::leaf({}, {3.0}, true);
  Tensor y = mul(x, x);
  y.backward();
  CHECK(x.grad().item() == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("relu subgradient at negative input is 0") {
  Tensor x = Tensor::leaf({2}, {-1.0, 2.0}, true);
  Tensor y = sum(relu(x));
  y.backward();
  CHECK(x.grad().at(0) == 0.0);
  CHECK(x.grad().at(1) == 1.0);
}

TEST_CASE("relu derivative at exactly 0 is 0") {
  Tensor x = Tensor::leaf({1}, {0.0}, true);
  sum(relu(x)).backward();
  CHECK(x.grad().at(0) == 0.0);
}

TEST_CASE("repeated backward without reset accumulates") {
  Tensor x = Tensor::leaf({}, {2.0}, true);
  Tensor y = mul(x, x);
  y.backward();
  y.backward();
  CHECK(x.grad().item() == doctest::Approx(8.0));
  x.zero_grad();
  mul(x, x).backward();
  CHECK(x.grad().item() == doctest::Approx(4.0));
}

TEST_CASE("backward on a non-scalar is a usage error") {
  Tensor x = Tensor::leaf({2}, {1.0, 2.0}, true);
  Tensor y = mul(x, x);
  CHECK_THROWS_AS(y.backward(), usage_error);
}

TEST_CASE("second derivatives through grad_of(create_graph)") {
  // f(x) = x^3: f' = 3x^2, f'' = 6x
  Tensor x = Tensor::leaf({}, {1.7}, true);
  Tensor f = mul(mul(x, x), x);
  auto g1 = grad_of(f, {x}, /*create_graph=*/true);
  CHECK(g1[0].item() == doctest::Approx(3.0 * 1.7 * 1.7).epsilon(1e-12));
  auto g2 = grad_of(g1[0], {x}, false);
  CHECK(g2[0].item() == doctest::Approx(6.0 * 1.7).epsilon(1e-12));
}

TEST_CASE("grad_of returns zeros for unreachable tensors") {
  Tensor x = Tensor::leaf({2}, {1.0, 2.0}, true);
  Tensor z = Tensor::leaf({2}, {5.0, 5.0}, true);
  Tensor f = sum(mul(x, x));
  auto g = grad_of(f, {z}, false);
  CHECK(g[0].at(0) == 0.0);
  CHECK(g[0].at(1) == 0.0);
}

TEST_CASE("broadcasting add/mul with sum_to backward") {
  Tensor a = Tensor::leaf({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tensor b = Tensor::leaf({1, 3}, {10, 20, 30}, true);
  Tensor y = sum(mul(add(a, b), 2.0));
  y.backward();
  for (int i = 0; i < 6; ++i) CHECK(a.grad().at(i) == doctest::Approx(2.0));
  for (int i = 0; i < 3; ++i) CHECK(b.grad().at(i) == doctest::Approx(4.0));
}

TEST_CASE("matmul against a hand-rolled oracle") {
  Rng rng(7);
  int64_t m = 3, k = 4, n = 2;
  auto av = random_vec(rng, m * k);
  auto bv = random_vec(rng, k * n);
  Tensor a = Tensor::from({m, k}, av);
  Tensor b = Tensor::from({k, n}, bv);
  Tensor c = matmul(a, b);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0;
      for (int64_t p = 0; p < k; ++p) acc += av[i * k + p] * bv[p * n + j];
      CHECK(c.at(i * n + j) == doctest::Approx(acc).epsilon(1e-14));
    }
}

TEST_CASE("cross_entropy uniform logits equals ln(K)") {
  Tensor logits = Tensor::zeros({1, 10});
  double loss = cross_entropy(logits, {3}).item();
  CHECK(loss == doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("cross_entropy of a huge correct logit tends to 0") {
  std::vector<double> v(10, 0.0);
  v[0] = 1e9;
  Tensor logits = Tensor::from({1, 10}, v);
  CHECK(cross_entropy(logits, {0}).item() < 1e-6);
}

TEST_CASE("cross_entropy matches direct summation oracle") {
  Rng rng(11);
  int64_t b = 4, k = 3;
  auto v = random_vec(rng, b * k, -2.0, 2.0);
  std::vector<int> labels = {0, 2, 1, 2};
  Tensor logits = Tensor::from({b, k}, v);
  double got = cross_entropy(logits, labels).item();

  // oracle: -(1/B) sum_i log softmax(logits_i)[y_i], direct formula
  double want = 0.0;
  for (int64_t i = 0; i < b; ++i) {
    double denom = 0.0;
    for (int64_t j = 0; j < k; ++j) denom += std::exp(v[i * k + j]);
    want += -std::log(std::exp(v[i * k + labels[i]]) / denom);
  }
  want /= static_cast<double>(b);
  CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("cross_entropy shift invariance") {
  Rng rng(13);
  auto v = random_vec(rng, 4 * 5, -3.0, 3.0);
  std::vector<int> labels = {1, 0, 4, 2};
  Tensor logits = Tensor::from({4, 5}, v);
  double base = cross_entropy(logits, labels).item();
  for (double c : {-1000.0, -1.0, 0.5, 1e6}) {
    double shifted = cross_entropy(add(logits, c), labels).item();
    CHECK(std::fabs(shifted - base) < 1e-10);
  }
}

TEST_CASE("cross_entropy rejects out-of-range labels") {
  Tensor logits = Tensor::zeros({2, 3});
  CHECK_THROWS_AS(cross_entropy(logits, {0, 3}), validation_error);
  CHECK_THROWS_AS(cross_entropy(logits, {-1, 0}), validation_error);
}

TEST_CASE("concat/slice gradients route to the right parts") {
  Tensor a = Tensor::leaf({2}, {1.0, 2.0}, true);
  Tensor b = Tensor::leaf({3}, {3.0, 4.0, 5.0}, true);
  Tensor cat = concat0({a, b});
  CHECK(cat.numel() == 5);
  Tensor y = sum(mul(slice0(cat, 1, 3), 3.0));  // touches a[1], b[0], b[1]
  y.backward();
  CHECK(a.grad().at(0) == 0.0);
  CHECK(a.grad().at(1) == 3.0);
  CHECK(b.grad().at(0) == 3.0);
  CHECK(b.grad().at(1) == 3.0);
  CHECK(b.grad().at(2) == 0.0);
}

namespace {

// Generic FD check: builds y = f(x) as a scalar from one leaf tensor.
double fd_check(const std::function<Tensor(const Tensor&)>& f, const Shape& shape,
                std::vector<double> x0, double eps = 1e-5) {
  Tensor x = Tensor::leaf(shape, x0, true);
  Tensor y = f(x);
  auto ad = grad_of(y, {x}, false);
  auto fd = fd_grad(
      [&](const std::vector<double>& v) {
        NoGradGuard ng;
        Tensor xx = Tensor::from(shape, v);
        return f(xx).item();
      },
      x0, eps);
  return max_rel_err(ad[0].raw(), fd);
}

}  // namespace

TEST_CASE("finite differences: elementwise chains") {
  Rng rng(5);
  for (int rep = 0; rep < 5; ++rep) {
    auto x0 = random_vec(rng, 6, 0.2, 2.0);
    double err = fd_check(
        [](const Tensor& x) { return sum(mul(log(x), exp(div(x, 3.0)))); }, {2, 3}, x0);
    CHECK(err < 1e-7);
  }
}

TEST_CASE("finite differences: sqrt/pow/sigmoid") {
  Rng rng(6);
  auto x0 = random_vec(rng, 8, 0.5, 2.0);
  CHECK(fd_check([](const Tensor& x) { return sum(sqrt(x)); }, {8}, x0) < 1e-7);
  CHECK(fd_check([](const Tensor& x) { return sum(pow_scalar(x, 2.5)); }, {8}, x0) < 1e-7);
  CHECK(fd_check([](const Tensor& x) { return sum(sigmoid(x)); }, {8}, x0) < 1e-7);
}

TEST_CASE("finite differences: conv path via im2col") {
  Rng rng(17);
  ConvGeom g{2, 3, 4, 4, 3, 3, 1, 1};
  auto x0 = random_vec(rng, 2 * 3 * 4 * 4);
  double err = fd_check(
      [&](const Tensor& x) {
        Tensor cols = im2col(x, g);
        return sum(mul(cols, cols));
      },
      {2, 3, 4, 4}, x0);
  CHECK(err < 1e-7);
}

TEST_CASE("finite differences: conv2d w.r.t. input and weight") {
  Rng rng(19);
  Shape xs{2, 2, 4, 4}, ws{3, 2, 3, 3};
  auto x0 = random_vec(rng, numel_of(xs));
  auto w0 = random_vec(rng, numel_of(ws));
  Tensor w_const = Tensor::from(ws, w0);
  Tensor x_const = Tensor::from(xs, x0);
  Tensor bias = Tensor::from({3}, {0.1, -0.2, 0.3});

  double ex = fd_check(
      [&](const Tensor& x) { return sq_norm(conv2d(x, w_const, bias, 1, 1)); }, xs, x0);
  CHECK(ex < 1e-6);

  double ew = fd_check(
      [&](const Tensor& w) { return sq_norm(conv2d(x_const, w, bias, 1, 1)); }, ws, w0);
  CHECK(ew < 1e-6);
}

TEST_CASE("finite differences: conv_transpose2") {
  Rng rng(23);
  Shape xs{1, 3, 2, 2}, ws{3, 2 * 4 * 4};
  auto x0 = random_vec(rng, numel_of(xs));
  auto w0 = random_vec(rng, numel_of(ws));
  Tensor w_const = Tensor::from(ws, w0);
  Tensor bias = Tensor::from({2}, {0.05, -0.05});
  double err = fd_check(
      [&](const Tensor& x) { return sq_norm(conv_transpose2(x, w_const, bias, 4, 2, 1)); },
      xs, x0);
  CHECK(err < 1e-6);
  Tensor x_const = Tensor::from(xs, x0);
  double ew = fd_check(
      [&](const Tensor& w) { return sq_norm(conv_transpose2(x_const, w, bias, 4, 2, 1)); },
      ws, w0);
  CHECK(ew < 1e-6);
}

TEST_CASE("conv_transpose2 doubles the spatial size") {
  Tensor x = Tensor::zeros({1, 2, 4, 4});
  Tensor w = Tensor::zeros({2, 3 * 4 * 4});
  Tensor y = conv_transpose2(x, w, Tensor(), 4, 2, 1);
  CHECK(y.shape() == Shape{1, 3, 8, 8});
}

TEST_CASE("finite differences: group_norm") {
  Rng rng(29);
  Shape xs{2, 4, 3, 3};
  auto x0 = random_vec(rng, numel_of(xs));
  Tensor gamma = Tensor::from({4}, {1.0, 1.1, 0.9, 1.2});
  Tensor beta = Tensor::from({4}, {0.0, 0.1, -0.1, 0.2});
  double err = fd_check(
      [&](const Tensor& x) {
        return sq_norm(group_norm(x, 2, gamma, beta, 1e-5));
      },
      xs, x0, 1e-6);
  CHECK(err < 1e-6);
}

TEST_CASE("finite differences: avg_pool2") {
  Rng rng(31);
  Shape xs{2, 2, 4, 4};
  auto x0 = random_vec(rng, numel_of(xs));
  double err = fd_check([](const Tensor& x) { return sq_norm(avg_pool2(x)); }, xs, x0);
  CHECK(err < 1e-7);
}

TEST_CASE("finite differences: cross_entropy w.r.t. logits") {
  Rng rng(37);
  Shape ls{3, 4};
  auto l0 = random_vec(rng, numel_of(ls), -2.0, 2.0);
  std::vector<int> labels = {1, 3, 0};
  double err = fd_check(
      [&](const Tensor& logits) { return cross_entropy(logits, labels); }, ls, l0);
  CHECK(err < 1e-8);
}

TEST_CASE("double backward through a gradient norm") {
  // phi(x) = || d/dw [ (w*x)^2 ] ||^2 = (2*w*x*x)^2; d phi/dx known in closed form
  Tensor w = Tensor::leaf({}, {1.5}, true);
  Tensor x = Tensor::leaf({}, {0.8}, true);
  Tensor y = mul(mul(w, x), mul(w, x));
  auto gw = grad_of(y, {w}, true);
  Tensor phi = mul(gw[0], gw[0]);
  auto gx = grad_of(phi, {x}, false);
  // phi = (2 w x^2)^2 = 4 w^2 x^4; dphi/dx = 16 w^2 x^3
  CHECK(gx[0].item() == doctest::Approx(16.0 * 1.5 * 1.5 * 0.8 * 0.8 * 0.8).epsilon(1e-12));
}

TEST_CASE("rng determinism and uniformity basics") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(42);
  double mn = 1.0, mx = 0.0;
  for (int i = 0; i < 1000; ++i) {
    double v = c.next_double();
    mn = std::min(mn, v);
    mx = std::max(mx, v);
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }
  CHECK(mn < 0.1);
  CHECK(mx > 0.9);
  auto p = Rng(3).permutation(10);
  std::vector<char> seen(10, 0);
  for (auto i : p) seen[static_cast<size_t>(i)] = 1;
  for (char s : seen) CHECK(s == 1);
}

TEST_CASE("derive_seed differs per stage label") {
  uint64_t root = 99;
  CHECK(derive_seed(root, "scorer") != derive_seed(root, "distill"));
  CHECK(derive_seed(root, "scorer") == derive_seed(root, "scorer"));
}
