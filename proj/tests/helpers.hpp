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

#ifndef CDSTL_TESTS_HELPERS_HPP
#define CDSTL_TESTS_HELPERS_HPP

#include <cmath>
#include <functional>
#include <vector>

#include "cdstl/rng.hpp"
#include "cdstl/tensor.hpp"

namespace cdstl::testing {

// Central finite differences, eps = 1e-5 unless stated otherwise.
inline std::vector<double> fd_grad(const std::function<double(const std::vector<double>&)>& f,
                                   std::vector<double> x, double eps = 1e-5) {
  std::vector<double> g(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    double orig = x[i];
    x[i] = orig + eps;
    double up = f(x);
    x[i] = orig - eps;
    double down = f(x);
    x[i] = orig;
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

// Relative error with an absolute floor of 1 so tiny gradients are compared
// absolutely: max_i |a-b| / max(1, |b|).
inline double max_rel_err(const std::vector<double>& ad, const std::vector<double>& fd) {
  double worst = 0.0;
  for (size_t i = 0; i < ad.size(); ++i) {
    double denom = std::max(1.0, std::fabs(fd[i]));
    worst = std::max(worst, std::fabs(ad[i] - fd[i]) / denom);
  }
  return worst;
}

inline std::vector<double> random_vec(cdstl::Rng& rng, int64_t n, double lo = -1.0,
                                      double hi = 1.0) {
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = lo + (hi - lo) * rng.next_double();
  return v;
}

// Random values bounded away from zero, for kink-free relu finite differences.
inline std::vector<double> random_vec_away_from_zero(cdstl::Rng& rng, int64_t n,
                                                     double margin = 1e-3) {
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) {
    double m = rng.next_double() * (1.0 - margin) + margin;
    x = rng.next_double() < 0.5 ? -m : m;
  }
  return v;
}

inline cdstl::Tensor random_leaf(cdstl::Rng& rng, cdstl::Shape shape, bool requires_grad,
                                 double lo = -1.0, double hi = 1.0) {
  auto n = cdstl::numel_of(shape);
  return cdstl::Tensor::leaf(std::move(shape), random_vec(rng, n, lo, hi), requires_grad);
}

}  // namespace cdstl::testing

#endif  // CDSTL_TESTS_HELPERS_HPP
