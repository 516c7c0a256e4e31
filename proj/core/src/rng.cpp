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

#include "cdstl/rng.hpp"

#include <cmath>
#include <numeric>

#include "cdstl/errors.hpp"
#include "cdstl/hash.hpp"

namespace cdstl {

uint64_t Rng::next_u64() {
  uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::next_gaussian() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  // Box-Muller; u1 shifted away from 0 so log is finite.
  double u1 = next_double();
  double u2 = next_double();
  if (u1 < 1e-300) u1 = 1e-300;
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * M_PI * u2;
  cached_ = r * std::sin(theta);
  has_cached_ = true;
  return r * std::cos(theta);
}

int64_t Rng::next_below(int64_t n) {
  if (n <= 0) throw usage_error("Rng::next_below requires n > 0");
  // Lemire's multiply-shift rejection method: unbiased and deterministic.
  uint64_t bound = static_cast<uint64_t>(n);
  uint64_t threshold = (0ULL - bound) % bound;
  for (;;) {
    uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * bound;
    if (static_cast<uint64_t>(m) >= threshold) return static_cast<int64_t>(m >> 64);
  }
}

std::vector<int64_t> Rng::permutation(int64_t n) {
  std::vector<int64_t> p(static_cast<size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  for (int64_t i = n - 1; i > 0; --i) {
    int64_t j = next_below(i + 1);
    std::swap(p[static_cast<size_t>(i)], p[static_cast<size_t>(j)]);
  }
  return p;
}

std::vector<int64_t> Rng::sample_without_replacement(int64_t n, int64_t k) {
  if (k > n) throw usage_error("sample_without_replacement: k > n");
  auto p = permutation(n);
  p.resize(static_cast<size_t>(k));
  return p;
}

uint64_t derive_seed(uint64_t root_seed, std::string_view label) {
  Rng mixer(root_seed ^ fnv1a64(label));
  return mixer.next_u64();
}

}  // namespace cdstl
