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

#ifndef CDSTL_RNG_HPP
#define CDSTL_RNG_HPP

#include <cstdint>
#include <string_view>
#include <vector>

namespace cdstl {

// splitmix64 PRNG. Constants are the reference ones
// (0x9E3779B97F4A7C15 / 0xBF58476D1CE4E5B9 / 0x94D049BB133111EB), so the
// stream for a given seed is identical on every platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64();

  // uniform in [0, 1), 53-bit mantissa
  double next_double();

  // standard normal via Box-Muller (pairs cached)
  double next_gaussian();

  // uniform integer in [0, n)
  int64_t next_below(int64_t n);

  // Fisher-Yates permutation of 0..n-1
  std::vector<int64_t> permutation(int64_t n);

  // k distinct values from 0..n-1, in draw order
  std::vector<int64_t> sample_without_replacement(int64_t n, int64_t k);

 private:
  uint64_t state_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

// Stage-keyed seed derivation: every pipeline stage draws its seed as
// derive_seed(root_seed, "<stage-name>"), so stages are individually
// reproducible from the one root seed.
uint64_t derive_seed(uint64_t root_seed, std::string_view label);

}  // namespace cdstl

#endif  // CDSTL_RNG_HPP
