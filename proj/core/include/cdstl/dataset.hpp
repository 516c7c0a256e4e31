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

#ifndef CDSTL_DATASET_HPP
#define CDSTL_DATASET_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "cdstl/tensor.hpp"

namespace cdstl {

enum class SplitTag { train, test };

// Images in [0,1], channel-first [N,C,H,W], integer labels in [0,K).
struct LabeledDataset {
  Tensor images;
  std::vector<int> labels;
  int64_t class_count = 0;
  SplitTag split = SplitTag::train;

  int64_t size() const { return images.defined() ? images.dim(0) : 0; }
  int64_t channels() const { return images.dim(1); }
  int64_t height() const { return images.dim(2); }
  int64_t width() const { return images.dim(3); }

  // Indices of each class, in ascending sample order.
  std::vector<std::vector<int64_t>> indices_by_class() const;
  std::vector<int64_t> class_histogram() const;

  void validate() const;  // shape/label invariants
};

// Per-class split with floor(test_fraction * N_c) test samples per class.
// The two index sets are disjoint and exhaustive. Classes with fewer than
// 2 samples raise data_error.
std::pair<LabeledDataset, LabeledDataset> stratified_holdout(const LabeledDataset& ds,
                                                             double test_fraction,
                                                             uint64_t seed);

// Content hash covering images, labels and class count.
uint64_t dataset_hash(const LabeledDataset& ds);

}  // namespace cdstl

#endif  // CDSTL_DATASET_HPP
