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

#include "cdstl/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "cdstl/errors.hpp"
#include "cdstl/hash.hpp"
#include "cdstl/rng.hpp"

namespace cdstl {

std::vector<std::vector<int64_t>> LabeledDataset::indices_by_class() const {
  std::vector<std::vector<int64_t>> by_class(static_cast<size_t>(class_count));
  for (size_t i = 0; i < labels.size(); ++i)
    by_class[static_cast<size_t>(labels[i])].push_back(static_cast<int64_t>(i));
  return by_class;
}

std::vector<int64_t> LabeledDataset::class_histogram() const {
  std::vector<int64_t> h(static_cast<size_t>(class_count), 0);
  for (int y : labels) h[static_cast<size_t>(y)]++;
  return h;
}

void LabeledDataset::validate() const {
  if (!images.defined() || images.rank() != 4)
    throw data_error("dataset images must be [N,C,H,W]");
  if (images.dim(0) != static_cast<int64_t>(labels.size()))
    throw data_error("dataset: image count " + std::to_string(images.dim(0)) +
                     " != label count " + std::to_string(labels.size()));
  for (int y : labels)
    if (y < 0 || y >= class_count)
      throw data_error("dataset: label " + std::to_string(y) + " outside [0," +
                       std::to_string(class_count) + ")");
  if (split == SplitTag::train) {
    auto h = class_histogram();
    for (int64_t c = 0; c < class_count; ++c)
      if (h[static_cast<size_t>(c)] == 0)
        throw data_error("train split: class " + std::to_string(c) + " has no samples");
  }
}

std::pair<LabeledDataset, LabeledDataset> stratified_holdout(const LabeledDataset& ds,
                                                             double test_fraction,
                                                             uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 0.5))
    throw validation_error("stratified_holdout: test_fraction must be in (0, 0.5)");
  auto by_class = ds.indices_by_class();
  for (int64_t c = 0; c < ds.class_count; ++c)
    if (by_class[static_cast<size_t>(c)].size() < 2)
      throw data_error("stratified_holdout: class " + std::to_string(c) +
                       " has fewer than 2 samples");

  Rng rng(seed);
  std::vector<int64_t> train_idx, test_idx;
  for (int64_t c = 0; c < ds.class_count; ++c) {
    auto& members = by_class[static_cast<size_t>(c)];
    int64_t n_c = static_cast<int64_t>(members.size());
    int64_t n_test = static_cast<int64_t>(std::floor(test_fraction * static_cast<double>(n_c)));
    auto perm = rng.permutation(n_c);
    for (int64_t i = 0; i < n_c; ++i) {
      int64_t sample = members[static_cast<size_t>(perm[static_cast<size_t>(i)])];
      (i < n_test ? test_idx : train_idx).push_back(sample);
    }
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());

  auto build = [&ds](const std::vector<int64_t>& idx, SplitTag tag) {
    LabeledDataset out;
    NoGradGuard ng;
    out.images = gather_rows(ds.images, idx);
    out.labels.reserve(idx.size());
    for (auto i : idx) out.labels.push_back(ds.labels[static_cast<size_t>(i)]);
    out.class_count = ds.class_count;
    out.split = tag;
    return out;
  };
  return {build(train_idx, SplitTag::train), build(test_idx, SplitTag::test)};
}

uint64_t dataset_hash(const LabeledDataset& ds) {
  uint64_t h = fnv1a64(ds.images.raw().data(), ds.images.raw().size() * sizeof(double));
  h = fnv1a64(ds.labels.data(), ds.labels.size() * sizeof(int), h);
  uint64_t k = static_cast<uint64_t>(ds.class_count);
  return fnv1a64(&k, sizeof(k), h);
}

}  // namespace cdstl
