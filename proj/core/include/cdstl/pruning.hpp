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

#ifndef CDSTL_PRUNING_HPP
#define CDSTL_PRUNING_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "cdstl/dataset.hpp"
#include "cdstl/model.hpp"

namespace cdstl {

enum class PruneMode { easy, hard };

const char* prune_mode_name(PruneMode m);
PruneMode prune_mode_from_name(const std::string& s);

// Per-class sample losses under a fixed scorer, sorted ascending within each
// class with ties broken by ascending sample index. The descending order is
// derived with the same tie rule (loss descending, index ascending).
struct LossRanking {
  struct Entry {
    int64_t index;
    double loss;
  };
  std::vector<std::vector<Entry>> per_class;  // ascending by (loss, index)
  std::string scorer_hash;

  std::vector<Entry> ordered(int64_t cls, PruneMode mode) const;
};

struct CoreSet {
  std::string dataset_id;
  std::vector<int64_t> kept;  // strictly increasing
  double r = 1.0;
  PruneMode mode = PruneMode::easy;
  std::string scorer_hash;
  std::vector<std::string> warnings;  // e.g. classes truncated to n=0

  std::vector<std::vector<int64_t>> kept_by_class(const LabeledDataset& ds) const;
};

// Per-sample cross-entropy under the scorer, computed one sample at a time
// (batch-size-1 semantics) so normalization can never couple samples.
// Scorer class count must match the dataset.
LossRanking score_losses(const LabeledDataset& ds, const Model& scorer);

// Keeps the first n = trunc(r * N_c) entries of each class's ranking
// (ascending losses for easy, descending for hard). trunc uses a 1e-9
// guard so that r values like 0.6 truncate by mathematical intent rather
// than by their float64 representation. r == 1.0 keeps everything.
// A class where r * N_c < 1 keeps nothing and records a warning.
CoreSet select_coreset(const LossRanking& ranking, double r, PruneMode mode);

// score_losses + select_coreset, stamping the dataset id.
CoreSet prune(const LabeledDataset& ds, const Model& scorer, double r, PruneMode mode);

// Truncation rule shared with the oracle tests.
int64_t coreset_keep_count(double r, int64_t class_size);

// Text format: header "coreset v1 r=<r> mode=<mode> scorer=<hash>", optional
// "# ..." comment lines, then one kept index per line, sorted.
void save_coreset(const CoreSet& cs, const std::string& path);
CoreSet load_coreset(const std::string& path);

}  // namespace cdstl

#endif  // CDSTL_PRUNING_HPP
