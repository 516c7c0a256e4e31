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

#include "cdstl/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cdstl/binio.hpp"
#include "cdstl/errors.hpp"
#include "cdstl/hash.hpp"

namespace cdstl {

const char* prune_mode_name(PruneMode m) { return m == PruneMode::easy ? "easy" : "hard"; }

PruneMode prune_mode_from_name(const std::string& s) {
  if (s == "easy") return PruneMode::easy;
  if (s == "hard") return PruneMode::hard;
  throw config_error("unknown prune mode: " + s);
}

std::vector<LossRanking::Entry> LossRanking::ordered(int64_t cls, PruneMode mode) const {
  auto entries = per_class.at(static_cast<size_t>(cls));  // ascending already
  if (mode == PruneMode::hard) {
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      if (a.loss != b.loss) return a.loss > b.loss;
      return a.index < b.index;
    });
  }
  return entries;
}

std::vector<std::vector<int64_t>> CoreSet::kept_by_class(const LabeledDataset& ds) const {
  std::vector<std::vector<int64_t>> by_class(static_cast<size_t>(ds.class_count));
  for (auto i : kept)
    by_class[static_cast<size_t>(ds.labels[static_cast<size_t>(i)])].push_back(i);
  return by_class;
}

LossRanking score_losses(const LabeledDataset& ds, const Model& scorer) {
  if (num_classes(scorer) != ds.class_count)
    throw config_error("score_losses: scorer has " + std::to_string(num_classes(scorer)) +
                       " classes, dataset has " + std::to_string(ds.class_count));
  NoGradGuard ng;
  LossRanking ranking;
  ranking.per_class.resize(static_cast<size_t>(ds.class_count));
  int64_t n = ds.size();
  for (int64_t i = 0; i < n; ++i) {
    Tensor x = gather_rows(ds.images, {i});
    int y = ds.labels[static_cast<size_t>(i)];
    double loss = cross_entropy(forward(scorer, x), {y}).item();
    ranking.per_class[static_cast<size_t>(y)].push_back({i, loss});
  }
  for (auto& cls : ranking.per_class) {
    std::sort(cls.begin(), cls.end(), [](const LossRanking::Entry& a, const LossRanking::Entry& b) {
      if (a.loss != b.loss) return a.loss < b.loss;
      return a.index < b.index;
    });
  }
  ranking.scorer_hash = hex64(model_param_hash(scorer));
  return ranking;
}

int64_t coreset_keep_count(double r, int64_t class_size) {
  if (r == 1.0) return class_size;
  // trunc(r * N_c) with an epsilon guard against float64 representation of r
  return static_cast<int64_t>(std::floor(r * static_cast<double>(class_size) + 1e-9));
}

CoreSet select_coreset(const LossRanking& ranking, double r, PruneMode mode) {
  if (!(r > 0.0 && r <= 1.0))
    throw validation_error("select_coreset: r must be in (0,1], got " + std::to_string(r));
  CoreSet cs;
  cs.r = r;
  cs.mode = mode;
  cs.scorer_hash = ranking.scorer_hash;
  for (size_t c = 0; c < ranking.per_class.size(); ++c) {
    auto order = ranking.ordered(static_cast<int64_t>(c), mode);
    int64_t n = coreset_keep_count(r, static_cast<int64_t>(order.size()));
    if (n == 0 && !order.empty())
      cs.warnings.push_back("class " + std::to_string(c) + " kept 0 of " +
                            std::to_string(order.size()) + " samples (r too small)");
    for (int64_t i = 0; i < n; ++i) cs.kept.push_back(order[static_cast<size_t>(i)].index);
  }
  std::sort(cs.kept.begin(), cs.kept.end());
  return cs;
}

CoreSet prune(const LabeledDataset& ds, const Model& scorer, double r, PruneMode mode) {
  LossRanking ranking = score_losses(ds, scorer);
  CoreSet cs = select_coreset(ranking, r, mode);
  cs.dataset_id = hex64(dataset_hash(ds));
  return cs;
}

void save_coreset(const CoreSet& cs, const std::string& path) {
  std::ostringstream os;
  char rbuf[32];
  std::snprintf(rbuf, sizeof(rbuf), "%.17g", cs.r);
  os << "coreset v1 r=" << rbuf << " mode=" << prune_mode_name(cs.mode)
     << " scorer=" << cs.scorer_hash << "\n";
  if (!cs.dataset_id.empty()) os << "# dataset=" << cs.dataset_id << "\n";
  for (const auto& w : cs.warnings) os << "# warning: " << w << "\n";
  for (auto i : cs.kept) os << i << "\n";
  write_file_atomic(path, os.str());
}

CoreSet load_coreset(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw io_error("cannot open core-set file: " + path);
  std::string header;
  std::getline(f, header);
  CoreSet cs;
  {
    std::istringstream hs(header);
    std::string tag, version, kv;
    hs >> tag >> version;
    if (tag != "coreset" || version != "v1")
      throw format_error("core-set " + path + ": bad header '" + header + "'");
    while (hs >> kv) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) throw format_error("core-set " + path + ": bad token " + kv);
      std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
      if (key == "r") cs.r = std::stod(value);
      else if (key == "mode") cs.mode = prune_mode_from_name(value);
      else if (key == "scorer") cs.scorer_hash = value;
      else throw format_error("core-set " + path + ": unknown header key " + key);
    }
  }
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# dataset=", 0) == 0) cs.dataset_id = line.substr(10);
      else if (line.rfind("# warning: ", 0) == 0) cs.warnings.push_back(line.substr(11));
      continue;
    }
    cs.kept.push_back(std::stoll(line));
  }
  if (!std::is_sorted(cs.kept.begin(), cs.kept.end()))
    throw format_error("core-set " + path + ": indices are not sorted");
  return cs;
}

}  // namespace cdstl
