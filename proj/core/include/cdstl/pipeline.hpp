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

#ifndef CDSTL_PIPELINE_HPP
#define CDSTL_PIPELINE_HPP

#include <string>

#include "cdstl/config.hpp"
#include "cdstl/eval.hpp"

namespace cdstl {

// Artifact layout inside the output directory. Binary formats that cannot
// embed provenance (IDX, NNC1) get a "<file>.prov" sidecar with key=value
// lines; DST1 containers and CSV reports embed their provenance directly.
struct ArtifactPaths {
  std::string out;

  std::string train_images() const { return out + "/train-images.idx"; }
  std::string train_labels() const { return out + "/train-labels.idx"; }
  std::string test_images() const { return out + "/test-images.idx"; }
  std::string test_labels() const { return out + "/test-labels.idx"; }
  std::string dataset_prov() const { return out + "/dataset.prov"; }
  std::string scorer() const { return out + "/scorer.nnc"; }
  std::string scorer_prov() const { return out + "/scorer.nnc.prov"; }
  std::string coreset() const { return out + "/coreset.txt"; }
  std::string distilled() const { return out + "/distilled.dst"; }
  std::string rendered() const { return out + "/rendered.dst"; }
  std::string losses() const { return out + "/losses.csv"; }
  std::string decoder() const { return out + "/decoder.nnc"; }
  std::string decoder_prov() const { return out + "/decoder.nnc.prov"; }
  std::string experts_dir() const { return out + "/experts"; }
  std::string report() const { return out + "/report.csv"; }
  std::string sweep_csv() const { return out + "/sweep.csv"; }
  std::string sweep_svg() const { return out + "/sweep.svg"; }
  std::string cells_dir() const { return out + "/cells"; }
};

struct StageContext {
  ExperimentConfig cfg;
  std::string out_dir;  // cfg.output.dir unless overridden
  int jobs = 1;

  ArtifactPaths paths() const { return ArtifactPaths{out_dir}; }
};

// Stages; each one reads only persisted artifacts of the prior stage, so the
// chain equals the monolithic run byte for byte (wall-clock columns aside).
// Artifact-hash mismatches between stages raise integrity_error.
void stage_make_data(const StageContext& ctx);
void stage_train_scorer(const StageContext& ctx);
void stage_prune(const StageContext& ctx);
void stage_distill(const StageContext& ctx);
void stage_eval(const StageContext& ctx);
void stage_sweep(const StageContext& ctx, const std::string& grid_override = "");

// make-data -> train-scorer -> prune -> distill -> eval.
void run_all(const StageContext& ctx);

// Reads two report CSVs, prints the sign-coded delta table, writes it next
// to `out_path` when non-empty, and returns it.
DeltaTable stage_compare(const std::string& report_a, const std::string& report_b,
                         const std::string& out_path);

// Loaders shared by stages and tests.
LabeledDataset load_train_split(const ArtifactPaths& p, int64_t classes);
LabeledDataset load_test_split(const ArtifactPaths& p, int64_t classes);

}  // namespace cdstl

#endif  // CDSTL_PIPELINE_HPP
