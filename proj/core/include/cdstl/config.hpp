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

#ifndef CDSTL_CONFIG_HPP
#define CDSTL_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "cdstl/distill.hpp"
#include "cdstl/eval.hpp"

namespace cdstl {

// Flat key-value experiment config with fixed sections. Serialization is
// canonical (fixed section and key order), so the config hash is a stable
// digest and parse -> serialize -> parse is the identity.
//
// All randomness flows from dataset.seed (the root seed) through the
// stage-keyed derivation derive_seed(root, "<stage>"): stages "shapes",
// "holdout", "scorer", "distill", "decoder", "eval".
struct ExperimentConfig {
  struct Dataset {
    std::string source = "shapes";  // shapes | idx
    uint64_t seed = 1;              // root seed for the whole experiment
    int64_t classes = 4;
    int64_t per_class = 200;
    int resolution = 16;
    double noise = 0.30;
    double test_fraction = 0.25;
    std::string images, labels;            // idx source paths
    std::string test_images, test_labels;  // optional idx test split

    // class count when known up front (shapes); 0 means infer from data
    int64_t known_classes() const { return source == "shapes" ? classes : 0; }
  } dataset;

  struct Scorer {
    std::string arch = "convnet_deep";
    int epochs = 10;
    int64_t batch = 16;
    double lr = 0.15;
  } scorer;

  struct Prune {
    double r = 0.6;
    std::string mode = "easy";
  } prune;

  struct Distill {
    std::string method = "dm";
    std::string space = "pixel";  // pixel | latent
    int64_t ipc = 1;
    int iterations = 500;
    std::string synthetic_lr = "auto";  // auto -> per-method default
    int inner_steps = 4;
    int expert_steps = 2;
    int models_per_iteration = 1;
    int64_t batch_per_class = 16;
    std::string init = "real-sample";  // real-sample | noise
    std::string dc_granularity = "global";
    double inner_lr = 0.02;
    int expert_total_steps = 60;
    int expert_snapshot_interval = 10;
    double expert_lr = 0.05;
    int64_t expert_batch = 32;
    int expert_count = 3;
  } distill;

  struct Latent {
    int64_t latent_d = 4;
    int decoder_epochs = 20;
    double decoder_lr = 0.1;
    int64_t decoder_batch = 64;
    std::string decoder_mode = "pretrained";  // pretrained | random-init
    double min_compression = 4.0;
  } latent;

  struct Eval {
    std::string archs = "convnet_deep,mlp,linear_probe";
    int repeats = 5;
    int epochs = 200;
    int64_t batch = 32;
    double lr = 0.1;
  } eval;

  struct Sweep {
    std::string grid = "coarse";  // coarse | fine
  } sweep;

  struct Output {
    std::string dir = "out";
  } output;

  std::string serialize() const;
  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::string& path);

  // Digest of the canonical serialization minus the [output] section, so an
  // experiment keeps its identity wherever its artifacts land.
  uint64_t config_hash() const;
  std::string config_hash_hex() const;

  void validate() const;

  // typed views
  DistillConfig distill_config() const;       // seed = derive(root, "distill")
  EvalParams eval_params(int jobs) const;     // seed = derive(root, "eval")
  std::vector<Arch> eval_arch_list() const;
  std::vector<double> grid_values(const std::string& grid_name) const;
  double resolved_synthetic_lr() const;       // "auto" -> per-method default
};

}  // namespace cdstl

#endif  // CDSTL_CONFIG_HPP
