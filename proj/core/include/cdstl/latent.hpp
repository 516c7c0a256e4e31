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

#ifndef CDSTL_LATENT_HPP
#define CDSTL_LATENT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "cdstl/dataset.hpp"
#include "cdstl/distill.hpp"

namespace cdstl {

// Frozen generative decoder: latent codes [d,h',w'] -> images [C,4h',4w']
// via a dense layer and two stride-2 transposed-conv stages with a sigmoid
// output, so decoded pixels always land in (0,1). Parameters never receive
// gradients once the decoder is built.
struct Decoder {
  std::vector<std::pair<std::string, Tensor>> params;  // frozen
  int64_t latent_d = 4, latent_h = 4, latent_w = 4;
  int64_t out_c = 1;
  int64_t hidden1 = 32, hidden2 = 16;

  int64_t out_h() const { return latent_h * 4; }
  int64_t out_w() const { return latent_w * 4; }
  int64_t latent_elems() const { return latent_d * latent_h * latent_w; }
  int64_t pixel_elems() const { return out_c * out_h() * out_w(); }
};

// Latent codes under optimization; codes are not clamped (the decoder's
// sigmoid bounds the pixels instead).
struct LatentSet {
  Tensor codes;  // [M,d,h',w'], leaf, requires_grad
  std::vector<int> labels;
  int64_t class_count = 0;
  int64_t ipc = 0;
  std::string decoder_hash;
};

// Randomly initialized decoder ("random-init" prior). Enforces strict latent
// compression: min_compression * latent elements <= pixel elements.
Decoder make_decoder(int64_t latent_d, int64_t latent_h, int64_t latent_w, int64_t out_c,
                     uint64_t seed, double min_compression = 4.0);

// Autoencoder-style reconstruction pretraining; the paired encoder is
// discarded and the decoder comes back frozen. Reconstruction MSE of the
// final epoch is written to *final_mse when non-null. Training divergence
// (non-finite loss) raises numeric_error.
Decoder pretrain_decoder(const LabeledDataset& ds, int epochs, double lr, int64_t batch,
                         uint64_t seed, int64_t latent_d, double min_compression = 4.0,
                         double* final_mse = nullptr);

// Differentiable w.r.t. codes only; outputs in (0,1).
Tensor decode(const Decoder& dec, const Tensor& codes);

// Mean squared reconstruction error of the decoder's best-effort codes is
// not defined without the encoder; this helper scores decode(codes) against
// images directly (used by tests and pretraining diagnostics).
double reconstruction_mse(const Decoder& dec, const Tensor& codes, const Tensor& images);

uint64_t decoder_param_hash(const Decoder& dec);

// NNC1 container with architecture id 4 and a trailing "latent.meta" tensor
// carrying {d, h, w, hidden1, hidden2, out_c}.
void save_decoder(const Decoder& dec, const std::string& path);
Decoder load_decoder(const std::string& path);

LatentSet init_latent(int64_t class_count, int64_t ipc, const Decoder& dec, uint64_t seed);

struct LatentDistillResult {
  DistilledContainer codes;     // space = latent
  DistilledContainer rendered;  // companion pixel container, decode(codes)
  std::vector<LossPoint> history;
  std::vector<ExpertTrajectory> experts;  // recorded for MTT runs
};

// Same loop as distill_run, but gradients flow through the frozen decoder
// into the codes. Emits the latent container plus a rendered pixel container
// equal to decode(codes) at save time.
LatentDistillResult distill_latent_run(const CoreSet& core, const LabeledDataset& ds,
                                       const DistillConfig& cfg, int64_t ipc,
                                       const Decoder& dec, Provenance provenance = {});

}  // namespace cdstl

#endif  // CDSTL_LATENT_HPP
