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

#ifndef CDSTL_DISTILLED_HPP
#define CDSTL_DISTILLED_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cdstl/tensor.hpp"

namespace cdstl {

enum class SynSpace : uint8_t { pixel = 0, latent = 1 };

// Provenance travels with every container as a canonical (key-sorted) JSON
// object of string values: method, r, mode, seed, config_hash, plus upstream
// artifact hashes (dataset_hash, coreset_hash, decoder_hash for latent, ...).
using Provenance = std::map<std::string, std::string>;

std::string provenance_to_json(const Provenance& p);
Provenance provenance_from_json(const std::string& json);

struct DistilledContainer {
  SynSpace space = SynSpace::pixel;
  int64_t class_count = 0;
  int64_t ipc = 0;
  Tensor payload;           // [M,C,H,W] pixels or [M,d,h,w] latent codes
  std::vector<int> labels;  // exactly ipc copies of each class, class-major
  Provenance provenance;

  int64_t synthetic_count() const { return class_count * ipc; }
  void validate() const;
};

// DST1 file: magic "DST1", u8 space, u16 K, u16 ipc, u8 rank + u32 dims,
// float64 LE payload, u16 x M labels, length-prefixed (u32) provenance JSON,
// trailing CRC32 of all prior bytes. Everything little-endian.
void save_distilled(const DistilledContainer& c, const std::string& path);
DistilledContainer load_distilled(const std::string& path);

// In-memory encoding (exactly the file bytes); used for size and hash checks.
std::vector<uint8_t> encode_distilled(const DistilledContainer& c);

}  // namespace cdstl

#endif  // CDSTL_DISTILLED_HPP
