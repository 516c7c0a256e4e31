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

#include "cdstl/distilled.hpp"

#include <cmath>

#include <json.hpp>

#include "cdstl/binio.hpp"
#include "cdstl/errors.hpp"
#include "cdstl/hash.hpp"

namespace cdstl {

std::string provenance_to_json(const Provenance& p) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : p) j[k] = v;
  return j.dump();  // keys already sorted; dump is canonical
}

Provenance provenance_from_json(const std::string& json) {
  Provenance p;
  auto j = nlohmann::json::parse(json, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object())
    throw format_error("provenance block is not a JSON object");
  for (auto& [k, v] : j.items()) p[k] = v.get<std::string>();
  return p;
}

void DistilledContainer::validate() const {
  if (class_count < 1 || ipc < 1)
    throw validation_error("distilled container: class_count and ipc must be >= 1");
  int64_t m = synthetic_count();
  if (!payload.defined() || payload.rank() != 4 || payload.dim(0) != m)
    throw validation_error("distilled container: payload must be rank 4 with M=" +
                           std::to_string(m) + " rows");
  if (static_cast<int64_t>(labels.size()) != m)
    throw validation_error("distilled container: expected " + std::to_string(m) + " labels");
  for (int64_t c = 0; c < class_count; ++c)
    for (int64_t k = 0; k < ipc; ++k)
      if (labels[static_cast<size_t>(c * ipc + k)] != c)
        throw validation_error("distilled container: labels must be ipc copies of each class, "
                               "class-major");
  if (space == SynSpace::pixel && !payload.all_finite())
    throw validation_error("distilled container: pixel payload has non-finite values");
  if (space == SynSpace::latent) {
    if (!payload.all_finite())
      throw validation_error("distilled container: latent codes must be finite");
    if (provenance.find("decoder_hash") == provenance.end())
      throw validation_error("distilled container: latent payload requires decoder_hash "
                             "provenance");
  }
}

std::vector<uint8_t> encode_distilled(const DistilledContainer& c) {
  c.validate();
  ByteWriter w;
  w.str("DST1");
  w.u8(static_cast<uint8_t>(c.space));
  w.u16le(static_cast<uint16_t>(c.class_count));
  w.u16le(static_cast<uint16_t>(c.ipc));
  w.u8(static_cast<uint8_t>(c.payload.rank()));
  for (auto d : c.payload.shape()) w.u32le(static_cast<uint32_t>(d));
  for (double v : c.payload.raw()) w.f64le(v);
  for (int y : c.labels) w.u16le(static_cast<uint16_t>(y));
  std::string prov = provenance_to_json(c.provenance);
  w.u32le(static_cast<uint32_t>(prov.size()));
  w.str(prov);
  uint32_t crc = crc32(w.data().data(), w.size());
  w.u32le(crc);
  return w.data();
}

void save_distilled(const DistilledContainer& c, const std::string& path) {
  write_file_atomic(path, encode_distilled(c));
}

DistilledContainer load_distilled(const std::string& path) {
  auto bytes = read_file_bytes(path);
  if (bytes.size() < 4 + 4)
    throw format_error("DST1 " + path + ": file too small (" + std::to_string(bytes.size()) +
                       " bytes)");
  uint32_t stored_crc = 0;
  for (int i = 3; i >= 0; --i) stored_crc = (stored_crc << 8) | bytes[bytes.size() - 4 + static_cast<size_t>(i)];
  uint32_t actual = crc32(bytes.data(), bytes.size() - 4);
  if (stored_crc != actual)
    throw corruption_error("DST1 " + path + ": CRC mismatch (stored " + hex64(stored_crc).substr(8) +
                           ", computed " + hex64(actual).substr(8) + ")");

  ByteReader r(bytes.data(), bytes.size() - 4, "DST1 " + path);
  if (r.str(4) != "DST1") throw format_error("DST1 " + path + ": bad magic at offset 0");
  DistilledContainer c;
  uint8_t space = r.u8();
  if (space > 1) throw format_error("DST1 " + path + ": unknown space tag " + std::to_string(space));
  c.space = static_cast<SynSpace>(space);
  c.class_count = r.u16le();
  c.ipc = r.u16le();
  uint8_t rank = r.u8();
  Shape shape(rank);
  for (auto& d : shape) d = static_cast<int64_t>(r.u32le());
  int64_t n = numel_of(shape);
  std::vector<double> payload(static_cast<size_t>(n));
  for (auto& v : payload) v = r.f64le();
  c.payload = Tensor::from(std::move(shape), std::move(payload));
  int64_t m = c.synthetic_count();
  c.labels.resize(static_cast<size_t>(m));
  for (auto& y : c.labels) y = static_cast<int>(r.u16le());
  uint32_t prov_len = r.u32le();
  c.provenance = provenance_from_json(r.str(prov_len));
  if (r.remaining() != 0)
    throw format_error("DST1 " + path + ": trailing bytes at offset " + std::to_string(r.offset()));
  c.validate();
  return c;
}

}  // namespace cdstl
