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

#ifndef CDSTL_HASH_HPP
#define CDSTL_HASH_HPP

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cdstl {

// FNV-1a 64-bit, used for artifact hashes and seed derivation.
uint64_t fnv1a64(const void* bytes, size_t len, uint64_t seed = 0xcbf29ce484222325ULL);
uint64_t fnv1a64(std::string_view s);

// CRC-32 (IEEE 802.3 polynomial, reflected), used by the DST1 container.
class Crc32 {
 public:
  void update(const void* bytes, size_t len);
  uint32_t value() const { return state_ ^ 0xffffffffu; }

 private:
  uint32_t state_ = 0xffffffffu;
};

uint32_t crc32(const void* bytes, size_t len);

std::string hex64(uint64_t v);

// Hash of a whole file's bytes; throws io_error if unreadable.
uint64_t hash_file(const std::string& path);
std::string hash_file_hex(const std::string& path);

std::vector<uint8_t> read_file_bytes(const std::string& path);

}  // namespace cdstl

#endif  // CDSTL_HASH_HPP
