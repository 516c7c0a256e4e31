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

#include "cdstl/idx.hpp"

#include <algorithm>
#include <cmath>

#include "cdstl/binio.hpp"
#include "cdstl/errors.hpp"
#include "cdstl/hash.hpp"

namespace cdstl {

namespace {
constexpr uint32_t kIdx3Magic = 0x00000803u;
constexpr uint32_t kIdx1Magic = 0x00000801u;
}  // namespace

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
  auto img_bytes = read_file_bytes(images_path);
  ByteReader ir(img_bytes, "IDX images " + images_path);
  uint32_t magic = ir.u32be();
  if (magic != kIdx3Magic)
    throw format_error("IDX images " + images_path + ": bad magic 0x" + hex64(magic).substr(8) +
                       " at byte offset 0 (want 0x00000803)");
  uint32_t n = ir.u32be();
  uint32_t h = ir.u32be();
  uint32_t w = ir.u32be();
  size_t expected = static_cast<size_t>(n) * h * w;
  if (ir.remaining() != expected)
    throw format_error("IDX images " + images_path + ": payload has " +
                       std::to_string(ir.remaining()) + " bytes at offset " +
                       std::to_string(ir.offset()) + ", header promises " +
                       std::to_string(expected));

  auto lbl_bytes = read_file_bytes(labels_path);
  ByteReader lr(lbl_bytes, "IDX labels " + labels_path);
  uint32_t lmagic = lr.u32be();
  if (lmagic != kIdx1Magic)
    throw format_error("IDX labels " + labels_path + ": bad magic 0x" + hex64(lmagic).substr(8) +
                       " at byte offset 0 (want 0x00000801)");
  uint32_t ln = lr.u32be();
  if (ln != n)
    throw format_error("IDX: label count " + std::to_string(ln) + " (offset 4) != image count " +
                       std::to_string(n));
  if (lr.remaining() != ln)
    throw format_error("IDX labels " + labels_path + ": payload has " +
                       std::to_string(lr.remaining()) + " bytes at offset " +
                       std::to_string(lr.offset()) + ", header promises " + std::to_string(ln));

  std::vector<double> pixels(expected);
  for (size_t i = 0; i < expected; ++i) pixels[i] = static_cast<double>(ir.u8()) / 255.0;
  std::vector<int> labels(static_cast<size_t>(ln));
  int max_label = 0;
  for (auto& y : labels) {
    y = static_cast<int>(lr.u8());
    max_label = std::max(max_label, y);
  }

  LabeledDataset ds;
  ds.images = Tensor::from({static_cast<int64_t>(n), 1, static_cast<int64_t>(h),
                            static_cast<int64_t>(w)},
                           std::move(pixels));
  ds.labels = std::move(labels);
  ds.class_count = max_label + 1;
  ds.split = SplitTag::train;
  return ds;
}

void save_idx(const LabeledDataset& ds, const std::string& images_path,
              const std::string& labels_path) {
  if (ds.channels() != 1)
    throw data_error("save_idx: only single-channel datasets are supported");
  ByteWriter iw;
  iw.u32be(kIdx3Magic);
  iw.u32be(static_cast<uint32_t>(ds.size()));
  iw.u32be(static_cast<uint32_t>(ds.height()));
  iw.u32be(static_cast<uint32_t>(ds.width()));
  for (double v : ds.images.raw())
    iw.u8(static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  write_file_atomic(images_path, iw.data());

  ByteWriter lw;
  lw.u32be(kIdx1Magic);
  lw.u32be(static_cast<uint32_t>(ds.labels.size()));
  for (int y : ds.labels) lw.u8(static_cast<uint8_t>(y));
  write_file_atomic(labels_path, lw.data());
}

}  // namespace cdstl
