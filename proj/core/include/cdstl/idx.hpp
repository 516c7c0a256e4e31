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

#ifndef CDSTL_IDX_HPP
#define CDSTL_IDX_HPP

#include <string>

#include "cdstl/dataset.hpp"

namespace cdstl {

// Standard big-endian IDX3 (images, magic 0x00000803) / IDX1 (labels, magic
// 0x00000801) pair, MNIST-style. Pixels are rescaled to [0,1] by /255 on
// load; image and label counts are cross-checked. Format problems raise
// format_error with the byte offset.
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);

// Writes images quantized to u8 (round(v*255)). Round-trips exactly for
// data already on the 8-bit grid.
void save_idx(const LabeledDataset& ds, const std::string& images_path,
              const std::string& labels_path);

}  // namespace cdstl

#endif  // CDSTL_IDX_HPP
