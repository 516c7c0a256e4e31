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

#ifndef CDSTL_SHAPES_HPP
#define CDSTL_SHAPES_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "cdstl/dataset.hpp"

namespace cdstl {

// Procedural grayscale glyph corpus: disk, square, cross, triangle, ring,
// stripes-h, stripes-v, checker, L-corner, dot-grid. Every sample gets a
// seeded affine jitter (position, scale) plus additive Gaussian pixel noise.
// One uniform "difficulty" draw per sample controls both the jitter severity
// and the noise level, so per-sample classification difficulty spans a wide
// range; that spread is what gives easy/hard pruning a signal to work with.
//
// Rendered intensities are quantized to the 8-bit grid (k/255), so the IDX
// round trip is exact.

struct ShapeJitter {
  double difficulty = 0.0;  // in [0,1); scales jitter ranges and noise sigma
  double cx = 0.5, cy = 0.5;
  double scale = 0.3;
};

constexpr double kShapesDefaultNoise = 0.30;
constexpr int kShapeClassCount = 10;

// Pure renderer: glyph class + jitter -> [res*res] intensities in [0,1],
// quantized, no noise. The make_shapes oracle re-renders from logged jitter.
std::vector<double> render_glyph(int class_id, int resolution, const ShapeJitter& jitter);

LabeledDataset make_shapes(uint64_t seed, int64_t per_class, int resolution,
                           int64_t classes, double noise_amplitude = kShapesDefaultNoise);

// Same, also returning the per-sample jitter log (sample order matches the
// dataset: class-major).
std::pair<LabeledDataset, std::vector<ShapeJitter>> make_shapes_logged(
    uint64_t seed, int64_t per_class, int resolution, int64_t classes,
    double noise_amplitude = kShapesDefaultNoise);

}  // namespace cdstl

#endif  // CDSTL_SHAPES_HPP
