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

#include "cdstl/shapes.hpp"

#include <algorithm>
#include <cmath>

#include "cdstl/errors.hpp"
#include "cdstl/rng.hpp"

namespace cdstl {

namespace {

constexpr double kFg = 0.90;
constexpr double kBg = 0.05;

bool glyph_hit(int class_id, double dx, double dy, double s) {
  switch (class_id) {
    case 0:  // disk
      return dx * dx + dy * dy <= s * s;
    case 1:  // square
      return std::max(std::fabs(dx), std::fabs(dy)) <= 0.85 * s;
    case 2:  // cross
      return (std::fabs(dx) <= 0.32 * s && std::fabs(dy) <= s) ||
             (std::fabs(dy) <= 0.32 * s && std::fabs(dx) <= s);
    case 3: {  // triangle, apex up
      // vertices (0,-s), (-0.9s, 0.7s), (0.9s, 0.7s)
      if (dy > 0.7 * s) return false;
      double t = (dy + s) / (1.7 * s);  // 0 at apex, 1 at base
      return std::fabs(dx) <= 0.9 * s * t;
    }
    case 4: {  // ring
      double r2 = dx * dx + dy * dy;
      return r2 <= s * s && r2 >= 0.55 * 0.55 * s * s;
    }
    case 5:  // stripes-h
      if (std::fabs(dx) > s || std::fabs(dy) > s) return false;
      return static_cast<int64_t>(std::floor((dy + s) / (0.5 * s))) % 2 == 0;
    case 6:  // stripes-v
      if (std::fabs(dx) > s || std::fabs(dy) > s) return false;
      return static_cast<int64_t>(std::floor((dx + s) / (0.5 * s))) % 2 == 0;
    case 7: {  // checker
      if (std::fabs(dx) > s || std::fabs(dy) > s) return false;
      int64_t qx = static_cast<int64_t>(std::floor((dx + s) / (0.66 * s)));
      int64_t qy = static_cast<int64_t>(std::floor((dy + s) / (0.66 * s)));
      return (qx + qy) % 2 == 0;
    }
    case 8:  // L-corner
      return (dx >= -s && dx <= -0.34 * s && std::fabs(dy) <= s) ||
             (dy >= 0.34 * s && dy <= s && std::fabs(dx) <= s);
    case 9: {  // dot-grid
      for (int iy = -1; iy <= 1; iy += 2)
        for (int ix = -1; ix <= 1; ix += 2) {
          double ex = dx - ix * 0.55 * s, ey = dy - iy * 0.55 * s;
          if (ex * ex + ey * ey <= 0.34 * 0.34 * s * s) return true;
        }
      return false;
    }
    default:
      throw usage_error("render_glyph: class id out of range");
  }
}

double quantize8(double v) { return std::round(v * 255.0) / 255.0; }

ShapeJitter draw_jitter(Rng& rng) {
  double u = rng.next_double();
  double u1 = rng.next_double();
  double u2 = rng.next_double();
  double u3 = rng.next_double();
  ShapeJitter j;
  j.difficulty = u * u;  // skewed: most samples easy, a tail of hard ones
  j.cx = 0.5 + (u1 - 0.5) * (0.12 + 0.55 * j.difficulty);
  j.cy = 0.5 + (u2 - 0.5) * (0.12 + 0.55 * j.difficulty);
  j.scale = 0.30 * (1.0 + (u3 - 0.5) * (0.30 + 1.10 * j.difficulty));
  return j;
}

}  // namespace

std::vector<double> render_glyph(int class_id, int resolution, const ShapeJitter& jitter) {
  std::vector<double> img(static_cast<size_t>(resolution) * resolution);
  const int ss = 3;  // 3x3 supersampling for soft edges
  for (int y = 0; y < resolution; ++y) {
    for (int x = 0; x < resolution; ++x) {
      int hits = 0;
      for (int sy = 0; sy < ss; ++sy)
        for (int sx = 0; sx < ss; ++sx) {
          double px = (x + (sx + 0.5) / ss) / resolution;
          double py = (y + (sy + 0.5) / ss) / resolution;
          if (glyph_hit(class_id, px - jitter.cx, py - jitter.cy, jitter.scale)) ++hits;
        }
      double coverage = static_cast<double>(hits) / (ss * ss);
      img[static_cast<size_t>(y) * resolution + x] = quantize8(kBg + coverage * (kFg - kBg));
    }
  }
  return img;
}

std::pair<LabeledDataset, std::vector<ShapeJitter>> make_shapes_logged(
    uint64_t seed, int64_t per_class, int resolution, int64_t classes,
    double noise_amplitude) {
  if (classes < 2 || classes > kShapeClassCount)
    throw config_error("make_shapes: classes must be in [2,10]");
  if (resolution != 16 && resolution != 32)
    throw config_error("make_shapes: unsupported resolution " + std::to_string(resolution) +
                       " (want 16 or 32)");
  if (per_class < 2) throw config_error("make_shapes: per_class must be >= 2");

  Rng rng(seed);
  int64_t n = classes * per_class;
  int64_t hw = static_cast<int64_t>(resolution) * resolution;
  std::vector<double> pixels(static_cast<size_t>(n * hw));
  std::vector<int> labels(static_cast<size_t>(n));
  std::vector<ShapeJitter> log;
  log.reserve(static_cast<size_t>(n));

  int64_t sample = 0;
  for (int64_t c = 0; c < classes; ++c) {
    for (int64_t k = 0; k < per_class; ++k, ++sample) {
      ShapeJitter j = draw_jitter(rng);
      auto img = render_glyph(static_cast<int>(c), resolution, j);
      if (noise_amplitude > 0.0) {
        double sigma = noise_amplitude * j.difficulty;
        for (auto& v : img) {
          v += sigma * rng.next_gaussian();
          v = quantize8(std::clamp(v, 0.0, 1.0));
        }
      }
      std::copy(img.begin(), img.end(), pixels.begin() + sample * hw);
      labels[static_cast<size_t>(sample)] = static_cast<int>(c);
      log.push_back(j);
    }
  }

  LabeledDataset ds;
  ds.images = Tensor::from({n, 1, resolution, resolution}, std::move(pixels));
  ds.labels = std::move(labels);
  ds.class_count = classes;
  ds.split = SplitTag::train;
  return {std::move(ds), std::move(log)};
}

LabeledDataset make_shapes(uint64_t seed, int64_t per_class, int resolution,
                           int64_t classes, double noise_amplitude) {
  return make_shapes_logged(seed, per_class, resolution, classes, noise_amplitude).first;
}

}  // namespace cdstl
