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

#include "cdstl/svg.hpp"

#include <cstdio>
#include <sstream>

#include "cdstl/binio.hpp"

namespace cdstl {

namespace {

constexpr double kWidth = 640, kHeight = 440;
constexpr double kLeft = 70, kRight = 610, kTop = 40, kBottom = 380;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

double x_of(double r_percent) { return kLeft + (kRight - kLeft) * (r_percent / 100.0); }
double y_of(double acc_percent) { return kBottom - (kBottom - kTop) * (acc_percent / 100.0); }

}  // namespace

void write_sweep_svg(const SweepResult& sweep, const std::string& path) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
     << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  os << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";

  // axes
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kBottom << "\" x2=\"" << kRight << "\" y2=\""
     << kBottom << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
     << kBottom << "\" stroke=\"black\"/>\n";
  for (int pct = 0; pct <= 100; pct += 20) {
    double x = x_of(pct);
    os << "<line x1=\"" << num(x) << "\" y1=\"" << kBottom << "\" x2=\"" << num(x) << "\" y2=\""
       << kBottom + 5 << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << num(x) << "\" y=\"" << kBottom + 20
       << "\" font-size=\"12\" text-anchor=\"middle\">" << pct << "</text>\n";
    double y = y_of(pct);
    os << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << num(y) << "\" x2=\"" << kLeft
       << "\" y2=\"" << num(y) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << kLeft - 10 << "\" y=\"" << num(y + 4)
       << "\" font-size=\"12\" text-anchor=\"end\">" << pct << "</text>\n";
  }
  os << "<text x=\"" << (kLeft + kRight) / 2 << "\" y=\"" << kBottom + 45
     << "\" font-size=\"14\" text-anchor=\"middle\">relative dataset size (%)</text>\n";
  os << "<text x=\"18\" y=\"" << (kTop + kBottom) / 2
     << "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << (kTop + kBottom) / 2 << ")\">accuracy (%)</text>\n";

  // reference line at the r=1.0 mean
  double ref_y = y_of(sweep.reference_mean * 100.0);
  os << "<line class=\"reference\" x1=\"" << kLeft << "\" y1=\"" << num(ref_y) << "\" x2=\""
     << kRight << "\" y2=\"" << num(ref_y)
     << "\" stroke=\"#777777\" stroke-dasharray=\"6,4\"/>\n";
  os << "<text x=\"" << kRight - 4 << "\" y=\"" << num(ref_y - 6)
     << "\" font-size=\"11\" fill=\"#777777\" text-anchor=\"end\">100% reference</text>\n";

  const char* colors[2] = {"#2a7d2f", "#c23b3b"};
  for (size_t mi = 0; mi < sweep.modes.size(); ++mi) {
    PruneMode mode = sweep.modes[mi];
    std::ostringstream pts;
    for (double r : sweep.r_values) {
      const SweepCell* cell = sweep.cell(r, mode);
      if (cell == nullptr || !cell->ok) continue;
      pts << num(x_of(r * 100.0)) << "," << num(y_of(cell->report.mean_of_arch_means * 100.0))
          << " ";
    }
    const char* color = colors[mi % 2];
    os << "<polyline class=\"mode-" << prune_mode_name(mode) << "\" points=\"" << pts.str()
       << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    for (double r : sweep.r_values) {
      const SweepCell* cell = sweep.cell(r, mode);
      if (cell == nullptr || !cell->ok) continue;
      os << "<circle cx=\"" << num(x_of(r * 100.0)) << "\" cy=\""
         << num(y_of(cell->report.mean_of_arch_means * 100.0)) << "\" r=\"3\" fill=\"" << color
         << "\"/>\n";
    }
    // legend
    double ly = kTop + 16.0 * static_cast<double>(mi);
    os << "<line x1=\"" << kRight - 120 << "\" y1=\"" << num(ly) << "\" x2=\"" << kRight - 96
       << "\" y2=\"" << num(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << kRight - 90 << "\" y=\"" << num(ly + 4) << "\" font-size=\"12\">"
       << prune_mode_name(mode) << "</text>\n";
  }
  os << "</svg>\n";
  write_file_atomic(path, os.str());
}

}  // namespace cdstl
