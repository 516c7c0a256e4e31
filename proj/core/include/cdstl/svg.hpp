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

#ifndef CDSTL_SVG_HPP
#define CDSTL_SVG_HPP

#include <string>

#include "cdstl/eval.hpp"

namespace cdstl {

// Line plot of the sweep: x = relative dataset size (%), y = accuracy (%).
// One polyline per mode plus a dashed reference line (class="reference") at
// the r=1.0 mean. Deterministic output for identical inputs.
void write_sweep_svg(const SweepResult& sweep, const std::string& path);

}  // namespace cdstl

#endif  // CDSTL_SVG_HPP
