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

#ifndef CDSTL_PARALLEL_HPP
#define CDSTL_PARALLEL_HPP

#include <cstdint>
#include <functional>

namespace cdstl {

// Runs fn(0..count-1) on up to `jobs` worker threads. Every job must be
// independent and write only its own output slot; results are then bitwise
// identical for any worker count. The first exception thrown by a job is
// rethrown on the calling thread after all workers join.
void run_jobs(int jobs, int64_t count, const std::function<void(int64_t)>& fn);

}  // namespace cdstl

#endif  // CDSTL_PARALLEL_HPP
