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

#ifndef CDSTL_ERRORS_HPP
#define CDSTL_ERRORS_HPP

#include <stdexcept>

namespace cdstl {

// Error taxonomy. The CLI maps these to exit codes:
// config 2, data 3, numeric 4, io 5. usage_error marks API misuse by
// calling code and is not reachable through validated CLI input.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct config_error : error { using error::error; };
struct data_error : error { using error::error; };
struct numeric_error : error { using error::error; };
struct io_error : error { using error::error; };
struct usage_error : error { using error::error; };

// data_error refinements
struct format_error : data_error { using data_error::data_error; };
struct corruption_error : data_error { using data_error::data_error; };
struct integrity_error : data_error { using data_error::data_error; };
struct dimension_error : data_error { using data_error::data_error; };
struct validation_error : data_error { using data_error::data_error; };

}  // namespace cdstl

#endif  // CDSTL_ERRORS_HPP
