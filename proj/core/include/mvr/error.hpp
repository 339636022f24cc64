// Copyright 2025-present the mvr project
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace mvr {

enum class errc {
  // numeric / precondition
  zero_row,
  non_finite,
  not_normalized,
  out_of_range,
  not_increasing,
  last_group_mismatch,
  dimension_mismatch,
  budget_exceeds_vectors,
  empty_index,
  k_too_large,
  duplicate_doc_id,
  inconsistent_dimension,
  non_positive_temperature,
  tie_near_max,
  unknown_query,
  no_positive_judgment,
  empty_input,
  too_few_tokens,
  // i/o and file formats
  io,
  bad_magic,
  version_unsupported,
  truncated_file,
  checksum_mismatch,
  bad_format,
  // command line
  usage,
  // training
  divergence,
};

const char* errc_name(errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& message) {
  throw Error(code, message);
}

// Process exit code for a failure class: 2 usage, 3 i/o and file format,
// 4 numeric/precondition, 5 divergence.
int exit_code_for(errc code) noexcept;

}  // namespace mvr
