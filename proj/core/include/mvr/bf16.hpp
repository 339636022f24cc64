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

#include <bit>
#include <cmath>
#include <cstdint>

#include "mvr/error.hpp"

namespace mvr {

/// Nearest bfloat16 of a finite float, round-to-nearest-even.
inline std::uint16_t quantize_bf16(float x) {
  if (!std::isfinite(x)) raise(errc::non_finite, "cannot quantize non-finite value");
  std::uint32_t bits = std::bit_cast<std::uint32_t>(x);
  const std::uint32_t keep_lsb = (bits >> 16) & 1u;
  bits += 0x7fffu + keep_lsb;
  return static_cast<std::uint16_t>(bits >> 16);
}

/// Zero-extend a bfloat16 back to float.
inline float dequantize_bf16(std::uint16_t h) {
  return std::bit_cast<float>(static_cast<std::uint32_t>(h) << 16);
}

}  // namespace mvr
