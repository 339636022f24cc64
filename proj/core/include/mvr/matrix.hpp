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

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <vector>

#include "mvr/error.hpp"

namespace mvr {

/// Dense row-major matrix. Scoring uses the float instantiation; the
/// training gradient oracle runs the double one.
template <typename T>
struct MatT {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;  // rows * cols, row-major

  MatT() = default;
  MatT(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), data(r * c, fill) {}

  static MatT from_rows(std::initializer_list<std::initializer_list<T>> values) {
    MatT m;
    m.rows = values.size();
    m.cols = m.rows == 0 ? 0 : values.begin()->size();
    m.data.reserve(m.rows * m.cols);
    for (const auto& row : values) {
      if (row.size() != m.cols) raise(errc::dimension_mismatch, "ragged row list");
      m.data.insert(m.data.end(), row.begin(), row.end());
    }
    return m;
  }

  T* row(std::size_t i) { return data.data() + i * cols; }
  const T* row(std::size_t i) const { return data.data() + i * cols; }

  T& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  bool same_shape(const MatT& other) const { return rows == other.rows && cols == other.cols; }

  bool operator==(const MatT& other) const = default;
};

using Matrix = MatT<float>;

template <typename T>
bool all_finite(const MatT<T>& m) {
  for (T v : m.data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <typename T>
MatT<double> widen(const MatT<T>& m) {
  MatT<double> out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] = static_cast<double>(m.data[i]);
  return out;
}

}  // namespace mvr
