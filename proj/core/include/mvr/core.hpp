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

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mvr/matrix.hpp"

namespace mvr {

enum class Side { query, candidate };

/// Tolerance on the unit-norm invariant of embedding rows (float storage).
inline constexpr float kRowNormTol = 1e-5f;

/// Divide every row of `m` by its Euclidean norm.
/// Raises non_finite for NaN/Inf entries and zero_row for rows with norm
/// below 1e-12.
Matrix l2_normalize_rows(const Matrix& m);

/// A set of unit-norm embedding vectors (R x D, row-major) for one query or
/// one candidate. Immutable after construction.
class MetaEmbeddingSet {
 public:
  /// Wraps already-normalized rows; validates shape, finiteness and that
  /// every row norm is within kRowNormTol of 1.
  MetaEmbeddingSet(Matrix vectors, Side side);

  /// Normalizes raw rows, then wraps them. The usual ingestion entry point.
  static MetaEmbeddingSet normalized(const Matrix& raw, Side side) {
    return MetaEmbeddingSet(l2_normalize_rows(raw), side);
  }

  const Matrix& vectors() const { return vectors_; }
  Side side() const { return side_; }
  std::size_t count() const { return vectors_.rows; }  // R
  std::size_t dim() const { return vectors_.cols; }    // D

 private:
  Matrix vectors_;
  Side side_;
};

/// First `r` rows of `set`, bit-identical, in order.
MetaEmbeddingSet prefix(const MetaEmbeddingSet& set, std::size_t r);

/// A (query-side count, candidate-side count) pair selected at test time.
struct Budget {
  std::uint32_t r_q = 1;
  std::uint32_t r_c = 1;

  Budget() = default;
  Budget(std::uint32_t rq, std::uint32_t rc);
  bool operator==(const Budget&) const = default;
};

/// Ordered nested group sizes; both sequences strictly increase and the last
/// group matches the model's full (R_q, R_c).
struct BudgetLadder {
  std::vector<Budget> groups;

  std::size_t size() const { return groups.size(); }
};

/// Raises not_increasing / last_group_mismatch when the ladder is invalid
/// for a model with `model_r_q` query vectors and `model_r_c` candidate
/// vectors.
void validate_ladder(const BudgetLadder& ladder, std::uint32_t model_r_q,
                     std::uint32_t model_r_c);

/// The stock 5-group ladder: (1,1),(2,4),(4,8),(8,16),(16,64).
BudgetLadder default_ladder();

/// Parses "rq:rc". Raises usage on anything else.
Budget parse_budget(std::string_view text);

/// Parses "rq:rc,rq:rc,...". Raises usage on anything else.
BudgetLadder parse_ladder(std::string_view text);

std::string format_budget(const Budget& b);
std::string format_ladder(const BudgetLadder& ladder);

}  // namespace mvr
