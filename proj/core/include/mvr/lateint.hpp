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
#include <span>
#include <vector>

#include "mvr/core.hpp"

namespace mvr {

class NestedIndex;

/// Scores for Q queries against N candidates, produced at one budget.
struct ScoreMatrix {
  Matrix values;  // Q x N
  Budget budget;
};

/// Search output for one query: (doc_id, score) sorted by descending score,
/// score ties broken by ascending doc_id.
struct RankedList {
  std::uint64_t query_id = 0;
  std::vector<std::pair<std::uint64_t, float>> entries;
};

namespace detail {

/// MaxSim over raw row-major buffers: sum over query rows (ascending, float
/// accumulation) of the max dot product against candidate rows. The single
/// scoring kernel; every score in the library comes from here so that equal
/// inputs give bit-equal scores.
template <typename Real>
Real maxsim_kernel(const Real* q, std::size_t r_q, const Real* c, std::size_t r_c,
                   std::size_t d) {
  Real total = Real(0);
  for (std::size_t i = 0; i < r_q; ++i) {
    const Real* qi = q + i * d;
    const Real* cj = c;
    Real best = Real(0);
    for (std::size_t j = 0; j < r_c; ++j, cj += d) {
      Real dot = Real(0);
      for (std::size_t k = 0; k < d; ++k) dot += qi[k] * cj[k];
      if (j == 0 || dot > best) best = dot;
    }
    total += best;
  }
  return total;
}

}  // namespace detail

/// Late-interaction score between a full query set and a full candidate set.
float maxsim(const MetaEmbeddingSet& query, const MetaEmbeddingSet& candidate);

/// MaxSim restricted to the first b.r_q query rows and b.r_c candidate rows.
/// Bit-identical to maxsim(prefix(query, b.r_q), prefix(candidate, b.r_c)).
float group_score(const MetaEmbeddingSet& query, const MetaEmbeddingSet& candidate,
                  const Budget& b);

/// Scores every query against every candidate of the index at budget `b`.
/// Candidates are walked in shards of `batch_size`; the result does not
/// depend on the shard size. bf16 payloads are dequantized to float before
/// scoring.
ScoreMatrix score_batch(std::span<const MetaEmbeddingSet> queries, const NestedIndex& index,
                        const Budget& b, std::uint32_t batch_size);

/// Top-k per query. When `doc_ids` is empty, column indices stand in for
/// document ids. Deterministic: descending score, ascending doc id on ties.
std::vector<RankedList> top_k(const ScoreMatrix& scores, std::uint32_t k,
                              std::span<const std::uint64_t> doc_ids = {});

/// Analytic cost of scoring n candidates at budget b and dimension d:
/// 2 * r_q * r_c * d * n (multiply-add counted as two FLOPs).
std::uint64_t scoring_flops(const Budget& b, std::uint64_t d, std::uint64_t n);

}  // namespace mvr
