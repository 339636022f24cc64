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

#include "mvr/lateint.hpp"

#include <algorithm>
#include <numeric>

#include "mvr/index.hpp"

namespace mvr {

float maxsim(const MetaEmbeddingSet& query, const MetaEmbeddingSet& candidate) {
  if (query.dim() != candidate.dim()) {
    raise(errc::dimension_mismatch, "query D=" + std::to_string(query.dim()) +
                                        " vs candidate D=" + std::to_string(candidate.dim()));
  }
  return detail::maxsim_kernel(query.vectors().data.data(), query.count(),
                               candidate.vectors().data.data(), candidate.count(), query.dim());
}

float group_score(const MetaEmbeddingSet& query, const MetaEmbeddingSet& candidate,
                  const Budget& b) {
  if (query.dim() != candidate.dim()) {
    raise(errc::dimension_mismatch, "query D=" + std::to_string(query.dim()) +
                                        " vs candidate D=" + std::to_string(candidate.dim()));
  }
  if (b.r_q > query.count() || b.r_c > candidate.count()) {
    raise(errc::budget_exceeds_vectors,
          "budget " + format_budget(b) + " exceeds set sizes (" + std::to_string(query.count()) +
              "," + std::to_string(candidate.count()) + ")");
  }
  return detail::maxsim_kernel(query.vectors().data.data(), b.r_q,
                               candidate.vectors().data.data(), b.r_c, query.dim());
}

ScoreMatrix score_batch(std::span<const MetaEmbeddingSet> queries, const NestedIndex& index,
                        const Budget& b, std::uint32_t batch_size) {
  if (index.num_docs() == 0) raise(errc::empty_index, "index has no candidates");
  if (batch_size < 1) raise(errc::out_of_range, "batch_size must be >= 1");
  if (b.r_c > index.vectors_per_doc()) {
    raise(errc::budget_exceeds_vectors, "budget " + format_budget(b) + " exceeds index R_c=" +
                                            std::to_string(index.vectors_per_doc()));
  }
  for (const MetaEmbeddingSet& q : queries) {
    if (q.dim() != index.dim()) {
      raise(errc::dimension_mismatch, "query D=" + std::to_string(q.dim()) + " vs index D=" +
                                          std::to_string(index.dim()));
    }
    if (b.r_q > q.count()) {
      raise(errc::budget_exceeds_vectors,
            "budget " + format_budget(b) + " exceeds query R=" + std::to_string(q.count()));
    }
  }

  const std::size_t n = index.num_docs();
  const std::size_t d = index.dim();
  ScoreMatrix result{Matrix(queries.size(), n), b};
  std::vector<float> cand(static_cast<std::size_t>(b.r_c) * d);
  for (std::size_t shard = 0; shard < n; shard += batch_size) {
    const std::size_t end = std::min(n, shard + batch_size);
    for (std::size_t doc = shard; doc < end; ++doc) {
      index.dequantize_doc(doc, b.r_c, cand.data());
      for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        result.values(qi, doc) = detail::maxsim_kernel(
            queries[qi].vectors().data.data(), b.r_q, cand.data(), b.r_c, d);
      }
    }
  }
  return result;
}

std::vector<RankedList> top_k(const ScoreMatrix& scores, std::uint32_t k,
                              std::span<const std::uint64_t> doc_ids) {
  const std::size_t n = scores.values.cols;
  if (k < 1) raise(errc::out_of_range, "k must be >= 1");
  if (k > n) {
    raise(errc::k_too_large, "k=" + std::to_string(k) + " > N=" + std::to_string(n));
  }
  if (!doc_ids.empty() && doc_ids.size() != n) {
    raise(errc::dimension_mismatch, "doc id list does not match score columns");
  }

  std::vector<RankedList> out(scores.values.rows);
  std::vector<std::size_t> order(n);
  for (std::size_t qi = 0; qi < scores.values.rows; ++qi) {
    const float* row = scores.values.row(qi);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto better = [&](std::size_t a, std::size_t b) {
      if (row[a] != row[b]) return row[a] > row[b];
      const std::uint64_t ida = doc_ids.empty() ? a : doc_ids[a];
      const std::uint64_t idb = doc_ids.empty() ? b : doc_ids[b];
      return ida < idb;
    };
    std::partial_sort(order.begin(), order.begin() + k, order.end(), better);
    RankedList& list = out[qi];
    list.query_id = qi;
    list.entries.reserve(k);
    for (std::uint32_t r = 0; r < k; ++r) {
      const std::size_t col = order[r];
      list.entries.emplace_back(doc_ids.empty() ? col : doc_ids[col], row[col]);
    }
  }
  return out;
}

std::uint64_t scoring_flops(const Budget& b, std::uint64_t d, std::uint64_t n) {
  if (d < 1 || n < 1) raise(errc::out_of_range, "d and n must be >= 1");
  std::uint64_t flops = 2;
  for (std::uint64_t factor : {std::uint64_t(b.r_q), std::uint64_t(b.r_c), d, n}) {
    if (__builtin_mul_overflow(flops, factor, &flops)) {
      raise(errc::out_of_range, "FLOP count overflows 64 bits");
    }
  }
  return flops;
}

}  // namespace mvr
