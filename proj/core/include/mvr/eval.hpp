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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mvr/index.hpp"

namespace mvr {

/// Relevance judgments: query id -> (doc id -> graded relevance >= 0).
/// Every query must carry at least one judgment with relevance > 0.
class Qrels {
 public:
  using JudgmentMap = std::map<std::uint64_t, std::map<std::uint64_t, int>>;

  Qrels() = default;
  explicit Qrels(JudgmentMap judgments);

  /// Reads UTF-8 TSV lines `query_id<TAB>doc_id<TAB>relevance`.
  static Qrels from_tsv(const std::string& path);
  void write_tsv(const std::string& path) const;

  const JudgmentMap& judgments() const { return judgments_; }
  bool has_query(std::uint64_t query_id) const { return judgments_.count(query_id) != 0; }

  /// Relevance of (query, doc); unjudged docs score 0. Raises unknown_query
  /// for queries without judgments.
  int relevance(std::uint64_t query_id, std::uint64_t doc_id) const;

 private:
  JudgmentMap judgments_;
};

/// Fraction of rankings whose top-1 doc has relevance > 0.
double precision_at_1(std::span<const RankedList> rankings, const Qrels& qrels);

/// Mean NDCG@k with gain 2^rel - 1 and discount log2(rank + 1). Queries with
/// zero ideal DCG are excluded from the mean.
double ndcg_at_k(std::span<const RankedList> rankings, const Qrels& qrels, std::uint32_t k = 5);

struct MetricSpec {
  enum class Kind { precision_at_1, ndcg_at_k };
  Kind kind = Kind::precision_at_1;
  std::uint32_t k = 5;  // cutoff for ndcg_at_k

  std::string name() const;
  std::uint32_t depth() const { return kind == Kind::precision_at_1 ? 1 : k; }
};

/// One point of a budget sweep: quality plus the analytic cost columns.
struct SweepPoint {
  Budget budget;
  std::string metric_name;
  double value = 0.0;
  std::uint64_t flops = 0;
  std::uint64_t index_bytes = 0;
};

/// Walks the ladder from coarse to fine: truncates the index to each group's
/// r_c, searches at that group's budget, evaluates `metric`, and attaches
/// scoring FLOPs (for all N candidates) and payload bytes.
std::vector<SweepPoint> budget_sweep(const NestedIndex& index_full,
                                     std::span<const MetaEmbeddingSet> queries,
                                     std::span<const std::uint64_t> query_ids, const Qrels& qrels,
                                     const BudgetLadder& ladder, const MetricSpec& metric,
                                     std::uint32_t batch_size = 1000);

/// Baseline poolers over raw token states (T x D).
MetaEmbeddingSet pool_single_last(const Matrix& tokens, Side side);
MetaEmbeddingSet pool_single_mean(const Matrix& tokens, Side side);

/// Splits rows into `segments` contiguous chunks (earlier chunks take the
/// remainder), mean-pools each chunk, L2-normalizes.
MetaEmbeddingSet pool_split(const Matrix& tokens, std::size_t segments, Side side);

}  // namespace mvr
