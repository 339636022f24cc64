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

#include "mvr/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

namespace mvr {

namespace {

std::uint64_t parse_u64_field(std::string_view text, std::size_t line_no) {
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    raise(errc::bad_format, "line " + std::to_string(line_no) + ": bad id '" +
                                std::string(text) + "'");
  }
  return value;
}

}  // namespace

Qrels::Qrels(JudgmentMap judgments) : judgments_(std::move(judgments)) {
  for (const auto& [query_id, docs] : judgments_) {
    bool any_positive = false;
    for (const auto& [doc_id, rel] : docs) {
      if (rel < 0) {
        raise(errc::out_of_range, "negative relevance for query " + std::to_string(query_id));
      }
      any_positive = any_positive || rel > 0;
    }
    if (!any_positive) {
      raise(errc::no_positive_judgment,
            "query " + std::to_string(query_id) + " has no positive judgment");
    }
  }
}

Qrels Qrels::from_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(errc::io, "cannot open '" + path + "'");
  JudgmentMap judgments;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::size_t t1 = line.find('\t');
    const std::size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
      raise(errc::bad_format, "line " + std::to_string(line_no) + ": expected 3 tab-separated "
                                  "columns");
    }
    const std::uint64_t query_id = parse_u64_field({line.data(), t1}, line_no);
    const std::uint64_t doc_id = parse_u64_field({line.data() + t1 + 1, t2 - t1 - 1}, line_no);
    const std::string_view rel_text{line.data() + t2 + 1, line.size() - t2 - 1};
    int rel = 0;
    const auto [ptr, ec] = std::from_chars(rel_text.data(), rel_text.data() + rel_text.size(), rel);
    if (ec != std::errc() || ptr != rel_text.data() + rel_text.size() || rel < 0) {
      raise(errc::bad_format, "line " + std::to_string(line_no) + ": bad relevance '" +
                                  std::string(rel_text) + "'");
    }
    judgments[query_id][doc_id] = rel;
  }
  return Qrels(std::move(judgments));
}

void Qrels::write_tsv(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(errc::io, "cannot open '" + path + "' for writing");
  for (const auto& [query_id, docs] : judgments_) {
    for (const auto& [doc_id, rel] : docs) {
      out << query_id << '\t' << doc_id << '\t' << rel << '\n';
    }
  }
  if (!out) raise(errc::io, "failed writing '" + path + "'");
}

int Qrels::relevance(std::uint64_t query_id, std::uint64_t doc_id) const {
  const auto query_it = judgments_.find(query_id);
  if (query_it == judgments_.end()) {
    raise(errc::unknown_query, "query " + std::to_string(query_id) + " has no judgments");
  }
  const auto doc_it = query_it->second.find(doc_id);
  return doc_it == query_it->second.end() ? 0 : doc_it->second;
}

double precision_at_1(std::span<const RankedList> rankings, const Qrels& qrels) {
  if (rankings.empty()) raise(errc::empty_input, "no rankings to evaluate");
  std::uint64_t hits = 0;
  for (const RankedList& list : rankings) {
    if (!qrels.has_query(list.query_id)) {
      raise(errc::unknown_query, "query " + std::to_string(list.query_id) + " not in qrels");
    }
    if (!list.entries.empty() && qrels.relevance(list.query_id, list.entries.front().first) > 0) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

double ndcg_at_k(std::span<const RankedList> rankings, const Qrels& qrels, std::uint32_t k) {
  if (rankings.empty()) raise(errc::empty_input, "no rankings to evaluate");
  if (k < 1) raise(errc::out_of_range, "k must be >= 1");
  double sum = 0.0;
  std::size_t counted = 0;
  for (const RankedList& list : rankings) {
    if (!qrels.has_query(list.query_id)) {
      raise(errc::unknown_query, "query " + std::to_string(list.query_id) + " not in qrels");
    }
    double dcg = 0.0;
    const std::size_t depth = std::min<std::size_t>(k, list.entries.size());
    for (std::size_t i = 0; i < depth; ++i) {
      const int rel = qrels.relevance(list.query_id, list.entries[i].first);
      if (rel > 0) dcg += (std::exp2(static_cast<double>(rel)) - 1.0) / std::log2(i + 2.0);
    }
    std::vector<int> judged;
    for (const auto& [doc_id, rel] : qrels.judgments().at(list.query_id)) {
      if (rel > 0) judged.push_back(rel);
    }
    std::sort(judged.begin(), judged.end(), std::greater<int>());
    double idcg = 0.0;
    for (std::size_t i = 0; i < std::min<std::size_t>(k, judged.size()); ++i) {
      idcg += (std::exp2(static_cast<double>(judged[i])) - 1.0) / std::log2(i + 2.0);
    }
    if (idcg <= 0.0) continue;  // cannot happen after Qrels validation, kept as a guard
    sum += dcg / idcg;
    ++counted;
  }
  return counted == 0 ? 0.0 : sum / static_cast<double>(counted);
}

std::string MetricSpec::name() const {
  switch (kind) {
    case Kind::precision_at_1: return "precision@1";
    case Kind::ndcg_at_k: return "ndcg@" + std::to_string(k);
  }
  return "unknown";
}

std::vector<SweepPoint> budget_sweep(const NestedIndex& index_full,
                                     std::span<const MetaEmbeddingSet> queries,
                                     std::span<const std::uint64_t> query_ids, const Qrels& qrels,
                                     const BudgetLadder& ladder, const MetricSpec& metric,
                                     std::uint32_t batch_size) {
  if (queries.empty()) raise(errc::empty_input, "no queries");
  if (query_ids.size() != queries.size()) {
    raise(errc::dimension_mismatch, "query id list does not match query count");
  }
  const std::size_t r_q = queries.front().count();
  for (const MetaEmbeddingSet& q : queries) {
    if (q.count() != r_q) raise(errc::inconsistent_dimension, "queries must share R");
  }
  validate_ladder(ladder, static_cast<std::uint32_t>(r_q), index_full.vectors_per_doc());

  const std::uint32_t k =
      static_cast<std::uint32_t>(std::min<std::uint64_t>(metric.depth(), index_full.num_docs()));
  std::vector<SweepPoint> points;
  points.reserve(ladder.size());
  for (const Budget& budget : ladder.groups) {
    const NestedIndex truncated = truncate_index(index_full, budget.r_c);
    std::vector<RankedList> rankings = search(truncated, queries, budget, k, batch_size);
    for (std::size_t i = 0; i < rankings.size(); ++i) rankings[i].query_id = query_ids[i];

    SweepPoint point;
    point.budget = budget;
    point.metric_name = metric.name();
    point.value = metric.kind == MetricSpec::Kind::precision_at_1
                      ? precision_at_1(rankings, qrels)
                      : ndcg_at_k(rankings, qrels, metric.k);
    point.flops = scoring_flops(budget, index_full.dim(), index_full.num_docs());
    point.index_bytes = memory_report(truncated).bytes;
    points.push_back(std::move(point));
  }
  return points;
}

namespace {

MetaEmbeddingSet normalize_pooled(Matrix pooled, Side side) {
  return MetaEmbeddingSet(l2_normalize_rows(pooled), side);
}

}  // namespace

MetaEmbeddingSet pool_single_last(const Matrix& tokens, Side side) {
  if (tokens.rows == 0) raise(errc::empty_input, "no token states to pool");
  Matrix out(1, tokens.cols);
  std::copy_n(tokens.row(tokens.rows - 1), tokens.cols, out.row(0));
  return normalize_pooled(std::move(out), side);
}

MetaEmbeddingSet pool_single_mean(const Matrix& tokens, Side side) {
  return pool_split(tokens, 1, side);
}

MetaEmbeddingSet pool_split(const Matrix& tokens, std::size_t segments, Side side) {
  if (segments < 1) raise(errc::out_of_range, "segments must be >= 1");
  if (tokens.rows == 0) raise(errc::empty_input, "no token states to pool");
  if (tokens.rows < segments) {
    raise(errc::too_few_tokens, std::to_string(tokens.rows) + " tokens cannot fill " +
                                    std::to_string(segments) + " segments");
  }
  const std::size_t base = tokens.rows / segments;
  const std::size_t remainder = tokens.rows % segments;
  Matrix out(segments, tokens.cols);
  std::size_t row = 0;
  for (std::size_t s = 0; s < segments; ++s) {
    const std::size_t take = base + (s < remainder ? 1 : 0);
    for (std::size_t j = 0; j < tokens.cols; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < take; ++i) acc += tokens(row + i, j);
      out(s, j) = static_cast<float>(acc / static_cast<double>(take));
    }
    row += take;
  }
  return normalize_pooled(std::move(out), side);
}

}  // namespace mvr
