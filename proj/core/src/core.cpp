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

#include "mvr/core.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

namespace mvr {

const char* errc_name(errc code) noexcept {
  switch (code) {
    case errc::zero_row: return "ZeroRow";
    case errc::non_finite: return "NonFinite";
    case errc::not_normalized: return "NotNormalized";
    case errc::out_of_range: return "OutOfRange";
    case errc::not_increasing: return "NotIncreasing";
    case errc::last_group_mismatch: return "LastGroupMismatch";
    case errc::dimension_mismatch: return "DimensionMismatch";
    case errc::budget_exceeds_vectors: return "BudgetExceedsVectors";
    case errc::empty_index: return "EmptyIndex";
    case errc::k_too_large: return "KTooLarge";
    case errc::duplicate_doc_id: return "DuplicateDocId";
    case errc::inconsistent_dimension: return "InconsistentDimension";
    case errc::non_positive_temperature: return "NonPositiveTemperature";
    case errc::tie_near_max: return "TieNearMax";
    case errc::unknown_query: return "UnknownQuery";
    case errc::no_positive_judgment: return "NoPositiveJudgment";
    case errc::empty_input: return "EmptyInput";
    case errc::too_few_tokens: return "TooFewTokens";
    case errc::io: return "Io";
    case errc::bad_magic: return "BadMagic";
    case errc::version_unsupported: return "VersionUnsupported";
    case errc::truncated_file: return "TruncatedFile";
    case errc::checksum_mismatch: return "ChecksumMismatch";
    case errc::bad_format: return "BadFormat";
    case errc::usage: return "UsageError";
    case errc::divergence: return "Divergence";
  }
  return "Error";
}

int exit_code_for(errc code) noexcept {
  switch (code) {
    case errc::usage:
      return 2;
    case errc::io:
    case errc::bad_magic:
    case errc::version_unsupported:
    case errc::truncated_file:
    case errc::checksum_mismatch:
    case errc::bad_format:
      return 3;
    case errc::divergence:
      return 5;
    default:
      return 4;
  }
}

Matrix l2_normalize_rows(const Matrix& m) {
  if (m.rows == 0 || m.cols == 0) raise(errc::out_of_range, "empty matrix");
  if (!all_finite(m)) raise(errc::non_finite, "matrix has NaN/Inf entries");
  Matrix out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const float* src = m.row(i);
    double sumsq = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) {
      sumsq += static_cast<double>(src[j]) * static_cast<double>(src[j]);
    }
    const float norm = static_cast<float>(std::sqrt(sumsq));
    if (norm < 1e-12f) raise(errc::zero_row, "row " + std::to_string(i) + " has zero norm");
    float* dst = out.row(i);
    for (std::size_t j = 0; j < m.cols; ++j) dst[j] = src[j] / norm;
  }
  return out;
}

MetaEmbeddingSet::MetaEmbeddingSet(Matrix vectors, Side side)
    : vectors_(std::move(vectors)), side_(side) {
  if (vectors_.rows == 0 || vectors_.cols == 0) {
    raise(errc::out_of_range, "embedding set needs R >= 1 and D >= 1");
  }
  if (!all_finite(vectors_)) raise(errc::non_finite, "embedding set has NaN/Inf entries");
  for (std::size_t i = 0; i < vectors_.rows; ++i) {
    const float* row = vectors_.row(i);
    double sumsq = 0.0;
    for (std::size_t j = 0; j < vectors_.cols; ++j) {
      sumsq += static_cast<double>(row[j]) * static_cast<double>(row[j]);
    }
    const double norm = std::sqrt(sumsq);
    if (std::fabs(norm - 1.0) > kRowNormTol) {
      raise(errc::not_normalized,
            "row " + std::to_string(i) + " has norm " + std::to_string(norm));
    }
  }
}

MetaEmbeddingSet prefix(const MetaEmbeddingSet& set, std::size_t r) {
  if (r < 1 || r > set.count()) {
    raise(errc::out_of_range, "prefix length " + std::to_string(r) + " not in [1, " +
                                  std::to_string(set.count()) + "]");
  }
  Matrix out(r, set.dim());
  const Matrix& src = set.vectors();
  std::copy(src.data.begin(), src.data.begin() + r * src.cols, out.data.begin());
  return MetaEmbeddingSet(std::move(out), set.side());
}

Budget::Budget(std::uint32_t rq, std::uint32_t rc) : r_q(rq), r_c(rc) {
  if (r_q < 1 || r_c < 1) raise(errc::out_of_range, "budget counts must be >= 1");
}

void validate_ladder(const BudgetLadder& ladder, std::uint32_t model_r_q,
                     std::uint32_t model_r_c) {
  if (ladder.groups.empty()) raise(errc::out_of_range, "ladder has no groups");
  for (std::size_t g = 1; g < ladder.groups.size(); ++g) {
    const Budget& prev = ladder.groups[g - 1];
    const Budget& cur = ladder.groups[g];
    if (cur.r_q <= prev.r_q || cur.r_c <= prev.r_c) {
      raise(errc::not_increasing,
            "group " + std::to_string(g) + " (" + format_budget(cur) +
                ") does not strictly increase over " + format_budget(prev));
    }
  }
  const Budget& last = ladder.groups.back();
  if (last.r_q != model_r_q || last.r_c != model_r_c) {
    raise(errc::last_group_mismatch,
          "final group " + format_budget(last) + " != model (" + std::to_string(model_r_q) +
              "," + std::to_string(model_r_c) + ")");
  }
}

BudgetLadder default_ladder() {
  return BudgetLadder{{Budget(1, 1), Budget(2, 4), Budget(4, 8), Budget(8, 16), Budget(16, 64)}};
}

namespace {

std::uint32_t parse_count(std::string_view text, std::string_view what) {
  std::uint32_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    raise(errc::usage, "bad " + std::string(what) + " '" + std::string(text) + "'");
  }
  if (value < 1) raise(errc::usage, std::string(what) + " must be >= 1");
  return value;
}

}  // namespace

Budget parse_budget(std::string_view text) {
  const std::size_t colon = text.find(':');
  if (colon == std::string_view::npos || text.find(':', colon + 1) != std::string_view::npos) {
    raise(errc::usage, "budget must look like rq:rc, got '" + std::string(text) + "'");
  }
  const std::uint32_t rq = parse_count(text.substr(0, colon), "r_q");
  const std::uint32_t rc = parse_count(text.substr(colon + 1), "r_c");
  return Budget(rq, rc);
}

BudgetLadder parse_ladder(std::string_view text) {
  BudgetLadder ladder;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t comma = text.find(',', start);
    if (comma == std::string_view::npos) comma = text.size();
    ladder.groups.push_back(parse_budget(text.substr(start, comma - start)));
    start = comma + 1;
    if (comma == text.size()) break;
  }
  if (ladder.groups.empty()) raise(errc::usage, "ladder has no groups");
  return ladder;
}

std::string format_budget(const Budget& b) {
  return std::to_string(b.r_q) + ":" + std::to_string(b.r_c);
}

std::string format_ladder(const BudgetLadder& ladder) {
  std::string out;
  for (std::size_t g = 0; g < ladder.groups.size(); ++g) {
    if (g != 0) out += ',';
    out += format_budget(ladder.groups[g]);
  }
  return out;
}

}  // namespace mvr
