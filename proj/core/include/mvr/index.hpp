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
#include <string>
#include <vector>

#include "mvr/bf16.hpp"
#include "mvr/core.hpp"
#include "mvr/lateint.hpp"

namespace mvr {

enum class Dtype : std::uint8_t { f32 = 0, bf16 = 1 };

inline std::size_t bytes_per_value(Dtype dtype) { return dtype == Dtype::bf16 ? 2 : 4; }

/// Payload size accounting for the data block only (ids and header excluded).
struct MemoryReport {
  std::uint64_t bytes = 0;
  double gib = 0.0;  // bytes / 2^30, rounded half-up to 2 decimals
};

/// Prefix-nested candidate store: N candidates, each with its first R_c
/// meta-embedding rows packed row-major in ingestion order. Immutable after
/// build/load; any leading slice of rows is itself a valid coarser index.
class NestedIndex {
 public:
  std::size_t num_docs() const { return doc_ids_.size(); }
  std::uint32_t vectors_per_doc() const { return r_c_; }  // R_c
  std::uint32_t dim() const { return d_; }                // D
  Dtype dtype() const { return dtype_; }
  const std::vector<std::uint64_t>& doc_ids() const { return doc_ids_; }

  /// Writes the first `rows` vectors of candidate `doc` as float into `out`
  /// (rows * dim values).
  void dequantize_doc(std::size_t doc, std::uint32_t rows, float* out) const;

  const std::vector<std::uint16_t>& payload_bf16() const { return data16_; }
  const std::vector<float>& payload_f32() const { return data32_; }

  friend NestedIndex build_index(std::span<const std::pair<std::uint64_t, MetaEmbeddingSet>>,
                                 std::uint32_t, Dtype);
  friend NestedIndex truncate_index(const NestedIndex&, std::uint32_t);
  friend NestedIndex load_index(const std::string&);

 private:
  std::vector<std::uint64_t> doc_ids_;
  std::uint32_t r_c_ = 0;
  std::uint32_t d_ = 0;
  Dtype dtype_ = Dtype::bf16;
  std::vector<std::uint16_t> data16_;  // used when dtype == bf16
  std::vector<float> data32_;          // used when dtype == f32
};

/// Builds an index holding the first `r_c` rows of each candidate set,
/// quantized per `dtype`, in input order.
NestedIndex build_index(std::span<const std::pair<std::uint64_t, MetaEmbeddingSet>> candidates,
                        std::uint32_t r_c, Dtype dtype);

/// Keeps the first `r_c_new` stored rows per candidate, bit-identically.
NestedIndex truncate_index(const NestedIndex& idx, std::uint32_t r_c_new);

MemoryReport memory_report(const NestedIndex& idx);

/// Accounting without materializing an index.
MemoryReport memory_report(std::uint64_t n, std::uint64_t r_c, std::uint64_t d, Dtype dtype);

/// MVI1 container: magic, version, dtype, N, R_c, D, doc ids, payload,
/// trailing CRC32. Little-endian throughout.
void save_index(const NestedIndex& idx, const std::string& path);
NestedIndex load_index(const std::string& path);

/// Exhaustive scoring + deterministic ranking: top_k(score_batch(...)) with
/// entries carrying the index's doc ids. RankedList::query_id is the query's
/// position in `queries`.
std::vector<RankedList> search(const NestedIndex& idx,
                               std::span<const MetaEmbeddingSet> queries, const Budget& b,
                               std::uint32_t k, std::uint32_t batch_size = 1000);

/// One record of an MVE1 embedding file.
struct EmbeddingRecord {
  std::uint64_t id = 0;
  Matrix vectors;  // R x D, raw (not necessarily normalized)
};

struct EmbeddingFile {
  std::uint32_t r = 0;
  std::uint32_t d = 0;
  std::vector<EmbeddingRecord> records;
};

EmbeddingFile read_embedding_file(const std::string& path);
void write_embedding_file(const std::string& path,
                          std::span<const std::pair<std::uint64_t, MetaEmbeddingSet>> records);

/// Normalizes file records into candidate sets ready for build_index/search.
std::vector<std::pair<std::uint64_t, MetaEmbeddingSet>> ingest(const EmbeddingFile& file,
                                                               Side side);

}  // namespace mvr
