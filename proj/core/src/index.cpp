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

#include "mvr/index.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

namespace mvr {

namespace {

constexpr char kIndexMagic[4] = {'M', 'V', 'I', '1'};
constexpr char kEmbeddingMagic[4] = {'M', 'V', 'E', '1'};
constexpr std::uint16_t kFormatVersion = 1;

class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    const std::size_t at = buf_.size();
    buf_.resize(at + sizeof(T));
    std::memcpy(buf_.data() + at, &value, sizeof(T));
  }

  void put_bytes(const void* data, std::size_t size) {
    const std::size_t at = buf_.size();
    buf_.resize(at + size);
    std::memcpy(buf_.data() + at, data, size);
  }

  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  ByteReader(const char* data, std::size_t size) : data_(data), size_(size) {}

  template <typename T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    require(sizeof(T));
    T value;
    std::memcpy(&value, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  void get_bytes(void* out, std::size_t size) {
    require(size);
    std::memcpy(out, data_ + pos_, size);
    pos_ += size;
  }

  std::size_t remaining() const { return size_ - pos_; }

 private:
  void require(std::size_t size) const {
    if (pos_ + size > size_) raise(errc::truncated_file, "file ends inside a field");
  }

  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(const char* data, std::size_t size) {
  uLong crc = crc32_z(0L, Z_NULL, 0);
  // crc32_z takes the full size_t range, but chunk anyway to stay clear of
  // any 32-bit uInt path inside zlib builds.
  constexpr std::size_t kChunk = std::size_t(1) << 30;
  while (size > 0) {
    const std::size_t step = size < kChunk ? size : kChunk;
    crc = crc32_z(crc, reinterpret_cast<const Bytef*>(data), step);
    data += step;
    size -= step;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(errc::io, "cannot open '" + path + "' for reading");
  in.seekg(0, std::ios::end);
  const std::streamoff size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<char> buf(static_cast<std::size_t>(size));
  if (size > 0) in.read(buf.data(), size);
  if (!in) raise(errc::io, "failed reading '" + path + "'");
  return buf;
}

void write_file(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(errc::io, "cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) raise(errc::io, "failed writing '" + path + "'");
}

}  // namespace

void NestedIndex::dequantize_doc(std::size_t doc, std::uint32_t rows, float* out) const {
  const std::size_t stride = static_cast<std::size_t>(r_c_) * d_;
  const std::size_t count = static_cast<std::size_t>(rows) * d_;
  if (dtype_ == Dtype::bf16) {
    const std::uint16_t* src = data16_.data() + doc * stride;
    for (std::size_t i = 0; i < count; ++i) out[i] = dequantize_bf16(src[i]);
  } else {
    const float* src = data32_.data() + doc * stride;
    std::memcpy(out, src, count * sizeof(float));
  }
}

NestedIndex build_index(std::span<const std::pair<std::uint64_t, MetaEmbeddingSet>> candidates,
                        std::uint32_t r_c, Dtype dtype) {
  if (candidates.empty()) raise(errc::empty_index, "no candidates to index");
  if (r_c < 1) raise(errc::out_of_range, "r_c must be >= 1");

  const std::size_t d = candidates.front().second.dim();
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(candidates.size());

  NestedIndex idx;
  idx.r_c_ = r_c;
  idx.d_ = static_cast<std::uint32_t>(d);
  idx.dtype_ = dtype;
  idx.doc_ids_.reserve(candidates.size());
  const std::size_t stride = static_cast<std::size_t>(r_c) * d;
  if (dtype == Dtype::bf16) {
    idx.data16_.reserve(candidates.size() * stride);
  } else {
    idx.data32_.reserve(candidates.size() * stride);
  }

  for (const auto& [doc_id, set] : candidates) {
    if (!seen.insert(doc_id).second) {
      raise(errc::duplicate_doc_id, "doc id " + std::to_string(doc_id) + " appears twice");
    }
    if (set.dim() != d) {
      raise(errc::inconsistent_dimension, "doc " + std::to_string(doc_id) + " has D=" +
                                              std::to_string(set.dim()) + ", expected " +
                                              std::to_string(d));
    }
    if (set.count() < r_c) {
      raise(errc::budget_exceeds_vectors, "doc " + std::to_string(doc_id) + " has only " +
                                              std::to_string(set.count()) + " vectors, need " +
                                              std::to_string(r_c));
    }
    idx.doc_ids_.push_back(doc_id);
    const float* src = set.vectors().data.data();
    if (dtype == Dtype::bf16) {
      for (std::size_t i = 0; i < stride; ++i) idx.data16_.push_back(quantize_bf16(src[i]));
    } else {
      idx.data32_.insert(idx.data32_.end(), src, src + stride);
    }
  }
  return idx;
}

NestedIndex truncate_index(const NestedIndex& idx, std::uint32_t r_c_new) {
  if (r_c_new < 1 || r_c_new > idx.vectors_per_doc()) {
    raise(errc::out_of_range, "r_c_new=" + std::to_string(r_c_new) + " not in [1, " +
                                  std::to_string(idx.vectors_per_doc()) + "]");
  }
  NestedIndex out;
  out.doc_ids_ = idx.doc_ids_;
  out.r_c_ = r_c_new;
  out.d_ = idx.d_;
  out.dtype_ = idx.dtype_;
  const std::size_t old_stride = static_cast<std::size_t>(idx.r_c_) * idx.d_;
  const std::size_t new_stride = static_cast<std::size_t>(r_c_new) * idx.d_;
  if (idx.dtype_ == Dtype::bf16) {
    out.data16_.reserve(idx.num_docs() * new_stride);
    for (std::size_t doc = 0; doc < idx.num_docs(); ++doc) {
      const std::uint16_t* src = idx.data16_.data() + doc * old_stride;
      out.data16_.insert(out.data16_.end(), src, src + new_stride);
    }
  } else {
    out.data32_.reserve(idx.num_docs() * new_stride);
    for (std::size_t doc = 0; doc < idx.num_docs(); ++doc) {
      const float* src = idx.data32_.data() + doc * old_stride;
      out.data32_.insert(out.data32_.end(), src, src + new_stride);
    }
  }
  return out;
}

MemoryReport memory_report(std::uint64_t n, std::uint64_t r_c, std::uint64_t d, Dtype dtype) {
  MemoryReport report;
  report.bytes = n * r_c * d * bytes_per_value(dtype);
  const double gib = static_cast<double>(report.bytes) / static_cast<double>(1ull << 30);
  report.gib = std::floor(gib * 100.0 + 0.5) / 100.0;
  return report;
}

MemoryReport memory_report(const NestedIndex& idx) {
  return memory_report(idx.num_docs(), idx.vectors_per_doc(), idx.dim(), idx.dtype());
}

void save_index(const NestedIndex& idx, const std::string& path) {
  ByteWriter w;
  w.put_bytes(kIndexMagic, sizeof(kIndexMagic));
  w.put<std::uint16_t>(kFormatVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(idx.dtype()));
  w.put<std::uint8_t>(0);  // reserved
  w.put<std::uint64_t>(idx.num_docs());
  w.put<std::uint32_t>(idx.vectors_per_doc());
  w.put<std::uint32_t>(idx.dim());
  w.put_bytes(idx.doc_ids().data(), idx.doc_ids().size() * sizeof(std::uint64_t));
  if (idx.dtype() == Dtype::bf16) {
    w.put_bytes(idx.payload_bf16().data(), idx.payload_bf16().size() * sizeof(std::uint16_t));
  } else {
    w.put_bytes(idx.payload_f32().data(), idx.payload_f32().size() * sizeof(float));
  }
  const std::uint32_t crc = crc32_of(w.bytes().data(), w.bytes().size());
  w.put<std::uint32_t>(crc);
  write_file(path, w.bytes());
}

NestedIndex load_index(const std::string& path) {
  const std::vector<char> bytes = read_file(path);
  if (bytes.size() < sizeof(kIndexMagic)) raise(errc::truncated_file, "file shorter than magic");
  if (std::memcmp(bytes.data(), kIndexMagic, sizeof(kIndexMagic)) != 0) {
    raise(errc::bad_magic, "'" + path + "' is not an MVI1 index");
  }

  ByteReader r(bytes.data(), bytes.size());
  char magic[4];
  r.get_bytes(magic, sizeof(magic));
  const auto version = r.get<std::uint16_t>();
  if (version != kFormatVersion) {
    raise(errc::version_unsupported, "index format version " + std::to_string(version));
  }
  const auto dtype_raw = r.get<std::uint8_t>();
  if (dtype_raw > 1) raise(errc::version_unsupported, "unknown dtype " + std::to_string(dtype_raw));
  r.get<std::uint8_t>();  // reserved
  const auto n = r.get<std::uint64_t>();
  const auto r_c = r.get<std::uint32_t>();
  const auto d = r.get<std::uint32_t>();
  const Dtype dtype = static_cast<Dtype>(dtype_raw);

  const std::uint64_t values = n * static_cast<std::uint64_t>(r_c) * d;
  const std::uint64_t declared =
      24 + n * 8 + values * bytes_per_value(dtype) + 4;  // header + ids + payload + crc
  if (bytes.size() < declared) {
    raise(errc::truncated_file, "file holds " + std::to_string(bytes.size()) +
                                    " bytes, header declares " + std::to_string(declared));
  }
  if (bytes.size() > declared) {
    raise(errc::truncated_file, "file holds " + std::to_string(bytes.size()) +
                                    " bytes beyond the declared " + std::to_string(declared));
  }

  const std::uint32_t want_crc = crc32_of(bytes.data(), bytes.size() - 4);
  std::uint32_t have_crc;
  std::memcpy(&have_crc, bytes.data() + bytes.size() - 4, 4);
  if (want_crc != have_crc) raise(errc::checksum_mismatch, "CRC32 mismatch in '" + path + "'");

  NestedIndex idx;
  idx.r_c_ = r_c;
  idx.d_ = d;
  idx.dtype_ = dtype;
  idx.doc_ids_.resize(n);
  r.get_bytes(idx.doc_ids_.data(), n * sizeof(std::uint64_t));
  std::unordered_set<std::uint64_t> seen(idx.doc_ids_.begin(), idx.doc_ids_.end());
  if (seen.size() != idx.doc_ids_.size()) {
    raise(errc::duplicate_doc_id, "index file repeats a doc id");
  }
  if (dtype == Dtype::bf16) {
    idx.data16_.resize(values);
    r.get_bytes(idx.data16_.data(), values * sizeof(std::uint16_t));
  } else {
    idx.data32_.resize(values);
    r.get_bytes(idx.data32_.data(), values * sizeof(float));
  }
  return idx;
}

std::vector<RankedList> search(const NestedIndex& idx,
                               std::span<const MetaEmbeddingSet> queries, const Budget& b,
                               std::uint32_t k, std::uint32_t batch_size) {
  const ScoreMatrix scores = score_batch(queries, idx, b, batch_size);
  return top_k(scores, k, idx.doc_ids());
}

EmbeddingFile read_embedding_file(const std::string& path) {
  const std::vector<char> bytes = read_file(path);
  if (bytes.size() < sizeof(kEmbeddingMagic)) {
    raise(errc::truncated_file, "file shorter than magic");
  }
  if (std::memcmp(bytes.data(), kEmbeddingMagic, sizeof(kEmbeddingMagic)) != 0) {
    raise(errc::bad_magic, "'" + path + "' is not an MVE1 embedding file");
  }

  ByteReader r(bytes.data(), bytes.size());
  char magic[4];
  r.get_bytes(magic, sizeof(magic));
  const auto version = r.get<std::uint16_t>();
  if (version != kFormatVersion) {
    raise(errc::version_unsupported, "embedding format version " + std::to_string(version));
  }
  const auto dtype_raw = r.get<std::uint8_t>();
  if (dtype_raw != 0) {
    raise(errc::version_unsupported, "embedding input must be f32 (dtype 0)");
  }
  r.get<std::uint8_t>();  // reserved
  const auto count = r.get<std::uint64_t>();
  const auto rows = r.get<std::uint32_t>();
  const auto dim = r.get<std::uint32_t>();
  if (rows < 1 || dim < 1) raise(errc::bad_format, "embedding file declares R or D of zero");

  const std::uint64_t per_record = 8 + std::uint64_t(rows) * dim * 4;
  const std::uint64_t declared = 24 + count * per_record;
  if (bytes.size() != declared) {
    raise(errc::truncated_file, "file holds " + std::to_string(bytes.size()) +
                                    " bytes, header declares " + std::to_string(declared));
  }

  EmbeddingFile file;
  file.r = rows;
  file.d = dim;
  file.records.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    EmbeddingRecord& rec = file.records[i];
    rec.id = r.get<std::uint64_t>();
    rec.vectors = Matrix(rows, dim);
    r.get_bytes(rec.vectors.data.data(), std::size_t(rows) * dim * sizeof(float));
  }
  return file;
}

void write_embedding_file(const std::string& path,
                          std::span<const std::pair<std::uint64_t, MetaEmbeddingSet>> records) {
  if (records.empty()) raise(errc::empty_input, "no embedding records to write");
  const std::uint32_t rows = static_cast<std::uint32_t>(records.front().second.count());
  const std::uint32_t dim = static_cast<std::uint32_t>(records.front().second.dim());

  ByteWriter w;
  w.put_bytes(kEmbeddingMagic, sizeof(kEmbeddingMagic));
  w.put<std::uint16_t>(kFormatVersion);
  w.put<std::uint8_t>(0);  // dtype f32
  w.put<std::uint8_t>(0);  // reserved
  w.put<std::uint64_t>(records.size());
  w.put<std::uint32_t>(rows);
  w.put<std::uint32_t>(dim);
  for (const auto& [id, set] : records) {
    if (set.count() != rows || set.dim() != dim) {
      raise(errc::inconsistent_dimension, "embedding records must share R and D");
    }
    w.put<std::uint64_t>(id);
    w.put_bytes(set.vectors().data.data(), std::size_t(rows) * dim * sizeof(float));
  }
  write_file(path, w.bytes());
}

std::vector<std::pair<std::uint64_t, MetaEmbeddingSet>> ingest(const EmbeddingFile& file,
                                                               Side side) {
  std::vector<std::pair<std::uint64_t, MetaEmbeddingSet>> out;
  out.reserve(file.records.size());
  for (const EmbeddingRecord& rec : file.records) {
    out.emplace_back(rec.id, MetaEmbeddingSet::normalized(rec.vectors, side));
  }
  return out;
}

}  // namespace mvr
