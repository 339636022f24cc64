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

#include <doctest.h>

#include <cstring>
#include <fstream>

#include "mvr/index.hpp"
#include "test_util.hpp"

using namespace mvr;
using mvrtest::raised_code;

namespace {

std::vector<std::pair<std::uint64_t, MetaEmbeddingSet>> random_candidates(Rng& rng, std::size_t n,
                                                                          std::size_t r,
                                                                          std::size_t d) {
  std::vector<std::pair<std::uint64_t, MetaEmbeddingSet>> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.emplace_back(i, mvrtest::random_set(rng, r, d, Side::candidate));
  }
  return out;
}

bool index_bit_equal(const NestedIndex& a, const NestedIndex& b) {
  return a.doc_ids() == b.doc_ids() && a.vectors_per_doc() == b.vectors_per_doc() &&
         a.dim() == b.dim() && a.dtype() == b.dtype() && a.payload_bf16() == b.payload_bf16() &&
         a.payload_f32() == b.payload_f32();
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(out);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("build_index stores first rows only at the coarsest budget") {
  Rng rng(51);
  const auto candidates = random_candidates(rng, 2, 64, 4);
  const NestedIndex idx = build_index(candidates, 1, Dtype::bf16);
  CHECK(idx.num_docs() == 2);
  CHECK(idx.vectors_per_doc() == 1);
  std::vector<float> row(4);
  for (std::size_t doc = 0; doc < 2; ++doc) {
    idx.dequantize_doc(doc, 1, row.data());
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(row[j] == dequantize_bf16(quantize_bf16(candidates[doc].second.vectors()(0, j))));
    }
  }
}

TEST_CASE("build_index at full r_c keeps the whole layout") {
  Rng rng(52);
  const auto candidates = random_candidates(rng, 3, 64, 4);
  const NestedIndex idx = build_index(candidates, 64, Dtype::bf16);
  CHECK(idx.vectors_per_doc() == 64);
  CHECK(idx.payload_bf16().size() == 3u * 64u * 4u);
}

TEST_CASE("build_index rejects duplicates, ragged dims and short sets") {
  Rng rng(53);
  auto candidates = random_candidates(rng, 2, 4, 4);
  candidates[1].first = candidates[0].first;
  CHECK(raised_code([&] { build_index(candidates, 2, Dtype::bf16); }) == errc::duplicate_doc_id);

  auto ragged = random_candidates(rng, 1, 4, 4);
  ragged.emplace_back(9, mvrtest::random_set(rng, 4, 6, Side::candidate));
  CHECK(raised_code([&] { build_index(ragged, 2, Dtype::bf16); }) ==
        errc::inconsistent_dimension);

  const auto shallow = random_candidates(rng, 2, 3, 4);
  CHECK(raised_code([&] { build_index(shallow, 4, Dtype::bf16); }) ==
        errc::budget_exceeds_vectors);

  CHECK(raised_code([&] { build_index({}, 1, Dtype::bf16); }) == errc::empty_index);
}

TEST_CASE("truncate_index keeps leading vectors bit-identically") {
  Rng rng(54);
  const auto candidates = random_candidates(rng, 5, 16, 6);
  const NestedIndex full = build_index(candidates, 16, Dtype::bf16);

  SUBCASE("truncating to R_c is the identity") {
    CHECK(index_bit_equal(truncate_index(full, 16), full));
  }
  SUBCASE("build-then-truncate equals direct build") {
    CHECK(index_bit_equal(truncate_index(full, 4), build_index(candidates, 4, Dtype::bf16)));
  }
  SUBCASE("bounds are enforced") {
    CHECK(raised_code([&] { truncate_index(full, 0); }) == errc::out_of_range);
    CHECK(raised_code([&] { truncate_index(full, 17); }) == errc::out_of_range);
  }
}

TEST_CASE("memory_report reproduces the published accounting rows that are self-consistent") {
  // bytes = N * R_c * D * 2 for bf16; GiB = bytes / 2^30 rounded half-up.
  CHECK(memory_report(100000, 64, 3584, Dtype::bf16).bytes == 45'875'200'000ull);
  CHECK(memory_report(100000, 64, 3584, Dtype::bf16).gib == 42.72);
  CHECK(memory_report(100000, 16, 3584, Dtype::bf16).gib == 10.68);
  CHECK(memory_report(100000, 8, 3584, Dtype::bf16).gib == 5.34);
  CHECK(memory_report(100000, 4, 3584, Dtype::bf16).gib == 2.67);
  // 716,800,000 bytes is 0.6676 GiB, which rounds to 0.67.
  CHECK(memory_report(100000, 1, 3584, Dtype::bf16).bytes == 716'800'000ull);
  CHECK(memory_report(100000, 1, 3584, Dtype::bf16).gib == 0.67);
}

TEST_CASE("bf16 storage keeps stored vectors within 4e-3 of unit norm") {
  Rng rng(50);
  const NestedIndex idx = build_index(random_candidates(rng, 10, 6, 48), 6, Dtype::bf16);
  std::vector<float> rows(6 * 48);
  for (std::size_t doc = 0; doc < idx.num_docs(); ++doc) {
    idx.dequantize_doc(doc, 6, rows.data());
    for (std::size_t r = 0; r < 6; ++r) {
      double sumsq = 0.0;
      for (std::size_t j = 0; j < 48; ++j) {
        sumsq += double(rows[r * 48 + j]) * double(rows[r * 48 + j]);
      }
      CHECK(std::fabs(std::sqrt(sumsq) - 1.0) <= 4e-3);
    }
  }
}

TEST_CASE("memory_report scales linearly with truncation") {
  Rng rng(55);
  const NestedIndex full = build_index(random_candidates(rng, 7, 12, 5), 12, Dtype::bf16);
  const MemoryReport whole = memory_report(full);
  for (std::uint32_t r : {1u, 3u, 6u, 12u}) {
    const MemoryReport part = memory_report(truncate_index(full, r));
    CHECK(part.bytes * 12 == whole.bytes * r);
  }
  CHECK(memory_report(truncate_index(full, 12)).bytes ==
        7ull * 12ull * 5ull * 2ull);
}

TEST_CASE("save/load round-trips bit-identically") {
  Rng rng(56);
  mvrtest::TempDir dir;
  for (Dtype dtype : {Dtype::bf16, Dtype::f32}) {
    const NestedIndex idx = build_index(random_candidates(rng, 6, 5, 9), 5, dtype);
    const std::string path = dir.file("roundtrip.mvi");
    save_index(idx, path);
    CHECK(index_bit_equal(load_index(path), idx));
  }
}

TEST_CASE("load_index rejects corrupted containers") {
  Rng rng(57);
  mvrtest::TempDir dir;
  const NestedIndex idx = build_index(random_candidates(rng, 4, 3, 5), 3, Dtype::bf16);
  const std::string path = dir.file("idx.mvi");
  save_index(idx, path);
  const std::vector<char> good = slurp(path);

  SUBCASE("wrong magic") {
    std::vector<char> bad = good;
    bad[0] = 'X';
    spit(path, bad);
    CHECK(raised_code([&] { load_index(path); }) == errc::bad_magic);
  }
  SUBCASE("unsupported version") {
    std::vector<char> bad = good;
    bad[4] = 9;
    spit(path, bad);
    CHECK(raised_code([&] { load_index(path); }) == errc::version_unsupported);
  }
  SUBCASE("shorter than declared") {
    std::vector<char> bad(good.begin(), good.end() - 7);
    spit(path, bad);
    CHECK(raised_code([&] { load_index(path); }) == errc::truncated_file);
  }
  SUBCASE("flipped payload byte") {
    std::vector<char> bad = good;
    bad[good.size() / 2] ^= 0x40;
    spit(path, bad);
    CHECK(raised_code([&] { load_index(path); }) == errc::checksum_mismatch);
  }
  SUBCASE("missing file") {
    CHECK(raised_code([&] { load_index(dir.file("nope.mvi")); }) == errc::io);
  }
}

TEST_CASE("search retrieves the matching candidate first") {
  Rng rng(58);
  const auto candidates = random_candidates(rng, 10, 6, 12);
  const NestedIndex idx = build_index(candidates, 6, Dtype::bf16);
  const MetaEmbeddingSet query(candidates[7].second.vectors(), Side::query);
  const auto lists = search(idx, std::vector<MetaEmbeddingSet>{query}, Budget(6, 6), 1);
  REQUIRE(lists.size() == 1);
  CHECK(lists[0].entries[0].first == 7);
}

TEST_CASE("search at (1,1) equals single-vector retrieval on first rows") {
  Rng rng(59);
  const auto candidates = random_candidates(rng, 20, 4, 10);
  const NestedIndex idx = build_index(candidates, 4, Dtype::f32);
  std::vector<MetaEmbeddingSet> queries;
  for (int i = 0; i < 5; ++i) queries.push_back(mvrtest::random_set(rng, 4, 10, Side::query));

  const auto lists = search(idx, queries, Budget(1, 1), 20);
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    // oracle: dot product of first rows, sorted (score desc, doc asc)
    std::vector<std::pair<float, std::uint64_t>> expect;
    for (std::size_t n = 0; n < candidates.size(); ++n) {
      float dot = 0.0f;
      for (std::size_t k = 0; k < 10; ++k) {
        dot += queries[qi].vectors()(0, k) * candidates[n].second.vectors()(0, k);
      }
      expect.emplace_back(dot, n);
    }
    std::sort(expect.begin(), expect.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::size_t r = 0; r < expect.size(); ++r) {
      CHECK(lists[qi].entries[r].first == expect[r].second);
    }
  }
}

TEST_CASE("search rejects k beyond the candidate count") {
  Rng rng(60);
  const NestedIndex idx = build_index(random_candidates(rng, 3, 2, 4), 2, Dtype::bf16);
  std::vector<MetaEmbeddingSet> queries{mvrtest::random_set(rng, 2, 4, Side::query)};
  CHECK(raised_code([&] { search(idx, queries, Budget(2, 2), 4); }) == errc::k_too_large);
}

TEST_CASE("truncated and full indexes rank identically at shared budgets") {
  Rng rng(61);
  for (int round = 0; round < 25; ++round) {
    const std::size_t n = 2 + rng.below(20);
    const std::size_t r_c = 2 + rng.below(7);
    const std::size_t d = 2 + rng.below(10);
    const Dtype dtype = rng.below(2) == 0 ? Dtype::bf16 : Dtype::f32;
    const NestedIndex full = build_index(random_candidates(rng, n, r_c, d),
                                         static_cast<std::uint32_t>(r_c), dtype);
    const Budget budget(1 + rng.below(3), 1 + rng.below(r_c));
    const std::uint32_t keep =
        budget.r_c + static_cast<std::uint32_t>(rng.below(r_c - budget.r_c + 1));
    const NestedIndex trimmed = truncate_index(full, keep);

    std::vector<MetaEmbeddingSet> queries;
    for (int i = 0; i < 3; ++i) queries.push_back(mvrtest::random_set(rng, 3, d, Side::query));
    const std::uint32_t k = 1 + static_cast<std::uint32_t>(rng.below(n));
    const auto from_full = search(full, queries, budget, k);
    const auto from_trimmed = search(trimmed, queries, budget, k);
    REQUIRE(from_full.size() == from_trimmed.size());
    for (std::size_t qi = 0; qi < from_full.size(); ++qi) {
      CHECK(from_full[qi].entries == from_trimmed[qi].entries);
    }
  }
}

TEST_CASE("search through a saved and reloaded index is bit-identical") {
  Rng rng(62);
  mvrtest::TempDir dir;
  const NestedIndex idx = build_index(random_candidates(rng, 12, 6, 8), 6, Dtype::bf16);
  const std::string path = dir.file("search.mvi");
  save_index(idx, path);
  const NestedIndex reloaded = load_index(path);

  std::vector<MetaEmbeddingSet> queries;
  for (int i = 0; i < 4; ++i) queries.push_back(mvrtest::random_set(rng, 6, 8, Side::query));
  const auto a = search(idx, queries, Budget(3, 5), 12);
  const auto b = search(reloaded, queries, Budget(3, 5), 12);
  for (std::size_t qi = 0; qi < a.size(); ++qi) CHECK(a[qi].entries == b[qi].entries);
}

TEST_CASE("embedding files round-trip through write and read") {
  Rng rng(63);
  mvrtest::TempDir dir;
  std::vector<std::pair<std::uint64_t, MetaEmbeddingSet>> records;
  for (std::size_t i = 0; i < 5; ++i) {
    records.emplace_back(100 + i, mvrtest::random_set(rng, 3, 7, Side::query));
  }
  const std::string path = dir.file("q.mve");
  write_embedding_file(path, records);

  const EmbeddingFile file = read_embedding_file(path);
  CHECK(file.r == 3);
  CHECK(file.d == 7);
  REQUIRE(file.records.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(file.records[i].id == 100 + i);
    CHECK(file.records[i].vectors == records[i].second.vectors());
  }

  const auto sets = ingest(file, Side::query);
  REQUIRE(sets.size() == 5);
  CHECK(sets[0].second.count() == 3);
}

TEST_CASE("read_embedding_file rejects truncation and foreign files") {
  Rng rng(64);
  mvrtest::TempDir dir;
  std::vector<std::pair<std::uint64_t, MetaEmbeddingSet>> records{
      {1, mvrtest::random_set(rng, 2, 3, Side::query)}};
  const std::string path = dir.file("q.mve");
  write_embedding_file(path, records);
  const std::vector<char> good = slurp(path);

  std::vector<char> bad(good.begin(), good.end() - 3);
  spit(path, bad);
  CHECK(raised_code([&] { read_embedding_file(path); }) == errc::truncated_file);

  std::vector<char> magic = good;
  magic[2] = 'Q';
  spit(path, magic);
  CHECK(raised_code([&] { read_embedding_file(path); }) == errc::bad_magic);
}
