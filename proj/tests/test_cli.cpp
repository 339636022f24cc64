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

#include <fstream>
#include <sstream>

#include "mvr/cli.hpp"
#include "mvr/index.hpp"
#include "test_util.hpp"

using namespace mvr;

namespace {

struct CliResult {
  int exit_code = 0;
  std::string out, err;
};

CliResult run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  CliResult result;
  result.exit_code = cli::run(args, out, err);
  result.out = out.str();
  result.err = err.str();
  return result;
}

std::string slurp_text(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_demo_embeddings(Rng& rng, const std::string& path, std::size_t n, std::size_t r,
                           std::size_t d, std::uint64_t id_base = 0) {
  std::vector<std::pair<std::uint64_t, MetaEmbeddingSet>> records;
  for (std::size_t i = 0; i < n; ++i) {
    records.emplace_back(id_base + i, mvrtest::random_set(rng, r, d, Side::candidate));
  }
  write_embedding_file(path, records);
}

}  // namespace

TEST_CASE("cli rejects unknown commands and flags") {
  CHECK(run_cli({"frobnicate"}).exit_code == 2);
  CHECK(run_cli({"flops", "--budget", "1:1", "--dim", "8", "--n", "10", "--bogus"}).exit_code ==
        2);
  CHECK(run_cli({}).exit_code == 2);
  CHECK(run_cli({"--help"}).exit_code == 0);
}

TEST_CASE("cli flops prints the analytic accounting") {
  const CliResult result =
      run_cli({"flops", "--budget", "16:64", "--dim", "3584", "--n", "100000"});
  CHECK(result.exit_code == 0);
  CHECK(result.out.find("scoring FLOPs: 734003200000 (734.00 GFLOPs)") != std::string::npos);
  CHECK(result.out.find("45875200000 (42.72 GiB, bf16)") != std::string::npos);

  CHECK(run_cli({"flops", "--budget", "0:4", "--dim", "8", "--n", "10"}).exit_code == 2);
}

TEST_CASE("cli pipeline: ingest-check, build-index, truncate, search, eval, sweep, bench") {
  mvrtest::TempDir dir;
  Rng rng(101);
  const std::string cand_path = dir.file("cands.mve");
  const std::string query_path = dir.file("queries.mve");
  write_demo_embeddings(rng, cand_path, 10, 8, 12);

  // queries reuse three candidate sets so self-retrieval is checkable
  const EmbeddingFile cands = read_embedding_file(cand_path);
  std::vector<std::pair<std::uint64_t, MetaEmbeddingSet>> queries;
  for (std::size_t i : {0u, 3u, 7u}) {
    queries.emplace_back(i, MetaEmbeddingSet::normalized(cands.records[i].vectors, Side::query));
  }
  write_embedding_file(query_path, queries);

  {
    const CliResult result = run_cli({"ingest-check", "--embeddings", cand_path});
    CHECK(result.exit_code == 0);
    CHECK(result.out.find("records: 10") != std::string::npos);
    CHECK(result.out.find("ok") != std::string::npos);
  }

  const std::string index_path = dir.file("idx.mvi");
  CHECK(run_cli({"build-index", "--embeddings", cand_path, "--r-c", "8", "--out", index_path})
            .exit_code == 0);

  {
    const std::string trunc_path = dir.file("idx4.mvi");
    CHECK(run_cli({"truncate", "--index", index_path, "--r-c", "4", "--out", trunc_path})
              .exit_code == 0);
    CHECK(load_index(trunc_path).vectors_per_doc() == 4);
  }

  const std::string rankings_path = dir.file("run.tsv");
  {
    const CliResult result = run_cli({"search", "--index", index_path, "--queries", query_path,
                                      "--budget", "8:8", "--k", "5", "--out", rankings_path});
    CHECK(result.exit_code == 0);
    const std::string tsv = slurp_text(rankings_path);
    CHECK(tsv.find("0\t1\t0\t") == 0);  // query 0 retrieves doc 0 first
    CHECK(tsv.find("3\t1\t3\t") != std::string::npos);
    CHECK(tsv.find("7\t1\t7\t") != std::string::npos);
  }

  const std::string qrels_path = dir.file("qrels.tsv");
  {
    std::ofstream out(qrels_path);
    out << "0\t0\t1\n3\t3\t1\n7\t7\t1\n";
  }
  {
    const CliResult result =
        run_cli({"eval", "--rankings", rankings_path, "--qrels", qrels_path});
    CHECK(result.exit_code == 0);
    CHECK(result.out.find("precision@1\t1.000000") != std::string::npos);
    CHECK(result.out.find("ndcg@5\t1.000000") != std::string::npos);
  }

  {
    const std::string sweep_path = dir.file("sweep.csv");
    const CliResult result =
        run_cli({"sweep", "--index", index_path, "--queries", query_path, "--qrels", qrels_path,
                 "--ladder", "1:1,4:4,8:8", "--metric", "p1", "--out", sweep_path});
    CHECK(result.exit_code == 0);
    const std::string csv = slurp_text(sweep_path);
    CHECK(csv.find("r_q,r_c,metric,value,flops,index_bytes\n") == 0);
    CHECK(csv.find("8,8,precision@1,1.000000,") != std::string::npos);

    // composed manually: flops of a ladder point matches the sweep column
    const CliResult flops =
        run_cli({"flops", "--budget", "8:8", "--dim", "12", "--n", "10"});
    const std::uint64_t expect = scoring_flops(Budget(8, 8), 12, 10);
    CHECK(flops.out.find(std::to_string(expect)) != std::string::npos);
    CHECK(csv.find("," + std::to_string(expect) + ",") != std::string::npos);
  }

  {
    const CliResult result = run_cli({"sweep", "--index", index_path, "--queries", query_path,
                                      "--qrels", qrels_path, "--ladder", "1:1,8:8", "--json"});
    CHECK(result.exit_code == 0);
    CHECK(result.out.find("\"metric\": \"precision@1\"") != std::string::npos);
  }

  {
    const CliResult result = run_cli({"bench", "--index", index_path, "--queries", query_path,
                                      "--budget", "4:8", "--repeats", "3"});
    CHECK(result.exit_code == 0);
    CHECK(result.out.find("latency over 3 runs: mean ") != std::string::npos);
  }
}

TEST_CASE("cli maps error classes to distinct exit codes") {
  mvrtest::TempDir dir;
  Rng rng(102);
  const std::string cand_path = dir.file("cands.mve");
  write_demo_embeddings(rng, cand_path, 4, 4, 6);
  const std::string index_path = dir.file("idx.mvi");
  REQUIRE(run_cli({"build-index", "--embeddings", cand_path, "--r-c", "4", "--out", index_path})
              .exit_code == 0);

  SUBCASE("truncated index file exits 3 with a diagnostic") {
    std::ifstream in(index_path, std::ios::binary);
    std::vector<char> bytes(std::istreambuf_iterator<char>(in), {});
    bytes.resize(bytes.size() - 5);
    const std::string broken = dir.file("broken.mvi");
    std::ofstream out(broken, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();

    const CliResult result = run_cli({"search", "--index", broken, "--queries", cand_path,
                                      "--budget", "1:1", "--k", "1"});
    CHECK(result.exit_code == 3);
    CHECK(result.err.find("TruncatedFile") != std::string::npos);
  }
  SUBCASE("missing file exits 3") {
    CHECK(run_cli({"search", "--index", dir.file("none.mvi"), "--queries", cand_path,
                   "--budget", "1:1", "--k", "1"})
              .exit_code == 3);
  }
  SUBCASE("budget beyond the index exits 4") {
    CHECK(run_cli({"search", "--index", index_path, "--queries", cand_path, "--budget", "1:9",
                   "--k", "1"})
              .exit_code == 4);
  }
  SUBCASE("k beyond the candidate count exits 4") {
    CHECK(run_cli({"search", "--index", index_path, "--queries", cand_path, "--budget", "1:1",
                   "--k", "9"})
              .exit_code == 4);
  }
  SUBCASE("zero rows in an embedding file exit 4") {
    // hand-write an MVE1 file with one all-zero row
    const std::string zero_path = dir.file("zero.mve");
    std::ofstream out(zero_path, std::ios::binary);
    const char magic[4] = {'M', 'V', 'E', '1'};
    out.write(magic, 4);
    const std::uint16_t version = 1;
    out.write(reinterpret_cast<const char*>(&version), 2);
    const std::uint8_t dtype = 0, reserved = 0;
    out.write(reinterpret_cast<const char*>(&dtype), 1);
    out.write(reinterpret_cast<const char*>(&reserved), 1);
    const std::uint64_t count = 1;
    out.write(reinterpret_cast<const char*>(&count), 8);
    const std::uint32_t r = 1, d = 3;
    out.write(reinterpret_cast<const char*>(&r), 4);
    out.write(reinterpret_cast<const char*>(&d), 4);
    const std::uint64_t id = 0;
    out.write(reinterpret_cast<const char*>(&id), 8);
    const float zeros[3] = {0.0f, 0.0f, 0.0f};
    out.write(reinterpret_cast<const char*>(zeros), sizeof(zeros));
    out.close();

    const CliResult result = run_cli({"ingest-check", "--embeddings", zero_path});
    CHECK(result.exit_code == 4);
    CHECK(result.err.find("ZeroRow") != std::string::npos);
  }
}

TEST_CASE("cli train-toy writes deterministic artifacts and exports the eval split") {
  mvrtest::TempDir dir;
  const std::vector<std::string> base{
      "train-toy",    "--seed",    "7",  "--steps",  "30",         "--classes", "4",
      "--features",   "8",         "--dim", "4",     "--r-q",      "2",         "--r-c",
      "4",            "--ladder",  "1:1,2:4",        "--n-train",  "64",        "--n-eval",
      "16",           "--batch-size", "8"};

  std::vector<std::string> first = base;
  first.insert(first.end(), {"--out-params", dir.file("p1.json"), "--out-history",
                             dir.file("h1.csv"), "--export-dir", dir.file("export")});
  const CliResult a = run_cli(first);
  CHECK(a.exit_code == 0);
  CHECK(a.out.find("budget 1:1") != std::string::npos);

  std::vector<std::string> second = base;
  second.insert(second.end(),
                {"--out-params", dir.file("p2.json"), "--out-history", dir.file("h2.csv")});
  const CliResult b = run_cli(second);
  CHECK(b.exit_code == 0);
  CHECK(slurp_text(dir.file("h1.csv")) == slurp_text(dir.file("h2.csv")));
  CHECK(slurp_text(dir.file("p1.json")) == slurp_text(dir.file("p2.json")));

  const std::string history = slurp_text(dir.file("h1.csv"));
  CHECK(history.rfind("step,total,g0,g1\n", 0) == 0);

  // the exported eval split feeds straight back into the search pipeline
  const std::string index_path = dir.file("eval.mvi");
  CHECK(run_cli({"build-index", "--embeddings", dir.file("export/candidates.mve"), "--r-c", "4",
                 "--out", index_path})
            .exit_code == 0);
  const CliResult swept =
      run_cli({"sweep", "--index", index_path, "--queries", dir.file("export/queries.mve"),
               "--qrels", dir.file("export/qrels.tsv"), "--ladder", "1:1,2:4"});
  CHECK(swept.exit_code == 0);
  CHECK(swept.out.find("r_q,r_c,metric,value,flops,index_bytes") != std::string::npos);
}

TEST_CASE("cli train-toy reads config files with flag overrides") {
  mvrtest::TempDir dir;
  {
    std::ofstream cfg(dir.file("toy.cfg"));
    cfg << "classes = 4\nfeatures = 8\ndim = 4\nr_q = 2\nr_c = 4\n";
    cfg << "ladder = 1:1,2:4\nsteps = 5\nbatch_size = 8\nn_train = 16\nn_eval = 8\nseed = 3\n";
  }
  const CliResult result =
      run_cli({"train-toy", "--config", dir.file("toy.cfg"), "--steps", "8", "--out-params",
               dir.file("p.json"), "--out-history", dir.file("h.csv")});
  CHECK(result.exit_code == 0);
  CHECK(result.out.find("trained 8 steps (seed 3)") != std::string::npos);

  {
    std::ofstream cfg(dir.file("bad.cfg"));
    cfg << "nonsense = 1\n";
  }
  const CliResult bad = run_cli({"train-toy", "--config", dir.file("bad.cfg")});
  CHECK(bad.exit_code == 3);
}
