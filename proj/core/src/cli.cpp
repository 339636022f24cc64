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

#include "mvr/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <ostream>

#include "mvr/eval.hpp"
#include "mvr/index.hpp"
#include "mvr/train.hpp"

namespace mvr::cli {

namespace {

std::string fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  return buf;
}

Dtype parse_dtype(const std::string& text) {
  if (text == "bf16") return Dtype::bf16;
  if (text == "f32") return Dtype::f32;
  raise(errc::usage, "dtype must be bf16 or f32, got '" + text + "'");
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(errc::io, "cannot open '" + path + "' for writing");
  return out;
}

void write_rankings_tsv(std::ostream& out, std::span<const RankedList> rankings) {
  for (const RankedList& list : rankings) {
    for (std::size_t rank = 0; rank < list.entries.size(); ++rank) {
      out << list.query_id << '\t' << (rank + 1) << '\t' << list.entries[rank].first << '\t'
          << fixed(list.entries[rank].second, 6) << '\n';
    }
  }
}

std::vector<RankedList> read_rankings_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(errc::io, "cannot open '" + path + "'");
  std::vector<RankedList> rankings;
  std::map<std::uint64_t, std::size_t> position;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::array<std::string_view, 4> cols;
    std::size_t start = 0;
    for (std::size_t c = 0; c < 4; ++c) {
      const std::size_t tab = line.find('\t', start);
      const bool last = c == 3;
      if (last != (tab == std::string::npos)) {
        raise(errc::bad_format, "line " + std::to_string(line_no) + ": expected 4 columns");
      }
      cols[c] = std::string_view(line).substr(start, tab == std::string::npos ? line.size() - start
                                                                              : tab - start);
      start = tab + 1;
    }
    const auto parse_u64 = [&](std::string_view text) {
      std::uint64_t v = 0;
      const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || ptr != text.data() + text.size()) {
        raise(errc::bad_format, "line " + std::to_string(line_no) + ": bad integer '" +
                                    std::string(text) + "'");
      }
      return v;
    };
    const std::uint64_t query_id = parse_u64(cols[0]);
    const std::uint64_t rank = parse_u64(cols[1]);
    const std::uint64_t doc_id = parse_u64(cols[2]);
    float score = 0.0f;
    const auto [ptr, ec] =
        std::from_chars(cols[3].data(), cols[3].data() + cols[3].size(), score);
    if (ec != std::errc() || ptr != cols[3].data() + cols[3].size()) {
      raise(errc::bad_format, "line " + std::to_string(line_no) + ": bad score");
    }
    if (rank < 1) raise(errc::bad_format, "line " + std::to_string(line_no) + ": rank must be >= 1");

    auto [it, inserted] = position.try_emplace(query_id, rankings.size());
    if (inserted) {
      rankings.push_back(RankedList{query_id, {}});
    }
    auto& entries = rankings[it->second].entries;
    if (entries.size() < rank) entries.resize(rank, {0, 0.0f});
    entries[rank - 1] = {doc_id, score};
  }
  return rankings;
}

// ---- command configs ----------------------------------------------------

struct IngestCheckCmd {
  std::string embeddings;
};

struct BuildIndexCmd {
  std::string embeddings, out, dtype = "bf16";
  std::uint32_t r_c = 0;
};

struct TruncateCmd {
  std::string index, out;
  std::uint32_t r_c = 0;
};

struct SearchCmd {
  std::string index, queries, budget, out;
  std::uint32_t k = 10;
  std::uint32_t batch_size = 1000;
};

struct EvalCmd {
  std::string rankings, qrels, metric = "both";
  std::uint32_t k = 5;
};

struct SweepCmd {
  std::string index, queries, qrels, out;
  std::string ladder = "1:1,2:4,4:8,8:16,16:64";
  std::string metric = "p1";
  std::uint32_t batch_size = 1000;
  bool json = false;
};

struct FlopsCmd {
  std::string budget, dtype = "bf16";
  std::uint64_t dim = 0, n = 0;
};

struct BenchCmd {
  std::string index, queries, budget;
  std::uint32_t k = 10;
  std::uint32_t batch_size = 1000;
  std::uint32_t repeats = 10;
};

struct TrainToyCmd {
  std::string config;
  std::string out_params = "params.json";
  std::string out_history = "loss_history.csv";
  std::string export_dir;
  // flag presence tracked by CLI11 counts; values applied over the config
  std::uint64_t seed = 7;
  std::uint32_t steps = 500, batch_size = 32, classes = 16, features = 32, dim = 16, r_q = 16,
                r_c = 64;
  double lr = 0.05, tau = 0.03, noise_sigma = 0.1;
  std::uint64_t n_train = 2048, n_eval = 256;
  std::string ladder, weights;
};

int run_ingest_check(const IngestCheckCmd& cmd, std::ostream& out) {
  const EmbeddingFile file = read_embedding_file(cmd.embeddings);
  double max_dev = 0.0;
  for (const EmbeddingRecord& rec : file.records) {
    if (!all_finite(rec.vectors)) {
      raise(errc::non_finite, "record " + std::to_string(rec.id) + " has NaN/Inf values");
    }
    for (std::size_t i = 0; i < rec.vectors.rows; ++i) {
      double sumsq = 0.0;
      const float* row = rec.vectors.row(i);
      for (std::size_t j = 0; j < rec.vectors.cols; ++j) {
        sumsq += static_cast<double>(row[j]) * static_cast<double>(row[j]);
      }
      const double norm = std::sqrt(sumsq);
      if (norm < 1e-12) {
        raise(errc::zero_row, "record " + std::to_string(rec.id) + " row " + std::to_string(i) +
                                  " is zero");
      }
      max_dev = std::max(max_dev, std::fabs(norm - 1.0));
    }
  }
  out << "records: " << file.records.size() << "\n";
  out << "vectors per record (R): " << file.r << "\n";
  out << "dimension (D): " << file.d << "\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3e", max_dev);
  out << "max |row norm - 1|: " << buf << "\n";
  out << "ok\n";
  return 0;
}

int run_build_index(const BuildIndexCmd& cmd, std::ostream& out) {
  const EmbeddingFile file = read_embedding_file(cmd.embeddings);
  const auto candidates = ingest(file, Side::candidate);
  const NestedIndex idx = build_index(candidates, cmd.r_c, parse_dtype(cmd.dtype));
  save_index(idx, cmd.out);
  const MemoryReport report = memory_report(idx);
  out << "indexed " << idx.num_docs() << " candidates (R_c=" << idx.vectors_per_doc()
      << ", D=" << idx.dim() << ", " << (idx.dtype() == Dtype::bf16 ? "bf16" : "f32") << ") to "
      << cmd.out << "\n";
  out << "payload bytes: " << report.bytes << " (" << fixed(report.gib, 2) << " GiB)\n";
  return 0;
}

int run_truncate(const TruncateCmd& cmd, std::ostream& out) {
  const NestedIndex idx = load_index(cmd.index);
  const NestedIndex truncated = truncate_index(idx, cmd.r_c);
  save_index(truncated, cmd.out);
  out << "kept first " << cmd.r_c << " of " << idx.vectors_per_doc()
      << " vectors per candidate -> " << cmd.out << "\n";
  return 0;
}

int run_search(const SearchCmd& cmd, std::ostream& out) {
  const NestedIndex idx = load_index(cmd.index);
  const EmbeddingFile file = read_embedding_file(cmd.queries);
  const auto queries = ingest(file, Side::query);
  const Budget budget = parse_budget(cmd.budget);

  std::vector<MetaEmbeddingSet> sets;
  sets.reserve(queries.size());
  for (const auto& [id, set] : queries) sets.push_back(set);
  std::vector<RankedList> rankings = search(idx, sets, budget, cmd.k, cmd.batch_size);
  for (std::size_t i = 0; i < rankings.size(); ++i) rankings[i].query_id = queries[i].first;

  if (cmd.out.empty()) {
    write_rankings_tsv(out, rankings);
  } else {
    std::ofstream file_out = open_out(cmd.out);
    write_rankings_tsv(file_out, rankings);
  }
  return 0;
}

int run_eval(const EvalCmd& cmd, std::ostream& out) {
  if (cmd.metric != "p1" && cmd.metric != "ndcg5" && cmd.metric != "both") {
    raise(errc::usage, "metric must be p1, ndcg5 or both");
  }
  const std::vector<RankedList> rankings = read_rankings_tsv(cmd.rankings);
  if (rankings.empty()) raise(errc::empty_input, "no rankings in '" + cmd.rankings + "'");
  const Qrels qrels = Qrels::from_tsv(cmd.qrels);
  if (cmd.metric == "p1" || cmd.metric == "both") {
    out << "precision@1\t" << fixed(precision_at_1(rankings, qrels), 6) << "\n";
  }
  if (cmd.metric == "ndcg5" || cmd.metric == "both") {
    out << "ndcg@" << cmd.k << "\t" << fixed(ndcg_at_k(rankings, qrels, cmd.k), 6) << "\n";
  }
  return 0;
}

int run_sweep(const SweepCmd& cmd, std::ostream& out) {
  if (cmd.metric != "p1" && cmd.metric != "ndcg5") raise(errc::usage, "metric must be p1 or ndcg5");
  const NestedIndex idx = load_index(cmd.index);
  const EmbeddingFile file = read_embedding_file(cmd.queries);
  const auto queries = ingest(file, Side::query);
  const Qrels qrels = Qrels::from_tsv(cmd.qrels);
  const BudgetLadder ladder = parse_ladder(cmd.ladder);

  std::vector<MetaEmbeddingSet> sets;
  std::vector<std::uint64_t> ids;
  for (const auto& [id, set] : queries) {
    ids.push_back(id);
    sets.push_back(set);
  }
  MetricSpec metric;
  metric.kind = cmd.metric == "p1" ? MetricSpec::Kind::precision_at_1 : MetricSpec::Kind::ndcg_at_k;
  const std::vector<SweepPoint> points =
      budget_sweep(idx, sets, ids, qrels, ladder, metric, cmd.batch_size);

  const auto emit = [&](std::ostream& sink) {
    if (cmd.json) {
      nlohmann::json array = nlohmann::json::array();
      for (const SweepPoint& p : points) {
        array.push_back({{"r_q", p.budget.r_q},
                         {"r_c", p.budget.r_c},
                         {"metric", p.metric_name},
                         {"value", p.value},
                         {"flops", p.flops},
                         {"index_bytes", p.index_bytes}});
      }
      sink << array.dump(2) << "\n";
    } else {
      sink << "r_q,r_c,metric,value,flops,index_bytes\n";
      for (const SweepPoint& p : points) {
        sink << p.budget.r_q << ',' << p.budget.r_c << ',' << p.metric_name << ','
             << fixed(p.value, 6) << ',' << p.flops << ',' << p.index_bytes << "\n";
      }
    }
  };
  if (cmd.out.empty()) {
    emit(out);
  } else {
    std::ofstream file_out = open_out(cmd.out);
    emit(file_out);
  }
  return 0;
}

int run_flops(const FlopsCmd& cmd, std::ostream& out) {
  const Budget budget = parse_budget(cmd.budget);
  if (cmd.dim < 1 || cmd.n < 1) raise(errc::usage, "--dim and --n must be >= 1");
  const Dtype dtype = parse_dtype(cmd.dtype);
  const std::uint64_t flops = scoring_flops(budget, cmd.dim, cmd.n);
  const MemoryReport report = memory_report(cmd.n, budget.r_c, cmd.dim, dtype);
  out << "budget: " << format_budget(budget) << "  dim: " << cmd.dim
      << "  candidates: " << cmd.n << "\n";
  out << "scoring FLOPs: " << flops << " (" << fixed(static_cast<double>(flops) / 1e9, 2)
      << " GFLOPs)\n";
  out << "index bytes: " << report.bytes << " (" << fixed(report.gib, 2) << " GiB, "
      << (dtype == Dtype::bf16 ? "bf16" : "f32") << ")\n";
  return 0;
}

int run_bench(const BenchCmd& cmd, std::ostream& out) {
  if (cmd.repeats < 1) raise(errc::usage, "--repeats must be >= 1");
  const NestedIndex idx = load_index(cmd.index);
  const EmbeddingFile file = read_embedding_file(cmd.queries);
  const auto queries = ingest(file, Side::query);
  const Budget budget = parse_budget(cmd.budget);
  std::vector<MetaEmbeddingSet> sets;
  for (const auto& [id, set] : queries) sets.push_back(set);

  std::vector<double> millis;
  millis.reserve(cmd.repeats);
  for (std::uint32_t rep = 0; rep < cmd.repeats; ++rep) {
    const auto begin = std::chrono::steady_clock::now();
    const auto rankings = search(idx, sets, budget, cmd.k, cmd.batch_size);
    const auto end = std::chrono::steady_clock::now();
    millis.push_back(std::chrono::duration<double, std::milli>(end - begin).count());
    if (rankings.empty()) raise(errc::empty_input, "search produced no rankings");
  }
  double mean = 0.0;
  for (double v : millis) mean += v;
  mean /= millis.size();
  double var = 0.0;
  for (double v : millis) var += (v - mean) * (v - mean);
  const double stddev = millis.size() > 1 ? std::sqrt(var / (millis.size() - 1)) : 0.0;

  out << "scoring " << idx.num_docs() << " candidates x " << sets.size() << " queries at budget "
      << format_budget(budget) << " (k=" << cmd.k << ", batch_size=" << cmd.batch_size << ")\n";
  out << "latency over " << cmd.repeats << " runs: mean " << fixed(mean, 3) << " ms, std "
      << fixed(stddev, 3) << " ms\n";
  return 0;
}

nlohmann::json params_to_json(const ToyEncoderParams& p) {
  nlohmann::json j;
  j["side"] = p.side == Side::query ? "query" : "candidate";
  j["r"] = p.r;
  j["d"] = p.d;
  j["f"] = p.f;
  j["w"] = p.w.data;
  j["m"] = p.m.data;
  return j;
}

int run_train_toy(const TrainToyCmd& cmd, const CLI::App* sub, std::ostream& out) {
  TrainConfig cfg;
  if (!cmd.config.empty()) cfg = load_train_config(cmd.config);
  const auto given = [&](const std::string& flag) { return sub->count(flag) > 0; };
  if (given("--seed")) cfg.seed = cmd.seed;
  if (given("--steps")) cfg.steps = cmd.steps;
  if (given("--batch-size")) cfg.batch_size = cmd.batch_size;
  if (given("--classes")) cfg.classes = cmd.classes;
  if (given("--features")) cfg.features = cmd.features;
  if (given("--dim")) cfg.dim = cmd.dim;
  if (given("--r-q")) cfg.r_q = cmd.r_q;
  if (given("--r-c")) cfg.r_c = cmd.r_c;
  if (given("--lr")) cfg.lr = cmd.lr;
  if (given("--tau")) cfg.tau = cmd.tau;
  if (given("--noise-sigma")) cfg.noise_sigma = cmd.noise_sigma;
  if (given("--n-train")) cfg.n_train = cmd.n_train;
  if (given("--n-eval")) cfg.n_eval = cmd.n_eval;
  if (given("--ladder")) cfg.ladder = parse_ladder(cmd.ladder);
  if (given("--weights")) {
    cfg.weights.clear();
    std::size_t start = 0;
    const std::string& text = cmd.weights;
    while (start <= text.size()) {
      std::size_t comma = text.find(',', start);
      if (comma == std::string::npos) comma = text.size();
      const std::string item = text.substr(start, comma - start);
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
      if (ec != std::errc() || ptr != item.data() + item.size()) {
        raise(errc::usage, "bad weight '" + item + "'");
      }
      cfg.weights.push_back(value);
      start = comma + 1;
      if (comma == text.size()) break;
    }
  }

  const TrainResult result = train_toy(cfg);

  {
    std::ofstream history = open_out(cmd.out_history);
    history << "step,total";
    for (std::size_t g = 0; g < cfg.ladder.size(); ++g) history << ",g" << g;
    history << "\n";
    for (const StepLoss& step : result.history) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.9e", step.loss.total);
      history << step.step << ',' << buf;
      for (double v : step.loss.per_group) {
        std::snprintf(buf, sizeof(buf), "%.9e", v);
        history << ',' << buf;
      }
      history << "\n";
    }
  }

  {
    nlohmann::json j;
    j["config"] = {{"classes", cfg.classes},
                   {"features", cfg.features},
                   {"dim", cfg.dim},
                   {"r_q", cfg.r_q},
                   {"r_c", cfg.r_c},
                   {"ladder", format_ladder(cfg.ladder)},
                   {"tau", cfg.tau},
                   {"weights", cfg.weights.empty() ? std::vector<double>(cfg.ladder.size(), 1.0)
                                                   : cfg.weights},
                   {"lr", cfg.lr},
                   {"steps", cfg.steps},
                   {"batch_size", cfg.batch_size},
                   {"seed", cfg.seed},
                   {"n_train", cfg.n_train},
                   {"n_eval", cfg.n_eval},
                   {"noise_sigma", cfg.noise_sigma}};
    j["query_encoder"] = params_to_json(result.params_q);
    j["candidate_encoder"] = params_to_json(result.params_c);
    std::ofstream params = open_out(cmd.out_params);
    params << j.dump(1) << "\n";
  }

  if (!cmd.export_dir.empty()) {
    std::filesystem::create_directories(cmd.export_dir);
    const std::filesystem::path dir(cmd.export_dir);
    write_embedding_file((dir / "queries.mve").string(), result.eval_query_sets);
    write_embedding_file((dir / "candidates.mve").string(), result.eval_candidate_sets);
    result.dataset.eval_qrels.write_tsv((dir / "qrels.tsv").string());
  }

  out << "trained " << cfg.steps << " steps (seed " << cfg.seed << ")\n";
  if (!result.history.empty()) {
    out << "loss: initial " << fixed(result.history.front().loss.total, 6) << ", final "
        << fixed(result.history.back().loss.total, 6) << "\n";
  }
  for (std::size_t g = 0; g < result.precision_curve.size(); ++g) {
    const SweepPoint& p1 = result.precision_curve[g];
    const SweepPoint& ndcg = result.ndcg_curve[g];
    out << "budget " << format_budget(p1.budget) << "  precision@1 " << fixed(p1.value, 4)
        << "  ndcg@5 " << fixed(ndcg.value, 4) << "\n";
  }
  out << "wrote " << cmd.out_params << " and " << cmd.out_history << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"budget-laddered multi-vector retrieval engine"};
  app.require_subcommand(1);

  IngestCheckCmd ingest_cmd;
  auto* ingest_sub = app.add_subcommand("ingest-check", "validate an MVE1 embedding file");
  ingest_sub->add_option("--embeddings", ingest_cmd.embeddings, "MVE1 file")->required();

  BuildIndexCmd build_cmd;
  auto* build_sub = app.add_subcommand("build-index", "build an MVI1 index from embeddings");
  build_sub->add_option("--embeddings", build_cmd.embeddings, "MVE1 file")->required();
  build_sub->add_option("--r-c", build_cmd.r_c, "vectors kept per candidate")->required();
  build_sub->add_option("--dtype", build_cmd.dtype, "bf16 (default) or f32");
  build_sub->add_option("--out", build_cmd.out, "output MVI1 path")->required();

  TruncateCmd truncate_cmd;
  auto* truncate_sub = app.add_subcommand("truncate", "truncate an index to fewer vectors");
  truncate_sub->add_option("--index", truncate_cmd.index, "MVI1 file")->required();
  truncate_sub->add_option("--r-c", truncate_cmd.r_c, "vectors to keep")->required();
  truncate_sub->add_option("--out", truncate_cmd.out, "output MVI1 path")->required();

  SearchCmd search_cmd;
  auto* search_sub = app.add_subcommand("search", "rank candidates for queries");
  search_sub->add_option("--index", search_cmd.index, "MVI1 file")->required();
  search_sub->add_option("--queries", search_cmd.queries, "MVE1 file")->required();
  search_sub->add_option("--budget", search_cmd.budget, "rq:rc")->required();
  search_sub->add_option("--k", search_cmd.k, "results per query (default 10)");
  search_sub->add_option("--batch-size", search_cmd.batch_size, "candidate shard size");
  search_sub->add_option("--out", search_cmd.out, "output TSV (default stdout)");

  EvalCmd eval_cmd;
  auto* eval_sub = app.add_subcommand("eval", "score a ranking file against qrels");
  eval_sub->add_option("--rankings", eval_cmd.rankings, "TSV from search")->required();
  eval_sub->add_option("--qrels", eval_cmd.qrels, "TSV query/doc/relevance")->required();
  eval_sub->add_option("--metric", eval_cmd.metric, "p1, ndcg5 or both (default)");
  eval_sub->add_option("--k", eval_cmd.k, "ndcg cutoff (default 5)");

  SweepCmd sweep_cmd;
  auto* sweep_sub = app.add_subcommand("sweep", "quality/cost curve across a budget ladder");
  sweep_sub->add_option("--index", sweep_cmd.index, "MVI1 file")->required();
  sweep_sub->add_option("--queries", sweep_cmd.queries, "MVE1 file")->required();
  sweep_sub->add_option("--qrels", sweep_cmd.qrels, "TSV query/doc/relevance")->required();
  sweep_sub->add_option("--ladder", sweep_cmd.ladder, "rq:rc,... (default stock ladder)");
  sweep_sub->add_option("--metric", sweep_cmd.metric, "p1 (default) or ndcg5");
  sweep_sub->add_option("--batch-size", sweep_cmd.batch_size, "candidate shard size");
  sweep_sub->add_option("--out", sweep_cmd.out, "output path (default stdout)");
  sweep_sub->add_flag("--json", sweep_cmd.json, "emit JSON instead of CSV");

  FlopsCmd flops_cmd;
  auto* flops_sub = app.add_subcommand("flops", "analytic scoring cost and index memory");
  flops_sub->add_option("--budget", flops_cmd.budget, "rq:rc")->required();
  flops_sub->add_option("--dim", flops_cmd.dim, "embedding dimension")->required();
  flops_sub->add_option("--n", flops_cmd.n, "candidate count")->required();
  flops_sub->add_option("--dtype", flops_cmd.dtype, "bf16 (default) or f32");

  BenchCmd bench_cmd;
  auto* bench_sub = app.add_subcommand("bench", "wall-clock scoring latency (informational)");
  bench_sub->add_option("--index", bench_cmd.index, "MVI1 file")->required();
  bench_sub->add_option("--queries", bench_cmd.queries, "MVE1 file")->required();
  bench_sub->add_option("--budget", bench_cmd.budget, "rq:rc")->required();
  bench_sub->add_option("--k", bench_cmd.k, "results per query");
  bench_sub->add_option("--batch-size", bench_cmd.batch_size, "candidate shard size");
  bench_sub->add_option("--repeats", bench_cmd.repeats, "timing runs (default 10)");

  TrainToyCmd train_cmd;
  auto* train_sub = app.add_subcommand("train-toy", "train the toy encoder on synthetic data");
  train_sub->add_option("--config", train_cmd.config, "key = value config file");
  train_sub->add_option("--seed", train_cmd.seed, "RNG seed (default 7)");
  train_sub->add_option("--steps", train_cmd.steps, "SGD steps (default 500)");
  train_sub->add_option("--batch-size", train_cmd.batch_size, "minibatch size (default 32)");
  train_sub->add_option("--classes", train_cmd.classes, "synthetic classes (default 16)");
  train_sub->add_option("--features", train_cmd.features, "input features (default 32)");
  train_sub->add_option("--dim", train_cmd.dim, "embedding dimension (default 16)");
  train_sub->add_option("--r-q", train_cmd.r_q, "query-side vectors (default 16)");
  train_sub->add_option("--r-c", train_cmd.r_c, "candidate-side vectors (default 64)");
  train_sub->add_option("--lr", train_cmd.lr, "learning rate (default 0.05)");
  train_sub->add_option("--tau", train_cmd.tau, "temperature (default 0.03)");
  train_sub->add_option("--noise-sigma", train_cmd.noise_sigma, "class noise (default 0.1)");
  train_sub->add_option("--n-train", train_cmd.n_train, "training triples (default 2048)");
  train_sub->add_option("--n-eval", train_cmd.n_eval, "held-out triples (default 256)");
  train_sub->add_option("--ladder", train_cmd.ladder, "rq:rc,... (default stock ladder)");
  train_sub->add_option("--weights", train_cmd.weights, "comma-joined group weights");
  train_sub->add_option("--out-params", train_cmd.out_params, "params JSON path");
  train_sub->add_option("--out-history", train_cmd.out_history, "loss history CSV path");
  train_sub->add_option("--export-dir", train_cmd.export_dir,
                        "write queries.mve, candidates.mve, qrels.tsv for the eval split");

  std::vector<std::string> argv_vec;
  argv_vec.reserve(args.size() + 1);
  argv_vec.push_back("mvr");
  argv_vec.insert(argv_vec.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const std::string& a : argv_vec) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (ingest_sub->parsed()) return run_ingest_check(ingest_cmd, out);
    if (build_sub->parsed()) return run_build_index(build_cmd, out);
    if (truncate_sub->parsed()) return run_truncate(truncate_cmd, out);
    if (search_sub->parsed()) return run_search(search_cmd, out);
    if (eval_sub->parsed()) return run_eval(eval_cmd, out);
    if (sweep_sub->parsed()) return run_sweep(sweep_cmd, out);
    if (flops_sub->parsed()) return run_flops(flops_cmd, out);
    if (bench_sub->parsed()) return run_bench(bench_cmd, out);
    if (train_sub->parsed()) return run_train_toy(train_cmd, train_sub, out);
    err << "usage error: no command\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace mvr::cli
