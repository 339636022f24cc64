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

#include "mvr/train.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>

namespace mvr {

namespace {

template <typename Real>
struct ScoredGroup {
  Real score = Real(0);
  double min_gap = std::numeric_limits<double>::infinity();
};

/// Group score with per-query-row argmax (lowest index wins ties) and the
/// smallest top-2 gap seen. The value is bit-identical to maxsim_kernel on
/// the same rows.
template <typename Real>
ScoredGroup<Real> score_with_argmax(const MatT<Real>& q, const MatT<Real>& c, std::uint32_t r_q,
                                    std::uint32_t r_c, std::uint32_t* argmax) {
  const std::size_t d = q.cols;
  ScoredGroup<Real> out;
  for (std::size_t i = 0; i < r_q; ++i) {
    const Real* qi = q.row(i);
    Real best = Real(0);
    Real second = Real(0);
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < r_c; ++j) {
      const Real* cj = c.row(j);
      Real dot = Real(0);
      for (std::size_t k = 0; k < d; ++k) dot += qi[k] * cj[k];
      if (j == 0) {
        best = dot;
      } else if (dot > best) {
        second = best;
        best = dot;
        best_j = j;
      } else if (j == 1 || dot > second) {
        second = dot;
      }
    }
    out.score += best;
    argmax[i] = static_cast<std::uint32_t>(best_j);
    if (r_c >= 2) {
      out.min_gap =
          std::min(out.min_gap, static_cast<double>(best) - static_cast<double>(second));
    }
  }
  return out;
}

/// Pulls an embedding-row gradient back through L2 normalization and the
/// linear map: gv = (ge - (ge . e) e) / ||v||, then gm += gv and
/// gw += gv x^T. Accumulation at 64-bit.
template <typename Real>
void backward_item(const detail::EncodedItem<Real>& item, const ToyParamsT<Real>& p,
                   const Real* x, const MatT<double>& g_rows, MatT<double>& gw,
                   MatT<double>& gm) {
  for (std::size_t row = 0; row < p.r; ++row) {
    const double norm = static_cast<double>(item.norms[row]);
    double projected = 0.0;
    for (std::size_t col = 0; col < p.d; ++col) {
      projected += g_rows(row, col) * static_cast<double>(item.rows(row, col));
    }
    for (std::size_t col = 0; col < p.d; ++col) {
      const double gv =
          (g_rows(row, col) - projected * static_cast<double>(item.rows(row, col))) / norm;
      if (gv == 0.0) continue;
      gm(row, col) += gv;
      double* gw_row = gw.row(row * p.d + col);
      for (std::size_t k = 0; k < p.f; ++k) gw_row[k] += gv * static_cast<double>(x[k]);
    }
  }
}

template <typename Real>
MatT<Real> narrow(const MatT<double>& m) {
  MatT<Real> out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] = static_cast<Real>(m.data[i]);
  return out;
}

}  // namespace

MetaEmbeddingSet encode(const ToyEncoderParams& p, std::span<const float> features) {
  return MetaEmbeddingSet(encode_rows<float>(p, features), p.side);
}

Matrix similarity_matrix(std::span<const MetaEmbeddingSet> queries,
                         std::span<const MetaEmbeddingSet> candidates, const Budget& g,
                         double tau) {
  if (tau <= 0.0) raise(errc::non_positive_temperature, "tau must be > 0");
  if (queries.empty() || candidates.empty()) raise(errc::empty_input, "empty batch");
  const float tau_f = static_cast<float>(tau);
  Matrix s(queries.size(), candidates.size());
  for (std::size_t u = 0; u < queries.size(); ++u) {
    for (std::size_t v = 0; v < candidates.size(); ++v) {
      s(u, v) = group_score(queries[u], candidates[v], g) / tau_f;
    }
  }
  return s;
}

double infonce_group_loss(const Matrix& s, std::span<const float> hard_neg_scores) {
  return infonce_group_loss_t<float>(s, hard_neg_scores);
}

template <typename Real>
LossBreakdown mmr_loss_rows(std::span<const MatT<Real>> queries,
                            std::span<const MatT<Real>> positives,
                            std::span<const MatT<Real>> negatives, const BudgetLadder& ladder,
                            double tau, std::span<const double> weights) {
  const std::size_t b = queries.size();
  if (b == 0) raise(errc::empty_input, "empty batch");
  if (positives.size() != b || negatives.size() != b) {
    raise(errc::dimension_mismatch, "queries, positives and hard negatives must share B");
  }
  if (tau <= 0.0) raise(errc::non_positive_temperature, "tau must be > 0");
  if (ladder.groups.empty()) raise(errc::out_of_range, "ladder has no groups");
  if (weights.size() != ladder.size()) {
    raise(errc::dimension_mismatch, "need one weight per ladder group");
  }

  const std::size_t d = queries.front().cols;
  std::size_t min_q_rows = queries.front().rows;
  std::size_t min_c_rows = positives.front().rows;
  for (const auto& m : queries) {
    if (m.cols != d) raise(errc::inconsistent_dimension, "query sets must share D");
    min_q_rows = std::min(min_q_rows, m.rows);
  }
  for (std::size_t u = 0; u < b; ++u) {
    if (positives[u].cols != d || negatives[u].cols != d) {
      raise(errc::inconsistent_dimension, "candidate sets must share D with queries");
    }
    min_c_rows = std::min({min_c_rows, positives[u].rows, negatives[u].rows});
  }

  LossBreakdown out;
  out.tau = tau;
  out.weights.assign(weights.begin(), weights.end());
  const Real tau_r = static_cast<Real>(tau);

  MatT<Real> s(b, b);
  std::vector<Real> hard(b);
  for (const Budget& g : ladder.groups) {
    if (g.r_q > min_q_rows || g.r_c > min_c_rows) {
      raise(errc::budget_exceeds_vectors, "ladder group " + format_budget(g) +
                                              " exceeds encoded rows (" +
                                              std::to_string(min_q_rows) + "," +
                                              std::to_string(min_c_rows) + ")");
    }
    for (std::size_t u = 0; u < b; ++u) {
      const Real* q_data = queries[u].data.data();
      for (std::size_t v = 0; v < b; ++v) {
        s(u, v) =
            detail::maxsim_kernel(q_data, g.r_q, positives[v].data.data(), g.r_c, d) / tau_r;
      }
      hard[u] = detail::maxsim_kernel(q_data, g.r_q, negatives[u].data.data(), g.r_c, d) / tau_r;
    }
    out.per_group.push_back(infonce_group_loss_t(s, std::span<const Real>(hard)));
  }

  out.total = 0.0;
  for (std::size_t gi = 0; gi < out.per_group.size(); ++gi) {
    out.total += out.weights[gi] * out.per_group[gi];
  }
  return out;
}

template LossBreakdown mmr_loss_rows<float>(std::span<const MatT<float>>,
                                            std::span<const MatT<float>>,
                                            std::span<const MatT<float>>, const BudgetLadder&,
                                            double, std::span<const double>);
template LossBreakdown mmr_loss_rows<double>(std::span<const MatT<double>>,
                                             std::span<const MatT<double>>,
                                             std::span<const MatT<double>>, const BudgetLadder&,
                                             double, std::span<const double>);

LossBreakdown mmr_loss(const BatchEmbeddings& batch, const BudgetLadder& ladder, double tau,
                       std::span<const double> weights) {
  std::vector<Matrix> queries, positives, negatives;
  queries.reserve(batch.queries.size());
  positives.reserve(batch.positives.size());
  negatives.reserve(batch.negatives.size());
  for (const auto& set : batch.queries) queries.push_back(set.vectors());
  for (const auto& set : batch.positives) positives.push_back(set.vectors());
  for (const auto& set : batch.negatives) negatives.push_back(set.vectors());
  return mmr_loss_rows<float>(queries, positives, negatives, ladder, tau, weights);
}

template <typename Real>
std::pair<LossBreakdown, GradientsT<Real>> loss_and_gradient(
    const ToyParamsT<Real>& params_q, const ToyParamsT<Real>& params_c,
    const TrainingBatchT<Real>& batch, const BudgetLadder& ladder, double tau,
    std::span<const double> weights, const GradientOptions& opts) {
  detail::check_params(params_q);
  detail::check_params(params_c);
  if (tau <= 0.0) raise(errc::non_positive_temperature, "tau must be > 0");
  const std::size_t b = batch.queries.rows;
  if (b == 0) raise(errc::empty_input, "empty batch");
  if (batch.positives.rows != b || batch.negatives.rows != b) {
    raise(errc::dimension_mismatch, "queries, positives and hard negatives must share B");
  }
  if (batch.queries.cols != params_q.f) {
    raise(errc::dimension_mismatch, "query features do not match encoder F");
  }
  if (batch.positives.cols != params_c.f || batch.negatives.cols != params_c.f) {
    raise(errc::dimension_mismatch, "candidate features do not match encoder F");
  }
  if (!all_finite(batch.queries) || !all_finite(batch.positives) || !all_finite(batch.negatives)) {
    raise(errc::non_finite, "batch features not finite");
  }
  validate_ladder(ladder, params_q.r, params_c.r);
  if (weights.size() != ladder.size()) {
    raise(errc::dimension_mismatch, "need one weight per ladder group");
  }

  std::vector<detail::EncodedItem<Real>> eq(b), ec(b), en(b);
  for (std::size_t u = 0; u < b; ++u) {
    eq[u] = detail::encode_item(params_q, batch.queries.row(u));
    ec[u] = detail::encode_item(params_c, batch.positives.row(u));
    en[u] = detail::encode_item(params_c, batch.negatives.row(u));
  }

  std::vector<MatT<double>> g_eq(b, MatT<double>(params_q.r, params_q.d));
  std::vector<MatT<double>> g_ec(b, MatT<double>(params_c.r, params_c.d));
  std::vector<MatT<double>> g_en(b, MatT<double>(params_c.r, params_c.d));

  LossBreakdown breakdown;
  breakdown.tau = tau;
  breakdown.weights.assign(weights.begin(), weights.end());
  const Real tau_r = static_cast<Real>(tau);

  MatT<double> s(b, b);
  std::vector<double> hard(b);
  std::vector<std::uint32_t> argmax_in, argmax_neg;
  for (std::size_t gi = 0; gi < ladder.size(); ++gi) {
    const Budget& g = ladder.groups[gi];
    const std::uint32_t rq = g.r_q;
    const std::uint32_t rc = g.r_c;
    argmax_in.assign(b * b * std::size_t(rq), 0);
    argmax_neg.assign(b * std::size_t(rq), 0);

    double min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t u = 0; u < b; ++u) {
      for (std::size_t v = 0; v < b; ++v) {
        auto res = score_with_argmax(eq[u].rows, ec[v].rows, rq, rc,
                                     argmax_in.data() + (u * b + v) * rq);
        s(u, v) = static_cast<double>(res.score / tau_r);
        min_gap = std::min(min_gap, res.min_gap);
      }
      auto res = score_with_argmax(eq[u].rows, en[u].rows, rq, rc, argmax_neg.data() + u * rq);
      hard[u] = static_cast<double>(res.score / tau_r);
      min_gap = std::min(min_gap, res.min_gap);
    }
    if (opts.tie_check && min_gap < opts.tie_epsilon) {
      raise(errc::tie_near_max, "top-2 MaxSim gap " + std::to_string(min_gap) + " at group " +
                                    format_budget(g) + " is below " +
                                    std::to_string(opts.tie_epsilon) + "; resample the batch");
    }

    const double group_weight = weights[gi];
    const double winv = group_weight / (static_cast<double>(b) * tau);
    double loss_acc = 0.0;
    for (std::size_t u = 0; u < b; ++u) {
      double row_max = hard[u];
      for (std::size_t v = 0; v < b; ++v) row_max = std::max(row_max, s(u, v));
      double z = std::exp(hard[u] - row_max);
      for (std::size_t v = 0; v < b; ++v) z += std::exp(s(u, v) - row_max);
      loss_acc += -(s(u, u) - row_max - std::log(z));

      for (std::size_t v = 0; v < b; ++v) {
        const double p = std::exp(s(u, v) - row_max) / z;
        const double coef = winv * (p - (u == v ? 1.0 : 0.0));
        if (coef == 0.0) continue;
        const std::uint32_t* arg = argmax_in.data() + (u * b + v) * rq;
        for (std::uint32_t i = 0; i < rq; ++i) {
          const std::uint32_t j = arg[i];
          double* gq_row = g_eq[u].row(i);
          double* gc_row = g_ec[v].row(j);
          const Real* q_row = eq[u].rows.row(i);
          const Real* c_row = ec[v].rows.row(j);
          for (std::size_t col = 0; col < params_q.d; ++col) {
            gq_row[col] += coef * static_cast<double>(c_row[col]);
            gc_row[col] += coef * static_cast<double>(q_row[col]);
          }
        }
      }
      const double p_neg = std::exp(hard[u] - row_max) / z;
      const double coef_neg = winv * p_neg;
      if (coef_neg != 0.0) {
        const std::uint32_t* arg = argmax_neg.data() + u * rq;
        for (std::uint32_t i = 0; i < rq; ++i) {
          const std::uint32_t j = arg[i];
          double* gq_row = g_eq[u].row(i);
          double* gn_row = g_en[u].row(j);
          const Real* q_row = eq[u].rows.row(i);
          const Real* n_row = en[u].rows.row(j);
          for (std::size_t col = 0; col < params_q.d; ++col) {
            gq_row[col] += coef_neg * static_cast<double>(n_row[col]);
            gn_row[col] += coef_neg * static_cast<double>(q_row[col]);
          }
        }
      }
    }
    breakdown.per_group.push_back(loss_acc / static_cast<double>(b));
  }

  breakdown.total = 0.0;
  for (std::size_t gi = 0; gi < breakdown.per_group.size(); ++gi) {
    breakdown.total += breakdown.weights[gi] * breakdown.per_group[gi];
  }

  MatT<double> gw_q(params_q.w.rows, params_q.w.cols);
  MatT<double> gm_q(params_q.r, params_q.d);
  MatT<double> gw_c(params_c.w.rows, params_c.w.cols);
  MatT<double> gm_c(params_c.r, params_c.d);
  for (std::size_t u = 0; u < b; ++u) {
    backward_item(eq[u], params_q, batch.queries.row(u), g_eq[u], gw_q, gm_q);
    backward_item(ec[u], params_c, batch.positives.row(u), g_ec[u], gw_c, gm_c);
    backward_item(en[u], params_c, batch.negatives.row(u), g_en[u], gw_c, gm_c);
  }

  GradientsT<Real> grads{narrow<Real>(gw_q), narrow<Real>(gm_q), narrow<Real>(gw_c),
                         narrow<Real>(gm_c)};
  return {std::move(breakdown), std::move(grads)};
}

template std::pair<LossBreakdown, GradientsT<float>> loss_and_gradient<float>(
    const ToyParamsT<float>&, const ToyParamsT<float>&, const TrainingBatchT<float>&,
    const BudgetLadder&, double, std::span<const double>, const GradientOptions&);
template std::pair<LossBreakdown, GradientsT<double>> loss_and_gradient<double>(
    const ToyParamsT<double>&, const ToyParamsT<double>&, const TrainingBatchT<double>&,
    const BudgetLadder&, double, std::span<const double>, const GradientOptions&);

Gradients loss_gradient(const ToyEncoderParams& params_q, const ToyEncoderParams& params_c,
                        const TrainingBatch& batch, const BudgetLadder& ladder, double tau,
                        std::span<const double> weights, const GradientOptions& opts) {
  return loss_and_gradient<float>(params_q, params_c, batch, ladder, tau, weights, opts).second;
}

namespace {

SyntheticDataset make_synthetic_with_rng(Rng& rng, std::uint32_t n_classes,
                                         std::uint32_t features, std::size_t n_train,
                                         std::size_t n_eval, double noise_sigma) {
  SyntheticDataset ds;
  ds.centroids = Matrix(n_classes, features);
  for (std::size_t c = 0; c < n_classes; ++c) {
    float* row = ds.centroids.row(c);
    double norm = 0.0;
    do {
      double sumsq = 0.0;
      for (std::size_t k = 0; k < features; ++k) {
        row[k] = static_cast<float>(rng.gaussian());
        sumsq += static_cast<double>(row[k]) * static_cast<double>(row[k]);
      }
      norm = std::sqrt(sumsq);
    } while (norm < 1e-9);
    for (std::size_t k = 0; k < features; ++k) row[k] = static_cast<float>(row[k] / norm);
  }

  std::vector<std::uint32_t> nearest(n_classes, 0);
  for (std::uint32_t c = 0; c < n_classes; ++c) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::uint32_t other = 0; other < n_classes; ++other) {
      if (other == c) continue;
      double dot = 0.0;
      for (std::size_t k = 0; k < features; ++k) {
        dot += static_cast<double>(ds.centroids(c, k)) * static_cast<double>(ds.centroids(other, k));
      }
      if (dot > best) {
        best = dot;
        nearest[c] = other;
      }
    }
  }

  const auto fill_split = [&](Matrix& queries, Matrix& positives, Matrix& negatives,
                              std::vector<std::uint32_t>& classes, std::size_t n) {
    queries = Matrix(n, features);
    positives = Matrix(n, features);
    negatives = Matrix(n, features);
    classes.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::uint32_t cls = static_cast<std::uint32_t>(k % n_classes);
      classes[k] = cls;
      const float* own = ds.centroids.row(cls);
      const float* other = ds.centroids.row(nearest[cls]);
      for (std::size_t j = 0; j < features; ++j) {
        queries(k, j) = static_cast<float>(own[j] + noise_sigma * rng.gaussian());
      }
      for (std::size_t j = 0; j < features; ++j) {
        positives(k, j) = static_cast<float>(own[j] + noise_sigma * rng.gaussian());
      }
      for (std::size_t j = 0; j < features; ++j) {
        negatives(k, j) = static_cast<float>(other[j] + noise_sigma * rng.gaussian());
      }
    }
  };
  fill_split(ds.train_queries, ds.train_positives, ds.train_negatives, ds.train_classes, n_train);
  fill_split(ds.eval_queries, ds.eval_positives, ds.eval_negatives, ds.eval_classes, n_eval);

  if (n_eval > 0) {
    Qrels::JudgmentMap judgments;
    for (std::size_t qk = 0; qk < n_eval; ++qk) {
      auto& docs = judgments[qk];
      for (std::size_t dk = 0; dk < n_eval; ++dk) {
        if (ds.eval_classes[qk] == ds.eval_classes[dk]) docs[dk] = 1;
      }
    }
    ds.eval_qrels = Qrels(std::move(judgments));
  }
  return ds;
}

}  // namespace

SyntheticDataset make_synthetic_dataset(std::uint64_t seed, std::uint32_t n_classes,
                                        std::uint32_t features, std::size_t n_train,
                                        std::size_t n_eval, double noise_sigma) {
  if (n_classes < 2) raise(errc::out_of_range, "need at least 2 classes");
  if (features < 1) raise(errc::out_of_range, "need at least 1 feature");
  if (noise_sigma < 0.0) raise(errc::out_of_range, "noise_sigma must be >= 0");
  Rng rng(seed);
  return make_synthetic_with_rng(rng, n_classes, features, n_train, n_eval, noise_sigma);
}

namespace {

std::string_view trim(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  return text;
}

std::uint64_t parse_config_u64(std::string_view value, std::string_view key) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    raise(errc::bad_format, "bad integer for '" + std::string(key) + "'");
  }
  return out;
}

double parse_config_double(std::string_view value, std::string_view key) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    raise(errc::bad_format, "bad number for '" + std::string(key) + "'");
  }
  return out;
}

std::vector<double> parse_config_weights(std::string_view value) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    std::size_t comma = value.find(',', start);
    if (comma == std::string_view::npos) comma = value.size();
    out.push_back(parse_config_double(trim(value.substr(start, comma - start)), "weights"));
    start = comma + 1;
    if (comma == value.size()) break;
  }
  return out;
}

}  // namespace

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(errc::io, "cannot open '" + path + "'");
  TrainConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (const std::size_t hash = view.find('#'); hash != std::string_view::npos) {
      view = view.substr(0, hash);
    }
    view = trim(view);
    if (view.empty()) continue;
    const std::size_t eq = view.find('=');
    if (eq == std::string_view::npos) {
      raise(errc::bad_format, "line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string_view key = trim(view.substr(0, eq));
    const std::string_view value = trim(view.substr(eq + 1));
    try {
      if (key == "classes") cfg.classes = static_cast<std::uint32_t>(parse_config_u64(value, key));
      else if (key == "features") cfg.features = static_cast<std::uint32_t>(parse_config_u64(value, key));
      else if (key == "dim") cfg.dim = static_cast<std::uint32_t>(parse_config_u64(value, key));
      else if (key == "r_q") cfg.r_q = static_cast<std::uint32_t>(parse_config_u64(value, key));
      else if (key == "r_c") cfg.r_c = static_cast<std::uint32_t>(parse_config_u64(value, key));
      else if (key == "ladder") cfg.ladder = parse_ladder(value);
      else if (key == "tau") cfg.tau = parse_config_double(value, key);
      else if (key == "weights") cfg.weights = parse_config_weights(value);
      else if (key == "lr") cfg.lr = parse_config_double(value, key);
      else if (key == "steps") cfg.steps = static_cast<std::uint32_t>(parse_config_u64(value, key));
      else if (key == "batch_size") cfg.batch_size = static_cast<std::uint32_t>(parse_config_u64(value, key));
      else if (key == "seed") cfg.seed = parse_config_u64(value, key);
      else if (key == "n_train") cfg.n_train = static_cast<std::size_t>(parse_config_u64(value, key));
      else if (key == "n_eval") cfg.n_eval = static_cast<std::size_t>(parse_config_u64(value, key));
      else if (key == "noise_sigma") cfg.noise_sigma = parse_config_double(value, key);
      else raise(errc::bad_format, "unknown config key '" + std::string(key) + "'");
    } catch (const Error& e) {
      if (e.code() == errc::usage) {
        raise(errc::bad_format, "line " + std::to_string(line_no) + ": " + e.what());
      }
      throw;
    }
  }
  return cfg;
}

TrainResult train_toy(const TrainConfig& cfg) {
  if (cfg.classes < 2) raise(errc::out_of_range, "need at least 2 classes");
  if (cfg.features < 1 || cfg.dim < 1 || cfg.r_q < 1 || cfg.r_c < 1) {
    raise(errc::out_of_range, "encoder dims must be >= 1");
  }
  if (cfg.batch_size < 1) raise(errc::out_of_range, "batch_size must be >= 1");
  if (cfg.n_train < 1 || cfg.n_eval < 1) raise(errc::out_of_range, "need train and eval items");
  if (cfg.lr < 0.0) raise(errc::out_of_range, "lr must be >= 0");
  if (cfg.tau <= 0.0) raise(errc::non_positive_temperature, "tau must be > 0");
  if (cfg.noise_sigma < 0.0) raise(errc::out_of_range, "noise_sigma must be >= 0");
  validate_ladder(cfg.ladder, cfg.r_q, cfg.r_c);
  std::vector<double> weights = cfg.weights;
  if (weights.empty()) weights.assign(cfg.ladder.size(), 1.0);
  if (weights.size() != cfg.ladder.size()) {
    raise(errc::dimension_mismatch, "need one weight per ladder group");
  }

  Rng rng(cfg.seed);
  TrainResult result;
  result.dataset = make_synthetic_with_rng(rng, cfg.classes, cfg.features, cfg.n_train,
                                           cfg.n_eval, cfg.noise_sigma);

  const auto init_params = [&](Side side, std::uint32_t r) {
    ToyEncoderParams p;
    p.side = side;
    p.r = r;
    p.d = cfg.dim;
    p.f = cfg.features;
    p.w = Matrix(std::size_t(r) * cfg.dim, cfg.features);
    p.m = Matrix(r, cfg.dim);
    for (float& v : p.w.data) v = static_cast<float>(rng.uniform(-0.1, 0.1));
    for (float& v : p.m.data) v = static_cast<float>(rng.uniform(-0.1, 0.1));
    return p;
  };
  result.params_q = init_params(Side::query, cfg.r_q);
  result.params_c = init_params(Side::candidate, cfg.r_c);

  // Near-ties between top-2 MaxSim candidates occur in almost every batch at
  // this scale; the lowest-index subgradient is valid there, so training
  // runs with the tie guard off (the guard exists for finite-difference
  // checks).
  GradientOptions opts;
  opts.tie_check = false;

  const std::size_t b = cfg.batch_size;
  TrainingBatch batch{Matrix(b, cfg.features), Matrix(b, cfg.features), Matrix(b, cfg.features)};
  const float lr = static_cast<float>(cfg.lr);
  result.history.reserve(cfg.steps);
  for (std::uint32_t step = 0; step < cfg.steps; ++step) {
    const std::size_t start = (std::size_t(step) * b) % cfg.n_train;
    for (std::size_t bi = 0; bi < b; ++bi) {
      const std::size_t item = (start + bi) % cfg.n_train;
      std::copy_n(result.dataset.train_queries.row(item), cfg.features, batch.queries.row(bi));
      std::copy_n(result.dataset.train_positives.row(item), cfg.features,
                  batch.positives.row(bi));
      std::copy_n(result.dataset.train_negatives.row(item), cfg.features,
                  batch.negatives.row(bi));
    }
    auto [loss, grads] =
        loss_and_gradient<float>(result.params_q, result.params_c, batch, cfg.ladder, cfg.tau,
                                 weights, opts);
    if (!std::isfinite(loss.total)) {
      raise(errc::divergence, "loss is not finite at step " + std::to_string(step));
    }
    result.history.push_back({step, std::move(loss)});

    const auto apply = [&](Matrix& param, const Matrix& grad) {
      for (std::size_t i = 0; i < param.data.size(); ++i) param.data[i] -= lr * grad.data[i];
    };
    apply(result.params_q.w, grads.w_q);
    apply(result.params_q.m, grads.m_q);
    apply(result.params_c.w, grads.w_c);
    apply(result.params_c.m, grads.m_c);
  }

  result.eval_query_sets.reserve(cfg.n_eval);
  result.eval_candidate_sets.reserve(cfg.n_eval);
  for (std::size_t k = 0; k < cfg.n_eval; ++k) {
    result.eval_query_sets.emplace_back(
        k, encode(result.params_q,
                  std::span<const float>(result.dataset.eval_queries.row(k), cfg.features)));
    result.eval_candidate_sets.emplace_back(
        k, encode(result.params_c,
                  std::span<const float>(result.dataset.eval_positives.row(k), cfg.features)));
  }

  const NestedIndex index = build_index(result.eval_candidate_sets, cfg.r_c, Dtype::bf16);
  std::vector<MetaEmbeddingSet> query_sets;
  std::vector<std::uint64_t> query_ids;
  query_sets.reserve(cfg.n_eval);
  query_ids.reserve(cfg.n_eval);
  for (const auto& [id, set] : result.eval_query_sets) {
    query_ids.push_back(id);
    query_sets.push_back(set);
  }
  result.precision_curve =
      budget_sweep(index, query_sets, query_ids, result.dataset.eval_qrels, cfg.ladder,
                   MetricSpec{MetricSpec::Kind::precision_at_1, 1});
  result.ndcg_curve = budget_sweep(index, query_sets, query_ids, result.dataset.eval_qrels,
                                   cfg.ladder, MetricSpec{MetricSpec::Kind::ndcg_at_k, 5});
  return result;
}

}  // namespace mvr
