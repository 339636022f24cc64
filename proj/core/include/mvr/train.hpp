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

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mvr/core.hpp"
#include "mvr/eval.hpp"
#include "mvr/lateint.hpp"
#include "mvr/rng.hpp"

namespace mvr {

/// Toy encoder: x (F) -> rows(W x reshaped to R x D) + M, rows L2-normalized.
/// M is the learnable per-slot component; W stands in for the backbone.
/// Float is the training precision; the double instantiation backs the
/// gradient oracle.
template <typename Real>
struct ToyParamsT {
  MatT<Real> w;  // (R*D) x F
  MatT<Real> m;  // R x D
  Side side = Side::query;
  std::uint32_t r = 0, d = 0, f = 0;
};
using ToyEncoderParams = ToyParamsT<float>;

template <typename Real>
struct TrainingBatchT {
  MatT<Real> queries;    // B x F raw feature vectors
  MatT<Real> positives;  // B x F
  MatT<Real> negatives;  // B x F, one hard negative per row
};
using TrainingBatch = TrainingBatchT<float>;

struct LossBreakdown {
  std::vector<double> per_group;  // InfoNCE loss per ladder group
  double total = 0.0;             // sum of weights[g] * per_group[g]
  double tau = 0.0;
  std::vector<double> weights;
};

template <typename Real>
struct GradientsT {
  MatT<Real> w_q, m_q;  // query encoder
  MatT<Real> w_c, m_c;  // candidate encoder
};
using Gradients = GradientsT<float>;

struct GradientOptions {
  /// When set, raise tie_near_max if any MaxSim argmax has its top-2
  /// candidates closer than tie_epsilon. Finite differencing is invalid
  /// across such a switch, so the gradient checker requires tie-free inputs.
  bool tie_check = true;
  double tie_epsilon = 1e-4;
};

namespace detail {

template <typename Real>
struct EncodedItem {
  MatT<Real> rows;          // R x D normalized embeddings
  MatT<Real> pre;           // R x D pre-normalization values
  std::vector<Real> norms;  // per-row norms of pre
};

template <typename Real>
void check_params(const ToyParamsT<Real>& p) {
  if (p.r < 1 || p.d < 1 || p.f < 1) raise(errc::out_of_range, "encoder dims must be >= 1");
  if (p.w.rows != std::size_t(p.r) * p.d || p.w.cols != p.f) {
    raise(errc::dimension_mismatch, "W must be (R*D) x F");
  }
  if (p.m.rows != p.r || p.m.cols != p.d) raise(errc::dimension_mismatch, "M must be R x D");
  if (!all_finite(p.w) || !all_finite(p.m)) raise(errc::non_finite, "encoder params not finite");
}

template <typename Real>
EncodedItem<Real> encode_item(const ToyParamsT<Real>& p, const Real* x) {
  EncodedItem<Real> item;
  item.pre = MatT<Real>(p.r, p.d);
  for (std::size_t row = 0; row < p.r; ++row) {
    for (std::size_t col = 0; col < p.d; ++col) {
      const Real* w_row = p.w.row(row * p.d + col);
      Real acc = Real(0);
      for (std::size_t k = 0; k < p.f; ++k) acc += w_row[k] * x[k];
      item.pre(row, col) = acc + p.m(row, col);
    }
  }
  item.rows = MatT<Real>(p.r, p.d);
  item.norms.resize(p.r);
  for (std::size_t row = 0; row < p.r; ++row) {
    double sumsq = 0.0;
    for (std::size_t col = 0; col < p.d; ++col) {
      const double v = static_cast<double>(item.pre(row, col));
      sumsq += v * v;
    }
    const Real norm = static_cast<Real>(std::sqrt(sumsq));
    if (norm < Real(1e-12)) {
      raise(errc::zero_row, "pre-normalization row " + std::to_string(row) + " is zero");
    }
    item.norms[row] = norm;
    for (std::size_t col = 0; col < p.d; ++col) item.rows(row, col) = item.pre(row, col) / norm;
  }
  return item;
}

}  // namespace detail

/// Encodes one feature vector into normalized meta-embedding rows.
template <typename Real>
MatT<Real> encode_rows(const ToyParamsT<Real>& p, std::span<const Real> features) {
  detail::check_params(p);
  if (features.size() != p.f) {
    raise(errc::dimension_mismatch, "feature vector has " + std::to_string(features.size()) +
                                        " entries, encoder expects " + std::to_string(p.f));
  }
  return detail::encode_item(p, features.data()).rows;
}

MetaEmbeddingSet encode(const ToyEncoderParams& p, std::span<const float> features);

/// Entry (u, v) = group_score(query u, candidate v, g) / tau.
Matrix similarity_matrix(std::span<const MetaEmbeddingSet> queries,
                         std::span<const MetaEmbeddingSet> candidates, const Budget& g,
                         double tau);

/// InfoNCE over a square score matrix (already divided by tau) whose row u
/// holds query u against the in-batch candidates, plus one extra hard
/// negative score per row. Log-sum-exp stabilized, accumulated at 64-bit.
template <typename Real>
double infonce_group_loss_t(const MatT<Real>& s, std::span<const Real> hard_neg_scores) {
  if (s.rows != s.cols) raise(errc::dimension_mismatch, "score matrix must be square");
  if (s.rows == 0) raise(errc::empty_input, "empty score matrix");
  if (hard_neg_scores.size() != s.rows) {
    raise(errc::dimension_mismatch, "need one hard-negative score per row");
  }
  if (!all_finite(s)) raise(errc::non_finite, "score matrix not finite");
  for (Real v : hard_neg_scores) {
    if (!std::isfinite(v)) raise(errc::non_finite, "hard-negative score not finite");
  }

  const std::size_t b = s.rows;
  double acc = 0.0;
  for (std::size_t u = 0; u < b; ++u) {
    double row_max = static_cast<double>(hard_neg_scores[u]);
    for (std::size_t v = 0; v < b; ++v) {
      row_max = std::max(row_max, static_cast<double>(s(u, v)));
    }
    double denom = std::exp(static_cast<double>(hard_neg_scores[u]) - row_max);
    for (std::size_t v = 0; v < b; ++v) {
      denom += std::exp(static_cast<double>(s(u, v)) - row_max);
    }
    acc += -(static_cast<double>(s(u, u)) - row_max - std::log(denom));
  }
  return acc / static_cast<double>(b);
}

double infonce_group_loss(const Matrix& s, std::span<const float> hard_neg_scores);

/// Encoded minibatch: queries, positives and hard negatives as normalized
/// embedding sets.
struct BatchEmbeddings {
  std::vector<MetaEmbeddingSet> queries;
  std::vector<MetaEmbeddingSet> positives;
  std::vector<MetaEmbeddingSet> negatives;
};

/// Multi-group loss over normalized row matrices. Hard negatives are scored
/// at the same group budget as the in-batch candidates.
template <typename Real>
LossBreakdown mmr_loss_rows(std::span<const MatT<Real>> queries,
                            std::span<const MatT<Real>> positives,
                            std::span<const MatT<Real>> negatives, const BudgetLadder& ladder,
                            double tau, std::span<const double> weights);

LossBreakdown mmr_loss(const BatchEmbeddings& batch, const BudgetLadder& ladder, double tau,
                       std::span<const double> weights);

/// Loss plus exact subgradient w.r.t. W and M of both encoders. The MaxSim
/// max is differentiated through its argmax (ties route to the lowest
/// candidate index); L2 normalization through (I - e e^T)/||v||.
template <typename Real>
std::pair<LossBreakdown, GradientsT<Real>> loss_and_gradient(
    const ToyParamsT<Real>& params_q, const ToyParamsT<Real>& params_c,
    const TrainingBatchT<Real>& batch, const BudgetLadder& ladder, double tau,
    std::span<const double> weights, const GradientOptions& opts = {});

Gradients loss_gradient(const ToyEncoderParams& params_q, const ToyEncoderParams& params_c,
                        const TrainingBatch& batch, const BudgetLadder& ladder, double tau,
                        std::span<const double> weights, const GradientOptions& opts = {});

/// Cluster-structured triples for the toy task. Queries and positives are
/// noisy copies of the same class centroid; the hard negative comes from the
/// nearest other centroid. Relevance is class membership over the eval docs.
struct SyntheticDataset {
  Matrix centroids;  // C x F, unit rows
  Matrix train_queries, train_positives, train_negatives;  // n_train x F
  Matrix eval_queries, eval_positives, eval_negatives;     // n_eval x F
  std::vector<std::uint32_t> train_classes, eval_classes;
  Qrels eval_qrels;  // query id / doc id = position in the eval split
};

SyntheticDataset make_synthetic_dataset(std::uint64_t seed, std::uint32_t n_classes,
                                        std::uint32_t features, std::size_t n_train,
                                        std::size_t n_eval, double noise_sigma);

struct TrainConfig {
  std::uint32_t classes = 16;
  std::uint32_t features = 32;
  std::uint32_t dim = 16;
  std::uint32_t r_q = 16;
  std::uint32_t r_c = 64;
  BudgetLadder ladder = default_ladder();
  double tau = 0.03;
  std::vector<double> weights;  // empty -> all ones
  double lr = 0.05;
  std::uint32_t steps = 500;
  std::uint32_t batch_size = 32;
  std::uint64_t seed = 7;
  std::size_t n_train = 2048;
  std::size_t n_eval = 256;
  double noise_sigma = 0.1;
};

/// Flat `key = value` text file; '#' starts a comment. Unknown keys are
/// errors.
TrainConfig load_train_config(const std::string& path);

struct StepLoss {
  std::uint32_t step = 0;
  LossBreakdown loss;
};

struct TrainResult {
  ToyEncoderParams params_q, params_c;
  std::vector<StepLoss> history;                // one entry per step, pre-update loss
  std::vector<SweepPoint> precision_curve;      // held-out precision@1 per ladder budget
  std::vector<SweepPoint> ndcg_curve;           // held-out ndcg@5 per ladder budget
  SyntheticDataset dataset;
  std::vector<std::pair<std::uint64_t, MetaEmbeddingSet>> eval_query_sets;
  std::vector<std::pair<std::uint64_t, MetaEmbeddingSet>> eval_candidate_sets;
};

/// Plain fixed-rate gradient descent on the multi-group loss over cyclic
/// class-balanced minibatches; fully deterministic given the seed.
TrainResult train_toy(const TrainConfig& config);

}  // namespace mvr
