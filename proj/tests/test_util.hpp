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

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>

#include "mvr/core.hpp"
#include "mvr/rng.hpp"
#include "mvr/train.hpp"

namespace mvrtest {

template <typename Fn>
std::optional<mvr::errc> raised_code(Fn&& fn) {
  try {
    fn();
    return std::nullopt;
  } catch (const mvr::Error& e) {
    return e.code();
  }
}

inline mvr::Matrix random_rows(mvr::Rng& rng, std::size_t rows, std::size_t cols) {
  mvr::Matrix m(rows, cols);
  for (float& v : m.data) v = static_cast<float>(rng.gaussian());
  return m;
}

inline mvr::MetaEmbeddingSet random_set(mvr::Rng& rng, std::size_t rows, std::size_t cols,
                                        mvr::Side side) {
  return mvr::MetaEmbeddingSet::normalized(random_rows(rng, rows, cols), side);
}

/// Independent MaxSim: double-precision double loop over all (i, j) pairs.
inline double maxsim_reference(const mvr::Matrix& q, const mvr::Matrix& c, std::size_t r_q,
                               std::size_t r_c) {
  double total = 0.0;
  for (std::size_t i = 0; i < r_q; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < r_c; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < q.cols; ++k) {
        dot += static_cast<double>(q(i, k)) * static_cast<double>(c(j, k));
      }
      best = std::max(best, dot);
    }
    total += best;
  }
  return total;
}

/// Independent round-to-nearest-even to an 8-bit significand: scale the
/// fraction to [128, 256), round with nearbyint under the default rounding
/// mode, scale back.
inline float bf16_reference(float x) {
  if (x == 0.0f) return x;
  const double d = static_cast<double>(x);
  int exp = 0;
  const double frac = std::frexp(std::fabs(d), &exp);
  const double rounded = std::nearbyint(std::ldexp(frac, 8));
  return static_cast<float>(std::copysign(std::ldexp(rounded, exp - 8), d));
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("mvr_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// ---- finite-difference gradient checking --------------------------------

struct ToyConfig64 {
  mvr::ToyParamsT<double> params_q, params_c;
  mvr::TrainingBatchT<double> batch;
  mvr::BudgetLadder ladder;
  double tau = 0.3;
  std::vector<double> weights;
};

inline mvr::ToyParamsT<double> random_params64(mvr::Rng& rng, mvr::Side side, std::uint32_t r,
                                               std::uint32_t d, std::uint32_t f) {
  mvr::ToyParamsT<double> p;
  p.side = side;
  p.r = r;
  p.d = d;
  p.f = f;
  p.w = mvr::MatT<double>(std::size_t(r) * d, f);
  p.m = mvr::MatT<double>(r, d);
  for (double& v : p.w.data) v = rng.uniform(-0.5, 0.5);
  for (double& v : p.m.data) v = rng.uniform(-0.5, 0.5);
  return p;
}

inline ToyConfig64 random_toy_config(mvr::Rng& rng) {
  ToyConfig64 cfg;
  const std::uint32_t r_q = 1 + static_cast<std::uint32_t>(rng.below(4));  // [1, 4]
  const std::uint32_t r_c = 1 + static_cast<std::uint32_t>(rng.below(8));  // [1, 8]
  const std::uint32_t d = 2 + static_cast<std::uint32_t>(rng.below(7));    // [2, 8]
  const std::uint32_t f = 2 + static_cast<std::uint32_t>(rng.below(7));    // [2, 8]
  const std::size_t b = 1 + rng.below(4);                                  // [1, 4]

  cfg.ladder.groups.emplace_back(r_q, r_c);
  if (r_q >= 2 && r_c >= 2 && rng.below(2) == 0) {
    const std::uint32_t mid_q = 1 + static_cast<std::uint32_t>(rng.below(r_q - 1));
    const std::uint32_t mid_c = 1 + static_cast<std::uint32_t>(rng.below(r_c - 1));
    cfg.ladder.groups.insert(cfg.ladder.groups.begin(), mvr::Budget(mid_q, mid_c));
  }
  cfg.tau = 0.1 + 0.9 * rng.uniform();
  for (std::size_t g = 0; g < cfg.ladder.size(); ++g) {
    cfg.weights.push_back(0.25 + 1.5 * rng.uniform());
  }

  cfg.params_q = random_params64(rng, mvr::Side::query, r_q, d, f);
  cfg.params_c = random_params64(rng, mvr::Side::candidate, r_c, d, f);
  cfg.batch.queries = mvr::MatT<double>(b, f);
  cfg.batch.positives = mvr::MatT<double>(b, f);
  cfg.batch.negatives = mvr::MatT<double>(b, f);
  for (double& v : cfg.batch.queries.data) v = rng.uniform(-1.0, 1.0);
  for (double& v : cfg.batch.positives.data) v = rng.uniform(-1.0, 1.0);
  for (double& v : cfg.batch.negatives.data) v = rng.uniform(-1.0, 1.0);
  return cfg;
}

/// Total loss evaluated from scratch at 64-bit (encode + multi-group loss).
inline double toy_loss_total(const ToyConfig64& cfg) {
  const std::size_t b = cfg.batch.queries.rows;
  std::vector<mvr::MatT<double>> q, p, n;
  q.reserve(b);
  p.reserve(b);
  n.reserve(b);
  for (std::size_t u = 0; u < b; ++u) {
    q.push_back(mvr::encode_rows<double>(
        cfg.params_q, std::span<const double>(cfg.batch.queries.row(u), cfg.params_q.f)));
    p.push_back(mvr::encode_rows<double>(
        cfg.params_c, std::span<const double>(cfg.batch.positives.row(u), cfg.params_c.f)));
    n.push_back(mvr::encode_rows<double>(
        cfg.params_c, std::span<const double>(cfg.batch.negatives.row(u), cfg.params_c.f)));
  }
  return mvr::mmr_loss_rows<double>(q, p, n, cfg.ladder, cfg.tau, cfg.weights).total;
}

/// Worst relative error between the analytic gradient and central finite
/// differences over every coordinate of W and M on both sides.
inline double fd_max_rel_err(const ToyConfig64& cfg, double h = 1e-5) {
  const auto [loss, grads] =
      mvr::loss_and_gradient<double>(cfg.params_q, cfg.params_c, cfg.batch, cfg.ladder, cfg.tau,
                                     cfg.weights, mvr::GradientOptions{true, 1e-4});
  (void)loss;
  ToyConfig64 work = cfg;
  double worst = 0.0;
  const auto sweep = [&](mvr::MatT<double>& param, const mvr::MatT<double>& analytic) {
    for (std::size_t i = 0; i < param.data.size(); ++i) {
      const double orig = param.data[i];
      param.data[i] = orig + h;
      const double up = toy_loss_total(work);
      param.data[i] = orig - h;
      const double down = toy_loss_total(work);
      param.data[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double a = analytic.data[i];
      const double rel =
          std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), 1e-6});
      worst = std::max(worst, rel);
    }
  };
  sweep(work.params_q.w, grads.w_q);
  sweep(work.params_q.m, grads.m_q);
  sweep(work.params_c.w, grads.w_c);
  sweep(work.params_c.m, grads.m_c);
  return worst;
}

/// Draws configurations until one is tie-free under the strict guard.
inline ToyConfig64 tie_free_config(mvr::Rng& rng) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    ToyConfig64 cfg = random_toy_config(rng);
    try {
      mvr::loss_and_gradient<double>(cfg.params_q, cfg.params_c, cfg.batch, cfg.ladder, cfg.tau,
                                     cfg.weights, mvr::GradientOptions{true, 1e-4});
      return cfg;
    } catch (const mvr::Error& e) {
      if (e.code() != mvr::errc::tie_near_max) throw;
    }
  }
  throw std::runtime_error("could not find a tie-free configuration");
}

}  // namespace mvrtest
