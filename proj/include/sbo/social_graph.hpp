// Copyright 2026 The sbo Authors. All rights reserved.
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


#ifndef SBO_SOCIAL_GRAPH_HPP_
#define SBO_SOCIAL_GRAPH_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "sbo/errors.hpp"

namespace sbo {

/// Hyperparameters of the regularised row-wise Dirichlet prior on A.
struct GraphPrior {
  double delta_A = 0.01;
  double xi = 1.0 / 16.0;
  double kappa = 1.0;

  // xi = 1/(4 n^2) keeps xi < 1/(2 n^2); kappa = 1 + delta^2/n^2 - 2 xi delta^2.
  static GraphPrior Defaults(int n, double delta_A = 0.01) {
    GraphPrior p;
    const double nn = static_cast<double>(n) * n;
    p.delta_A = delta_A;
    p.xi = 1.0 / (4.0 * nn);
    p.kappa = 1.0 + delta_A * delta_A / nn - 2.0 * p.xi * delta_A * delta_A;
    return p;
  }
};

/// Row-stochastic social-influence matrix with its prior hyperparameters.
///
/// `kappa` holds per-entry Dirichlet concentrations; an empty matrix means the
/// scalar `prior.kappa` everywhere.
struct SocialGraph {
  Eigen::MatrixXd A;
  GraphPrior prior;
  Eigen::MatrixXd kappa;

  SocialGraph() = default;
  SocialGraph(Eigen::MatrixXd a, GraphPrior p) : A(std::move(a)), prior(p) {}

  int n() const { return static_cast<int>(A.rows()); }
  double kappa_at(Eigen::Index i, Eigen::Index j) const {
    return kappa.size() == 0 ? prior.kappa : kappa(i, j);
  }
};

inline bool rows_stochastic(const Eigen::MatrixXd& A, double tol = 1e-9) {
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    if (std::abs(A.row(i).sum() - 1.0) > tol) return false;
  return true;
}

inline bool respects_floor(const Eigen::MatrixXd& A, double delta_A) {
  return A.size() > 0 && A.minCoeff() >= delta_A - 1e-12;
}

inline bool is_valid(const SocialGraph& g) {
  return g.A.rows() >= 1 && g.A.rows() == g.A.cols() && rows_stochastic(g.A) &&
         respects_floor(g.A, g.prior.delta_A);
}

/// Raises entries below `delta_A` to the floor and rescales the remaining
/// entries of each row so rows still sum to one.
inline Eigen::MatrixXd clip_to_floor(const Eigen::MatrixXd& A, double delta_A) {
  const Eigen::Index n = A.cols();
  if (delta_A * static_cast<double>(n) > 1.0) throw ArgumentError("delta_A too large for n");
  Eigen::MatrixXd out = A;
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    Eigen::Array<bool, Eigen::Dynamic, 1> pinned = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(n, false);
    Eigen::VectorXd row = A.row(i).transpose().cwiseMax(0.0);
    for (int pass = 0; pass <= n; ++pass) {
      double free_mass = 0.0;
      Eigen::Index n_pinned = 0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (pinned[j]) ++n_pinned;
        else free_mass += row[j];
      }
      const double target = 1.0 - static_cast<double>(n_pinned) * delta_A;
      bool changed = false;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (pinned[j]) {
          row[j] = delta_A;
          continue;
        }
        row[j] = free_mass > 0.0 ? row[j] * target / free_mass
                                 : target / static_cast<double>(n - n_pinned);
        if (row[j] < delta_A) {
          pinned[j] = true;
          changed = true;
        }
      }
      if (!changed) break;
    }
    out.row(i) = row.transpose();
  }
  return out;
}

/// v = A u. Each v_i is a convex combination of the entries of u.
inline Eigen::VectorXd convolve(const SocialGraph& g, const Eigen::VectorXd& u) {
  if (!is_valid(g)) throw StateError("convolve: graph violates the floor or row-sum constraints");
  if (u.size() != g.A.cols()) throw ArgumentError("convolve: utility length mismatch");
  return g.A * u;
}

/// Unnormalised log density -xi ||A||_F^2 + sum_ij (kappa_ij - 1) log A_ij.
inline double log_prior(const SocialGraph& g) {
  const Eigen::MatrixXd& A = g.A;
  if (A.size() == 0 || (A.array() <= 0.0).any()) return -std::numeric_limits<double>::infinity();
  if (!rows_stochastic(A)) throw ArgumentError("log_prior: rows must sum to one");
  if (!respects_floor(A, g.prior.delta_A)) throw ArgumentError("log_prior: entry below delta_A");
  double s = -g.prior.xi * A.squaredNorm();
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j) s += (g.kappa_at(i, j) - 1.0) * std::log(A(i, j));
  return s;
}

struct GraphReport {
  bool floor_ok = false;
  bool rows_ok = false;
  bool invertible = false;
  double condition_number = std::numeric_limits<double>::infinity();
  double inverse_norm = std::numeric_limits<double>::infinity();  // ||A^{-1}||_2 when invertible
  bool inverse_norm_in_bounds = false;                          // 1 <= ||A^{-1}||_2 <= n

  bool valid() const { return floor_ok && rows_ok; }
};

inline GraphReport validate(const SocialGraph& g) {
  GraphReport r;
  const Eigen::MatrixXd& A = g.A;
  if (A.rows() == 0 || A.rows() != A.cols()) return r;
  r.floor_ok = respects_floor(A, g.prior.delta_A);
  r.rows_ok = rows_stochastic(A);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  const auto& s = svd.singularValues();
  const double smin = s[s.size() - 1];
  r.condition_number = smin > 0.0 ? s[0] / smin : std::numeric_limits<double>::infinity();
  r.invertible = r.condition_number < 1e12;
  if (r.invertible) {
    r.inverse_norm = 1.0 / smin;
    const double n = static_cast<double>(A.rows());
    r.inverse_norm_in_bounds = r.inverse_norm >= 1.0 - 1e-9 && r.inverse_norm <= n + 1e-9;
  }
  return r;
}

/// Row-wise Dirichlet(concentration) draw, clipped to the prior floor.
inline SocialGraph sample_prior(int n, std::uint64_t seed, const GraphPrior& prior,
                                double concentration) {
  if (n < 1) throw ArgumentError("sample_prior: n must be at least 1");
  if (!(concentration > 0.0)) throw ArgumentError("sample_prior: concentration must be positive");
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> gamma(concentration, 1.0);
  Eigen::MatrixXd A(n, n);
  for (int i = 0; i < n; ++i) {
    double total = 0.0;
    for (int j = 0; j < n; ++j) {
      A(i, j) = gamma(rng);
      total += A(i, j);
    }
    if (total <= 0.0) A.row(i).setConstant(1.0 / n);
    else A.row(i) /= total;
  }
  return SocialGraph(clip_to_floor(A, prior.delta_A), prior);
}

inline SocialGraph sample_prior(int n, std::uint64_t seed) {
  const GraphPrior p = GraphPrior::Defaults(n);
  return sample_prior(n, seed, p, p.kappa);
}

}  // namespace sbo

#endif  // SBO_SOCIAL_GRAPH_HPP_
