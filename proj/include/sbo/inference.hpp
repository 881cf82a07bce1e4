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


#ifndef SBO_INFERENCE_HPP_
#define SBO_INFERENCE_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "sbo/aggregation.hpp"
#include "sbo/convex_solver.hpp"
#include "sbo/errors.hpp"
#include "sbo/kernels.hpp"
#include "sbo/preference_model.hpp"
#include "sbo/social_graph.hpp"

namespace sbo {

enum class BetaMode { kFixed, kSqrtGrowth };

inline std::string to_string(BetaMode m) { return m == BetaMode::kFixed ? "fixed" : "sqrt-growth"; }

inline BetaMode beta_mode_from_string(const std::string& s) {
  if (s == "fixed") return BetaMode::kFixed;
  if (s == "sqrt-growth" || s == "sqrt_growth") return BetaMode::kSqrtGrowth;
  throw ArgumentError("unknown beta mode '" + s + "'");
}

struct BetaSchedule {
  double beta0 = 0.5;
  BetaMode mode = BetaMode::kFixed;
};

struct BetaValues {
  double u = 0.0;      // private channel
  double v = 0.0;      // public channel
  double joint = 0.0;
};

inline double beta(const BetaSchedule& s, int count) {
  if (count < 0) throw ArgumentError("beta: negative vote count");
  return s.mode == BetaMode::kFixed ? s.beta0 : s.beta0 * std::sqrt(1.0 + count);
}

inline BetaValues beta(const BetaSchedule& s, int private_count, int public_count) {
  return {beta(s, private_count), beta(s, public_count), beta(s, private_count + public_count)};
}

/// Which estimator backs the confidence sets.
enum class ModelKind { kCoupled, kIndependent, kOracle, kSingleAgent };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kCoupled: return "sbo";
    case ModelKind::kIndependent: return "independent";
    case ModelKind::kOracle: return "oracle";
    case ModelKind::kSingleAgent: return "single";
  }
  return "unknown";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "sbo" || s == "coupled") return ModelKind::kCoupled;
  if (s == "independent") return ModelKind::kIndependent;
  if (s == "oracle") return ModelKind::kOracle;
  if (s == "single" || s == "single_agent") return ModelKind::kSingleAgent;
  throw ArgumentError("unknown baseline '" + s + "'");
}

/// Queried points (deduplicated) and both vote channels by column index.
class VoteData {
 public:
  struct Vote {
    int a = 0;  // column of x
    int b = 0;  // column of x'
    std::vector<int> outcomes;
  };

  explicit VoteData(int n = 1) : n_(n) {
    if (n < 1) throw ArgumentError("VoteData: n must be at least 1");
  }

  int n() const { return n_; }
  const std::vector<OptionPoint>& points() const { return points_; }
  const std::vector<Vote>& public_votes() const { return public_; }
  const std::vector<Vote>& private_votes() const { return private_; }
  const std::vector<VoteRecord>& records() const { return records_; }
  int num_points() const { return static_cast<int>(points_.size()); }

  int find(const OptionPoint& x) const {
    for (std::size_t j = 0; j < points_.size(); ++j)
      if (points_[j].size() == x.size() && points_[j] == x) return static_cast<int>(j);
    return -1;
  }

  int add_point(const OptionPoint& x) {
    const int j = find(x);
    if (j >= 0) return j;
    points_.push_back(x);
    return static_cast<int>(points_.size()) - 1;
  }

  void add(const VoteRecord& v) {
    if (static_cast<int>(v.outcomes.size()) != n_) throw ArgumentError("vote outcome count does not match n");
    if (v.x.size() != v.xp.size()) throw ArgumentError("vote points differ in dimension");
    if (v.x == v.xp) throw ArgumentError("vote pair must contain two distinct points");
    for (int o : v.outcomes)
      if (o != 0 && o != 1) throw ArgumentError("vote outcomes must be 0 or 1");
    Vote iv{add_point(v.x), add_point(v.xp), v.outcomes};
    (v.channel == Channel::kPublic ? public_ : private_).push_back(std::move(iv));
    records_.push_back(v);
  }

  // Copy without the k-th record, for leave-one-out.
  VoteData without(std::size_t k) const {
    VoteData d(n_);
    for (std::size_t r = 0; r < records_.size(); ++r)
      if (r != k) d.add(records_[r]);
    return d;
  }

 private:
  int n_;
  std::vector<OptionPoint> points_;
  std::vector<Vote> public_;
  std::vector<Vote> private_;
  std::vector<VoteRecord> records_;
};

struct InferenceConfig {
  int n = 1;
  ModelKind model = ModelKind::kCoupled;
  KernelSpec kernel;
  double norm_bound = 1.5;
  BetaSchedule beta;
  GraphPrior prior;
  std::optional<Eigen::MatrixXd> known_graph;  // oracle baseline only
  double rho = 1.0;
  SolverOptions solver;
  int max_sweeps = 5;
  double sweep_tol = 1e-6;
  // Norm bound at which beta0 is calibrated; the doubling test scales the
  // radius linearly from here.
  double beta_norm_ref = 1.5;
  // Graph refits per confidence program (the joint set leaves A free).
  int graph_sweeps = 2;

  static InferenceConfig Defaults(int n) {
    InferenceConfig c;
    c.n = n;
    c.prior = GraphPrior::Defaults(n);
    return c;
  }
};

struct MapEstimate {
  std::vector<OptionPoint> points;
  Eigen::MatrixXd U;  // agents x points
  Eigen::MatrixXd V;
  SocialGraph A;
  double log_posterior = -std::numeric_limits<double>::infinity();
  double ll_u = 0.0;
  double ll_v = 0.0;
  double norm_bound = 1.5;
  bool graph_singular = false;  // oracle recovered U through a pseudo-inverse
  int sweeps = 0;

  UtilityValues u_values() const { return {points, U, norm_bound}; }
  UtilityValues v_values() const { return {points, V, norm_bound}; }
};

namespace detail {

// Truncated eigenbasis of the Gram matrix: K ~= B B^T with B = Phi Lambda^{1/2}
// over eigenvalues above the floor, and P = Phi Lambda^{-1/2}. Values relate
// to whitened coordinates by U = W B^T, W = U P, ||U_r||_K = ||W_r||.
struct Basis {
  Eigen::MatrixXd B;
  Eigen::MatrixXd P;
  int rank() const { return static_cast<int>(B.cols()); }
  int points() const { return static_cast<int>(B.rows()); }
};

inline constexpr double kEigenFloor = 1e-6;

inline Basis kernel_basis(const KernelSpec& k, const std::vector<OptionPoint>& pts) {
  Basis b;
  if (pts.empty()) return b;
  const Eigen::MatrixXd K = gram(k, pts).K;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
  if (es.info() != Eigen::Success) throw NumericError("kernel_basis: eigendecomposition failed", 0.0);
  const Eigen::VectorXd& lam = es.eigenvalues();
  const double floor = kEigenFloor * std::max(1.0, K.diagonal().maxCoeff());
  int first = 0;
  while (first < lam.size() && lam[first] <= floor) ++first;
  const int r = static_cast<int>(lam.size()) - first;
  const Eigen::MatrixXd Phi = es.eigenvectors().rightCols(r);
  const Eigen::ArrayXd sq = lam.tail(r).array().sqrt();
  b.B = Phi * sq.matrix().asDiagonal();
  b.P = Phi * sq.inverse().matrix().asDiagonal();
  return b;
}

inline Eigen::MatrixXd to_white(const Basis& b, const Eigen::MatrixXd& U) { return U * b.P; }

inline Eigen::MatrixXd from_white(const Eigen::MatrixXd& B, const Eigen::MatrixXd& W) { return W * B.transpose(); }

/// Inner term over values U (rows x m), seen through U_r = B W_r.
class WhitenedTerm final : public Term {
 public:
  WhitenedTerm(TermPtr inner, std::shared_ptr<const Eigen::MatrixXd> B, int rows)
      : inner_(std::move(inner)), B_(std::move(B)), rows_(rows) {}

  double evaluate(const Eigen::VectorXd& y, Eigen::VectorXd* grad, Eigen::MatrixXd* hess,
                  double scale) const override {
    const Eigen::MatrixXd& B = *B_;
    const Eigen::Index m = B.rows(), k = B.cols();
    Eigen::VectorXd u(rows_ * m);
    for (int r = 0; r < rows_; ++r) u.segment(r * m, m).noalias() = B * y.segment(r * k, k);
    if (!grad && !hess) return inner_->value(u);
    Eigen::VectorXd gu = Eigen::VectorXd::Zero(rows_ * m);
    Eigen::MatrixXd hu;
    if (hess) hu = Eigen::MatrixXd::Zero(rows_ * m, rows_ * m);
    const double v = inner_->evaluate(u, &gu, hess ? &hu : nullptr, scale);
    for (int r = 0; r < rows_; ++r) {
      if (grad) grad->segment(r * k, k).noalias() += B.transpose() * gu.segment(r * m, m);
      if (!hess) continue;
      for (int s = 0; s < rows_; ++s) {
        auto blk = hu.block(r * m, s * m, m, m);
        if (blk.isZero(0.0)) continue;
        const Eigen::MatrixXd left = B.transpose() * blk;
        hess->block(r * k, s * k, k, k).noalias() += left * B;
      }
    }
    return v;
  }
  int max_index() const override { return rows_ * static_cast<int>(B_->cols()) - 1; }

 private:
  TermPtr inner_;
  std::shared_ptr<const Eigen::MatrixXd> B_;
  int rows_;
};

// Index of utility row r, column j in the stacked vector (row-major blocks).
inline int var(int r, int j, int m) { return r * m + j; }

// sign * (y[r, a] - y[r, b]) for every agent bit; rows maps agent -> row.
inline std::vector<SparseAffine> direct_rows(const std::vector<VoteData::Vote>& votes, int n, int m, bool shared_row) {
  std::vector<SparseAffine> out;
  out.reserve(votes.size() * static_cast<std::size_t>(n));
  for (const auto& v : votes)
    for (int i = 0; i < n; ++i) {
      const double s = v.outcomes[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
      const int r = shared_row ? 0 : i;
      out.push_back(SparseAffine{{{var(r, v.a, m), s}, {var(r, v.b, m), -s}}, 0.0});
    }
  return out;
}

// sign * sum_j A_ij (y[j, a] - y[j, b]) for public votes through a fixed graph.
inline std::vector<SparseAffine> coupled_rows(const std::vector<VoteData::Vote>& votes, const Eigen::MatrixXd& A, int m) {
  const int n = static_cast<int>(A.rows());
  std::vector<SparseAffine> out;
  out.reserve(votes.size() * static_cast<std::size_t>(n));
  for (const auto& v : votes)
    for (int i = 0; i < n; ++i) {
      const double s = v.outcomes[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
      SparseAffine r;
      for (int j = 0; j < n; ++j) {
        r.coef.push_back({var(j, v.a, m), s * A(i, j)});
        r.coef.push_back({var(j, v.b, m), -s * A(i, j)});
      }
      out.push_back(std::move(r));
    }
  return out;
}

// Public rows as affine functions of the free graph entries with U fixed.
inline std::vector<SparseAffine> graph_rows(const std::vector<VoteData::Vote>& votes, const Eigen::MatrixXd& U) {
  const int n = static_cast<int>(U.rows());
  const int f = n - 1;
  std::vector<SparseAffine> out;
  for (const auto& v : votes) {
    const Eigen::VectorXd d = U.col(v.a) - U.col(v.b);
    for (int i = 0; i < n; ++i) {
      const double s = v.outcomes[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
      SparseAffine r;
      r.offset = s * d[f];
      for (int j = 0; j < f; ++j) r.coef.push_back({i * f + j, s * (d[j] - d[f])});
      out.push_back(std::move(r));
    }
  }
  return out;
}

inline double rows_loglik(const std::vector<SparseAffine>& rows, const Eigen::VectorXd& y) {
  return LogisticSum(rows).value(y);
}

inline Eigen::VectorXd stack(const Eigen::MatrixXd& U) {
  Eigen::VectorXd y(U.size());
  for (Eigen::Index r = 0; r < U.rows(); ++r) y.segment(r * U.cols(), U.cols()) = U.row(r).transpose();
  return y;
}

inline Eigen::MatrixXd unstack(const Eigen::VectorXd& y, int rows, int m) {
  Eigen::MatrixXd U(rows, m);
  for (int r = 0; r < rows; ++r) U.row(r) = y.segment(r * m, m).transpose();
  return U;
}

// ||W_r||^2 <= L^2 on each whitened row block.
inline void add_balls(ConvexProgram& p, int rows, int m, double L) {
  for (int r = 0; r < rows; ++r) {
    std::vector<int> idx(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) idx[static_cast<std::size_t>(j)] = var(r, j, m);
    p.constraints.push_back({std::make_shared<QuadraticForm>(std::move(idx), Eigen::MatrixXd::Identity(m, m), L * L),
                             "norm ball"});
  }
}

// Scales each whitened row into the open ball ||W_r|| < L.
inline void shrink_into_ball(Eigen::MatrixXd& W, double L, double margin = 1e-3) {
  const double lim = (1.0 - margin) * L;
  for (Eigen::Index r = 0; r < W.rows(); ++r) {
    const double q = W.row(r).norm();
    if (q > lim) W.row(r) *= lim / q;
  }
}

// Representer interpolation of known values onto new points.
inline Eigen::MatrixXd interpolate(const KernelSpec& k, const std::vector<OptionPoint>& from, const Basis& b,
                                   const Eigen::MatrixXd& U, const std::vector<OptionPoint>& to) {
  if (from.empty()) return Eigen::MatrixXd::Zero(U.rows(), static_cast<Eigen::Index>(to.size()));
  const Eigen::MatrixXd W = to_white(b, U);
  return W * (b.P.transpose() * cross_gram(k, from, to));
}

inline Eigen::MatrixXd uniform_graph(int n) { return Eigen::MatrixXd::Constant(n, n, 1.0 / n); }

// Maps a previous estimate onto the current point list.
inline Eigen::MatrixXd warm_values(const InferenceConfig& cfg, const std::vector<OptionPoint>& pts,
                                   int rows, const MapEstimate* warm, bool use_v) {
  const int m = static_cast<int>(pts.size());
  Eigen::MatrixXd U = Eigen::MatrixXd::Zero(rows, m);
  if (!warm || warm->points.empty()) return U;
  const Eigen::MatrixXd& W = use_v ? warm->V : warm->U;
  if (W.rows() != rows) return U;
  U = interpolate(cfg.kernel, warm->points, kernel_basis(cfg.kernel, warm->points), W, pts);
  for (int j = 0; j < m; ++j)
    for (std::size_t w = 0; w < warm->points.size(); ++w)
      if (warm->points[w] == pts[static_cast<std::size_t>(j)]) U.col(j) = W.col(static_cast<Eigen::Index>(w));
  return U;
}

// max over rows-x-m values of the given concave objective inside the balls,
// solved in whitened coordinates.
inline Eigen::MatrixXd solve_values(TermPtr objective, int rows, const Basis& b, double L, const SolverOptions& opts,
                                    const Eigen::MatrixXd& start) {
  const int k = b.rank();
  ConvexProgram p;
  p.layout.add("W", rows * k);
  p.objective = std::make_shared<WhitenedTerm>(std::move(objective), std::make_shared<const Eigen::MatrixXd>(b.B), rows);
  p.options = opts;
  add_balls(p, rows, k, L);
  Eigen::MatrixXd W0 = to_white(b, start);
  shrink_into_ball(W0, L);
  const auto r = solve(p, stack(W0));
  if (r.status == SolveStatus::kInfeasible) throw StateError("fit_map: utility program infeasible");
  return from_white(b.B, unstack(r.x, rows, k));
}

inline Eigen::MatrixXd solve_graph(const std::vector<VoteData::Vote>& votes, const Eigen::MatrixXd& U,
                                   const GraphPrior& prior, const SolverOptions& opts, const Eigen::MatrixXd& A0,
                                   bool with_prior = true) {
  const int n = static_cast<int>(U.rows());
  const int f = n - 1;
  if (n == 1) return Eigen::MatrixXd::Ones(1, 1);
  ConvexProgram p;
  p.layout.add("A", n * f);
  auto obj = std::make_shared<SumTerm>();
  if (with_prior)
    obj->add(std::make_shared<GraphPriorTerm>(n, 0, prior.xi, Eigen::MatrixXd::Constant(n, n, prior.kappa - 1.0)));
  if (!votes.empty()) obj->add(std::make_shared<LogisticSum>(graph_rows(votes, U)));
  p.objective = obj;
  p.options = opts;
  const double lo = prior.delta_A, hi = 1.0 - prior.delta_A;
  for (int i = 0; i < n; ++i) {
    SparseAffine sum_lo{{}, hi}, sum_hi{{}, -lo};  // 1 - sum >= lo, 1 - sum <= hi
    for (int j = 0; j < f; ++j) {
      const int k = i * f + j;
      p.constraints.push_back({std::make_shared<LinearTerm>(SparseAffine{{{k, 1.0}}, -lo}), "A floor"});
      p.constraints.push_back({std::make_shared<LinearTerm>(SparseAffine{{{k, -1.0}}, hi}), "A ceiling"});
      sum_lo.coef.push_back({k, -1.0});
      sum_hi.coef.push_back({k, 1.0});
    }
    p.constraints.push_back({std::make_shared<LinearTerm>(sum_lo), "A last floor"});
    p.constraints.push_back({std::make_shared<LinearTerm>(sum_hi), "A last ceiling"});
  }
  Eigen::VectorXd y0(n * f);
  const Eigen::MatrixXd Ac = clip_to_floor(A0, prior.delta_A * 1.001);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < f; ++j) y0[i * f + j] = Ac(i, j);
  const auto r = solve(p, y0);
  if (r.status == SolveStatus::kInfeasible) throw StateError("fit_map: graph program infeasible");
  Eigen::MatrixXd A(n, n);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < f; ++j) {
      A(i, j) = r.x[i * f + j];
      s += A(i, j);
    }
    A(i, f) = 1.0 - s;
  }
  return A;
}

inline double graph_log_prior(const Eigen::MatrixXd& A, const GraphPrior& prior) {
  return log_prior(SocialGraph(A, prior));
}

}  // namespace detail

/// Joint MAP by two-block coordinate ascent (U with A fixed, then A with U
/// fixed). Other model kinds drop or fix blocks.
inline MapEstimate fit_map_unchecked(const VoteData& data, const InferenceConfig& cfg, const MapEstimate* warm = nullptr) {
  const int n = cfg.n;
  if (data.n() != n) throw ArgumentError("fit_map: data agent count differs from config");
  cfg.kernel.validate();
  const auto& pts = data.points();
  const int m = static_cast<int>(pts.size());
  MapEstimate est;
  est.points = pts;
  est.norm_bound = cfg.norm_bound;
  est.A = SocialGraph(detail::uniform_graph(n), cfg.prior);
  if (m == 0) {
    est.U = est.V = Eigen::MatrixXd::Zero(n, 0);
    est.log_posterior = detail::graph_log_prior(est.A.A, cfg.prior);
    return est;
  }
  const detail::Basis basis = detail::kernel_basis(cfg.kernel, pts);
  const double L = cfg.norm_bound;
  SolverOptions opts = cfg.solver;

  switch (cfg.model) {
    case ModelKind::kCoupled: {
      Eigen::MatrixXd A = warm && warm->A.A.rows() == n ? warm->A.A : detail::uniform_graph(n);
      Eigen::MatrixXd U = detail::warm_values(cfg, pts, n, warm, false);
      const auto priv = detail::direct_rows(data.private_votes(), n, m, false);
      double prev = -std::numeric_limits<double>::infinity();
      for (int sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
        auto obj = std::make_shared<SumTerm>();
        if (!priv.empty()) obj->add(std::make_shared<LogisticSum>(priv));
        obj->add(std::make_shared<LogisticSum>(detail::coupled_rows(data.public_votes(), A, m)));
        U = detail::solve_values(obj, n, basis, L, opts, U);
        A = detail::solve_graph(data.public_votes(), U, cfg.prior, opts, A);
        const double lu = detail::rows_loglik(priv, detail::stack(U));
        const double lvv = detail::rows_loglik(detail::coupled_rows(data.public_votes(), A, m), detail::stack(U));
        const double total = lu + lvv + detail::graph_log_prior(A, cfg.prior);
        est.sweeps = sweep + 1;
        est.ll_u = lu;
        est.ll_v = lvv;
        est.log_posterior = total;
        if (std::abs(total - prev) < cfg.sweep_tol) break;
        prev = total;
      }
      est.U = U;
      est.A = SocialGraph(A, cfg.prior);
      est.V = A * U;
      return est;
    }
    case ModelKind::kIndependent: {
      const auto priv = detail::direct_rows(data.private_votes(), n, m, false);
      const auto pub = detail::direct_rows(data.public_votes(), n, m, false);
      Eigen::MatrixXd U = detail::warm_values(cfg, pts, n, warm, false);
      Eigen::MatrixXd V = detail::warm_values(cfg, pts, n, warm, true);
      if (!priv.empty()) U = detail::solve_values(std::make_shared<LogisticSum>(priv), n, basis, L, opts, U);
      else U.setZero();
      if (!pub.empty()) V = detail::solve_values(std::make_shared<LogisticSum>(pub), n, basis, L, opts, V);
      else V.setZero();
      est.U = U;
      est.V = V;
      est.ll_u = detail::rows_loglik(priv, detail::stack(U));
      est.ll_v = detail::rows_loglik(pub, detail::stack(V));
      est.log_posterior = est.ll_u + est.ll_v + detail::graph_log_prior(est.A.A, cfg.prior);
      est.sweeps = 1;
      return est;
    }
    case ModelKind::kOracle: {
      if (!cfg.known_graph) throw ArgumentError("oracle model needs the true graph");
      const Eigen::MatrixXd& A = *cfg.known_graph;
      const auto pub = detail::direct_rows(data.public_votes(), n, m, false);
      Eigen::MatrixXd V = detail::warm_values(cfg, pts, n, warm, true);
      if (!pub.empty()) V = detail::solve_values(std::make_shared<LogisticSum>(pub), n, basis, L, opts, V);
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
      const auto& s = svd.singularValues();
      const bool singular = s[s.size() - 1] <= 1e-12 * s[0];
      est.graph_singular = singular;
      if (!singular) {
        est.U = A.fullPivLu().solve(V);
      } else {
        Eigen::VectorXd sinv = Eigen::VectorXd::Zero(s.size());
        for (Eigen::Index k = 0; k < s.size(); ++k)
          if (s[k] > 1e-12 * s[0]) sinv[k] = 1.0 / s[k];
        est.U = svd.matrixV() * sinv.asDiagonal() * svd.matrixU().transpose() * V;
      }
      est.V = V;
      est.A = SocialGraph(A, cfg.prior);
      est.ll_v = detail::rows_loglik(pub, detail::stack(V));
      est.log_posterior = est.ll_v;
      est.sweeps = 1;
      return est;
    }
    case ModelKind::kSingleAgent: {
      const auto pub = detail::direct_rows(data.public_votes(), n, m, true);
      Eigen::MatrixXd S = Eigen::MatrixXd::Zero(1, m);
      if (warm && warm->U.rows() == n && !warm->points.empty()) {
        MapEstimate w1 = *warm;
        w1.U = warm->U.topRows(1);
        w1.V = warm->V.topRows(1);
        S = detail::warm_values(cfg, pts, 1, &w1, false);
      }
      if (!pub.empty()) S = detail::solve_values(std::make_shared<LogisticSum>(pub), 1, basis, L, opts, S);
      est.U = S.replicate(n, 1);
      est.V = est.U;
      est.ll_v = detail::rows_loglik(pub, detail::stack(S));
      est.log_posterior = est.ll_v;
      est.sweeps = 1;
      return est;
    }
  }
  throw ArgumentError("unknown model kind");
}

inline MapEstimate fit_map(const VoteData& data, const InferenceConfig& cfg, const MapEstimate* warm = nullptr) {
  if (data.public_votes().empty()) throw StateError("fit_map: needs at least one public vote");
  return fit_map_unchecked(data, cfg, warm);
}

namespace detail {

inline Eigen::VectorXd predict_rows(const std::vector<OptionPoint>& pts, const Eigen::MatrixXd& W, const KernelSpec& k,
                                    const OptionPoint& x) {
  for (std::size_t j = 0; j < pts.size(); ++j)
    if (pts[j] == x) return W.col(static_cast<Eigen::Index>(j));
  if (pts.empty()) return Eigen::VectorXd::Zero(W.rows());
  return interpolate(k, pts, kernel_basis(k, pts), W, {x}).col(0);
}

}  // namespace detail

/// MAP utilities of every agent at x (representer interpolation).
inline Eigen::VectorXd predict_map(const MapEstimate& est, const KernelSpec& k, const OptionPoint& x) {
  return detail::predict_rows(est.points, est.U, k, x);
}

inline Eigen::VectorXd predict_map_public(const MapEstimate& est, const KernelSpec& k, const OptionPoint& x) {
  return detail::predict_rows(est.points, est.V, k, x);
}

enum class BoundDirection { kUpper, kLower };
enum class WidthChannel { kU, kV };

inline std::string to_string(WidthChannel c) { return c == WidthChannel::kU ? "u" : "v"; }

/// Everything the confidence programs of one round share: the point set,
/// its kernel inverse, likelihood rows and thresholds.
class ConfidenceSets {
 public:
  ConfidenceSets(const VoteData& data, const InferenceConfig& cfg, const MapEstimate& est)
      : cfg_(cfg), est_(est), n_(cfg.n), pts_(data.points()) {
    m_ = static_cast<int>(pts_.size());
    rows_ = cfg.model == ModelKind::kSingleAgent ? 1 : n_;
    basis_ = detail::kernel_basis(cfg.kernel, pts_);
    const int nu = static_cast<int>(data.private_votes().size());
    const int nv = static_cast<int>(data.public_votes().size());
    beta_ = beta(cfg.beta, nu, nv);
    has_u_ = nu > 0 && cfg.model != ModelKind::kOracle && cfg.model != ModelKind::kSingleAgent;
    has_v_ = nv > 0;
    priv_votes_ = data.private_votes();
    pub_votes_ = data.public_votes();
    if (cfg.model == ModelKind::kCoupled || cfg.model == ModelKind::kOracle)
      A_ = cfg.model == ModelKind::kOracle ? *cfg.known_graph : est.A.A;
    // The oracle's set lives on v; u = A^+ v is a linear image of it.
    if (cfg.model == ModelKind::kOracle)
      A_pinv_ = A_.completeOrthogonalDecomposition().pseudoInverse();
    // Thresholds are the log-likelihoods the MAP achieves on each channel.
    const Eigen::VectorXd y = detail::stack(est.U.topRows(rows_));
    ll_u_hat_ = has_u_ ? detail::rows_loglik(detail::direct_rows(priv_votes_, n_, m_, false), y) : 0.0;
    ll_v_hat_ = has_v_ ? v_loglik_at(y, m_) : 0.0;
    Eigen::VectorXd yv = detail::stack(est.V);
    ll_v_pub_hat_ = has_v_ ? detail::rows_loglik(detail::direct_rows(pub_votes_, n_, m_, false), yv) : 0.0;
  }

  const BetaValues& betas() const { return beta_; }
  int rows() const { return rows_; }
  const std::vector<OptionPoint>& points() const { return pts_; }

  /// Maximizes coef^T (values at the given columns) over the joint set
  /// (channel u) or the public-only set (channel v). Extra points not yet
  /// queried are appended as new columns. Returns the argmax values
  /// (rows x columns) and the objective.
  struct Extremum {
    Eigen::MatrixXd values;  // rows x (m + extra)
    std::vector<int> cols;   // column of each requested point
    double objective = 0.0;
    SolveStatus status = SolveStatus::kOptimal;
  };

  Extremum maximize(const std::vector<OptionPoint>& at, const std::vector<Eigen::VectorXd>& coef, WidthChannel ch,
                    const SolverOptions& opts) const {
    std::vector<OptionPoint> all = pts_;
    std::vector<int> cols;
    for (const auto& x : at) {
      int c = -1;
      for (std::size_t j = 0; j < all.size(); ++j)
        if (all[j] == x) c = static_cast<int>(j);
      if (c < 0) {
        all.push_back(x);
        c = static_cast<int>(all.size()) - 1;
      }
      cols.push_back(c);
    }
    const int M = static_cast<int>(all.size());
    const auto C = std::make_shared<const Eigen::MatrixXd>(augmented_basis(all));
    const int R = static_cast<int>(C->cols());
    const double L = cfg_.norm_bound;
    const bool oracle_u = cfg_.model == ModelKind::kOracle && ch == WidthChannel::kU;
    const bool v_only = oracle_u || (ch == WidthChannel::kV && cfg_.model != ModelKind::kSingleAgent);

    ConvexProgram p;
    p.layout.add("W", rows_ * R);
    p.options = opts;
    // coef^T U at column c is coef^T W C(c, :)^T.
    SparseAffine lin;
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const Eigen::VectorXd ck = oracle_u ? Eigen::VectorXd(A_pinv_.transpose() * coef[k]) : coef[k];
      for (int r = 0; r < rows_; ++r) {
        const double c = ck[r];
        if (c == 0.0) continue;
        for (int j = 0; j < R; ++j)
          if ((*C)(cols[k], j) != 0.0) lin.coef.push_back({detail::var(r, j, R), c * (*C)(cols[k], j)});
      }
    }
    p.objective = std::make_shared<LinearTerm>(lin);
    detail::add_balls(p, rows_, R, L);

    // Start from the MAP; zero whitened coordinates on new columns give the
    // kernel interpolation there.
    const Eigen::MatrixXd base = v_only ? est_.V : est_.U.topRows(rows_);
    Eigen::MatrixXd start = Eigen::MatrixXd::Zero(rows_, R);
    if (m_ > 0) start.leftCols(basis_.rank()) = detail::to_white(basis_, base);
    start *= 1.0 - 1e-3;
    detail::shrink_into_ball(start, L);
    auto white = [&](TermPtr t) {
      return std::make_shared<CachedTerm>(std::make_shared<detail::WhitenedTerm>(std::move(t), C, rows_));
    };

    auto run = [&](const Eigen::MatrixXd& A, const Eigen::VectorXd& y0) {
      ConvexProgram q = p;
      if (v_only) {
        if (has_v_) {
          auto lv = std::make_shared<LogisticSum>(detail::direct_rows(pub_votes_, n_, M, false));
          q.constraints.push_back({threshold(white(lv), ll_v_pub_hat_ - beta_.v), "public likelihood"});
        }
      } else {
        TermPtr lu, lv;
        if (has_u_) lu = white(std::make_shared<LogisticSum>(detail::direct_rows(priv_votes_, n_, M, false)));
        if (has_v_) {
          if (auto rows = v_rows(M, A)) lv = white(rows);
        }
        if (lu) q.constraints.push_back({threshold(lu, ll_u_hat_ - beta_.u), "private likelihood"});
        if (lv) q.constraints.push_back({threshold(lv, ll_v_hat_ - beta_.v), "public likelihood"});
        if (lu && lv) {
          auto both = std::make_shared<SumTerm>();
          both->add(lu).add(lv);
          q.constraints.push_back({threshold(both, ll_u_hat_ + ll_v_hat_ - beta_.joint), "joint likelihood"});
        }
      }
      return solve(q, y0);
    };

    const Eigen::VectorXd y0 = detail::stack(start);
    auto r = run(A_, y0);
    if (r.status == SolveStatus::kInfeasible) throw StateError("confidence program infeasible (beta too small?)");
    const bool coupled = !v_only && cfg_.model == ModelKind::kCoupled && has_v_ && n_ > 1;
    // The graph is free inside the joint set but enters bilinearly, so
    // alternate: refit A to the extreme utilities, then re-maximize. Each
    // pass keeps the previous point feasible, so the objective never drops.
    auto alternate = [&](SolveResult& r, Eigen::MatrixXd A) {
      for (int sweep = 0; sweep < cfg_.graph_sweeps; ++sweep) {
        const Eigen::MatrixXd U = detail::from_white(*C, detail::unstack(r.x, rows_, R)).leftCols(m_);
        const Eigen::MatrixXd A2 = detail::solve_graph(pub_votes_, U, cfg_.prior, opts, A, false);
        const auto rows_old = detail::coupled_rows(pub_votes_, A, m_);
        const auto rows_new = detail::coupled_rows(pub_votes_, A2, m_);
        const Eigen::VectorXd yu = detail::stack(U);
        if (detail::rows_loglik(rows_new, yu) <= detail::rows_loglik(rows_old, yu) + 1e-9) break;
        A = A2;
        // Strictly inside the new set: pull the last argmax toward the MAP start.
        const auto r2 = run(A, 0.9 * r.x + 0.1 * y0);
        if (r2.objective <= r.objective + 1e-9) break;
        r = r2;
      }
    };
    if (coupled) alternate(r, A_);
    Extremum e;
    e.values = detail::from_white(*C, detail::unstack(r.x, rows_, R));
    if (oracle_u) e.values = A_pinv_ * e.values;
    e.cols = cols;
    e.objective = r.objective;
    e.status = r.status;
    return e;
  }

  /// Upper or lower confidence bound on u(x, agent).
  double bound(const OptionPoint& x, int agent, BoundDirection dir) const {
    check_agent(agent);
    const int r = rows_ == 1 ? 0 : agent;
    Eigen::VectorXd c = Eigen::VectorXd::Zero(rows_);
    c[r] = dir == BoundDirection::kUpper ? 1.0 : -1.0;
    const auto e = maximize({x}, {c}, WidthChannel::kU, cfg_.solver);
    return e.values(r, e.cols[0]);
  }

  struct Width {
    double width = 0.0;
    Eigen::VectorXd lower;  // per-agent min of u(x) - u(x')
    Eigen::VectorXd upper;
  };

  /// Per-agent extremes of the pairwise difference and their 2-norm spread.
  Width width(const OptionPoint& x, const OptionPoint& xp, WidthChannel ch) const {
    Width w;
    w.lower = Eigen::VectorXd::Zero(n_);
    w.upper = Eigen::VectorXd::Zero(n_);
    if (x == xp) return w;
    for (int r = 0; r < rows_; ++r) {
      for (double sgn : {1.0, -1.0}) {
        Eigen::VectorXd c = Eigen::VectorXd::Zero(rows_);
        c[r] = sgn;
        const auto e = maximize({x, xp}, {c, -c}, ch, cfg_.solver);
        const double d = e.values(r, e.cols[0]) - e.values(r, e.cols[1]);
        (sgn > 0 ? w.upper : w.lower)[r] = d;
      }
    }
    if (rows_ == 1) {
      w.upper.setConstant(w.upper[0]);
      w.lower.setConstant(w.lower[0]);
    }
    w.width = (w.upper - w.lower).cwiseMax(0.0).norm();
    return w;
  }

  struct Acquisition {
    double value = 0.0;
    Eigen::MatrixXd z;  // utilities at (x, x_prev) of the optimistic model
  };

  /// Optimistic social-utility gain of x over x_prev. The GSF sort orders are
  /// frozen at the MAP and re-solved once if the optimum reorders the agents.
  Acquisition acquisition(const OptionPoint& x, const OptionPoint& xp, const SolverOptions& opts) const {
    Acquisition a;
    if (x == xp) return a;
    const GsfRule rule(cfg_.rho, n_);
    auto agg = [&](const Eigen::VectorXd& u) { return rows_ == 1 ? u[0] : rule(u); };
    auto coefs = [&](const Eigen::VectorXd& ux, const Eigen::VectorXd& uxp) {
      if (rows_ == 1) return std::make_pair(Eigen::VectorXd::Ones(1).eval(), (-Eigen::VectorXd::Ones(1)).eval());
      return std::make_pair(rule.coefficients(rule.sort_order(ux)), (-rule.coefficients(rule.sort_order(uxp))).eval());
    };
    Eigen::VectorXd ux = predict_u(x);
    Eigen::VectorXd uxp = predict_u(xp);
    auto [cx, cxp] = coefs(ux, uxp);
    auto e = maximize({x, xp}, {cx, cxp}, WidthChannel::kU, opts);
    Eigen::VectorXd zx = e.values.col(e.cols[0]), zxp = e.values.col(e.cols[1]);
    if (rows_ > 1 && cfg_.rho < 1.0 &&
        (rule.sort_order(zx) != rule.sort_order(ux) || rule.sort_order(zxp) != rule.sort_order(uxp))) {
      auto [cx2, cxp2] = coefs(zx, zxp);
      auto e2 = maximize({x, xp}, {cx2, cxp2}, WidthChannel::kU, opts);
      const Eigen::VectorXd zx2 = e2.values.col(e2.cols[0]), zxp2 = e2.values.col(e2.cols[1]);
      if (agg(zx2) - agg(zxp2) > agg(zx) - agg(zxp)) {
        zx = zx2;
        zxp = zxp2;
      }
    }
    a.value = agg(zx) - agg(zxp);
    a.z.resize(rows_, 2);
    a.z.col(0) = zx;
    a.z.col(1) = zxp;
    return a;
  }

 private:
  Eigen::VectorXd predict_u(const OptionPoint& x) const {
    for (int j = 0; j < m_; ++j)
      if (pts_[static_cast<std::size_t>(j)] == x) return est_.U.col(j).head(rows_);
    return detail::interpolate(cfg_.kernel, pts_, basis_, est_.U.topRows(rows_), {x}).col(0);
  }

  std::shared_ptr<LogisticSum> v_rows(int M, const Eigen::MatrixXd& A) const {
    if (cfg_.model == ModelKind::kIndependent) return nullptr;  // u and v are not linked
    if (cfg_.model == ModelKind::kSingleAgent)
      return std::make_shared<LogisticSum>(detail::direct_rows(pub_votes_, n_, M, true));
    return std::make_shared<LogisticSum>(detail::coupled_rows(pub_votes_, A, M));
  }

  double v_loglik_at(const Eigen::VectorXd& y, int M) const {
    const auto t = v_rows(M, A_);
    return t ? t->value(y) : 0.0;
  }

  static TermPtr threshold(TermPtr t, double level) {
    auto s = std::make_shared<SumTerm>(-level);
    s->add(std::move(t));
    return s;
  }

  void check_agent(int agent) const {
    if (agent < 0 || agent >= n_) throw ArgumentError("agent index out of range");
  }

  // Basis over pts_ plus appended points. The cached rows keep their
  // coordinates; each new point gets one extra coordinate from the
  // Cholesky factor of the residual covariance.
  Eigen::MatrixXd augmented_basis(const std::vector<OptionPoint>& all) const {
    const int M = static_cast<int>(all.size());
    const int r = basis_.rank();
    if (M == m_) return basis_.B;
    std::vector<OptionPoint> extra(all.begin() + m_, all.end());
    const int e = M - m_;
    Eigen::MatrixXd Bn = Eigen::MatrixXd::Zero(e, r);
    if (m_ > 0) Bn = cross_gram(cfg_.kernel, extra, pts_) * basis_.P;
    const Eigen::MatrixXd S = gram(cfg_.kernel, extra).K - Bn * Bn.transpose();
    for (double j = detail::kEigenFloor; j <= 1e-2 * (1.0 + 1e-9); j *= 10.0) {
      Eigen::LLT<Eigen::MatrixXd> llt(S + j * Eigen::MatrixXd::Identity(e, e));
      if (llt.info() != Eigen::Success) continue;
      Eigen::MatrixXd out = Eigen::MatrixXd::Zero(M, r + e);
      if (m_ > 0) {
        out.topLeftCorner(m_, r) = basis_.B;
        out.bottomLeftCorner(e, r) = Bn;
      }
      out.bottomRightCorner(e, e) = llt.matrixL();
      return out;
    }
    throw NumericError("confidence program: appended points make the Gram matrix singular",
                       std::numeric_limits<double>::infinity());
  }

  InferenceConfig cfg_;
  MapEstimate est_;
  int n_;
  int rows_;
  int m_;
  std::vector<OptionPoint> pts_;
  detail::Basis basis_;
  Eigen::MatrixXd A_;
  Eigen::MatrixXd A_pinv_;  // oracle only
  BetaValues beta_;
  bool has_u_ = false;
  bool has_v_ = false;
  std::vector<VoteData::Vote> priv_votes_;
  std::vector<VoteData::Vote> pub_votes_;
  double ll_u_hat_ = 0.0;
  double ll_v_hat_ = 0.0;
  double ll_v_pub_hat_ = 0.0;
};

inline double confidence_bound(const VoteData& data, const InferenceConfig& cfg, const MapEstimate& est,
                               const OptionPoint& x, int agent, BoundDirection dir) {
  return ConfidenceSets(data, cfg, est).bound(x, agent, dir);
}

inline double acquisition_value(const VoteData& data, const InferenceConfig& cfg, const MapEstimate& est,
                                const OptionPoint& x, const OptionPoint& x_prev) {
  return ConfidenceSets(data, cfg, est).acquisition(x, x_prev, cfg.solver).value;
}

inline double projection_width(const VoteData& data, const InferenceConfig& cfg, const MapEstimate& est,
                               const OptionPoint& x, const OptionPoint& x_prev, WidthChannel ch) {
  return ConfidenceSets(data, cfg, est).width(x, x_prev, ch).width;
}

/// Doubles the norm bound when the MAP at twice the bound beats the current
/// one by more than the confidence radius at twice the bound. That radius
/// grows linearly with the bound.
inline double adapt_norm_bound_from(const VoteData& data, const InferenceConfig& cfg, const MapEstimate& here) {
  InferenceConfig big = cfg;
  big.norm_bound = 2.0 * cfg.norm_bound;
  const MapEstimate there = fit_map_unchecked(data, big, &here);
  const int nu = static_cast<int>(data.private_votes().size());
  const int nv = static_cast<int>(data.public_votes().size());
  const double b = beta(big.beta, nu, nv).joint * big.norm_bound / cfg.beta_norm_ref;
  return here.log_posterior < there.log_posterior - b ? big.norm_bound : cfg.norm_bound;
}

inline double adapt_norm_bound(const VoteData& data, const InferenceConfig& cfg, const MapEstimate* warm = nullptr) {
  return adapt_norm_bound_from(data, cfg, fit_map_unchecked(data, cfg, warm));
}

/// Held-out negative log-likelihood of one vote record under an estimate.
inline double heldout_nll(const MapEstimate& est, const KernelSpec& k, const VoteRecord& v) {
  const Eigen::VectorXd d = v.channel == Channel::kPrivate
                                ? Eigen::VectorXd(predict_map(est, k, v.x) - predict_map(est, k, v.xp))
                                : Eigen::VectorXd(predict_map_public(est, k, v.x) - predict_map_public(est, k, v.xp));
  double s = 0.0;
  for (Eigen::Index i = 0; i < d.size(); ++i) s -= log_sigmoid(v.outcomes[static_cast<std::size_t>(i)] ? d[i] : -d[i]);
  return s;
}

struct LoocvOptions {
  int max_folds = 0;  // 0 holds out every vote; otherwise evenly spaced folds
};

/// Chooses the lengthscale with the smallest mean held-out negative log
/// likelihood; ties go to the larger lengthscale.
inline KernelSpec tune_kernel_loocv(const VoteData& data, const InferenceConfig& cfg, std::vector<double> grid,
                                    const LoocvOptions& opt = {}) {
  if (grid.empty()) throw ArgumentError("tune_kernel_loocv: empty lengthscale grid");
  const auto& recs = data.records();
  if (recs.size() < 3) throw StateError("tune_kernel_loocv: needs at least 3 votes");
  std::sort(grid.begin(), grid.end(), std::greater<>());
  if (grid.size() == 1) {
    KernelSpec k = cfg.kernel;
    k.lengthscale.setConstant(grid[0]);
    return k;
  }
  const int all = static_cast<int>(recs.size());
  const int folds = opt.max_folds > 0 ? std::min(opt.max_folds, all) : all;
  std::vector<std::size_t> held;
  for (int f = 0; f < folds; ++f)
    held.push_back(static_cast<std::size_t>((static_cast<double>(f) + 0.5) * static_cast<double>(recs.size()) / folds));
  KernelSpec best = cfg.kernel;
  double best_score = std::numeric_limits<double>::infinity();
  for (double ell : grid) {
    InferenceConfig c = cfg;
    c.kernel.lengthscale.setConstant(ell);
    double score = 0.0;
    for (std::size_t k : held) {
      const VoteData train = data.without(k);
      const MapEstimate est = fit_map_unchecked(train, c);
      score += heldout_nll(est, c.kernel, recs[k]);
    }
    score /= static_cast<double>(held.size());
    // Differences below solver accuracy count as ties.
    if (score < best_score - 1e-6) {
      best_score = score;
      best = c.kernel;
    }
  }
  return best;
}

}  // namespace sbo

#endif  // SBO_INFERENCE_HPP_
