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


#ifndef SBO_CONVEX_SOLVER_HPP_
#define SBO_CONVEX_SOLVER_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/QR>

#include "sbo/errors.hpp"

namespace sbo {

/// Named contiguous blocks of the unknown vector.
class Layout {
 public:
  struct Block {
    std::string name;
    int offset = 0;
    int size = 0;
  };

  int add(const std::string& name, int size) {
    if (size < 0) throw ArgumentError("layout block size must be nonnegative");
    if (find(name)) throw ArgumentError("duplicate layout block '" + name + "'");
    blocks_.push_back({name, dim_, size});
    dim_ += size;
    return blocks_.back().offset;
  }

  const Block* find(const std::string& name) const {
    for (const auto& b : blocks_)
      if (b.name == name) return &b;
    return nullptr;
  }

  const Block& at(const std::string& name) const {
    const Block* b = find(name);
    if (!b) throw ArgumentError("no layout block '" + name + "'");
    return *b;
  }

  int dim() const { return dim_; }
  const std::vector<Block>& blocks() const { return blocks_; }

 private:
  std::vector<Block> blocks_;
  int dim_ = 0;
};

/// A concave function of the unknown vector.
///
/// evaluate() returns the value and, when the pointers are non-null, adds
/// scale times the gradient and Hessian into them. Terms only touch the
/// indices they were built with, so they also evaluate on longer vectors.
class Term {
 public:
  virtual ~Term() = default;
  virtual double evaluate(const Eigen::VectorXd& y, Eigen::VectorXd* grad, Eigen::MatrixXd* hess,
                          double scale) const = 0;
  virtual int max_index() const = 0;

  double value(const Eigen::VectorXd& y) const { return evaluate(y, nullptr, nullptr, 1.0); }
};

using TermPtr = std::shared_ptr<const Term>;

/// c^T y + b with sparse c.
struct SparseAffine {
  std::vector<std::pair<int, double>> coef;
  double offset = 0.0;

  double eval(const Eigen::VectorXd& y) const {
    double s = offset;
    for (const auto& [k, c] : coef) s += c * y[k];
    return s;
  }
  int max_index() const {
    int m = -1;
    for (const auto& [k, c] : coef) m = std::max(m, k);
    return m;
  }
};

class LinearTerm final : public Term {
 public:
  explicit LinearTerm(SparseAffine a) : a_(std::move(a)) {}

  double evaluate(const Eigen::VectorXd& y, Eigen::VectorXd* grad, Eigen::MatrixXd*,
                  double scale) const override {
    if (grad)
      for (const auto& [k, c] : a_.coef) (*grad)[k] += scale * c;
    return a_.eval(y);
  }
  int max_index() const override { return a_.max_index(); }

 private:
  SparseAffine a_;
};

/// sum_r log sigma(a_r^T y + b_r)
class LogisticSum final : public Term {
 public:
  explicit LogisticSum(std::vector<SparseAffine> rows) : rows_(std::move(rows)) {}

  double evaluate(const Eigen::VectorXd& y, Eigen::VectorXd* grad, Eigen::MatrixXd* hess,
                  double scale) const override {
    double s = 0.0;
    for (const auto& r : rows_) {
      const double d = r.eval(y);
      const double e = std::exp(-std::abs(d));
      s += d >= 0.0 ? -std::log1p(e) : d - std::log1p(e);
      if (!grad && !hess) continue;
      const double p = d >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
      const double g1 = 1.0 - p;
      const double g2 = -p * (1.0 - p);
      if (grad)
        for (const auto& [k, c] : r.coef) (*grad)[k] += scale * g1 * c;
      if (hess)
        for (const auto& [k, c] : r.coef)
          for (const auto& [l, b] : r.coef) (*hess)(k, l) += scale * g2 * c * b;
    }
    return s;
  }
  int max_index() const override {
    int m = -1;
    for (const auto& r : rows_) m = std::max(m, r.max_index());
    return m;
  }
  bool empty() const { return rows_.empty(); }

 private:
  std::vector<SparseAffine> rows_;
};

/// constant - y_S^T M y_S for an index list S and a PSD matrix M.
class QuadraticForm final : public Term {
 public:
  QuadraticForm(std::vector<int> idx, Eigen::MatrixXd M, double constant)
      : idx_(std::move(idx)), M_(std::move(M)), c_(constant) {
    if (M_.rows() != M_.cols() || M_.rows() != static_cast<Eigen::Index>(idx_.size()))
      throw ArgumentError("QuadraticForm: matrix does not match index list");
  }

  double evaluate(const Eigen::VectorXd& y, Eigen::VectorXd* grad, Eigen::MatrixXd* hess,
                  double scale) const override {
    const auto m = static_cast<Eigen::Index>(idx_.size());
    Eigen::VectorXd ys(m);
    for (Eigen::Index k = 0; k < m; ++k) ys[k] = y[idx_[static_cast<std::size_t>(k)]];
    const Eigen::VectorXd My = M_ * ys;
    if (grad)
      for (Eigen::Index k = 0; k < m; ++k) (*grad)[idx_[static_cast<std::size_t>(k)]] -= 2.0 * scale * My[k];
    if (hess)
      for (Eigen::Index k = 0; k < m; ++k)
        for (Eigen::Index l = 0; l < m; ++l)
          (*hess)(idx_[static_cast<std::size_t>(k)], idx_[static_cast<std::size_t>(l)]) -= 2.0 * scale * M_(k, l);
    return c_ - ys.dot(My);
  }
  int max_index() const override {
    return idx_.empty() ? -1 : *std::max_element(idx_.begin(), idx_.end());
  }

 private:
  std::vector<int> idx_;
  Eigen::MatrixXd M_;
  double c_;
};

/// Graph log prior over the free entries of a row-stochastic A.
///
/// Row i is stored as n-1 free entries starting at offset + i (n-1); the last
/// entry is one minus their sum. Value: -xi ||A||_F^2 + sum (kappa-1) log A.
class GraphPriorTerm final : public Term {
 public:
  GraphPriorTerm(int n, int offset, double xi, Eigen::MatrixXd kappa_minus_one)
      : n_(n), offset_(offset), xi_(xi), km1_(std::move(kappa_minus_one)) {
    if (km1_.rows() != n || km1_.cols() != n) throw ArgumentError("GraphPriorTerm: kappa shape");
  }

  double evaluate(const Eigen::VectorXd& y, Eigen::VectorXd* grad, Eigen::MatrixXd* hess,
                  double scale) const override {
    double s = 0.0;
    const int f = n_ - 1;
    for (int i = 0; i < n_; ++i) {
      const int base = offset_ + i * f;
      double last = 1.0;
      for (int j = 0; j < f; ++j) last -= y[base + j];
      auto entry = [&](int j) { return j < f ? y[base + j] : last; };
      for (int j = 0; j < n_; ++j) {
        const double a = entry(j);
        if (!(a > 0.0)) return -std::numeric_limits<double>::infinity();
        s += -xi_ * a * a + km1_(i, j) * std::log(a);
      }
      if (f == 0) continue;
      const double gl = -2.0 * xi_ * last + km1_(i, f) / last;
      const double hl = -2.0 * xi_ - km1_(i, f) / (last * last);
      for (int j = 0; j < f; ++j) {
        const double a = y[base + j];
        if (grad) (*grad)[base + j] += scale * (-2.0 * xi_ * a + km1_(i, j) / a - gl);
        if (hess) {
          (*hess)(base + j, base + j) += scale * (-2.0 * xi_ - km1_(i, j) / (a * a));
          for (int k = 0; k < f; ++k) (*hess)(base + j, base + k) += scale * hl;
        }
      }
    }
    return s;
  }
  int max_index() const override { return offset_ + n_ * (n_ - 1) - 1; }

 private:
  int n_;
  int offset_;
  double xi_;
  Eigen::MatrixXd km1_;
};

/// Weighted sum of terms plus a constant.
class SumTerm final : public Term {
 public:
  SumTerm() = default;
  explicit SumTerm(double constant) : c_(constant) {}

  SumTerm& add(TermPtr t, double weight = 1.0) {
    parts_.emplace_back(std::move(t), weight);
    return *this;
  }

  double evaluate(const Eigen::VectorXd& y, Eigen::VectorXd* grad, Eigen::MatrixXd* hess,
                  double scale) const override {
    double s = c_;
    for (const auto& [t, w] : parts_) s += w * t->evaluate(y, grad, hess, scale * w);
    return s;
  }
  int max_index() const override {
    int m = -1;
    for (const auto& [t, w] : parts_) m = std::max(m, t->max_index());
    return m;
  }

 private:
  std::vector<std::pair<TermPtr, double>> parts_;
  double c_ = 0.0;
};

/// Remembers the last evaluation point, so several constraints that share a
/// sub-term pay for it once. Any derivative request computes both the
/// gradient and the Hessian. Not safe to share between threads.
class CachedTerm final : public Term {
 public:
  explicit CachedTerm(TermPtr inner) : inner_(std::move(inner)) {}

  double evaluate(const Eigen::VectorXd& y, Eigen::VectorXd* grad, Eigen::MatrixXd* hess,
                  double scale) const override {
    const bool same = y_.size() == y.size() && y_ == y;
    const bool want = grad || hess;
    if (!same || (want && !has_derivs_)) {
      y_ = y;
      has_derivs_ = want;
      if (want) {
        g_.setZero(y.size());
        h_.setZero(y.size(), y.size());
      }
      v_ = inner_->evaluate(y, want ? &g_ : nullptr, want ? &h_ : nullptr, 1.0);
    }
    if (grad) grad->head(g_.size()) += scale * g_;
    if (hess) hess->topLeftCorner(h_.rows(), h_.cols()) += scale * h_;
    return v_;
  }
  int max_index() const override { return inner_->max_index(); }

 private:
  TermPtr inner_;
  mutable Eigen::VectorXd y_;
  mutable double v_ = 0.0;
  mutable bool has_derivs_ = false;
  mutable Eigen::VectorXd g_;
  mutable Eigen::MatrixXd h_;
};

/// g(y) >= 0 with g concave.
struct Constraint {
  TermPtr g;
  std::string label;
};

struct SolverOptions {
  double kkt_tol = 1e-6;
  double mu_final = 1e-7;  // last barrier weight; also the complementarity level
  double mu0 = 1.0;
  double mu0_warm = 1e-1;  // used when the warm start is already strictly feasible
  double mu_factor = 5.0;
  double decrement_tol = 1e-12;  // inner stop on half the squared Newton decrement
  int max_outer = 50;
  int max_inner = 100;
};

struct ConvexProgram {
  Layout layout;
  TermPtr objective;
  std::vector<Constraint> constraints;
  SolverOptions options;

  int dim() const { return layout.dim(); }
};

enum class SolveStatus { kOptimal, kMaxIter, kInfeasible };

inline std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::kOptimal: return "optimal";
    case SolveStatus::kMaxIter: return "max-iter";
    case SolveStatus::kInfeasible: return "infeasible";
  }
  return "unknown";
}

struct KktReport {
  double stationarity = 0.0;
  double primal_violation = 0.0;
  double dual_violation = 0.0;
  double complementarity = 0.0;

  double max() const { return std::max({stationarity, primal_violation, dual_violation, complementarity}); }
};

struct SolveResult {
  Eigen::VectorXd x;
  double objective = -std::numeric_limits<double>::infinity();
  SolveStatus status = SolveStatus::kInfeasible;
  double kkt_residual = std::numeric_limits<double>::infinity();
  Eigen::VectorXd multipliers;
  int newton_steps = 0;
};

namespace detail {

inline void check_program(const ConvexProgram& p) {
  if (!p.objective) throw ArgumentError("convex program has no objective");
  const int d = p.dim();
  if (p.objective->max_index() >= d) throw ArgumentError("objective touches indices outside the layout");
  for (const auto& c : p.constraints) {
    if (!c.g) throw ArgumentError("constraint '" + c.label + "' has no function");
    if (c.g->max_index() >= d) throw ArgumentError("constraint '" + c.label + "' is outside the layout");
  }
}

// Lawson-Hanson nonnegative least squares: min ||E l - b|| s.t. l >= 0.
inline Eigen::VectorXd nnls(const Eigen::MatrixXd& E, const Eigen::VectorXd& b) {
  const Eigen::Index k = E.cols();
  Eigen::VectorXd l = Eigen::VectorXd::Zero(k);
  if (k == 0) return l;
  std::vector<bool> passive(static_cast<std::size_t>(k), false);
  for (int iter = 0; iter < 3 * k + 10; ++iter) {
    const Eigen::VectorXd w = E.transpose() * (b - E * l);
    Eigen::Index best = -1;
    double wmax = 1e-12;
    for (Eigen::Index j = 0; j < k; ++j)
      if (!passive[static_cast<std::size_t>(j)] && w[j] > wmax) {
        wmax = w[j];
        best = j;
      }
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = true;
    for (int inner = 0; inner < 3 * k + 10; ++inner) {
      std::vector<Eigen::Index> P;
      for (Eigen::Index j = 0; j < k; ++j)
        if (passive[static_cast<std::size_t>(j)]) P.push_back(j);
      Eigen::MatrixXd EP(E.rows(), static_cast<Eigen::Index>(P.size()));
      for (std::size_t c = 0; c < P.size(); ++c) EP.col(static_cast<Eigen::Index>(c)) = E.col(P[c]);
      const Eigen::VectorXd z = EP.colPivHouseholderQr().solve(b);
      if (z.minCoeff() > 0.0) {
        l.setZero();
        for (std::size_t c = 0; c < P.size(); ++c) l[P[c]] = z[static_cast<Eigen::Index>(c)];
        break;
      }
      double alpha = 1.0;
      for (std::size_t c = 0; c < P.size(); ++c) {
        const double zc = z[static_cast<Eigen::Index>(c)];
        if (zc <= 0.0) alpha = std::min(alpha, l[P[c]] / (l[P[c]] - zc));
      }
      for (std::size_t c = 0; c < P.size(); ++c)
        l[P[c]] += alpha * (z[static_cast<Eigen::Index>(c)] - l[P[c]]);
      for (std::size_t c = 0; c < P.size(); ++c)
        if (l[P[c]] <= 1e-15) {
          l[P[c]] = 0.0;
          passive[static_cast<std::size_t>(P[c])] = false;
        }
    }
  }
  return l;
}

// Damped Newton path-following on f + mu sum log g. Returns false when no
// strictly feasible progress could be made at all.
class Barrier {
 public:
  Barrier(const std::vector<TermPtr>& g, TermPtr f, int dim) : g_(g), f_(std::move(f)), dim_(dim) {}

  // Barrier value at y, or -inf outside the strict interior.
  double phi(const Eigen::VectorXd& y, double mu) const {
    double s = f_->value(y);
    if (!std::isfinite(s)) return -std::numeric_limits<double>::infinity();
    for (const auto& g : g_) {
      const double v = g->value(y);
      if (!(v > 0.0)) return -std::numeric_limits<double>::infinity();
      s += mu * std::log(v);
    }
    return s;
  }

  void derivatives(const Eigen::VectorXd& y, double mu, Eigen::VectorXd& grad, Eigen::MatrixXd& H) const {
    grad.setZero(dim_);
    H.setZero(dim_, dim_);
    f_->evaluate(y, &grad, &H, 1.0);
    Eigen::VectorXd gg(dim_);
    Eigen::MatrixXd hg(dim_, dim_);
    for (const auto& g : g_) {
      gg.setZero();
      hg.setZero();
      const double v = g->evaluate(y, &gg, &hg, 1.0);
      grad.noalias() += (mu / v) * gg;
      H.noalias() += (mu / v) * hg;
      H.noalias() -= (mu / (v * v)) * gg * gg.transpose();
    }
  }

  // Centers at the given mu. stop() is polled after each accepted step.
  template <class Stop>
  int center(Eigen::VectorXd& y, double mu, int max_inner, double grad_tol, double decrement_tol, Stop stop) const {
    Eigen::VectorXd grad;
    Eigen::MatrixXd H;
    int steps = 0;
    for (int it = 0; it < max_inner; ++it) {
      derivatives(y, mu, grad, H);
      if (grad.lpNorm<Eigen::Infinity>() <= grad_tol) break;
      const Eigen::MatrixXd negH = -H;
      Eigen::VectorXd dir;
      double reg = 0.0;
      const double diag_scale = std::max(1.0, negH.diagonal().cwiseAbs().maxCoeff());
      for (int attempt = 0; attempt < 12; ++attempt) {
        Eigen::LLT<Eigen::MatrixXd> llt(reg == 0.0 ? negH
                                                    : Eigen::MatrixXd(negH + reg * Eigen::MatrixXd::Identity(dim_, dim_)));
        if (llt.info() == Eigen::Success) {
          dir = llt.solve(grad);
          if (dir.allFinite()) break;
        }
        dir.resize(0);
        reg = reg == 0.0 ? 1e-12 * diag_scale : reg * 100.0;
      }
      if (dir.size() == 0) dir = grad;
      const double slope = grad.dot(dir);  // squared Newton decrement
      // With a gradient target the decrement alone is too loose a stop.
      if (!(slope > 0.0) || (grad_tol == 0.0 && 0.5 * slope <= decrement_tol)) break;
      const double phi0 = phi(y, mu);
      double step = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < 80; ++ls) {
        const Eigen::VectorXd cand = y + step * dir;
        const double pc = phi(cand, mu);
        if (std::isfinite(pc) && pc >= phi0 + 1e-4 * step * slope) {
          y = cand;
          accepted = true;
          break;
        }
        // Near the optimum the Armijo gain drops below roundoff in phi.
        if (ls == 0 && grad_tol > 0.0 && std::isfinite(pc) &&
            pc >= phi0 - 1e-12 * std::max(1.0, std::abs(phi0))) {
          Eigen::VectorXd gc;
          Eigen::MatrixXd Hc;
          derivatives(cand, mu, gc, Hc);
          if (gc.lpNorm<Eigen::Infinity>() < grad.lpNorm<Eigen::Infinity>()) {
            y = cand;
            accepted = true;
            break;
          }
        }
        step *= 0.5;
      }
      if (!accepted) break;
      ++steps;
      if (stop(y)) break;
      if (slope * step < 1e-20) break;
    }
    return steps;
  }

 private:
  const std::vector<TermPtr>& g_;
  TermPtr f_;
  int dim_;
};

// g(y) - s, where s is the last entry of the augmented vector.
class ShiftedTerm final : public Term {
 public:
  ShiftedTerm(TermPtr g, int s_index) : g_(std::move(g)), s_(s_index) {}
  double evaluate(const Eigen::VectorXd& y, Eigen::VectorXd* grad, Eigen::MatrixXd* hess,
                  double scale) const override {
    const double v = g_->evaluate(y, grad, hess, scale);
    if (grad) (*grad)[s_] -= scale;
    return v - y[s_];
  }
  int max_index() const override { return s_; }

 private:
  TermPtr g_;
  int s_;
};

inline double min_slack(const ConvexProgram& p, const Eigen::VectorXd& y) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& c : p.constraints) m = std::min(m, c.g->value(y));
  return m;
}

}  // namespace detail

/// KKT residuals at y for the given multipliers (one per constraint).
inline KktReport check_kkt(const ConvexProgram& p, const Eigen::VectorXd& y, const Eigen::VectorXd& lambda) {
  detail::check_program(p);
  if (y.size() != p.dim()) throw ArgumentError("check_kkt: candidate does not match the layout");
  if (lambda.size() != static_cast<Eigen::Index>(p.constraints.size()))
    throw ArgumentError("check_kkt: multiplier count does not match the constraints");
  KktReport r;
  Eigen::VectorXd st = Eigen::VectorXd::Zero(p.dim());
  p.objective->evaluate(y, &st, nullptr, 1.0);
  // Stationarity is relative to the largest gradient in the Lagrangian.
  double scale = std::max(1.0, st.lpNorm<Eigen::Infinity>());
  Eigen::VectorXd gj_grad(p.dim());
  for (std::size_t j = 0; j < p.constraints.size(); ++j) {
    const double lj = lambda[static_cast<Eigen::Index>(j)];
    gj_grad.setZero();
    const double gj = p.constraints[j].g->evaluate(y, &gj_grad, nullptr, lj);
    st += gj_grad;
    scale = std::max(scale, gj_grad.lpNorm<Eigen::Infinity>());
    r.primal_violation = std::max(r.primal_violation, std::max(0.0, -gj));
    r.dual_violation = std::max(r.dual_violation, std::max(0.0, -lj));
    r.complementarity = std::max(r.complementarity, std::abs(lj * gj));
  }
  r.stationarity = st.lpNorm<Eigen::Infinity>() / scale;
  return r;
}

namespace detail {

// Multipliers by nonnegative least squares over the constraints within
// active_tol of their boundary; the others get zero.
inline Eigen::VectorXd refit_multipliers(const ConvexProgram& p, const Eigen::VectorXd& y, double active_tol) {
  Eigen::VectorXd gf = Eigen::VectorXd::Zero(p.dim());
  p.objective->evaluate(y, &gf, nullptr, 1.0);
  std::vector<std::size_t> active;
  for (std::size_t j = 0; j < p.constraints.size(); ++j)
    if (p.constraints[j].g->value(y) <= active_tol) active.push_back(j);
  Eigen::MatrixXd E(p.dim(), static_cast<Eigen::Index>(active.size()));
  for (std::size_t c = 0; c < active.size(); ++c) {
    Eigen::VectorXd gg = Eigen::VectorXd::Zero(p.dim());
    p.constraints[active[c]].g->evaluate(y, &gg, nullptr, 1.0);
    E.col(static_cast<Eigen::Index>(c)) = gg;
  }
  const Eigen::VectorXd la = detail::nnls(E, -gf);
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.constraints.size()));
  for (std::size_t c = 0; c < active.size(); ++c)
    lambda[static_cast<Eigen::Index>(active[c])] = la[static_cast<Eigen::Index>(c)];
  return lambda;
}

inline double min_active_slack(const std::vector<TermPtr>& gs, const Eigen::VectorXd& y) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& g : gs) m = std::min(m, g->value(y));
  return m;
}

}  // namespace detail

/// KKT residuals with multipliers estimated by nonnegative least squares
/// over the constraints within active_tol of their boundary.
inline KktReport check_kkt(const ConvexProgram& p, const Eigen::VectorXd& y, double active_tol = 1e-3) {
  detail::check_program(p);
  if (y.size() != p.dim()) throw ArgumentError("check_kkt: candidate does not match the layout");
  return check_kkt(p, y, detail::refit_multipliers(p, y, active_tol));
}

/// Maximizes the concave objective subject to g_j >= 0 by a log-barrier
/// interior point method. An infeasible start goes through a phase I program
/// that maximizes the smallest slack.
inline SolveResult solve(const ConvexProgram& p, const std::optional<Eigen::VectorXd>& warm_start = std::nullopt) {
  detail::check_program(p);
  const int d = p.dim();
  const SolverOptions& o = p.options;
  if (warm_start && warm_start->size() != d) throw ArgumentError("solve: warm start does not match the layout");

  SolveResult res;
  Eigen::VectorXd y = warm_start ? *warm_start : Eigen::VectorXd::Zero(d);
  const bool has_warm = warm_start.has_value();
  bool warm_feasible = has_warm && detail::min_slack(p, y) > 0.0 && std::isfinite(p.objective->value(y));
  bool start_feasible = detail::min_slack(p, y) > 0.0;

  if (!start_feasible) {
    // Phase I over (y, s): maximize s with g_j(y) - s >= 0 and s <= 1.
    const double s0 = detail::min_slack(p, y);
    if (!std::isfinite(s0)) return res;
    std::vector<TermPtr> gs;
    for (const auto& c : p.constraints) gs.push_back(std::make_shared<detail::ShiftedTerm>(c.g, d));
    gs.push_back(std::make_shared<LinearTerm>(SparseAffine{{{d, -1.0}}, 1.0}));
    auto f1 = std::make_shared<LinearTerm>(SparseAffine{{{d, 1.0}}, 0.0});
    Eigen::VectorXd ya(d + 1);
    ya.head(d) = y;
    ya[d] = std::min(s0, 0.0) - 1.0;
    detail::Barrier b1(gs, f1, d + 1);
    const double margin = 1e-6;
    double mu = 1.0;
    bool found = false;
    for (int outer = 0; outer < o.max_outer && !found; ++outer) {
      res.newton_steps += b1.center(ya, mu, o.max_inner, 1e-9, o.decrement_tol, [&](const Eigen::VectorXd& v) {
        return v[d] > margin && detail::min_slack(p, v.head(d)) > 0.0 &&
               std::isfinite(p.objective->value(v.head(d)));
      });
      if (ya[d] > margin && detail::min_slack(p, ya.head(d)) > 0.0 &&
          std::isfinite(p.objective->value(ya.head(d))))
        found = true;
      if (static_cast<double>(gs.size()) * mu < 1e-12) break;
      mu /= o.mu_factor;
    }
    if (!found) {
      if (ya[d] > 0.0 && detail::min_slack(p, ya.head(d)) > 0.0 && std::isfinite(p.objective->value(ya.head(d)))) {
        found = true;
      } else {
        res.x = ya.head(d);
        res.status = SolveStatus::kInfeasible;
        return res;
      }
    }
    y = ya.head(d);
  } else if (!std::isfinite(p.objective->value(y))) {
    throw ArgumentError("solve: objective is not finite at the starting point");
  }

  std::vector<TermPtr> gs;
  for (const auto& c : p.constraints) gs.push_back(c.g);
  detail::Barrier b(gs, p.objective, d);
  double mu = gs.empty() ? 0.0 : (warm_feasible ? o.mu0_warm : o.mu0);
  const double grad_tol = 0.1 * o.kkt_tol;
  bool converged = false;
  for (int outer = 0; outer < o.max_outer; ++outer) {
    // Intermediate centers only need to be rough.
    const bool last = gs.empty() || mu <= o.mu_final;
    res.newton_steps += b.center(y, mu, o.max_inner, last ? grad_tol : 0.0,
                                 last ? o.decrement_tol : std::max(o.decrement_tol, 0.1 * mu),
                                 [](const Eigen::VectorXd&) { return false; });
    if (gs.empty() || mu <= o.mu_final) {
      converged = true;
      break;
    }
    mu = std::max(mu / o.mu_factor, o.mu_final);
  }

  Eigen::VectorXd lambda(static_cast<Eigen::Index>(gs.size()));
  for (std::size_t j = 0; j < gs.size(); ++j) lambda[static_cast<Eigen::Index>(j)] = mu / gs[j]->value(y);

  res.x = y;
  res.objective = p.objective->value(y);
  res.multipliers = lambda;
  res.kkt_residual = check_kkt(p, y, lambda).max();
  if (res.kkt_residual > o.kkt_tol && !gs.empty()) {
    // mu / g is noisy on nearly active constraints; refit the multipliers.
    const double active = std::max(1e-3, 10.0 * detail::min_active_slack(gs, y));
    const auto refit = detail::refit_multipliers(p, y, active);
    const double r2 = check_kkt(p, y, refit).max();
    if (r2 < res.kkt_residual) {
      res.kkt_residual = r2;
      res.multipliers = refit;
    }
  }
  res.status = converged && res.kkt_residual <= o.kkt_tol ? SolveStatus::kOptimal : SolveStatus::kMaxIter;

  if (warm_feasible) {
    const double fw = p.objective->value(*warm_start);
    if (fw > res.objective) {
      res.x = *warm_start;
      res.objective = fw;
    }
  }
  return res;
}

}  // namespace sbo

#endif  // SBO_CONVEX_SOLVER_HPP_
