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


#ifndef SBO_KERNELS_HPP_
#define SBO_KERNELS_HPP_

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "sbo/errors.hpp"

namespace sbo {

using OptionPoint = Eigen::VectorXd;

enum class KernelKind { kLinear, kRbf, kMatern };

inline std::string to_string(KernelKind k) {
  switch (k) {
    case KernelKind::kLinear: return "linear";
    case KernelKind::kRbf: return "rbf";
    case KernelKind::kMatern: return "matern";
  }
  return "unknown";
}

inline KernelKind kernel_kind_from_string(const std::string& s) {
  if (s == "linear") return KernelKind::kLinear;
  if (s == "rbf") return KernelKind::kRbf;
  if (s == "matern") return KernelKind::kMatern;
  throw ArgumentError("unknown kernel kind '" + s + "'");
}

/// Stationary or linear covariance function on R^d.
///
/// `lengthscale` holds either one shared value or one value per input
/// dimension. Only the closed-form Matern smoothness values 1.5 and 2.5 are
/// supported. The variance scale may not exceed 1 so that k(x,x) <= 1.
struct KernelSpec {
  KernelKind kind = KernelKind::kRbf;
  Eigen::VectorXd lengthscale = Eigen::VectorXd::Constant(1, 0.2);
  double nu = 2.5;
  double variance = 1.0;

  static KernelSpec Rbf(double ell) {
    KernelSpec s;
    s.kind = KernelKind::kRbf;
    s.lengthscale = Eigen::VectorXd::Constant(1, ell);
    return s;
  }
  static KernelSpec Matern(double ell, double nu) {
    KernelSpec s;
    s.kind = KernelKind::kMatern;
    s.lengthscale = Eigen::VectorXd::Constant(1, ell);
    s.nu = nu;
    return s;
  }
  static KernelSpec Linear() {
    KernelSpec s;
    s.kind = KernelKind::kLinear;
    return s;
  }

  void validate() const {
    if (lengthscale.size() == 0) throw ArgumentError("kernel lengthscale is empty");
    for (Eigen::Index i = 0; i < lengthscale.size(); ++i) {
      if (!(lengthscale[i] > 0.0) || !std::isfinite(lengthscale[i]))
        throw ArgumentError("kernel lengthscale must be positive");
    }
    if (!(variance > 0.0)) throw ArgumentError("kernel variance must be positive");
    if (variance > 1.0) throw ArgumentError("kernel variance above 1 breaks k(x,x) <= 1");
    if (kind == KernelKind::kMatern && nu != 1.5 && nu != 2.5)
      throw ArgumentError("matern smoothness must be 1.5 or 2.5");
  }

  bool operator==(const KernelSpec& o) const {
    return kind == o.kind && lengthscale == o.lengthscale && nu == o.nu && variance == o.variance;
  }
};

namespace detail {

inline double scaled_sq_distance(const KernelSpec& spec, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& y) {
  const bool shared = spec.lengthscale.size() == 1;
  if (!shared && spec.lengthscale.size() != x.size())
    throw ArgumentError("lengthscale dimension does not match point dimension");
  double r2 = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double ell = shared ? spec.lengthscale[0] : spec.lengthscale[k];
    const double d = (x[k] - y[k]) / ell;
    r2 += d * d;
  }
  return r2;
}

}  // namespace detail

inline double kernel_eval(const KernelSpec& spec, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& y) {
  if (x.size() != y.size()) throw ArgumentError("kernel_eval: dimension mismatch");
  switch (spec.kind) {
    case KernelKind::kLinear:
      return spec.variance * x.dot(y);
    case KernelKind::kRbf:
      return spec.variance * std::exp(-0.5 * detail::scaled_sq_distance(spec, x, y));
    case KernelKind::kMatern: {
      const double r = std::sqrt(detail::scaled_sq_distance(spec, x, y));
      if (spec.nu == 1.5) {
        const double a = std::sqrt(3.0) * r;
        return spec.variance * (1.0 + a) * std::exp(-a);
      }
      if (spec.nu == 2.5) {
        const double a = std::sqrt(5.0) * r;
        return spec.variance * (1.0 + a + a * a / 3.0) * std::exp(-a);
      }
      throw ArgumentError("matern smoothness must be 1.5 or 2.5");
    }
  }
  throw ArgumentError("unknown kernel kind");
}

// k(x, y) + k(x', y') for the pairs (x, x') and (y, y').
inline double dueling_kernel_eval(const KernelSpec& spec, const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& xp, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& yp) {
  if (x.size() != xp.size() || y.size() != yp.size())
    throw ArgumentError("dueling_kernel_eval: dimension mismatch");
  return kernel_eval(spec, x, y) + kernel_eval(spec, xp, yp);
}

struct GramMatrix {
  Eigen::MatrixXd K;
};

inline GramMatrix gram(const KernelSpec& spec, std::span<const Eigen::VectorXd> points) {
  if (points.empty()) throw ArgumentError("gram: empty point list");
  const auto m = static_cast<Eigen::Index>(points.size());
  GramMatrix g{Eigen::MatrixXd(m, m)};
  for (Eigen::Index i = 0; i < m; ++i) {
    g.K(i, i) = kernel_eval(spec, points[i], points[i]);
    for (Eigen::Index j = 0; j < i; ++j) {
      const double k = kernel_eval(spec, points[i], points[j]);
      g.K(i, j) = k;
      g.K(j, i) = k;
    }
  }
  return g;
}

// Cross-covariance between two point lists.
inline Eigen::MatrixXd cross_gram(const KernelSpec& spec, std::span<const Eigen::VectorXd> a,
                                  std::span<const Eigen::VectorXd> b) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = kernel_eval(spec, a[i], b[j]);
  return out;
}

struct StableInverse {
  Eigen::MatrixXd inverse;
  double jitter = 0.0;
};

/// (K + jitter I)^{-1} with the jitter raised by 10x from 1e-6 to 1e-2 until
/// the Cholesky factorization succeeds.
inline StableInverse stable_inverse(const Eigen::MatrixXd& K) {
  if (K.rows() != K.cols()) throw ArgumentError("stable_inverse: matrix is not square");
  const Eigen::Index m = K.rows();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(m, m);
  for (double jitter = 1e-6; jitter <= 1e-2 * (1.0 + 1e-9); jitter *= 10.0) {
    Eigen::LLT<Eigen::MatrixXd> llt(K + jitter * eye);
    if (llt.info() == Eigen::Success) {
      StableInverse out{llt.solve(eye), jitter};
      // Cholesky can "succeed" on a numerically indefinite matrix; reject
      // inverses with a non-finite entry.
      if (out.inverse.allFinite()) return out;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  const double lo = std::abs(ev.minCoeff());
  const double cond = lo > 0.0 ? std::abs(ev.maxCoeff()) / lo : std::numeric_limits<double>::infinity();
  throw NumericError("stable_inverse: factorization failed at maximum jitter", cond);
}

/// Lower Cholesky factor of K + jitter I on the same jitter ladder.
struct StableCholesky {
  Eigen::MatrixXd L;
  double jitter = 0.0;
};

inline StableCholesky stable_cholesky(const Eigen::MatrixXd& K) {
  if (K.rows() != K.cols()) throw ArgumentError("stable_cholesky: matrix is not square");
  const Eigen::Index m = K.rows();
  for (double jitter = 1e-6; jitter <= 1e-2 * (1.0 + 1e-9); jitter *= 10.0) {
    Eigen::LLT<Eigen::MatrixXd> llt(K + jitter * Eigen::MatrixXd::Identity(m, m));
    if (llt.info() == Eigen::Success) {
      StableCholesky out{llt.matrixL(), jitter};
      if (out.L.allFinite() && out.L.diagonal().minCoeff() > 0.0) return out;
    }
  }
  throw NumericError("stable_cholesky: factorization failed at maximum jitter",
                     std::numeric_limits<double>::infinity());
}

}  // namespace sbo

#endif  // SBO_KERNELS_HPP_
