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


#ifndef SBO_AGGREGATION_HPP_
#define SBO_AGGREGATION_HPP_

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sbo/errors.hpp"

namespace sbo {

/// Generalized Gini social-evaluation welfare function.
///
/// Utilities are sorted ascending and dotted with geometric weights
/// w_i = rho^(i-1) / sum_j rho^(j-1). rho = 1 is the utilitarian mean; the
/// egalitarian minimum is approached with a tiny rho such as 1e-10.
class GsfRule {
 public:
  GsfRule(double rho, int n) : rho_(rho), weights_(Weights(rho, n)) {}

  static Eigen::VectorXd Weights(double rho, int n) {
    if (!(rho > 0.0) || rho > 1.0) throw ArgumentError("gsf rho must lie in (0, 1]");
    if (n < 1) throw ArgumentError("gsf agent count must be at least 1");
    Eigen::VectorXd w(n);
    double p = 1.0;
    for (int i = 0; i < n; ++i) {
      w[i] = p;
      p *= rho;
    }
    return w / w.sum();
  }

  double rho() const { return rho_; }
  int n() const { return static_cast<int>(weights_.size()); }
  const Eigen::VectorXd& weights() const { return weights_; }

  // Ascending order of u; ties keep agent-index order.
  std::vector<int> sort_order(const Eigen::VectorXd& u) const {
    check(u);
    std::vector<int> idx(static_cast<std::size_t>(u.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return u[a] < u[b]; });
    return idx;
  }

  // Per-agent coefficients of the linear form w^T sort(u) for a frozen order.
  Eigen::VectorXd coefficients(const std::vector<int>& order) const {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(n());
    for (std::size_t k = 0; k < order.size(); ++k) c[order[k]] = weights_[static_cast<Eigen::Index>(k)];
    return c;
  }

  double operator()(const Eigen::VectorXd& u) const {
    const auto order = sort_order(u);
    double s = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) s += weights_[static_cast<Eigen::Index>(k)] * u[order[k]];
    return s;
  }

 private:
  void check(const Eigen::VectorXd& u) const {
    if (u.size() != weights_.size()) throw ArgumentError("aggregate: utility vector length mismatch");
  }

  double rho_;
  Eigen::VectorXd weights_;
};

inline Eigen::VectorXd gsf_weights(double rho, int n) { return GsfRule::Weights(rho, n); }

inline double aggregate(const GsfRule& rule, const Eigen::VectorXd& u) { return rule(u); }

enum class ReferenceRule { kUtilitarian, kEgalitarian, kChebyshev };

// Closed-form aggregation rules used as oracles for the GSF limits.
inline double reference_aggregate(ReferenceRule kind, const Eigen::VectorXd& u,
                                  const Eigen::VectorXd& chebyshev_weights = {}) {
  if (u.size() == 0) throw ArgumentError("reference_aggregate: empty utility vector");
  switch (kind) {
    case ReferenceRule::kUtilitarian:
      return u.mean();
    case ReferenceRule::kEgalitarian:
      return u.minCoeff();
    case ReferenceRule::kChebyshev: {
      if (chebyshev_weights.size() != u.size())
        throw ArgumentError("reference_aggregate: chebyshev weight length mismatch");
      if ((chebyshev_weights.array() <= 0.0).any())
        throw ArgumentError("reference_aggregate: chebyshev weights must be positive");
      return (u.array() / chebyshev_weights.array()).minCoeff();
    }
  }
  throw ArgumentError("unknown reference rule");
}

}  // namespace sbo

#endif  // SBO_AGGREGATION_HPP_
