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


#ifndef SBO_PREFERENCE_MODEL_HPP_
#define SBO_PREFERENCE_MODEL_HPP_

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sbo/errors.hpp"
#include "sbo/kernels.hpp"
#include "sbo/social_graph.hpp"

namespace sbo {

enum class Channel { kPublic, kPrivate };

inline std::string to_string(Channel c) { return c == Channel::kPublic ? "public" : "private"; }

inline Channel channel_from_string(const std::string& s) {
  if (s == "public") return Channel::kPublic;
  if (s == "private") return Channel::kPrivate;
  throw ArgumentError("unknown channel '" + s + "'");
}

/// One round's pairwise vote on one channel. outcomes[i] is 1 iff agent i
/// preferred x over xp.
struct VoteRecord {
  int t = 0;
  OptionPoint x;
  OptionPoint xp;
  Channel channel = Channel::kPublic;
  std::vector<int> outcomes;

  bool operator==(const VoteRecord&) const = default;
};

/// Candidate utility values of every agent at a list of points.
struct UtilityValues {
  std::vector<OptionPoint> points;
  Eigen::MatrixXd values;  // agents x points
  double norm_bound = 1.5;

  int column_of(const OptionPoint& x) const {
    for (std::size_t j = 0; j < points.size(); ++j)
      if (points[j].size() == x.size() && points[j] == x) return static_cast<int>(j);
    return -1;
  }
};

inline double bt_prob(double delta_u) {
  if (delta_u >= 0.0) return 1.0 / (1.0 + std::exp(-delta_u));
  const double e = std::exp(delta_u);
  return e / (1.0 + e);
}

// log sigma(d) without overflow.
inline double log_sigmoid(double d) {
  return d >= 0.0 ? -std::log1p(std::exp(-d)) : d - std::log1p(std::exp(d));
}

namespace detail {

struct VoteColumns {
  int x = -1;
  int xp = -1;
};

inline VoteColumns vote_columns(const UtilityValues& values, const VoteRecord& v) {
  VoteColumns c{values.column_of(v.x), values.column_of(v.xp)};
  if (c.x < 0 || c.xp < 0) throw StateError("dataset_loglik: no stored value for a voted point");
  if (static_cast<Eigen::Index>(v.outcomes.size()) != values.values.rows())
    throw ArgumentError("dataset_loglik: outcome count does not match agent count");
  return c;
}

}  // namespace detail

/// Bradley-Terry log-likelihood of one channel's votes, summed over agents.
///
/// Each term is u(w) - log(exp(u(w)) + exp(u(l))) = log sigma(u(w) - u(l)) for
/// winner w and loser l, evaluated in log-sum-exp stable form.
inline double dataset_loglik(const UtilityValues& values, const std::vector<VoteRecord>& votes) {
  double s = 0.0;
  for (const auto& v : votes) {
    const auto c = detail::vote_columns(values, v);
    for (Eigen::Index i = 0; i < values.values.rows(); ++i) {
      const double d = values.values(i, c.x) - values.values(i, c.xp);
      s += log_sigmoid(v.outcomes[static_cast<std::size_t>(i)] ? d : -d);
    }
  }
  return s;
}

// d loglik / d values, same shape as values.values.
inline Eigen::MatrixXd dataset_loglik_gradient(const UtilityValues& values,
                                               const std::vector<VoteRecord>& votes) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(values.values.rows(), values.values.cols());
  for (const auto& v : votes) {
    const auto c = detail::vote_columns(values, v);
    for (Eigen::Index i = 0; i < values.values.rows(); ++i) {
      const double d = values.values(i, c.x) - values.values(i, c.xp);
      const double sign = v.outcomes[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
      const double r = bt_prob(-sign * d);  // d/dd log sigma(sign d) = sign sigma(-sign d)
      g(i, c.x) += sign * r;
      g(i, c.xp) -= sign * r;
    }
  }
  return g;
}

/// Private log-likelihood of U, public log-likelihood of V and the graph
/// log prior. Uniform priors on U and V only add constants and are dropped.
inline double joint_log_posterior(const UtilityValues& U, const SocialGraph& g, const UtilityValues& V,
                                  const std::vector<VoteRecord>& private_votes,
                                  const std::vector<VoteRecord>& public_votes) {
  for (const auto& v : private_votes)
    if (v.channel != Channel::kPrivate) throw ArgumentError("joint_log_posterior: public vote in private set");
  for (const auto& v : public_votes)
    if (v.channel != Channel::kPublic) throw ArgumentError("joint_log_posterior: private vote in public set");
  return dataset_loglik(U, private_votes) + dataset_loglik(V, public_votes) + log_prior(g);
}

}  // namespace sbo

#endif  // SBO_PREFERENCE_MODEL_HPP_
