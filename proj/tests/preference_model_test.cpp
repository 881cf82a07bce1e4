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


#include "sbo/preference_model.hpp"

#include <random>

#include <gtest/gtest.h>

namespace sbo {
namespace {

OptionPoint P(double a) { return OptionPoint::Constant(1, a); }

struct Instance {
  UtilityValues values;
  std::vector<VoteRecord> votes;
};

Instance random_instance(std::mt19937_64& rng, int n, int m, int nv, Channel ch = Channel::kPublic) {
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  Instance in;
  for (int j = 0; j < m; ++j) in.values.points.push_back(P(0.1 * j));
  in.values.values.resize(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) in.values.values(i, j) = u(rng);
  std::uniform_int_distribution<int> pick(0, m - 1);
  for (int t = 0; t < nv; ++t) {
    int a = pick(rng), b = pick(rng);
    while (b == a) b = pick(rng);
    VoteRecord v{t + 1, in.values.points[a], in.values.points[b], ch, {}};
    for (int i = 0; i < n; ++i) v.outcomes.push_back(static_cast<int>(rng() & 1u));
    in.votes.push_back(v);
  }
  return in;
}

// log of the product of per-vote Bernoulli probabilities.
double direct_loglik(const Instance& in) {
  double prod = 1.0, logsum = 0.0;
  for (const auto& v : in.votes) {
    const int a = in.values.column_of(v.x), b = in.values.column_of(v.xp);
    for (Eigen::Index i = 0; i < in.values.values.rows(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(-(in.values.values(i, a) - in.values.values(i, b))));
      prod *= v.outcomes[static_cast<std::size_t>(i)] ? p : 1.0 - p;
      if (prod < 1e-200) {
        logsum += std::log(prod);
        prod = 1.0;
      }
    }
  }
  return logsum + std::log(prod);
}

TEST(BtProb, Examples) {
  EXPECT_DOUBLE_EQ(bt_prob(0.0), 0.5);
  EXPECT_NEAR(bt_prob(1.0), 0.73106, 1e-5);
  for (double z : {-30.0, -3.0, -0.1, 0.4, 2.0, 35.0}) EXPECT_NEAR(bt_prob(-z), 1.0 - bt_prob(z), 1e-15);
  EXPECT_GT(bt_prob(800.0), 0.0);
  EXPECT_GT(bt_prob(-800.0), -1e-300);
}

TEST(DatasetLoglik, Examples) {
  UtilityValues u{{P(0.1), P(0.2)}, Eigen::MatrixXd::Zero(1, 2), 1.5};
  EXPECT_EQ(dataset_loglik(u, {}), 0.0);
  const VoteRecord v{1, P(0.1), P(0.2), Channel::kPrivate, {1}};
  EXPECT_NEAR(dataset_loglik(u, {v}), -0.69315, 1e-5);
  u.values(0, 0) = 1.0;
  EXPECT_NEAR(dataset_loglik(u, {v}), -0.31326, 1e-5);
}

TEST(DatasetLoglik, MissingPointIsStateError) {
  UtilityValues u{{P(0.1), P(0.2)}, Eigen::MatrixXd::Zero(1, 2), 1.5};
  EXPECT_THROW(dataset_loglik(u, {VoteRecord{1, P(0.1), P(0.3), Channel::kPublic, {1}}}), StateError);
  EXPECT_THROW(dataset_loglik(u, {VoteRecord{1, P(0.1), P(0.2), Channel::kPublic, {1, 0}}}), ArgumentError);
}

TEST(DatasetLoglik, MatchesBernoulliProduct) {
  std::mt19937_64 rng(17);
  for (int k = 0; k < 200; ++k) {
    const auto in = random_instance(rng, 1 + k % 4, 3 + k % 5, 1 + k % 7);
    EXPECT_NEAR(dataset_loglik(in.values, in.votes), direct_loglik(in), 1e-9);
  }
}

TEST(DatasetLoglik, NonPositiveAndTranslationInvariant) {
  std::mt19937_64 rng(19);
  for (int k = 0; k < 200; ++k) {
    auto in = random_instance(rng, 3, 6, 10);
    const double l = dataset_loglik(in.values, in.votes);
    EXPECT_LE(l, 0.0);
    in.values.values.row(k % 3).array() += 0.77;
    EXPECT_NEAR(dataset_loglik(in.values, in.votes), l, 1e-10);
  }
}

TEST(DatasetLoglik, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(23);
  const double h = 1e-5;
  for (int k = 0; k < 50; ++k) {
    auto in = random_instance(rng, 2, 5, 8);
    const Eigen::MatrixXd g = dataset_loglik_gradient(in.values, in.votes);
    for (Eigen::Index i = 0; i < 2; ++i)
      for (Eigen::Index j = 0; j < 5; ++j) {
        auto up = in.values, dn = in.values;
        up.values(i, j) += h;
        dn.values(i, j) -= h;
        const double fd = (dataset_loglik(up, in.votes) - dataset_loglik(dn, in.votes)) / (2 * h);
        EXPECT_LE(std::abs(fd - g(i, j)), 1e-4 * std::max(1.0, std::abs(g(i, j))));
      }
  }
}

TEST(DatasetLoglik, ConcaveAlongSegments) {
  std::mt19937_64 rng(29);
  std::normal_distribution<double> z;
  for (int k = 0; k < 200; ++k) {
    auto in = random_instance(rng, 2, 5, 8);
    Eigen::MatrixXd dir(2, 5);
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir(i) = z(rng);
    auto at = [&](double s) {
      auto w = in.values;
      w.values += s * dir;
      return dataset_loglik(w, in.votes);
    };
    const double s = 0.3;
    EXPECT_LE(at(s) - 2 * at(0.0) + at(-s), 1e-9);
  }
}

TEST(JointLogPosterior, NoVotesFlatPriorIsZero) {
  UtilityValues u{{P(0.1)}, Eigen::MatrixXd::Zero(2, 1), 1.5};
  Eigen::MatrixXd A(2, 2);
  A << 0.9, 0.1, 0.6, 0.4;
  const SocialGraph g(A, GraphPrior{0.01, 0.0, 1.0});
  EXPECT_EQ(joint_log_posterior(u, g, u, {}, {}), 0.0);
}

TEST(JointLogPosterior, DecomposesAndMatchesProbabilityProduct) {
  std::mt19937_64 rng(31);
  Eigen::MatrixXd A(2, 2);
  A << 0.7, 0.3, 0.2, 0.8;
  const SocialGraph g(A, GraphPrior::Defaults(2));
  for (int k = 0; k < 50; ++k) {
    const auto pu = random_instance(rng, 2, 4, 1, Channel::kPrivate);
    auto pv = random_instance(rng, 2, 4, 1, Channel::kPublic);
    const double j = joint_log_posterior(pu.values, g, pv.values, pu.votes, pv.votes);
    const double parts = dataset_loglik(pu.values, pu.votes) + dataset_loglik(pv.values, pv.votes) + log_prior(g);
    EXPECT_NEAR(j, parts, 1e-12);
    const double prob = std::exp(direct_loglik(pu)) * std::exp(direct_loglik(pv)) * std::exp(log_prior(g));
    EXPECT_NEAR(std::exp(j), prob, 1e-9);
  }
  const auto pu = random_instance(rng, 2, 4, 2, Channel::kPublic);
  EXPECT_THROW(joint_log_posterior(pu.values, g, pu.values, pu.votes, {}), ArgumentError);
}

TEST(ChannelNames, RoundTrip) {
  EXPECT_EQ(channel_from_string(to_string(Channel::kPrivate)), Channel::kPrivate);
  EXPECT_EQ(channel_from_string("public"), Channel::kPublic);
  EXPECT_THROW(channel_from_string("secret"), ArgumentError);
}

}  // namespace
}  // namespace sbo
