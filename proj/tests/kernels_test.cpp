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


#include "sbo/kernels.hpp"

#include <random>
#include <vector>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

namespace sbo {
namespace {

Eigen::VectorXd V(std::initializer_list<double> v) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double a : v) x[i++] = a;
  return x;
}

TEST(KernelEval, RbfIdentity) { EXPECT_DOUBLE_EQ(kernel_eval(KernelSpec::Rbf(1.0), V({0.3, 0.1}), V({0.3, 0.1})), 1.0); }

TEST(KernelEval, RbfUnitDistance) {
  EXPECT_NEAR(kernel_eval(KernelSpec::Rbf(1.0), V({0.0, 0.0}), V({0.6, 0.8})), 0.60653, 1e-5);
}

TEST(KernelEval, LinearInnerProduct) {
  EXPECT_DOUBLE_EQ(kernel_eval(KernelSpec::Linear(), V({1, 2}), V({3, 4})), 11.0);
}

TEST(KernelEval, DimensionMismatchThrows) {
  EXPECT_THROW(kernel_eval(KernelSpec::Rbf(1.0), V({1, 2}), V({1})), ArgumentError);
}

TEST(KernelEval, MaternClosedForms) {
  const auto x = V({0.0}), y = V({0.5});
  const double r = 0.5 / 0.4;
  EXPECT_NEAR(kernel_eval(KernelSpec::Matern(0.4, 1.5), x, y), (1 + std::sqrt(3.0) * r) * std::exp(-std::sqrt(3.0) * r), 1e-14);
  EXPECT_NEAR(kernel_eval(KernelSpec::Matern(0.4, 2.5), x, y),
              (1 + std::sqrt(5.0) * r + 5.0 * r * r / 3.0) * std::exp(-std::sqrt(5.0) * r), 1e-14);
  EXPECT_DOUBLE_EQ(kernel_eval(KernelSpec::Matern(0.4, 2.5), x, x), 1.0);
}

TEST(KernelSpec, ValidateRejects) {
  EXPECT_THROW(KernelSpec::Matern(0.2, 0.5).validate(), ArgumentError);
  KernelSpec s = KernelSpec::Rbf(0.2);
  s.variance = 2.0;
  EXPECT_THROW(s.validate(), ArgumentError);
  EXPECT_THROW(KernelSpec::Rbf(-1.0).validate(), ArgumentError);
  EXPECT_NO_THROW(KernelSpec::Rbf(0.2).validate());
  EXPECT_EQ(kernel_kind_from_string("matern"), KernelKind::kMatern);
  EXPECT_THROW(kernel_kind_from_string("poly"), ArgumentError);
}

TEST(KernelSpec, PerDimensionLengthscale) {
  KernelSpec s = KernelSpec::Rbf(1.0);
  s.lengthscale = V({1.0, 2.0});
  EXPECT_NEAR(kernel_eval(s, V({0, 0}), V({1, 2})), std::exp(-1.0), 1e-15);
  EXPECT_THROW(kernel_eval(s, V({0, 0, 0}), V({1, 2, 3})), ArgumentError);
}

TEST(DuelingKernel, IdenticalPairsRbf) {
  const auto s = KernelSpec::Rbf(0.3);
  EXPECT_DOUBLE_EQ(dueling_kernel_eval(s, V({0.1}), V({0.7}), V({0.1}), V({0.7})), 2.0);
}

TEST(DuelingKernel, OrthogonalLinear) {
  EXPECT_DOUBLE_EQ(dueling_kernel_eval(KernelSpec::Linear(), V({1, 0}), V({0, 1}), V({0, 1}), V({1, 0})), 0.0);
}

TEST(DuelingKernel, SymmetricAndSumOfParts) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& s : {KernelSpec::Rbf(0.2), KernelSpec::Matern(0.3, 1.5), KernelSpec::Linear()}) {
    for (int k = 0; k < 1000; ++k) {
      const Eigen::VectorXd x = V({u(rng), u(rng)}), xp = V({u(rng), u(rng)});
      const Eigen::VectorXd y = V({u(rng), u(rng)}), yp = V({u(rng), u(rng)});
      const double d = dueling_kernel_eval(s, x, xp, y, yp);
      EXPECT_EQ(d, kernel_eval(s, x, y) + kernel_eval(s, xp, yp));
      EXPECT_EQ(d, dueling_kernel_eval(s, y, yp, x, xp));
    }
  }
}

TEST(KernelEval, SymmetryAndBounds) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (const auto& s : {KernelSpec::Rbf(0.2), KernelSpec::Rbf(3.0), KernelSpec::Matern(0.5, 1.5), KernelSpec::Matern(0.5, 2.5)}) {
    for (int k = 0; k < 1000; ++k) {
      const Eigen::VectorXd x = V({u(rng), u(rng), u(rng)}), y = V({u(rng), u(rng), u(rng)});
      const double a = kernel_eval(s, x, y);
      EXPECT_EQ(a, kernel_eval(s, y, x));
      EXPECT_GT(a, 0.0);
      EXPECT_LE(a, 1.0);
    }
  }
}

TEST(Gram, SinglePoint) {
  const std::vector<Eigen::VectorXd> pts{V({0.4})};
  const auto g = gram(KernelSpec::Rbf(0.2), pts);
  ASSERT_EQ(g.K.rows(), 1);
  EXPECT_DOUBLE_EQ(g.K(0, 0), 1.0);
}

TEST(Gram, DuplicatePointsRankOne) {
  const std::vector<Eigen::VectorXd> pts{V({0.4}), V({0.4})};
  const auto g = gram(KernelSpec::Rbf(0.2), pts);
  EXPECT_TRUE(g.K.isApprox(Eigen::MatrixXd::Ones(2, 2)));
}

TEST(Gram, EmptyThrows) {
  const std::vector<Eigen::VectorXd> pts;
  EXPECT_THROW(gram(KernelSpec::Rbf(0.2), pts), ArgumentError);
}

TEST(Gram, RandomPointsPsdAndSymmetric) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<Eigen::VectorXd> pts;
    for (int k = 0; k < 3 + rep % 10; ++k) pts.push_back(V({u(rng), u(rng)}));
    const auto g = gram(KernelSpec::Matern(0.3, 2.5), pts);
    EXPECT_LE((g.K - g.K.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.K);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8);
  }
}

TEST(StableInverse, Identity) {
  const auto r = stable_inverse(Eigen::MatrixXd::Identity(4, 4));
  EXPECT_LE((r.inverse - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(StableInverse, SingularNeedsJitter) {
  const Eigen::MatrixXd K = Eigen::MatrixXd::Ones(2, 2);
  const auto r = stable_inverse(K);
  EXPECT_GT(r.jitter, 0.0);
  const Eigen::MatrixXd res = (K + r.jitter * Eigen::MatrixXd::Identity(2, 2)) * r.inverse - Eigen::MatrixXd::Identity(2, 2);
  EXPECT_LE(res.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(StableInverse, Diagonal) {
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(2, 2);
  K(0, 0) = 2.0;
  K(1, 1) = 4.0;
  const auto r = stable_inverse(K);
  EXPECT_NEAR(r.inverse(0, 0), 0.5, 1e-5);
  EXPECT_NEAR(r.inverse(1, 1), 0.25, 1e-5);
  EXPECT_NEAR(r.inverse(0, 1), 0.0, 1e-12);
}

TEST(StableInverse, FailureCarriesCondition) {
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(2, 2);
  K(0, 0) = 1.0;
  K(1, 1) = -1.0;
  try {
    stable_inverse(K);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NEAR(e.condition_estimate(), 1.0, 1e-12);
  }
  EXPECT_THROW(stable_inverse(Eigen::MatrixXd::Ones(2, 3)), ArgumentError);
}

TEST(StableInverse, ResidualOnWellConditioned) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<Eigen::VectorXd> pts;
    for (int k = 0; k < 8; ++k) pts.push_back(V({static_cast<double>(k) / 8.0 + 0.01 * u(rng)}));
    // Shifted so the smallest eigenvalue exceeds one.
    const Eigen::MatrixXd K = gram(KernelSpec::Rbf(0.05), pts).K + Eigen::MatrixXd::Identity(8, 8);
    const auto r = stable_inverse(K);
    EXPECT_LE((K * r.inverse - Eigen::MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-6);
  }
}

}  // namespace
}  // namespace sbo
