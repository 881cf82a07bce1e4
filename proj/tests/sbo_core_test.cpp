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


#include "sbo/sbo_core.hpp"

#include <gtest/gtest.h>

#include "sbo/sim_harness.hpp"

namespace sbo {
namespace {

SboConfig FastConfig(const SyntheticTask& task, std::uint64_t seed) {
  SboConfig c = task_config(task, seed);
  c.acq_candidates = 16;
  c.refine_best = 1;
  c.refine_tol = 1e-2;
  return c;
}

TEST(NeedsPrivate, TruthTable) {
  EXPECT_FALSE(needs_private(0.3, 0.1, 4, 0.5));
  EXPECT_TRUE(needs_private(0.6, 0.1, 4, 0.5));
  EXPECT_TRUE(needs_private(0.7, 0.7, 4, 0.5));   // w_u == w_v
  EXPECT_TRUE(needs_private(0.5, 0.1, 4, 0.5));   // w_u == t^-q
  EXPECT_FALSE(needs_private(0.69, 0.7, 4, 0.5));
  EXPECT_FALSE(needs_private(0.0, 0.0, 1, 0.5));
  EXPECT_TRUE(needs_private(1.0, 0.0, 1, 0.5));
  EXPECT_THROW(needs_private(1.0, 0.0, 0, 0.5), ArgumentError);
}

TEST(SboConfig, ValidationReportsFields) {
  SboConfig c = SboConfig::Defaults(2);
  c.rho = 0.0;
  c.q = 1.0;
  try {
    c.validate();
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    ASSERT_EQ(e.fields().size(), 2u);
    EXPECT_EQ(e.fields()[0].first, "rho");
    EXPECT_EQ(e.fields()[1].first, "q");
  }
  c = SboConfig::Defaults(2);
  c.model = ModelKind::kOracle;
  EXPECT_THROW(c.validate(), ValidationError);
  c.known_graph = Eigen::MatrixXd::Constant(2, 2, 0.5);
  EXPECT_NO_THROW(c.validate());
  c.upper[0] = -1.0;
  EXPECT_THROW(c.validate(), ValidationError);
  EXPECT_THROW(Session{c}, ValidationError);
}

TEST(Session, FirstProposalDiffersFromStart) {
  const auto task = toy1_task();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Session s(FastConfig(task, seed));
    EXPECT_EQ(s.round(), 0);
    const OptionPoint x0 = s.previous();
    EXPECT_GE(x0[0], 0.0);
    EXPECT_LE(x0[0], 1.0);
    const OptionPoint x1 = s.propose_next();
    EXPECT_NE(x1[0], x0[0]);
    EXPECT_EQ(s.propose_next(), x1);  // cached within the round
    EXPECT_THROW(s.consensus_estimate(), StateError);
  }
}

TEST(Session, ProtocolErrors) {
  const auto task = toy1_task();
  Session s(FastConfig(task, 4));
  const OptionPoint x0 = s.previous();
  EXPECT_THROW(s.ingest_vote({1, x0, x0, Channel::kPublic, {1, 1}}), ProtocolError);  // nothing proposed
  const OptionPoint x = s.propose_next();
  EXPECT_THROW(s.ingest_vote({2, x, x0, Channel::kPublic, {1, 1}}), ProtocolError);   // wrong round
  EXPECT_THROW(s.ingest_vote({1, x0, x, Channel::kPublic, {1, 1}}), ProtocolError);   // swapped pair
  EXPECT_THROW(s.ingest_vote({1, x, x0, Channel::kPrivate, {1, 1}}), ProtocolError);  // private first
  EXPECT_THROW(s.ingest_vote({1, x, x0, Channel::kPublic, {1}}), ArgumentError);
  s.ingest_vote({1, x, x0, Channel::kPublic, {1, 0}});
  EXPECT_EQ(s.data().public_votes().size(), 1u);
  if (s.awaiting_private()) {
    EXPECT_THROW(s.ingest_vote({1, x, x0, Channel::kPublic, {1, 0}}), ProtocolError);
    s.ingest_vote({1, x, x0, Channel::kPrivate, {1, 0}});
  } else {
    EXPECT_THROW(s.ingest_vote({1, x, x0, Channel::kPrivate, {1, 0}}), ProtocolError);
  }
  EXPECT_EQ(s.round(), 1);
}

TEST(Session, PrivateVoteWithoutRequestRejected) {
  // The oracle model never asks privately.
  const auto task = toy1_task();
  SboConfig c = FastConfig(task, 5);
  c.model = ModelKind::kOracle;
  Session s(c);
  const OptionPoint x = s.propose_next(), xp = s.previous();
  s.ingest_vote({1, x, xp, Channel::kPublic, {1, 1}});
  EXPECT_EQ(s.round(), 1);
  const OptionPoint x2 = s.propose_next();
  s.ingest_vote({2, x2, x, Channel::kPublic, {0, 1}});
  EXPECT_THROW(s.ingest_vote({2, x2, x, Channel::kPrivate, {0, 1}}), ProtocolError);
}

TEST(Session, TenRoundsInvariants) {
  const auto task = toy1_task();
  const Session s = run_session(ModelKind::kCoupled, FastConfig(task, 6), simulated_voters(task, voter_seed(6)), 10);
  ASSERT_EQ(s.trace().size(), 10u);
  EXPECT_EQ(s.data().public_votes().size(), 10u);
  EXPECT_LE(s.private_count(), 10);
  const auto& recs = s.data().records();
  for (std::size_t k = 0; k < s.trace().size(); ++k) {
    const auto& row = s.trace()[k];
    EXPECT_EQ(row.t, static_cast<int>(k) + 1);
    EXPECT_LE(row.qu_count, row.t);
    EXPECT_GE(row.w_u, 0.0);
    EXPECT_GE(row.w_v, 0.0);
    EXPECT_NEAR(row.threshold, std::pow(row.t, -0.5), 1e-15);
    // Private only when the stopping rule fired.
    EXPECT_EQ(row.private_queried, needs_private(row.w_u, row.w_v, row.t, 0.5));
  }
  // Pair chaining: x' of round t is x of round t-1.
  OptionPoint prev = s.queried().front();
  for (const auto& r : recs) {
    if (r.channel == Channel::kPrivate) continue;
    EXPECT_EQ(r.xp, prev);
    prev = r.x;
  }
  const OptionPoint c = s.consensus_estimate();
  EXPECT_NE(std::find(s.queried().begin(), s.queried().end(), c), s.queried().end());
}

TEST(Session, DeterministicPerSeed) {
  const auto task = toy1_task();
  auto run = [&](std::uint64_t seed) {
    return trace_csv(run_baseline(ModelKind::kCoupled, FastConfig(task, seed), simulated_voters(task, 99), 6));
  };
  EXPECT_EQ(run(7), run(7));
  EXPECT_NE(run(7), run(8));
}

TEST(Session, ConsensusAfterOneRound) {
  const auto task = toy1_task();
  Session s(FastConfig(task, 9));
  const OptionPoint x0 = s.previous();
  const OptionPoint x1 = s.propose_next();
  s.ingest_vote({1, x1, x0, Channel::kPublic, {1, 1}});
  if (s.awaiting_private()) s.ingest_vote({1, x1, x0, Channel::kPrivate, {1, 1}});
  const auto agg = s.queried_aggregates();
  ASSERT_EQ(agg.size(), 2u);
  EXPECT_EQ(s.consensus_estimate(), agg[1] > agg[0] + 1e-6 ? x1 : x0);
  EXPECT_EQ(s.consensus_estimate(), x1);  // both agents preferred x1
}

TEST(Session, SymmetricVotesPickEarliestPoint) {
  // One shared utility and two agents who always disagree: the MAP is flat.
  const auto task = toy1_task();
  SboConfig c = FastConfig(task, 10);
  c.model = ModelKind::kSingleAgent;
  c.loocv_every = 0;
  auto votes = [](const OptionPoint&, const OptionPoint&, Channel, int) { return std::vector<int>{1, 0}; };
  const Session s = run_session(ModelKind::kSingleAgent, c, votes, 4);
  EXPECT_EQ(s.private_count(), 0);
  EXPECT_EQ(s.consensus_estimate(), s.queried().front());
}

TEST(RunBaseline, OracleAndSingleNeverAskPrivately) {
  const auto task = toy1_task();
  for (auto kind : {ModelKind::kOracle, ModelKind::kSingleAgent}) {
    const auto tr = run_baseline(kind, FastConfig(task, 11), simulated_voters(task, 5), 6);
    ASSERT_EQ(tr.size(), 6u);
    EXPECT_EQ(tr.back().qu_count, 0) << to_string(kind);
  }
  EXPECT_THROW(model_kind_from_string("ensemble"), ArgumentError);
  EXPECT_THROW(run_baseline(ModelKind::kCoupled, FastConfig(task, 1), simulated_voters(task, 1), -1), ArgumentError);
}

TEST(RunBaseline, ForcedPrivateAsksEveryRound) {
  const auto task = toy1_task();
  SboConfig c = FastConfig(task, 12);
  c.force_private = true;
  const auto tr = run_baseline(ModelKind::kCoupled, c, simulated_voters(task, 12), 5);
  for (const auto& r : tr) EXPECT_TRUE(r.private_queried);
  EXPECT_EQ(tr.back().qu_count, 5);
}

TEST(TraceCsv, HeaderAndColumns) {
  TraceRow r;
  r.t = 3;
  r.x = OptionPoint::Constant(2, 0.25);
  r.acq = 1.5;
  r.private_queried = true;
  r.qu_count = 2;
  const std::string csv = trace_csv({r});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,x,acq,w_u,w_v,threshold,private,regret,cum_regret,simple_regret,qu_count");
  EXPECT_EQ(csv.substr(csv.find('\n') + 1), "3,0.25;0.25,1.5,0,0,0,1,,,,2\n");
}

}  // namespace
}  // namespace sbo
