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


#include "sbo/session_service.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <set>

#include "sbo/sim_harness.hpp"

namespace sbo {
namespace {

namespace fs = std::filesystem;

Json FastConfig(std::uint64_t seed) {
  return {{"n", 2}, {"seed", seed}, {"acq_candidates", 16}, {"refine_best", 1}};
}

// Plays `rounds` rounds with toy1 voters through the service API.
void Play(ServiceSession& s, int rounds, std::mt19937_64& rng) {
  const auto task = toy1_task();
  for (int r = 0; r < rounds; ++r) {
    const int start = s.core().round();
    while (s.core().round() == start) {
      const Json pair = s.next_pair();
      const OptionPoint x = detail::json_vec(pair["x"]);
      const OptionPoint xp = detail::json_vec(pair["x_prev"]);
      const Channel ch = s.core().awaiting_private() ? Channel::kPrivate : Channel::kPublic;
      const auto bits = oracle_vote(task, x, xp, ch, rng).outcomes;
      for (int a = 1; a >= 0; --a) s.submit_vote(a, ch, bits[static_cast<std::size_t>(a)] ? "x" : "x_prev", {});
    }
  }
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("sbo_test_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

TEST(ConfigJson, RoundTrip) {
  SboConfig c = SboConfig::Defaults(3);
  c.rho = 0.5;
  c.q = 0.3;
  c.seed = 42;
  c.kernel.lengthscale = Eigen::VectorXd::Constant(1, 0.1);
  c.model = ModelKind::kOracle;
  c.known_graph = Eigen::MatrixXd::Constant(3, 3, 1.0 / 3.0);
  const Json j = config_to_json(c);
  EXPECT_EQ(config_to_json(config_from_json(j)), j);
  EXPECT_EQ(config_from_json(j).known_graph->rows(), 3);
}

TEST(ConfigJson, CollectsEveryFieldError) {
  try {
    config_from_json({{"n", 2}, {"rho", 0.0}, {"q", "half"}, {"colour", "blue"}});
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    std::set<std::string> names;
    for (const auto& [k, m] : e.fields()) names.insert(k);
    EXPECT_EQ(names, (std::set<std::string>{"rho", "q", "colour"}));
  }
  EXPECT_THROW(config_from_json(Json::object()), ValidationError);  // n missing
  EXPECT_THROW(config_from_json(Json::array()), ValidationError);
  EXPECT_THROW(config_from_json({{"n", 2}, {"model", "ensemble"}}), ValidationError);
}

TEST(ServiceSession, NextPairIsIdempotentWithinRound) {
  ServiceSession s("a", config_from_json(FastConfig(1)), {});
  const Json p1 = s.next_pair();
  const Json p2 = s.next_pair();
  EXPECT_EQ(p1, p2);
  EXPECT_EQ(p1["round"], 1);
  EXPECT_EQ(p1["awaiting"], "public");
  ASSERT_EQ(s.events().size(), 2u);
  EXPECT_EQ(s.events()[0].kind, "created");
  EXPECT_EQ(s.events()[1].kind, "pair_proposed");
}

TEST(ServiceSession, VoteErrors) {
  ServiceSession s("a", config_from_json(FastConfig(2)), {});
  EXPECT_THROW(s.submit_vote(0, Channel::kPublic, "x", {}), ProtocolError);  // no pair yet
  s.next_pair();
  EXPECT_THROW(s.submit_vote(2, Channel::kPublic, "x", {}), ArgumentError);
  EXPECT_THROW(s.submit_vote(0, Channel::kPublic, "left", {}), ArgumentError);
  EXPECT_THROW(s.submit_vote(0, Channel::kPrivate, "x", {}), ProtocolError);
  EXPECT_EQ(s.submit_vote(0, Channel::kPublic, "x", {})["accepted"], true);
  EXPECT_THROW(s.submit_vote(0, Channel::kPublic, "x_prev", {}), ConflictError);
  EXPECT_EQ(s.next_pair()["voted_agents"], Json::array({0}));
  EXPECT_THROW(s.estimate(), StateError);
  s.submit_vote(1, Channel::kPublic, "x", {});
  if (s.core().awaiting_private()) {
    EXPECT_THROW(s.submit_vote(0, Channel::kPublic, "x", {}), ProtocolError);
    s.submit_vote(0, Channel::kPrivate, "x", {});
    s.submit_vote(1, Channel::kPrivate, "x", {});
  }
  EXPECT_EQ(s.core().round(), 1);
  EXPECT_EQ(s.events().back().kind, "round_closed");
  const Json est = s.estimate();
  EXPECT_EQ(est["consensus"], detail::vec_json(s.core().consensus_estimate()));
  EXPECT_EQ(est["per_agent_map_utilities"].size(), 2u);
  EXPECT_TRUE(est.contains("w_u"));
  EXPECT_TRUE(est.contains("w_v"));
  EXPECT_TRUE(est.contains("private_query_count"));
}

TEST(ServiceSession, VoterTokens) {
  ServiceSession s("a", config_from_json(FastConfig(3)), {"t0", "t1"});
  s.next_pair();
  EXPECT_THROW(s.submit_vote(0, Channel::kPublic, "x", std::string("t1")), ProtocolError);
  EXPECT_THROW(s.submit_vote(0, Channel::kPublic, "x", std::nullopt), ProtocolError);
  EXPECT_NO_THROW(s.submit_vote(0, Channel::kPublic, "x", std::string("t0")));
  EXPECT_THROW(ServiceSession("b", config_from_json(FastConfig(3)), {"only-one"}), ArgumentError);
}

TEST(ServiceSession, ReplayReproducesState) {
  ServiceSession s("r", config_from_json(FastConfig(4)), {});
  std::mt19937_64 rng(4);
  Play(s, 6, rng);
  s.next_pair();
  s.submit_vote(1, Channel::kPublic, "x", {});  // leave a round half-open
  const auto copy = ServiceSession::replay(s.events());
  EXPECT_EQ(copy->snapshot(), s.snapshot());
  EXPECT_EQ(copy->trace(), s.trace());
}

TEST(ServiceSession, ReplayRejectsTamperedLog) {
  ServiceSession s("r", config_from_json(FastConfig(5)), {});
  std::mt19937_64 rng(5);
  Play(s, 2, rng);
  auto log = s.events();
  for (auto& e : log)
    if (e.kind == "pair_proposed") {
      e.payload["x"] = Json::array({0.123});
      break;
    }
  EXPECT_THROW(ServiceSession::replay(log), StateError);
  log = s.events();
  log.erase(log.begin() + 1);
  EXPECT_THROW(ServiceSession::replay(log), StateError);  // sequence gap
}

TEST(SessionManager, RestoresSessionsFromDisk) {
  TempDir dir;
  std::string id;
  Json before;
  {
    SessionManager mgr(dir.path());
    id = mgr.create(FastConfig(6)).id;
    std::mt19937_64 rng(6);
    mgr.with(id, [&](ServiceSession& s) { Play(s, 5, rng); });
    before = mgr.with(id, [](ServiceSession& s) { return s.snapshot(); });
  }
  SessionManager again(dir.path());
  ASSERT_EQ(again.ids(), std::vector<std::string>{id});
  EXPECT_EQ(again.with(id, [](ServiceSession& s) { return s.snapshot(); }), before);
  // Appends continue after restore.
  again.with(id, [](ServiceSession& s) { return s.next_pair(); });
  const auto log = SessionManager::read_log(again.log_path(id));
  EXPECT_EQ(log.size(), static_cast<std::size_t>(before["events"].get<int>()) + 1);
  EXPECT_EQ(log.back().kind, "pair_proposed");
}

TEST(SessionManager, DistinctIdsAndTokens) {
  SessionManager mgr({}, true);
  const auto a = mgr.create(FastConfig(7));
  const auto b = mgr.create(FastConfig(7));
  EXPECT_NE(a.id, b.id);
  EXPECT_EQ(a.id.size(), 32u);
  ASSERT_EQ(a.voter_tokens.size(), 2u);
  EXPECT_NE(a.voter_tokens[0], a.voter_tokens[1]);
  EXPECT_THROW(mgr.with("missing", [](ServiceSession& s) { return s.next_pair(); }), NotFoundError);
}

TEST(Route, StatusCodes) {
  SessionManager mgr;
  auto created = route(mgr, "POST", "/sessions", FastConfig(8).dump());
  ASSERT_EQ(created.status, 201);
  const std::string id = Json::parse(created.body)["id"];
  const std::string base = "/sessions/" + id;

  EXPECT_EQ(route(mgr, "POST", "/sessions", R"({"n": 2, "rho": 2})").status, 400);
  EXPECT_EQ(route(mgr, "POST", "/sessions", "{not json").status, 400);
  EXPECT_EQ(Json::parse(route(mgr, "POST", "/sessions", R"({"n": 0})").body)["fields"].contains("n"), true);
  EXPECT_EQ(route(mgr, "POST", "/sessions", "{}", "wrong", "secret").status, 401);
  EXPECT_EQ(route(mgr, "POST", "/sessions", FastConfig(8).dump(), "secret", "secret").status, 201);

  EXPECT_EQ(route(mgr, "GET", "/sessions/nope/next-pair", "").status, 404);
  EXPECT_EQ(route(mgr, "GET", base + "/estimate", "").status, 412);
  EXPECT_EQ(route(mgr, "POST", base + "/votes", R"({"agent": 0, "channel": "public", "winner": "x"})").status, 409);
  EXPECT_EQ(route(mgr, "GET", base + "/next-pair", "").status, 200);
  EXPECT_EQ(route(mgr, "POST", base + "/votes", R"({"agent": 0, "channel": "public", "winner": "x"})").status, 200);
  EXPECT_EQ(route(mgr, "POST", base + "/votes", R"({"agent": 0, "channel": "public", "winner": "x"})").status, 409);
  EXPECT_EQ(route(mgr, "POST", base + "/votes", R"({"agent": 1, "channel": "public"})").status, 400);
  EXPECT_EQ(route(mgr, "POST", base + "/votes", R"({"agent": 1, "channel": "aloud", "winner": "x"})").status, 400);
  EXPECT_EQ(route(mgr, "DELETE", base, "").status, 404);

  const auto trace = route(mgr, "GET", base + "/trace", "");
  EXPECT_EQ(trace.status, 200);
  EXPECT_EQ(trace.content_type, "text/csv");
}

}  // namespace
}  // namespace sbo
