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


#ifndef SBO_SESSION_SERVICE_HPP_
#define SBO_SESSION_SERVICE_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "sbo/errors.hpp"
#include "sbo/sbo_core.hpp"

namespace sbo {

using Json = nlohmann::json;

namespace detail {

inline Json vec_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v[k]);
  return a;
}

inline Json mat_json(const Eigen::MatrixXd& m) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vec_json(m.row(r).transpose()));
  return a;
}

inline Eigen::VectorXd json_vec(const Json& j) {
  if (!j.is_array()) throw ArgumentError("expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_number()) throw ArgumentError("expected an array of numbers");
    v[static_cast<Eigen::Index>(k)] = j[k].get<double>();
  }
  return v;
}

inline Eigen::MatrixXd json_mat(const Json& j) {
  if (!j.is_array() || j.empty()) throw ArgumentError("expected a non-empty array of rows");
  const auto cols = j[0].size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Eigen::VectorXd row = json_vec(j[r]);
    if (static_cast<std::size_t>(row.size()) != cols) throw ArgumentError("ragged matrix rows");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

}  // namespace detail

/// Parses a session config. Unknown keys are rejected; every bad field is
/// collected into one ValidationError.
inline SboConfig config_from_json(const Json& j) {
  std::vector<std::pair<std::string, std::string>> bad;
  if (!j.is_object()) bad.emplace_back("config", "must be a JSON object");
  if (!bad.empty()) throw ValidationError(std::move(bad));
  int n = 1;
  if (j.contains("n")) {
    if (j["n"].is_number_integer()) n = j["n"].get<int>();
    else bad.emplace_back("n", "must be an integer");
  } else {
    bad.emplace_back("n", "required");
  }
  SboConfig c = SboConfig::Defaults(std::max(n, 1));
  c.n = n;
  auto field = [&](const char* key, auto&& apply) {
    if (!j.contains(key)) return;
    try {
      apply(j[key]);
    } catch (const std::exception& e) {
      bad.emplace_back(key, e.what());
    }
  };
  auto number = [](const Json& v) {
    if (!v.is_number()) throw ArgumentError("must be a number");
    return v.get<double>();
  };
  auto integer = [](const Json& v) {
    if (!v.is_number_integer()) throw ArgumentError("must be an integer");
    return v.get<int>();
  };
  static const char* kKnown[] = {"n", "lower", "upper", "rho", "q", "delta", "kernel", "lengthscale_grid",
                                 "norm_bound", "beta0", "beta_mode", "acq_candidates", "refine_best",
                                 "loocv_every", "loocv_folds", "adapt_norm", "model", "known_graph",
                                 "force_private", "seed", "delta_A"};
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : kKnown) ok = ok || key == k;
    if (!ok) bad.emplace_back(key, "unknown key");
  }
  field("lower", [&](const Json& v) { c.lower = detail::json_vec(v); });
  field("upper", [&](const Json& v) { c.upper = detail::json_vec(v); });
  field("rho", [&](const Json& v) { c.rho = number(v); });
  field("q", [&](const Json& v) { c.q = number(v); });
  field("delta", [&](const Json& v) { c.delta = number(v); });
  field("norm_bound", [&](const Json& v) { c.norm_bound = number(v); });
  field("beta0", [&](const Json& v) { c.beta.beta0 = number(v); });
  field("beta_mode", [&](const Json& v) { c.beta.mode = beta_mode_from_string(v.get<std::string>()); });
  field("acq_candidates", [&](const Json& v) { c.acq_candidates = integer(v); });
  field("refine_best", [&](const Json& v) { c.refine_best = integer(v); });
  field("loocv_every", [&](const Json& v) { c.loocv_every = integer(v); });
  field("loocv_folds", [&](const Json& v) { c.loocv_folds = integer(v); });
  field("adapt_norm", [&](const Json& v) { c.adapt_norm = v.get<bool>(); });
  field("force_private", [&](const Json& v) { c.force_private = v.get<bool>(); });
  field("seed", [&](const Json& v) { c.seed = v.get<std::uint64_t>(); });
  field("model", [&](const Json& v) { c.model = model_kind_from_string(v.get<std::string>()); });
  field("known_graph", [&](const Json& v) { c.known_graph = detail::json_mat(v); });
  field("delta_A", [&](const Json& v) { c.prior = GraphPrior::Defaults(std::max(n, 1), number(v)); });
  field("lengthscale_grid", [&](const Json& v) {
    c.lengthscale_grid.clear();
    for (const auto& e : v) c.lengthscale_grid.push_back(number(e));
  });
  field("kernel", [&](const Json& v) {
    if (!v.is_object()) throw ArgumentError("must be an object");
    if (v.contains("kind")) c.kernel.kind = kernel_kind_from_string(v["kind"].get<std::string>());
    if (v.contains("lengthscale")) {
      const Json& l = v["lengthscale"];
      c.kernel.lengthscale = l.is_array() ? detail::json_vec(l) : Eigen::VectorXd::Constant(1, number(l));
    }
    if (v.contains("nu")) c.kernel.nu = number(v["nu"]);
    if (v.contains("variance")) c.kernel.variance = number(v["variance"]);
  });
  try {
    c.validate();
  } catch (const ValidationError& e) {
    bad.insert(bad.end(), e.fields().begin(), e.fields().end());
  }
  if (!bad.empty()) throw ValidationError(std::move(bad));
  return c;
}

/// Canonical form of a config; config_from_json(config_to_json(c)) == c.
inline Json config_to_json(const SboConfig& c) {
  Json j;
  j["n"] = c.n;
  j["lower"] = detail::vec_json(c.lower);
  j["upper"] = detail::vec_json(c.upper);
  j["rho"] = c.rho;
  j["q"] = c.q;
  j["delta"] = c.delta;
  j["kernel"] = {{"kind", to_string(c.kernel.kind)},
                 {"lengthscale", detail::vec_json(c.kernel.lengthscale)},
                 {"nu", c.kernel.nu},
                 {"variance", c.kernel.variance}};
  j["lengthscale_grid"] = c.lengthscale_grid;
  j["norm_bound"] = c.norm_bound;
  j["beta0"] = c.beta.beta0;
  j["beta_mode"] = to_string(c.beta.mode);
  j["acq_candidates"] = c.acq_candidates;
  j["refine_best"] = c.refine_best;
  j["loocv_every"] = c.loocv_every;
  j["loocv_folds"] = c.loocv_folds;
  j["adapt_norm"] = c.adapt_norm;
  j["force_private"] = c.force_private;
  j["seed"] = c.seed;
  j["model"] = to_string(c.model);
  j["delta_A"] = c.prior.delta_A;
  if (c.known_graph) j["known_graph"] = detail::mat_json(*c.known_graph);
  return j;
}

struct SessionEvent {
  std::uint64_t seq = 0;
  std::string kind;  // created | pair_proposed | vote_submitted | round_closed
  Json payload;

  Json to_json() const { return {{"seq", seq}, {"kind", kind}, {"payload", payload}}; }
  static SessionEvent from_json(const Json& j) {
    return {j.at("seq").get<std::uint64_t>(), j.at("kind").get<std::string>(), j.at("payload")};
  }
};

/// One live session: the core state machine plus per-agent vote collection
/// and the event log that reproduces it.
class ServiceSession {
 public:
  ServiceSession(std::string id, const SboConfig& cfg, std::vector<std::string> voter_tokens)
      : id_(std::move(id)), core_(cfg), tokens_(std::move(voter_tokens)) {
    if (!tokens_.empty() && static_cast<int>(tokens_.size()) != cfg.n)
      throw ArgumentError("one voter token per agent required");
    Json p{{"id", id_}, {"config", config_to_json(core_.config())}};
    if (!tokens_.empty()) p["voter_tokens"] = tokens_;
    emit("created", std::move(p));
  }

  /// Rebuilds a session from its log. Every derived event is checked
  /// against what the rebuilt state produces.
  static std::unique_ptr<ServiceSession> replay(const std::vector<SessionEvent>& log) {
    if (log.empty() || log.front().kind != "created") throw StateError("replay: log must start with created");
    const Json& p = log.front().payload;
    std::vector<std::string> tokens;
    if (p.contains("voter_tokens")) tokens = p["voter_tokens"].get<std::vector<std::string>>();
    auto s = std::make_unique<ServiceSession>(p.at("id").get<std::string>(), config_from_json(p.at("config")),
                                              std::move(tokens));
    for (std::size_t k = 1; k < log.size(); ++k) {
      const auto& e = log[k];
      if (e.seq != k) throw StateError("replay: sequence gap at " + std::to_string(e.seq));
      if (e.kind == "pair_proposed") {
        s->next_pair();
      } else if (e.kind == "vote_submitted") {
        s->submit_vote(e.payload.at("agent").get<int>(), channel_from_string(e.payload.at("channel")),
                       e.payload.at("winner").get<std::string>(), std::nullopt, /*check_token=*/false);
      } else if (e.kind == "round_closed") {
        // Emitted by the preceding vote; nothing to apply.
      } else {
        throw StateError("replay: unknown event kind " + e.kind);
      }
      // A closing vote also emits round_closed, so compare by position.
      if (s->events_.size() <= k || s->events_[k].to_json() != e.to_json())
        throw StateError("replay: event " + std::to_string(e.seq) + " does not reproduce");
    }
    return s;
  }

  const std::string& id() const { return id_; }
  const Session& core() const { return core_; }
  const std::vector<SessionEvent>& events() const { return events_; }
  const std::vector<std::string>& voter_tokens() const { return tokens_; }

  /// Current pair and phase; computes x_t on first call of a round.
  Json next_pair() {
    const bool fresh = !proposed_;
    const OptionPoint& x = core_.propose_next();
    if (fresh) {
      proposed_ = true;
      emit("pair_proposed", {{"round", core_.round() + 1},
                             {"x", detail::vec_json(x)},
                             {"x_prev", detail::vec_json(core_.previous())}});
    }
    return pair_json();
  }

  /// Records one agent's bit; winner is "x" or "x_prev". When the phase is
  /// complete the assembled vote goes to the core.
  Json submit_vote(int agent, Channel ch, const std::string& winner, const std::optional<std::string>& token,
                   bool check_token = true) {
    const int n = core_.config().n;
    if (agent < 0 || agent >= n) throw ArgumentError("agent index out of range");
    if (winner != "x" && winner != "x_prev") throw ArgumentError("winner must be \"x\" or \"x_prev\"");
    if (check_token && !tokens_.empty() && (!token || *token != tokens_[static_cast<std::size_t>(agent)]))
      throw ProtocolError("voter token does not match agent");
    if (!proposed_) throw ProtocolError("no pair proposed yet; fetch next-pair first");
    const Channel awaiting = core_.awaiting_private() ? Channel::kPrivate : Channel::kPublic;
    if (ch != awaiting) throw ProtocolError("awaiting " + to_string(awaiting) + " votes, got " + to_string(ch));
    if (ballots_.count(agent)) throw ConflictError("agent " + std::to_string(agent) + " already voted this phase");
    const int round = core_.round() + 1;
    ballots_[agent] = winner == "x" ? 1 : 0;
    emit("vote_submitted", {{"round", round}, {"agent", agent}, {"channel", to_string(ch)}, {"winner", winner}});
    if (static_cast<int>(ballots_.size()) == n) {
      std::vector<int> bits(static_cast<std::size_t>(n));
      for (const auto& [a, b] : ballots_) bits[static_cast<std::size_t>(a)] = b;
      ballots_.clear();
      core_.ingest_vote({round, *core_.pending(), core_.previous(), ch, bits});
      if (core_.round() == round) {
        proposed_ = false;
        const auto& row = core_.trace().back();
        emit("round_closed", {{"round", round},
                              {"private", row.private_queried},
                              {"w_u", row.w_u},
                              {"w_v", row.w_v},
                              {"private_query_count", row.qu_count}});
      }
    }
    return {{"round", core_.round() + 1}, {"accepted", true}};
  }

  Json estimate() const {
    if (core_.round() < 1) throw StateError("no round has closed yet");
    const auto& est = core_.estimate();
    Json utils = Json::array();
    for (const auto& x : core_.queried())
      utils.push_back({{"x", detail::vec_json(x)}, {"u", detail::vec_json(predict_map(est, core_.kernel(), x))}});
    const auto& row = core_.trace().back();
    return {{"round", core_.round()},
            {"consensus", detail::vec_json(core_.consensus_estimate())},
            {"per_agent_map_utilities", utils},
            {"w_u", row.w_u},
            {"w_v", row.w_v},
            {"private_query_count", core_.private_count()}};
  }

  std::string trace() const { return trace_csv(core_.trace()); }

  /// Field-level snapshot for replay comparison.
  Json snapshot() const {
    Json j = pair_json();
    j["id"] = id_;
    j["trace"] = trace();
    j["queried"] = Json::array();
    for (const auto& x : core_.queried()) j["queried"].push_back(detail::vec_json(x));
    j["U"] = detail::mat_json(core_.estimate().U);
    j["V"] = detail::mat_json(core_.estimate().V);
    j["A"] = detail::mat_json(core_.estimate().A.A);
    j["norm_bound"] = core_.norm_bound();
    j["lengthscale"] = detail::vec_json(core_.kernel().lengthscale);
    j["events"] = events_.size();
    return j;
  }

  /// Called after each new event; the manager appends it to disk.
  void set_sink(std::function<void(const SessionEvent&)> sink) { sink_ = std::move(sink); }

 private:
  Json pair_json() const {
    Json voted = Json::array();
    for (const auto& [a, b] : ballots_) voted.push_back(a);
    Json j{{"round", core_.round() + 1},
           {"awaiting", to_string(core_.phase())},
           {"voted_agents", voted},
           {"x_prev", detail::vec_json(core_.previous())}};
    j["x"] = core_.pending() ? detail::vec_json(*core_.pending()) : Json(nullptr);
    return j;
  }

  void emit(std::string kind, Json payload) {
    events_.push_back({next_seq_++, std::move(kind), std::move(payload)});
    if (sink_) sink_(events_.back());
  }

  std::string id_;
  Session core_;
  std::vector<std::string> tokens_;
  bool proposed_ = false;
  std::map<int, int> ballots_;
  std::vector<SessionEvent> events_;
  std::uint64_t next_seq_ = 0;
  std::function<void(const SessionEvent&)> sink_;
};

/// Owns all sessions; each has its own lock so sessions run concurrently
/// while mutations within one session serialize.
class SessionManager {
 public:
  /// data_dir empty keeps logs in memory only.
  explicit SessionManager(std::filesystem::path data_dir = {}, bool voter_tokens = false)
      : dir_(std::move(data_dir)), voter_tokens_(voter_tokens), rng_(std::random_device{}()) {
    if (!dir_.empty()) {
      std::filesystem::create_directories(dir_);
      load_all();
    }
  }

  struct Created {
    std::string id;
    std::vector<std::string> voter_tokens;
  };

  Created create(const Json& config) {
    const SboConfig cfg = config_from_json(config);
    std::lock_guard<std::mutex> lk(mu_);
    std::string id;
    do id = random_hex(16);
    while (sessions_.count(id));
    std::vector<std::string> tokens;
    if (voter_tokens_)
      for (int i = 0; i < cfg.n; ++i) tokens.push_back(random_hex(16));
    auto slot = std::make_unique<Slot>();
    // The created event is emitted inside the constructor, before a sink
    // exists, so it is written here.
    slot->session = std::make_unique<ServiceSession>(id, cfg, tokens);
    if (!dir_.empty()) {
      write(id, slot->session->events().front());
      attach(id, *slot->session);
    }
    sessions_.emplace(id, std::move(slot));
    return {id, tokens};
  }

  /// Runs fn with the session locked.
  template <class Fn>
  auto with(const std::string& id, Fn&& fn) {
    Slot* s = find(id);
    std::lock_guard<std::mutex> lk(s->mu);
    return fn(*s->session);
  }

  std::vector<std::string> ids() const {
    std::lock_guard<std::mutex> lk(mu_);
    std::vector<std::string> out;
    for (const auto& [k, v] : sessions_) out.push_back(k);
    return out;
  }

  std::filesystem::path log_path(const std::string& id) const { return dir_ / (id + ".jsonl"); }

  static std::vector<SessionEvent> read_log(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw NotFoundError("cannot open event log " + p.string());
    std::vector<SessionEvent> out;
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) out.push_back(SessionEvent::from_json(Json::parse(line)));
    return out;
  }

 private:
  struct Slot {
    std::mutex mu;
    std::unique_ptr<ServiceSession> session;
  };

  Slot* find(const std::string& id) {
    std::lock_guard<std::mutex> lk(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFoundError("unknown session " + id);
    return it->second.get();
  }

  void attach(const std::string& id, ServiceSession& s) {
    s.set_sink([this, id](const SessionEvent& e) { write(id, e); });
  }

  void write(const std::string& id, const SessionEvent& e) const {
    std::ofstream out(log_path(id), std::ios::app);
    out << e.to_json().dump() << '\n';
    out.flush();
    if (!out) throw StateError("cannot append to event log for " + id);
  }

  void load_all() {
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
      if (entry.path().extension() != ".jsonl") continue;
      const auto log = read_log(entry.path());
      auto s = ServiceSession::replay(log);
      const std::string id = s->id();
      // A crash between a vote and its round_closed leaves the tail unwritten.
      for (std::size_t k = log.size(); k < s->events().size(); ++k) write(id, s->events()[k]);
      attach(id, *s);
      auto slot = std::make_unique<Slot>();
      slot->session = std::move(s);
      sessions_.emplace(id, std::move(slot));
    }
  }

  std::string random_hex(int bytes) {
    static const char* kHex = "0123456789abcdef";
    std::string s;
    for (int i = 0; i < bytes; ++i) {
      const auto b = static_cast<unsigned>(rng_() & 0xffu);
      s += kHex[b >> 4];
      s += kHex[b & 15u];
    }
    return s;
  }

  std::filesystem::path dir_;
  bool voter_tokens_;
  mutable std::mutex mu_;
  std::mt19937_64 rng_;
  std::map<std::string, std::unique_ptr<Slot>> sessions_;
};

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// HTTP status for a service exception.
inline int http_status(const std::exception& e) {
  if (dynamic_cast<const NotFoundError*>(&e)) return 404;
  if (dynamic_cast<const ConflictError*>(&e)) return 409;
  if (dynamic_cast<const ProtocolError*>(&e)) return 409;
  if (dynamic_cast<const StateError*>(&e)) return 412;
  if (dynamic_cast<const ArgumentError*>(&e) || dynamic_cast<const Json::exception*>(&e)) return 400;
  return 500;
}

inline HttpResponse error_response(const std::exception& e) {
  Json j{{"error", e.what()}};
  if (const auto* v = dynamic_cast<const ValidationError*>(&e)) {
    Json f = Json::object();
    for (const auto& [k, m] : v->fields()) f[k] = m;
    j["fields"] = f;
  }
  return {http_status(e), "application/json", j.dump()};
}

/// Transport-free router: the server binary forwards every request here.
/// bearer is the Authorization token (without the "Bearer " prefix);
/// facilitator_token empty disables the check on POST /sessions.
inline HttpResponse route(SessionManager& mgr, const std::string& method, const std::string& path,
                          const std::string& body, const std::string& bearer = {},
                          const std::string& facilitator_token = {}) {
  try {
    std::vector<std::string> parts;
    std::stringstream ss(path);
    for (std::string p; std::getline(ss, p, '/');)
      if (!p.empty()) parts.push_back(p);
    if (parts.empty() || parts[0] != "sessions") throw NotFoundError("no route for " + path);
    if (parts.size() == 1 && method == "POST") {
      if (!facilitator_token.empty() && bearer != facilitator_token)
        return {401, "application/json", Json{{"error", "facilitator token required"}}.dump()};
      const auto c = mgr.create(Json::parse(body));
      Json j{{"id", c.id}};
      if (!c.voter_tokens.empty()) j["voter_tokens"] = c.voter_tokens;
      return {201, "application/json", j.dump()};
    }
    if (parts.size() != 3) throw NotFoundError("no route for " + path);
    const std::string& id = parts[1];
    const std::string& what = parts[2];
    if (method == "GET" && what == "next-pair")
      return {200, "application/json", mgr.with(id, [](ServiceSession& s) { return s.next_pair(); }).dump()};
    if (method == "GET" && what == "estimate")
      return {200, "application/json", mgr.with(id, [](ServiceSession& s) { return s.estimate(); }).dump()};
    if (method == "GET" && what == "trace")
      return {200, "text/csv", mgr.with(id, [](ServiceSession& s) { return s.trace(); })};
    if (method == "POST" && what == "votes") {
      const Json j = Json::parse(body);
      std::optional<std::string> token;
      if (j.contains("token")) token = j["token"].get<std::string>();
      else if (!bearer.empty()) token = bearer;
      const Json ack = mgr.with(id, [&](ServiceSession& s) {
        return s.submit_vote(j.at("agent").get<int>(), channel_from_string(j.at("channel").get<std::string>()),
                             j.at("winner").get<std::string>(), token);
      });
      return {200, "application/json", ack.dump()};
    }
    throw NotFoundError("no route for " + method + " " + path);
  } catch (const std::exception& e) {
    return error_response(e);
  }
}

}  // namespace sbo

#endif  // SBO_SESSION_SERVICE_HPP_
