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


#ifndef SBO_SBO_CORE_HPP_
#define SBO_SBO_CORE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <boost/random/sobol.hpp>

#include "sbo/aggregation.hpp"
#include "sbo/errors.hpp"
#include "sbo/inference.hpp"
#include "sbo/kernels.hpp"
#include "sbo/preference_model.hpp"
#include "sbo/social_graph.hpp"

namespace sbo {

struct SboConfig {
  int n = 1;
  Eigen::VectorXd lower = Eigen::VectorXd::Zero(1);
  Eigen::VectorXd upper = Eigen::VectorXd::Ones(1);
  double rho = 1.0;
  double q = 0.5;
  double delta = 0.1;  // confidence level the beta schedule stands for
  KernelSpec kernel;
  std::vector<double> lengthscale_grid{0.05, 0.1, 0.2, 0.4};
  double norm_bound = 1.5;
  BetaSchedule beta;
  SolverOptions solver;
  GraphPrior prior;  // n-dependent defaults filled by Defaults()
  ModelKind model = ModelKind::kCoupled;
  std::optional<Eigen::MatrixXd> known_graph;

  int acq_candidates = 128;
  int refine_best = 8;
  double refine_tol = 1e-3;  // pattern-search floor, fraction of the box width
  int loocv_every = 5;       // rounds between kernel retuning; 0 disables
  int loocv_folds = 10;
  bool adapt_norm = true;
  bool force_private = false;  // ask for a private vote every round
  std::uint64_t seed = 0;

  static SboConfig Defaults(int n) {
    SboConfig c;
    c.n = n;
    c.prior = GraphPrior::Defaults(n);
    return c;
  }

  int dim() const { return static_cast<int>(lower.size()); }

  /// Throws ValidationError naming every bad field.
  void validate() const {
    std::vector<std::pair<std::string, std::string>> bad;
    if (n < 1) bad.emplace_back("n", "must be at least 1");
    if (lower.size() == 0 || lower.size() != upper.size()) bad.emplace_back("box", "lower and upper must match");
    else
      for (Eigen::Index k = 0; k < lower.size(); ++k)
        if (!(lower[k] < upper[k])) bad.emplace_back("box", "lower must be below upper");
    if (!(rho > 0.0) || rho > 1.0) bad.emplace_back("rho", "must lie in (0, 1]");
    if (!(q > 0.0) || !(q < 1.0)) bad.emplace_back("q", "must lie in (0, 1)");
    if (!(delta > 0.0) || !(delta < 1.0)) bad.emplace_back("delta", "must lie in (0, 1)");
    try {
      kernel.validate();
      if (kernel.kind != KernelKind::kLinear && kernel.lengthscale.size() != 1 &&
          kernel.lengthscale.size() != lower.size())
        bad.emplace_back("kernel.lengthscale", "needs one entry or one per dimension");
    } catch (const ArgumentError& e) {
      bad.emplace_back("kernel", e.what());
    }
    for (double l : lengthscale_grid)
      if (!(l > 0.0)) bad.emplace_back("lengthscale_grid", "entries must be positive");
    if (!(norm_bound > 0.0)) bad.emplace_back("norm_bound", "must be positive");
    if (!(beta.beta0 > 0.0)) bad.emplace_back("beta0", "must be positive");
    if (acq_candidates < 1) bad.emplace_back("acq_candidates", "must be at least 1");
    if (refine_best < 0) bad.emplace_back("refine_best", "must be nonnegative");
    if (!(solver.kkt_tol > 0.0)) bad.emplace_back("solver.kkt_tol", "must be positive");
    if (solver.max_outer < 1) bad.emplace_back("solver.max_outer", "must be at least 1");
    if (model == ModelKind::kOracle) {
      if (!known_graph) bad.emplace_back("known_graph", "oracle baseline needs the true graph");
      else if (known_graph->rows() != n || known_graph->cols() != n)
        bad.emplace_back("known_graph", "must be n x n");
    }
    if (!bad.empty()) throw ValidationError(std::move(bad));
  }
};

/// One closed round.
struct TraceRow {
  int t = 0;
  OptionPoint x;
  double acq = 0.0;
  double w_u = 0.0;
  double w_v = 0.0;
  double threshold = 0.0;
  bool private_queried = false;
  int qu_count = 0;
  // Per-agent extremes of u(x_t) - u(x_{t-1}) over the joint set.
  Eigen::VectorXd delta_lower;
  Eigen::VectorXd delta_upper;
  // Filled only when ground truth is known.
  std::optional<double> regret;
  std::optional<double> cum_regret;
  std::optional<double> simple_regret;
};

inline std::string format_point(const OptionPoint& x) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (Eigen::Index k = 0; k < x.size(); ++k) os << (k ? ";" : "") << x[k];
  return os.str();
}

inline std::string trace_csv(const std::vector<TraceRow>& rows) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "t,x,acq,w_u,w_v,threshold,private,regret,cum_regret,simple_regret,qu_count\n";
  auto opt = [&](const std::optional<double>& v) {
    if (v) os << *v;
  };
  for (const auto& r : rows) {
    os << r.t << ',' << format_point(r.x) << ',' << r.acq << ',' << r.w_u << ',' << r.w_v << ',' << r.threshold << ','
       << (r.private_queried ? 1 : 0) << ',';
    opt(r.regret);
    os << ',';
    opt(r.cum_regret);
    os << ',';
    opt(r.simple_regret);
    os << ',' << r.qu_count << '\n';
  }
  return os.str();
}

/// Stopping rule: ask privately iff w_u >= max(t^-q, w_v).
inline bool needs_private(double w_u, double w_v, int t, double q) {
  if (t < 1) throw ArgumentError("needs_private: round must be at least 1");
  return w_u >= std::max(std::pow(static_cast<double>(t), -q), w_v);
}

enum class Phase { kPublic, kPrivate };

inline std::string to_string(Phase p) { return p == Phase::kPublic ? "public" : "private"; }

/// The serial state machine of one consensus search.
///
/// Round t proposes x_t against x_{t-1}, takes the public vote, then a
/// private vote when the stopping rule fires. Everything is a deterministic
/// function of the config and the votes fed in.
class Session {
 public:
  explicit Session(SboConfig cfg) : cfg_(validated(std::move(cfg))), data_(cfg_.n), rng_(cfg_.seed) {
    if (cfg_.kernel.lengthscale.size() == 1 && cfg_.dim() > 1)
      cfg_.kernel.lengthscale = Eigen::VectorXd::Constant(cfg_.dim(), cfg_.kernel.lengthscale[0]);
    icfg_ = InferenceConfig::Defaults(cfg_.n);
    icfg_.model = cfg_.model;
    icfg_.kernel = cfg_.kernel;
    icfg_.norm_bound = cfg_.norm_bound;
    icfg_.beta_norm_ref = cfg_.norm_bound;
    icfg_.beta = cfg_.beta;
    icfg_.prior = cfg_.prior;
    icfg_.known_graph = cfg_.known_graph;
    icfg_.rho = cfg_.rho;
    icfg_.solver = cfg_.solver;
    x_prev_ = uniform_point();
    queried_.push_back(x_prev_);
    est_ = fit_map_unchecked(data_, icfg_);
  }

  const SboConfig& config() const { return cfg_; }
  const InferenceConfig& inference_config() const { return icfg_; }
  const VoteData& data() const { return data_; }
  const MapEstimate& estimate() const { return est_; }
  const std::vector<TraceRow>& trace() const { return trace_; }
  const std::vector<OptionPoint>& queried() const { return queried_; }
  int round() const { return t_; }  // closed rounds
  int private_count() const { return static_cast<int>(data_.private_votes().size()); }
  Phase phase() const { return phase_; }
  const OptionPoint& previous() const { return x_prev_; }

  /// x_t of the open round; computed once per round.
  const OptionPoint& propose_next() {
    if (!x_cur_) {
      auto [x, a] = maximize_acquisition();
      x_cur_ = x;
      acq_ = a;
    }
    return *x_cur_;
  }

  bool awaiting_private() const { return phase_ == Phase::kPrivate; }

  /// x_t if already proposed this round.
  const std::optional<OptionPoint>& pending() const { return x_cur_; }

  /// Appends a vote for the open round, refits, and closes the round when
  /// no further vote is due.
  void ingest_vote(const VoteRecord& v) {
    if (!x_cur_) throw ProtocolError("no pair has been proposed for this round");
    const int round = t_ + 1;
    if (v.t != round) throw ProtocolError("vote is for round " + std::to_string(v.t) + ", open round is " +
                                          std::to_string(round));
    if (v.x.size() != x_cur_->size() || v.x != *x_cur_ || v.xp.size() != x_prev_.size() || v.xp != x_prev_)
      throw ProtocolError("vote pair differs from the proposed pair");
    if (static_cast<int>(v.outcomes.size()) != cfg_.n) throw ArgumentError("vote outcome count does not match n");
    if (v.channel == Channel::kPublic && phase_ != Phase::kPublic)
      throw ProtocolError("public vote already recorded for this round");
    if (v.channel == Channel::kPrivate && phase_ != Phase::kPrivate)
      throw ProtocolError(pending_public_ ? "private vote not requested this round"
                                          : "private vote before the public vote");
    data_.add(v);
    const MapEstimate warm = est_;
    est_ = fit_map(data_, icfg_, &warm);
    if (v.channel == Channel::kPublic) {
      pending_public_ = true;
      const ConfidenceSets cs(data_, icfg_, est_);
      const auto wu = cs.width(*x_cur_, x_prev_, WidthChannel::kU);
      const auto wv = cs.width(*x_cur_, x_prev_, WidthChannel::kV);
      row_ = TraceRow{};
      row_.t = round;
      row_.x = *x_cur_;
      row_.acq = acq_;
      row_.w_u = wu.width;
      row_.w_v = wv.width;
      row_.delta_lower = wu.lower;
      row_.delta_upper = wu.upper;
      row_.threshold = std::pow(static_cast<double>(round), -cfg_.q);
      const bool asks = private_allowed() && (cfg_.force_private || needs_private(wu.width, wv.width, round, cfg_.q));
      if (asks) {
        phase_ = Phase::kPrivate;
        return;
      }
      close_round(false);
    } else {
      close_round(true);
    }
  }

  /// Whether the model kind ever takes private votes.
  bool private_allowed() const {
    return cfg_.model == ModelKind::kCoupled || cfg_.model == ModelKind::kIndependent;
  }

  /// Queried point with the highest MAP aggregate; earliest wins near-ties.
  OptionPoint consensus_estimate() const {
    if (t_ < 1) throw StateError("consensus_estimate: no round has closed");
    const GsfRule rule(cfg_.rho, cfg_.n);
    std::vector<double> s;
    for (const auto& x : queried_) s.push_back(rule(predict_map(est_, icfg_.kernel, x)));
    const double best = *std::max_element(s.begin(), s.end());
    for (std::size_t k = 0; k < s.size(); ++k)
      if (s[k] >= best - 1e-6) return queried_[k];
    return queried_.back();
  }

  /// MAP aggregate of every queried point, in round order.
  std::vector<double> queried_aggregates() const {
    const GsfRule rule(cfg_.rho, cfg_.n);
    std::vector<double> s;
    for (const auto& x : queried_) s.push_back(rule(predict_map(est_, icfg_.kernel, x)));
    return s;
  }

  double norm_bound() const { return icfg_.norm_bound; }
  const KernelSpec& kernel() const { return icfg_.kernel; }

 private:
  static SboConfig validated(SboConfig c) {
    c.validate();
    return c;
  }

  OptionPoint uniform_point() {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    OptionPoint x(cfg_.dim());
    for (int k = 0; k < cfg_.dim(); ++k) x[k] = cfg_.lower[k] + (cfg_.upper[k] - cfg_.lower[k]) * u01(rng_);
    return x;
  }

  // Sobol points with a fresh random shift per round (Cranley-Patterson).
  std::vector<OptionPoint> candidates() {
    const int d = cfg_.dim();
    boost::random::sobol gen(static_cast<std::size_t>(d));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    Eigen::VectorXd shift(d);
    for (int k = 0; k < d; ++k) shift[k] = u01(rng_);
    const double scale = std::ldexp(1.0, -64);
    std::vector<OptionPoint> out;
    for (int c = 0; c < cfg_.acq_candidates; ++c) {
      OptionPoint x(d);
      for (int k = 0; k < d; ++k) {
        double v = static_cast<double>(gen()) * scale + shift[k];
        v -= std::floor(v);
        x[k] = cfg_.lower[k] + (cfg_.upper[k] - cfg_.lower[k]) * v;
      }
      out.push_back(std::move(x));
    }
    return out;
  }

  std::pair<OptionPoint, double> maximize_acquisition() {
    const ConfidenceSets cs(data_, icfg_, est_);
    auto value = [&](const OptionPoint& x) { return cs.acquisition(x, x_prev_, icfg_.solver).value; };
    const auto cands = candidates();
    std::vector<std::pair<double, int>> scored;
    for (std::size_t c = 0; c < cands.size(); ++c) {
      if (cands[c] == x_prev_) continue;
      scored.emplace_back(value(cands[c]), static_cast<int>(c));
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    const int d = cfg_.dim();
    const Eigen::VectorXd width = cfg_.upper - cfg_.lower;
    const double start_step = 0.5 / std::pow(static_cast<double>(cfg_.acq_candidates), 1.0 / d);
    OptionPoint best = cands[static_cast<std::size_t>(scored.front().second)];
    double best_val = scored.front().first;
    const int refine = std::min<int>(cfg_.refine_best, static_cast<int>(scored.size()));
    for (int r = 0; r < refine; ++r) {
      OptionPoint x = cands[static_cast<std::size_t>(scored[static_cast<std::size_t>(r)].second)];
      double fx = scored[static_cast<std::size_t>(r)].first;
      // Coordinate pattern search with step halving.
      for (double step = start_step; step >= cfg_.refine_tol; step *= 0.5) {
        bool moved = true;
        while (moved) {
          moved = false;
          for (int k = 0; k < d && !moved; ++k)
            for (double sgn : {1.0, -1.0}) {
              OptionPoint y = x;
              y[k] = std::clamp(y[k] + sgn * step * width[k], cfg_.lower[k], cfg_.upper[k]);
              if (y == x || y == x_prev_) continue;
              const double fy = value(y);
              if (fy > fx + 1e-12) {
                x = y;
                fx = fy;
                moved = true;
                break;
              }
            }
        }
      }
      if (fx > best_val) {
        best_val = fx;
        best = x;
      }
    }
    return {best, best_val};
  }

  void close_round(bool private_taken) {
    row_.private_queried = private_taken;
    row_.qu_count = private_count();
    const int round = t_ + 1;
    update_hyperparameters(round);
    trace_.push_back(row_);
    t_ = round;
    x_prev_ = *x_cur_;
    queried_.push_back(x_prev_);
    x_cur_.reset();
    phase_ = Phase::kPublic;
    pending_public_ = false;
  }

  // Norm doubling every round, kernel retuning every loocv_every rounds.
  void update_hyperparameters(int round) {
    bool changed = false;
    if (cfg_.loocv_every > 0 && round % cfg_.loocv_every == 0 && data_.records().size() >= 3 &&
        cfg_.kernel.kind != KernelKind::kLinear && cfg_.lengthscale_grid.size() > 1) {
      LoocvOptions lo;
      lo.max_folds = cfg_.loocv_folds;
      const KernelSpec k = tune_kernel_loocv(data_, icfg_, cfg_.lengthscale_grid, lo);
      if (!(k == icfg_.kernel)) {
        icfg_.kernel = k;
        changed = true;
      }
    }
    if (changed) est_ = fit_map(data_, icfg_, &est_);
    if (cfg_.adapt_norm) {
      const double L = adapt_norm_bound_from(data_, icfg_, est_);
      if (L != icfg_.norm_bound) {
        icfg_.norm_bound = L;
        est_ = fit_map(data_, icfg_, &est_);
      }
    }
  }

  SboConfig cfg_;
  InferenceConfig icfg_;
  VoteData data_;
  std::mt19937_64 rng_;
  MapEstimate est_;
  int t_ = 0;
  OptionPoint x_prev_;
  std::optional<OptionPoint> x_cur_;
  double acq_ = 0.0;
  Phase phase_ = Phase::kPublic;
  bool pending_public_ = false;
  TraceRow row_;
  std::vector<OptionPoint> queried_;
  std::vector<TraceRow> trace_;
};

/// Votes for (x, x', channel, round); the simulator's stand-in for people.
using VoteSource = std::function<std::vector<int>(const OptionPoint&, const OptionPoint&, Channel, int)>;

/// Runs T rounds of one model kind against a vote source.
inline Session run_session(ModelKind kind, SboConfig cfg, const VoteSource& votes, int T) {
  if (T < 0) throw ArgumentError("run_baseline: negative horizon");
  cfg.model = kind;
  Session s(cfg);
  for (int t = 1; t <= T; ++t) {
    const OptionPoint x = s.propose_next();
    const OptionPoint xp = s.previous();
    s.ingest_vote({t, x, xp, Channel::kPublic, votes(x, xp, Channel::kPublic, t)});
    if (s.awaiting_private()) s.ingest_vote({t, x, xp, Channel::kPrivate, votes(x, xp, Channel::kPrivate, t)});
  }
  return s;
}

inline std::vector<TraceRow> run_baseline(ModelKind kind, const SboConfig& cfg, const VoteSource& votes, int T) {
  return run_session(kind, cfg, votes, T).trace();
}

}  // namespace sbo

#endif  // SBO_SBO_CORE_HPP_
