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


#ifndef SBO_SIM_HARNESS_HPP_
#define SBO_SIM_HARNESS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <boost/math/constants/constants.hpp>
#include <boost/random/sobol.hpp>

#include "sbo/aggregation.hpp"
#include "sbo/errors.hpp"
#include "sbo/kernels.hpp"
#include "sbo/preference_model.hpp"
#include "sbo/sbo_core.hpp"
#include "sbo/social_graph.hpp"

namespace sbo {

/// Gaussian density with standard deviation sigma.
inline double gaussian_density(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * boost::math::constants::pi<double>()));
}

/// Weighted sum of isotropic Gaussian bumps.
struct BumpMixture {
  std::vector<double> weight;
  std::vector<Eigen::VectorXd> center;
  std::vector<double> sigma;
  bool density = true;  // normalise each bump as a 1-d density

  double operator()(const OptionPoint& x) const {
    double s = 0.0;
    for (std::size_t k = 0; k < weight.size(); ++k) {
      const double r2 = (x - center[k]).squaredNorm();
      const double b = std::exp(-0.5 * r2 / (sigma[k] * sigma[k]));
      s += weight[k] * (density ? b / (sigma[k] * std::sqrt(2.0 * boost::math::constants::pi<double>())) : b);
    }
    return s;
  }
};

struct SyntheticTask {
  std::string name;
  int n = 1;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  std::vector<BumpMixture> utility;  // one per agent
  Eigen::MatrixXd A;
  double rho = 1.0;
  std::vector<OptionPoint> grid;
  std::vector<double> social;  // aggregate of u on the grid
  OptionPoint x_star;
  double s_star = 0.0;

  int dim() const { return static_cast<int>(lower.size()); }

  Eigen::VectorXd u(const OptionPoint& x) const {
    Eigen::VectorXd out(n);
    for (int i = 0; i < n; ++i) out[i] = utility[static_cast<std::size_t>(i)](x);
    return out;
  }
  Eigen::VectorXd v(const OptionPoint& x) const { return A * u(x); }
  double social_utility(const OptionPoint& x) const { return GsfRule(rho, n)(u(x)); }
  double public_social_utility(const OptionPoint& x) const { return GsfRule(rho, n)(v(x)); }
};

namespace detail {

// 4001 evenly spaced points in 1-d, else 8192 Sobol points.
inline std::vector<OptionPoint> truth_grid(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  std::vector<OptionPoint> g;
  const int d = static_cast<int>(lo.size());
  if (d == 1) {
    for (int k = 0; k <= 4000; ++k) g.push_back(OptionPoint::Constant(1, lo[0] + (hi[0] - lo[0]) * k / 4000.0));
    return g;
  }
  boost::random::sobol gen(static_cast<std::size_t>(d));
  const double scale = std::ldexp(1.0, -64);
  for (int k = 0; k < 8192; ++k) {
    OptionPoint x(d);
    for (int j = 0; j < d; ++j) x[j] = lo[j] + (hi[j] - lo[j]) * static_cast<double>(gen()) * scale;
    g.push_back(std::move(x));
  }
  return g;
}

inline void finish_task(SyntheticTask& t) {
  t.grid = truth_grid(t.lower, t.upper);
  const GsfRule rule(t.rho, t.n);
  t.social.clear();
  std::size_t best = 0;
  for (std::size_t k = 0; k < t.grid.size(); ++k) {
    t.social.push_back(rule(t.u(t.grid[k])));
    if (t.social[k] > t.social[best]) best = k;
  }
  t.x_star = t.grid[best];
  t.s_star = t.social[best];
}

inline BumpMixture bumps_1d(std::vector<double> w, std::vector<double> mu, std::vector<double> sd) {
  BumpMixture b;
  b.weight = std::move(w);
  for (double m : mu) b.center.push_back(Eigen::VectorXd::Constant(1, m));
  b.sigma = std::move(sd);
  return b;
}

}  // namespace detail

/// The two-agent influencer example on [0, 1].
inline SyntheticTask toy1_task() {
  SyntheticTask t;
  t.name = "toy1";
  t.n = 2;
  t.lower = Eigen::VectorXd::Zero(1);
  t.upper = Eigen::VectorXd::Ones(1);
  t.utility.push_back(detail::bumps_1d({0.3, 1.2, 0.8}, {0.35, 0.45, 0.75}, {0.05, 0.18, 0.1}));
  t.utility.push_back(detail::bumps_1d({0.5, 0.8, 0.4}, {0.25, 0.65, 0.85}, {0.1, 0.15, 0.05}));
  t.A.resize(2, 2);
  t.A << 0.9, 0.1, 0.6, 0.4;
  t.rho = 1.0;
  detail::finish_task(t);
  return t;
}

/// Seeded bump mixtures scaled to max |u| = 1 with a prior-sampled graph.
inline SyntheticTask random_gmm_task(int n, int d, std::uint64_t seed, double rho = 1.0) {
  if (n < 1 || d < 1) throw ArgumentError("random_gmm: n and d must be positive");
  SyntheticTask t;
  t.name = "random_gmm";
  t.n = n;
  t.lower = Eigen::VectorXd::Zero(d);
  t.upper = Eigen::VectorXd::Ones(d);
  t.rho = rho;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const auto probe = detail::truth_grid(t.lower, t.upper);
  for (int i = 0; i < n; ++i) {
    BumpMixture b;
    b.density = false;
    for (int k = 0; k < 3; ++k) {
      b.weight.push_back(0.2 + 0.8 * u01(rng));
      Eigen::VectorXd c(d);
      for (int j = 0; j < d; ++j) c[j] = u01(rng);
      b.center.push_back(c);
      b.sigma.push_back(0.08 + 0.12 * u01(rng));
    }
    double mx = 0.0;
    for (const auto& x : probe) mx = std::max(mx, std::abs(b(x)));
    for (auto& w : b.weight) w /= mx;
    t.utility.push_back(std::move(b));
  }
  t.A = sample_prior(n, seed ^ 0x9e3779b97f4a7c15ULL).A;
  detail::finish_task(t);
  return t;
}

/// toy1 utilities under a different influence graph.
///   wishy-washy: both agents echo the same mixture, rows [0.6, 0.4].
///   altruist: agent 2 weighs everyone equally, agent 1 mostly itself.
inline SyntheticTask graph_preset_task(const std::string& kind) {
  SyntheticTask t = toy1_task();
  t.name = kind;
  if (kind == "wishy-washy" || kind == "wishy_washy") {
    t.A << 0.6, 0.4, 0.6, 0.4;
  } else if (kind == "altruist") {
    t.A << 0.9, 0.1, 0.5, 0.5;
  } else {
    throw ArgumentError("unknown graph preset '" + kind + "'");
  }
  return t;
}

/// Parses "toy1", "random_gmm[:n[:d[:seed]]]", "wishy-washy", "altruist".
inline SyntheticTask make_task(const std::string& spec) {
  if (spec == "toy1") return toy1_task();
  if (spec.rfind("random_gmm", 0) == 0) {
    int n = 3, d = 1;
    std::uint64_t seed = 0;
    std::stringstream ss(spec.substr(std::string("random_gmm").size()));
    char sep;
    if (ss >> sep) ss >> n;
    if (ss >> sep) ss >> d;
    if (ss >> sep) ss >> seed;
    return random_gmm_task(n, d, seed);
  }
  if (spec == "wishy-washy" || spec == "wishy_washy" || spec == "altruist") return graph_preset_task(spec);
  throw ArgumentError("unknown task '" + spec + "'");
}

/// Argmax over the truth grid of the aggregate of A u (what public votes reveal).
inline OptionPoint corrupted_consensus(const SyntheticTask& t) {
  const GsfRule rule(t.rho, t.n);
  std::size_t best = 0;
  double bv = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < t.grid.size(); ++k) {
    const double s = rule(t.v(t.grid[k]));
    if (s > bv) {
      bv = s;
      best = k;
    }
  }
  return t.grid[best];
}

/// One Bradley-Terry draw per agent: private votes follow u, public ones A u.
inline VoteRecord oracle_vote(const SyntheticTask& t, const OptionPoint& x, const OptionPoint& xp, Channel ch,
                              std::mt19937_64& rng, int round = 0) {
  const Eigen::VectorXd d = ch == Channel::kPrivate ? Eigen::VectorXd(t.u(x) - t.u(xp))
                                                    : Eigen::VectorXd(t.v(x) - t.v(xp));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  VoteRecord r{round, x, xp, ch, {}};
  for (Eigen::Index i = 0; i < d.size(); ++i) r.outcomes.push_back(u01(rng) < bt_prob(d[i]) ? 1 : 0);
  return r;
}

/// A vote source with its own seeded stream.
inline VoteSource simulated_voters(const SyntheticTask& t, std::uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  auto task = std::make_shared<SyntheticTask>(t);
  return [rng, task](const OptionPoint& x, const OptionPoint& xp, Channel ch, int round) {
    return oracle_vote(*task, x, xp, ch, *rng, round).outcomes;
  };
}

/// Session config matching a task's box, agent count and aggregation.
inline SboConfig task_config(const SyntheticTask& t, std::uint64_t seed) {
  SboConfig c = SboConfig::Defaults(t.n);
  c.lower = t.lower;
  c.upper = t.upper;
  c.rho = t.rho;
  c.seed = seed;
  c.known_graph = t.A;
  return c;
}

/// Fills instantaneous, cumulative and simple regret against the grid optimum.
inline std::vector<TraceRow> compute_metrics(const SyntheticTask& t, std::vector<TraceRow> trace) {
  if (t.grid.empty()) throw StateError("compute_metrics: task has no ground truth");
  double cum = 0.0;
  double simple = std::numeric_limits<double>::infinity();
  for (auto& r : trace) {
    const double reg = std::max(0.0, t.s_star - t.social_utility(r.x));
    cum += reg;
    simple = std::min(simple, reg);
    r.regret = reg;
    r.cum_regret = cum;
    r.simple_regret = simple;
  }
  return trace;
}

/// Per-round median and quartiles across seeds.
inline std::string summary_csv(const std::vector<std::vector<TraceRow>>& runs) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "t,regret_median,regret_q25,regret_q75,cum_regret_median,cum_regret_q25,cum_regret_q75,"
        "simple_regret_median,simple_regret_q25,simple_regret_q75,qu_count_median,qu_count_q25,qu_count_q75\n";
  std::size_t T = 0;
  for (const auto& r : runs) T = std::max(T, r.size());
  auto quart = [](std::vector<double> v, double p) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  for (std::size_t k = 0; k < T; ++k) {
    std::vector<double> reg, cum, sr, qu;
    for (const auto& r : runs) {
      if (k >= r.size()) continue;
      reg.push_back(r[k].regret.value_or(std::numeric_limits<double>::quiet_NaN()));
      cum.push_back(r[k].cum_regret.value_or(std::numeric_limits<double>::quiet_NaN()));
      sr.push_back(r[k].simple_regret.value_or(std::numeric_limits<double>::quiet_NaN()));
      qu.push_back(r[k].qu_count);
    }
    os << (k + 1);
    for (const auto* v : {&reg, &cum, &sr, &qu})
      os << ',' << quart(*v, 0.5) << ',' << quart(*v, 0.25) << ',' << quart(*v, 0.75);
    os << '\n';
  }
  return os.str();
}

/// Vote stream seed paired with a session seed.
inline std::uint64_t voter_seed(std::uint64_t session_seed) { return session_seed + 1000; }

/// Seeded run of one baseline on a task, with regret columns.
inline std::vector<TraceRow> simulate(const SyntheticTask& t, ModelKind kind, SboConfig cfg, int T,
                                      std::uint64_t vote_seed) {
  return compute_metrics(t, run_baseline(kind, cfg, simulated_voters(t, vote_seed), T));
}

}  // namespace sbo

#endif  // SBO_SIM_HARNESS_HPP_
