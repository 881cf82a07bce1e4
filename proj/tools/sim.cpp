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


// Seeded simulation runs; one trace CSV per seed and a per-round summary.
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sbo/sim_harness.hpp"

namespace {

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulated social Bayesian optimization runs"};
  std::string task_name = "toy1";
  std::string baseline = "sbo";
  std::optional<double> rho;
  double q = 0.5;
  int iters = 50;
  int seeds = 10;
  std::uint64_t seed_base = 0;
  std::string out = "sim.csv";
  int candidates = 128;
  int refine = 8;
  bool force_private = false;
  double beta0 = 0.5;
  app.add_option("--task", task_name, "toy1 | wishy-washy | altruist | random_gmm:N:D:SEED");
  app.add_option("--baseline", baseline, "sbo | oracle | single | independent");
  app.add_option("--rho", rho, "GSF inequality weight in (0, 1]; defaults to the task's");
  app.add_option("--q", q, "private-query threshold exponent");
  app.add_option("--iters", iters, "rounds per run")->check(CLI::PositiveNumber);
  app.add_option("--seeds", seeds, "independent runs")->check(CLI::PositiveNumber);
  app.add_option("--seed-base", seed_base, "seed of the first run");
  app.add_option("--out", out, "summary CSV; per-seed traces go next to it");
  app.add_option("--candidates", candidates, "Sobol candidates per acquisition");
  app.add_option("--refine", refine, "candidates refined by pattern search");
  app.add_option("--beta0", beta0, "confidence radius scale");
  app.add_flag("--force-private", force_private, "ask for a private vote every round");
  CLI11_PARSE(app, argc, argv);

  try {
    sbo::SyntheticTask task = sbo::make_task(task_name);
    if (rho) {
      task.rho = *rho;
      sbo::detail::finish_task(task);
    }
    const sbo::ModelKind kind = sbo::model_kind_from_string(baseline);
    const std::filesystem::path summary(out);
    const std::filesystem::path dir = summary.has_parent_path() ? summary.parent_path() : ".";
    std::filesystem::create_directories(dir);
    const std::string stem = summary.stem().string();

    std::vector<std::vector<sbo::TraceRow>> runs;
    for (int k = 0; k < seeds; ++k) {
      const std::uint64_t seed = seed_base + static_cast<std::uint64_t>(k);
      sbo::SboConfig cfg = sbo::task_config(task, seed);
      cfg.q = q;
      cfg.acq_candidates = candidates;
      cfg.refine_best = refine;
      cfg.force_private = force_private;
      cfg.beta.beta0 = beta0;
      const auto t0 = std::chrono::steady_clock::now();
      runs.push_back(sbo::simulate(task, kind, cfg, iters, sbo::voter_seed(seed)));
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const auto path = dir / (stem + ".seed" + std::to_string(seed) + ".csv");
      write_file(path, sbo::trace_csv(runs.back()));
      const auto& last = runs.back().back();
      std::cerr << baseline << " seed " << seed << ": simple regret " << *last.simple_regret << ", private votes "
                << last.qu_count << ", " << secs << " s\n";
    }
    write_file(summary, sbo::summary_csv(runs));
  } catch (const std::exception& e) {
    std::cerr << "sim: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
