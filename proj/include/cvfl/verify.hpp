#pragma once

// Self-check suites behind the `verify` CLI command: each one replays an
// implementation against its brute-force oracle on seeded random instances.
// Solvers are injectable so a deliberately broken one can be shown to fail.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cvfl/oracles.hpp"
#include "cvfl/rng.hpp"
#include "cvfl/scheduler.hpp"

namespace cvfl::verify {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

using MatchSolver = std::function<ClusterAssignment(const MatchInstance&)>;

/// Greedy head selection vs the exhaustive knapsack: feasibility always, at
/// least the best-ratio single item, and a healthy mean optimality ratio.
inline SuiteResult run_knapsack_suite(std::uint64_t seed = 1) {
  SuiteResult res{"knapsack", true, ""};
  Rng rng(seed);
  double ratio_sum = 0.0;
  int counted = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int total_rbs = 3 + rng.uniform_index(3);
    const int n = 2 + rng.uniform_index(10);
    std::vector<CandidateInfo> cands;
    std::vector<double> values;
    std::vector<int> weights;
    for (int i = 0; i < n; ++i) {
      CandidateInfo c;
      c.vehicle_id = i;
      c.diversity = rng.uniform(0.05, 1.0);
      const int cost = 1 + rng.uniform_index(3);
      c.rb_rates_bps.assign(total_rbs, 1.0);
      c.cost = RbCost{static_cast<double>(cost), cost, {}};
      cands.push_back(c);
      values.push_back(c.diversity);
      weights.push_back(cost);
    }
    const auto sel = select_heads(cands, total_rbs);

    int used = 0;
    for (const auto& [id, rbs] : sel.rb_assignment) used += static_cast<int>(rbs.size());
    if (used > total_rbs) {
      res.passed = false;
      res.detail = "RB budget exceeded";
      return res;
    }
    const auto best = oracle::knapsack_exhaustive(values, weights, total_rbs);
    if (sel.objective > best.best_value + 1e-9) {
      res.passed = false;
      res.detail = "greedy exceeded the exhaustive optimum (oracle broken?)";
      return res;
    }
    double best_ratio = -1.0, best_ratio_value = 0.0;
    for (int i = 0; i < n; ++i) {
      const double r = values[i] / weights[i];
      if (r > best_ratio) {
        best_ratio = r;
        best_ratio_value = values[i];
      }
    }
    if (sel.objective + 1e-9 < best_ratio_value) {
      res.passed = false;
      res.detail = "greedy lost to the single best-ratio item";
      return res;
    }
    if (best.best_value > 0) {
      ratio_sum += sel.objective / best.best_value;
      ++counted;
    }
  }
  const double mean_ratio = counted ? ratio_sum / counted : 0.0;
  if (mean_ratio < 0.9) {
    res.passed = false;
    res.detail = "mean greedy/optimal ratio " + std::to_string(mean_ratio) + " below 0.9";
  } else {
    res.detail = "mean greedy/optimal ratio " + std::to_string(mean_ratio);
  }
  return res;
}

/// Matching solver vs exhaustive enumeration, exact objective equality.
inline SuiteResult run_matching_suite(std::uint64_t seed = 2,
                                      const MatchSolver& solver = &match_vehicles) {
  SuiteResult res{"matching", true, ""};
  Rng rng(seed);
  for (int trial = 0; trial < 100; ++trial) {
    MatchInstance inst;
    const int nv = 1 + rng.uniform_index(8);
    const int nh = 1 + rng.uniform_index(4);
    inst.n_max = 1 + rng.uniform_index(3);
    inst.weights.assign(nv, std::vector<double>(nh, 0.0));
    inst.zeta.assign(nv, std::vector<int>(nh, 0));
    for (int v = 0; v < nv; ++v)
      for (int h = 0; h < nh; ++h) {
        inst.weights[v][h] = static_cast<double>(rng.uniform_int(0, 64)) / 64.0;
        inst.zeta[v][h] = rng.uniform01() < 0.8 ? 1 : 0;
      }
    const auto solved = solver(inst);
    const auto best = oracle::matching_exhaustive(inst);
    if (solved.objective != best.objective) {
      res.passed = false;
      res.detail = "objective mismatch on trial " + std::to_string(trial) + ": solver " +
                   std::to_string(solved.objective) + " vs optimum " +
                   std::to_string(best.objective);
      return res;
    }
  }
  res.detail = "100 instances matched the enumeration optimum exactly";
  return res;
}

/// Backprop vs central finite differences on a small two-hidden-layer model.
inline SuiteResult run_gradient_suite(std::uint64_t seed = 3) {
  SuiteResult res{"gradients", true, ""};
  const ModelArch arch{4, {6, 5}, 3};
  const auto params = init_params(arch, seed);
  const auto ds = synth_dataset(3, 4, 10, seed + 1);
  std::vector<double> grad;
  loss_and_gradient(params, ds, grad);
  const auto fd = oracle::finite_difference_gradient(params, ds);
  double worst = 0.0;
  for (std::size_t i = 0; i < grad.size(); ++i)
    worst = std::max(worst, std::abs(grad[i] - fd[i]) / std::max(1e-3, std::abs(fd[i])));
  res.passed = worst < 1e-4;
  res.detail = "max relative error " + std::to_string(worst);
  return res;
}

/// Two synthetic concept-shift groups must be recovered exactly (ARI = 1).
inline SuiteResult run_clustering_suite(std::uint64_t seed = 4) {
  SuiteResult res{"clustering", true, ""};
  const int classes = 4, dims = 8, vehicles = 12;
  const auto ds = synth_dataset(classes, dims, 1200, seed);
  const ModelArch arch{dims, {16}, classes};
  const auto base = init_params(arch, seed + 1);

  std::vector<int> truth;
  std::vector<Update> updates;
  const std::size_t per = ds.size() / vehicles;
  for (int v = 0; v < vehicles; ++v) {
    LabeledDataset local;
    local.dims = dims;
    local.num_classes = classes;
    for (std::size_t i = v * per; i < (v + 1) * per; ++i) {
      local.labels.push_back(ds.labels[i]);
      const auto row = ds.row(i);
      local.features.insert(local.features.end(), row.begin(), row.end());
    }
    const int group = v < vehicles / 2 ? 0 : 1;
    truth.push_back(group);
    swap_labels(local, group == 0 ? std::vector<std::pair<int, int>>{{0, 1}}
                                  : std::vector<std::pair<int, int>>{{2, 3}});
    auto u = local_train(base, local, 1, 0.05, 10, seed + 100 + v);
    u.vehicle_id = v;
    updates.push_back(std::move(u));
  }
  const auto part = hierarchical_cluster(updates, 2);
  const double ari = oracle::adjusted_rand_index(part.assignment, truth);
  res.passed = ari == 1.0;
  res.detail = "ARI " + std::to_string(ari);
  return res;
}

inline std::vector<SuiteResult> run_suites(const std::vector<std::string>& names,
                                           std::uint64_t seed = 1) {
  std::vector<SuiteResult> out;
  auto want = [&](const std::string& n) {
    if (names.empty()) return true;
    for (const auto& name : names)
      if (name == n) return true;
    return false;
  };
  if (want("knapsack")) out.push_back(run_knapsack_suite(seed));
  if (want("matching")) out.push_back(run_matching_suite(seed + 1));
  if (want("gradients")) out.push_back(run_gradient_suite(seed + 2));
  if (want("clustering")) out.push_back(run_clustering_suite(seed + 3));
  return out;
}

}  // namespace cvfl::verify
