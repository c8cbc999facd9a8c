#pragma once

// Independent brute-force references used by the test suites and the
// `verify` command. Nothing here shares code with the solvers it checks:
// the knapsack and matching oracles enumerate, the gradient oracle uses
// central finite differences, and ARI scores partition agreement.

#include <cmath>
#include <cstdint>
#include <vector>

#include "cvfl/errors.hpp"
#include "cvfl/learner.hpp"
#include "cvfl/scheduler.hpp"

namespace cvfl::oracle {

struct KnapsackResult {
  double best_value = 0.0;
  std::vector<int> best_subset;  // item indices, ascending
};

/// Exhaustive 0/1 knapsack: maximize sum of values subject to total weight
/// <= capacity. Intended for small instances only.
inline KnapsackResult knapsack_exhaustive(const std::vector<double>& values,
                                          const std::vector<int>& weights, int capacity) {
  if (values.size() != weights.size()) throw DomainError("knapsack: size mismatch");
  const int n = static_cast<int>(values.size());
  if (n > 20) throw DomainError("knapsack: instance too large for enumeration");

  KnapsackResult best;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    double value = 0.0;
    long long weight = 0;
    for (int i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        value += values[i];
        weight += weights[i];
      }
    }
    if (weight > capacity) continue;
    if (value > best.best_value) {
      best.best_value = value;
      best.best_subset.clear();
      for (int i = 0; i < n; ++i)
        if (mask & (1u << i)) best.best_subset.push_back(i);
    }
  }
  return best;
}

namespace detail {

inline void match_recurse(const MatchInstance& inst, std::size_t v, std::vector<int>& load,
                          std::vector<int>& pick, double value, double& best,
                          std::vector<int>& best_pick) {
  if (v == inst.num_vehicles()) {
    if (value > best) {
      best = value;
      best_pick = pick;
    }
    return;
  }
  // leave vehicle v unmatched
  pick[v] = -1;
  match_recurse(inst, v + 1, load, pick, value, best, best_pick);
  for (std::size_t h = 0; h < inst.num_heads(); ++h) {
    if (inst.zeta[v][h] != 1 || inst.weights[v][h] <= 0.0) continue;
    if (load[h] >= inst.n_max) continue;
    load[h]++;
    pick[v] = static_cast<int>(h);
    match_recurse(inst, v + 1, load, pick, value + inst.weights[v][h], best, best_pick);
    load[h]--;
  }
}

}  // namespace detail

/// Exhaustive capacity-constrained matching optimum.
inline ClusterAssignment matching_exhaustive(const MatchInstance& inst) {
  inst.validate();
  if (inst.num_vehicles() > 10) throw DomainError("matching oracle: instance too large");
  std::vector<int> load(inst.num_heads(), 0);
  std::vector<int> pick(inst.num_vehicles(), -1), best_pick(inst.num_vehicles(), -1);
  double best = 0.0;
  detail::match_recurse(inst, 0, load, pick, 0.0, best, best_pick);

  ClusterAssignment out;
  for (std::size_t v = 0; v < best_pick.size(); ++v)
    if (best_pick[v] >= 0) out.pairs.emplace_back(static_cast<int>(v), best_pick[v]);
  for (auto [v, h] : out.pairs) out.objective += inst.weights[v][h];
  return out;
}

/// Central finite differences of the mean cross-entropy loss.
inline std::vector<double> finite_difference_gradient(const ModelParams& params,
                                                      const LabeledDataset& ds,
                                                      double step = 1e-6) {
  ModelParams work = params;
  std::vector<double> grad(params.theta.size());
  for (std::size_t i = 0; i < params.theta.size(); ++i) {
    const double orig = work.theta[i];
    work.theta[i] = orig + step;
    const double up = model_loss(work, ds);
    work.theta[i] = orig - step;
    const double down = model_loss(work, ds);
    work.theta[i] = orig;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

/// Adjusted Rand Index between two labelings of the same items. 1 means the
/// partitions agree up to relabeling; 0 is the chance level.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size() || a.empty()) throw DomainError("ari: label vectors must match");
  const auto relabel = [](const std::vector<int>& xs) {
    std::vector<int> ids;
    std::vector<int> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      auto it = std::find(ids.begin(), ids.end(), xs[i]);
      if (it == ids.end()) {
        ids.push_back(xs[i]);
        out[i] = static_cast<int>(ids.size()) - 1;
      } else {
        out[i] = static_cast<int>(it - ids.begin());
      }
    }
    return std::pair{out, static_cast<int>(ids.size())};
  };
  const auto [la, na] = relabel(a);
  const auto [lb, nb] = relabel(b);

  std::vector<std::vector<long long>> table(na, std::vector<long long>(nb, 0));
  for (std::size_t i = 0; i < la.size(); ++i) table[la[i]][lb[i]]++;

  const auto choose2 = [](long long x) { return static_cast<double>(x) * (x - 1) / 2.0; };
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (int i = 0; i < na; ++i) {
    long long row = 0;
    for (int j = 0; j < nb; ++j) {
      sum_ij += choose2(table[i][j]);
      row += table[i][j];
    }
    sum_a += choose2(row);
  }
  for (int j = 0; j < nb; ++j) {
    long long col = 0;
    for (int i = 0; i < na; ++i) col += table[i][j];
    sum_b += choose2(col);
  }
  const double total = choose2(static_cast<long long>(a.size()));
  const double expected = sum_a * sum_b / total;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // both partitions degenerate, they agree
  return (sum_ij - expected) / (max_index - expected);
}

}  // namespace cvfl::oracle
