#pragma once

// The two per-round optimization problems: greedy cluster-head selection
// with RB allocation (a knapsack heuristic ordered by diversity/cost), and
// exact capacity-constrained max-weight matching of the remaining vehicles
// to heads via min-cost max-flow.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cvfl/channel.hpp"
#include "cvfl/errors.hpp"

namespace cvfl {

struct CandidateInfo {
  int vehicle_id = 0;
  double diversity = 0.0;      // I_k
  double t_train_s = 0.0;
  double standing_time_s = 0.0;
  std::optional<RbCost> cost;  // infeasible candidates carry no cost
  std::vector<double> rb_rates_bps;  // this vehicle's achievable rate per RB
};

struct HeadSelection {
  std::vector<int> head_ids;                     // sorted ascending
  std::map<int, std::vector<int>> rb_assignment; // head id -> RBs (disjoint)
  double objective = 0.0;                        // sum of selected diversities

  bool is_head(int vehicle_id) const {
    return std::binary_search(head_ids.begin(), head_ids.end(), vehicle_id);
  }
};

namespace detail {

/// Best-rate prefix of the free RBs that reaches r_min; empty optional when
/// even the whole remaining pool falls short.
inline std::optional<std::vector<int>> best_prefix(const std::vector<double>& rb_rates,
                                                   const std::vector<bool>& taken,
                                                   double r_min_bps) {
  std::vector<int> pool;
  for (std::size_t q = 0; q < taken.size(); ++q)
    if (!taken[q]) pool.push_back(static_cast<int>(q));
  std::stable_sort(pool.begin(), pool.end(),
                   [&](int a, int b) { return rb_rates[a] > rb_rates[b]; });
  double rate = 0.0;
  std::vector<int> chosen;
  for (int q : pool) {
    rate += rb_rates[q];
    chosen.push_back(q);
    if (rate >= r_min_bps) return chosen;
  }
  return std::nullopt;
}

}  // namespace detail

/// Greedy knapsack pass: candidates ordered by diversity/cost (ties: higher
/// diversity, then lower id); each in turn takes the best-rate prefix of the
/// *remaining* RB pool if that prefix still meets its minimum rate. The loop
/// stops once the pool is exhausted or no candidate is left, so it always
/// terminates even when nobody fits.
inline HeadSelection select_heads(const std::vector<CandidateInfo>& candidates, int total_rbs) {
  HeadSelection sel;
  if (total_rbs < 0) throw ConfigError("select_heads: negative RB pool");

  std::vector<const CandidateInfo*> feasible;
  for (const auto& c : candidates) {
    if (!c.cost) continue;
    if (c.rb_rates_bps.size() < static_cast<std::size_t>(total_rbs))
      throw ConfigError("select_heads: candidate is missing per-RB rates");
    feasible.push_back(&c);
  }
  std::sort(feasible.begin(), feasible.end(), [](const CandidateInfo* a, const CandidateInfo* b) {
    const double ra = a->diversity / a->cost->cost;
    const double rb = b->diversity / b->cost->cost;
    if (ra != rb) return ra > rb;
    if (a->diversity != b->diversity) return a->diversity > b->diversity;
    return a->vehicle_id < b->vehicle_id;
  });

  std::vector<bool> taken(total_rbs, false);
  int remaining = total_rbs;
  for (const CandidateInfo* cand : feasible) {
    if (remaining == 0) break;
    auto chosen = detail::best_prefix(cand->rb_rates_bps, taken, cand->cost->r_min_bps);
    if (!chosen) continue;  // remaining pool can no longer serve this one

    for (int q : *chosen) taken[q] = true;
    remaining -= static_cast<int>(chosen->size());
    sel.head_ids.push_back(cand->vehicle_id);
    sel.rb_assignment[cand->vehicle_id] = std::move(*chosen);
    sel.objective += cand->diversity;
  }
  std::sort(sel.head_ids.begin(), sel.head_ids.end());
  return sel;
}

/// Pair feasibility under the two time constraints: the member must finish
/// training and uploading within the link lifetime to the head and within
/// the head's collection deadline.
inline std::vector<std::vector<int>> compute_zeta(
    const std::vector<double>& member_train_s,
    const std::vector<std::vector<double>>& upload_s,
    const std::vector<std::vector<double>>& link_lifetime_s,
    const std::vector<double>& head_deadline_s) {
  const std::size_t nv = member_train_s.size();
  const std::size_t nh = head_deadline_s.size();
  std::vector<std::vector<int>> zeta(nv, std::vector<int>(nh, 0));
  for (std::size_t v = 0; v < nv; ++v) {
    if (upload_s.at(v).size() != nh || link_lifetime_s.at(v).size() != nh)
      throw ConfigError("compute_zeta: ragged inputs");
    for (std::size_t h = 0; h < nh; ++h) {
      const double elapsed = member_train_s[v] + upload_s[v][h];
      zeta[v][h] =
          (elapsed <= link_lifetime_s[v][h] && elapsed <= head_deadline_s[h]) ? 1 : 0;
    }
  }
  return zeta;
}

struct MatchInstance {
  std::vector<std::vector<double>> weights;  // R[v][h] in [0, 1]
  std::vector<std::vector<int>> zeta;        // 0/1 feasibility per pair
  int n_max = 1;                             // capacity per head

  std::size_t num_vehicles() const { return weights.size(); }
  std::size_t num_heads() const { return weights.empty() ? 0 : weights.front().size(); }

  void validate() const {
    if (n_max < 0) throw ConfigError("match: negative capacity");
    if (zeta.size() != weights.size()) throw ConfigError("match: zeta/weights shape mismatch");
    for (std::size_t v = 0; v < weights.size(); ++v) {
      if (weights[v].size() != num_heads() || zeta[v].size() != num_heads())
        throw ConfigError("match: ragged matrix");
      for (std::size_t h = 0; h < weights[v].size(); ++h) {
        if (weights[v][h] < 0.0 || weights[v][h] > 1.0)
          throw ConfigError("match: weight outside [0, 1]");
        if (zeta[v][h] != 0 && zeta[v][h] != 1) throw ConfigError("match: zeta not binary");
      }
    }
  }
};

struct ClusterAssignment {
  std::vector<std::pair<int, int>> pairs;  // (vehicle, head), lexicographic
  double objective = 0.0;
};

namespace detail {

struct FlowEdge {
  int to;
  int cap;
  double cost;
  int rev;  // index of the reverse edge in graph[to]
};

class MinCostFlow {
 public:
  explicit MinCostFlow(int n) : graph_(n) {}

  void add_edge(int from, int to, int cap, double cost) {
    graph_[from].push_back({to, cap, cost, static_cast<int>(graph_[to].size())});
    graph_[to].push_back({from, 0, -cost, static_cast<int>(graph_[from].size()) - 1});
  }

  /// Augments unit flows along successive shortest paths while the path cost
  /// stays negative; with edge costs -R this maximizes the matched weight.
  /// Bellman-Ford with a fixed relaxation order keeps the result
  /// deterministic for a given construction order.
  double run(int source, int sink) {
    double total_cost = 0.0;
    while (true) {
      const int n = static_cast<int>(graph_.size());
      std::vector<double> dist(n, std::numeric_limits<double>::infinity());
      std::vector<int> prev_node(n, -1), prev_edge(n, -1);
      dist[source] = 0.0;
      for (int iter = 0; iter < n; ++iter) {
        bool changed = false;
        for (int u = 0; u < n; ++u) {
          if (!std::isfinite(dist[u])) continue;
          for (std::size_t e = 0; e < graph_[u].size(); ++e) {
            const auto& edge = graph_[u][e];
            if (edge.cap <= 0) continue;
            const double nd = dist[u] + edge.cost;
            if (nd < dist[edge.to]) {
              dist[edge.to] = nd;
              prev_node[edge.to] = u;
              prev_edge[edge.to] = static_cast<int>(e);
              changed = true;
            }
          }
        }
        if (!changed) break;
      }
      if (!std::isfinite(dist[sink]) || dist[sink] >= 0.0) break;
      for (int v = sink; v != source; v = prev_node[v]) {
        auto& edge = graph_[prev_node[v]][prev_edge[v]];
        edge.cap -= 1;
        graph_[edge.to][edge.rev].cap += 1;
      }
      total_cost += dist[sink];
    }
    return total_cost;
  }

  const std::vector<std::vector<FlowEdge>>& graph() const { return graph_; }

 private:
  std::vector<std::vector<FlowEdge>> graph_;
};

}  // namespace detail

/// Exact solution of the capacity-constrained max-weight matching: vehicles
/// have capacity 1, heads capacity n_max, and only pairs with zeta = 1 and
/// positive weight become edges (so zero-weight pairs are never selected).
inline ClusterAssignment match_vehicles(const MatchInstance& inst) {
  inst.validate();
  const int nv = static_cast<int>(inst.num_vehicles());
  const int nh = static_cast<int>(inst.num_heads());

  ClusterAssignment out;
  if (nv == 0 || nh == 0 || inst.n_max == 0) return out;

  const int source = 0;
  const int sink = nv + nh + 1;
  detail::MinCostFlow flow(nv + nh + 2);
  for (int v = 0; v < nv; ++v) flow.add_edge(source, 1 + v, 1, 0.0);
  for (int v = 0; v < nv; ++v)
    for (int h = 0; h < nh; ++h)
      if (inst.zeta[v][h] == 1 && inst.weights[v][h] > 0.0)
        flow.add_edge(1 + v, 1 + nv + h, 1, -inst.weights[v][h]);
  for (int h = 0; h < nh; ++h) flow.add_edge(1 + nv + h, sink, inst.n_max, 0.0);

  flow.run(source, sink);

  // Saturated vehicle->head edges are the selected pairs.
  for (int v = 0; v < nv; ++v) {
    for (const auto& edge : flow.graph()[1 + v]) {
      if (edge.to >= 1 + nv && edge.to < 1 + nv + nh && edge.cost < 0.0 && edge.cap == 0) {
        out.pairs.emplace_back(v, edge.to - 1 - nv);
      }
    }
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  for (auto [v, h] : out.pairs) out.objective += inst.weights[v][h];
  return out;
}

/// Uniform split of the V2V RB pool inside each cluster: floor share for
/// everyone, the remainder to the lowest vehicle indices. Clusters larger
/// than the pool time-share it, which shows up as a fractional share.
inline std::map<int, double> allocate_v2v(const ClusterAssignment& assignment, int rb_pool) {
  if (rb_pool < 1) throw ConfigError("allocate_v2v: pool must be >= 1");
  std::map<int, std::vector<int>> clusters;  // head -> member vehicles (sorted)
  for (auto [v, h] : assignment.pairs) clusters[h].push_back(v);

  std::map<int, double> share;
  for (auto& [h, members] : clusters) {
    std::sort(members.begin(), members.end());
    const int m = static_cast<int>(members.size());
    if (m > rb_pool) {
      const double frac = static_cast<double>(rb_pool) / m;
      for (int v : members) share[v] = frac;
      continue;
    }
    const int base = rb_pool / m;
    const int extra = rb_pool % m;
    for (int i = 0; i < m; ++i) share[members[i]] = base + (i < extra ? 1 : 0);
  }
  return share;
}

// ---- JSON round-trips for golden tests ----

inline void to_json(nlohmann::ordered_json& j, const MatchInstance& inst) {
  j = nlohmann::ordered_json{
      {"weights", inst.weights}, {"zeta", inst.zeta}, {"n_max", inst.n_max}};
}

inline void from_json(const nlohmann::json& j, MatchInstance& inst) {
  j.at("weights").get_to(inst.weights);
  j.at("zeta").get_to(inst.zeta);
  j.at("n_max").get_to(inst.n_max);
}

inline void to_json(nlohmann::ordered_json& j, const ClusterAssignment& a) {
  j = nlohmann::ordered_json{{"pairs", a.pairs}, {"objective", a.objective}};
}

inline void from_json(const nlohmann::json& j, ClusterAssignment& a) {
  j.at("pairs").get_to(a.pairs);
  j.at("objective").get_to(a.objective);
}

}  // namespace cvfl
