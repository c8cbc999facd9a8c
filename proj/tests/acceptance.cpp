// Acceptance suite: one pass/fail line per criterion, each pinned to its
// stated tolerance and runtime budget. Exit code = number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "cvfl/oracles.hpp"
#include "cvfl/orchestrator.hpp"
#include "cvfl/verify.hpp"

using namespace cvfl;

namespace {

int failures = 0;

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void record(const std::string& name, bool passed, const std::string& detail) {
  std::printf("[%s] %-24s %s\n", passed ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!passed) ++failures;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

// ---- 1. matching solver vs exhaustive enumeration, exact ----

void matching_optimality() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  int exact = 0;
  const int trials = 200;
  for (int trial = 0; trial < trials; ++trial) {
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
    const auto solved = match_vehicles(inst);
    const auto best = oracle::matching_exhaustive(inst);
    if (solved.objective == best.objective) ++exact;  // tolerance 0
  }
  const double secs = seconds_since(t0);
  record("matching-optimality", exact == trials && secs < 10.0,
         std::to_string(exact) + "/200 exact, " + fmt(secs) + " s (< 10 s)");
}

// ---- 2. head selection feasibility and greedy quality ----

void head_selection_quality() {
  Rng rng(4077);
  int violations = 0;
  int single_best_losses = 0;
  double ratio_sum = 0.0;
  int ratio_count = 0;
  const int trials = 200;
  for (int trial = 0; trial < trials; ++trial) {
    const int total_rbs = 3 + rng.uniform_index(3);
    const int n = 2 + rng.uniform_index(11);  // <= 12 candidates
    const bool uniform_rates = trial % 2 == 0;
    std::vector<CandidateInfo> cands;
    std::vector<double> values;
    std::vector<int> weights;
    for (int i = 0; i < n; ++i) {
      CandidateInfo c;
      c.vehicle_id = i;
      c.diversity = rng.uniform(0.05, 1.0);
      c.rb_rates_bps.resize(total_rbs);
      for (double& r : c.rb_rates_bps) r = uniform_rates ? 1.0 : rng.uniform(0.5, 3.0);
      const int want_cost = 1 + rng.uniform_index(3);
      // a minimum rate the best prefix of size want_cost just reaches
      std::vector<double> sorted = c.rb_rates_bps;
      std::sort(sorted.rbegin(), sorted.rend());
      double r_min = 0.0;
      for (int q = 0; q < std::min(want_cost, total_rbs); ++q) r_min += sorted[q];
      RbCost cost;
      cost.r_min_bps = r_min;
      cost.cost = std::min(want_cost, total_rbs);
      c.cost = cost;
      values.push_back(c.diversity);
      weights.push_back(cost.cost);
      cands.push_back(std::move(c));
    }
    const auto sel = select_heads(cands, total_rbs);

    // (12c): disjoint RBs within the pool budget
    std::set<int> used;
    int total_used = 0;
    for (const auto& [id, rbs] : sel.rb_assignment) {
      for (int q : rbs) {
        if (q < 0 || q >= total_rbs || !used.insert(q).second) ++violations;
      }
      total_used += static_cast<int>(rbs.size());
      // (12b): the assigned RBs meet the head's minimum upload rate
      double sum = 0.0;
      for (int q : rbs) sum += cands[id].rb_rates_bps[q];
      if (sum < cands[id].cost->r_min_bps - 1e-12) ++violations;
    }
    if (total_used > total_rbs) ++violations;

    double best_ratio = -1.0, best_ratio_value = 0.0;
    for (const auto& c : cands) {
      const double r = c.diversity / c.cost->cost;
      if (r > best_ratio) {
        best_ratio = r;
        best_ratio_value = c.diversity;
      }
    }
    if (sel.objective + 1e-12 < best_ratio_value) ++single_best_losses;

    const auto best = oracle::knapsack_exhaustive(values, weights, total_rbs);
    if (best.best_value > 0.0) {
      ratio_sum += sel.objective / best.best_value;
      ++ratio_count;
    }
  }
  const double mean_ratio = ratio_sum / ratio_count;
  record("head-selection", violations == 0 && single_best_losses == 0 && mean_ratio >= 0.9,
         "violations " + std::to_string(violations) + ", single-best losses " +
             std::to_string(single_best_losses) + ", mean greedy/optimal " + fmt(mean_ratio) +
             " (>= 0.9)");
}

// ---- 3. Table III/IV structure under the published parameters ----

void table_structure() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<int> rb_grid = {2, 3, 4};
  const std::vector<double> size_grid = {160e3, 320e3, 640e3};
  const int repeats = 10;

  double heads_mean[3][3] = {};
  double parts_mean[3][3] = {};
  for (std::size_t ri = 0; ri < rb_grid.size(); ++ri) {
    for (std::size_t si = 0; si < size_grid.size(); ++si) {
      double heads_acc = 0.0, parts_acc = 0.0;
      for (int rep = 0; rep < repeats; ++rep) {
        auto cfg = freeway_preset();
        cfg.train_enabled = false;  // scheduling metrics only
        cfg.clustering_round = 0;
        cfg.radio.total_rbs = rb_grid[ri];
        cfg.radio.model_size_bits = size_grid[si];
        cfg.seeds = seeds_from_master(derive_seed(31337, ri * 3 + si, rep));
        const auto result = run_experiment(cfg);
        double h = 0.0, p = 0.0;
        for (const auto& r : result.reports) {
          h += static_cast<double>(r.head_ids.size());
          p += r.participants;
        }
        heads_acc += h / cfg.rounds;
        parts_acc += p / cfg.rounds;
      }
      heads_mean[ri][si] = heads_acc / repeats;
      parts_mean[ri][si] = parts_acc / repeats;
    }
  }

  bool monotone = true;
  for (int si = 0; si < 3; ++si)
    for (int ri = 0; ri + 1 < 3; ++ri)
      if (!(heads_mean[ri][si] < heads_mean[ri + 1][si])) monotone = false;

  double max_size_spread = 0.0;
  for (int ri = 0; ri < 3; ++ri) {
    double lo = heads_mean[ri][0], hi = heads_mean[ri][0];
    for (int si = 1; si < 3; ++si) {
      lo = std::min(lo, heads_mean[ri][si]);
      hi = std::max(hi, heads_mean[ri][si]);
    }
    max_size_spread = std::max(max_size_spread, hi - lo);
  }

  double worst_ratio_err = 0.0;
  for (int ri = 0; ri < 3; ++ri)
    for (int si = 0; si < 3; ++si) {
      const double expected = 3.0 * heads_mean[ri][si];  // heads * (1 + N_max)
      worst_ratio_err =
          std::max(worst_ratio_err, std::abs(parts_mean[ri][si] - expected) / expected);
    }

  const double secs = seconds_since(t0);
  record("table-structure",
         monotone && max_size_spread < 0.5 && worst_ratio_err < 0.15 && secs < 120.0,
         "heads@160k {" + fmt(heads_mean[0][0]) + ", " + fmt(heads_mean[1][0]) + ", " +
             fmt(heads_mean[2][0]) + "} monotone=" + (monotone ? "yes" : "no") +
             ", size spread " + fmt(max_size_spread) + " (< 0.5), participants/heads dev " +
             fmt(worst_ratio_err) + " (< 0.15), " + fmt(secs) + " s (< 120 s)");
}

// ---- 4. gradient correctness ----

void gradient_correctness() {
  const ModelArch arch{4, {6, 5}, 3};  // two hidden layers, 83 parameters
  const auto params = init_params(arch, 3);
  const auto ds = synth_dataset(3, 4, 10, 12);
  std::vector<double> grad;
  loss_and_gradient(params, ds, grad);
  const auto fd = oracle::finite_difference_gradient(params, ds);
  double worst = 0.0;
  for (std::size_t i = 0; i < grad.size(); ++i)
    worst = std::max(worst, std::abs(grad[i] - fd[i]) / std::max(1e-3, std::abs(fd[i])));
  record("gradient-correctness", worst < 1e-4,
         "max relative error " + fmt(worst) + " (< 1e-4), " +
             std::to_string(arch.param_count()) + " params");
}

// ---- 5. weighted-aggregation identity on a hand-computed case ----

void fedavg_identity() {
  ModelParams base;
  base.arch = ModelArch{1, {1}, 1};  // 4 parameters
  base.theta = {0.5, -0.5, 0.25, 1.0};

  auto mk = [](std::vector<double> d, std::size_t n) {
    Update u;
    u.delta = std::move(d);
    u.num_samples = n;
    u.model_version = 0;
    return u;
  };
  // weights 0.1, 0.3, 0.6 over deltas d1, d2, d3:
  //   theta' = base + 0.1*d1 + 0.3*d2 + 0.6*d3 = (0.0, 0.7, -0.15, 3.0)
  const auto out = fedavg(base, {mk({1, 0, 2, -1}, 100), mk({0, 2, -2, 1}, 300),
                                 mk({-1, 1, 0, 3}, 600)});
  const std::vector<double> expected = {0.0, 0.7, -0.15, 3.0};
  double worst = 0.0;
  for (std::size_t i = 0; i < expected.size(); ++i)
    worst = std::max(worst, std::abs(out.theta[i] - expected[i]));
  record("fedavg-identity", worst <= 1e-12, "max abs error " + fmt(worst) + " (<= 1e-12)");
}

// ---- 6. concept-shift recovery through the full pipeline ----

ExperimentConfig shift_config(std::uint64_t master) {
  ExperimentConfig c = parking_lot_preset();
  c.num_vehicles = 20;
  c.rounds = 12;
  c.clustering_round = 8;
  c.max_clusters = 2;
  c.clustering_fraction = 1.0;
  c.synth = SynthSpec{10, 20, 4000, 1000, 4.0};
  c.partition = PartitionSpec{800, 5, 40, 40};
  c.concept_shift.group_swaps = {{{1, 7}}, {{3, 5}}};
  c.learner.learning_rate = 0.1;
  c.seeds = seeds_from_master(master);
  return c;
}

LabeledDataset swapped_class_subset(const LabeledDataset& ds) {
  static const std::set<int> swapped = {1, 7, 3, 5};
  LabeledDataset out;
  out.dims = ds.dims;
  out.num_classes = ds.num_classes;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!swapped.count(ds.labels[i])) continue;
    out.labels.push_back(ds.labels[i]);
    const auto row = ds.row(i);
    out.features.insert(out.features.end(), row.begin(), row.end());
  }
  return out;
}

void concept_shift_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  int ari_hits = 0, gain_hits = 0;
  const int seeds = 10;
  for (int s = 0; s < seeds; ++s) {
    const auto cfg = shift_config(derive_seed(777, 42, s));
    Simulation sim(cfg);
    for (int r = 1; r <= cfg.clustering_round; ++r) sim.run_round(r);

    std::vector<LabeledDataset> subsets;
    for (const auto& test : sim.group_test_sets()) subsets.push_back(swapped_class_subset(test));

    double pre = 0.0;
    for (const auto& sub : subsets) pre += evaluate_accuracy(sim.models()[0], sub);
    pre /= subsets.size();

    if (!sim.clustering_step(cfg.clustering_round)) continue;
    const auto& outcome = *sim.clustering_outcome();
    std::vector<int> truth;
    for (int v : outcome.contributors) truth.push_back(sim.shift_groups()[v]);
    if (oracle::adjusted_rand_index(outcome.partition.assignment, truth) == 1.0) ++ari_hits;

    for (int r = cfg.clustering_round + 1; r <= cfg.rounds; ++r) sim.run_round(r);

    // per group: the version its vehicles prefer by majority
    double post = 0.0;
    for (std::size_t g = 0; g < subsets.size(); ++g) {
      std::vector<int> votes(sim.models().size(), 0);
      for (int v = 0; v < cfg.num_vehicles; ++v)
        if (sim.shift_groups()[v] == static_cast<int>(g))
          votes[sim.vehicles()[v].preferred_version]++;
      int majority = 0;
      for (std::size_t m = 1; m < votes.size(); ++m)
        if (votes[m] > votes[majority]) majority = static_cast<int>(m);
      post += evaluate_accuracy(sim.models()[majority], subsets[g]);
    }
    post /= subsets.size();
    if (post > pre) ++gain_hits;
  }
  const double secs = seconds_since(t0);
  record("concept-shift-recovery",
         ari_hits >= 9 && gain_hits >= 8 && secs < 300.0,
         "ARI=1 in " + std::to_string(ari_hits) + "/10 (>= 9), swapped-class gain in " +
             std::to_string(gain_hits) + "/10 (>= 8), " + fmt(secs) + " s (< 300 s)");
}

// ---- 7. paired comparison against vanilla FL ----

void paired_comparison() {
  double cvfl_parts = 0.0, vanilla_parts = 0.0;
  double cvfl_acc = 0.0, vanilla_acc = 0.0;
  const int seeds = 5;
  for (int s = 0; s < seeds; ++s) {
    auto cfg = freeway_preset();
    cfg.seeds = seeds_from_master(derive_seed(555, 7, s));
    const auto clustered = run_experiment(cfg);
    const auto vanilla = run_vanilla_baseline(cfg);
    for (const auto& r : clustered.reports) cvfl_parts += r.participants;
    for (const auto& r : vanilla.reports) vanilla_parts += r.participants;
    auto mean_acc = [](const RoundReport& r) {
      double acc = 0.0;
      for (double a : r.version_accuracy) acc += a;
      return acc / r.version_accuracy.size();
    };
    cvfl_acc += mean_acc(clustered.reports.back());
    vanilla_acc += mean_acc(vanilla.reports.back());
  }
  cvfl_parts /= seeds * 50.0;
  vanilla_parts /= seeds * 50.0;
  cvfl_acc /= seeds;
  vanilla_acc /= seeds;
  record("paired-comparison",
         cvfl_parts > vanilla_parts && cvfl_acc - vanilla_acc >= 0.0,
         "participants/round " + fmt(cvfl_parts) + " vs " + fmt(vanilla_parts) +
             ", final accuracy " + fmt(cvfl_acc) + " vs " + fmt(vanilla_acc) + " (diff " +
             fmt(cvfl_acc - vanilla_acc) + " >= 0)");
}

// ---- 8. byte-identical reports under equal seeds ----

void determinism() {
  bool ok = true;
  std::string detail;
  for (const std::string name : {"freeway", "parking-lot"}) {
    auto dump = [&] {
      std::string all;
      for (const auto& r : run_experiment(preset(name)).reports)
        all += report_json(r).dump() + "\n";
      return all;
    };
    const std::string a = dump();
    const std::string b = dump();
    if (a != b) {
      ok = false;
      detail += name + " differs; ";
    } else {
      detail += name + " identical (" + std::to_string(a.size()) + " bytes); ";
    }
  }
  record("determinism", ok, detail);
}

// ---- 9. mobility formula fixtures ----

void mobility_fixtures() {
  MobilityConfig cfg;
  cfg.coverage_diameter_m = 2000.0;
  cfg.transmission_range_m = 300.0;
  cfg.lanes = {{60, 80, +1}};

  auto vehicle = [](double pos, double speed, int dir = +1) {
    VehicleKinematics v;
    v.position_m = pos;
    v.speed_mps = speed;
    v.direction = dir;
    return v;
  };

  double worst = 0.0;
  worst = std::max(worst, std::abs(standing_time(vehicle(2000, 25), cfg) - 0.0));
  worst = std::max(worst, std::abs(standing_time(vehicle(0, 20), cfg) - 100.0));
  worst = std::max(worst, std::abs(standing_time(vehicle(1500, 25), cfg) - 20.0));
  worst = std::max(worst,
                   std::abs(link_lifetime(vehicle(0, 30), vehicle(100, 20), cfg) - 40.0));
  worst = std::max(worst, std::abs(link_lifetime(vehicle(0, 20, +1), vehicle(200, 20, -1), cfg) -
                                   12.5));
  const bool inf_ok =
      std::isinf(link_lifetime(vehicle(0, 25), vehicle(100, 25), cfg));
  record("mobility-fixtures", worst <= 1e-9 && inf_ok,
         "max abs error " + fmt(worst) + " (<= 1e-9), co-moving link lifetime infinite: " +
             (inf_ok ? "yes" : "no"));
}

}  // namespace

int main() {
  std::printf("CVFL acceptance suite\n");
  matching_optimality();
  head_selection_quality();
  table_structure();
  gradient_correctness();
  fedavg_identity();
  concept_shift_recovery();
  paired_comparison();
  determinism();
  mobility_fixtures();
  std::printf("%d/9 criteria passed\n", 9 - failures);
  return failures;
}
