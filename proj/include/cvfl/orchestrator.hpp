#pragma once

// Round driver: refreshes mobility and channel state, selects heads, matches
// members, runs local training, aggregates per cluster and per model version
// at the MEC level, executes the update-clustering step with preference
// evaluation, and provides a vanilla-FL baseline that shares every random
// stream with the main run for paired comparison.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cvfl/channel.hpp"
#include "cvfl/config.hpp"
#include "cvfl/dataset.hpp"
#include "cvfl/errors.hpp"
#include "cvfl/learner.hpp"
#include "cvfl/mobility.hpp"
#include "cvfl/scheduler.hpp"

namespace cvfl {

namespace stream {
// Sub-stream tags for the train seed; rounds use their own index directly.
constexpr std::uint64_t kSynthTrain = 1, kSynthTest = 2, kPartition = 3;
constexpr std::uint64_t kCollectBase = 1'000'000;
constexpr std::uint64_t kClusterSample = 2'000'000;
constexpr std::uint64_t kBaselinePick = 3'000'000;
}  // namespace stream

struct VehicleState {
  VehicleKinematics kin;
  LabeledDataset data;
  int last_upload_round = 0;  // 0 = never uploaded
  int preferred_version = 0;
  std::vector<double> version_scores;  // accuracy of each model version on local data
};

struct RoundReport {
  int round = 0;
  std::vector<int> head_ids;
  int participants = 0;
  double objective_heads = 0.0;  // value of the head-selection objective
  double objective_match = 0.0;  // value of the matching objective
  int num_versions = 1;
  std::vector<double> version_accuracy;              // per version, mean over group test sets
  std::vector<double> version_loss;
  std::vector<std::vector<double>> group_accuracy;   // [version][group]
  int clusters_formed = 0;                           // set on the clustering round
  double solver_seconds = 0.0;                       // measured; never serialized
};

/// Stable-keyed JSON for rounds.jsonl. Timings are deliberately excluded so
/// identical seeds give byte-identical output.
inline nlohmann::ordered_json report_json(const RoundReport& r) {
  nlohmann::ordered_json j;
  j["round"] = r.round;
  j["heads"] = r.head_ids;
  j["participants"] = r.participants;
  j["objective_heads"] = r.objective_heads;
  j["objective_match"] = r.objective_match;
  j["num_versions"] = r.num_versions;
  j["accuracy"] = r.version_accuracy;
  j["loss"] = r.version_loss;
  j["group_accuracy"] = r.group_accuracy;
  j["clusters_formed"] = r.clusters_formed;
  return j;
}

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline std::string summary_csv_header() {
  return "round,heads,participants,num_versions,objective_heads,objective_match,"
         "mean_accuracy,mean_loss";
}

inline std::string summary_csv_row(const RoundReport& r) {
  std::string row = std::to_string(r.round) + "," + std::to_string(r.head_ids.size()) + "," +
                    std::to_string(r.participants) + "," + std::to_string(r.num_versions) + "," +
                    detail::format_double(r.objective_heads) + "," +
                    detail::format_double(r.objective_match) + ",";
  if (!r.version_accuracy.empty()) {
    double acc = 0.0, loss = 0.0;
    for (double a : r.version_accuracy) acc += a;
    for (double l : r.version_loss) loss += l;
    row += detail::format_double(acc / r.version_accuracy.size()) + "," +
           detail::format_double(loss / r.version_loss.size());
  } else {
    row += ",";
  }
  return row;
}

struct ClusteringOutcome {
  std::vector<int> contributors;  // vehicle ids whose raw updates were clustered
  ClusterPartition partition;
};

class Simulation {
 public:
  explicit Simulation(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();

    LabeledDataset train_all, test_all;
    if (cfg_.idx) {
      train_all = load_idx(cfg_.idx->train_images, cfg_.idx->train_labels);
      test_all = load_idx(cfg_.idx->test_images, cfg_.idx->test_labels);
    } else {
      train_all = synth_dataset(cfg_.synth.classes, cfg_.synth.dims, cfg_.synth.train_samples,
                                derive_seed(cfg_.seeds.data, stream::kSynthTrain),
                                cfg_.synth.separation);
      test_all = synth_dataset(cfg_.synth.classes, cfg_.synth.dims, cfg_.synth.test_samples,
                               derive_seed(cfg_.seeds.data, stream::kSynthTest),
                               cfg_.synth.separation);
    }

    auto part = partition_shards(train_all, cfg_.num_vehicles, cfg_.partition,
                                 derive_seed(cfg_.seeds.data, stream::kPartition));
    auto shifted = apply_concept_shift(std::move(part.vehicle_data), cfg_.concept_shift);
    group_of_vehicle_ = std::move(shifted.group_of_vehicle);

    const auto& swaps = cfg_.concept_shift.group_swaps;
    for (int g = 0; g < cfg_.concept_shift.num_groups(); ++g) {
      LabeledDataset t = test_all;
      if (g < static_cast<int>(swaps.size())) swap_labels(t, swaps[g]);
      group_tests_.push_back(std::move(t));
    }

    vehicles_.resize(cfg_.num_vehicles);
    for (int v = 0; v < cfg_.num_vehicles; ++v) vehicles_[v].data = std::move(shifted.data[v]);

    ModelArch arch;
    arch.input = static_cast<int>(train_all.dims);
    arch.hidden = cfg_.learner.hidden;
    arch.output = train_all.num_classes;
    models_.push_back(init_params(arch, derive_seed(cfg_.seeds.train, 0, 0)));
  }

  const ExperimentConfig& config() const { return cfg_; }
  const std::vector<ModelParams>& models() const { return models_; }
  const std::vector<VehicleState>& vehicles() const { return vehicles_; }
  const std::vector<LabeledDataset>& group_test_sets() const { return group_tests_; }
  const std::vector<int>& shift_groups() const { return group_of_vehicle_; }
  const std::optional<ClusteringOutcome>& clustering_outcome() const { return clustering_; }

  /// One scheduled training round (Steps 2-4 of the round loop).
  RoundReport run_round(int round) {
    RoundReport report;
    report.round = round;
    refresh_fleet(round);
    const auto realization =
        draw_gains(kinematics(), cfg_.radio, cfg_.mobility, derive_seed(cfg_.seeds.channel, round));

    const auto candidates = build_candidates(round, realization);

    const auto t0 = std::chrono::steady_clock::now();
    const auto selection = select_heads(candidates, cfg_.radio.total_rbs);
    report.head_ids = selection.head_ids;
    report.objective_heads = selection.objective;

    // Members and the matching instance. With several model versions in
    // circulation a member only considers heads training its preferred one,
    // and the pair weight is the member's measured accuracy of that version.
    std::vector<int> members;
    for (int v = 0; v < cfg_.num_vehicles; ++v)
      if (!selection.is_head(v)) members.push_back(v);

    ClusterAssignment match;
    std::vector<std::vector<double>> llt, upload_est;
    std::vector<double> head_deadline;
    const bool multi = models_.size() > 1;
    if (!selection.head_ids.empty() && !members.empty() && cfg_.n_max > 0) {
      const auto& heads = selection.head_ids;
      const double est_share = static_cast<double>(cfg_.v2v_rb_pool) / cfg_.n_max;
      MatchInstance inst;
      inst.n_max = cfg_.n_max;
      inst.weights.assign(members.size(), std::vector<double>(heads.size(), 0.0));
      inst.zeta.assign(members.size(), std::vector<int>(heads.size(), 0));
      llt.assign(members.size(), std::vector<double>(heads.size(), 0.0));
      upload_est = llt;
      std::vector<double> member_train(members.size());
      head_deadline.resize(heads.size());
      for (std::size_t h = 0; h < heads.size(); ++h)
        head_deadline[h] = candidates[heads[h]].t_train_s + cfg_.radio.delta_s;
      for (std::size_t m = 0; m < members.size(); ++m) {
        member_train[m] = candidates[members[m]].t_train_s;
        for (std::size_t h = 0; h < heads.size(); ++h) {
          const auto& vk = vehicles_[members[m]].kin;
          const auto& hk = vehicles_[heads[h]].kin;
          llt[m][h] = link_lifetime(vk, hk, cfg_.mobility);
          upload_est[m][h] =
              cfg_.radio.model_size_bits / (est_share * v2v_rate_per_rb(vk, hk, cfg_.radio));
          const int head_ver = version_of_head(heads[h]);
          const bool allowed = !multi || vehicles_[members[m]].preferred_version == head_ver;
          inst.weights[m][h] =
              multi ? vehicles_[members[m]].version_scores.at(head_ver) : 1.0;
          inst.zeta[m][h] = allowed ? 1 : 0;
        }
      }
      const auto zeta_time = compute_zeta(member_train, upload_est, llt, head_deadline);
      for (std::size_t m = 0; m < members.size(); ++m)
        for (std::size_t h = 0; h < heads.size(); ++h) inst.zeta[m][h] &= zeta_time[m][h];
      match = match_vehicles(inst);
    }
    report.objective_match = match.objective;
    report.solver_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    // Actual V2V shares, then the execution-time deadline check; a member
    // counts only if it finishes within both its link lifetime and the head
    // deadline under the share it really got.
    const auto shares = match.pairs.empty()
                            ? std::map<int, double>{}
                            : allocate_v2v(match, cfg_.v2v_rb_pool);
    std::vector<std::pair<int, int>> counted;  // (member vehicle id, head vehicle id)
    for (auto [m, h] : match.pairs) {
      const int vid = members[m];
      const int hid = selection.head_ids[h];
      const double t_up = cfg_.radio.model_size_bits /
                          (shares.at(m) * v2v_rate_per_rb(vehicles_[vid].kin,
                                                          vehicles_[hid].kin, cfg_.radio));
      const double elapsed = candidates[vid].t_train_s + t_up;
      if (elapsed <= std::min(llt[m][h], head_deadline[h])) counted.emplace_back(vid, hid);
    }

    for (auto [vid, hid] : counted)
      if (selection.is_head(vid)) throw DomainError("round: a head was matched as a member");

    report.participants = static_cast<int>(selection.head_ids.size() + counted.size());
    if (report.participants >
        static_cast<int>(selection.head_ids.size()) * (1 + cfg_.n_max))
      throw DomainError("round: participant count exceeds head capacity bound");

    // Training and two-level aggregation: each head aggregates its cluster
    // (itself plus counted members) into one update; the MEC then averages
    // the cluster updates per model version, weighted by cluster samples.
    if (cfg_.train_enabled && !selection.head_ids.empty()) {
      std::map<int, std::vector<Update>> cluster_updates;  // head id -> updates
      for (int hid : selection.head_ids) {
        auto u = train_vehicle(hid, version_of_head(hid), round);
        cluster_updates[hid].push_back(std::move(u));
      }
      for (auto [vid, hid] : counted) {
        auto u = train_vehicle(vid, version_of_head(hid), round);
        cluster_updates[hid].push_back(std::move(u));
      }
      for (std::size_t ver = 0; ver < models_.size(); ++ver) {
        std::vector<Update> mec_updates;
        for (int hid : selection.head_ids) {
          if (version_of_head(hid) != static_cast<int>(ver)) continue;
          const auto& ups = cluster_updates[hid];
          const ModelParams cluster_model = fedavg(models_[ver], ups);
          Update agg;
          agg.vehicle_id = hid;
          agg.model_version = static_cast<int>(ver);
          agg.num_samples = 0;
          for (const auto& u : ups) agg.num_samples += u.num_samples;
          agg.delta.resize(models_[ver].theta.size());
          for (std::size_t i = 0; i < agg.delta.size(); ++i)
            agg.delta[i] = cluster_model.theta[i] - models_[ver].theta[i];
          mec_updates.push_back(std::move(agg));
        }
        if (!mec_updates.empty()) models_[ver] = fedavg(models_[ver], mec_updates);
      }
    }

    for (int hid : selection.head_ids) vehicles_[hid].last_upload_round = round;
    for (auto [vid, hid] : counted) vehicles_[vid].last_upload_round = round;

    report.num_versions = static_cast<int>(models_.size());
    if (cfg_.train_enabled) evaluate_models(report);
    return report;
  }

  /// Update-clustering step (run right after round == clustering_round):
  /// collects raw updates from a seeded uniform sample of vehicles, splits
  /// them by cosine similarity, spawns one model per cluster and has every
  /// vehicle score the new versions to fix its preference.
  bool clustering_step(int round) {
    if (models_.size() != 1) {
      detail::warn("clustering skipped: several model versions already exist");
      return false;
    }
    if (!cfg_.train_enabled) {
      detail::warn("clustering skipped: training disabled");
      return false;
    }
    const int want = std::clamp(
        static_cast<int>(std::lround(cfg_.clustering_fraction * cfg_.num_vehicles)), 1,
        cfg_.num_vehicles);

    Rng sampler(derive_seed(cfg_.seeds.train, stream::kClusterSample, round));
    std::vector<Update> updates;
    std::vector<int> contributors;
    std::vector<bool> contributed(cfg_.num_vehicles, false);
    for (int pass = 0; pass < cfg_.collection_rounds; ++pass) {
      std::vector<int> ids(cfg_.num_vehicles);
      std::iota(ids.begin(), ids.end(), 0);
      sampler.shuffle(ids);
      ids.resize(want);
      std::sort(ids.begin(), ids.end());
      for (int v : ids) {
        if (contributed[v]) continue;
        contributed[v] = true;
        auto u = local_train(models_[0], vehicles_[v].data, cfg_.learner.epochs,
                             cfg_.learner.learning_rate, cfg_.learner.batch_size,
                             derive_seed(cfg_.seeds.train, stream::kCollectBase + pass, v + 1));
        u.vehicle_id = v;
        updates.push_back(std::move(u));
        contributors.push_back(v);
      }
    }
    if (updates.size() < 2) {
      detail::warn("clustering skipped: fewer than 2 raw updates collected");
      return false;
    }

    const auto partition = hierarchical_cluster(updates, cfg_.max_clusters);
    models_ = spawn_cluster_models(models_[0], updates, partition);
    clustering_ = ClusteringOutcome{std::move(contributors), partition};

    for (auto& vs : vehicles_) {
      vs.version_scores.resize(models_.size());
      for (std::size_t m = 0; m < models_.size(); ++m)
        vs.version_scores[m] = evaluate_accuracy(models_[m], vs.data);
      vs.preferred_version = 0;
      for (std::size_t m = 1; m < models_.size(); ++m)
        if (vs.version_scores[m] > vs.version_scores[vs.preferred_version])
          vs.preferred_version = static_cast<int>(m);
    }
    return true;
  }

  /// Vanilla FL round: a seeded random feasible subset of vehicles uploads
  /// directly to the MEC under the same RB budget; no V2V, no clustering.
  RoundReport run_baseline_round(int round) {
    RoundReport report;
    report.round = round;
    refresh_fleet(round);
    const auto realization =
        draw_gains(kinematics(), cfg_.radio, cfg_.mobility, derive_seed(cfg_.seeds.channel, round));
    const auto candidates = build_candidates(round, realization);

    Rng picker(derive_seed(cfg_.seeds.train, stream::kBaselinePick, round));
    std::vector<int> order(cfg_.num_vehicles);
    std::iota(order.begin(), order.end(), 0);
    picker.shuffle(order);

    std::vector<bool> taken(cfg_.radio.total_rbs, false);
    std::vector<int> selected;
    for (int v : order) {
      if (!candidates[v].cost) continue;
      auto prefix = detail::best_prefix(candidates[v].rb_rates_bps, taken,
                                        candidates[v].cost->r_min_bps);
      if (!prefix) continue;
      for (int q : *prefix) taken[q] = true;
      selected.push_back(v);
      report.objective_heads += candidates[v].diversity;
    }
    std::sort(selected.begin(), selected.end());
    report.head_ids = selected;
    report.participants = static_cast<int>(selected.size());

    if (cfg_.train_enabled && !selected.empty()) {
      std::vector<Update> updates;
      for (int v : selected) updates.push_back(train_vehicle(v, 0, round));
      models_[0] = fedavg(models_[0], updates);
    }
    for (int v : selected) vehicles_[v].last_upload_round = round;

    report.num_versions = static_cast<int>(models_.size());
    if (cfg_.train_enabled) evaluate_models(report);
    return report;
  }

 private:
  std::vector<VehicleKinematics> kinematics() const {
    std::vector<VehicleKinematics> kins;
    kins.reserve(vehicles_.size());
    for (const auto& vs : vehicles_) kins.push_back(vs.kin);
    return kins;
  }

  void refresh_fleet(int round) {
    if (cfg_.persistent_fleet && round > 1) {
      const double d = cfg_.mobility.coverage_diameter_m;
      for (auto& vs : vehicles_) {
        double p = std::fmod(vs.kin.position_m + vs.kin.signed_velocity() * cfg_.round_duration_s, d);
        if (p < 0.0) p += d;  // ring segment: vehicles re-enter on wraparound
        vs.kin.position_m = p;
      }
      return;
    }
    auto fleet =
        spawn_fleet(cfg_.mobility, cfg_.num_vehicles, derive_seed(cfg_.seeds.fleet, round));
    for (int v = 0; v < cfg_.num_vehicles; ++v) vehicles_[v].kin = fleet[v];
    if (cfg_.scenario == Scenario::parking_lot)
      for (auto& vs : vehicles_) vs.kin.speed_mps = 0.0;
  }

  std::vector<CandidateInfo> build_candidates(int round, const ChannelRealization& realization) {
    std::vector<DatasetMeta> metas;
    metas.reserve(vehicles_.size());
    for (const auto& vs : vehicles_) {
      const double age = vs.last_upload_round == 0
                             ? static_cast<double>(round)
                             : static_cast<double>(round - vs.last_upload_round);
      metas.push_back(dataset_meta(vs.data, age));
    }
    const auto diversity = diversity_index(metas, cfg_.diversity_weights);

    std::vector<CandidateInfo> candidates(vehicles_.size());
    for (int v = 0; v < cfg_.num_vehicles; ++v) {
      auto& c = candidates[v];
      c.vehicle_id = v;
      c.diversity = diversity[v];
      c.t_train_s = train_time_estimate(vehicles_[v].data.size(), cfg_.learner.epochs,
                                        cfg_.learner.train_cost_per_sample_s);
      c.standing_time_s = standing_time(vehicles_[v].kin, cfg_.mobility);
      const double budget =
          upload_budget(vehicles_[v].kin, c.t_train_s, cfg_.radio, cfg_.mobility);
      c.cost = min_rate_and_cost(v, budget, realization, cfg_.radio);
      c.rb_rates_bps = vehicle_rb_rates(realization, v, cfg_.radio);
    }
    return candidates;
  }

  int version_of_head(int head_vehicle) const {
    return models_.size() > 1 ? vehicles_[head_vehicle].preferred_version : 0;
  }

  Update train_vehicle(int vehicle, int version, int round) {
    auto u = local_train(models_[version], vehicles_[vehicle].data, cfg_.learner.epochs,
                         cfg_.learner.learning_rate, cfg_.learner.batch_size,
                         derive_seed(cfg_.seeds.train, round, vehicle + 1));
    u.vehicle_id = vehicle;
    return u;
  }

  void evaluate_models(RoundReport& report) {
    report.version_accuracy.clear();
    report.version_loss.clear();
    report.group_accuracy.clear();
    for (const auto& m : models_) {
      std::vector<double> per_group;
      double acc = 0.0, loss = 0.0;
      for (const auto& test : group_tests_) {
        per_group.push_back(evaluate_accuracy(m, test));
        acc += per_group.back();
        loss += model_loss(m, test);
      }
      report.version_accuracy.push_back(acc / group_tests_.size());
      report.version_loss.push_back(loss / group_tests_.size());
      report.group_accuracy.push_back(std::move(per_group));
    }
  }

  ExperimentConfig cfg_;
  std::vector<VehicleState> vehicles_;
  std::vector<ModelParams> models_;
  std::vector<LabeledDataset> group_tests_;
  std::vector<int> group_of_vehicle_;
  std::optional<ClusteringOutcome> clustering_;
};

struct ExperimentResult {
  std::vector<RoundReport> reports;
  std::vector<ModelParams> models;
};

using ReportCallback = std::function<void(const RoundReport&)>;

/// Full run: `rounds` scheduled rounds with the clustering step interposed
/// after round clustering_round (0 = never).
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       const ReportCallback& on_report = {}) {
  Simulation sim(cfg);
  ExperimentResult out;
  for (int round = 1; round <= cfg.rounds; ++round) {
    auto report = sim.run_round(round);
    if (round == cfg.clustering_round && sim.clustering_step(round))
      report.clusters_formed = static_cast<int>(sim.models().size());
    if (on_report) on_report(report);
    out.reports.push_back(std::move(report));
  }
  out.models = sim.models();
  return out;
}

/// Vanilla-FL counterpart on identical fleet/channel/data streams.
inline ExperimentResult run_vanilla_baseline(const ExperimentConfig& cfg,
                                             const ReportCallback& on_report = {}) {
  Simulation sim(cfg);
  ExperimentResult out;
  for (int round = 1; round <= cfg.rounds; ++round) {
    auto report = sim.run_baseline_round(round);
    if (on_report) on_report(report);
    out.reports.push_back(std::move(report));
  }
  out.models = sim.models();
  return out;
}

}  // namespace cvfl
