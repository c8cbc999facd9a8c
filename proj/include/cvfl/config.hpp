#pragma once

// Experiment configuration: the JSON schema, validation, and the two
// shipped scenario presets. Four named seeds (fleet/channel/data/train)
// drive every random stream so ablations can hold subsystems fixed.

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cvfl/channel.hpp"
#include "cvfl/dataset.hpp"
#include "cvfl/errors.hpp"
#include "cvfl/mobility.hpp"

namespace cvfl {

struct Seeds {
  std::uint64_t fleet = 1;
  std::uint64_t channel = 2;
  std::uint64_t data = 3;
  std::uint64_t train = 4;
};

/// Derive the four named seeds from one master seed.
inline Seeds seeds_from_master(std::uint64_t master) {
  return {derive_seed(master, 101), derive_seed(master, 202), derive_seed(master, 303),
          derive_seed(master, 404)};
}

struct SynthSpec {
  int classes = 10;
  int dims = 20;
  int train_samples = 7000;
  int test_samples = 1000;
  double separation = 4.0;
};

/// Optional file-backed dataset; when set it replaces the synthetic one.
struct IdxPaths {
  std::string train_images, train_labels, test_images, test_labels;
};

struct LearnerConfig {
  std::vector<int> hidden = {64, 64};
  double learning_rate = 0.05;
  int batch_size = 10;
  int epochs = 1;
  double train_cost_per_sample_s = 1e-4;

  void validate() const {
    if (hidden.empty()) throw ConfigError("learner: need at least one hidden layer");
    for (int w : hidden)
      if (w < 1) throw ConfigError("learner: hidden width must be >= 1");
    if (learning_rate < 0) throw ConfigError("learner: negative learning rate");
    if (batch_size < 1) throw ConfigError("learner: batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("learner: negative epochs");
    if (train_cost_per_sample_s < 0) throw ConfigError("learner: negative per-sample cost");
  }
};

enum class Scenario { parking_lot, freeway };

inline std::string scenario_name(Scenario s) {
  return s == Scenario::parking_lot ? "parking-lot" : "freeway";
}

inline Scenario scenario_from_name(const std::string& name) {
  if (name == "parking-lot" || name == "parking_lot") return Scenario::parking_lot;
  if (name == "freeway") return Scenario::freeway;
  throw ConfigError("unknown scenario '" + name + "' (expected parking-lot or freeway)");
}

struct ExperimentConfig {
  int num_vehicles = 30;
  int rounds = 50;
  int clustering_round = 25;  // 0 disables the update-clustering step
  int max_clusters = 2;
  int n_max = 2;
  Scenario scenario = Scenario::freeway;
  double clustering_fraction = 1.0;
  int collection_rounds = 1;
  int v2v_rb_pool = 4;
  bool train_enabled = true;
  bool persistent_fleet = false;
  double round_duration_s = 10.0;

  Seeds seeds;
  MobilityConfig mobility;
  RadioConfig radio;
  SynthSpec synth;
  PartitionSpec partition;
  ConceptShiftSpec concept_shift;
  LearnerConfig learner;
  DiversityWeights diversity_weights;
  std::optional<IdxPaths> idx;

  void validate() const {
    if (num_vehicles < 1) throw ConfigError("config: need at least one vehicle");
    if (rounds < 1) throw ConfigError("config: need at least one round");
    if (clustering_round != 0 && (clustering_round < 1 || clustering_round > rounds))
      throw ConfigError("config: clustering_round must be 0 or in [1, rounds]");
    if (max_clusters < 1) throw ConfigError("config: max_clusters must be >= 1");
    if (n_max < 0) throw ConfigError("config: negative cluster capacity");
    if (clustering_fraction <= 0.0 || clustering_fraction > 1.0)
      throw ConfigError("config: clustering_fraction must be in (0, 1]");
    if (collection_rounds < 1) throw ConfigError("config: collection_rounds must be >= 1");
    if (v2v_rb_pool < 1) throw ConfigError("config: v2v_rb_pool must be >= 1");
    if (round_duration_s <= 0) throw ConfigError("config: round duration must be > 0");
    mobility.validate();
    radio.validate();
    learner.validate();
    diversity_weights.validate();
    if (!idx) {
      if (synth.classes < 2 || synth.dims < 1 || synth.train_samples < synth.classes ||
          synth.test_samples < 1)
        throw ConfigError("config: invalid synthetic dataset spec");
    }
  }
};

// ---- JSON (ordered so the config echo is byte-stable) ----

inline void to_json(nlohmann::ordered_json& j, const Seeds& s) {
  j = {{"fleet", s.fleet}, {"channel", s.channel}, {"data", s.data}, {"train", s.train}};
}
inline void from_json(const nlohmann::json& j, Seeds& s) {
  s.fleet = j.value("fleet", s.fleet);
  s.channel = j.value("channel", s.channel);
  s.data = j.value("data", s.data);
  s.train = j.value("train", s.train);
}

inline void to_json(nlohmann::ordered_json& j, const LaneSpec& l) {
  j = {{"v_lo_kmh", l.v_lo_kmh}, {"v_hi_kmh", l.v_hi_kmh}, {"direction", l.direction}};
}
inline void from_json(const nlohmann::json& j, LaneSpec& l) {
  l.v_lo_kmh = j.value("v_lo_kmh", l.v_lo_kmh);
  l.v_hi_kmh = j.value("v_hi_kmh", l.v_hi_kmh);
  l.direction = j.value("direction", l.direction);
}

inline void to_json(nlohmann::ordered_json& j, const MobilityConfig& m) {
  j = {{"coverage_diameter_m", m.coverage_diameter_m},
       {"transmission_range_m", m.transmission_range_m},
       {"lanes", m.lanes},
       {"vehicle_density_per_m", m.vehicle_density_per_m}};
}
inline void from_json(const nlohmann::json& j, MobilityConfig& m) {
  m.coverage_diameter_m = j.value("coverage_diameter_m", m.coverage_diameter_m);
  m.transmission_range_m = j.value("transmission_range_m", m.transmission_range_m);
  if (j.contains("lanes")) m.lanes = j.at("lanes").get<std::vector<LaneSpec>>();
  m.vehicle_density_per_m = j.value("vehicle_density_per_m", m.vehicle_density_per_m);
}

inline void to_json(nlohmann::ordered_json& j, const PathLossModel& p) {
  j = {{"exponent", p.exponent}, {"ref_loss_db_1m", p.ref_loss_db_1m}};
}
inline void from_json(const nlohmann::json& j, PathLossModel& p) {
  p.exponent = j.value("exponent", p.exponent);
  p.ref_loss_db_1m = j.value("ref_loss_db_1m", p.ref_loss_db_1m);
}

inline void to_json(nlohmann::ordered_json& j, const RadioConfig& r) {
  j = {{"rb_bandwidth_hz", r.rb_bandwidth_hz},
       {"transmit_power_w", r.transmit_power_w},
       {"noise_dbm", r.noise_dbm},
       {"shadowing_sigma_db", r.shadowing_sigma_db},
       {"antenna_gain_dbi", r.antenna_gain_dbi},
       {"antenna_height_m", r.antenna_height_m},
       {"pathloss", r.pathloss},
       {"total_rbs", r.total_rbs},
       {"model_size_bits", r.model_size_bits},
       {"t_agg_s", r.t_agg_s},
       {"delta_s", r.delta_s}};
}
inline void from_json(const nlohmann::json& j, RadioConfig& r) {
  r.rb_bandwidth_hz = j.value("rb_bandwidth_hz", r.rb_bandwidth_hz);
  r.transmit_power_w = j.value("transmit_power_w", r.transmit_power_w);
  r.noise_dbm = j.value("noise_dbm", r.noise_dbm);
  r.shadowing_sigma_db = j.value("shadowing_sigma_db", r.shadowing_sigma_db);
  r.antenna_gain_dbi = j.value("antenna_gain_dbi", r.antenna_gain_dbi);
  r.antenna_height_m = j.value("antenna_height_m", r.antenna_height_m);
  if (j.contains("pathloss")) j.at("pathloss").get_to(r.pathloss);
  r.total_rbs = j.value("total_rbs", r.total_rbs);
  r.model_size_bits = j.value("model_size_bits", r.model_size_bits);
  r.t_agg_s = j.value("t_agg_s", r.t_agg_s);
  r.delta_s = j.value("delta_s", r.delta_s);
}

inline void to_json(nlohmann::ordered_json& j, const SynthSpec& s) {
  j = {{"classes", s.classes},
       {"dims", s.dims},
       {"train_samples", s.train_samples},
       {"test_samples", s.test_samples},
       {"separation", s.separation}};
}
inline void from_json(const nlohmann::json& j, SynthSpec& s) {
  s.classes = j.value("classes", s.classes);
  s.dims = j.value("dims", s.dims);
  s.train_samples = j.value("train_samples", s.train_samples);
  s.test_samples = j.value("test_samples", s.test_samples);
  s.separation = j.value("separation", s.separation);
}

inline void to_json(nlohmann::ordered_json& j, const PartitionSpec& p) {
  j = {{"num_shards", p.num_shards},
       {"shard_size", p.shard_size},
       {"min_shards", p.min_shards},
       {"max_shards", p.max_shards}};
}
inline void from_json(const nlohmann::json& j, PartitionSpec& p) {
  p.num_shards = j.value("num_shards", p.num_shards);
  p.shard_size = j.value("shard_size", p.shard_size);
  p.min_shards = j.value("min_shards", p.min_shards);
  p.max_shards = j.value("max_shards", p.max_shards);
}

inline void to_json(nlohmann::ordered_json& j, const ConceptShiftSpec& c) {
  j = {{"group_swaps", c.group_swaps}};
}
inline void from_json(const nlohmann::json& j, ConceptShiftSpec& c) {
  if (j.contains("group_swaps"))
    c.group_swaps = j.at("group_swaps").get<std::vector<std::vector<std::pair<int, int>>>>();
}

inline void to_json(nlohmann::ordered_json& j, const LearnerConfig& l) {
  j = {{"hidden", l.hidden},
       {"learning_rate", l.learning_rate},
       {"batch_size", l.batch_size},
       {"epochs", l.epochs},
       {"train_cost_per_sample_s", l.train_cost_per_sample_s}};
}
inline void from_json(const nlohmann::json& j, LearnerConfig& l) {
  if (j.contains("hidden")) l.hidden = j.at("hidden").get<std::vector<int>>();
  l.learning_rate = j.value("learning_rate", l.learning_rate);
  l.batch_size = j.value("batch_size", l.batch_size);
  l.epochs = j.value("epochs", l.epochs);
  l.train_cost_per_sample_s = j.value("train_cost_per_sample_s", l.train_cost_per_sample_s);
}

inline void to_json(nlohmann::ordered_json& j, const DiversityWeights& w) {
  j = {{"diversity", w.diversity}, {"size", w.size}, {"age", w.age}};
}
inline void from_json(const nlohmann::json& j, DiversityWeights& w) {
  w.diversity = j.value("diversity", w.diversity);
  w.size = j.value("size", w.size);
  w.age = j.value("age", w.age);
}

inline void to_json(nlohmann::ordered_json& j, const IdxPaths& p) {
  j = {{"train_images", p.train_images},
       {"train_labels", p.train_labels},
       {"test_images", p.test_images},
       {"test_labels", p.test_labels}};
}
inline void from_json(const nlohmann::json& j, IdxPaths& p) {
  p.train_images = j.value("train_images", p.train_images);
  p.train_labels = j.value("train_labels", p.train_labels);
  p.test_images = j.value("test_images", p.test_images);
  p.test_labels = j.value("test_labels", p.test_labels);
}

inline void to_json(nlohmann::ordered_json& j, const ExperimentConfig& c) {
  j = nlohmann::ordered_json{};
  j["num_vehicles"] = c.num_vehicles;
  j["rounds"] = c.rounds;
  j["clustering_round"] = c.clustering_round;
  j["max_clusters"] = c.max_clusters;
  j["n_max"] = c.n_max;
  j["scenario"] = scenario_name(c.scenario);
  j["clustering_fraction"] = c.clustering_fraction;
  j["collection_rounds"] = c.collection_rounds;
  j["v2v_rb_pool"] = c.v2v_rb_pool;
  j["train_enabled"] = c.train_enabled;
  j["persistent_fleet"] = c.persistent_fleet;
  j["round_duration_s"] = c.round_duration_s;
  j["seeds"] = c.seeds;
  j["mobility"] = c.mobility;
  j["radio"] = c.radio;
  j["synth"] = c.synth;
  j["partition"] = c.partition;
  j["concept_shift"] = c.concept_shift;
  j["learner"] = c.learner;
  j["diversity_weights"] = c.diversity_weights;
  if (c.idx) j["idx"] = *c.idx;
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  c.num_vehicles = j.value("num_vehicles", c.num_vehicles);
  c.rounds = j.value("rounds", c.rounds);
  c.clustering_round = j.value("clustering_round", c.clustering_round);
  c.max_clusters = j.value("max_clusters", c.max_clusters);
  c.n_max = j.value("n_max", c.n_max);
  if (j.contains("scenario")) c.scenario = scenario_from_name(j.at("scenario").get<std::string>());
  c.clustering_fraction = j.value("clustering_fraction", c.clustering_fraction);
  c.collection_rounds = j.value("collection_rounds", c.collection_rounds);
  c.v2v_rb_pool = j.value("v2v_rb_pool", c.v2v_rb_pool);
  c.train_enabled = j.value("train_enabled", c.train_enabled);
  c.persistent_fleet = j.value("persistent_fleet", c.persistent_fleet);
  c.round_duration_s = j.value("round_duration_s", c.round_duration_s);
  if (j.contains("seeds")) j.at("seeds").get_to(c.seeds);
  if (j.contains("mobility")) j.at("mobility").get_to(c.mobility);
  if (j.contains("radio")) j.at("radio").get_to(c.radio);
  if (j.contains("synth")) j.at("synth").get_to(c.synth);
  if (j.contains("partition")) j.at("partition").get_to(c.partition);
  if (j.contains("concept_shift")) j.at("concept_shift").get_to(c.concept_shift);
  if (j.contains("learner")) j.at("learner").get_to(c.learner);
  if (j.contains("diversity_weights")) j.at("diversity_weights").get_to(c.diversity_weights);
  if (j.contains("idx")) c.idx = j.at("idx").get<IdxPaths>();
}

// ---- presets ----

/// Freeway scenario: 30 vehicles over a 2 km segment on 6 lanes (3 per
/// direction, 60-120 km/h), 4 RBs of 180 kHz, 0.1 W transmit power, -114 dBm
/// noise, 160 kbit model, delta = 2 s, N_max = 2, 50 rounds. A single joint
/// model is trained (pair weights degenerate to 1), so the update-clustering
/// step is off; enable clustering_round together with concept_shift to study
/// multi-model training. Data is synthetic at desk scale, cut into
/// single-label 35-sample shards, 1..6 shards per vehicle.
inline ExperimentConfig freeway_preset() {
  ExperimentConfig c;
  c.scenario = Scenario::freeway;
  c.num_vehicles = 30;
  c.rounds = 50;
  c.clustering_round = 0;
  c.max_clusters = 2;
  c.n_max = 2;
  c.v2v_rb_pool = 4;
  c.mobility.coverage_diameter_m = 2000.0;
  c.mobility.transmission_range_m = 300.0;
  c.mobility.lanes = {
      {60, 80, +1}, {80, 100, +1}, {100, 120, +1},
      {60, 80, -1}, {80, 100, -1}, {100, 120, -1},
  };
  c.mobility.vehicle_density_per_m = 30.0 / (6 * 2000.0);
  // radio defaults already carry the published values (180 kHz, 0.1 W,
  // -114 dBm, 3 dB shadowing, 3 dBi / 1.5 m antenna, 4 RBs, 160 kbits, 2 s)
  c.synth = SynthSpec{10, 20, 7000, 1000, 4.0};
  c.partition = PartitionSpec{200, 35, 1, 6};
  c.learner = LearnerConfig{};
  return c;
}

/// Parking-lot scenario: same radio and data setup, velocities pinned to 0
/// (standing times become unbounded and links never expire) on a compact
/// 200 m lot where every vehicle is in V2V range, 30 rounds with clustering
/// in round 25.
inline ExperimentConfig parking_lot_preset() {
  ExperimentConfig c = freeway_preset();
  c.scenario = Scenario::parking_lot;
  c.rounds = 30;
  c.clustering_round = 25;
  c.mobility.coverage_diameter_m = 200.0;
  return c;
}

inline ExperimentConfig preset(const std::string& name) {
  if (name == "freeway") return freeway_preset();
  if (name == "parking-lot" || name == "parking_lot") return parking_lot_preset();
  throw ConfigError("unknown preset '" + name + "' (expected freeway or parking-lot)");
}

inline ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  ExperimentConfig c = j.get<ExperimentConfig>();
  c.validate();
  return c;
}

inline nlohmann::ordered_json config_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  to_json(j, c);
  return j;
}

}  // namespace cvfl
