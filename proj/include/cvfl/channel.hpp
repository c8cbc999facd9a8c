#pragma once

// Uplink channel model: per-RB gains (path loss + log-normal shadowing +
// Rayleigh fading), Shannon rates, upload deadlines and the per-vehicle RB
// cost used by the head scheduler. Config carries dB/dBm/dBi values; all
// math below runs in linear units.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "cvfl/errors.hpp"
#include "cvfl/mobility.hpp"
#include "cvfl/rng.hpp"

namespace cvfl {

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double watts_to_dbm(double w) { return 10.0 * std::log10(w) + 30.0; }

/// Reference-loss + exponent path loss. Defaults match the common cellular
/// macro model 128.1 dB @ 1 km with exponent 3.76, expressed at 1 m.
struct PathLossModel {
  double exponent = 3.76;
  double ref_loss_db_1m = 15.3;

  double loss_db(double distance_m) const {
    return ref_loss_db_1m + 10.0 * exponent * std::log10(std::max(distance_m, 1.0));
  }
  double gain_linear(double distance_m) const { return db_to_linear(-loss_db(distance_m)); }
};

struct RadioConfig {
  double rb_bandwidth_hz = 180e3;
  double transmit_power_w = 0.1;
  double noise_dbm = -114.0;
  double shadowing_sigma_db = 3.0;
  double antenna_gain_dbi = 3.0;
  double antenna_height_m = 1.5;
  PathLossModel pathloss;
  int total_rbs = 4;
  double model_size_bits = 160e3;
  double t_agg_s = 0.5;
  double delta_s = 2.0;

  double noise_w() const { return dbm_to_watts(noise_dbm); }
  double antenna_gain_linear() const { return db_to_linear(antenna_gain_dbi); }

  void validate() const {
    if (rb_bandwidth_hz <= 0) throw ConfigError("radio: RB bandwidth must be > 0");
    if (transmit_power_w <= 0) throw ConfigError("radio: transmit power must be > 0");
    if (total_rbs < 1) throw ConfigError("radio: need at least one RB");
    if (model_size_bits <= 0) throw ConfigError("radio: model size must be > 0");
    if (shadowing_sigma_db < 0) throw ConfigError("radio: negative shadowing sigma");
    if (t_agg_s < 0 || delta_s < 0) throw ConfigError("radio: negative timing parameter");
    if (pathloss.exponent <= 0) throw ConfigError("radio: path loss exponent must be > 0");
  }
};

/// One block-fading snapshot: linear power gain per (vehicle, RB) plus the
/// vehicle-to-gNodeB distances it was drawn from.
struct ChannelRealization {
  std::vector<std::vector<double>> gains;  // [vehicle][rb]
  std::vector<double> distances_m;
};

/// gNodeB sits at the segment center; the antenna height enters the slant
/// distance. Shadowing is drawn once per vehicle, fading once per (vehicle,
/// RB), in fixed order so a seed pins the whole realization.
inline ChannelRealization draw_gains(const std::vector<VehicleKinematics>& fleet,
                                     const RadioConfig& radio, const MobilityConfig& mobility,
                                     std::uint64_t seed) {
  radio.validate();
  mobility.validate();
  Rng rng(seed);
  const double center = 0.5 * mobility.coverage_diameter_m;
  const double ant_gain = radio.antenna_gain_linear();

  ChannelRealization out;
  out.gains.resize(fleet.size());
  out.distances_m.resize(fleet.size());
  for (std::size_t k = 0; k < fleet.size(); ++k) {
    const double dx = fleet[k].position_m - center;
    const double dist = std::max(1.0, std::hypot(dx, radio.antenna_height_m));
    out.distances_m[k] = dist;
    const double shadow = db_to_linear(rng.normal(0.0, radio.shadowing_sigma_db));
    const double base = radio.pathloss.gain_linear(dist) * shadow * ant_gain;
    out.gains[k].resize(radio.total_rbs);
    for (int q = 0; q < radio.total_rbs; ++q) {
      out.gains[k][q] = base * rng.exponential();
    }
  }
  return out;
}

/// Shannon rate of one RB: B * log2(1 + P*G/N0).
inline double rb_rate(double transmit_power_w, double gain_linear, double noise_w,
                      double bandwidth_hz) {
  if (transmit_power_w <= 0 || gain_linear <= 0 || noise_w <= 0 || bandwidth_hz <= 0)
    throw DomainError("rb_rate: all inputs must be positive");
  return bandwidth_hz * std::log2(1.0 + transmit_power_w * gain_linear / noise_w);
}

/// Achievable rate on every RB for one vehicle of a realization.
inline std::vector<double> vehicle_rb_rates(const ChannelRealization& realization, int vehicle,
                                            const RadioConfig& radio) {
  const auto& gains = realization.gains.at(vehicle);
  std::vector<double> rates(gains.size());
  for (std::size_t q = 0; q < gains.size(); ++q)
    rates[q] = rb_rate(radio.transmit_power_w, gains[q], radio.noise_w(), radio.rb_bandwidth_hz);
  return rates;
}

/// Time left for the upload once training, aggregation and the collection
/// wait are paid out of the standing time. Non-positive means the vehicle
/// cannot act as a head this round.
inline double upload_budget(const VehicleKinematics& v, double t_train_s,
                            const RadioConfig& radio, const MobilityConfig& mobility) {
  return standing_time(v, mobility) - t_train_s - radio.t_agg_s - radio.delta_s;
}

/// Modeled local training latency: per-sample cost times dataset passes.
inline double train_time_estimate(std::size_t num_samples, int epochs,
                                  double per_sample_cost_s) {
  return static_cast<double>(num_samples) * epochs * per_sample_cost_s;
}

struct RbCost {
  double r_min_bps = 0.0;       // minimum rate to finish the upload in budget
  int cost = 0;                 // number of RBs needed
  std::vector<int> chosen_rbs;  // gain-sorted prefix achieving r_min
};

/// Smallest gain-sorted RB prefix whose summed rate meets the minimum upload
/// rate s/budget. Empty optional = infeasible (dead deadline or not enough
/// RBs even with the whole pool).
inline std::optional<RbCost> min_rate_and_cost(int vehicle, double budget_s,
                                               const ChannelRealization& realization,
                                               const RadioConfig& radio) {
  if (budget_s <= 0.0) return std::nullopt;
  RbCost result;
  result.r_min_bps = radio.model_size_bits / budget_s;

  const auto& gains = realization.gains.at(vehicle);
  std::vector<int> order(gains.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return gains[a] > gains[b]; });

  double rate_sum = 0.0;
  for (int q : order) {
    rate_sum += rb_rate(radio.transmit_power_w, gains[q], radio.noise_w(), radio.rb_bandwidth_hz);
    result.chosen_rbs.push_back(q);
    if (rate_sum >= result.r_min_bps) {
      result.cost = static_cast<int>(result.chosen_rbs.size());
      return result;
    }
  }
  return std::nullopt;
}

/// V2V per-RB rate between two vehicles. Reuses the uplink rate law with the
/// inter-vehicle distance; deterministic (no per-pair fading is drawn).
inline double v2v_rate_per_rb(const VehicleKinematics& a, const VehicleKinematics& b,
                              const RadioConfig& radio) {
  const double dist = std::max(1.0, std::abs(a.position_m - b.position_m));
  const double gain = radio.pathloss.gain_linear(dist) * radio.antenna_gain_linear();
  return rb_rate(radio.transmit_power_w, gain, radio.noise_w(), radio.rb_bandwidth_hz);
}

}  // namespace cvfl
