#pragma once

// Vehicle fleet generation and the mobility-derived timing quantities:
// remaining standing time inside gNodeB coverage and vehicle-to-vehicle
// link lifetime.

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "cvfl/errors.hpp"
#include "cvfl/rng.hpp"

namespace cvfl {

constexpr double kmh_to_mps(double kmh) { return kmh / 3.6; }

struct LaneSpec {
  double v_lo_kmh = 60.0;
  double v_hi_kmh = 80.0;
  int direction = +1;  // +1 or -1 along the road axis
};

struct MobilityConfig {
  double coverage_diameter_m = 2000.0;
  double transmission_range_m = 300.0;
  std::vector<LaneSpec> lanes;
  double vehicle_density_per_m = 0.0025;  // Poisson intensity, per lane

  void validate() const {
    if (coverage_diameter_m <= 0) throw ConfigError("mobility: coverage diameter must be > 0");
    if (transmission_range_m <= 0) throw ConfigError("mobility: transmission range must be > 0");
    if (lanes.empty()) throw ConfigError("mobility: at least one lane required");
    for (const auto& lane : lanes) {
      if (!(lane.v_lo_kmh < lane.v_hi_kmh))
        throw ConfigError("mobility: lane velocity bounds need v_lo < v_hi");
      if (lane.v_lo_kmh < 0) throw ConfigError("mobility: negative lane velocity bound");
      if (lane.direction != 1 && lane.direction != -1)
        throw ConfigError("mobility: lane direction must be +1 or -1");
    }
    if (vehicle_density_per_m < 0) throw ConfigError("mobility: negative vehicle density");
  }
};

struct VehicleKinematics {
  int id = 0;
  int lane = 0;
  int direction = +1;
  double position_m = 0.0;  // coordinate along the road axis, in [0, D]
  double speed_mps = 0.0;

  double signed_velocity() const { return direction * speed_mps; }
};

namespace detail {

inline double draw_lane_speed(Rng& rng, const LaneSpec& lane) {
  const double lo = kmh_to_mps(lane.v_lo_kmh);
  const double hi = kmh_to_mps(lane.v_hi_kmh);
  // Centered on the bound midpoint with sigma = range/4, so ~95% of the
  // untruncated mass already falls inside the bounds.
  return rng.truncated_normal(0.5 * (lo + hi), 0.25 * (hi - lo), lo, hi);
}

inline VehicleKinematics make_vehicle(int id, int lane_idx, const LaneSpec& lane,
                                      double position, Rng& rng) {
  VehicleKinematics v;
  v.id = id;
  v.lane = lane_idx;
  v.direction = lane.direction;
  v.position_m = position;
  v.speed_mps = draw_lane_speed(rng, lane);
  return v;
}

}  // namespace detail

/// Exactly `count` vehicles, positions uniform over the segment, lanes uniform,
/// speeds truncated-Gaussian per lane. Deterministic per seed.
inline std::vector<VehicleKinematics> spawn_fleet(const MobilityConfig& config, int count,
                                                  std::uint64_t seed) {
  config.validate();
  if (count < 0) throw ConfigError("spawn_fleet: negative count");
  Rng rng(seed);
  std::vector<VehicleKinematics> fleet;
  fleet.reserve(count);
  for (int id = 0; id < count; ++id) {
    const int lane_idx = rng.uniform_index(static_cast<int>(config.lanes.size()));
    const double pos = rng.uniform(0.0, config.coverage_diameter_m);
    fleet.push_back(detail::make_vehicle(id, lane_idx, config.lanes[lane_idx], pos, rng));
  }
  return fleet;
}

/// Spatial Poisson process per lane: the per-lane count is Poisson with mean
/// density * segment length, positions are uniform.
inline std::vector<VehicleKinematics> spawn_fleet_poisson(const MobilityConfig& config,
                                                          std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  std::vector<VehicleKinematics> fleet;
  int id = 0;
  for (std::size_t lane_idx = 0; lane_idx < config.lanes.size(); ++lane_idx) {
    const int n = rng.poisson(config.vehicle_density_per_m * config.coverage_diameter_m);
    for (int i = 0; i < n; ++i) {
      const double pos = rng.uniform(0.0, config.coverage_diameter_m);
      fleet.push_back(detail::make_vehicle(id++, static_cast<int>(lane_idx),
                                           config.lanes[lane_idx], pos, rng));
    }
  }
  return fleet;
}

/// Distance already traveled inside the coverage area along the travel
/// direction (the origin of a vehicle's traversal depends on its heading).
inline double distance_traveled(const VehicleKinematics& v, const MobilityConfig& config) {
  return v.direction >= 0 ? v.position_m : config.coverage_diameter_m - v.position_m;
}

/// Remaining time in coverage: (D - x) / v with x the distance traveled.
/// Parked vehicles (speed 0) never leave, hence the +inf sentinel; the fleet
/// generator itself never produces speed 0.
inline double standing_time(const VehicleKinematics& v, const MobilityConfig& config) {
  const double traveled = distance_traveled(v, config);
  if (traveled < 0.0 || traveled > config.coverage_diameter_m)
    throw DomainError("standing_time: position outside coverage segment");
  if (v.speed_mps == 0.0) return std::numeric_limits<double>::infinity();
  return (config.coverage_diameter_m - traveled) / v.speed_mps;
}

/// Time two vehicles stay within transmission range of each other.
/// Co-moving vehicles (equal signed velocity) never disconnect. Vehicles that
/// have already passed each other can make the raw formula negative; that is
/// floored at 0.
inline double link_lifetime(const VehicleKinematics& k, const VehicleKinematics& h,
                            const MobilityConfig& config) {
  const double d_kh = k.position_m - h.position_m;
  if (std::abs(d_kh) > config.transmission_range_m) return 0.0;
  const double dv = k.signed_velocity() - h.signed_velocity();
  if (dv == 0.0) return std::numeric_limits<double>::infinity();
  const double llt =
      (-dv * d_kh + std::abs(dv) * config.transmission_range_m) / (dv * dv);
  return llt > 0.0 ? llt : 0.0;
}

}  // namespace cvfl
