#include "vhil/mobility.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace vhil::mobility {

double distance(Vec2 a, Vec2 b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

void KinematicsConfig::validate() const {
  if (!(max_speed > 0.0) || !(accel > 0.0) || !(decel > 0.0)) {
    throw std::invalid_argument("kinematics: max_speed, accel and decel must be positive");
  }
  if (!(tile_width > 0.0) || !(tile_height > 0.0)) {
    throw std::invalid_argument("kinematics: tile dimensions must be positive");
  }
  if (lane_y.empty()) {
    throw std::invalid_argument("kinematics: at least one lane is required");
  }
  for (double y : lane_y) {
    if (y < 0.0 || y > tile_height) {
      throw std::invalid_argument("kinematics: lane offset outside the tile");
    }
  }
  if (!(min_spacing > 0.0)) {
    throw std::invalid_argument("kinematics: min_spacing must be positive");
  }
  if (step_interval.us <= 0) {
    throw std::invalid_argument("kinematics: step_interval must be positive");
  }
}

TooDense::TooDense(std::size_t requested, std::size_t capacity)
    : std::runtime_error("cannot place " + std::to_string(requested) + " vehicles; tile holds " +
                         std::to_string(capacity) + " at minimum spacing") {}

VehicleState step(const VehicleState& state, double dt, const KinematicsConfig& cfg) {
  VehicleState next = state;
  double v = state.speed;
  switch (state.command) {
    case AccelCommand::Accelerate:
      v += cfg.accel * dt;
      break;
    case AccelCommand::Decelerate:
      v -= cfg.decel * dt;
      break;
    case AccelCommand::Hold:
      break;
  }
  next.speed = std::clamp(v, 0.0, cfg.max_speed);

  double x = std::fmod(state.position.x + state.heading * next.speed * dt, cfg.tile_width);
  if (x < 0.0) {
    x += cfg.tile_width;
  }
  // fmod of a tiny negative value can round back up to the width.
  if (x >= cfg.tile_width) {
    x = 0.0;
  }
  next.position.x = x;
  return next;
}

std::size_t fleet_capacity(const KinematicsConfig& cfg) {
  const auto per_lane = static_cast<std::size_t>(std::floor(cfg.tile_width / cfg.min_spacing));
  return per_lane * cfg.lane_y.size();
}

std::vector<VehicleState> spawn_fleet(std::size_t n, const KinematicsConfig& cfg,
                                      std::uint64_t seed) {
  cfg.validate();
  if (n == 0) {
    throw std::invalid_argument("spawn_fleet: at least one vehicle is required");
  }
  const std::size_t capacity = fleet_capacity(cfg);
  if (n > capacity) {
    throw TooDense(n, capacity);
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> slots(capacity);
  std::iota(slots.begin(), slots.end(), std::size_t{0});
  // Partial Fisher-Yates: only the first n slots are needed.
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, capacity - 1);
    std::swap(slots[i], slots[pick(rng)]);
  }

  const std::size_t per_lane = capacity / cfg.lane_y.size();
  std::uniform_real_distribution<double> cruise(0.5 * cfg.max_speed, cfg.max_speed);
  std::vector<VehicleState> fleet;
  fleet.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lane = slots[i] / per_lane;
    const std::size_t pos = slots[i] % per_lane;
    VehicleState v;
    v.id = static_cast<NodeId>(i);
    v.position = Vec2{static_cast<double>(pos) * cfg.min_spacing, cfg.lane_y[lane]};
    v.speed = 0.0;
    v.heading = (lane % 2 == 0) ? 1.0 : -1.0;
    v.target_speed = cruise(rng);
    v.command = steer(v);
    fleet.push_back(v);
  }
  return fleet;
}

AccelCommand steer(const VehicleState& state) {
  constexpr double kTolerance = 0.05;
  if (state.speed < state.target_speed - kTolerance) {
    return AccelCommand::Accelerate;
  }
  if (state.speed > state.target_speed + kTolerance) {
    return AccelCommand::Decelerate;
  }
  return AccelCommand::Hold;
}

}  // namespace vhil::mobility
