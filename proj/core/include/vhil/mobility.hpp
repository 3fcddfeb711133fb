#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "vhil/sim_kernel.hpp"

namespace vhil::mobility {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Vec2&) const = default;
};

double distance(Vec2 a, Vec2 b);

enum class AccelCommand { Accelerate, Decelerate, Hold };

struct VehicleState {
  NodeId id = 0;
  Vec2 position;
  double speed = 0.0;  // m/s
  AccelCommand command = AccelCommand::Hold;
  double heading = 1.0;       // +1 or -1 along the x (road) axis
  double target_speed = 0.0;  // cruise speed the fleet driver steers toward

  bool operator==(const VehicleState&) const = default;
};

struct KinematicsConfig {
  double max_speed = 17.0;  // m/s
  double accel = 2.6;       // m/s^2
  double decel = 4.5;       // m/s^2
  double tile_width = 300.0;
  double tile_height = 100.0;
  // Straight lanes along x. Even-indexed lanes head +x, odd-indexed -x.
  std::vector<double> lane_y{45.0, 55.0};
  double min_spacing = 5.0;
  SimTime step_interval = SimTime::millis(100);

  /// Throws std::invalid_argument on a non-physical configuration.
  void validate() const;
};

class TooDense : public std::runtime_error {
 public:
  TooDense(std::size_t requested, std::size_t capacity);
};

/// One kinematic update: speed is integrated and clamped to
/// [0, max_speed], then the position advances by the new speed along the
/// heading and wraps around the tile in x.
VehicleState step(const VehicleState& state, double dt, const KinematicsConfig& cfg);

/// Number of distinct placement slots on the tile at minimum spacing.
std::size_t fleet_capacity(const KinematicsConfig& cfg);

/// Places n vehicles at distinct lane slots, all at rest. Vehicle 0 is the
/// one attached to the external interface.
std::vector<VehicleState> spawn_fleet(std::size_t n, const KinematicsConfig& cfg,
                                      std::uint64_t seed);

/// Command that moves a vehicle toward its target speed.
AccelCommand steer(const VehicleState& state);

}  // namespace vhil::mobility
