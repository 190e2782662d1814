#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "obsbench/rng.hpp"

namespace obsbench::sim {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Wrap an angle to [-pi, pi).
inline double wrap_angle(double a) {
  double w = std::remainder(a, 2.0 * kPi);  // in [-pi, pi]
  return w >= kPi ? -kPi : w;
}

// Difference a - b wrapped to [-pi, pi). Heading errors must be computed this
// way or estimates near +/-pi look catastrophically wrong.
inline double angle_diff(double a, double b) { return wrap_angle(a - b); }

struct VehicleState {
  double x = 0.0;    // position east [m]
  double y = 0.0;    // position north [m]
  double psi = 0.0;  // heading [rad]
};

struct ControlInput {
  double v = 0.0;      // forward speed [m/s]
  double delta = 0.0;  // front steering angle [rad]
};

struct StateRate {
  double dx = 0.0;
  double dy = 0.0;
  double dpsi = 0.0;
};

// Per-axis standard deviations for the additive Gaussian disturbances.
// sigma_meas_base is the alpha=1 measurement noise; alpha scales only the
// measurement channel, never the process channel.
struct NoiseSpec {
  std::array<double, 3> sigma_proc{};
  std::array<double, 3> sigma_meas_base{};
  double alpha = 1.0;

  std::array<double, 3> sigma_meas() const {
    return {alpha * sigma_meas_base[0], alpha * sigma_meas_base[1],
            alpha * sigma_meas_base[2]};
  }

  // Nominal disturbance levels: the published 3-sigma bounds
  // (0.2 m, 0.2 m, 0.0034 rad) per step and (1 m, 1 m, 0.0174 rad) for the
  // sensor, divided by 3 to get standard deviations.
  static NoiseSpec nominal() {
    NoiseSpec n;
    n.sigma_proc = {0.2 / 3.0, 0.2 / 3.0, 0.0034 / 3.0};
    n.sigma_meas_base = {1.0 / 3.0, 1.0 / 3.0, 0.0174 / 3.0};
    n.alpha = 1.0;
    return n;
  }

  static NoiseSpec zero() {
    NoiseSpec n;
    n.alpha = 0.0;
    return n;
  }

  NoiseSpec with_alpha(double a) const {
    NoiseSpec n = *this;
    n.alpha = a;
    return n;
  }

  void validate() const;
};

struct VehicleParams {
  double wheelbase = 2.7;  // [m]
  double dt = 0.02;        // integration step [s]

  void validate() const;
};

// One simulation step: the state reached after applying `input` for dt,
// plus the noisy measurement of that state. Record k of a trajectory holds
// the k-th transition, so a trajectory with n records used n inputs.
struct StepRecord {
  VehicleState truth;
  ControlInput input;
  std::array<double, 3> meas{};
};

struct Trajectory {
  VehicleParams params;
  NoiseSpec noise;
  std::uint64_t seed = 0;
  VehicleState initial;
  std::vector<StepRecord> steps;

  int length() const { return static_cast<int>(steps.size()); }
  double time_at(int k) const { return (k + 1) * params.dt; }  // record index -> t
};

// Substream tags for derive_seed. Process and measurement noise never share a
// stream, so redrawing measurements at another alpha leaves the truth intact.
inline constexpr std::uint64_t kStreamProcess = 0x10;
inline constexpr std::uint64_t kStreamMeasurement = 0x20;
inline constexpr std::uint64_t kStreamGeneration = 0x30;

// Kinematic bicycle rate of change. Throws std::invalid_argument when
// |delta| >= pi/2 or any argument is non-finite.
StateRate derivative(const VehicleState& z, const ControlInput& u,
                     const VehicleParams& p);

// Forward Euler step with additive process noise; heading is wrapped.
VehicleState step(const VehicleState& z, const ControlInput& u,
                  const VehicleParams& p, const NoiseSpec& noise, Rng& rng);

// Additive Gaussian measurement of a state; measured heading is wrapped.
std::array<double, 3> measure(const VehicleState& z, const NoiseSpec& noise,
                              Rng& rng);

// Run the model for inputs.size() steps from `initial`. The seed fully
// determines the noise; process and measurement streams are derived from it
// independently.
Trajectory simulate(const VehicleState& initial,
                    const std::vector<ControlInput>& inputs,
                    const VehicleParams& p, const NoiseSpec& noise,
                    std::uint64_t seed);

// Redraw all measurements of `traj` at a different noise level, leaving the
// true states untouched. `level_index` selects an independent measurement
// stream per alpha level.
void remeasure(Trajectory& traj, double alpha, std::uint64_t level_index);

}  // namespace obsbench::sim
