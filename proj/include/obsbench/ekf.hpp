#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "obsbench/sim.hpp"

namespace obsbench::ekf {

struct GaussianBelief {
  sim::VehicleState mean;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
};

struct EkfConfig {
  sim::VehicleParams params;
  Eigen::Matrix3d process_cov = Eigen::Matrix3d::Zero();      // Q
  Eigen::Matrix3d measurement_cov = Eigen::Matrix3d::Zero();  // R

  // Textbook tuning: Q from the true per-step process variances, R from the
  // alpha-scaled measurement variances. This is the statistically consistent
  // filter (its normalized innovations are white), but not the tuning the
  // benchmark tables were produced with.
  static EkfConfig matched(const sim::VehicleParams& p,
                           const sim::NoiseSpec& noise);

  // Benchmark tuning: Q = R = the alpha=1 measurement variances, fixed across
  // the whole noise sweep. The inflated Q reproduces the published error
  // levels and their near-linear growth with alpha; see the README notes.
  static EkfConfig reference(const sim::VehicleParams& p,
                             const sim::NoiseSpec& noise);

  void validate() const;
};

// Jacobian of the Euler state transition with respect to the state.
Eigen::Matrix3d motion_jacobian(const sim::VehicleState& z,
                                const sim::ControlInput& u,
                                const sim::VehicleParams& p);

GaussianBelief predict(const GaussianBelief& belief, const sim::ControlInput& u,
                       const EkfConfig& cfg);

// Joseph-form measurement update with the full state measured directly; the
// heading innovation is wrapped.
GaussianBelief update(const GaussianBelief& belief,
                      const std::array<double, 3>& meas, const EkfConfig& cfg);

struct EkfRun {
  std::vector<sim::VehicleState> estimates;        // one per trajectory record
  std::vector<std::array<double, 3>> cov_diag;     // P diagonal per record
};

// Filter a full trajectory: initialize at the first measurement with
// covariance R, then predict with each record's input and update with its
// measurement.
EkfRun run_ekf(const sim::Trajectory& traj, const EkfConfig& cfg);

}  // namespace obsbench::ekf
