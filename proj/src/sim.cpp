#include "obsbench/sim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace obsbench::sim {

namespace {

bool finite(double v) { return std::isfinite(v); }

}  // namespace

void NoiseSpec::validate() const {
  for (double s : sigma_proc) {
    if (!finite(s) || s < 0.0)
      throw std::invalid_argument("process noise std must be finite and >= 0");
  }
  for (double s : sigma_meas_base) {
    if (!finite(s) || s < 0.0)
      throw std::invalid_argument(
          "measurement noise std must be finite and >= 0");
  }
  if (!finite(alpha) || alpha < 0.0)
    throw std::invalid_argument("alpha must be finite and >= 0");
}

void VehicleParams::validate() const {
  if (!finite(wheelbase) || wheelbase <= 0.0)
    throw std::invalid_argument("wheelbase must be positive");
  if (!finite(dt) || dt <= 0.0)
    throw std::invalid_argument("dt must be positive");
}

StateRate derivative(const VehicleState& z, const ControlInput& u,
                     const VehicleParams& p) {
  if (!finite(z.x) || !finite(z.y) || !finite(z.psi) || !finite(u.v) ||
      !finite(u.delta))
    throw std::invalid_argument("derivative: non-finite state or input");
  if (std::abs(u.delta) >= kPi / 2.0)
    throw std::invalid_argument("derivative: |steering| must be < pi/2, got " +
                                std::to_string(u.delta));
  p.validate();
  StateRate r;
  r.dx = u.v * std::cos(z.psi);
  r.dy = u.v * std::sin(z.psi);
  r.dpsi = u.v * std::tan(u.delta) / p.wheelbase;
  return r;
}

VehicleState step(const VehicleState& z, const ControlInput& u,
                  const VehicleParams& p, const NoiseSpec& noise, Rng& rng) {
  const StateRate r = derivative(z, u, p);
  VehicleState next;
  next.x = z.x + r.dx * p.dt + rng.normal(0.0, noise.sigma_proc[0]);
  next.y = z.y + r.dy * p.dt + rng.normal(0.0, noise.sigma_proc[1]);
  next.psi =
      wrap_angle(z.psi + r.dpsi * p.dt + rng.normal(0.0, noise.sigma_proc[2]));
  return next;
}

std::array<double, 3> measure(const VehicleState& z, const NoiseSpec& noise,
                              Rng& rng) {
  const auto sm = noise.sigma_meas();
  return {z.x + rng.normal(0.0, sm[0]), z.y + rng.normal(0.0, sm[1]),
          wrap_angle(z.psi + rng.normal(0.0, sm[2]))};
}

Trajectory simulate(const VehicleState& initial,
                    const std::vector<ControlInput>& inputs,
                    const VehicleParams& p, const NoiseSpec& noise,
                    std::uint64_t seed) {
  p.validate();
  noise.validate();
  Trajectory traj;
  traj.params = p;
  traj.noise = noise;
  traj.seed = seed;
  traj.initial = initial;
  traj.steps.reserve(inputs.size());

  Rng proc(derive_seed(seed, kStreamProcess));
  Rng meas(derive_seed(seed, kStreamMeasurement));
  VehicleState z = initial;
  for (const ControlInput& u : inputs) {
    z = step(z, u, p, noise, proc);
    StepRecord rec;
    rec.truth = z;
    rec.input = u;
    rec.meas = measure(z, noise, meas);
    traj.steps.push_back(rec);
  }
  return traj;
}

void remeasure(Trajectory& traj, double alpha, std::uint64_t level_index) {
  NoiseSpec level = traj.noise.with_alpha(alpha);
  level.validate();
  Rng meas(derive_seed(derive_seed(traj.seed, kStreamMeasurement),
                       level_index + 1));
  for (StepRecord& rec : traj.steps) rec.meas = measure(rec.truth, level, meas);
  traj.noise = level;
}

}  // namespace obsbench::sim
