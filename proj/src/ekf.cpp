#include "obsbench/ekf.hpp"

#include <cmath>
#include <stdexcept>

namespace obsbench::ekf {

namespace {

Eigen::Matrix3d diag_from_sigmas(const std::array<double, 3>& sigmas) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  for (int i = 0; i < 3; ++i) m(i, i) = sigmas[i] * sigmas[i];
  return m;
}

}  // namespace

EkfConfig EkfConfig::matched(const sim::VehicleParams& p,
                             const sim::NoiseSpec& noise) {
  EkfConfig cfg;
  cfg.params = p;
  cfg.process_cov = diag_from_sigmas(noise.sigma_proc);
  cfg.measurement_cov = diag_from_sigmas(noise.sigma_meas());
  cfg.validate();
  return cfg;
}

EkfConfig EkfConfig::reference(const sim::VehicleParams& p,
                               const sim::NoiseSpec& noise) {
  EkfConfig cfg;
  cfg.params = p;
  const Eigen::Matrix3d base =
      diag_from_sigmas(noise.with_alpha(1.0).sigma_meas());
  cfg.process_cov = base;
  cfg.measurement_cov = base;
  cfg.validate();
  return cfg;
}

void EkfConfig::validate() const {
  params.validate();
  for (int i = 0; i < 3; ++i) {
    if (!(process_cov(i, i) >= 0.0) || !std::isfinite(process_cov(i, i)))
      throw std::invalid_argument("process covariance diagonal invalid");
    if (!(measurement_cov(i, i) > 0.0) ||
        !std::isfinite(measurement_cov(i, i)))
      throw std::invalid_argument(
          "measurement covariance diagonal must be positive");
  }
}

Eigen::Matrix3d motion_jacobian(const sim::VehicleState& z,
                                const sim::ControlInput& u,
                                const sim::VehicleParams& p) {
  p.validate();
  Eigen::Matrix3d j = Eigen::Matrix3d::Identity();
  j(0, 2) = p.dt * (-u.v * std::sin(z.psi));
  j(1, 2) = p.dt * (u.v * std::cos(z.psi));
  return j;
}

GaussianBelief predict(const GaussianBelief& belief, const sim::ControlInput& u,
                       const EkfConfig& cfg) {
  const sim::StateRate r = sim::derivative(belief.mean, u, cfg.params);
  GaussianBelief out;
  out.mean.x = belief.mean.x + r.dx * cfg.params.dt;
  out.mean.y = belief.mean.y + r.dy * cfg.params.dt;
  out.mean.psi = sim::wrap_angle(belief.mean.psi + r.dpsi * cfg.params.dt);

  const Eigen::Matrix3d f = motion_jacobian(belief.mean, u, cfg.params);
  out.cov = f * belief.cov * f.transpose() + cfg.process_cov;
  return out;
}

GaussianBelief update(const GaussianBelief& belief,
                      const std::array<double, 3>& meas, const EkfConfig& cfg) {
  Eigen::Vector3d innovation(meas[0] - belief.mean.x, meas[1] - belief.mean.y,
                             sim::angle_diff(meas[2], belief.mean.psi));
  const Eigen::Matrix3d s = belief.cov + cfg.measurement_cov;
  const Eigen::Matrix3d k = belief.cov * s.inverse();
  const Eigen::Vector3d correction = k * innovation;

  GaussianBelief out;
  out.mean.x = belief.mean.x + correction(0);
  out.mean.y = belief.mean.y + correction(1);
  out.mean.psi = sim::wrap_angle(belief.mean.psi + correction(2));

  const Eigen::Matrix3d ik = Eigen::Matrix3d::Identity() - k;
  out.cov = ik * belief.cov * ik.transpose() +
            k * cfg.measurement_cov * k.transpose();
  return out;
}

EkfRun run_ekf(const sim::Trajectory& traj, const EkfConfig& cfg) {
  cfg.validate();
  EkfRun run;
  if (traj.steps.empty()) return run;
  run.estimates.reserve(traj.steps.size());
  run.cov_diag.reserve(traj.steps.size());

  GaussianBelief belief;
  belief.mean = {traj.steps[0].meas[0], traj.steps[0].meas[1],
                 sim::wrap_angle(traj.steps[0].meas[2])};
  belief.cov = cfg.measurement_cov;
  run.estimates.push_back(belief.mean);
  run.cov_diag.push_back({belief.cov(0, 0), belief.cov(1, 1), belief.cov(2, 2)});

  for (std::size_t k = 1; k < traj.steps.size(); ++k) {
    belief = predict(belief, traj.steps[k].input, cfg);
    belief = update(belief, traj.steps[k].meas, cfg);
    run.estimates.push_back(belief.mean);
    run.cov_diag.push_back(
        {belief.cov(0, 0), belief.cov(1, 1), belief.cov(2, 2)});
  }
  return run;
}

}  // namespace obsbench::ekf
