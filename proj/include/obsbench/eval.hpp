#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "obsbench/datagen.hpp"
#include "obsbench/ekf.hpp"
#include "obsbench/observer.hpp"
#include "obsbench/sim.hpp"

namespace obsbench::eval {

struct RmseTriple {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
};

struct ErrorReport {
  std::string observer;
  double alpha = 0.0;
  RmseTriple rmse;
  long long samples = 0;
};

// Quadratic-form weights for the combined error score, built so the reference
// triple itself scores exactly 1.
struct NrmseWeights {
  double wx = 0.0;
  double wy = 0.0;
  double wpsi = 0.0;
  RmseTriple reference;

  // Frozen reference (0.24 m, 0.23 m, 4.1 mrad) for cross-run comparability.
  static NrmseWeights frozen();
  // Weights from a measured reference; rejects zero components.
  static NrmseWeights from_reference(const RmseTriple& ref);
};

// Per-variable RMSE; heading errors use wrapped differences.
RmseTriple rmse(const std::vector<sim::VehicleState>& estimates,
                const std::vector<sim::VehicleState>& truths);

double nrmse(const RmseTriple& e, const NrmseWeights& w);

// Weights from the reference observer's low-noise report, or the frozen
// constants when `frozen_mode` is set (then the report is ignored).
NrmseWeights calibrate_reference(const ErrorReport& reference_report,
                                 bool frozen_mode);

// An observer under evaluation: `run` maps a trajectory to one estimate per
// record. Entries before `warmup` are not scored. `run` must be safe to call
// concurrently from several threads.
struct Observer {
  std::string name;
  int warmup = 0;
  std::function<std::vector<sim::VehicleState>(const sim::Trajectory&)> run;
};

Observer make_ekf_observer(const ekf::EkfConfig& cfg);
// Clones the model per call so concurrent sweep cells never share scratch
// buffers. The data fingerprint travels along for dataset compatibility checks.
Observer make_learned_observer(const observer::ObserverModel& model);
// Baseline that repeats the raw measurement.
Observer make_identity_observer();

ErrorReport evaluate_observer(const Observer& obs,
                              const std::vector<sim::Trajectory>& trajs,
                              double alpha, int warmup);

struct SweepCell {
  std::string observer;
  double alpha = 0.0;
  RmseTriple rmse;
  double nrmse = 0.0;
  long long samples = 0;
};

struct SweepTable {
  std::vector<std::string> observers;
  std::vector<double> alphas;
  // Observer-major, alpha-minor; size = observers.size() * alphas.size().
  std::vector<SweepCell> cells;

  const SweepCell& cell(std::size_t obs_i, std::size_t alpha_i) const {
    return cells[obs_i * alphas.size() + alpha_i];
  }
  // NRMSE curve over alpha for one observer; throws if the name is unknown.
  std::vector<double> curve(const std::string& observer) const;
};

// One score per (observer, alpha level). Every observer is scored on the same
// retained indices: each trajectory's first max(warmup) records are dropped so
// windowed and recursive observers see identical ground truth.
SweepTable sweep(const std::vector<Observer>& observers,
                 const datagen::DatasetSplit& test, const NrmseWeights& weights,
                 int jobs = 1);

// Smallest grid alpha where `candidate` scores below `reference` and stays
// below through the end of the grid.
std::optional<double> crossover_alpha(const std::vector<double>& alphas,
                                      const std::vector<double>& candidate,
                                      const std::vector<double>& reference);

// Strictly-decreasing steps of curve[from..], for monotone-trend checks.
int count_decreasing_steps(const std::vector<double>& curve,
                           std::size_t from_index);

struct VariantScore {
  std::string name;
  int window = 0;
  double mean_nrmse = 0.0;
};

// Index of the variant with the lowest mean NRMSE; ties go to the smaller
// window.
std::size_t select_best(const std::vector<VariantScore>& variants);

// Writes rmse_alpha1.csv, rmse_alpha6.csv, nrmse_sweep.csv, grid_coverage.csv
// (when a grid is given), and summary.txt with detected crossover alphas.
void emit_report(const std::string& dir, const SweepTable& table,
                 const NrmseWeights& weights,
                 const datagen::FrictionGrid* grid = nullptr);

}  // namespace obsbench::eval
