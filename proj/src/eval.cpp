#include "obsbench/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "obsbench/io.hpp"

namespace obsbench::eval {

NrmseWeights NrmseWeights::frozen() {
  return from_reference({0.24, 0.23, 0.0041});
}

NrmseWeights NrmseWeights::from_reference(const RmseTriple& ref) {
  if (!(ref.x > 0.0) || !(ref.y > 0.0) || !(ref.psi > 0.0))
    throw std::invalid_argument(
        "reference RMSE components must be positive to define weights");
  NrmseWeights w;
  w.reference = ref;
  w.wx = 1.0 / (3.0 * ref.x * ref.x);
  w.wy = 1.0 / (3.0 * ref.y * ref.y);
  w.wpsi = 1.0 / (3.0 * ref.psi * ref.psi);
  return w;
}

RmseTriple rmse(const std::vector<sim::VehicleState>& estimates,
                const std::vector<sim::VehicleState>& truths) {
  if (estimates.size() != truths.size())
    throw std::invalid_argument("rmse length mismatch");
  if (estimates.empty())
    throw std::invalid_argument("rmse needs at least one sample");
  double sx = 0.0, sy = 0.0, sp = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const double dx = estimates[i].x - truths[i].x;
    const double dy = estimates[i].y - truths[i].y;
    const double dp = sim::angle_diff(estimates[i].psi, truths[i].psi);
    sx += dx * dx;
    sy += dy * dy;
    sp += dp * dp;
  }
  const double inv = 1.0 / static_cast<double>(estimates.size());
  return {std::sqrt(sx * inv), std::sqrt(sy * inv), std::sqrt(sp * inv)};
}

double nrmse(const RmseTriple& e, const NrmseWeights& w) {
  return std::sqrt(w.wx * e.x * e.x + w.wy * e.y * e.y +
                   w.wpsi * e.psi * e.psi);
}

NrmseWeights calibrate_reference(const ErrorReport& reference_report,
                                 bool frozen_mode) {
  if (frozen_mode) return NrmseWeights::frozen();
  return NrmseWeights::from_reference(reference_report.rmse);
}

Observer make_ekf_observer(const ekf::EkfConfig& cfg) {
  cfg.validate();
  Observer obs;
  obs.name = "ekf";
  obs.warmup = 0;
  obs.run = [cfg](const sim::Trajectory& traj) {
    return ekf::run_ekf(traj, cfg).estimates;
  };
  return obs;
}

Observer make_learned_observer(const observer::ObserverModel& model) {
  auto shared = std::make_shared<const observer::ObserverModel>(model);
  Observer obs;
  obs.name = observer::observer_kind_name(model.kind) + "_n" +
             std::to_string(model.window);
  obs.warmup = model.window - 1;
  const int warmup = obs.warmup;
  obs.run = [shared, warmup](const sim::Trajectory& traj) {
    observer::ObserverModel local = *shared;  // private scratch per call
    std::vector<sim::VehicleState> est(static_cast<std::size_t>(traj.length()));
    for (int k = 0; k < traj.length(); ++k) {
      if (k >= warmup) {
        est[static_cast<std::size_t>(k)] = observer::infer(local, traj, k);
      } else {
        // Pre-window records are never scored; repeat the measurement there.
        const auto& m = traj.steps[static_cast<std::size_t>(k)].meas;
        est[static_cast<std::size_t>(k)] = {m[0], m[1], m[2]};
      }
    }
    return est;
  };
  return obs;
}

Observer make_identity_observer() {
  Observer obs;
  obs.name = "identity";
  obs.warmup = 0;
  obs.run = [](const sim::Trajectory& traj) {
    std::vector<sim::VehicleState> est;
    est.reserve(static_cast<std::size_t>(traj.length()));
    for (const auto& rec : traj.steps)
      est.push_back({rec.meas[0], rec.meas[1], rec.meas[2]});
    return est;
  };
  return obs;
}

namespace {

// Estimates and truths for all records past `warmup`, pooled across
// trajectories.
ErrorReport score(const Observer& obs, const std::vector<sim::Trajectory>& trajs,
                  double alpha, int warmup) {
  std::vector<sim::VehicleState> est, truth;
  for (const auto& traj : trajs) {
    const auto run = obs.run(traj);
    if (static_cast<int>(run.size()) != traj.length())
      throw std::runtime_error("observer " + obs.name +
                               " returned the wrong number of estimates");
    for (int k = warmup; k < traj.length(); ++k) {
      est.push_back(run[static_cast<std::size_t>(k)]);
      truth.push_back(traj.steps[static_cast<std::size_t>(k)].truth);
    }
  }
  if (est.empty())
    throw std::invalid_argument(
        "no records remain after the warm-up cut for observer " + obs.name);
  ErrorReport report;
  report.observer = obs.name;
  report.alpha = alpha;
  report.rmse = rmse(est, truth);
  report.samples = static_cast<long long>(est.size());
  return report;
}

}  // namespace

ErrorReport evaluate_observer(const Observer& obs,
                              const std::vector<sim::Trajectory>& trajs,
                              double alpha, int warmup) {
  return score(obs, trajs, alpha, warmup);
}

std::vector<double> SweepTable::curve(const std::string& observer) const {
  for (std::size_t i = 0; i < observers.size(); ++i) {
    if (observers[i] != observer) continue;
    std::vector<double> out(alphas.size());
    for (std::size_t a = 0; a < alphas.size(); ++a)
      out[a] = cell(i, a).nrmse;
    return out;
  }
  throw std::invalid_argument("no observer named " + observer +
                              " in the sweep");
}

SweepTable sweep(const std::vector<Observer>& observers,
                 const datagen::DatasetSplit& test, const NrmseWeights& weights,
                 int jobs) {
  if (observers.empty()) throw std::invalid_argument("sweep needs observers");
  if (test.alpha_levels.empty() || test.levels.empty())
    throw std::invalid_argument("sweep needs a populated test split");
  if (test.alpha_levels.size() != test.levels.size())
    throw std::invalid_argument(
        "test split is missing noise levels: expected " +
        std::to_string(test.alpha_levels.size()) + " populated levels, found " +
        std::to_string(test.levels.size()));
  for (const auto& level : test.levels)
    if (level.empty())
      throw std::invalid_argument("a noise level holds no trajectories");

  int warmup = 0;
  for (const auto& obs : observers) warmup = std::max(warmup, obs.warmup);

  SweepTable table;
  table.alphas = test.alpha_levels;
  for (const auto& obs : observers) table.observers.push_back(obs.name);
  table.cells.resize(observers.size() * table.alphas.size());

  std::atomic<std::size_t> cursor{0};
  std::atomic<bool> failed{false};
  std::string first_error;
  std::mutex error_mutex;
  const std::size_t total = table.cells.size();
  const auto worker = [&]() {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= total || failed.load()) break;
      const std::size_t obs_i = i / table.alphas.size();
      const std::size_t level_i = i % table.alphas.size();
      try {
        const auto report =
            score(observers[obs_i], test.levels[level_i],
                  table.alphas[level_i], warmup);
        SweepCell cell;
        cell.observer = report.observer;
        cell.alpha = report.alpha;
        cell.rmse = report.rmse;
        cell.nrmse = nrmse(report.rmse, weights);
        cell.samples = report.samples;
        table.cells[i] = std::move(cell);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!failed.exchange(true)) first_error = e.what();
      }
    }
  };

  const int thread_n = std::max(1, std::min<int>(jobs, static_cast<int>(total)));
  if (thread_n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(thread_n));
    for (int t = 0; t < thread_n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failed.load()) throw std::runtime_error("sweep failed: " + first_error);
  return table;
}

std::optional<double> crossover_alpha(const std::vector<double>& alphas,
                                      const std::vector<double>& candidate,
                                      const std::vector<double>& reference) {
  if (alphas.size() != candidate.size() || alphas.size() != reference.size())
    throw std::invalid_argument("crossover curves must share the alpha grid");
  if (alphas.empty()) return std::nullopt;
  // Walk backward: the crossover is just past the last level the candidate
  // fails to beat.
  std::size_t first_below = alphas.size();
  for (std::size_t i = alphas.size(); i-- > 0;) {
    if (candidate[i] < reference[i])
      first_below = i;
    else
      break;
  }
  if (first_below == alphas.size()) return std::nullopt;
  return alphas[first_below];
}

int count_decreasing_steps(const std::vector<double>& curve,
                           std::size_t from_index) {
  int inversions = 0;
  for (std::size_t i = from_index + 1; i < curve.size(); ++i)
    if (curve[i] < curve[i - 1]) ++inversions;
  return inversions;
}

std::size_t select_best(const std::vector<VariantScore>& variants) {
  if (variants.empty())
    throw std::invalid_argument("select_best needs at least one variant");
  std::size_t best = 0;
  for (std::size_t i = 1; i < variants.size(); ++i) {
    const auto& v = variants[i];
    const auto& b = variants[best];
    if (v.mean_nrmse < b.mean_nrmse ||
        (v.mean_nrmse == b.mean_nrmse && v.window < b.window))
      best = i;
  }
  return best;
}

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::optional<std::size_t> level_index(const std::vector<double>& alphas,
                                       double alpha) {
  for (std::size_t i = 0; i < alphas.size(); ++i)
    if (std::abs(alphas[i] - alpha) < 1e-9) return i;
  return std::nullopt;
}

void write_rmse_csv(const std::string& path, const SweepTable& table,
                    std::size_t level) {
  std::string csv = "observer,alpha,rmse_x,rmse_y,rmse_psi,samples\n";
  for (std::size_t i = 0; i < table.observers.size(); ++i) {
    const auto& c = table.cell(i, level);
    csv += c.observer + ',' + io::format_double(c.alpha) + ',' +
           io::format_double(c.rmse.x) + ',' + io::format_double(c.rmse.y) +
           ',' + io::format_double(c.rmse.psi) + ',' +
           std::to_string(c.samples) + '\n';
  }
  io::write_text_file(path, csv);
}

}  // namespace

void emit_report(const std::string& dir, const SweepTable& table,
                 const NrmseWeights& weights,
                 const datagen::FrictionGrid* grid) {
  io::ensure_directory(dir);

  std::string sweep_csv = "observer,alpha,nrmse\n";
  for (std::size_t i = 0; i < table.observers.size(); ++i)
    for (std::size_t a = 0; a < table.alphas.size(); ++a) {
      const auto& c = table.cell(i, a);
      sweep_csv += c.observer + ',' + io::format_double(c.alpha) + ',' +
                   io::format_double(c.nrmse) + '\n';
    }
  io::write_text_file(dir + "/nrmse_sweep.csv", sweep_csv);

  const auto level1 = level_index(table.alphas, 1.0);
  const auto level6 = level_index(table.alphas, 6.0);
  if (level1) write_rmse_csv(dir + "/rmse_alpha1.csv", table, *level1);
  if (level6) write_rmse_csv(dir + "/rmse_alpha6.csv", table, *level6);

  if (grid) datagen::write_grid_csv(dir + "/grid_coverage.csv", *grid);

  std::string s;
  s += "state observer benchmark summary\n";
  s += "================================\n\n";
  s += "alpha grid: " + fixed(table.alphas.front(), 2) + " to " +
       fixed(table.alphas.back(), 2) + " in " +
       std::to_string(table.alphas.size()) + " levels\n";
  s += "nrmse weights: wx=" + fixed(weights.wx) + " 1/m^2, wy=" +
       fixed(weights.wy) + " 1/m^2, wpsi=" + fixed(weights.wpsi, 1) +
       " 1/rad^2\n";
  s += "reference rmse: x=" + fixed(weights.reference.x, 3) + " m, y=" +
       fixed(weights.reference.y, 3) + " m, psi=" +
       fixed(weights.reference.psi * 1e3, 2) + " mrad\n\n";

  for (const double alpha : {1.0, 6.0}) {
    const auto level = level_index(table.alphas, alpha);
    if (!level) continue;
    s += "rmse at alpha = " + fixed(alpha, 2) +
         " (x [m], y [m], psi [mrad], nrmse):\n";
    for (std::size_t i = 0; i < table.observers.size(); ++i) {
      const auto& c = table.cell(i, *level);
      s += "  " + c.observer + ": " + fixed(c.rmse.x) + "  " +
           fixed(c.rmse.y) + "  " + fixed(c.rmse.psi * 1e3) + "  " +
           fixed(c.nrmse) + "\n";
    }
    s += "\n";
  }

  const bool has_ekf =
      std::find(table.observers.begin(), table.observers.end(), "ekf") !=
      table.observers.end();
  if (has_ekf) {
    const auto ekf_curve = table.curve("ekf");
    s += "crossover against ekf (first alpha below and staying below):\n";
    for (const auto& name : table.observers) {
      if (name == "ekf") continue;
      const auto cross =
          crossover_alpha(table.alphas, table.curve(name), ekf_curve);
      s += "  " + name + ": " +
           (cross ? "alpha* = " + fixed(*cross, 2) : "none") + "\n";
    }
    s += "expected crossover for the convolutional observer: alpha ≈ 2\n";
  }
  io::write_text_file(dir + "/summary.txt", s);
}

}  // namespace obsbench::eval
