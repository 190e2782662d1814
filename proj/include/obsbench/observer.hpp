#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "obsbench/nn.hpp"
#include "obsbench/sim.hpp"

namespace obsbench::observer {

// Rng substream tags (see sim.hpp for the simulator's tags).
inline constexpr std::uint64_t kStreamObserverInit = 0x50;
inline constexpr std::uint64_t kStreamShuffle = 0x60;

// One learned-observer input window: the N consecutive records of `traj`
// ending at index `end` (inclusive). Rows run oldest to newest. The referenced
// trajectory must outlive the window.
struct WindowRef {
  const sim::Trajectory* traj = nullptr;
  int end = 0;
};

// Feature scale divisors applied after the anchor-relative transform.
// Positions stay in metres so the regression targets keep the measurement
// noise magnitude; the heading divisor lifts the (much smaller) heading
// residual to a comparable share of the squared-error loss, otherwise the
// heading output never trains past the raw measurement. Speed and steering
// are squashed to roughly unit range.
struct NormScales {
  double position = 1.0;
  double heading = 0.05;
  double speed = 30.0;
  double steer = 0.5;

  void validate() const;
};

// Anchor frame taken from the newest measured pose of a window.
struct NormalizationContext {
  double anchor_x = 0.0;
  double anchor_y = 0.0;
  double anchor_psi = 0.0;
  NormScales scales;
};

enum class ObserverKind { cnn, lstm };

std::string observer_kind_name(ObserverKind kind);
ObserverKind observer_kind_from_name(const std::string& name);

// Window sizes the benchmark sweeps; other sizes work but are flagged.
bool is_canonical_window(int n);

struct ObserverModel {
  ObserverKind kind = ObserverKind::cnn;
  int window = 0;
  nn::Network net;
  NormScales scales;
  // Identity of the data-generating setup the model was trained against;
  // evaluation refuses datasets with a different fingerprint.
  std::string data_fingerprint;
  // Hash of the training hyperparameters and seed; empty until trained.
  std::string training_fingerprint;
};

// All windows of length n. Trajectories shorter than n contribute nothing;
// if `diagnostic` is given, a note is appended for each skipped trajectory.
std::vector<WindowRef> build_windows(const sim::Trajectory& traj, int n,
                                     std::string* diagnostic = nullptr);
std::vector<WindowRef> build_windows(const std::vector<sim::Trajectory>& trajs,
                                     int n, std::string* diagnostic = nullptr);

NormalizationContext make_context(const WindowRef& w, const NormScales& scales);

// Feature grid for one window of n records: rows = time (oldest to newest),
// columns = (x_m, y_m, psi_m, V, delta) in the anchor frame. Shape (n, 5, 1)
// when `channel_axis` is set (image-style consumers) and (n, 5) otherwise.
nn::Tensor normalize_features(const WindowRef& w,
                              const NormalizationContext& ctx, int n,
                              bool channel_axis);
nn::Tensor normalize_target(const sim::VehicleState& truth,
                            const NormalizationContext& ctx);
sim::VehicleState denormalize(const nn::Tensor& out,
                         const NormalizationContext& ctx);

// The truth record a window's estimate is scored against.
const sim::VehicleState& window_target(const WindowRef& w);

// Smallest window the convolutional pipeline accepts.
int cnn_minimum_window();

// Architecture builders; parameters drawn deterministically from `seed`.
ObserverModel build_cnn(int n, std::uint64_t seed);
ObserverModel build_lstm(int n, std::uint64_t seed);
ObserverModel build_observer(ObserverKind kind, int n, std::uint64_t seed);

struct TrainConfig {
  double learning_rate = 2e-3;
  int batch_size = 256;
  int max_epochs = 200;
  int patience = 10;
  std::uint64_t seed = 1;
  nn::OptimizerConfig::Method method = nn::OptimizerConfig::Method::adam;
  // 0 disables the wall-clock budget; otherwise training stops at the first
  // epoch boundary past this many seconds and keeps the best parameters.
  double max_seconds = 0.0;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_mse = 0.0;
  double val_mse = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;  // 1-based; 0 when no epoch finished
  double best_val_mse = 0.0;
  bool stopped_early = false;
  bool diverged = false;
  bool hit_time_budget = false;
};

// Mini-batch MSE training in normalized target space with validation-based
// early stopping. The model is left holding the parameters of the best
// validation epoch.
TrainHistory train(ObserverModel& model,
                   const std::vector<sim::Trajectory>& train_trajs,
                   const std::vector<sim::Trajectory>& val_trajs,
                   const TrainConfig& cfg);

// Mean normalized-space MSE of the model over a set of windows.
double evaluate_mse(ObserverModel& model, const std::vector<WindowRef>& windows);

struct GridSearchSpec {
  std::vector<double> learning_rates;
  std::vector<int> batch_sizes;
};

struct GridPoint {
  double learning_rate = 0.0;
  int batch_size = 0;
  double val_mse = 0.0;
  TrainHistory history;
};

struct GridSearchResult {
  std::vector<GridPoint> points;
  std::size_t best_index = 0;

  const GridPoint& best() const { return points[best_index]; }
};

// Trains one reduced-budget model per (learning rate, batch size) pair and
// selects the lowest validation MSE. Tuned values are meant to be reused for
// the larger window sizes.
GridSearchResult grid_search(ObserverKind kind, int n,
                             const GridSearchSpec& grids,
                             const std::vector<sim::Trajectory>& train_trajs,
                             const std::vector<sim::Trajectory>& val_trajs,
                             const TrainConfig& budget);

// normalize -> forward -> denormalize for the window ending at `end`.
// Forward passes reuse the network's scratch buffers, hence non-const.
sim::VehicleState infer(ObserverModel& model, const sim::Trajectory& traj, int end);
sim::VehicleState infer(ObserverModel& model, const WindowRef& w);

// Writes <dir>/<name>.model (network) and <dir>/<name>.meta.json (kind,
// window, scales, fingerprints). load_observer reads the pair back.
void save_observer(const ObserverModel& model, const std::string& dir,
                   const std::string& name);
ObserverModel load_observer(const std::string& dir, const std::string& name);

}  // namespace obsbench::observer
