#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "obsbench/rng.hpp"
#include "obsbench/sim.hpp"

namespace obsbench::datagen {

inline constexpr double kGravity = 9.81;

// Global-frame acceleration pair describing one discrete transition.
struct AccelerationTarget {
  double ax = 0.0;
  double ay = 0.0;

  double norm() const;
};

struct InputLimits {
  double v_min = 0.5;      // steering inversion divides by V(k+1)*V(k)
  double v_max = 30.0;     // the kinematic model is a low-speed model
  double delta_max = 0.5;  // keeps tan(delta) well conditioned

  void validate() const;
};

// Discrete-time acceleration implied by an input transition: longitudinal
// component (V(k+1)-V(k))/dt and lateral component V(k+1)*V(k)*tan(delta)/L,
// rotated into the global frame by the heading at step k.
AccelerationTarget accelerations_from_inputs(double v_k, double v_k1,
                                             double delta_k1, double psi_k,
                                             const sim::VehicleParams& p);

// Exact inversion of accelerations_from_inputs. Returns nullopt when the
// target would push the speed out of [v_min, v_max] or the steering beyond
// delta_max; the caller picks another target.
std::optional<sim::ControlInput> solve_inputs_for_target(
    const AccelerationTarget& target, double v_k, double psi_k,
    const sim::VehicleParams& p, const InputLimits& lim);

struct ProjectedInput {
  sim::ControlInput input;
  AccelerationTarget realized;
};

// Nearest-feasible fallback: clamps the longitudinal component so the speed
// stays in range, then the lateral component to the steering limit. The
// returned realized target is what the clamped inputs actually produce.
ProjectedInput project_to_feasible(const AccelerationTarget& target,
                                   double v_k, double psi_k,
                                   const sim::VehicleParams& p,
                                   const InputLimits& lim);

// Occupancy histogram over the friction disc. Targets are drawn from the
// least-filled eligible cell so the training data spreads over the whole
// feasible acceleration range instead of clustering near zero.
class FrictionGrid {
 public:
  explicit FrictionGrid(int cells_per_axis = 64,
                        double radius = 0.5 * kGravity);

  int cells_per_axis() const { return n_; }
  double radius() const { return radius_; }
  double cell_width() const { return 2.0 * radius_ / n_; }

  bool in_bounds(int ix, int iy) const {
    return ix >= 0 && ix < n_ && iy >= 0 && iy < n_;
  }
  // A cell is an eligible target when its center lies within the disc.
  bool cell_eligible(int ix, int iy) const;
  std::array<double, 2> cell_center(int ix, int iy) const;
  int count(int ix, int iy) const;

  int eligible_cells() const { return eligible_total_; }
  long long total_count() const { return total_; }
  int occupied_eligible_cells(int min_count = 1) const;
  // Fraction of eligible cells holding at least min_count samples.
  double coverage(int min_count = 1) const;

  // Record a realized acceleration. Out-of-bounds values are ignored (they
  // can only come from projected targets just outside the disc).
  void add(const AccelerationTarget& a);

  // Jittered point inside a least-count eligible cell, ties broken uniformly.
  AccelerationTarget sample_least_covered(Rng& rng);

 private:
  int cell_index(int ix, int iy) const { return iy * n_ + ix; }
  void rebuild_min_bucket();

  int n_;
  double radius_;
  double width_;
  std::vector<int> counts_;
  std::vector<unsigned char> eligible_;
  int eligible_total_ = 0;
  long long total_ = 0;
  // Cells whose count equals current_min_; stale entries are pruned lazily
  // when sampled, and the bucket is rebuilt once it runs dry.
  int current_min_ = 0;
  std::vector<int> min_bucket_;
};

// --- clothoid paths --------------------------------------------------------

// One piece of a piecewise-linear curvature profile. Adjacent segments share
// endpoint curvatures, which is what makes the resulting path C2.
struct ClothoidSegment {
  double length = 0.0;
  double kappa_begin = 0.0;
  double kappa_end = 0.0;
};

struct PathPoint {
  double s = 0.0;  // arc length from path start
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // unwrapped, continuous along the path
  double curvature = 0.0;
};

class ClothoidPath {
 public:
  ClothoidPath() = default;

  // Heading is integrated in closed form (quadratic per segment); positions
  // by fixed-step RK4 over arc length, sampled every `spacing` meters.
  static ClothoidPath build(const std::vector<ClothoidSegment>& segments,
                            const sim::VehicleState& start,
                            double spacing = 0.1);

  bool empty() const { return points_.empty(); }
  double length() const { return total_length_; }
  const std::vector<PathPoint>& waypoints() const { return points_; }

  PathPoint at(double s) const;                    // clamped, interpolated
  double max_abs_curvature(double s0, double s1) const;

  // Distance from (x, y) to the polyline; used by tracking diagnostics.
  double cross_track_error(double x, double y) const;

  // Arc position of the waypoint nearest to (x, y), searching forward from
  // s_hint only. Keeps the pure-pursuit cursor monotone on self-crossing
  // paths.
  double nearest_s(double x, double y, double s_hint,
                   double search_window = 12.0) const;

 private:
  std::vector<PathPoint> points_;
  std::vector<ClothoidSegment> segments_;
  double spacing_ = 0.1;
  double total_length_ = 0.0;
};

struct PursuitCursor {
  double s = 0.0;
};

// Classic pure-pursuit steering toward the path point one lookahead ahead of
// the nearest point. Returns nullopt when the lookahead point would lie past
// the end of the path, which callers treat as completion.
std::optional<double> pure_pursuit_steer(const ClothoidPath& path,
                                         const sim::VehicleState& z,
                                         double lookahead,
                                         const sim::VehicleParams& p,
                                         double delta_max,
                                         PursuitCursor& cursor);

// --- dataset generation ----------------------------------------------------

enum class SplitKind { train, validation, test };

std::string split_name(SplitKind kind);
SplitKind split_from_name(const std::string& name);

struct DatasetSplit {
  SplitKind kind = SplitKind::train;
  sim::VehicleParams params;
  sim::NoiseSpec base_noise;  // alpha = 1 specification
  std::uint64_t master_seed = 0;
  double scale = 1.0;
  std::vector<double> alpha_levels;
  // levels[a][i]: trajectory i measured at alpha_levels[a]. All levels of a
  // test split share identical true states; train/validation have one level.
  std::vector<std::vector<sim::Trajectory>> levels;

  int trajectory_count() const {
    return levels.empty() ? 0 : static_cast<int>(levels.front().size());
  }
  long long true_records() const;
  long long total_records() const;
  int find_level(double alpha) const;  // -1 when absent
};

struct GenConfig {
  // training split
  int train_trajectories = 1000;
  double train_duration = 40.0;  // seconds per trajectory
  InputLimits limits;
  double train_v0_min = 2.0;
  double train_v0_max = 25.0;
  int grid_cells = 64;
  double grid_radius = 0.5 * kGravity;
  int retry_limit = 16;

  // path following (validation + test)
  double waypoint_spacing = 0.1;
  double lookahead_min = 3.0;
  double lookahead_gain = 0.5;  // lookahead = max(min, gain * V)
  double profile_accel_min = -2.0;
  double profile_accel_max = 2.0;
  double profile_hold = 1.0;  // seconds between acceleration redraws
  double profile_v_min = 2.0;
  double profile_v_max = 20.0;
  double accel_rate = 2.0;  // command slew limits, m/s^2
  double brake_rate = 3.0;
  double lat_accel_budget = 3.5;    // caps speed at sqrt(budget/kappa)
  double curvature_preview = 25.0;  // meters of path scanned for the cap
  double max_follow_duration = 120.0;

  // validation split: one wave path alternating between +peak and -peak
  double validation_wave_length = 200.0;
  double validation_peak = 5.0;
  double validation_v0 = 10.0;

  // test split
  int test_trajectories = 15;
  int test_segments_min = 5;
  int test_segments_max = 8;
  double test_segment_len_min = 12.0;
  double test_segment_len_max = 22.0;
  double test_kappa_min = 0.025;
  double test_kappa_max = 0.06;
  double test_v0_min = 6.0;
  double test_v0_max = 14.0;

  std::vector<double> alpha_levels;  // test sweep grid
  double scale = 1.0;                // shrinks trajectory counts only

  static GenConfig defaults();
  void validate() const;
  int scaled_train_trajectories() const;
  int scaled_test_trajectories() const;
};

// Default sweep grid: 0 to 6 in steps of 0.25 (25 levels).
std::vector<double> default_alpha_grid();

// The fixed validation path: piecewise-linear curvature wave calibrated so
// the lateral position alternates between +peak and -peak.
ClothoidPath validation_path(const GenConfig& cfg);

DatasetSplit generate_training_set(const GenConfig& cfg,
                                   const sim::VehicleParams& params,
                                   const sim::NoiseSpec& noise,
                                   std::uint64_t master_seed,
                                   FrictionGrid* grid_out = nullptr);

DatasetSplit generate_validation_set(const GenConfig& cfg,
                                     const sim::VehicleParams& params,
                                     const sim::NoiseSpec& noise,
                                     std::uint64_t master_seed);

DatasetSplit generate_test_sets(const GenConfig& cfg,
                                const sim::VehicleParams& params,
                                const sim::NoiseSpec& noise,
                                std::uint64_t master_seed);

// --- dataset persistence -----------------------------------------------

nlohmann::json gen_config_to_json(const GenConfig& cfg);
GenConfig gen_config_from_json(const nlohmann::json& j);
std::string gen_config_fingerprint(const GenConfig& cfg);

// Directory of a split under the dataset root: train/, val/, test/.
std::string split_dir_name(SplitKind kind);

// CSV coverage dump of a friction grid (ix,iy,center,eligible,count rows).
void write_grid_csv(const std::string& path, const FrictionGrid& grid);

// Writes one CSV per trajectory plus a manifest.json carrying params, noise,
// seeds, the generator fingerprint and per-file checksums. Test splits nest
// alpha_<level>/ directories; a training grid (when given) lands in
// <root>/grid.csv.
void write_dataset(const DatasetSplit& split, const std::string& root,
                   const GenConfig& cfg, const FrictionGrid* grid = nullptr);

// Reads a split back, verifying manifest checksums against file contents.
DatasetSplit read_dataset(const std::string& root, SplitKind kind);

// Provenance string recorded in the split's manifest; empty when manifest is
// missing. Lets callers check dataset/model compatibility cheaply.
std::string dataset_provenance(const std::string& root, SplitKind kind);

}  // namespace obsbench::datagen
