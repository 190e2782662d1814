#include "obsbench/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <stdexcept>

#include "obsbench/io.hpp"

namespace obsbench::datagen {

namespace {

constexpr std::uint64_t kSaltTrain = 101;
constexpr std::uint64_t kSaltValidation = 202;
constexpr std::uint64_t kSaltTest = 303;
// Path-shape randomization must not share a stream with the velocity profile.
constexpr std::uint64_t kStreamPathSpec = 0x40;

double clamp(double v, double lo, double hi) {
  return std::min(std::max(v, lo), hi);
}

}  // namespace

double AccelerationTarget::norm() const { return std::hypot(ax, ay); }

void InputLimits::validate() const {
  if (!(v_min > 0.0) || !(v_max > v_min))
    throw std::invalid_argument("need 0 < v_min < v_max");
  if (!(delta_max > 0.0) || !(delta_max < sim::kPi / 2.0))
    throw std::invalid_argument("need 0 < delta_max < pi/2");
}

AccelerationTarget accelerations_from_inputs(double v_k, double v_k1,
                                             double delta_k1, double psi_k,
                                             const sim::VehicleParams& p) {
  p.validate();
  if (std::abs(delta_k1) >= sim::kPi / 2.0)
    throw std::invalid_argument("|steering| must be < pi/2");
  const double a_long = (v_k1 - v_k) / p.dt;
  const double a_lat = v_k1 * v_k * std::tan(delta_k1) / p.wheelbase;
  const double c = std::cos(psi_k);
  const double s = std::sin(psi_k);
  return {a_long * c - a_lat * s, a_long * s + a_lat * c};
}

std::optional<sim::ControlInput> solve_inputs_for_target(
    const AccelerationTarget& target, double v_k, double psi_k,
    const sim::VehicleParams& p, const InputLimits& lim) {
  p.validate();
  lim.validate();
  if (v_k < lim.v_min)
    throw std::invalid_argument("current speed below the inversion floor");
  const double c = std::cos(psi_k);
  const double s = std::sin(psi_k);
  const double a_long = target.ax * c + target.ay * s;
  const double a_lat = -target.ax * s + target.ay * c;
  const double v_k1 = v_k + p.dt * a_long;
  if (v_k1 < lim.v_min || v_k1 > lim.v_max) return std::nullopt;
  const double delta = std::atan(p.wheelbase * a_lat / (v_k1 * v_k));
  if (std::abs(delta) > lim.delta_max) return std::nullopt;
  return sim::ControlInput{v_k1, delta};
}

ProjectedInput project_to_feasible(const AccelerationTarget& target,
                                   double v_k, double psi_k,
                                   const sim::VehicleParams& p,
                                   const InputLimits& lim) {
  p.validate();
  lim.validate();
  if (v_k < lim.v_min)
    throw std::invalid_argument("current speed below the inversion floor");
  const double c = std::cos(psi_k);
  const double s = std::sin(psi_k);
  const double a_long_raw = target.ax * c + target.ay * s;
  const double a_lat_raw = -target.ax * s + target.ay * c;

  // Longitudinal first: keep the next speed inside its window.
  const double a_long = clamp(a_long_raw, (lim.v_min - v_k) / p.dt,
                              (lim.v_max - v_k) / p.dt);
  const double v_k1 = v_k + p.dt * a_long;
  // Then lateral: cap at what the steering limit can deliver at these speeds.
  const double a_lat_cap = v_k1 * v_k * std::tan(lim.delta_max) / p.wheelbase;
  const double a_lat = clamp(a_lat_raw, -a_lat_cap, a_lat_cap);

  ProjectedInput out;
  out.input.v = v_k1;
  out.input.delta = std::atan(p.wheelbase * a_lat / (v_k1 * v_k));
  out.realized = {a_long * c - a_lat * s, a_long * s + a_lat * c};
  return out;
}

// --- FrictionGrid -----------------------------------------------------------

FrictionGrid::FrictionGrid(int cells_per_axis, double radius)
    : n_(cells_per_axis), radius_(radius) {
  if (n_ < 2) throw std::invalid_argument("grid needs at least 2x2 cells");
  if (!(radius_ > 0.0)) throw std::invalid_argument("grid radius must be > 0");
  width_ = 2.0 * radius_ / n_;
  counts_.assign(static_cast<std::size_t>(n_) * n_, 0);
  eligible_.assign(counts_.size(), 0);
  for (int iy = 0; iy < n_; ++iy) {
    for (int ix = 0; ix < n_; ++ix) {
      const auto c = cell_center(ix, iy);
      if (std::hypot(c[0], c[1]) <= radius_) {
        eligible_[static_cast<std::size_t>(cell_index(ix, iy))] = 1;
        ++eligible_total_;
      }
    }
  }
  rebuild_min_bucket();
}

bool FrictionGrid::cell_eligible(int ix, int iy) const {
  return in_bounds(ix, iy) &&
         eligible_[static_cast<std::size_t>(cell_index(ix, iy))] != 0;
}

std::array<double, 2> FrictionGrid::cell_center(int ix, int iy) const {
  return {-radius_ + (ix + 0.5) * width_, -radius_ + (iy + 0.5) * width_};
}

int FrictionGrid::count(int ix, int iy) const {
  if (!in_bounds(ix, iy)) throw std::out_of_range("grid cell out of range");
  return counts_[static_cast<std::size_t>(cell_index(ix, iy))];
}

int FrictionGrid::occupied_eligible_cells(int min_count) const {
  int occ = 0;
  for (std::size_t i = 0; i < counts_.size(); ++i)
    if (eligible_[i] && counts_[i] >= min_count) ++occ;
  return occ;
}

double FrictionGrid::coverage(int min_count) const {
  return eligible_total_ == 0
             ? 0.0
             : static_cast<double>(occupied_eligible_cells(min_count)) /
                   eligible_total_;
}

void FrictionGrid::add(const AccelerationTarget& a) {
  const int ix = static_cast<int>(std::floor((a.ax + radius_) / width_));
  const int iy = static_cast<int>(std::floor((a.ay + radius_) / width_));
  if (!in_bounds(ix, iy)) return;
  ++counts_[static_cast<std::size_t>(cell_index(ix, iy))];
  ++total_;
}

void FrictionGrid::rebuild_min_bucket() {
  current_min_ = std::numeric_limits<int>::max();
  for (std::size_t i = 0; i < counts_.size(); ++i)
    if (eligible_[i]) current_min_ = std::min(current_min_, counts_[i]);
  min_bucket_.clear();
  for (std::size_t i = 0; i < counts_.size(); ++i)
    if (eligible_[i] && counts_[i] == current_min_)
      min_bucket_.push_back(static_cast<int>(i));
}

AccelerationTarget FrictionGrid::sample_least_covered(Rng& rng) {
  // Entries whose cell has been filled past the current minimum are pruned
  // lazily; a full rebuild only happens when a whole fill level completes.
  for (;;) {
    if (min_bucket_.empty()) rebuild_min_bucket();
    const std::size_t r =
        static_cast<std::size_t>(rng.uniform_index(min_bucket_.size()));
    const int cell = min_bucket_[r];
    if (counts_[static_cast<std::size_t>(cell)] != current_min_) {
      min_bucket_[r] = min_bucket_.back();
      min_bucket_.pop_back();
      continue;
    }
    const int ix = cell % n_;
    const int iy = cell / n_;
    const auto c = cell_center(ix, iy);
    // Jitter within the cell, rejecting corners that poke out of the disc.
    for (int attempt = 0; attempt < 8; ++attempt) {
      AccelerationTarget t{c[0] + rng.uniform(-0.5, 0.5) * width_,
                           c[1] + rng.uniform(-0.5, 0.5) * width_};
      if (t.norm() <= radius_) return t;
    }
    return {c[0], c[1]};
  }
}

// --- clothoid paths ---------------------------------------------------------

namespace {

struct SegmentSpan {
  double s0 = 0.0;
  double length = 0.0;
  double k0 = 0.0;
  double k1 = 0.0;
  double theta0 = 0.0;
};

std::vector<SegmentSpan> make_spans(const std::vector<ClothoidSegment>& segs,
                                    double theta_start) {
  std::vector<SegmentSpan> spans;
  spans.reserve(segs.size());
  double s = 0.0, theta = theta_start;
  for (const auto& seg : segs) {
    if (!(seg.length > 0.0))
      throw std::invalid_argument("clothoid segment length must be > 0");
    spans.push_back({s, seg.length, seg.kappa_begin, seg.kappa_end, theta});
    s += seg.length;
    theta += 0.5 * (seg.kappa_begin + seg.kappa_end) * seg.length;
  }
  return spans;
}

double span_theta(const SegmentSpan& sp, double s) {
  const double t = s - sp.s0;
  return sp.theta0 + sp.k0 * t + (sp.k1 - sp.k0) * t * t / (2.0 * sp.length);
}

double span_kappa(const SegmentSpan& sp, double s) {
  const double t = s - sp.s0;
  return sp.k0 + (sp.k1 - sp.k0) * t / sp.length;
}

const SegmentSpan& span_at(const std::vector<SegmentSpan>& spans, double s) {
  // Few segments in practice; linear scan is fine and robust at joints.
  for (const auto& sp : spans)
    if (s <= sp.s0 + sp.length) return sp;
  return spans.back();
}

}  // namespace

ClothoidPath ClothoidPath::build(const std::vector<ClothoidSegment>& segments,
                                 const sim::VehicleState& start,
                                 double spacing) {
  if (segments.empty())
    throw std::invalid_argument("clothoid path needs at least one segment");
  if (!(spacing > 0.0))
    throw std::invalid_argument("waypoint spacing must be > 0");

  ClothoidPath path;
  path.segments_ = segments;
  path.spacing_ = spacing;
  const auto spans = make_spans(segments, start.psi);
  path.total_length_ = spans.back().s0 + spans.back().length;

  const auto theta_at = [&spans](double s) {
    return span_theta(span_at(spans, s), s);
  };

  const int whole = static_cast<int>(path.total_length_ / spacing);
  path.points_.reserve(static_cast<std::size_t>(whole) + 2);

  double x = start.x, y = start.y, s = 0.0;
  const auto push = [&](double at_s) {
    path.points_.push_back({at_s, x, y, theta_at(at_s),
                            span_kappa(span_at(spans, at_s), at_s)});
  };
  push(0.0);

  // March along arc length with RK4 on (x, y); heading is closed form, so
  // each waypoint interval is just a high-order quadrature of (cos, sin).
  const auto advance = [&](double s_from, double s_to) {
    const int substeps = 2;
    const double h = (s_to - s_from) / substeps;
    double si = s_from;
    for (int i = 0; i < substeps; ++i) {
      const double t1 = theta_at(si);
      const double t2 = theta_at(si + 0.5 * h);
      const double t3 = theta_at(si + h);
      x += h / 6.0 * (std::cos(t1) + 4.0 * std::cos(t2) + std::cos(t3));
      y += h / 6.0 * (std::sin(t1) + 4.0 * std::sin(t2) + std::sin(t3));
      si += h;
    }
  };

  for (int i = 1; i <= whole; ++i) {
    const double s_next = i * spacing;
    advance(s, s_next);
    s = s_next;
    push(s);
  }
  if (path.total_length_ - s > 1e-9) {
    advance(s, path.total_length_);
    push(path.total_length_);
  }
  return path;
}

PathPoint ClothoidPath::at(double s) const {
  if (points_.empty()) throw std::logic_error("empty path");
  s = clamp(s, 0.0, total_length_);
  // Waypoints are uniformly spaced except possibly the last interval.
  std::size_t i = static_cast<std::size_t>(s / spacing_);
  if (i >= points_.size() - 1) i = points_.size() - 2;
  const PathPoint& a = points_[i];
  const PathPoint& b = points_[i + 1];
  const double w = (b.s - a.s) > 0.0 ? (s - a.s) / (b.s - a.s) : 0.0;
  PathPoint out;
  out.s = s;
  out.x = a.x + w * (b.x - a.x);
  out.y = a.y + w * (b.y - a.y);
  out.heading = a.heading + w * (b.heading - a.heading);
  out.curvature = a.curvature + w * (b.curvature - a.curvature);
  return out;
}

double ClothoidPath::max_abs_curvature(double s0, double s1) const {
  s0 = clamp(s0, 0.0, total_length_);
  s1 = clamp(s1, 0.0, total_length_);
  if (s1 < s0) std::swap(s0, s1);
  double best = std::max(std::abs(at(s0).curvature), std::abs(at(s1).curvature));
  // Curvature is piecewise linear, so interior extrema sit at segment joints.
  double s = 0.0;
  for (const auto& seg : segments_) {
    for (double joint : {s, s + seg.length}) {
      if (joint >= s0 && joint <= s1) {
        const double t = joint - s;
        const double k =
            t <= 0.0 ? seg.kappa_begin
                     : seg.kappa_begin +
                           (seg.kappa_end - seg.kappa_begin) * t / seg.length;
        best = std::max(best, std::abs(k));
      }
    }
    s += seg.length;
  }
  return best;
}

double ClothoidPath::cross_track_error(double x, double y) const {
  if (points_.size() < 2) throw std::logic_error("path too short");
  std::size_t nearest = 0;
  double best = std::numeric_limits<double>::max();
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const double dx = points_[i].x - x;
    const double dy = points_[i].y - y;
    const double d2 = dx * dx + dy * dy;
    if (d2 < best) {
      best = d2;
      nearest = i;
    }
  }
  // Refine against the segments on both sides of the winning waypoint.
  double dist = std::sqrt(best);
  const std::size_t lo = nearest > 0 ? nearest - 1 : 0;
  const std::size_t hi = std::min(nearest + 1, points_.size() - 1);
  for (std::size_t i = lo; i < hi; ++i) {
    const double ax = points_[i].x, ay = points_[i].y;
    const double bx = points_[i + 1].x, by = points_[i + 1].y;
    const double vx = bx - ax, vy = by - ay;
    const double len2 = vx * vx + vy * vy;
    if (len2 <= 0.0) continue;
    const double t = clamp(((x - ax) * vx + (y - ay) * vy) / len2, 0.0, 1.0);
    dist = std::min(dist, std::hypot(x - (ax + t * vx), y - (ay + t * vy)));
  }
  return dist;
}

double ClothoidPath::nearest_s(double x, double y, double s_hint,
                               double search_window) const {
  if (points_.empty()) throw std::logic_error("empty path");
  const double s_lo = clamp(s_hint - spacing_, 0.0, total_length_);
  const double s_hi = clamp(s_hint + search_window, 0.0, total_length_);
  std::size_t i = static_cast<std::size_t>(s_lo / spacing_);
  double best = std::numeric_limits<double>::max();
  double best_s = s_lo;
  for (; i < points_.size() && points_[i].s <= s_hi; ++i) {
    const double dx = points_[i].x - x;
    const double dy = points_[i].y - y;
    const double d2 = dx * dx + dy * dy;
    if (d2 < best) {
      best = d2;
      best_s = points_[i].s;
    }
  }
  return best_s;
}

std::optional<double> pure_pursuit_steer(const ClothoidPath& path,
                                         const sim::VehicleState& z,
                                         double lookahead,
                                         const sim::VehicleParams& p,
                                         double delta_max,
                                         PursuitCursor& cursor) {
  if (path.empty()) throw std::invalid_argument("empty path");
  if (!(lookahead > 0.0)) throw std::invalid_argument("lookahead must be > 0");
  cursor.s = std::max(cursor.s, path.nearest_s(z.x, z.y, cursor.s));
  const double s_goal = cursor.s + lookahead;
  if (s_goal > path.length()) return std::nullopt;
  const PathPoint g = path.at(s_goal);
  const double eta =
      sim::wrap_angle(std::atan2(g.y - z.y, g.x - z.x) - z.psi);
  const double delta =
      std::atan(2.0 * p.wheelbase * std::sin(eta) / lookahead);
  return clamp(delta, -delta_max, delta_max);
}

// --- dataset generation -----------------------------------------------------

std::string split_name(SplitKind kind) {
  switch (kind) {
    case SplitKind::train:
      return "train";
    case SplitKind::validation:
      return "validation";
    case SplitKind::test:
      return "test";
  }
  throw std::logic_error("unknown split kind");
}

SplitKind split_from_name(const std::string& name) {
  if (name == "train") return SplitKind::train;
  if (name == "validation" || name == "val") return SplitKind::validation;
  if (name == "test") return SplitKind::test;
  throw std::invalid_argument("unknown split name: " + name);
}

long long DatasetSplit::true_records() const {
  long long n = 0;
  if (!levels.empty())
    for (const auto& t : levels.front()) n += t.length();
  return n;
}

long long DatasetSplit::total_records() const {
  long long n = 0;
  for (const auto& level : levels)
    for (const auto& t : level) n += t.length();
  return n;
}

int DatasetSplit::find_level(double alpha) const {
  for (std::size_t i = 0; i < alpha_levels.size(); ++i)
    if (std::abs(alpha_levels[i] - alpha) < 1e-9) return static_cast<int>(i);
  return -1;
}

std::vector<double> default_alpha_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 24; ++i) grid.push_back(i * 0.25);
  return grid;
}

GenConfig GenConfig::defaults() {
  GenConfig cfg;
  cfg.alpha_levels = default_alpha_grid();
  return cfg;
}

void GenConfig::validate() const {
  limits.validate();
  if (train_trajectories < 1 || test_trajectories < 1)
    throw std::invalid_argument("trajectory counts must be >= 1");
  if (!(train_duration > 0.0) || !(max_follow_duration > 0.0))
    throw std::invalid_argument("durations must be > 0");
  if (!(scale > 0.0)) throw std::invalid_argument("scale must be > 0");
  if (grid_cells < 2) throw std::invalid_argument("grid_cells must be >= 2");
  if (!(grid_radius > 0.0))
    throw std::invalid_argument("grid_radius must be > 0");
  if (retry_limit < 0) throw std::invalid_argument("retry_limit must be >= 0");
  if (!(waypoint_spacing > 0.0))
    throw std::invalid_argument("waypoint_spacing must be > 0");
  if (!(train_v0_min >= limits.v_min) || !(train_v0_max <= limits.v_max) ||
      !(train_v0_min <= train_v0_max))
    throw std::invalid_argument("training start-speed range out of limits");
  if (!(profile_v_min > 0.0) || !(profile_v_max > profile_v_min))
    throw std::invalid_argument("profile speed window invalid");
  if (!(profile_hold > 0.0))
    throw std::invalid_argument("profile_hold must be > 0");
  if (!(accel_rate > 0.0) || !(brake_rate > 0.0))
    throw std::invalid_argument("slew rates must be > 0");
  if (!(lat_accel_budget > 0.0))
    throw std::invalid_argument("lat_accel_budget must be > 0");
  if (!(validation_wave_length > 0.0) || !(validation_peak > 0.0))
    throw std::invalid_argument("validation wave geometry invalid");
  if (!(validation_v0 >= profile_v_min && validation_v0 <= profile_v_max))
    throw std::invalid_argument("validation_v0 outside the profile window");
  if (test_segments_min < 1 || test_segments_max < test_segments_min)
    throw std::invalid_argument("test segment count range invalid");
  if (!(test_segment_len_min > 0.0) ||
      !(test_segment_len_max >= test_segment_len_min))
    throw std::invalid_argument("test segment length range invalid");
  if (!(test_kappa_min > 0.0) || !(test_kappa_max >= test_kappa_min))
    throw std::invalid_argument("test curvature range invalid");
  if (!(test_v0_min >= profile_v_min) || !(test_v0_max <= profile_v_max) ||
      !(test_v0_min <= test_v0_max))
    throw std::invalid_argument("test start-speed range out of window");
  if (alpha_levels.empty())
    throw std::invalid_argument("alpha_levels must not be empty");
  for (double a : alpha_levels)
    if (!(a >= 0.0) || !std::isfinite(a))
      throw std::invalid_argument("alpha levels must be finite and >= 0");
}

int GenConfig::scaled_train_trajectories() const {
  return std::max(1, static_cast<int>(std::lround(scale * train_trajectories)));
}

int GenConfig::scaled_test_trajectories() const {
  return std::max(1, static_cast<int>(std::lround(scale * test_trajectories)));
}

ClothoidPath validation_path(const GenConfig& cfg) {
  // Eight clothoid segments of piecewise-linear curvature forming one full
  // alternation: the heading swings positive over the first quarter, negative
  // through the middle half and positive again at the end, so the lateral
  // position rises to +peak at 1/4 of the wave, crosses the centerline at
  // 1/2, dips to -peak at 3/4 and closes back on the centerline. Curvature
  // is continuous and antisymmetric about the midpoint, which keeps the two
  // extremes equal in magnitude.
  const double q = cfg.validation_wave_length / 8.0;
  const auto wave = [&](double km) {
    const std::vector<ClothoidSegment> segs = {
        {q, 0.0, km}, {q, km, -km}, {q, -km, -km}, {q, -km, 0.0},
        {q, 0.0, km}, {q, km, km},  {q, km, -km},  {q, -km, 0.0}};
    return ClothoidPath::build(segs, {}, cfg.waypoint_spacing);
  };
  const auto peak_y = [&](double km) {
    double peak = 0.0;
    for (const auto& pt : wave(km).waypoints()) peak = std::max(peak, pt.y);
    return peak;
  };

  // Secant iteration on the peak amplitude; the small-angle estimate
  // peak ~= (23/24) * km * (wave/8)^2 puts the starting point within a few
  // percent of the root.
  double k0 = 24.0 * cfg.validation_peak / (23.0 * q * q);
  double k1 = 1.05 * k0;
  double f0 = peak_y(k0) - cfg.validation_peak;
  double f1 = peak_y(k1) - cfg.validation_peak;
  for (int it = 0; it < 20 && std::abs(f1) > 1e-10; ++it) {
    if (f1 == f0) break;
    const double k2 = k1 - f1 * (k1 - k0) / (f1 - f0);
    k0 = k1;
    f0 = f1;
    k1 = k2;
    f1 = peak_y(k1) - cfg.validation_peak;
  }
  return wave(k1);
}

namespace {

// Drive a path with pure pursuit and a random-walk speed profile capped by
// the curvature ahead. Returns the finished trajectory with measurements
// drawn at the given noise spec; throws if the follower never reaches the
// end of the path within the configured duration.
sim::Trajectory follow_path(const ClothoidPath& path, const GenConfig& cfg,
                            const sim::VehicleParams& params,
                            const sim::NoiseSpec& noise, std::uint64_t seed,
                            double v0) {
  sim::Trajectory traj;
  traj.params = params;
  traj.noise = noise;
  traj.seed = seed;
  const PathPoint p0 = path.at(0.0);
  traj.initial = {p0.x, p0.y, sim::wrap_angle(p0.heading)};

  Rng gen(derive_seed(seed, sim::kStreamGeneration));
  Rng proc(derive_seed(seed, sim::kStreamProcess));

  sim::VehicleState z = traj.initial;
  PursuitCursor cursor;
  double profile_v = v0;
  double v_cmd = v0;
  double accel = 0.0;
  double hold = 0.0;
  bool completed = false;

  const int max_steps =
      static_cast<int>(std::lround(cfg.max_follow_duration / params.dt));
  traj.steps.reserve(1024);
  for (int k = 0; k < max_steps; ++k) {
    const double lookahead =
        std::max(cfg.lookahead_min, cfg.lookahead_gain * v_cmd);
    const auto delta = pure_pursuit_steer(path, z, lookahead, params,
                                          cfg.limits.delta_max, cursor);
    if (!delta) {
      completed = true;
      break;
    }

    if (hold <= 0.0) {
      accel = gen.uniform(cfg.profile_accel_min, cfg.profile_accel_max);
      hold = cfg.profile_hold;
    }
    hold -= params.dt;
    profile_v = clamp(profile_v + accel * params.dt, cfg.profile_v_min,
                      cfg.profile_v_max);

    const double kap =
        path.max_abs_curvature(cursor.s, cursor.s + cfg.curvature_preview);
    const double v_curve = kap > 1e-9 ? std::sqrt(cfg.lat_accel_budget / kap)
                                      : cfg.profile_v_max;
    const double target_v = std::min(profile_v, v_curve);
    const double dv = clamp(target_v - v_cmd, -cfg.brake_rate * params.dt,
                            cfg.accel_rate * params.dt);
    v_cmd = clamp(v_cmd + dv, cfg.profile_v_min, cfg.profile_v_max);

    const sim::ControlInput u{v_cmd, *delta};
    z = sim::step(z, u, params, noise, proc);
    traj.steps.push_back({z, u, {}});
  }
  if (!completed)
    throw std::runtime_error(
        "path follower did not reach the end of the path within " +
        std::to_string(cfg.max_follow_duration) + " s (diverged?)");

  Rng meas(derive_seed(seed, sim::kStreamMeasurement));
  for (auto& rec : traj.steps)
    rec.meas = sim::measure(rec.truth, noise, meas);
  return traj;
}

}  // namespace

DatasetSplit generate_training_set(const GenConfig& cfg,
                                   const sim::VehicleParams& params,
                                   const sim::NoiseSpec& noise,
                                   std::uint64_t master_seed,
                                   FrictionGrid* grid_out) {
  cfg.validate();
  params.validate();
  noise.validate();

  DatasetSplit out;
  out.kind = SplitKind::train;
  out.params = params;
  out.base_noise = noise.with_alpha(1.0);
  out.master_seed = master_seed;
  out.scale = cfg.scale;
  out.alpha_levels = {1.0};

  const int count = cfg.scaled_train_trajectories();
  const int steps_per =
      static_cast<int>(std::lround(cfg.train_duration / params.dt));
  const std::uint64_t split_seed = derive_seed(master_seed, kSaltTrain);

  FrictionGrid grid(cfg.grid_cells, cfg.grid_radius);
  std::vector<sim::Trajectory> trajs;
  trajs.reserve(static_cast<std::size_t>(count));

  for (int i = 0; i < count; ++i) {
    const std::uint64_t seed_i =
        derive_seed(split_seed, static_cast<std::uint64_t>(i));
    Rng gen(derive_seed(seed_i, sim::kStreamGeneration));
    Rng proc(derive_seed(seed_i, sim::kStreamProcess));

    sim::Trajectory t;
    t.params = params;
    t.noise = out.base_noise;
    t.seed = seed_i;
    t.initial = {0.0, 0.0, gen.uniform(-sim::kPi, sim::kPi)};

    sim::VehicleState z = t.initial;
    sim::ControlInput u{gen.uniform(cfg.train_v0_min, cfg.train_v0_max), 0.0};
    t.steps.reserve(static_cast<std::size_t>(steps_per));

    for (int k = 0; k < steps_per; ++k) {
      // Choose the next step's input by aiming at the least-covered part of
      // the friction disc; fall back to the nearest feasible acceleration
      // when a bounded number of redraws all land outside the input limits.
      std::optional<sim::ControlInput> next;
      AccelerationTarget target{};
      for (int attempt = 0; attempt <= cfg.retry_limit && !next; ++attempt) {
        target = grid.sample_least_covered(gen);
        next = solve_inputs_for_target(target, u.v, z.psi, params, cfg.limits);
      }
      AccelerationTarget realized = target;
      if (!next) {
        const ProjectedInput prj =
            project_to_feasible(target, u.v, z.psi, params, cfg.limits);
        next = prj.input;
        realized = prj.realized;
      }
      grid.add(realized);

      z = sim::step(z, u, params, noise, proc);
      t.steps.push_back({z, u, {}});
      u = *next;
    }

    // Measurements are drawn after the fact, always at alpha = 1.
    Rng meas(derive_seed(seed_i, sim::kStreamMeasurement));
    for (auto& rec : t.steps)
      rec.meas = sim::measure(rec.truth, out.base_noise, meas);
    trajs.push_back(std::move(t));
  }

  out.levels.push_back(std::move(trajs));
  if (grid_out) *grid_out = grid;
  return out;
}

DatasetSplit generate_validation_set(const GenConfig& cfg,
                                     const sim::VehicleParams& params,
                                     const sim::NoiseSpec& noise,
                                     std::uint64_t master_seed) {
  cfg.validate();
  params.validate();
  noise.validate();

  DatasetSplit out;
  out.kind = SplitKind::validation;
  out.params = params;
  out.base_noise = noise.with_alpha(1.0);
  out.master_seed = master_seed;
  out.scale = cfg.scale;
  out.alpha_levels = {1.0};

  const ClothoidPath path = validation_path(cfg);
  const std::uint64_t seed =
      derive_seed(derive_seed(master_seed, kSaltValidation), 0);
  out.levels.push_back(
      {follow_path(path, cfg, params, out.base_noise, seed, cfg.validation_v0)});
  return out;
}

DatasetSplit generate_test_sets(const GenConfig& cfg,
                                const sim::VehicleParams& params,
                                const sim::NoiseSpec& noise,
                                std::uint64_t master_seed) {
  cfg.validate();
  params.validate();
  noise.validate();

  DatasetSplit out;
  out.kind = SplitKind::test;
  out.params = params;
  out.base_noise = noise.with_alpha(1.0);
  out.master_seed = master_seed;
  out.scale = cfg.scale;
  out.alpha_levels = cfg.alpha_levels;

  const int count = cfg.scaled_test_trajectories();
  const std::uint64_t split_seed = derive_seed(master_seed, kSaltTest);

  // Generate the shared ground truth once per trajectory.
  std::vector<sim::Trajectory> base;
  base.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const std::uint64_t seed_i =
        derive_seed(split_seed, static_cast<std::uint64_t>(i));
    Rng shape(derive_seed(seed_i, kStreamPathSpec));

    const int n_seg =
        cfg.test_segments_min +
        static_cast<int>(shape.uniform_index(static_cast<std::uint64_t>(
            cfg.test_segments_max - cfg.test_segments_min + 1)));
    const double kappa_cap =
        shape.uniform(cfg.test_kappa_min, cfg.test_kappa_max);
    std::vector<ClothoidSegment> segs;
    segs.reserve(static_cast<std::size_t>(n_seg));
    double k_prev = 0.0;
    for (int j = 0; j < n_seg; ++j) {
      const double len =
          shape.uniform(cfg.test_segment_len_min, cfg.test_segment_len_max);
      const double k_next = shape.uniform(-kappa_cap, kappa_cap);
      segs.push_back({len, k_prev, k_next});
      k_prev = k_next;
    }
    const ClothoidPath path =
        ClothoidPath::build(segs, {}, cfg.waypoint_spacing);

    double v0 = shape.uniform(cfg.test_v0_min, cfg.test_v0_max);
    const double kap0 = path.max_abs_curvature(0.0, cfg.curvature_preview);
    if (kap0 > 1e-9)
      v0 = clamp(std::min(v0, std::sqrt(cfg.lat_accel_budget / kap0)),
                 cfg.profile_v_min, cfg.profile_v_max);

    base.push_back(
        follow_path(path, cfg, params, out.base_noise, seed_i, v0));
  }

  // One measurement realization per alpha level over the same true states.
  out.levels.reserve(cfg.alpha_levels.size());
  for (std::size_t a = 0; a < cfg.alpha_levels.size(); ++a) {
    std::vector<sim::Trajectory> level = base;
    for (auto& traj : level)
      sim::remeasure(traj, cfg.alpha_levels[a], static_cast<std::uint64_t>(a));
    out.levels.push_back(std::move(level));
  }
  return out;
}

// --- dataset persistence -----------------------------------------------

nlohmann::json gen_config_to_json(const GenConfig& cfg) {
  return nlohmann::json{
      {"train_trajectories", cfg.train_trajectories},
      {"train_duration", cfg.train_duration},
      {"limits",
       {{"v_min", cfg.limits.v_min},
        {"v_max", cfg.limits.v_max},
        {"delta_max", cfg.limits.delta_max}}},
      {"train_v0_min", cfg.train_v0_min},
      {"train_v0_max", cfg.train_v0_max},
      {"grid_cells", cfg.grid_cells},
      {"grid_radius", cfg.grid_radius},
      {"retry_limit", cfg.retry_limit},
      {"waypoint_spacing", cfg.waypoint_spacing},
      {"lookahead_min", cfg.lookahead_min},
      {"lookahead_gain", cfg.lookahead_gain},
      {"profile_accel_min", cfg.profile_accel_min},
      {"profile_accel_max", cfg.profile_accel_max},
      {"profile_hold", cfg.profile_hold},
      {"profile_v_min", cfg.profile_v_min},
      {"profile_v_max", cfg.profile_v_max},
      {"accel_rate", cfg.accel_rate},
      {"brake_rate", cfg.brake_rate},
      {"lat_accel_budget", cfg.lat_accel_budget},
      {"curvature_preview", cfg.curvature_preview},
      {"max_follow_duration", cfg.max_follow_duration},
      {"validation_wave_length", cfg.validation_wave_length},
      {"validation_peak", cfg.validation_peak},
      {"validation_v0", cfg.validation_v0},
      {"test_trajectories", cfg.test_trajectories},
      {"test_segments_min", cfg.test_segments_min},
      {"test_segments_max", cfg.test_segments_max},
      {"test_segment_len_min", cfg.test_segment_len_min},
      {"test_segment_len_max", cfg.test_segment_len_max},
      {"test_kappa_min", cfg.test_kappa_min},
      {"test_kappa_max", cfg.test_kappa_max},
      {"test_v0_min", cfg.test_v0_min},
      {"test_v0_max", cfg.test_v0_max},
      {"alpha_levels", cfg.alpha_levels},
      {"scale", cfg.scale},
  };
}

GenConfig gen_config_from_json(const nlohmann::json& j) {
  GenConfig cfg;
  cfg.train_trajectories = j.at("train_trajectories").get<int>();
  cfg.train_duration = j.at("train_duration").get<double>();
  cfg.limits.v_min = j.at("limits").at("v_min").get<double>();
  cfg.limits.v_max = j.at("limits").at("v_max").get<double>();
  cfg.limits.delta_max = j.at("limits").at("delta_max").get<double>();
  cfg.train_v0_min = j.at("train_v0_min").get<double>();
  cfg.train_v0_max = j.at("train_v0_max").get<double>();
  cfg.grid_cells = j.at("grid_cells").get<int>();
  cfg.grid_radius = j.at("grid_radius").get<double>();
  cfg.retry_limit = j.at("retry_limit").get<int>();
  cfg.waypoint_spacing = j.at("waypoint_spacing").get<double>();
  cfg.lookahead_min = j.at("lookahead_min").get<double>();
  cfg.lookahead_gain = j.at("lookahead_gain").get<double>();
  cfg.profile_accel_min = j.at("profile_accel_min").get<double>();
  cfg.profile_accel_max = j.at("profile_accel_max").get<double>();
  cfg.profile_hold = j.at("profile_hold").get<double>();
  cfg.profile_v_min = j.at("profile_v_min").get<double>();
  cfg.profile_v_max = j.at("profile_v_max").get<double>();
  cfg.accel_rate = j.at("accel_rate").get<double>();
  cfg.brake_rate = j.at("brake_rate").get<double>();
  cfg.lat_accel_budget = j.at("lat_accel_budget").get<double>();
  cfg.curvature_preview = j.at("curvature_preview").get<double>();
  cfg.max_follow_duration = j.at("max_follow_duration").get<double>();
  cfg.validation_wave_length = j.at("validation_wave_length").get<double>();
  cfg.validation_peak = j.at("validation_peak").get<double>();
  cfg.validation_v0 = j.at("validation_v0").get<double>();
  cfg.test_trajectories = j.at("test_trajectories").get<int>();
  cfg.test_segments_min = j.at("test_segments_min").get<int>();
  cfg.test_segments_max = j.at("test_segments_max").get<int>();
  cfg.test_segment_len_min = j.at("test_segment_len_min").get<double>();
  cfg.test_segment_len_max = j.at("test_segment_len_max").get<double>();
  cfg.test_kappa_min = j.at("test_kappa_min").get<double>();
  cfg.test_kappa_max = j.at("test_kappa_max").get<double>();
  cfg.test_v0_min = j.at("test_v0_min").get<double>();
  cfg.test_v0_max = j.at("test_v0_max").get<double>();
  cfg.alpha_levels = j.at("alpha_levels").get<std::vector<double>>();
  cfg.scale = j.at("scale").get<double>();
  return cfg;
}

std::string gen_config_fingerprint(const GenConfig& cfg) {
  return io::checksum_string(io::fnv1a64(gen_config_to_json(cfg).dump()));
}

std::string split_dir_name(SplitKind kind) {
  switch (kind) {
    case SplitKind::train:
      return "train";
    case SplitKind::validation:
      return "val";
    case SplitKind::test:
      return "test";
  }
  throw std::logic_error("unknown split kind");
}

void write_grid_csv(const std::string& path, const FrictionGrid& grid) {
  std::string csv = "ix,iy,ax_center,ay_center,eligible,count\n";
  for (int iy = 0; iy < grid.cells_per_axis(); ++iy)
    for (int ix = 0; ix < grid.cells_per_axis(); ++ix) {
      const auto center = grid.cell_center(ix, iy);
      csv += std::to_string(ix) + ',' + std::to_string(iy) + ',' +
             io::format_double(center[0]) + ',' + io::format_double(center[1]) +
             ',' + (grid.cell_eligible(ix, iy) ? "1" : "0") + ',' +
             std::to_string(grid.count(ix, iy)) + '\n';
    }
  io::write_text_file(path, csv);
}

namespace {

std::string alpha_dir_name(double alpha) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "alpha_%.2f", alpha);
  return buf;
}

}  // namespace

void write_dataset(const DatasetSplit& split, const std::string& root,
                   const GenConfig& cfg, const FrictionGrid* grid) {
  io::ensure_directory(root);
  const std::string dir = root + "/" + split_dir_name(split.kind);
  io::ensure_directory(dir);

  nlohmann::json trajs = nlohmann::json::array();
  for (std::size_t a = 0; a < split.levels.size(); ++a) {
    std::string rel_prefix;
    if (split.kind == SplitKind::test) {
      rel_prefix = alpha_dir_name(split.alpha_levels[a]) + "/";
      io::ensure_directory(dir + "/" + alpha_dir_name(split.alpha_levels[a]));
    }
    for (std::size_t i = 0; i < split.levels[a].size(); ++i) {
      const auto& traj = split.levels[a][i];
      char name[32];
      std::snprintf(name, sizeof name, "traj_%04zu.csv", i + 1);
      const std::string rel = rel_prefix + name;
      const std::string csv = io::trajectory_to_csv(traj);
      io::write_text_file(dir + "/" + rel, csv);
      trajs.push_back({
          {"alpha_index", a},
          {"file", rel},
          {"seed", traj.seed},
          {"records", traj.length()},
          {"checksum", io::checksum_string(io::fnv1a64(csv))},
      });
    }
  }

  const nlohmann::json manifest{
      {"format", "obsbench-dataset-v1"},
      {"split", split_name(split.kind)},
      {"rng", io::kRngDescription},
      {"master_seed", split.master_seed},
      {"scale", split.scale},
      {"params", io::params_to_json(split.params)},
      {"noise", io::noise_to_json(split.base_noise)},
      {"provenance",
       io::provenance_fingerprint(split.params, split.base_noise)},
      {"config_fingerprint", gen_config_fingerprint(cfg)},
      {"alpha_levels", split.alpha_levels},
      {"trajectories", trajs},
  };
  io::save_json_file(dir + "/manifest.json", manifest);

  if (grid) write_grid_csv(root + "/grid.csv", *grid);
}

DatasetSplit read_dataset(const std::string& root, SplitKind kind) {
  const std::string dir = root + "/" + split_dir_name(kind);
  std::error_code ec;
  if (!std::filesystem::exists(dir + "/manifest.json", ec))
    throw std::invalid_argument("no " + split_name(kind) + " dataset under " +
                                root + "; run generate first");
  const auto manifest = io::load_json_file(dir + "/manifest.json");
  if (manifest.at("format").get<std::string>() != "obsbench-dataset-v1")
    throw std::invalid_argument("unrecognized dataset format in " + dir);

  DatasetSplit split;
  split.kind = split_from_name(manifest.at("split").get<std::string>());
  if (split.kind != kind)
    throw std::invalid_argument("manifest in " + dir +
                                " describes a different split");
  split.params = io::params_from_json(manifest.at("params"));
  split.base_noise = io::noise_from_json(manifest.at("noise"));
  split.master_seed = manifest.at("master_seed").get<std::uint64_t>();
  split.scale = manifest.at("scale").get<double>();
  split.alpha_levels = manifest.at("alpha_levels").get<std::vector<double>>();
  split.levels.resize(split.alpha_levels.size());

  for (const auto& entry : manifest.at("trajectories")) {
    const auto a = entry.at("alpha_index").get<std::size_t>();
    if (a >= split.levels.size())
      throw std::invalid_argument("trajectory references a missing noise level");
    const std::string rel = entry.at("file").get<std::string>();
    const std::string csv = io::read_text_file(dir + "/" + rel);
    const std::string want = entry.at("checksum").get<std::string>();
    const std::string got = io::checksum_string(io::fnv1a64(csv));
    if (want != got)
      throw std::invalid_argument("checksum mismatch for " + rel +
                                  ": expected " + want + ", found " + got);
    auto traj = io::trajectory_from_csv(
        csv, split.params, split.base_noise.with_alpha(split.alpha_levels[a]),
        entry.at("seed").get<std::uint64_t>());
    if (traj.length() != entry.at("records").get<int>())
      throw std::invalid_argument("record count mismatch for " + rel);
    split.levels[a].push_back(std::move(traj));
  }
  return split;
}

std::string dataset_provenance(const std::string& root, SplitKind kind) {
  const std::string path =
      root + "/" + split_dir_name(kind) + "/manifest.json";
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return "";
  try {
    return io::load_json_file(path).at("provenance").get<std::string>();
  } catch (const std::exception&) {
    return "";
  }
}

}  // namespace obsbench::datagen
