#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "obsbench/sim.hpp"

namespace obsbench::io {

using nlohmann::json;

// FNV-1a 64-bit over raw bytes. Cheap, stable across platforms, good enough
// for detecting that a file or config is not the one a manifest promised.
std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64(const std::string& s);
std::string checksum_string(std::uint64_t h);  // "fnv1a64:<16 hex digits>"

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
void ensure_directory(const std::string& path);

// Doubles are written with %.17g so a write/read round trip is bit exact.
std::string format_double(double v);

// --- trajectory CSV ------------------------------------------------------
// Columns: k,t,x,y,psi,v,delta,xm,ym,psim with k starting at 1. Truth and
// measurement live side by side so a file alone is enough to score an
// observer on that trajectory.

std::string trajectory_to_csv(const sim::Trajectory& traj);

// Parses records only; params/noise/seed come from the dataset manifest and
// must be supplied by the caller.
sim::Trajectory trajectory_from_csv(const std::string& csv,
                                    const sim::VehicleParams& params,
                                    const sim::NoiseSpec& noise,
                                    std::uint64_t seed);

void write_trajectory_csv(const std::string& path, const sim::Trajectory& traj);

// --- estimate CSV --------------------------------------------------------

struct EstimateSeries {
  std::vector<sim::VehicleState> states;
  // Diagonal of the error covariance when the observer provides one (EKF);
  // empty for learned observers.
  std::vector<std::array<double, 3>> cov_diag;
  // Record index of the first estimate; learned observers only produce
  // estimates once a full window is available.
  int first_index = 0;
};

void write_estimates_csv(const std::string& path, const EstimateSeries& est);

// --- json helpers --------------------------------------------------------

json params_to_json(const sim::VehicleParams& p);
sim::VehicleParams params_from_json(const json& j);
json noise_to_json(const sim::NoiseSpec& n);
sim::NoiseSpec noise_from_json(const json& j);

// Fingerprint of the physical setup (vehicle params + noise spec + rng
// algorithm). Shared by dataset manifests and model sidecars; evaluation
// refuses to mix artifacts whose fingerprints disagree.
std::string provenance_fingerprint(const sim::VehicleParams& p,
                                   const sim::NoiseSpec& noise);

json load_json_file(const std::string& path);
void save_json_file(const std::string& path, const json& j);

inline constexpr const char* kRngDescription =
    "xoshiro256** / splitmix64 substreams / Box-Muller";

}  // namespace obsbench::io
