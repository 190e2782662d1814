#include "obsbench/io.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace obsbench::io {

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::string checksum_string(std::uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + tmp);
    out << content;
    if (!out) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void ensure_directory(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec && !std::filesystem::is_directory(path))
    throw std::runtime_error("cannot create directory " + path + ": " +
                             ec.message());
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

void append_double(std::string& out, double v) {
  char buf[40];
  const int n = std::snprintf(buf, sizeof(buf), "%.17g", v);
  out.append(buf, static_cast<std::size_t>(n));
}

double parse_double(const std::string& field, const std::string& context) {
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (end == field.c_str() || *end != '\0')
    throw std::runtime_error("bad numeric field '" + field + "' in " + context);
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::string trajectory_to_csv(const sim::Trajectory& traj) {
  std::string out = "k,t,x,y,psi,v,delta,xm,ym,psim\n";
  out.reserve(out.size() + traj.steps.size() * 200);
  for (int k = 0; k < traj.length(); ++k) {
    const sim::StepRecord& r = traj.steps[static_cast<std::size_t>(k)];
    out += std::to_string(k + 1);
    out += ',';
    append_double(out, traj.time_at(k));
    for (double v : {r.truth.x, r.truth.y, r.truth.psi, r.input.v,
                     r.input.delta, r.meas[0], r.meas[1], r.meas[2]}) {
      out += ',';
      append_double(out, v);
    }
    out += '\n';
  }
  return out;
}

sim::Trajectory trajectory_from_csv(const std::string& csv,
                                    const sim::VehicleParams& params,
                                    const sim::NoiseSpec& noise,
                                    std::uint64_t seed) {
  sim::Trajectory traj;
  traj.params = params;
  traj.noise = noise;
  traj.seed = seed;

  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty trajectory csv");
  if (line.size() && line.back() == '\r') line.pop_back();
  if (line != "k,t,x,y,psi,v,delta,xm,ym,psim")
    throw std::runtime_error("unexpected trajectory csv header: " + line);

  int expected_k = 1;
  while (std::getline(in, line)) {
    if (line.size() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 10)
      throw std::runtime_error("trajectory csv row has " +
                               std::to_string(f.size()) + " fields");
    const std::string ctx = "trajectory csv row " + std::to_string(expected_k);
    if (std::stoi(f[0]) != expected_k)
      throw std::runtime_error("non-contiguous record index in " + ctx);
    sim::StepRecord rec;
    rec.truth.x = parse_double(f[2], ctx);
    rec.truth.y = parse_double(f[3], ctx);
    rec.truth.psi = parse_double(f[4], ctx);
    rec.input.v = parse_double(f[5], ctx);
    rec.input.delta = parse_double(f[6], ctx);
    rec.meas = {parse_double(f[7], ctx), parse_double(f[8], ctx),
                parse_double(f[9], ctx)};
    traj.steps.push_back(rec);
    ++expected_k;
  }
  return traj;
}

void write_trajectory_csv(const std::string& path,
                          const sim::Trajectory& traj) {
  write_text_file(path, trajectory_to_csv(traj));
}

void write_estimates_csv(const std::string& path, const EstimateSeries& est) {
  const bool with_cov = !est.cov_diag.empty();
  if (with_cov && est.cov_diag.size() != est.states.size())
    throw std::invalid_argument("estimate covariances do not match states");
  std::string out = with_cov ? "k,x_hat,y_hat,psi_hat,P00,P11,P22\n"
                             : "k,x_hat,y_hat,psi_hat\n";
  for (std::size_t i = 0; i < est.states.size(); ++i) {
    out += std::to_string(est.first_index + static_cast<int>(i) + 1);
    for (double v : {est.states[i].x, est.states[i].y, est.states[i].psi}) {
      out += ',';
      append_double(out, v);
    }
    if (with_cov) {
      for (double v : est.cov_diag[i]) {
        out += ',';
        append_double(out, v);
      }
    }
    out += '\n';
  }
  write_text_file(path, out);
}

json params_to_json(const sim::VehicleParams& p) {
  return json{{"wheelbase", p.wheelbase}, {"dt", p.dt}};
}

sim::VehicleParams params_from_json(const json& j) {
  sim::VehicleParams p;
  p.wheelbase = j.at("wheelbase").get<double>();
  p.dt = j.at("dt").get<double>();
  p.validate();
  return p;
}

json noise_to_json(const sim::NoiseSpec& n) {
  return json{{"sigma_proc", n.sigma_proc},
              {"sigma_meas_base", n.sigma_meas_base},
              {"alpha", n.alpha}};
}

sim::NoiseSpec noise_from_json(const json& j) {
  sim::NoiseSpec n;
  n.sigma_proc = j.at("sigma_proc").get<std::array<double, 3>>();
  n.sigma_meas_base = j.at("sigma_meas_base").get<std::array<double, 3>>();
  n.alpha = j.at("alpha").get<double>();
  n.validate();
  return n;
}

std::string provenance_fingerprint(const sim::VehicleParams& p,
                                   const sim::NoiseSpec& noise) {
  // alpha is re-scanned at evaluation time, so it is not part of identity.
  sim::NoiseSpec base = noise.with_alpha(1.0);
  json j{{"params", params_to_json(p)},
         {"noise", noise_to_json(base)},
         {"rng", kRngDescription}};
  return checksum_string(fnv1a64(j.dump()));
}

json load_json_file(const std::string& path) {
  return json::parse(read_text_file(path));
}

void save_json_file(const std::string& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace obsbench::io
