#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "obsbench/datagen.hpp"
#include "obsbench/io.hpp"
#include "obsbench/rng.hpp"
#include "obsbench/sim.hpp"

using namespace obsbench;
using namespace obsbench::datagen;

namespace {

bool same_bits(double a, double b) {
  return std::memcmp(&a, &b, sizeof a) == 0;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("input transitions map to the expected accelerations") {
  sim::VehicleParams p;

  SUBCASE("pure longitudinal") {
    const auto a = accelerations_from_inputs(5.0, 5.2, 0.0, 0.0, p);
    CHECK(a.ax == doctest::Approx(10.0));
    CHECK(a.ay == doctest::Approx(0.0));
  }

  SUBCASE("pure lateral") {
    const auto a = accelerations_from_inputs(5.0, 5.0, 0.05, 0.0, p);
    CHECK(a.ax == doctest::Approx(0.0));
    CHECK(a.ay == doctest::Approx(0.4633491516253591).epsilon(1e-12));
  }

  SUBCASE("heading rotates the pair into the global frame") {
    const auto body = accelerations_from_inputs(6.0, 6.4, 0.1, 0.0, p);
    const auto rot = accelerations_from_inputs(6.0, 6.4, 0.1, sim::kPi / 2, p);
    CHECK(rot.ax == doctest::Approx(-body.ay).epsilon(1e-12));
    CHECK(rot.ay == doctest::Approx(body.ax).epsilon(1e-12));
  }
}

TEST_CASE("acceleration targets invert exactly") {
  sim::VehicleParams p;
  InputLimits lim;

  SUBCASE("longitudinal target") {
    const auto u = solve_inputs_for_target({10.0, 0.0}, 5.0, 0.0, p, lim);
    REQUIRE(u.has_value());
    CHECK(u->v == doctest::Approx(5.2));
    CHECK(u->delta == doctest::Approx(0.0));
  }

  SUBCASE("lateral target") {
    const auto u = solve_inputs_for_target({0.0, 2.0}, 5.0, 0.0, p, lim);
    REQUIRE(u.has_value());
    CHECK(u->v == doctest::Approx(5.0));
    CHECK(u->delta == doctest::Approx(0.21273178069161025).epsilon(1e-12));
  }

  SUBCASE("infeasible targets are refused") {
    // would need V(k+1) = 5 + 2000*0.02 = 45 > v_max
    CHECK(!solve_inputs_for_target({2000.0, 0.0}, 5.0, 0.0, p, lim));
    // would need tan(delta) far past the steering limit
    CHECK(!solve_inputs_for_target({0.0, 200.0}, 2.0, 0.0, p, lim));
  }

  SUBCASE("random feasible targets round-trip to 1e-9") {
    Rng rng(2718);
    int checked = 0;
    while (checked < 1000) {
      const double v_k = rng.uniform(1.0, 25.0);
      const double psi = rng.uniform(-sim::kPi, sim::kPi);
      const double r = 0.5 * kGravity * std::sqrt(rng.uniform());
      const double phi = rng.uniform(0.0, 2.0 * sim::kPi);
      const AccelerationTarget t{r * std::cos(phi), r * std::sin(phi)};
      const auto u = solve_inputs_for_target(t, v_k, psi, p, lim);
      if (!u) continue;
      const auto back =
          accelerations_from_inputs(v_k, u->v, u->delta, psi, p);
      CHECK(back.ax == doctest::Approx(t.ax).epsilon(1e-9));
      CHECK(back.ay == doctest::Approx(t.ay).epsilon(1e-9));
      ++checked;
    }
  }
}

TEST_CASE("projection clamps infeasible targets to realizable inputs") {
  sim::VehicleParams p;
  InputLimits lim;
  Rng rng(99);

  for (int i = 0; i < 200; ++i) {
    const double v_k = rng.uniform(1.0, 25.0);
    const double psi = rng.uniform(-sim::kPi, sim::kPi);
    const AccelerationTarget wild{rng.uniform(-60.0, 60.0),
                                  rng.uniform(-60.0, 60.0)};
    const auto pr = project_to_feasible(wild, v_k, psi, p, lim);
    CHECK(pr.input.v >= lim.v_min);
    CHECK(pr.input.v <= lim.v_max);
    CHECK(std::abs(pr.input.delta) <= lim.delta_max + 1e-12);
    // the reported realization is what the clamped inputs actually produce
    const auto back =
        accelerations_from_inputs(v_k, pr.input.v, pr.input.delta, psi, p);
    CHECK(back.ax == doctest::Approx(pr.realized.ax).epsilon(1e-9));
    CHECK(back.ay == doctest::Approx(pr.realized.ay).epsilon(1e-9));
  }
}

TEST_CASE("friction grid bookkeeping") {
  FrictionGrid grid(64, 0.5 * kGravity);

  SUBCASE("eligible cell count matches a direct scan") {
    int expected = 0;
    for (int iy = 0; iy < 64; ++iy)
      for (int ix = 0; ix < 64; ++ix) {
        const auto c = grid.cell_center(ix, iy);
        if (std::hypot(c[0], c[1]) <= 0.5 * kGravity) ++expected;
        CHECK(grid.cell_eligible(ix, iy) ==
              (std::hypot(c[0], c[1]) <= 0.5 * kGravity));
      }
    CHECK(grid.eligible_cells() == expected);
  }

  SUBCASE("adds accumulate and coverage counts occupied cells") {
    CHECK(grid.coverage() == 0.0);
    grid.add({0.1, 0.1});
    grid.add({0.1, 0.1});
    grid.add({-2.0, 1.0});
    CHECK(grid.total_count() == 3);
    CHECK(grid.occupied_eligible_cells() == 2);
    CHECK(grid.occupied_eligible_cells(2) == 1);
    CHECK(grid.coverage() ==
          doctest::Approx(2.0 / grid.eligible_cells()));
    // far outside the disc: ignored, not counted
    grid.add({100.0, 100.0});
    CHECK(grid.total_count() == 3);
  }

  SUBCASE("least-covered sampling balances the histogram") {
    Rng rng(7);
    const int rounds = 3 * grid.eligible_cells();
    for (int i = 0; i < rounds; ++i) grid.add(grid.sample_least_covered(rng));
    int lo = 1 << 30, hi = 0;
    for (int iy = 0; iy < 64; ++iy)
      for (int ix = 0; ix < 64; ++ix) {
        if (!grid.cell_eligible(ix, iy)) continue;
        lo = std::min(lo, grid.count(ix, iy));
        hi = std::max(hi, grid.count(ix, iy));
      }
    CHECK(lo == 3);
    CHECK(hi == 3);
  }

  SUBCASE("sampled targets stay inside an eligible least-count cell") {
    Rng rng(8);
    for (int i = 0; i < 500; ++i) {
      const auto t = grid.sample_least_covered(rng);
      const double w = grid.cell_width();
      const int ix = static_cast<int>(std::floor((t.ax + 0.5 * kGravity) / w));
      const int iy = static_cast<int>(std::floor((t.ay + 0.5 * kGravity) / w));
      CHECK(grid.in_bounds(ix, iy));
      CHECK(grid.cell_eligible(ix, iy));
      CHECK(grid.count(ix, iy) == 0);  // nothing added, min stays 0
    }
  }
}

TEST_CASE("clothoid paths against closed forms") {
  const sim::VehicleState origin{0.0, 0.0, 0.0};

  SUBCASE("zero curvature is a straight line") {
    const auto path = ClothoidPath::build({{100.0, 0.0, 0.0}}, origin, 0.1);
    CHECK(path.length() == doctest::Approx(100.0));
    const auto end = path.at(100.0);
    CHECK(end.x == doctest::Approx(100.0).epsilon(1e-9));
    CHECK(end.y == doctest::Approx(0.0).epsilon(1e-9));
    const auto mid = path.at(42.5);
    CHECK(mid.x == doctest::Approx(42.5).epsilon(1e-9));
    CHECK(mid.heading == doctest::Approx(0.0));
  }

  SUBCASE("constant curvature is a circle") {
    const double R = 20.0;
    const double len = 0.5 * sim::kPi * R;  // quarter turn
    const auto path =
        ClothoidPath::build({{len, 1.0 / R, 1.0 / R}}, origin, 0.1);
    for (double s : {5.0, 13.7, len}) {
      const auto pt = path.at(s);
      const double th = s / R;
      CHECK(pt.x == doctest::Approx(R * std::sin(th)).epsilon(1e-6));
      CHECK(pt.y == doctest::Approx(R * (1.0 - std::cos(th))).epsilon(1e-6));
      CHECK(pt.heading == doctest::Approx(th).epsilon(1e-9));
      CHECK(pt.curvature == doctest::Approx(1.0 / R));
    }
  }

  SUBCASE("linear curvature ramp matches numeric integration") {
    const double L = 40.0, k1 = 0.05;
    const auto path = ClothoidPath::build({{L, 0.0, k1}}, origin, 0.1);
    // oracle: theta(s) = k1 s^2 / (2L); positions by fine Simpson integration
    auto theta = [&](double s) { return k1 * s * s / (2.0 * L); };
    for (double s : {10.0, 25.0, L}) {
      const int n = 40000;  // even
      const double h = s / n;
      double sx = std::cos(theta(0.0)) + std::cos(theta(s));
      double sy = std::sin(theta(0.0)) + std::sin(theta(s));
      for (int i = 1; i < n; ++i) {
        const double w = (i % 2 == 1) ? 4.0 : 2.0;
        sx += w * std::cos(theta(i * h));
        sy += w * std::sin(theta(i * h));
      }
      const auto pt = path.at(s);
      CHECK(pt.x == doctest::Approx(sx * h / 3.0).epsilon(1e-6));
      CHECK(pt.y == doctest::Approx(sy * h / 3.0).epsilon(1e-6));
      CHECK(pt.heading == doctest::Approx(theta(s)).epsilon(1e-9));
    }
  }

  SUBCASE("multi-segment headings stay continuous") {
    const auto path = ClothoidPath::build(
        {{20.0, 0.0, 0.04}, {20.0, 0.04, -0.02}, {15.0, -0.02, 0.0}}, origin,
        0.1);
    CHECK(path.length() == doctest::Approx(55.0));
    const auto& wp = path.waypoints();
    REQUIRE(wp.size() > 100);
    for (std::size_t i = 1; i < wp.size(); ++i) {
      CHECK(wp[i].s > wp[i - 1].s);
      // heading increments stay near kappa * ds
      const double ds = wp[i].s - wp[i - 1].s;
      CHECK(std::abs(wp[i].heading - wp[i - 1].heading) <= 0.05 * ds + 1e-9);
    }
  }

  SUBCASE("at() clamps outside the arc range") {
    const auto path = ClothoidPath::build({{30.0, 0.0, 0.0}}, origin, 0.1);
    CHECK(path.at(-5.0).x == doctest::Approx(path.at(0.0).x));
    CHECK(path.at(500.0).x == doctest::Approx(path.at(30.0).x));
  }

  SUBCASE("cross-track error of an offset point") {
    const auto path = ClothoidPath::build({{50.0, 0.0, 0.0}}, origin, 0.1);
    CHECK(path.cross_track_error(25.0, 1.5) == doctest::Approx(1.5).epsilon(1e-3));
    CHECK(path.cross_track_error(25.0, -0.75) == doctest::Approx(0.75).epsilon(1e-3));
  }

  SUBCASE("degenerate specs are rejected") {
    CHECK_THROWS_AS(ClothoidPath::build({}, origin, 0.1),
                    std::invalid_argument);
    CHECK_THROWS_AS(ClothoidPath::build({{-1.0, 0.0, 0.0}}, origin, 0.1),
                    std::invalid_argument);
  }
}

TEST_CASE("pure pursuit steering") {
  sim::VehicleParams p;
  const sim::VehicleState origin{0.0, 0.0, 0.0};

  SUBCASE("aligned on a straight path gives zero steering") {
    const auto path = ClothoidPath::build({{100.0, 0.0, 0.0}}, origin, 0.1);
    PursuitCursor cur;
    const auto d = pure_pursuit_steer(path, {10.0, 0.0, 0.0}, 3.0, p, 0.5, cur);
    REQUIRE(d.has_value());
    CHECK(*d == doctest::Approx(0.0).epsilon(1e-9));
  }

  SUBCASE("offset vehicle steers back toward the path") {
    const auto path = ClothoidPath::build({{100.0, 0.0, 0.0}}, origin, 0.1);
    PursuitCursor cur;
    const auto left = pure_pursuit_steer(path, {10.0, 2.0, 0.0}, 5.0, p, 0.5, cur);
    REQUIRE(left.has_value());
    CHECK(*left < 0.0);  // path lies to the right
    PursuitCursor cur2;
    const auto right = pure_pursuit_steer(path, {10.0, -2.0, 0.0}, 5.0, p, 0.5, cur2);
    REQUIRE(right.has_value());
    CHECK(*right > 0.0);
  }

  SUBCASE("closed loop converges onto a circular arc") {
    const double R = 20.0;
    const auto path = ClothoidPath::build(
        {{1.5 * sim::kPi * R, 1.0 / R, 1.0 / R}}, origin, 0.1);
    sim::VehicleState z{0.0, -0.5, 0.0};  // half a meter off the path
    Rng rng(1);
    PursuitCursor cur;
    const auto zero = sim::NoiseSpec::zero();
    double cte_at_5s = 1e9;
    for (int k = 0; k < 500; ++k) {
      const auto d = pure_pursuit_steer(path, z, 3.0, p, 0.5, cur);
      REQUIRE(d.has_value());
      z = sim::step(z, {5.0, *d}, p, zero, rng);
      if (k == 249) cte_at_5s = path.cross_track_error(z.x, z.y);
    }
    CHECK(cte_at_5s < 0.2);
    CHECK(path.cross_track_error(z.x, z.y) < 0.2);
  }

  SUBCASE("signals completion past the end of the path") {
    const auto path = ClothoidPath::build({{10.0, 0.0, 0.0}}, origin, 0.1);
    PursuitCursor cur;
    const auto d = pure_pursuit_steer(path, {9.5, 0.0, 0.0}, 3.0, p, 0.5, cur);
    CHECK(!d.has_value());
  }
}

TEST_CASE("validation wave path and split") {
  auto cfg = GenConfig::defaults();
  const auto params = sim::VehicleParams{};
  const auto noise = sim::NoiseSpec::nominal();

  SUBCASE("wave geometry alternates to +-5 m over 200 m") {
    const auto path = validation_path(cfg);
    CHECK(path.length() == doctest::Approx(200.0).epsilon(1e-6));
    double ymax = -1e9, ymin = 1e9;
    for (const auto& wp : path.waypoints()) {
      ymax = std::max(ymax, wp.y);
      ymin = std::min(ymin, wp.y);
    }
    CHECK(ymax == doctest::Approx(5.0).epsilon(0.1));
    CHECK(ymin == doctest::Approx(-5.0).epsilon(0.1));
    // the wave closes: back near the centerline at the far end
    CHECK(std::abs(path.at(200.0).y) < 1.0);
  }

  SUBCASE("split holds one trajectory of roughly a thousand records") {
    const auto split = generate_validation_set(cfg, params, noise, 8888);
    REQUIRE(split.levels.size() == 1);
    REQUIRE(split.levels[0].size() == 1);
    CHECK(split.alpha_levels == std::vector<double>{1.0});
    const int n = split.levels[0][0].length();
    CHECK(n >= 945);
    CHECK(n <= 1045);
  }
}

TEST_CASE("training set generation at small scale") {
  auto cfg = GenConfig::defaults();
  cfg.scale = 0.01;
  const auto params = sim::VehicleParams{};
  const auto noise = sim::NoiseSpec::nominal();
  FrictionGrid grid(cfg.grid_cells, cfg.grid_radius);
  const auto split = generate_training_set(cfg, params, noise, 4242, &grid);

  SUBCASE("scaling arithmetic is exact") {
    CHECK(cfg.scaled_train_trajectories() == 10);
    REQUIRE(split.levels.size() == 1);
    CHECK(split.trajectory_count() == 10);
    CHECK(split.true_records() == 20000);
    for (const auto& t : split.levels[0])
      CHECK(t.length() == 2000);  // 40 s at 50 Hz
  }

  SUBCASE("inputs respect the actuation limits") {
    for (const auto& t : split.levels[0])
      for (const auto& rec : t.steps) {
        CHECK(rec.input.v >= cfg.limits.v_min);
        CHECK(rec.input.v <= cfg.limits.v_max);
        CHECK(std::abs(rec.input.delta) <= cfg.limits.delta_max + 1e-12);
      }
  }

  SUBCASE("realized accelerations spread over the disc") {
    CHECK(grid.total_count() > 15000);
    CHECK(grid.coverage() > 0.4);
  }

  SUBCASE("regeneration is bit-identical, other seeds are not") {
    FrictionGrid g2(cfg.grid_cells, cfg.grid_radius);
    const auto again = generate_training_set(cfg, params, noise, 4242, &g2);
    const auto other = generate_training_set(cfg, params, noise, 4243, nullptr);
    const auto& a = split.levels[0][3].steps;
    const auto& b = again.levels[0][3].steps;
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); k += 97) {
      CHECK(same_bits(a[k].truth.x, b[k].truth.x));
      CHECK(same_bits(a[k].meas[1], b[k].meas[1]));
      CHECK(same_bits(a[k].input.delta, b[k].input.delta));
    }
    CHECK(!same_bits(a[5].truth.x, other.levels[0][3].steps[5].truth.x));
  }
}

TEST_CASE("test split shares ground truth across the alpha grid") {
  auto cfg = GenConfig::defaults();
  cfg.scale = 0.2;  // 3 trajectories
  const auto params = sim::VehicleParams{};
  const auto noise = sim::NoiseSpec::nominal();
  const auto split = generate_test_sets(cfg, params, noise, 777);

  SUBCASE("full default alpha grid") {
    const auto grid = default_alpha_grid();
    REQUIRE(grid.size() == 25);
    CHECK(grid.front() == 0.0);
    CHECK(grid.back() == 6.0);
    CHECK(grid[1] == 0.25);
    CHECK(split.alpha_levels == grid);
    REQUIRE(split.levels.size() == 25);
  }

  SUBCASE("scaled trajectory count") {
    CHECK(cfg.scaled_test_trajectories() == 3);
    CHECK(split.trajectory_count() == 3);
  }

  SUBCASE("identical truths, level-specific measurements") {
    const auto& base = split.levels[4];  // alpha = 1.0
    for (std::size_t lvl = 0; lvl < split.levels.size(); ++lvl) {
      REQUIRE(split.levels[lvl].size() == base.size());
      for (std::size_t i = 0; i < base.size(); ++i) {
        const auto& ta = base[i].steps;
        const auto& tb = split.levels[lvl][i].steps;
        REQUIRE(ta.size() == tb.size());
        for (std::size_t k = 0; k < ta.size(); k += 131) {
          CHECK(same_bits(ta[k].truth.x, tb[k].truth.x));
          CHECK(same_bits(ta[k].truth.psi, tb[k].truth.psi));
        }
      }
    }
    // alpha = 0: measurements equal the truth exactly
    CHECK(split.find_level(0.0) == 0);
    for (const auto& t : split.levels[0])
      for (const auto& rec : t.steps) {
        CHECK(rec.meas[0] == rec.truth.x);
        CHECK(rec.meas[2] == rec.truth.psi);
      }
    // alpha = 1 vs alpha = 6 differ
    const int i6 = split.find_level(6.0);
    REQUIRE(i6 == 24);
    CHECK(!same_bits(split.levels[4][0].steps[7].meas[0],
                     split.levels[24][0].steps[7].meas[0]));
  }

  SUBCASE("start speeds come from the configured window") {
    for (const auto& t : split.levels[0]) {
      const double v0 = t.steps.front().input.v;
      CHECK(v0 >= cfg.test_v0_min - 0.11);  // first step may already slew
      CHECK(v0 <= cfg.test_v0_max + 0.11);
    }
  }
}

TEST_CASE("split naming") {
  CHECK(split_name(SplitKind::train) == "train");
  CHECK(split_name(SplitKind::validation) == "validation");
  CHECK(split_name(SplitKind::test) == "test");
  CHECK(split_from_name("train") == SplitKind::train);
  CHECK(split_from_name("val") == SplitKind::validation);
  CHECK(split_from_name("validation") == SplitKind::validation);
  CHECK(split_from_name("test") == SplitKind::test);
  CHECK_THROWS_AS(split_from_name("bogus"), std::invalid_argument);
  CHECK(split_dir_name(SplitKind::train) == "train");
  CHECK(split_dir_name(SplitKind::validation) == "val");
  CHECK(split_dir_name(SplitKind::test) == "test");
}

TEST_CASE("gen config serialization and fingerprint") {
  auto cfg = GenConfig::defaults();
  const auto j = gen_config_to_json(cfg);
  const auto back = gen_config_from_json(j);
  CHECK(gen_config_fingerprint(back) == gen_config_fingerprint(cfg));

  auto tweaked = cfg;
  tweaked.train_duration = 41.0;
  CHECK(gen_config_fingerprint(tweaked) != gen_config_fingerprint(cfg));

  auto rescaled = cfg;
  rescaled.scale = 0.05;
  // scale is part of the fingerprint: a desk dataset is not a full dataset
  CHECK(gen_config_fingerprint(rescaled) != gen_config_fingerprint(cfg));
}

TEST_CASE("dataset round trip through disk") {
  TempDir tmp("obsbench_datagen_rt");
  auto cfg = GenConfig::defaults();
  cfg.scale = 0.05;  // validation stays a single trajectory; keep test tiny
  const auto params = sim::VehicleParams{};
  const auto noise = sim::NoiseSpec::nominal();

  const auto split = generate_validation_set(cfg, params, noise, 1001);
  write_dataset(split, tmp.str(), cfg, nullptr);

  SUBCASE("values survive bit-exactly") {
    const auto back = read_dataset(tmp.str(), SplitKind::validation);
    CHECK(back.kind == SplitKind::validation);
    CHECK(back.master_seed == split.master_seed);
    CHECK(back.alpha_levels == split.alpha_levels);
    REQUIRE(back.trajectory_count() == split.trajectory_count());
    const auto& a = split.levels[0][0];
    const auto& b = back.levels[0][0];
    REQUIRE(a.length() == b.length());
    for (int k = 0; k < a.length(); ++k) {
      const auto& ra = a.steps[static_cast<std::size_t>(k)];
      const auto& rb = b.steps[static_cast<std::size_t>(k)];
      CHECK(same_bits(ra.truth.x, rb.truth.x));
      CHECK(same_bits(ra.truth.y, rb.truth.y));
      CHECK(same_bits(ra.truth.psi, rb.truth.psi));
      CHECK(same_bits(ra.input.v, rb.input.v));
      CHECK(same_bits(ra.input.delta, rb.input.delta));
      CHECK(same_bits(ra.meas[0], rb.meas[0]));
      CHECK(same_bits(ra.meas[1], rb.meas[1]));
      CHECK(same_bits(ra.meas[2], rb.meas[2]));
    }
    CHECK(dataset_provenance(tmp.str(), SplitKind::validation) != "");
  }

  SUBCASE("tampered payloads are refused") {
    const std::string dir = tmp.str() + "/val";
    std::string victim;
    for (const auto& e : std::filesystem::directory_iterator(dir))
      if (e.path().extension() == ".csv") victim = e.path().string();
    REQUIRE(!victim.empty());
    auto text = io::read_text_file(victim);
    text[text.size() / 2] = (text[text.size() / 2] == '5') ? '6' : '5';
    io::write_text_file(victim, text);
    CHECK_THROWS_AS(read_dataset(tmp.str(), SplitKind::validation),
                    std::invalid_argument);
  }

  SUBCASE("missing split reports a validation error") {
    CHECK_THROWS_AS(read_dataset(tmp.str(), SplitKind::test),
                    std::invalid_argument);
    CHECK(dataset_provenance(tmp.str(), SplitKind::test) == "");
  }
}

TEST_CASE("config validation rejects physically inconsistent values") {
  auto cfg = GenConfig::defaults();
  cfg.validate();

  auto bad = cfg;
  bad.scale = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.alpha_levels = {0.5, -0.25};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.test_kappa_min = 0.1;  // above kappa_max
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  InputLimits lim;
  lim.v_min = -1.0;
  CHECK_THROWS_AS(lim.validate(), std::invalid_argument);
}
