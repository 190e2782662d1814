#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "obsbench/observer.hpp"
#include "obsbench/sim.hpp"

using namespace obsbench;
using namespace obsbench::observer;

namespace {

bool same_bits(double a, double b) {
  return std::memcmp(&a, &b, sizeof a) == 0;
}

sim::Trajectory drive(int steps, std::uint64_t seed, double alpha,
                      double delta_amp = 0.1) {
  sim::VehicleParams params;
  std::vector<sim::ControlInput> inputs(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) {
    inputs[static_cast<std::size_t>(k)] = {
        9.0 + 2.0 * std::sin(0.013 * k), delta_amp * std::sin(0.021 * k)};
  }
  sim::VehicleState init{3.0, -2.0, 0.4};
  return sim::simulate(init, inputs, params,
                       sim::NoiseSpec::nominal().with_alpha(alpha), seed);
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

TEST_CASE("window enumeration") {
  const auto traj = drive(100, 7, 1.0);

  SUBCASE("counts every window of the requested length") {
    const auto windows = build_windows(traj, 60);
    REQUIRE(windows.size() == 41);
    CHECK(windows.front().end == 59);
    CHECK(windows.back().end == 99);
    for (const auto& w : windows) CHECK(w.traj == &traj);
  }

  SUBCASE("short trajectories are skipped with a note") {
    const auto short_traj = drive(30, 8, 1.0);
    std::vector<sim::Trajectory> both{short_traj, traj};
    std::string diag;
    const auto windows = build_windows(both, 60, &diag);
    CHECK(windows.size() == 41);
    CHECK(diag.find("30") != std::string::npos);
    CHECK(diag.find("60") != std::string::npos);
  }

  SUBCASE("window of one record covers everything") {
    CHECK(build_windows(traj, 1).size() == 100);
    CHECK_THROWS_AS(build_windows(traj, 0), std::invalid_argument);
  }
}

TEST_CASE("anchor context comes from the newest measurement") {
  const auto traj = drive(50, 9, 1.0);
  WindowRef w{&traj, 42};
  const auto ctx = make_context(w, NormScales{});
  const auto& anchor = traj.steps[42].meas;
  CHECK(ctx.anchor_x == anchor[0]);
  CHECK(ctx.anchor_y == anchor[1]);
  CHECK(ctx.anchor_psi == anchor[2]);

  WindowRef bad{&traj, 50};
  CHECK_THROWS_AS(make_context(bad, NormScales{}), std::invalid_argument);
  NormScales zero;
  zero.position = 0.0;
  CHECK_THROWS_AS(make_context(w, zero), std::invalid_argument);
}

TEST_CASE("feature normalization") {
  const auto traj = drive(64, 10, 1.0);
  const int n = 20;
  WindowRef w{&traj, 63};
  const auto ctx = make_context(w, NormScales{});

  SUBCASE("shapes with and without the channel axis") {
    const auto img = normalize_features(w, ctx, n, true);
    CHECK(img.shape == std::vector<int>{n, 5, 1});
    const auto seq = normalize_features(w, ctx, n, false);
    CHECK(seq.shape == std::vector<int>{n, 5});
    CHECK(img.data == seq.data);  // same values, extra axis only
  }

  SUBCASE("each row matches the hand-derived anchor-frame transform") {
    const auto f = normalize_features(w, ctx, n, false);
    const double c = std::cos(ctx.anchor_psi);
    const double s = std::sin(ctx.anchor_psi);
    for (int row = 0; row < n; ++row) {
      const auto& rec = traj.steps[static_cast<std::size_t>(63 - (n - 1) + row)];
      const double dx = rec.meas[0] - ctx.anchor_x;
      const double dy = rec.meas[1] - ctx.anchor_y;
      CHECK(f.at(row, 0) == doctest::Approx(c * dx + s * dy).epsilon(1e-14));
      CHECK(f.at(row, 1) == doctest::Approx(-s * dx + c * dy).epsilon(1e-14));
      CHECK(f.at(row, 2) ==
            doctest::Approx(sim::angle_diff(rec.meas[2], ctx.anchor_psi) / 0.05)
                .epsilon(1e-14));
      CHECK(f.at(row, 3) == doctest::Approx(rec.input.v / 30.0).epsilon(1e-14));
      CHECK(f.at(row, 4) == doctest::Approx(rec.input.delta / 0.5).epsilon(1e-14));
    }
    // newest row sits at the anchor, so its position entries vanish
    CHECK(f.at(n - 1, 0) == 0.0);
    CHECK(f.at(n - 1, 1) == 0.0);
    CHECK(f.at(n - 1, 2) == 0.0);
  }

  SUBCASE("rotating the anchor frame turns forward motion into lateral") {
    // straight east-bound markers with the anchor heading set to north
    sim::Trajectory t;
    t.steps.resize(4);
    for (int k = 0; k < 4; ++k) {
      auto& rec = t.steps[static_cast<std::size_t>(k)];
      rec.meas = {static_cast<double>(k), 0.0, 0.0};
      rec.input = {10.0, 0.0};
    }
    t.steps[3].meas[2] = M_PI / 2;  // anchor yaw
    WindowRef wr{&t, 3};
    const auto cctx = make_context(wr, NormScales{});
    const auto f = normalize_features(wr, cctx, 4, false);
    // a marker one metre behind along east maps to +1 lateral in the
    // north-facing anchor frame
    CHECK(f.at(2, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(f.at(2, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f.at(2, 2) == doctest::Approx(-M_PI / 2 / 0.05).epsilon(1e-12));
  }

  SUBCASE("rejects windows that fall off the front") {
    WindowRef wr{&traj, 10};
    CHECK_THROWS_AS(normalize_features(wr, ctx, 20, false),
                    std::invalid_argument);
  }
}

TEST_CASE("target normalization round-trips through denormalize") {
  const auto traj = drive(40, 11, 1.0);
  WindowRef w{&traj, 39};
  const auto ctx = make_context(w, NormScales{});

  Rng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    sim::VehicleState z{ctx.anchor_x + rng.uniform(-20.0, 20.0),
                        ctx.anchor_y + rng.uniform(-20.0, 20.0),
                        sim::wrap_angle(rng.uniform(-3.0, 3.0))};
    const auto t = normalize_target(z, ctx);
    const auto back = denormalize(t, ctx);
    CHECK(back.x == doctest::Approx(z.x).epsilon(1e-12));
    CHECK(back.y == doctest::Approx(z.y).epsilon(1e-12));
    CHECK(std::abs(sim::angle_diff(back.psi, z.psi)) < 1e-12);
  }

  SUBCASE("zero network output lands exactly on the anchor pose") {
    nn::Tensor zero({3});
    const auto est = denormalize(zero, ctx);
    CHECK(same_bits(est.x, ctx.anchor_x));
    CHECK(same_bits(est.y, ctx.anchor_y));
    CHECK(same_bits(est.psi, sim::wrap_angle(ctx.anchor_psi)));
  }

  SUBCASE("denormalize rejects malformed outputs") {
    nn::Tensor bad({4});
    CHECK_THROWS_AS(denormalize(bad, ctx), std::invalid_argument);
  }
}

TEST_CASE("architecture builders") {
  SUBCASE("convolutional observer parameter budget") {
    auto m60 = build_cnn(60, 1);
    CHECK(m60.kind == ObserverKind::cnn);
    CHECK(m60.window == 60);
    CHECK(m60.net.parameter_count() == 15131);
    CHECK(m60.net.validate({60, 5, 1}) == std::vector<int>{3});

    auto m20 = build_cnn(20, 1);
    CHECK(m20.net.parameter_count() == 4891);
  }

  SUBCASE("recurrent observer parameter budget") {
    auto m = build_lstm(60, 1);
    CHECK(m.kind == ObserverKind::lstm);
    CHECK(m.net.parameter_count() == 18947);
    CHECK(m.net.validate({60, 5}) == std::vector<int>{3});
    // window length never changes the recurrent parameter count
    CHECK(build_lstm(20, 1).net.parameter_count() == 18947);
  }

  SUBCASE("windows below the convolutional minimum are rejected") {
    CHECK(cnn_minimum_window() == 12);
    CHECK_THROWS_WITH_AS(build_cnn(11, 1),
                         doctest::Contains("minimum is 12"),
                         std::invalid_argument);
    CHECK_NOTHROW(build_cnn(12, 1));
  }

  SUBCASE("identical seeds build identical parameters") {
    auto a = build_observer(ObserverKind::cnn, 20, 42);
    auto b = build_observer(ObserverKind::cnn, 20, 42);
    auto c = build_observer(ObserverKind::cnn, 20, 43);
    const auto pa = a.net.params();
    const auto pb = b.net.params();
    const auto pc = c.net.params();
    bool all_equal = true, any_diff = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      all_equal = all_equal && pa[i].value->data == pb[i].value->data;
      any_diff = any_diff || pa[i].value->data != pc[i].value->data;
    }
    CHECK(all_equal);
    CHECK(any_diff);
  }

  SUBCASE("canonical window sizes") {
    for (int n : {20, 40, 60, 80}) CHECK(is_canonical_window(n));
    CHECK_FALSE(is_canonical_window(30));
  }
}

TEST_CASE("inference") {
  const auto traj = drive(80, 12, 1.0);
  auto model = build_cnn(20, 5);

  SUBCASE("is deterministic and close to the anchor while untrained") {
    const auto a = infer(model, traj, 40);
    const auto b = infer(model, traj, 40);
    CHECK(same_bits(a.x, b.x));
    CHECK(same_bits(a.y, b.y));
    CHECK(same_bits(a.psi, b.psi));
    // untrained sigmoid head keeps outputs order-one, so the estimate
    // stays within tens of metres of the anchor
    CHECK(std::abs(a.x - traj.steps[40].meas[0]) < 100.0);
  }

  SUBCASE("rejects ends that do not fit the window") {
    CHECK_THROWS_AS(infer(model, traj, 18), std::invalid_argument);
    CHECK_THROWS_AS(infer(model, traj, 80), std::invalid_argument);
    CHECK_NOTHROW(infer(model, traj, 19));
  }

  SUBCASE("depends only on measurements and inputs, never on the truth") {
    auto scrubbed = traj;
    for (auto& rec : scrubbed.steps) rec.truth = sim::VehicleState{};
    const auto a = infer(model, traj, 60);
    const auto b = infer(model, scrubbed, 60);
    CHECK(same_bits(a.x, b.x));
    CHECK(same_bits(a.y, b.y));
    CHECK(same_bits(a.psi, b.psi));
  }
}

TEST_CASE("translation equivariance of the estimate") {
  // Synthetic window whose coordinates are multiples of 2^-16, so adding a
  // modest translation is exact in floating point.
  const int n = 20;
  const double quantum = 1.0 / 65536.0;
  Rng rng(77);
  sim::Trajectory base;
  base.steps.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    auto& rec = base.steps[static_cast<std::size_t>(k)];
    rec.meas = {std::round(rng.uniform(-8.0, 8.0) / quantum) * quantum,
                std::round(rng.uniform(-8.0, 8.0) / quantum) * quantum,
                rng.uniform(-0.4, 0.4)};
    rec.input = {rng.uniform(6.0, 14.0), rng.uniform(-0.3, 0.3)};
  }
  // anchor sits exactly at the origin
  base.steps.back().meas[0] = 0.0;
  base.steps.back().meas[1] = 0.0;

  const double tx = 512.0, ty = -256.0;
  sim::Trajectory moved = base;
  for (auto& rec : moved.steps) {
    rec.meas[0] += tx;
    rec.meas[1] += ty;
  }

  for (auto kind : {ObserverKind::cnn, ObserverKind::lstm}) {
    auto model = build_observer(kind, n, 99);
    const auto a = infer(model, base, n - 1);
    const auto b = infer(model, moved, n - 1);
    CHECK(same_bits(a.x + tx, b.x));
    CHECK(same_bits(a.y + ty, b.y));
    CHECK(same_bits(a.psi, b.psi));
  }

  SUBCASE("approximate equivariance holds from arbitrary anchors too") {
    const auto traj = drive(60, 13, 1.0);
    sim::Trajectory shifted = traj;
    for (auto& rec : shifted.steps) {
      rec.meas[0] += 137.25;
      rec.meas[1] -= 41.5;
    }
    auto model = build_cnn(20, 3);
    const auto a = infer(model, traj, 59);
    const auto b = infer(model, shifted, 59);
    CHECK(b.x - a.x == doctest::Approx(137.25).epsilon(1e-9));
    CHECK(b.y - a.y == doctest::Approx(-41.5).epsilon(1e-9));
    CHECK(std::abs(sim::angle_diff(b.psi, a.psi)) < 1e-9);
  }

  SUBCASE("rotating the world rotates the estimate") {
    const auto traj = drive(60, 14, 1.0);
    sim::Trajectory rotated = traj;
    for (auto& rec : rotated.steps) {
      const double mx = rec.meas[0], my = rec.meas[1];
      rec.meas[0] = -my;
      rec.meas[1] = mx;
      rec.meas[2] = sim::wrap_angle(rec.meas[2] + M_PI / 2);
    }
    auto model = build_lstm(20, 3);
    const auto a = infer(model, traj, 59);
    const auto b = infer(model, rotated, 59);
    CHECK(b.x == doctest::Approx(-a.y).epsilon(1e-9));
    CHECK(b.y == doctest::Approx(a.x).epsilon(1e-9));
    CHECK(std::abs(sim::angle_diff(b.psi, a.psi + M_PI / 2)) < 1e-9);
  }
}

TEST_CASE("training") {
  // Noise-free data puts the target exactly on the anchor, so the training
  // signal is a pure drive-the-output-to-zero problem with a known floor.
  std::vector<sim::Trajectory> train_set;
  for (int i = 0; i < 3; ++i)
    train_set.push_back(drive(120, 100 + static_cast<std::uint64_t>(i), 0.0));
  std::vector<sim::Trajectory> val_set{drive(80, 200, 0.0)};

  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.batch_size = 64;
  cfg.max_epochs = 40;
  cfg.patience = 40;
  cfg.seed = 11;

  SUBCASE("drives validation error to the noise-free floor") {
    auto model = build_cnn(20, 21);
    const auto history = train(model, train_set, val_set, cfg);
    REQUIRE(!history.epochs.empty());
    CHECK(history.best_val_mse < 1e-3);
    CHECK(history.best_val_mse <= history.epochs.front().val_mse);
    CHECK_FALSE(history.diverged);
    // the model is left holding the winning epoch's parameters
    const auto val_windows = build_windows(val_set, model.window);
    CHECK(evaluate_mse(model, val_windows) == history.best_val_mse);
    CHECK(!model.training_fingerprint.empty());
  }

  SUBCASE("identical configuration reproduces the run bit for bit") {
    auto m1 = build_cnn(20, 21);
    auto m2 = build_cnn(20, 21);
    TrainConfig short_cfg = cfg;
    short_cfg.max_epochs = 4;
    const auto h1 = train(m1, train_set, val_set, short_cfg);
    const auto h2 = train(m2, train_set, val_set, short_cfg);
    REQUIRE(h1.epochs.size() == h2.epochs.size());
    for (std::size_t i = 0; i < h1.epochs.size(); ++i) {
      CHECK(same_bits(h1.epochs[i].train_mse, h2.epochs[i].train_mse));
      CHECK(same_bits(h1.epochs[i].val_mse, h2.epochs[i].val_mse));
    }
    const auto p1 = m1.net.params();
    const auto p2 = m2.net.params();
    for (std::size_t i = 0; i < p1.size(); ++i)
      CHECK(p1[i].value->data == p2[i].value->data);

    TrainConfig other = short_cfg;
    other.seed = 12;
    auto m3 = build_cnn(20, 21);
    const auto h3 = train(m3, train_set, val_set, other);
    CHECK(h3.epochs.front().train_mse != h1.epochs.front().train_mse);
  }

  SUBCASE("patience ends stalled runs early") {
    auto model = build_cnn(20, 21);
    TrainConfig stall = cfg;
    stall.max_epochs = 400;
    stall.patience = 4;
    const auto history = train(model, train_set, val_set, stall);
    CHECK(history.stopped_early);
    CHECK(history.epochs.back().epoch == history.best_epoch + 4);
    CHECK(static_cast<int>(history.epochs.size()) < 400);
  }

  SUBCASE("runaway steps trip the divergence guard and keep the checkpoint") {
    auto model = build_cnn(20, 21);
    TrainConfig wild = cfg;
    wild.method = nn::OptimizerConfig::Method::sgd;
    wild.learning_rate = 1e9;
    wild.max_epochs = 50;
    const auto history = train(model, train_set, val_set, wild);
    CHECK(history.diverged);
    // parameters roll back to the best finite epoch (or the initial state)
    for (double v : model.net.params()[0].value->data) CHECK(std::isfinite(v));
  }

  SUBCASE("rejects empty splits and bad settings") {
    auto model = build_cnn(20, 21);
    std::vector<sim::Trajectory> empty;
    CHECK_THROWS_AS(train(model, empty, val_set, cfg), std::invalid_argument);
    CHECK_THROWS_AS(train(model, train_set, empty, cfg), std::invalid_argument);
    TrainConfig bad = cfg;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(train(model, train_set, val_set, bad), std::invalid_argument);
    bad = cfg;
    bad.patience = 0;
    CHECK_THROWS_AS(train(model, train_set, val_set, bad), std::invalid_argument);
  }
}

TEST_CASE("hyperparameter grid search picks the lowest validation error") {
  std::vector<sim::Trajectory> train_set{drive(90, 300, 0.0)};
  std::vector<sim::Trajectory> val_set{drive(60, 301, 0.0)};

  GridSearchSpec grids;
  grids.learning_rates = {1e-2, 1e-5};
  grids.batch_sizes = {32, 64};
  TrainConfig budget;
  budget.max_epochs = 3;
  budget.patience = 3;
  budget.seed = 17;

  const auto result =
      grid_search(ObserverKind::cnn, 20, grids, train_set, val_set, budget);
  REQUIRE(result.points.size() == 4);
  std::size_t argmin = 0;
  for (std::size_t i = 1; i < result.points.size(); ++i)
    if (result.points[i].val_mse < result.points[argmin].val_mse) argmin = i;
  CHECK(result.best_index == argmin);
  CHECK(result.best().val_mse == result.points[argmin].val_mse);
  CHECK(std::isfinite(result.best().val_mse));
  // grid points walk learning rates in the declared order
  CHECK(result.points[0].learning_rate == 1e-2);
  CHECK(result.points[0].batch_size == 32);
  CHECK(result.points[3].learning_rate == 1e-5);
  CHECK(result.points[3].batch_size == 64);

  GridSearchSpec empty;
  CHECK_THROWS_AS(
      grid_search(ObserverKind::cnn, 20, empty, train_set, val_set, budget),
      std::invalid_argument);
}

TEST_CASE("saving and loading preserves inference bit for bit") {
  TempDir dir("obsbench_observer_io_test");
  const auto traj = drive(70, 15, 1.0);

  for (auto kind : {ObserverKind::cnn, ObserverKind::lstm}) {
    auto model = build_observer(kind, 20, 31);
    model.data_fingerprint = "fp-data";
    model.training_fingerprint = "fp-train";
    const std::string name = observer_kind_name(kind) + "_n20";
    save_observer(model, dir.str(), name);
    CHECK(std::filesystem::exists(dir.path / (name + ".model")));
    CHECK(std::filesystem::exists(dir.path / (name + ".meta.json")));

    auto back = load_observer(dir.str(), name);
    CHECK(back.kind == model.kind);
    CHECK(back.window == model.window);
    CHECK(back.data_fingerprint == "fp-data");
    CHECK(back.training_fingerprint == "fp-train");

    for (int end : {19, 40, 69}) {
      const auto a = infer(model, traj, end);
      const auto b = infer(back, traj, end);
      CHECK(same_bits(a.x, b.x));
      CHECK(same_bits(a.y, b.y));
      CHECK(same_bits(a.psi, b.psi));
    }
  }

  CHECK_THROWS(load_observer(dir.str(), "missing_model"));
}
