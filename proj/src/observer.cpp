#include "obsbench/observer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "obsbench/io.hpp"

namespace obsbench::observer {

namespace {

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

}  // namespace

void NormScales::validate() const {
  if (!(position > 0.0) || !(heading > 0.0) || !(speed > 0.0) ||
      !(steer > 0.0))
    throw std::invalid_argument("normalization scales must be positive");
}

std::string observer_kind_name(ObserverKind kind) {
  return kind == ObserverKind::cnn ? "cnn" : "lstm";
}

ObserverKind observer_kind_from_name(const std::string& name) {
  if (name == "cnn") return ObserverKind::cnn;
  if (name == "lstm") return ObserverKind::lstm;
  throw std::invalid_argument("unknown observer kind: " + name);
}

bool is_canonical_window(int n) {
  return n == 20 || n == 40 || n == 60 || n == 80;
}

std::vector<WindowRef> build_windows(const sim::Trajectory& traj, int n,
                                     std::string* diagnostic) {
  if (n < 1) throw std::invalid_argument("window length must be >= 1");
  std::vector<WindowRef> out;
  const int len = traj.length();
  if (len < n) {
    if (diagnostic)
      *diagnostic += "trajectory of length " + std::to_string(len) +
                     " is shorter than window " + std::to_string(n) + "\n";
    return out;
  }
  out.reserve(static_cast<std::size_t>(len - n + 1));
  for (int end = n - 1; end < len; ++end) out.push_back({&traj, end});
  return out;
}

std::vector<WindowRef> build_windows(const std::vector<sim::Trajectory>& trajs,
                                     int n, std::string* diagnostic) {
  std::vector<WindowRef> out;
  for (const auto& traj : trajs) {
    auto w = build_windows(traj, n, diagnostic);
    out.insert(out.end(), w.begin(), w.end());
  }
  return out;
}

NormalizationContext make_context(const WindowRef& w,
                                  const NormScales& scales) {
  scales.validate();
  if (!w.traj || w.end < 0 || w.end >= w.traj->length())
    throw std::invalid_argument("window does not reference a valid record");
  const auto& anchor = w.traj->steps[static_cast<std::size_t>(w.end)].meas;
  NormalizationContext ctx;
  ctx.anchor_x = anchor[0];
  ctx.anchor_y = anchor[1];
  ctx.anchor_psi = anchor[2];
  ctx.scales = scales;
  return ctx;
}

nn::Tensor normalize_features(const WindowRef& w,
                              const NormalizationContext& ctx, int n,
                              bool channel_axis) {
  if (!w.traj || w.end < n - 1 || w.end >= w.traj->length())
    throw std::invalid_argument("window does not cover n records");
  nn::Tensor out(channel_axis ? std::vector<int>{n, 5, 1}
                              : std::vector<int>{n, 5});
  const double c = std::cos(ctx.anchor_psi);
  const double s = std::sin(ctx.anchor_psi);
  for (int row = 0; row < n; ++row) {
    const auto& rec =
        w.traj->steps[static_cast<std::size_t>(w.end - (n - 1) + row)];
    const double dx = rec.meas[0] - ctx.anchor_x;
    const double dy = rec.meas[1] - ctx.anchor_y;
    double* dst = out.data.data() + static_cast<std::size_t>(row) * 5;
    dst[0] = (c * dx + s * dy) / ctx.scales.position;
    dst[1] = (-s * dx + c * dy) / ctx.scales.position;
    dst[2] = sim::angle_diff(rec.meas[2], ctx.anchor_psi) / ctx.scales.heading;
    dst[3] = rec.input.v / ctx.scales.speed;
    dst[4] = rec.input.delta / ctx.scales.steer;
  }
  return out;
}

nn::Tensor normalize_target(const sim::VehicleState& truth,
                            const NormalizationContext& ctx) {
  nn::Tensor out({3});
  const double c = std::cos(ctx.anchor_psi);
  const double s = std::sin(ctx.anchor_psi);
  const double dx = truth.x - ctx.anchor_x;
  const double dy = truth.y - ctx.anchor_y;
  out.data[0] = (c * dx + s * dy) / ctx.scales.position;
  out.data[1] = (-s * dx + c * dy) / ctx.scales.position;
  out.data[2] = sim::angle_diff(truth.psi, ctx.anchor_psi) / ctx.scales.heading;
  return out;
}

sim::VehicleState denormalize(const nn::Tensor& out,
                         const NormalizationContext& ctx) {
  if (out.size() != 3)
    throw std::invalid_argument("denormalize expects a 3-component output");
  const double c = std::cos(ctx.anchor_psi);
  const double s = std::sin(ctx.anchor_psi);
  const double px = out.data[0] * ctx.scales.position;
  const double py = out.data[1] * ctx.scales.position;
  sim::VehicleState z;
  z.x = ctx.anchor_x + (c * px - s * py);
  z.y = ctx.anchor_y + (s * px + c * py);
  z.psi = sim::wrap_angle(ctx.anchor_psi + out.data[2] * ctx.scales.heading);
  return z;
}

const sim::VehicleState& window_target(const WindowRef& w) {
  return w.traj->steps[static_cast<std::size_t>(w.end)].truth;
}

int cnn_minimum_window() {
  // Two 5-wide valid convolutions remove 8 temporal rows and the 4-wide pool
  // needs at least one full window after them.
  return 12;
}

namespace {

nn::Network cnn_network(int n) {
  using nn::Activation;
  using nn::LayerSpec;
  nn::Network net;
  net.add(LayerSpec::Conv(5, 1, 1, 8));
  net.add(LayerSpec::Act(Activation::sigmoid));
  net.add(LayerSpec::Conv(5, 1, 8, 8));
  net.add(LayerSpec::MaxPool(4, 1));
  net.add(LayerSpec::Act(Activation::sigmoid));
  net.add(LayerSpec::Conv(1, 3, 8, 16));
  net.add(LayerSpec::Act(Activation::sigmoid));
  net.add(LayerSpec::Conv(1, 3, 16, 16));
  net.add(LayerSpec::Act(Activation::sigmoid));
  net.add(LayerSpec::Flatten());
  const int flat = ((n - 8) / 4) * 1 * 16;
  net.add(LayerSpec::Dense(flat, 64, Activation::sigmoid));
  net.add(LayerSpec::Dense(64, 3, Activation::identity));
  net.validate({n, 5, 1});
  return net;
}

nn::Network lstm_network(int n) {
  using nn::Activation;
  using nn::LayerSpec;
  nn::Network net;
  net.add(LayerSpec::Lstm(5, 8, true));
  net.add(LayerSpec::Lstm(8, 16, true));
  net.add(LayerSpec::Lstm(16, 32, true));
  net.add(LayerSpec::Lstm(32, 32, false));
  net.add(LayerSpec::Dense(32, 64, Activation::sigmoid));
  net.add(LayerSpec::Dense(64, 3, Activation::identity));
  net.validate({n, 5});
  return net;
}

}  // namespace

ObserverModel build_cnn(int n, std::uint64_t seed) {
  if (n < cnn_minimum_window())
    throw std::invalid_argument(
        "cnn window " + std::to_string(n) + " is infeasible; minimum is " +
        std::to_string(cnn_minimum_window()));
  ObserverModel m;
  m.kind = ObserverKind::cnn;
  m.window = n;
  m.net = cnn_network(n);
  Rng rng(derive_seed(seed, kStreamObserverInit));
  nn::xavier_init(m.net, rng);
  return m;
}

ObserverModel build_lstm(int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("lstm window must be >= 1");
  ObserverModel m;
  m.kind = ObserverKind::lstm;
  m.window = n;
  m.net = lstm_network(n);
  Rng rng(derive_seed(seed, kStreamObserverInit));
  nn::xavier_init(m.net, rng);
  return m;
}

ObserverModel build_observer(ObserverKind kind, int n, std::uint64_t seed) {
  return kind == ObserverKind::cnn ? build_cnn(n, seed) : build_lstm(n, seed);
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("learning rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("max epochs must be >= 1");
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (max_seconds < 0.0)
    throw std::invalid_argument("time budget must be >= 0");
}

namespace {

struct Snapshot {
  std::vector<nn::Tensor> values;
};

Snapshot take_snapshot(nn::Network& net) {
  Snapshot s;
  for (auto& p : net.params()) s.values.push_back(*p.value);
  return s;
}

void restore_snapshot(nn::Network& net, const Snapshot& s) {
  auto params = net.params();
  for (std::size_t i = 0; i < params.size(); ++i)
    *params[i].value = s.values[i];
}

std::string train_config_fingerprint(const TrainConfig& cfg) {
  nlohmann::json j{
      {"learning_rate", cfg.learning_rate},
      {"batch_size", cfg.batch_size},
      {"max_epochs", cfg.max_epochs},
      {"patience", cfg.patience},
      {"seed", cfg.seed},
      {"method",
       cfg.method == nn::OptimizerConfig::Method::adam ? "adam" : "sgd"},
  };
  return io::checksum_string(io::fnv1a64(j.dump()));
}

}  // namespace

double evaluate_mse(ObserverModel& model,
                    const std::vector<WindowRef>& windows) {
  if (windows.empty())
    throw std::invalid_argument("evaluate_mse needs at least one window");
  const bool channel_axis = model.kind == ObserverKind::cnn;
  double sum = 0.0;
  for (const auto& w : windows) {
    const auto ctx = make_context(w, model.scales);
    const auto features =
        normalize_features(w, ctx, model.window, channel_axis);
    const auto target = normalize_target(window_target(w), ctx);
    const auto out = model.net.forward(features);
    sum += nn::mse_loss(out, target).value;
  }
  return sum / static_cast<double>(windows.size());
}

TrainHistory train(ObserverModel& model,
                   const std::vector<sim::Trajectory>& train_trajs,
                   const std::vector<sim::Trajectory>& val_trajs,
                   const TrainConfig& cfg) {
  cfg.validate();
  const auto train_windows = build_windows(train_trajs, model.window);
  const auto val_windows = build_windows(val_trajs, model.window);
  if (train_windows.empty())
    throw std::invalid_argument("training split yields no windows");
  if (val_windows.empty())
    throw std::invalid_argument("validation split yields no windows");

  const bool channel_axis = model.kind == ObserverKind::cnn;
  const auto start = std::chrono::steady_clock::now();

  nn::OptimizerConfig opt_cfg;
  opt_cfg.method = cfg.method;
  opt_cfg.learning_rate = cfg.learning_rate;
  nn::Optimizer optimizer(opt_cfg, model.net);

  Rng shuffle_rng(derive_seed(cfg.seed, kStreamShuffle));
  std::vector<std::size_t> order(train_windows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainHistory history;
  history.best_val_mse = std::numeric_limits<double>::infinity();
  Snapshot best = take_snapshot(model.net);  // last good checkpoint
  int stale = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    // Fisher-Yates with the session's own stream keeps runs reproducible.
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = shuffle_rng.uniform_index(i);
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    bool finite = true;
    for (std::size_t base = 0; base < order.size();
         base += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t batch_n =
          std::min(static_cast<std::size_t>(cfg.batch_size),
                   order.size() - base);
      model.net.zero_grad();
      double batch_loss = 0.0;
      for (std::size_t bi = 0; bi < batch_n; ++bi) {
        const auto& w = train_windows[order[base + bi]];
        const auto ctx = make_context(w, model.scales);
        const auto features =
            normalize_features(w, ctx, model.window, channel_axis);
        const auto target = normalize_target(window_target(w), ctx);
        const auto out = model.net.forward(features);
        auto loss = nn::mse_loss(out, target);
        batch_loss += loss.value;
        model.net.backward(loss.grad);
      }
      if (!std::isfinite(batch_loss)) {
        finite = false;
        break;
      }
      optimizer.step(1.0 / static_cast<double>(batch_n));
      epoch_loss += batch_loss;
    }

    if (!finite) {
      history.diverged = true;
      break;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_mse = epoch_loss / static_cast<double>(order.size());
    stats.val_mse = evaluate_mse(model, val_windows);
    history.epochs.push_back(stats);

    if (!std::isfinite(stats.val_mse)) {
      history.diverged = true;
      break;
    }

    if (stats.val_mse < history.best_val_mse) {
      history.best_val_mse = stats.val_mse;
      history.best_epoch = epoch;
      best = take_snapshot(model.net);
      stale = 0;
    } else {
      ++stale;
    }

    if (stale >= cfg.patience) {
      history.stopped_early = true;
      break;
    }
    if (cfg.max_seconds > 0.0 && elapsed_seconds(start) > cfg.max_seconds) {
      history.hit_time_budget = true;
      break;
    }
  }

  restore_snapshot(model.net, best);
  model.training_fingerprint = train_config_fingerprint(cfg);
  return history;
}

GridSearchResult grid_search(ObserverKind kind, int n,
                             const GridSearchSpec& grids,
                             const std::vector<sim::Trajectory>& train_trajs,
                             const std::vector<sim::Trajectory>& val_trajs,
                             const TrainConfig& budget) {
  if (grids.learning_rates.empty() || grids.batch_sizes.empty())
    throw std::invalid_argument(
        "grid search needs at least one learning rate and one batch size");
  GridSearchResult result;
  double best = std::numeric_limits<double>::infinity();
  std::uint64_t point_index = 0;
  for (double lr : grids.learning_rates) {
    for (int batch : grids.batch_sizes) {
      TrainConfig cfg = budget;
      cfg.learning_rate = lr;
      cfg.batch_size = batch;
      ObserverModel model =
          build_observer(kind, n, derive_seed(cfg.seed, point_index));
      GridPoint point;
      point.learning_rate = lr;
      point.batch_size = batch;
      point.history = train(model, train_trajs, val_trajs, cfg);
      point.val_mse = point.history.best_epoch > 0
                          ? point.history.best_val_mse
                          : std::numeric_limits<double>::infinity();
      if (point.val_mse < best) {
        best = point.val_mse;
        result.best_index = result.points.size();
      }
      result.points.push_back(std::move(point));
      ++point_index;
    }
  }
  return result;
}

sim::VehicleState infer(ObserverModel& model, const sim::Trajectory& traj, int end) {
  if (end < model.window - 1 || end >= traj.length())
    throw std::invalid_argument(
        "window of length " + std::to_string(model.window) +
        " ending at record " + std::to_string(end) +
        " does not fit a trajectory of length " +
        std::to_string(traj.length()));
  WindowRef w{&traj, end};
  return infer(model, w);
}

sim::VehicleState infer(ObserverModel& model, const WindowRef& w) {
  const auto ctx = make_context(w, model.scales);
  const auto features = normalize_features(
      w, ctx, model.window, model.kind == ObserverKind::cnn);
  const auto out = model.net.forward(features);
  return denormalize(out, ctx);
}

void save_observer(const ObserverModel& model, const std::string& dir,
                   const std::string& name) {
  io::ensure_directory(dir);
  const nlohmann::json net_json = nn::network_to_json(model.net);
  io::write_text_file(dir + "/" + name + ".model", net_json.dump(2) + "\n");
  nlohmann::json meta{
      {"kind", observer_kind_name(model.kind)},
      {"window", model.window},
      {"canonical_window", is_canonical_window(model.window)},
      {"scales",
       {{"position", model.scales.position},
        {"heading", model.scales.heading},
        {"speed", model.scales.speed},
        {"steer", model.scales.steer}}},
      {"data_fingerprint", model.data_fingerprint},
      {"training_fingerprint", model.training_fingerprint},
  };
  io::write_text_file(dir + "/" + name + ".meta.json", meta.dump(2) + "\n");
}

ObserverModel load_observer(const std::string& dir, const std::string& name) {
  const auto meta =
      nlohmann::json::parse(io::read_text_file(dir + "/" + name + ".meta.json"));
  ObserverModel m;
  m.kind = observer_kind_from_name(meta.at("kind").get<std::string>());
  m.window = meta.at("window").get<int>();
  m.scales.position = meta.at("scales").at("position").get<double>();
  m.scales.heading = meta.at("scales").at("heading").get<double>();
  m.scales.speed = meta.at("scales").at("speed").get<double>();
  m.scales.steer = meta.at("scales").at("steer").get<double>();
  m.data_fingerprint = meta.at("data_fingerprint").get<std::string>();
  m.training_fingerprint = meta.at("training_fingerprint").get<std::string>();
  m.net = nn::network_from_json(
      nlohmann::json::parse(io::read_text_file(dir + "/" + name + ".model")));
  const std::vector<int> input_shape =
      m.kind == ObserverKind::cnn ? std::vector<int>{m.window, 5, 1}
                                  : std::vector<int>{m.window, 5};
  m.net.validate(input_shape);
  return m;
}

}  // namespace obsbench::observer
