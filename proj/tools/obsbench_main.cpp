// Command-line front end: generate datasets, train observers, run the noise
// sweep, and render reports. Exit codes: 0 success, 1 usage, 2 validation,
// 3 runtime failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "obsbench/config.hpp"
#include "obsbench/datagen.hpp"
#include "obsbench/ekf.hpp"
#include "obsbench/eval.hpp"
#include "obsbench/io.hpp"
#include "obsbench/observer.hpp"
#include "obsbench/sim.hpp"

namespace {

using namespace obsbench;

config::RunConfig load_config(const std::string& config_path) {
  config::RunConfig cfg = config_path.empty()
                              ? config::RunConfig::defaults()
                              : config::load_run_config(config_path);
  config::apply_env_overrides(cfg);
  return cfg;
}

std::string alpha_label(double alpha) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", alpha);
  return buf;
}

int cmd_generate(const config::RunConfig& cfg, const std::string& split_arg) {
  cfg.validate();
  const auto kind = datagen::split_from_name(split_arg);
  datagen::DatasetSplit split;
  datagen::FrictionGrid grid(cfg.gen.grid_cells, cfg.gen.grid_radius);
  const datagen::FrictionGrid* grid_ptr = nullptr;

  switch (kind) {
    case datagen::SplitKind::train:
      split = datagen::generate_training_set(cfg.gen, cfg.params, cfg.noise,
                                             cfg.master_seed, &grid);
      grid_ptr = &grid;
      break;
    case datagen::SplitKind::validation:
      split = datagen::generate_validation_set(cfg.gen, cfg.params, cfg.noise,
                                               cfg.master_seed);
      break;
    case datagen::SplitKind::test:
      split = datagen::generate_test_sets(cfg.gen, cfg.params, cfg.noise,
                                          cfg.master_seed);
      break;
  }

  datagen::write_dataset(split, cfg.dataset_dir, cfg.gen, grid_ptr);
  std::cout << "wrote " << datagen::split_name(kind) << " split: "
            << split.trajectory_count() << " trajectories, "
            << split.true_records() << " records";
  if (split.levels.size() > 1)
    std::cout << " x " << split.levels.size() << " noise levels";
  std::cout << " -> " << cfg.dataset_dir << "/"
            << datagen::split_dir_name(kind) << "\n";
  if (grid_ptr) {
    std::cout << "friction grid coverage: "
              << grid.occupied_eligible_cells() << "/" << grid.eligible_cells()
              << " eligible cells occupied\n";
  }
  return 0;
}

std::string model_name(observer::ObserverKind kind, int window) {
  return observer::observer_kind_name(kind) + "_n" + std::to_string(window);
}

void write_history_csv(const std::string& path,
                       const observer::TrainHistory& history) {
  std::string csv = "epoch,train_mse,val_mse\n";
  for (const auto& e : history.epochs)
    csv += std::to_string(e.epoch) + ',' + io::format_double(e.train_mse) +
           ',' + io::format_double(e.val_mse) + '\n';
  io::write_text_file(path, csv);
}

int cmd_train(const config::RunConfig& cfg, const std::string& kind_arg,
              int window, bool do_grid_search) {
  cfg.validate();
  const auto kind = observer::observer_kind_from_name(kind_arg);

  const auto train_split =
      datagen::read_dataset(cfg.dataset_dir, datagen::SplitKind::train);
  const auto val_split =
      datagen::read_dataset(cfg.dataset_dir, datagen::SplitKind::validation);
  const auto& train_trajs = train_split.levels.at(0);
  const auto& val_trajs = val_split.levels.at(0);

  if (!observer::is_canonical_window(window))
    std::cout << "note: window " << window
              << " is outside the benchmark set {20, 40, 60, 80}\n";

  if (do_grid_search) {
    observer::GridSearchSpec grids;
    grids.learning_rates = {1e-2, 2e-3, 1e-4};
    grids.batch_sizes = {128, 256};
    observer::TrainConfig budget = cfg.training;
    budget.max_epochs = std::min(budget.max_epochs, 5);
    const auto result = observer::grid_search(kind, window, grids, train_trajs,
                                              val_trajs, budget);
    std::cout << "grid search over " << result.points.size() << " points:\n";
    for (const auto& p : result.points)
      std::cout << "  lr=" << p.learning_rate << " batch=" << p.batch_size
                << " val_mse=" << p.val_mse << "\n";
    const auto& best = result.best();
    std::cout << "selected lr=" << best.learning_rate
              << " batch=" << best.batch_size << "\n";
    return 0;
  }

  const std::uint64_t build_seed = derive_seed(
      cfg.master_seed,
      static_cast<std::uint64_t>(window) +
          (kind == observer::ObserverKind::lstm ? 1000u : 0u));
  auto model = observer::build_observer(kind, window, build_seed);
  model.data_fingerprint =
      datagen::dataset_provenance(cfg.dataset_dir, datagen::SplitKind::train);

  const auto history =
      observer::train(model, train_trajs, val_trajs, cfg.training);
  if (history.diverged)
    std::cout << "warning: training diverged; keeping the best checkpoint\n";
  if (history.hit_time_budget)
    std::cout << "note: wall-clock budget reached\n";

  const std::string name = model_name(kind, window);
  observer::save_observer(model, cfg.model_dir, name);
  write_history_csv(cfg.model_dir + "/" + name + ".history.csv", history);
  std::cout << "trained " << name << ": " << history.epochs.size()
            << " epochs, best validation mse "
            << io::format_double(history.best_val_mse) << " at epoch "
            << history.best_epoch << "\n";
  std::cout << "saved " << cfg.model_dir << "/" << name << ".model\n";
  return 0;
}

struct EvalArgs {
  std::vector<std::string> observers{"ekf"};
  std::string weights_mode = "frozen";
  std::optional<double> alpha;
  bool dump_estimates = false;
};

eval::NrmseWeights pick_weights(const std::string& mode,
                                const eval::Observer& ekf_obs,
                                const datagen::DatasetSplit& test) {
  if (mode == "frozen") return eval::NrmseWeights::frozen();
  if (mode != "calibrated")
    throw std::invalid_argument("weights mode must be frozen or calibrated");
  const int level = test.find_level(1.0);
  if (level < 0)
    throw std::invalid_argument(
        "calibrated weights need an alpha=1 level in the test split");
  const auto report = eval::evaluate_observer(
      ekf_obs, test.levels[static_cast<std::size_t>(level)], 1.0, 0);
  return eval::calibrate_reference(report, false);
}

void dump_estimates(const config::RunConfig& cfg, const eval::Observer& obs,
                    const std::vector<sim::Trajectory>& trajs, double alpha,
                    const ekf::EkfConfig* ekf_cfg) {
  const std::string dir = cfg.report_dir + "/estimates";
  io::ensure_directory(cfg.report_dir);
  io::ensure_directory(dir);
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    io::EstimateSeries series;
    if (ekf_cfg) {
      const auto run = ekf::run_ekf(trajs[i], *ekf_cfg);
      series.states = run.estimates;
      series.cov_diag = run.cov_diag;
      series.first_index = 0;
    } else {
      const auto estimates = obs.run(trajs[i]);
      series.first_index = obs.warmup;
      series.states.assign(
          estimates.begin() + obs.warmup, estimates.end());
    }
    char name[128];
    std::snprintf(name, sizeof name, "%s_alpha%s_traj%04zu.csv",
                  obs.name.c_str(), alpha_label(alpha).c_str(), i + 1);
    io::write_estimates_csv(dir + "/" + name, series);
  }
}

int cmd_evaluate(const config::RunConfig& cfg, const EvalArgs& args,
                 bool quiet_summary) {
  cfg.validate();
  const auto test =
      datagen::read_dataset(cfg.dataset_dir, datagen::SplitKind::test);
  const std::string provenance =
      datagen::dataset_provenance(cfg.dataset_dir, datagen::SplitKind::test);

  const auto ekf_cfg = ekf::EkfConfig::reference(test.params, test.base_noise);
  std::vector<eval::Observer> observers;
  for (const auto& name : args.observers) {
    if (name == "ekf") {
      observers.push_back(eval::make_ekf_observer(ekf_cfg));
      continue;
    }
    if (name == "identity") {
      observers.push_back(eval::make_identity_observer());
      continue;
    }
    auto model = observer::load_observer(cfg.model_dir, name);
    if (!model.data_fingerprint.empty() && !provenance.empty() &&
        model.data_fingerprint != provenance)
      throw std::invalid_argument(
          "model " + name + " was trained against a different setup (" +
          model.data_fingerprint + ") than the test dataset (" + provenance +
          ")");
    observers.push_back(eval::make_learned_observer(model));
  }

  const auto weights =
      pick_weights(args.weights_mode, observers.front().name == "ekf"
                                          ? observers.front()
                                          : eval::make_ekf_observer(ekf_cfg),
                   test);

  if (args.alpha) {
    const int level = test.find_level(*args.alpha);
    if (level < 0)
      throw std::invalid_argument("alpha " + alpha_label(*args.alpha) +
                                  " is not a level of the test split");
    const auto& trajs = test.levels[static_cast<std::size_t>(level)];
    int warmup = 0;
    for (const auto& o : observers) warmup = std::max(warmup, o.warmup);
    std::cout << "alpha = " << alpha_label(*args.alpha)
              << " (x [m], y [m], psi [mrad], nrmse):\n";
    for (const auto& obs : observers) {
      const auto report =
          eval::evaluate_observer(obs, trajs, *args.alpha, warmup);
      std::printf("  %-10s %8.4f %8.4f %8.4f %8.4f\n", obs.name.c_str(),
                  report.rmse.x, report.rmse.y, report.rmse.psi * 1e3,
                  eval::nrmse(report.rmse, weights));
      if (args.dump_estimates)
        dump_estimates(cfg, obs, trajs, *args.alpha,
                       obs.name == "ekf" ? &ekf_cfg : nullptr);
    }
    return 0;
  }

  const auto table = eval::sweep(observers, test, weights, cfg.jobs);
  eval::emit_report(cfg.report_dir, table, weights);

  // Mirror the generator's coverage dump next to the sweep tables when the
  // training split left one behind.
  const std::string grid_src = cfg.dataset_dir + "/grid.csv";
  std::error_code ec;
  if (std::filesystem::exists(grid_src, ec))
    io::write_text_file(cfg.report_dir + "/grid_coverage.csv",
                        io::read_text_file(grid_src));

  if (!quiet_summary)
    std::cout << io::read_text_file(cfg.report_dir + "/summary.txt");
  std::cout << "report written to " << cfg.report_dir << "\n";
  return 0;
}

// Rebuilds summary.txt (and normalized tables) from the CSVs a previous
// evaluate run left in the report directory.
int cmd_report(const config::RunConfig& cfg) {
  cfg.validate();
  const std::string sweep_path = cfg.report_dir + "/nrmse_sweep.csv";
  std::error_code ec;
  if (!std::filesystem::exists(sweep_path, ec))
    throw std::invalid_argument("no sweep table at " + sweep_path +
                                "; run evaluate first");

  eval::SweepTable table;
  {
    std::istringstream in(io::read_text_file(sweep_path));
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream row(line);
      std::string obs, alpha_s, nrmse_s;
      std::getline(row, obs, ',');
      std::getline(row, alpha_s, ',');
      std::getline(row, nrmse_s, ',');
      const double alpha = std::stod(alpha_s);
      if (std::find(table.observers.begin(), table.observers.end(), obs) ==
          table.observers.end())
        table.observers.push_back(obs);
      if (table.observers.size() == 1) table.alphas.push_back(alpha);
      eval::SweepCell cell;
      cell.observer = obs;
      cell.alpha = alpha;
      cell.nrmse = std::stod(nrmse_s);
      table.cells.push_back(std::move(cell));
    }
  }
  if (table.cells.size() != table.observers.size() * table.alphas.size())
    throw std::invalid_argument("sweep table is incomplete or reordered");

  // RMSE columns for the alpha = 1 / 6 sections of the summary.
  for (const std::string stem : {"rmse_alpha1", "rmse_alpha6"}) {
    const std::string path = cfg.report_dir + "/" + stem + ".csv";
    if (!std::filesystem::exists(path, ec)) continue;
    std::istringstream in(io::read_text_file(path));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream row(line);
      std::string obs, alpha_s, x_s, y_s, psi_s, n_s;
      std::getline(row, obs, ',');
      std::getline(row, alpha_s, ',');
      std::getline(row, x_s, ',');
      std::getline(row, y_s, ',');
      std::getline(row, psi_s, ',');
      std::getline(row, n_s, ',');
      const double alpha = std::stod(alpha_s);
      for (std::size_t i = 0; i < table.observers.size(); ++i) {
        if (table.observers[i] != obs) continue;
        for (std::size_t a = 0; a < table.alphas.size(); ++a) {
          if (std::abs(table.alphas[a] - alpha) > 1e-9) continue;
          auto& cell = table.cells[i * table.alphas.size() + a];
          cell.rmse = {std::stod(x_s), std::stod(y_s), std::stod(psi_s)};
          cell.samples = std::stoll(n_s);
        }
      }
    }
  }

  eval::emit_report(cfg.report_dir, table, eval::NrmseWeights::frozen());
  std::cout << io::read_text_file(cfg.report_dir + "/summary.txt");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kinematic-bicycle state observer benchmark"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON run configuration file");

  auto* gen = app.add_subcommand("generate", "generate a dataset split");
  std::string split_arg;
  gen->add_option("--split", split_arg, "train, val, or test")->required();
  double scale_arg = -1.0;
  gen->add_option("--scale", scale_arg,
                  "shrink trajectory counts by this factor");
  std::string out_arg;
  gen->add_option("--out", out_arg, "dataset directory override");
  std::uint64_t seed_arg = 0;
  auto* gen_seed = gen->add_option("--seed", seed_arg, "master seed override");

  auto* train = app.add_subcommand("train", "train a learned observer");
  std::string kind_arg;
  train->add_option("--kind", kind_arg, "cnn or lstm")->required();
  int window_arg = 60;
  train->add_option("--window,--N", window_arg, "input window length");
  double lr_arg = -1.0;
  train->add_option("--lr", lr_arg, "learning rate override");
  int batch_arg = -1;
  train->add_option("--batch", batch_arg, "mini-batch size override");
  int max_epochs_arg = -1;
  train->add_option("--max-epochs", max_epochs_arg, "epoch cap override");
  int patience_arg = -1;
  train->add_option("--patience", patience_arg, "early-stopping patience");
  double max_seconds_arg = -1.0;
  train->add_option("--max-seconds", max_seconds_arg, "wall-clock budget");
  std::uint64_t train_seed_arg = 0;
  auto* train_seed =
      train->add_option("--seed", train_seed_arg, "training seed override");
  bool grid_search_flag = false;
  train->add_flag("--grid-search", grid_search_flag,
                  "run the hyperparameter grid instead of a full training");

  auto* evaluate = app.add_subcommand("evaluate", "score observers on the test split");
  EvalArgs eval_args;
  evaluate->add_option("observers", eval_args.observers,
                       "observer names (ekf, identity, cnn_n60, ...)");
  evaluate->add_option("--weights", eval_args.weights_mode,
                       "frozen or calibrated");
  double alpha_arg = -1.0;
  auto* alpha_opt = evaluate->add_option(
      "--alpha", alpha_arg, "score one noise level instead of the full sweep");
  evaluate->add_flag("--dump-estimates", eval_args.dump_estimates,
                     "write per-trajectory estimate CSVs (with --alpha)");
  bool quiet_flag = false;
  evaluate->add_flag("--quiet", quiet_flag, "suppress the summary printout");

  auto* report = app.add_subcommand(
      "report", "re-render the summary from existing sweep tables");

  int jobs_arg = -1;
  app.add_option("--jobs", jobs_arg, "worker threads for sweeps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    config::RunConfig cfg = load_config(config_path);
    if (jobs_arg > 0) cfg.jobs = jobs_arg;

    if (gen->parsed()) {
      if (scale_arg > 0.0) cfg.gen.scale = scale_arg;
      if (!out_arg.empty()) cfg.dataset_dir = out_arg;
      if (gen_seed->count() > 0) cfg.master_seed = seed_arg;
      return cmd_generate(cfg, split_arg);
    }
    if (train->parsed()) {
      if (lr_arg > 0.0) cfg.training.learning_rate = lr_arg;
      if (batch_arg > 0) cfg.training.batch_size = batch_arg;
      if (max_epochs_arg > 0) cfg.training.max_epochs = max_epochs_arg;
      if (patience_arg > 0) cfg.training.patience = patience_arg;
      if (max_seconds_arg >= 0.0) cfg.training.max_seconds = max_seconds_arg;
      if (train_seed->count() > 0) cfg.training.seed = train_seed_arg;
      return cmd_train(cfg, kind_arg, window_arg, grid_search_flag);
    }
    if (evaluate->parsed()) {
      if (alpha_opt->count() > 0) eval_args.alpha = alpha_arg;
      return cmd_evaluate(cfg, eval_args, quiet_flag);
    }
    if (report->parsed()) return cmd_report(cfg);
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
