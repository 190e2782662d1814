// Python bindings for the observer benchmark core. The module mirrors the
// C++ API closely; heavy calls (generation, training, sweeps) release the GIL.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "obsbench/config.hpp"
#include "obsbench/datagen.hpp"
#include "obsbench/ekf.hpp"
#include "obsbench/eval.hpp"
#include "obsbench/observer.hpp"
#include "obsbench/rng.hpp"
#include "obsbench/sim.hpp"

namespace py = pybind11;
using namespace obsbench;

PYBIND11_MODULE(_core, m) {
  m.doc() = "kinematic-bicycle state observer benchmark core";

  // --- rng ---------------------------------------------------------------
  m.def("derive_seed", &derive_seed, py::arg("base"), py::arg("salt"));
  py::class_<Rng>(m, "Rng")
      .def(py::init<std::uint64_t>(), py::arg("seed"))
      .def("next_u64", &Rng::next_u64)
      .def("uniform", py::overload_cast<>(&Rng::uniform))
      .def("uniform", py::overload_cast<double, double>(&Rng::uniform),
           py::arg("lo"), py::arg("hi"))
      .def("normal", py::overload_cast<>(&Rng::normal))
      .def("normal", py::overload_cast<double, double>(&Rng::normal),
           py::arg("mean"), py::arg("stddev"));

  // --- simulation ----------------------------------------------------------
  py::class_<sim::VehicleState>(m, "VehicleState")
      .def(py::init<>())
      .def(py::init([](double x, double y, double psi) {
             return sim::VehicleState{x, y, psi};
           }),
           py::arg("x"), py::arg("y"), py::arg("psi"))
      .def_readwrite("x", &sim::VehicleState::x)
      .def_readwrite("y", &sim::VehicleState::y)
      .def_readwrite("psi", &sim::VehicleState::psi)
      .def("__repr__", [](const sim::VehicleState& z) {
        return "VehicleState(x=" + std::to_string(z.x) +
               ", y=" + std::to_string(z.y) +
               ", psi=" + std::to_string(z.psi) + ")";
      });

  py::class_<sim::ControlInput>(m, "ControlInput")
      .def(py::init<>())
      .def(py::init([](double v, double delta) {
             return sim::ControlInput{v, delta};
           }),
           py::arg("v"), py::arg("delta"))
      .def_readwrite("v", &sim::ControlInput::v)
      .def_readwrite("delta", &sim::ControlInput::delta);

  py::class_<sim::NoiseSpec>(m, "NoiseSpec")
      .def(py::init<>())
      .def_readwrite("sigma_proc", &sim::NoiseSpec::sigma_proc)
      .def_readwrite("sigma_meas_base", &sim::NoiseSpec::sigma_meas_base)
      .def_readwrite("alpha", &sim::NoiseSpec::alpha)
      .def("sigma_meas", &sim::NoiseSpec::sigma_meas)
      .def("with_alpha", &sim::NoiseSpec::with_alpha, py::arg("alpha"))
      .def_static("nominal", &sim::NoiseSpec::nominal)
      .def_static("zero", &sim::NoiseSpec::zero);

  py::class_<sim::VehicleParams>(m, "VehicleParams")
      .def(py::init<>())
      .def_readwrite("wheelbase", &sim::VehicleParams::wheelbase)
      .def_readwrite("dt", &sim::VehicleParams::dt);

  py::class_<sim::StepRecord>(m, "StepRecord")
      .def_readonly("truth", &sim::StepRecord::truth)
      .def_readonly("input", &sim::StepRecord::input)
      .def_readonly("meas", &sim::StepRecord::meas);

  py::class_<sim::Trajectory>(m, "Trajectory")
      .def(py::init<>())
      .def_readonly("params", &sim::Trajectory::params)
      .def_readonly("noise", &sim::Trajectory::noise)
      .def_readonly("seed", &sim::Trajectory::seed)
      .def_readonly("initial", &sim::Trajectory::initial)
      .def_readonly("steps", &sim::Trajectory::steps)
      .def("__len__", &sim::Trajectory::length)
      .def("time_at", &sim::Trajectory::time_at, py::arg("k"));

  m.def("wrap_angle", &sim::wrap_angle, py::arg("a"));
  m.def("angle_diff", &sim::angle_diff, py::arg("a"), py::arg("b"));
  m.def("simulate", &sim::simulate, py::arg("initial"), py::arg("inputs"),
        py::arg("params"), py::arg("noise"), py::arg("seed"),
        py::call_guard<py::gil_scoped_release>());
  m.def("remeasure", &sim::remeasure, py::arg("trajectory"), py::arg("alpha"),
        py::arg("level_index"));

  // --- data generation -------------------------------------------------
  py::class_<datagen::AccelerationTarget>(m, "AccelerationTarget")
      .def(py::init<>())
      .def(py::init([](double ax, double ay) {
             return datagen::AccelerationTarget{ax, ay};
           }),
           py::arg("ax"), py::arg("ay"))
      .def_readwrite("ax", &datagen::AccelerationTarget::ax)
      .def_readwrite("ay", &datagen::AccelerationTarget::ay)
      .def("norm", &datagen::AccelerationTarget::norm);

  py::class_<datagen::InputLimits>(m, "InputLimits")
      .def(py::init<>())
      .def_readwrite("v_min", &datagen::InputLimits::v_min)
      .def_readwrite("v_max", &datagen::InputLimits::v_max)
      .def_readwrite("delta_max", &datagen::InputLimits::delta_max);

  m.def("accelerations_from_inputs", &datagen::accelerations_from_inputs,
        py::arg("v_k"), py::arg("v_k1"), py::arg("delta_k1"), py::arg("psi_k"),
        py::arg("params"));
  m.def("solve_inputs_for_target", &datagen::solve_inputs_for_target,
        py::arg("target"), py::arg("v_k"), py::arg("psi_k"), py::arg("params"),
        py::arg("limits"));

  py::class_<datagen::FrictionGrid>(m, "FrictionGrid")
      .def(py::init<int, double>(), py::arg("cells_per_axis") = 64,
           py::arg("radius") = 0.5 * datagen::kGravity)
      .def("cells_per_axis", &datagen::FrictionGrid::cells_per_axis)
      .def("radius", &datagen::FrictionGrid::radius)
      .def("cell_eligible", &datagen::FrictionGrid::cell_eligible,
           py::arg("ix"), py::arg("iy"))
      .def("count", &datagen::FrictionGrid::count, py::arg("ix"), py::arg("iy"))
      .def("eligible_cells", &datagen::FrictionGrid::eligible_cells)
      .def("occupied_eligible_cells",
           &datagen::FrictionGrid::occupied_eligible_cells,
           py::arg("min_count") = 1)
      .def("coverage", &datagen::FrictionGrid::coverage,
           py::arg("min_count") = 1)
      .def("add", &datagen::FrictionGrid::add, py::arg("target"))
      .def("sample_least_covered", &datagen::FrictionGrid::sample_least_covered,
           py::arg("rng"));

  py::class_<datagen::ClothoidSegment>(m, "ClothoidSegment")
      .def(py::init<>())
      .def(py::init([](double length, double k0, double k1) {
             return datagen::ClothoidSegment{length, k0, k1};
           }),
           py::arg("length"), py::arg("kappa_begin"), py::arg("kappa_end"))
      .def_readwrite("length", &datagen::ClothoidSegment::length)
      .def_readwrite("kappa_begin", &datagen::ClothoidSegment::kappa_begin)
      .def_readwrite("kappa_end", &datagen::ClothoidSegment::kappa_end);

  py::class_<datagen::PathPoint>(m, "PathPoint")
      .def_readonly("s", &datagen::PathPoint::s)
      .def_readonly("x", &datagen::PathPoint::x)
      .def_readonly("y", &datagen::PathPoint::y)
      .def_readonly("heading", &datagen::PathPoint::heading)
      .def_readonly("curvature", &datagen::PathPoint::curvature);

  py::class_<datagen::ClothoidPath>(m, "ClothoidPath")
      .def_static("build", &datagen::ClothoidPath::build, py::arg("segments"),
                  py::arg("start"), py::arg("spacing") = 0.1)
      .def("length", &datagen::ClothoidPath::length)
      .def("waypoints", &datagen::ClothoidPath::waypoints)
      .def("at", &datagen::ClothoidPath::at, py::arg("s"))
      .def("cross_track_error", &datagen::ClothoidPath::cross_track_error,
           py::arg("x"), py::arg("y"));

  py::class_<datagen::GenConfig>(m, "GenConfig")
      .def(py::init(&datagen::GenConfig::defaults))
      .def_readwrite("train_trajectories", &datagen::GenConfig::train_trajectories)
      .def_readwrite("train_duration", &datagen::GenConfig::train_duration)
      .def_readwrite("test_trajectories", &datagen::GenConfig::test_trajectories)
      .def_readwrite("alpha_levels", &datagen::GenConfig::alpha_levels)
      .def_readwrite("scale", &datagen::GenConfig::scale)
      .def("validate", &datagen::GenConfig::validate)
      .def("scaled_train_trajectories",
           &datagen::GenConfig::scaled_train_trajectories)
      .def("scaled_test_trajectories",
           &datagen::GenConfig::scaled_test_trajectories);

  m.def("default_alpha_grid", &datagen::default_alpha_grid);
  m.def("validation_path", &datagen::validation_path, py::arg("config"));

  py::class_<datagen::DatasetSplit>(m, "DatasetSplit")
      .def_readonly("params", &datagen::DatasetSplit::params)
      .def_readonly("base_noise", &datagen::DatasetSplit::base_noise)
      .def_readonly("master_seed", &datagen::DatasetSplit::master_seed)
      .def_readonly("alpha_levels", &datagen::DatasetSplit::alpha_levels)
      .def_readonly("levels", &datagen::DatasetSplit::levels)
      .def("trajectory_count", &datagen::DatasetSplit::trajectory_count)
      .def("true_records", &datagen::DatasetSplit::true_records)
      .def("find_level", &datagen::DatasetSplit::find_level, py::arg("alpha"));

  m.def(
      "generate_training_set",
      [](const datagen::GenConfig& cfg, const sim::VehicleParams& params,
         const sim::NoiseSpec& noise, std::uint64_t master_seed) {
        datagen::FrictionGrid grid(cfg.grid_cells, cfg.grid_radius);
        auto split = datagen::generate_training_set(cfg, params, noise,
                                                    master_seed, &grid);
        return py::make_tuple(std::move(split), std::move(grid));
      },
      py::arg("config"), py::arg("params"), py::arg("noise"),
      py::arg("master_seed"));
  m.def("generate_validation_set", &datagen::generate_validation_set,
        py::arg("config"), py::arg("params"), py::arg("noise"),
        py::arg("master_seed"), py::call_guard<py::gil_scoped_release>());
  m.def("generate_test_sets", &datagen::generate_test_sets, py::arg("config"),
        py::arg("params"), py::arg("noise"), py::arg("master_seed"),
        py::call_guard<py::gil_scoped_release>());
  m.def(
      "write_dataset",
      [](const datagen::DatasetSplit& split, const std::string& root,
         const datagen::GenConfig& cfg) {
        datagen::write_dataset(split, root, cfg, nullptr);
      },
      py::arg("split"), py::arg("root"), py::arg("config"));
  m.def(
      "read_dataset",
      [](const std::string& root, const std::string& split) {
        return datagen::read_dataset(root, datagen::split_from_name(split));
      },
      py::arg("root"), py::arg("split"),
      py::call_guard<py::gil_scoped_release>());

  // --- EKF ---------------------------------------------------------------
  py::class_<ekf::EkfConfig>(m, "EkfConfig")
      .def_static("matched", &ekf::EkfConfig::matched, py::arg("params"),
                  py::arg("noise"))
      .def_static("reference", &ekf::EkfConfig::reference, py::arg("params"),
                  py::arg("noise"));

  py::class_<ekf::EkfRun>(m, "EkfRun")
      .def_readonly("estimates", &ekf::EkfRun::estimates)
      .def_readonly("cov_diag", &ekf::EkfRun::cov_diag);

  m.def("run_ekf", &ekf::run_ekf, py::arg("trajectory"), py::arg("config"),
        py::call_guard<py::gil_scoped_release>());

  // --- learned observers ---------------------------------------------------
  py::enum_<observer::ObserverKind>(m, "ObserverKind")
      .value("cnn", observer::ObserverKind::cnn)
      .value("lstm", observer::ObserverKind::lstm);

  py::class_<observer::ObserverModel>(m, "ObserverModel")
      .def_readonly("kind", &observer::ObserverModel::kind)
      .def_readonly("window", &observer::ObserverModel::window)
      .def_readonly("data_fingerprint",
                    &observer::ObserverModel::data_fingerprint)
      .def_readonly("training_fingerprint",
                    &observer::ObserverModel::training_fingerprint)
      .def_property_readonly("parameter_count",
                             [](observer::ObserverModel& mdl) {
                               return mdl.net.parameter_count();
                             });

  py::class_<observer::TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("learning_rate", &observer::TrainConfig::learning_rate)
      .def_readwrite("batch_size", &observer::TrainConfig::batch_size)
      .def_readwrite("max_epochs", &observer::TrainConfig::max_epochs)
      .def_readwrite("patience", &observer::TrainConfig::patience)
      .def_readwrite("seed", &observer::TrainConfig::seed)
      .def_readwrite("max_seconds", &observer::TrainConfig::max_seconds);

  py::class_<observer::EpochStats>(m, "EpochStats")
      .def_readonly("epoch", &observer::EpochStats::epoch)
      .def_readonly("train_mse", &observer::EpochStats::train_mse)
      .def_readonly("val_mse", &observer::EpochStats::val_mse);

  py::class_<observer::TrainHistory>(m, "TrainHistory")
      .def_readonly("epochs", &observer::TrainHistory::epochs)
      .def_readonly("best_epoch", &observer::TrainHistory::best_epoch)
      .def_readonly("best_val_mse", &observer::TrainHistory::best_val_mse)
      .def_readonly("stopped_early", &observer::TrainHistory::stopped_early)
      .def_readonly("diverged", &observer::TrainHistory::diverged)
      .def_readonly("hit_time_budget",
                    &observer::TrainHistory::hit_time_budget);

  m.def("build_observer", &observer::build_observer, py::arg("kind"),
        py::arg("window"), py::arg("seed"));
  m.def("train_observer", &observer::train, py::arg("model"),
        py::arg("train_trajectories"), py::arg("val_trajectories"),
        py::arg("config"), py::call_guard<py::gil_scoped_release>());
  m.def(
      "infer",
      [](observer::ObserverModel& model, const sim::Trajectory& traj,
         int end) { return observer::infer(model, traj, end); },
      py::arg("model"), py::arg("trajectory"), py::arg("end"));
  m.def("save_observer", &observer::save_observer, py::arg("model"),
        py::arg("dir"), py::arg("name"));
  m.def("load_observer", &observer::load_observer, py::arg("dir"),
        py::arg("name"));

  // --- evaluation -------------------------------------------------------
  py::class_<eval::RmseTriple>(m, "RmseTriple")
      .def(py::init<>())
      .def(py::init([](double x, double y, double psi) {
             return eval::RmseTriple{x, y, psi};
           }),
           py::arg("x"), py::arg("y"), py::arg("psi"))
      .def_readwrite("x", &eval::RmseTriple::x)
      .def_readwrite("y", &eval::RmseTriple::y)
      .def_readwrite("psi", &eval::RmseTriple::psi);

  py::class_<eval::NrmseWeights>(m, "NrmseWeights")
      .def_static("frozen", &eval::NrmseWeights::frozen)
      .def_static("from_reference", &eval::NrmseWeights::from_reference,
                  py::arg("reference"))
      .def_readonly("wx", &eval::NrmseWeights::wx)
      .def_readonly("wy", &eval::NrmseWeights::wy)
      .def_readonly("wpsi", &eval::NrmseWeights::wpsi);

  m.def("rmse", &eval::rmse, py::arg("estimates"), py::arg("truths"));
  m.def("nrmse", &eval::nrmse, py::arg("errors"), py::arg("weights"));

  py::class_<eval::Observer>(m, "Observer")
      .def_readonly("name", &eval::Observer::name)
      .def_readonly("warmup", &eval::Observer::warmup)
      .def("run",
           [](const eval::Observer& obs, const sim::Trajectory& traj) {
             return obs.run(traj);
           },
           py::arg("trajectory"));

  m.def("make_ekf_observer", &eval::make_ekf_observer, py::arg("config"));
  m.def("make_learned_observer", &eval::make_learned_observer,
        py::arg("model"));
  m.def("make_identity_observer", &eval::make_identity_observer);

  py::class_<eval::ErrorReport>(m, "ErrorReport")
      .def_readonly("observer", &eval::ErrorReport::observer)
      .def_readonly("alpha", &eval::ErrorReport::alpha)
      .def_readonly("rmse", &eval::ErrorReport::rmse)
      .def_readonly("samples", &eval::ErrorReport::samples);

  m.def("evaluate_observer", &eval::evaluate_observer, py::arg("observer"),
        py::arg("trajectories"), py::arg("alpha"), py::arg("warmup"),
        py::call_guard<py::gil_scoped_release>());

  py::class_<eval::SweepCell>(m, "SweepCell")
      .def_readonly("observer", &eval::SweepCell::observer)
      .def_readonly("alpha", &eval::SweepCell::alpha)
      .def_readonly("rmse", &eval::SweepCell::rmse)
      .def_readonly("nrmse", &eval::SweepCell::nrmse)
      .def_readonly("samples", &eval::SweepCell::samples);

  py::class_<eval::SweepTable>(m, "SweepTable")
      .def_readonly("observers", &eval::SweepTable::observers)
      .def_readonly("alphas", &eval::SweepTable::alphas)
      .def_readonly("cells", &eval::SweepTable::cells)
      .def("curve", &eval::SweepTable::curve, py::arg("observer"));

  m.def("sweep", &eval::sweep, py::arg("observers"), py::arg("test_split"),
        py::arg("weights"), py::arg("jobs") = 1,
        py::call_guard<py::gil_scoped_release>());
  m.def("crossover_alpha", &eval::crossover_alpha, py::arg("alphas"),
        py::arg("candidate"), py::arg("reference"));
  m.def(
      "emit_report",
      [](const std::string& dir, const eval::SweepTable& table,
         const eval::NrmseWeights& weights) {
        eval::emit_report(dir, table, weights);
      },
      py::arg("dir"), py::arg("table"), py::arg("weights"));

  // --- run configuration ------------------------------------------------
  py::class_<config::RunConfig>(m, "RunConfig")
      .def(py::init(&config::RunConfig::defaults))
      .def_readwrite("dataset_dir", &config::RunConfig::dataset_dir)
      .def_readwrite("model_dir", &config::RunConfig::model_dir)
      .def_readwrite("report_dir", &config::RunConfig::report_dir)
      .def_readwrite("master_seed", &config::RunConfig::master_seed)
      .def_readwrite("jobs", &config::RunConfig::jobs)
      .def("validate", &config::RunConfig::validate);
  m.def("load_run_config", &config::load_run_config, py::arg("path"));
  m.def("save_run_config", &config::save_run_config, py::arg("path"),
        py::arg("config"));
}
