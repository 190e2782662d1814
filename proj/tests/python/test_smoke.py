"""End-to-end sanity checks for the Python bindings."""

import math

import pytest

obsbench = pytest.importorskip("obsbench")


def make_trajectory(steps=80, alpha=1.0, seed=7):
    params = obsbench.VehicleParams()
    inputs = [
        obsbench.ControlInput(10.0 + math.sin(0.01 * k), 0.1 * math.sin(0.02 * k))
        for k in range(steps)
    ]
    noise = obsbench.NoiseSpec.nominal().with_alpha(alpha)
    init = obsbench.VehicleState(0.0, 0.0, 0.0)
    return obsbench.simulate(init, inputs, params, noise, seed)


def test_simulation_basics():
    traj = make_trajectory()
    assert len(traj) == 80
    assert traj.steps[0].input.v == pytest.approx(10.0)
    # the heading stays wrapped
    for rec in traj.steps:
        assert -math.pi <= rec.truth.psi < math.pi

    again = make_trajectory()
    assert again.steps[40].truth.x == traj.steps[40].truth.x


def test_angle_helpers():
    assert obsbench.wrap_angle(6.2) == pytest.approx(6.2 - 2 * math.pi)
    assert obsbench.angle_diff(0.1, -0.1) == pytest.approx(0.2)


def test_seed_derivation_is_stable():
    a = obsbench.derive_seed(1, 2)
    assert a == obsbench.derive_seed(1, 2)
    assert a != obsbench.derive_seed(1, 3)


def test_ekf_tracks_the_truth():
    traj = make_trajectory(steps=400)
    cfg = obsbench.EkfConfig.reference(traj.params, traj.noise)
    run = obsbench.run_ekf(traj, cfg)
    assert len(run.estimates) == 400

    err_est = 0.0
    err_meas = 0.0
    for k in range(100, 400):
        rec = traj.steps[k]
        err_est += (run.estimates[k].x - rec.truth.x) ** 2
        err_meas += (rec.meas[0] - rec.truth.x) ** 2
    assert err_est < err_meas  # smoothing must beat the raw measurement


def test_observer_round_trip(tmp_path):
    traj = make_trajectory()
    model = obsbench.build_observer(obsbench.ObserverKind.cnn, 20, 31)
    assert model.parameter_count == 4891

    est = obsbench.infer(model, traj, 30)
    est2 = obsbench.infer(model, traj, 30)
    assert est.x == est2.x and est.psi == est2.psi

    obsbench.save_observer(model, str(tmp_path), "cnn_n20")
    back = obsbench.load_observer(str(tmp_path), "cnn_n20")
    est3 = obsbench.infer(back, traj, 30)
    assert est3.x == est.x


def test_metrics_and_sweep():
    w = obsbench.NrmseWeights.frozen()
    score = obsbench.nrmse(obsbench.RmseTriple(0.24, 0.23, 0.0041), w)
    assert score == pytest.approx(1.0)

    gen = obsbench.GenConfig()
    gen.scale = 0.0667  # one test trajectory
    params = obsbench.VehicleParams()
    noise = obsbench.NoiseSpec.nominal()
    test = obsbench.generate_test_sets(gen, params, noise, 2024)
    assert test.trajectory_count() == 1
    assert len(test.alpha_levels) == 25

    observers = [obsbench.make_identity_observer()]
    table = obsbench.sweep(observers, test, w, 1)
    curve = table.curve("identity")
    assert len(curve) == 25
    # more measurement noise, higher identity error
    assert curve[-1] > curve[4]


def test_training_improves_a_tiny_model():
    train = [make_trajectory(steps=120, alpha=0.0, seed=s) for s in (1, 2)]
    val = [make_trajectory(steps=80, alpha=0.0, seed=3)]
    model = obsbench.build_observer(obsbench.ObserverKind.cnn, 20, 11)

    cfg = obsbench.TrainConfig()
    cfg.learning_rate = 1e-2
    cfg.batch_size = 64
    cfg.max_epochs = 8
    cfg.patience = 8
    history = obsbench.train_observer(model, train, val, cfg)
    assert len(history.epochs) >= 1
    assert history.best_val_mse < history.epochs[0].val_mse * 1.01
