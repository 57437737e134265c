import math

import numpy as np
import pytest

from excaplan.errors import ClassImbalanceError, ConfigError, ModelModeError
from excaplan.geometry import GridSpec, Point3, VoxelGrid
from excaplan.kinematics import TaskTrajectory
from excaplan.learning import (
    ExcavationSample,
    HEAD_CLASSIFIER,
    HEAD_REGRESSOR,
    Model,
    NetworkSpec,
    TrainConfig,
    VARIANT_TRAJ,
    VARIANT_VOXEL,
    assemble_input,
    classification_metrics,
    denormalize_trajectory,
    epoch_stream,
    evaluate_classifier,
    evaluate_regressor,
    forward,
    gradient_check,
    init_model,
    load_model,
    loss_and_grad,
    normalize_trajectory,
    regression_metrics,
    save_model,
    train,
)
from excaplan.learning.nets import batch_loss

TINY_VOXEL = NetworkSpec(
    variant=VARIANT_VOXEL,
    input_dims=(8, 8, 4, 7),
    conv_blocks=((4, 3, 2),),
    fc_widths=(8,),
)
TINY_TRAJ = NetworkSpec(variant=VARIANT_TRAJ, input_dims=(6,), conv_blocks=(), fc_widths=(8, 8))

SMALL_GRID = GridSpec(dims=(16, 16, 8), resolution=0.04, origin=Point3(-0.32, -0.32, -0.16))
SMALL_VOXEL_SPEC = NetworkSpec(
    variant=VARIANT_VOXEL,
    input_dims=(8, 8, 4, 7),
    conv_blocks=((4, 3, 2), (8, 3, 2)),
    fc_widths=(16, 8),
)


def mid_ranges_trajectory(spec):
    mids = [(lo + hi) / 2 for lo, hi in spec.traj_norm_ranges]
    return TaskTrajectory(*mids)


def random_samples(rng, n, spec=SMALL_VOXEL_SPEC, grid_spec=SMALL_GRID, labeler=None):
    out = []
    for i in range(n):
        occ = rng.random(grid_spec.dims) < 0.2
        grid = VoxelGrid(grid_spec.dims, grid_spec.resolution, grid_spec.origin, occ)
        u = rng.uniform(-1, 1, size=6)
        traj = TaskTrajectory(*denormalize_trajectory(u, spec.traj_norm_ranges))
        label = bool(labeler(u, occ)) if labeler else bool(rng.integers(2))
        volume = rng.uniform(135, 450) if label else rng.uniform(0, 134)
        out.append(ExcavationSample.from_grid(grid, traj, volume, True, label, i, 0))
    return out


class TestAssembleInput:
    def test_midpoint_parameters_give_zero_channels(self):
        grid = VoxelGrid(SMALL_GRID.dims, SMALL_GRID.resolution, SMALL_GRID.origin,
                         np.zeros(SMALL_GRID.dims, dtype=bool))
        x = assemble_input(grid, mid_ranges_trajectory(SMALL_VOXEL_SPEC), SMALL_VOXEL_SPEC)
        assert x.shape == (7, 8, 8, 4)
        assert np.all(x[0] == 0.0)
        assert np.max(np.abs(x[1:])) < 1e-7  # midpoints normalize to 0 up to rounding

    def test_alpha_at_low_end_fills_channel_three_with_minus_one(self):
        grid = VoxelGrid(SMALL_GRID.dims, SMALL_GRID.resolution, SMALL_GRID.origin,
                         np.zeros(SMALL_GRID.dims, dtype=bool))
        t = mid_ranges_trajectory(SMALL_VOXEL_SPEC)
        lo = SMALL_VOXEL_SPEC.traj_norm_ranges[2][0]
        t = TaskTrajectory(t.x, t.y, lo, t.d, t.l, t.beta)
        x = assemble_input(grid, t, SMALL_VOXEL_SPEC)
        assert np.all(x[3] == -1.0)

    def test_tiled_channels_have_zero_spatial_variance(self):
        rng = np.random.default_rng(60)
        occ = rng.random(SMALL_GRID.dims) < 0.3
        grid = VoxelGrid(SMALL_GRID.dims, SMALL_GRID.resolution, SMALL_GRID.origin, occ)
        t = TaskTrajectory(0.05, -0.1, -1.8, 0.1, 0.2, -2.5)
        x = assemble_input(grid, t, SMALL_VOXEL_SPEC)
        for c in range(1, 7):
            assert np.ptp(x[c]) == 0.0  # every entry identical: exact zero spread

    def test_pooled_occupancy_is_box_average(self):
        occ = np.zeros(SMALL_GRID.dims, dtype=bool)
        occ[0:2, 0:2, 0:2] = True  # one pooled cell fully covered
        grid = VoxelGrid(SMALL_GRID.dims, SMALL_GRID.resolution, SMALL_GRID.origin, occ)
        x = assemble_input(grid, mid_ranges_trajectory(SMALL_VOXEL_SPEC), SMALL_VOXEL_SPEC)
        assert x[0, 0, 0, 0] == 1.0
        assert x[0].sum() == 1.0

    def test_normalization_round_trip(self):
        rng = np.random.default_rng(61)
        for _ in range(20):
            u = rng.uniform(-1, 1, size=6)
            t = TaskTrajectory(*denormalize_trajectory(u, SMALL_VOXEL_SPEC.traj_norm_ranges))
            back = normalize_trajectory(t, SMALL_VOXEL_SPEC.traj_norm_ranges)
            assert np.max(np.abs(back - u)) < 1e-12


class TestForward:
    def test_zeroed_output_layer_gives_exactly_half(self):
        model = init_model(TINY_TRAJ, np.random.default_rng(62))
        model.params["out.w"][:] = 0.0
        model.params["out.b"][:] = 0.0
        model.eval_mode()
        p = forward(model, np.zeros((3, 6), dtype=np.float32))
        assert np.all(p == 0.5)

    def test_eval_forward_bit_identical(self):
        model = init_model(TINY_VOXEL, np.random.default_rng(63)).eval_mode()
        x = np.random.default_rng(1).uniform(-1, 1, (2, 7, 8, 8, 4)).astype(np.float32)
        assert np.array_equal(forward(model, x), forward(model, x))

    def test_batch_matches_single_forwards(self):
        model = init_model(TINY_VOXEL, np.random.default_rng(64), dtype=np.float64).eval_mode()
        x = np.random.default_rng(2).uniform(-1, 1, (8, 7, 8, 8, 4))
        batched = forward(model, x)
        singles = np.array([forward(model, x[i:i + 1])[0] for i in range(len(x))])
        assert np.max(np.abs(batched - singles)) < 1e-6

    def test_output_strictly_inside_unit_interval(self):
        model = init_model(TINY_TRAJ, np.random.default_rng(65)).eval_mode()
        model.params["out.b"][:] = 1000.0  # saturate the sigmoid
        p = forward(model, np.zeros((1, 6), dtype=np.float32))
        assert 0.0 < p[0] < 1.0

    def test_shape_mismatch_rejected(self):
        model = init_model(TINY_VOXEL, np.random.default_rng(66))
        with pytest.raises(ConfigError):
            forward(model, np.zeros((1, 7, 4, 4, 4), dtype=np.float32))

    def test_eval_mode_has_no_side_effects(self):
        model = init_model(TINY_VOXEL, np.random.default_rng(67)).eval_mode()
        x = np.random.default_rng(3).uniform(-1, 1, (2, 7, 8, 8, 4)).astype(np.float32)
        stats_before = {k: v.copy() for k, v in model.stats.items()}
        params_before = {k: v.copy() for k, v in model.params.items()}
        forward(model, x)
        assert all(np.array_equal(model.stats[k], stats_before[k]) for k in stats_before)
        assert all(np.array_equal(model.params[k], params_before[k]) for k in params_before)

    def test_train_mode_changes_only_running_stats(self):
        model = init_model(TINY_VOXEL, np.random.default_rng(68)).train_mode()
        x = np.random.default_rng(4).uniform(-1, 1, (4, 7, 8, 8, 4)).astype(np.float32)
        params_before = {k: v.copy() for k, v in model.params.items()}
        stats_before = {k: v.copy() for k, v in model.stats.items()}
        forward(model, x)
        assert all(np.array_equal(model.params[k], params_before[k]) for k in params_before)
        assert any(not np.array_equal(model.stats[k], stats_before[k]) for k in stats_before)


class TestLoss:
    def test_cross_entropy_at_half_is_ln2(self):
        model = init_model(TINY_TRAJ, np.random.default_rng(69), dtype=np.float64)
        model.params["out.w"][:] = 0.0
        model.params["out.b"][:] = 0.0
        x = np.random.default_rng(5).uniform(-1, 1, (4, 6))
        loss, _ = loss_and_grad(model, x, np.ones(4))
        assert loss == pytest.approx(math.log(2.0), abs=1e-12)

    def test_regression_zero_residual_zero_loss_and_bias_grad(self):
        spec = NetworkSpec(variant=VARIANT_TRAJ, head=HEAD_REGRESSOR, input_dims=(6,),
                           conv_blocks=(), fc_widths=(8, 8))
        model = init_model(spec, np.random.default_rng(70), dtype=np.float64)
        x = np.random.default_rng(6).uniform(-1, 1, (4, 6))
        z = forward(model, x)  # cm^3 predictions of the untouched model
        loss, grads = loss_and_grad(model, x, z)
        assert loss == pytest.approx(0.0, abs=1e-15)
        assert np.all(grads["out.b"] == 0.0)

    def test_gradients_match_finite_differences(self):
        # the load-bearing numerical oracle: every layer type is covered
        rng = np.random.default_rng(71)
        for spec in (TINY_TRAJ, TINY_VOXEL):
            for head in (HEAD_CLASSIFIER, HEAD_REGRESSOR):
                s = NetworkSpec(
                    variant=spec.variant, head=head, input_dims=spec.input_dims,
                    conv_blocks=spec.conv_blocks, fc_widths=spec.fc_widths,
                )
                err = gradient_check(s, rng)
                assert err < 1e-4, f"{s.variant}/{head}: max relative error {err}"

    def test_gradient_check_rejects_eval_mode(self):
        model = init_model(TINY_TRAJ, np.random.default_rng(72), dtype=np.float64).eval_mode()
        with pytest.raises(ModelModeError):
            gradient_check(TINY_TRAJ, np.random.default_rng(0), model=model)


class TestTraining:
    def test_oversampling_epoch_composition(self):
        labels = np.array([0.0] * 900 + [1.0] * 100)
        idx = epoch_stream(labels, True, np.random.default_rng(73))
        assert len(idx) == 1800
        assert (labels[idx] > 0.5).mean() == 0.5

    def test_lr_schedule(self):
        cfg = TrainConfig()
        assert cfg.lr_at(1) == pytest.approx(0.1)
        assert cfg.lr_at(11) == pytest.approx(0.01)
        assert cfg.lr_at(21) == pytest.approx(0.001)

    def test_single_class_rejected(self):
        rng = np.random.default_rng(74)
        samples = random_samples(rng, 20, spec=TINY_TRAJ, labeler=lambda u, occ: True)
        with pytest.raises(ClassImbalanceError):
            train(samples, TINY_TRAJ, TrainConfig(epochs=1, seed=1))

    def test_linearly_separable_trajectories_learned(self):
        rng = np.random.default_rng(75)
        spec = NetworkSpec(variant=VARIANT_TRAJ, input_dims=(6,), conv_blocks=(),
                           fc_widths=(512, 256, 128))
        samples = random_samples(rng, 400, spec=spec, labeler=lambda u, occ: u[0] + u[3] > 0)
        cfg = TrainConfig(epochs=50, lr=1e-3, lr_decay=1.0, seed=2)
        result = train(samples, spec, cfg)
        m = evaluate_classifier(result.model, samples)
        assert m.accuracy >= 0.99
        assert all(0.45 <= f <= 0.55 for f in result.positive_fractions)

    def test_seeded_training_is_bit_reproducible(self):
        rng = np.random.default_rng(76)
        samples = random_samples(rng, 60)
        cfg = TrainConfig(epochs=2, lr=1e-3, seed=3)
        a = train(samples, SMALL_VOXEL_SPEC, cfg)
        b = train(samples, SMALL_VOXEL_SPEC, cfg)
        for k in a.model.params:
            assert np.array_equal(a.model.params[k], b.model.params[k])
        for k in a.model.stats:
            assert np.array_equal(a.model.stats[k], b.model.stats[k])

    def test_trajectory_variant_never_unpacks_voxels(self):
        rng = np.random.default_rng(77)
        samples = [
            ExcavationSample(
                b"", None, TaskTrajectory(*denormalize_trajectory(
                    rng.uniform(-1, 1, 6), TINY_TRAJ.traj_norm_ranges)),
                float(rng.uniform(0, 450)), True, bool(i % 2), i, 0,
            )
            for i in range(40)
        ]
        result = train(samples, TINY_TRAJ, TrainConfig(epochs=1, lr=1e-3, seed=4))
        assert result.model.spec.variant == VARIANT_TRAJ


class TestMetrics:
    def test_perfect_predictions(self):
        m = classification_metrics([True, False, True], [True, False, True])
        assert (m.accuracy, m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0, 1.0)

    def test_random_half_guess_on_imbalanced_set(self):
        rng = np.random.default_rng(78)
        labels = np.zeros(10000, dtype=bool)
        labels[:967] = True
        rng.shuffle(labels)
        preds = rng.random(10000) < 0.5
        m = classification_metrics(labels, preds)
        assert m.accuracy == pytest.approx(0.5, abs=0.02)
        assert m.precision == pytest.approx(0.0967, abs=0.02)
        assert m.recall == pytest.approx(0.5, abs=0.03)
        assert m.f1 == pytest.approx(0.162, abs=0.03)

    def test_random_tenth_guess_on_imbalanced_set(self):
        rng = np.random.default_rng(79)
        labels = np.zeros(10000, dtype=bool)
        labels[:967] = True
        rng.shuffle(labels)
        preds = rng.random(10000) < 0.1
        m = classification_metrics(labels, preds)
        assert m.accuracy == pytest.approx(0.82, abs=0.02)
        assert m.precision == pytest.approx(0.1, abs=0.03)
        assert m.recall == pytest.approx(0.1, abs=0.02)

    def test_constant_zero_regressor(self):
        m = regression_metrics([100.0, 200.0], [0.0, 0.0])
        assert m.l1_mean == 150.0
        assert m.l1_std == 50.0

    def test_l1_matches_brute_force(self):
        rng = np.random.default_rng(80)
        t = rng.uniform(0, 450, 100)
        p = rng.uniform(0, 450, 100)
        m = regression_metrics(t, p)
        errs = [abs(a - b) for a, b in zip(p, t)]
        assert m.l1_mean == pytest.approx(np.mean(errs), rel=1e-12)
        assert m.l1_std == pytest.approx(np.std(errs), rel=1e-12)


class TestSerialization:
    def test_model_round_trip(self, tmp_path):
        rng = np.random.default_rng(81)
        model = init_model(SMALL_VOXEL_SPEC, rng).eval_mode()
        path = tmp_path / "model.exvm"
        save_model(model, path)
        assert path.read_bytes()[:4] == b"EXVM"
        back = load_model(path)
        assert back.spec == model.spec
        assert back.mode == "eval"
        x = np.random.default_rng(7).uniform(-1, 1, (3, 7, 8, 8, 4)).astype(np.float32)
        assert np.array_equal(forward(model, x), forward(back, x))

    def test_save_is_deterministic(self, tmp_path):
        model = init_model(TINY_TRAJ, np.random.default_rng(82)).eval_mode()
        p1, p2 = tmp_path / "a.exvm", tmp_path / "b.exvm"
        save_model(model, p1)
        save_model(model, p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestEvaluateOnSamples:
    def test_classifier_and_regressor_paths(self):
        rng = np.random.default_rng(83)
        samples = random_samples(rng, 30)
        model = init_model(SMALL_VOXEL_SPEC, rng).eval_mode()
        m = evaluate_classifier(model, samples)
        assert 0.0 <= m.accuracy <= 1.0
        reg_spec = NetworkSpec(
            variant=VARIANT_VOXEL, head=HEAD_REGRESSOR,
            input_dims=SMALL_VOXEL_SPEC.input_dims,
            conv_blocks=SMALL_VOXEL_SPEC.conv_blocks,
            fc_widths=SMALL_VOXEL_SPEC.fc_widths,
        )
        reg = init_model(reg_spec, rng).eval_mode()
        mr = evaluate_regressor(reg, samples)
        assert mr.l1_mean is not None and np.isfinite(mr.l1_mean)
