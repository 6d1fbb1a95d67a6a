"""Boundary geometry, midpoint deviation, landscapes, weight traces."""

import numpy as np
import pytest

from spnet.analysis import (
    WeightTrace,
    confidence_grid,
    is_strict_local_min_center,
    landscape,
    last_layer_inputs,
    margin_report,
    midpoint_deviation,
    write_confidence_csv,
    write_landscape_csv,
    write_trace_csv,
)
from spnet.datasets import Dataset, ToySpec, gen_segments
from spnet.errors import ShapeError
from spnet.losses import LossSpec
from spnet.nn import Adam, DenseLayer, Network, dense_network
from spnet.training import mean_loss, train


def _linear_head(w, b):
    return Network([DenseLayer(np.asarray(w, dtype=np.float64),
                               np.asarray(b, dtype=np.float64), "identity")])


def stationary_head(u0, u1, z_star):
    """Binary head with z = [z*, -z*] at u0 and [-z*, z*] at u1."""
    u0 = np.asarray(u0, dtype=np.float64)
    u1 = np.asarray(u1, dtype=np.float64)
    diff = u0 - u1
    w0 = 2.0 * z_star * diff / (diff @ diff)
    b0 = z_star - w0 @ u0
    w1 = -w0
    b1 = w0 @ u0 - z_star
    return Network([DenseLayer(np.stack([w0, w1]), np.array([b0, b1]), "identity")])


class TestConfidenceGrid:
    def test_constant_logits_have_no_boundary(self):
        net = _linear_head(np.zeros((2, 2)), [1.0, 0.0])
        grid = confidence_grid(net, (-1, 1, -1, 1), 20)
        assert not grid.boundary.any()

    def test_linear_model_boundary_near_axis(self):
        net = _linear_head([[0.0, 1.0], [0.0, 0.0]], [0.0, 0.0])
        res = 50
        grid = confidence_grid(net, (-1, 1, -1, 1), res)
        cell = 2.0 / (res - 1)
        ys = grid.boundary_points()[:, 1]
        assert ys.size > 0
        assert np.abs(ys).max() <= cell + 1e-12

    def test_requires_2d_model(self):
        net = dense_network([3, 4, 2], "tanh", seed=0)
        with pytest.raises(ShapeError):
            confidence_grid(net, (-1, 1, -1, 1), 10)

    def test_refinement_consistency(self):
        ds = gen_segments(ToySpec("segments", n_per_class=30, margin=1.8, noise=0.05, seed=2))
        net = dense_network([2, 8, 2], "tanh", seed=2)
        train(net, ds, LossSpec("ce"), Adam(0.01), epochs=120, batch_size=60, seed=2)
        region = (-2.5, 2.5, -2.5, 2.5)
        coarse = confidence_grid(net, region, 100).boundary_points()
        fine = confidence_grid(net, region, 200).boundary_points()
        cell = 5.0 / 99

        def hausdorff(a, b):
            d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
            return max(np.sqrt(d2.min(axis=1)).max(), np.sqrt(d2.min(axis=0)).max())

        assert hausdorff(coarse, fine) < 2 * cell


class TestMarginReport:
    def test_symmetric_points_perfect_balance(self):
        net = _linear_head([[1.0, 0.0], [0.0, 0.0]], [0.0, 0.0])  # boundary x=0
        ds = Dataset(np.array([[-1.0, 0.0], [1.0, 0.0]]), np.array([0, 1]), 2, (-1.0, 1.0))
        report = margin_report(net, ds, (-1.5, 1.5, -1.5, 1.5), 151)
        assert report.margin_balance == pytest.approx(1.0, abs=0.05)
        assert report.margins[0] == pytest.approx(1.0, abs=0.05)

    def test_matches_bruteforce_cell_search(self):
        ds = gen_segments(ToySpec("segments", n_per_class=10, margin=1.8, noise=0.0, seed=0))
        net = _linear_head([[0.0, 1.0], [0.0, 0.0]], [0.0, 0.0])
        region = (-2.2, 2.2, -1.5, 1.5)
        res = 41
        report = margin_report(net, ds, region, res)
        grid = confidence_grid(net, region, res)
        for label in range(2):
            pts = ds.features[ds.labels == label]
            best = np.inf
            for iy in range(res):
                for ix in range(res):
                    if grid.boundary[iy, ix]:
                        c = np.array([grid.xs[ix], grid.ys[iy]])
                        best = min(best, float(np.linalg.norm(pts - c, axis=1).min()))
            assert report.margins[label] == pytest.approx(best, rel=1e-12)

    def test_no_boundary_is_an_error(self):
        net = _linear_head(np.zeros((2, 2)), [1.0, 0.0])
        ds = Dataset(np.array([[0.0, 0.0], [0.5, 0.5]]), np.array([0, 1]), 2, (0.0, 0.5))
        with pytest.raises(ValueError, match="no boundary"):
            margin_report(net, ds, (-1, 1, -1, 1), 20)

    def test_band_width_of_flat_net(self):
        # logits nearly tied everywhere: every cell is low confidence
        net = _linear_head([[1e-6, 0.0], [0.0, 0.0]], [0.0, 0.0])
        ds = Dataset(np.array([[-1.0, 0.0], [1.0, 0.0]]), np.array([0, 1]), 2, (-1.0, 1.0))
        report = margin_report(net, ds, (-1, 1, -1, 1), 21, confidence_threshold=0.55)
        assert report.confidence_band_width == pytest.approx(1.0)


class TestMidpointDeviation:
    def test_zero_for_stationary_head(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            u0, u1 = rng.normal(size=4), rng.normal(size=4)
            net = stationary_head(u0, u1, z_star=1.3)
            assert midpoint_deviation(net, u0, u1) < 1e-12

    def test_equals_direct_evaluation_for_random_head(self):
        rng = np.random.default_rng(1)
        w = rng.normal(size=(2, 3))
        b = rng.normal(size=2)
        net = _linear_head(w, b)
        u0, u1 = rng.normal(size=3), rng.normal(size=3)
        mid = (u0 + u1) / 2
        expected = abs((w[0] - w[1]) @ mid + b[0] - b[1]) / np.linalg.norm(w[0] - w[1])
        assert midpoint_deviation(net, u0, u1) == pytest.approx(expected, rel=1e-12)

    def test_translation_invariance_with_compensated_bias(self):
        rng = np.random.default_rng(2)
        w = rng.normal(size=(2, 3))
        b = rng.normal(size=2)
        u0, u1 = rng.normal(size=3), rng.normal(size=3)
        shift = rng.normal(size=3)
        net = _linear_head(w, b)
        net2 = _linear_head(w, b + w @ shift)
        d1 = midpoint_deviation(net, u0, u1)
        d2 = midpoint_deviation(net2, u0 - shift, u1 - shift)
        assert d1 == pytest.approx(d2, rel=1e-9)

    def test_degenerate_head_rejected(self):
        net = _linear_head([[1.0, 0.0], [1.0, 0.0]], [0.0, 1.0])
        with pytest.raises(ValueError, match="degenerate"):
            midpoint_deviation(net, np.zeros(2), np.ones(2))

    def test_last_layer_inputs_are_hidden_activations(self):
        net = dense_network([2, 6, 2], "tanh", seed=3)
        x = np.random.default_rng(3).normal(size=(4, 2))
        u = last_layer_inputs(net, x)
        expected = np.tanh(x @ net.layers[0].weights.T + net.layers[0].bias)
        np.testing.assert_allclose(u, expected, rtol=1e-14)


class TestLandscape:
    def _trained(self):
        ds = gen_segments(ToySpec("segments", n_per_class=20, margin=1.8, noise=0.05, seed=4))
        net = dense_network([2, 8, 2], "tanh", seed=4)
        spec = LossSpec("sp_focal", eta=0.03)
        train(net, ds, spec, Adam(0.01), epochs=300, batch_size=40, seed=4)
        return net, ds, spec

    def test_center_equals_trained_loss_exactly(self):
        net, ds, spec = self._trained()
        grid = landscape(net, spec, ds, span=0.5, resolution=5, seeds=(1, 2))
        assert abs(grid.center_loss - mean_loss(net, ds, spec)) <= 1e-12

    def test_seed_determinism(self):
        net, ds, spec = self._trained()
        g1 = landscape(net, spec, ds, span=0.5, resolution=5, seeds=(1, 2))
        g2 = landscape(net, spec, ds, span=0.5, resolution=5, seeds=(1, 2))
        np.testing.assert_array_equal(g1.loss, g2.loss)

    def test_different_seeds_differ(self):
        net, ds, spec = self._trained()
        g1 = landscape(net, spec, ds, span=0.5, resolution=5, seeds=(1, 2))
        g2 = landscape(net, spec, ds, span=0.5, resolution=5, seeds=(3, 4))
        assert np.abs(g1.loss - g2.loss).max() > 0

    def test_model_restored_after_evaluation(self):
        net, ds, spec = self._trained()
        before = [p.copy() for p in net.parameters()]
        landscape(net, spec, ds, span=1.0, resolution=5, seeds=(1, 2))
        for p, q in zip(net.parameters(), before):
            np.testing.assert_array_equal(p, q)

    def test_local_min_helper(self):
        net, ds, spec = self._trained()
        grid = landscape(net, spec, ds, span=0.2, resolution=5, seeds=(1, 2))
        # converged sp run: center below its 8 neighbors
        assert is_strict_local_min_center(grid)


class TestWeightTrace:
    def test_single_snapshot_has_zero_drift(self):
        trace = WeightTrace([np.ones((2, 2))])
        assert trace.tail_drift() == 0.0

    def test_identical_snapshots_zero_drift(self):
        trace = WeightTrace([np.ones((2, 2))] * 10)
        assert trace.tail_drift() == 0.0
        assert trace.max_abs() == 1.0

    def test_drift_measures_tail_window(self):
        snaps = [np.zeros((1, 1)) for _ in range(9)] + [np.array([[3.0]])]
        trace = WeightTrace(snaps)
        assert trace.tail_drift(window=1) == 3.0

    def test_training_records_one_snapshot_per_epoch(self):
        ds = gen_segments(ToySpec("segments", n_per_class=10, margin=1.8, seed=0))
        net = dense_network([2, 4, 2], "tanh", seed=0)
        res = train(net, ds, LossSpec("ce"), Adam(0.01), epochs=7, batch_size=20,
                    seed=0, record_trace=True)
        assert len(res.trace.snapshots) == 8  # init + 7 epochs

    def test_zero_epoch_run_keeps_init_snapshot(self):
        ds = gen_segments(ToySpec("segments", n_per_class=10, margin=1.8, seed=0))
        net = dense_network([2, 4, 2], "tanh", seed=0)
        res = train(net, ds, LossSpec("ce"), Adam(0.01), epochs=0, batch_size=20,
                    seed=0, record_trace=True)
        assert len(res.trace.snapshots) == 1
        np.testing.assert_array_equal(res.trace.snapshots[0], net.layers[-1].weights)

    def test_frozen_optimizer_keeps_all_snapshots_identical(self):
        from spnet.nn import Sgd

        ds = gen_segments(ToySpec("segments", n_per_class=10, margin=1.8, seed=0))
        net = dense_network([2, 4, 2], "tanh", seed=0)
        res = train(net, ds, LossSpec("ce"), Sgd(0.0), epochs=5, batch_size=20,
                    seed=0, record_trace=True)
        for snap in res.trace.snapshots[1:]:
            np.testing.assert_array_equal(snap, res.trace.snapshots[0])


class TestCsvEmission:
    def test_files_written_with_headers(self, tmp_path):
        net = _linear_head([[1.0, 0.0], [0.0, 0.0]], [0.0, 0.0])
        grid = confidence_grid(net, (-1, 1, -1, 1), 5)
        write_confidence_csv(tmp_path / "boundary.csv", grid)
        lines = (tmp_path / "boundary.csv").read_text().splitlines()
        assert lines[0] == "x,y,pred,max_prob,boundary"
        assert len(lines) == 26

        ds = Dataset(np.array([[-1.0, 0.0], [1.0, 0.0]]), np.array([0, 1]), 2, (-1.0, 1.0))
        lgrid = landscape(net, LossSpec("ce"), ds, span=0.1, resolution=3, seeds=(1, 2))
        write_landscape_csv(tmp_path / "landscape.csv", lgrid)
        lines = (tmp_path / "landscape.csv").read_text().splitlines()
        assert lines[0] == "a,b,loss"
        assert len(lines) == 10

        trace = WeightTrace([np.zeros((2, 2)), np.ones((2, 2))])
        write_trace_csv(tmp_path / "trace.csv", trace)
        lines = (tmp_path / "trace.csv").read_text().splitlines()
        assert lines[0] == "epoch,row,col,value"
        assert len(lines) == 9
