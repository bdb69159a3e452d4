import numpy as np
import pytest

from conftest import make_grid_template
from sftkit.autodiff import finite_difference_check, mean_
from sftkit.network import (
    DeformationState,
    NetworkConfig,
    forward,
    forward_vertices,
    init_network,
    load_parameters,
    save_parameters,
    transfer_parameters,
)


class TestConfig:
    @pytest.mark.parametrize(
        "preset,layers,width",
        [("small", 4, 64), ("base", 8, 256), ("large", 12, 512)],
    )
    def test_presets(self, preset, layers, width):
        cfg = NetworkConfig.preset(preset)
        assert cfg.hidden_layers == layers
        assert cfg.width == width

    @pytest.mark.parametrize(
        "preset,expected",
        [
            # input->h, (layers-1) h->h transitions, h->out, plus biases.
            ("small", 3 * 64 + 64 + 3 * (64 * 64 + 64) + 64 * 3 + 3),
            ("base", 3 * 256 + 256 + 7 * (256 * 256 + 256) + 256 * 3 + 3),
            ("large", 3 * 512 + 512 + 11 * (512 * 512 + 512) + 512 * 3 + 3),
        ],
    )
    def test_parameter_count_closed_form(self, preset, expected):
        cfg = NetworkConfig.preset(preset)
        assert cfg.parameter_count() == expected
        assert init_network(cfg).parameter_count() == expected

    def test_bad_preset(self):
        with pytest.raises(ValueError):
            NetworkConfig.preset("giant")

    def test_validation(self):
        with pytest.raises(ValueError):
            NetworkConfig(hidden_layers=0)


class TestInitForward:
    def test_zero_displacement_at_init(self):
        mesh = make_grid_template(m=5)
        state = DeformationState.network(NetworkConfig(hidden_layers=2, width=16, seed=3), mesh.vertices)
        assert np.array_equal(forward_vertices(state, mesh.vertices), mesh.vertices)

    def test_same_seed_identical(self):
        cfg = NetworkConfig(hidden_layers=3, width=32, seed=11)
        a, b = init_network(cfg), init_network(cfg)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_vertex_offset_lift(self):
        mesh = make_grid_template(m=4)
        state = DeformationState.vertex_offset(mesh.vertices)
        state.offsets[:, 2] = 0.1
        out = forward_vertices(state, mesh.vertices)
        assert np.allclose(out - mesh.vertices, [0.0, 0.0, 0.1])

    def test_per_vertex_independence(self, rng):
        mesh = make_grid_template(m=5)
        cfg = NetworkConfig(hidden_layers=2, width=16, seed=1)
        state = DeformationState.network(cfg, mesh.vertices)
        for w in state.params.weights:
            w += rng.normal(0.0, 0.05, w.shape)
        full = forward_vertices(state, mesh.vertices)
        perm = rng.permutation(mesh.vertices.shape[0])
        permuted = forward_vertices(state, mesh.vertices[perm])
        assert np.allclose(full[perm], permuted, atol=1e-15)

    def test_gradient_wrt_parameters_fd(self, rng):
        # Scalar loss through the MLP on a small grid; relative error < 1e-4.
        mesh = make_grid_template(m=4)
        cfg = NetworkConfig(hidden_layers=2, width=8, seed=5)
        state = DeformationState.network(cfg, mesh.vertices)
        for w in state.params.weights:
            w += rng.normal(0.0, 0.1, w.shape)
        target = rng.random(mesh.vertices.shape)
        arrays = [a.copy() for a in state.trainable_arrays()]
        from sftkit.autodiff import abs_, constant, matmul, relu

        def program(*params):
            h = constant((mesh.vertices - state.center) / state.scale)
            n = len(params) // 2
            for i in range(n):
                h = matmul(h, params[2 * i]) + params[2 * i + 1]
                if i < n - 1:
                    h = relu(h)
            xt = constant(mesh.vertices) + h
            return mean_(abs_(xt - constant(target)))

        rng2 = np.random.default_rng(0)
        coords = []
        for ai, arr in enumerate(arrays):
            for flat in rng2.choice(arr.size, size=min(3, arr.size), replace=False):
                coords.append((ai, tuple(int(q) for q in np.unravel_index(int(flat), arr.shape))))
        report = finite_difference_check(program, arrays, h=1e-6, tol=1e-4, coords=coords)
        assert report.passed, str(report)


class TestTransfer:
    def test_copy_semantics(self):
        cfg = NetworkConfig(hidden_layers=2, width=8, seed=0)
        params = init_network(cfg)
        params.weights[0][0, 0] = 0.5
        nxt = transfer_parameters(params)
        assert nxt.weights[0][0, 0] == 0.5
        nxt.weights[0][0, 0] = 9.0
        assert params.weights[0][0, 0] == 0.5

    def test_forward_continuity_across_transfer(self, rng):
        mesh = make_grid_template(m=4)
        cfg = NetworkConfig(hidden_layers=2, width=8, seed=2)
        state = DeformationState.network(cfg, mesh.vertices)
        for w in state.params.weights:
            w += rng.normal(0.0, 0.1, w.shape)
        before = forward_vertices(state, mesh.vertices)
        nxt = DeformationState(
            mode="network", center=state.center, scale=state.scale,
            params=transfer_parameters(state.params),
        )
        assert np.array_equal(forward_vertices(nxt, mesh.vertices), before)


class TestSerialization:
    def test_round_trip(self, tmp_path, rng):
        cfg = NetworkConfig(hidden_layers=3, width=16, seed=7)
        params = init_network(cfg)
        for w in params.weights:
            w += rng.normal(0.0, 0.2, w.shape)
        path = tmp_path / "params.bin"
        save_parameters(path, params, preset="custom")
        loaded = load_parameters(path)
        assert loaded.config == cfg
        for a, b in zip(params.arrays(), loaded.arrays()):
            assert np.array_equal(a, b)

    def test_non_finite_forward_detected(self):
        mesh = make_grid_template(m=4)
        cfg = NetworkConfig(hidden_layers=2, width=8, seed=0)
        state = DeformationState.network(cfg, mesh.vertices)
        state.params.weights[0][:] = np.nan
        from sftkit.network import NetworkError

        with pytest.raises(NetworkError, match="layer 0"):
            forward(state, mesh.vertices)
