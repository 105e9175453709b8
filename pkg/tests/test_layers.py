import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvqml import autodiff as ad
from pvqml.autodiff import Tape, Tensor
from pvqml.errors import ConfigurationError, ShapeError
from pvqml.layers import (
    Dense, HQLSTMCell, LSTMCell, ParamRegistry, QDIConfig, QuantumLayer, VVRQConfig, fc_forward,
    hq_lstm_cell_step, lstm_cell_step, qdi_forward, vvrq_forward,
)


def flat_grad(registry, loss_fn):
    with Tape() as tape:
        p = registry.tensors()
        loss = loss_fn(p)
    tape.backward(loss)
    return registry.gather_grads(p)


def flat_fd(registry, loss_fn, idx, h=1e-5):
    out = []
    for i in idx:
        old = registry.flat[i]
        registry.flat[i] = old + h
        up = float(loss_fn(registry.tensors(False)).values)
        registry.flat[i] = old - h
        dn = float(loss_fn(registry.tensors(False)).values)
        registry.flat[i] = old
        out.append((up - dn) / (2 * h))
    return np.array(out)


def assert_rel(got, want, tol=1e-4):
    scale = max(1.0, float(np.max(np.abs(want))))
    assert np.max(np.abs(got - want)) <= tol * scale


class TestDense:
    def test_identity_passthrough(self):
        x = np.array([0.3, -1.2])
        assert np.array_equal(fc_forward(np.eye(2), np.zeros(2), x), x)

    def test_param_count_120_17(self):
        reg = ParamRegistry()
        d = Dense(reg, "fc", 120, 17)
        assert d.n_params == reg.size == 2057

    def test_mismatched_input(self):
        with pytest.raises(ShapeError):
            fc_forward(np.eye(2), np.zeros(2), np.ones(3))


class TestVVRQ:
    def test_zero_circuit_gives_ones(self):
        cfg = VVRQConfig(5, 3)
        assert np.allclose(vvrq_forward(cfg, np.zeros(cfg.n_params), np.zeros(5)), np.ones(5), atol=1e-15)

    def test_single_qubit(self):
        assert vvrq_forward(VVRQConfig(1, 1), [0.0], [math.pi]) == pytest.approx([-1.0], abs=1e-15)

    def test_param_counts(self):
        assert VVRQConfig(8, 7).n_params == 56
        assert VVRQConfig(3, 2, entanglement="strong").n_params == 18

    @pytest.mark.parametrize("axis", ["X", "Y"])
    def test_depth_zero_reads_cosines(self, axis):
        x = np.array([0.3, 1.1, -2.0])
        assert np.allclose(vvrq_forward(VVRQConfig(3, 0, embedding_axis=axis), [], x), np.cos(x), atol=1e-14)

    def test_depth_zero_y_readout_of_x_embedding(self):
        x = np.array([0.4, -0.9])
        out = vvrq_forward(VVRQConfig(2, 0, embedding_axis="X", measure_axis="Y"), [], x)
        assert np.allclose(out, -np.sin(x), atol=1e-14)

    def test_length_checks(self):
        with pytest.raises(ShapeError):
            vvrq_forward(VVRQConfig(2, 1), np.zeros(3), np.zeros(2))
        with pytest.raises(ShapeError):
            vvrq_forward(VVRQConfig(2, 1), np.zeros(2), np.zeros(3))

    def test_bad_config(self):
        with pytest.raises(ConfigurationError):
            VVRQConfig(2, 1, entanglement="full")

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2 ** 31), st.sampled_from(["basic", "strong"]))
    def test_outputs_bounded(self, seed, ent):
        rng = np.random.default_rng(seed)
        cfg = VVRQConfig(int(rng.integers(2, 6)), int(rng.integers(1, 4)), entanglement=ent)
        out = vvrq_forward(cfg, rng.uniform(0, 2 * np.pi, cfg.n_params), rng.normal(size=cfg.q) * 3)
        assert np.all(np.abs(out) <= 1 + 1e-12)


class TestQDI:
    def test_zero_circuit_scalar(self):
        cfg = QDIConfig(4, 4)
        assert qdi_forward(cfg, np.zeros(20), np.zeros(16)) == pytest.approx(0.0, abs=1e-15)

    def test_dims(self):
        cfg = QDIConfig(4, 4)
        assert (cfg.n_features, cfg.n_params) == (16, 20)
        assert QDIConfig(4, 3, reupload=True).n_features == 4

    def test_periodicity(self):
        rng = np.random.default_rng(0)
        cfg = QDIConfig(4, 4)
        w, x = rng.uniform(0, 2 * np.pi, 20), rng.normal(size=16)
        base = qdi_forward(cfg, w, x)
        for k in range(20):
            w2 = w.copy()
            w2[k] += 2 * np.pi
            assert qdi_forward(cfg, w2, x) == pytest.approx(base, abs=1e-12)

    def test_scalar_bounded(self):
        rng = np.random.default_rng(1)
        cfg = QDIConfig(4, 4)
        for _ in range(100):
            assert -1 <= qdi_forward(cfg, rng.uniform(0, 2 * np.pi, 20), rng.normal(size=16) * 3) <= 1

    def test_vector_readout(self):
        cfg = QDIConfig(4, 3, readout="vector", reupload=True)
        out = qdi_forward(cfg, np.zeros(16), np.zeros(4))
        assert out.shape == (4,) and np.allclose(out, 1.0)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            qdi_forward(QDIConfig(4, 4), np.zeros(20), np.zeros(4))


class TestQuantumLayerGradients:
    @pytest.mark.parametrize("seed", range(20))
    def test_grouped_qdi_vs_fd(self, seed):
        rng = np.random.default_rng(seed)
        reg = ParamRegistry()
        layer = QuantumLayer(reg, "q", QDIConfig(3, 2, readout="vector", reupload=True), groups=2)
        reg.initialize(rng)
        x = rng.normal(size=(3, 6))
        target = rng.normal(size=(3, 6))

        def loss(p, xt=None):
            return ad.mean_squared_error(layer(p, xt if xt is not None else Tensor(x)), target)

        g = flat_grad(reg, loss)
        assert_rel(g, flat_fd(reg, loss, range(reg.size)))
        # gradient w.r.t. the input rows
        xt = Tensor(x, requires_grad=True)
        with Tape() as tape:
            l = loss(reg.tensors(False), xt)
        tape.backward(l)
        fd = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            xp, xm = x.copy(), x.copy()
            xp[idx] += 1e-5
            xm[idx] -= 1e-5
            fd[idx] = (float(loss(reg.tensors(False), Tensor(xp)).values)
                       - float(loss(reg.tensors(False), Tensor(xm)).values)) / 2e-5
        assert_rel(xt.grad, fd)

    @pytest.mark.parametrize("seed", range(20))
    def test_vvrq_layer_vs_fd(self, seed):
        rng = np.random.default_rng(100 + seed)
        reg = ParamRegistry()
        layer = QuantumLayer(reg, "v", VVRQConfig(3, 2, entanglement="strong" if seed % 2 else "basic"))
        reg.initialize(rng)
        x = Tensor(rng.normal(size=(2, 3)))
        loss = lambda p: ad.total(ad.mul(layer(p, x), Tensor(rng_weights)))  # noqa: E731
        rng_weights = rng.normal(size=(2, 3))
        assert_rel(flat_grad(reg, loss), flat_fd(reg, loss, range(reg.size)))


class TestLSTM:
    def test_zero_params_zero_state(self):
        h, C = lstm_cell_step(np.zeros((84, 5)), np.zeros((84, 21)), np.zeros(84), np.zeros(84),
                              np.arange(5.0), np.zeros(21), np.zeros(21))
        assert np.array_equal(h, np.zeros(21)) and np.array_equal(C, np.zeros(21))

    def test_param_count(self):
        reg = ParamRegistry()
        cell = LSTMCell(reg, "l", 5, 21)
        assert cell.n_params == reg.size == 2352

    def test_forget_saturation(self):
        hd = 3
        b_ih = np.zeros(4 * hd)
        b_ih[:hd] = -10.0  # input gate closed
        b_ih[hd:2 * hd] = 10.0  # forget gate open
        C_prev = np.array([0.5, -0.2, 0.9])
        _, C = lstm_cell_step(np.zeros((4 * hd, 2)), np.zeros((4 * hd, hd)), b_ih, np.zeros(4 * hd),
                              np.ones(2), np.zeros(hd), C_prev)
        assert np.allclose(C, C_prev, atol=1e-4)

    def test_gate_order_i_f_g_o(self):
        hd = 1
        b = np.array([0.0, 0.0, 0.0, 0.0])
        b[2] = 100.0  # g -> 1; i, f, o = 0.5
        h, C = lstm_cell_step(np.zeros((4, 1)), np.zeros((4, 1)), b, np.zeros(4), [0.0], [0.0], [0.4])
        assert C[0] == pytest.approx(0.5 * 0.4 + 0.5 * 1.0)
        assert h[0] == pytest.approx(0.5 * math.tanh(C[0]))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            lstm_cell_step(np.zeros((8, 3)), np.zeros((8, 2)), np.zeros(8), np.zeros(8), np.zeros(2),
                           np.zeros(2), np.zeros(2))

    @pytest.mark.parametrize("seed", range(20))
    def test_cell_vs_fd(self, seed):
        rng = np.random.default_rng(seed)
        reg = ParamRegistry()
        cell = LSTMCell(reg, "l", 3, 4)
        reg.initialize(rng)
        x, h0, C0 = rng.normal(size=(2, 3)), rng.normal(size=(2, 4)), rng.normal(size=(2, 4))

        def loss(p):
            h, C = cell(p, Tensor(x), Tensor(h0), Tensor(C0))
            h, C = cell(p, Tensor(x[::-1]), h, C)
            return ad.total(ad.add(h, ad.scale(C, 0.5)))

        assert_rel(flat_grad(reg, loss), flat_fd(reg, loss, range(reg.size)))


class TestHQLSTMCell:
    def _cell(self, rng=None):
        reg = ParamRegistry()
        cell = HQLSTMCell(reg, "hq", 5, 6, n_qubits=4, depth=3)
        if rng is not None:
            reg.initialize(rng)
        return reg, cell

    def test_zero_weights_zero_hidden(self):
        reg, cell = self._cell()
        params = {n: reg.view(n) for n in reg.names()}
        h, C = hq_lstm_cell_step(cell, params, np.arange(5.0), np.zeros(6), np.zeros(6))
        assert np.allclose(h, 0.0) and np.allclose(C, 0.0)

    def test_group_split(self):
        reg, cell = self._cell()
        assert cell.in_x.n_out == 16 and cell.qdi.groups == 4
        assert cell.qdi_config.n_params == 16  # q (D + 1) with D = 3

    def test_shape_error(self):
        reg, cell = self._cell()
        with pytest.raises(ShapeError):
            hq_lstm_cell_step(cell, {n: reg.view(n) for n in reg.names()}, np.zeros(4), np.zeros(6), np.zeros(6))

    @pytest.mark.parametrize("seed", range(5))
    def test_grad_wrt_input_vs_fd(self, seed):
        rng = np.random.default_rng(seed)
        reg, cell = self._cell(rng)
        x, h0, C0 = rng.normal(size=5), rng.normal(size=6) * 0.5, rng.normal(size=6) * 0.5
        params = {n: reg.view(n) for n in reg.names()}
        xt = Tensor(x, requires_grad=True)
        with Tape() as tape:
            h, _ = cell(reg.tensors(False), xt, Tensor(h0), Tensor(C0))
            loss = ad.total(h)
        tape.backward(loss)
        fd = np.zeros(5)
        for i in range(5):
            xp, xm = x.copy(), x.copy()
            xp[i] += 1e-5
            xm[i] -= 1e-5
            fd[i] = (hq_lstm_cell_step(cell, params, xp, h0, C0)[0].sum()
                     - hq_lstm_cell_step(cell, params, xm, h0, C0)[0].sum()) / 2e-5
        assert_rel(xt.grad, fd)

    @pytest.mark.parametrize("seed", range(3))
    def test_param_grads_vs_fd(self, seed):
        rng = np.random.default_rng(seed)
        reg, cell = self._cell(rng)
        x, h0, C0 = rng.normal(size=(2, 5)), rng.normal(size=(2, 6)), rng.normal(size=(2, 6))

        def loss(p):
            h, C = cell(p, Tensor(x), Tensor(h0), Tensor(C0))
            return ad.total(ad.mul(h, C))

        idx = rng.choice(reg.size, 60, replace=False)
        assert_rel(flat_grad(reg, loss)[idx], flat_fd(reg, loss, idx))


class TestRegistry:
    def test_duplicate_segment(self):
        reg = ParamRegistry()
        reg.add("a", (2,))
        with pytest.raises(ConfigurationError):
            reg.add("a", (3,))

    def test_init_ranges(self):
        reg = ParamRegistry()
        reg.add("w", (1000,), "uniform", fan_in=4)
        reg.add("q", (1000,), "quantum")
        reg.initialize(np.random.default_rng(0))
        assert np.all(np.abs(reg.view("w")) <= 0.5)
        assert np.all((reg.view("q") >= 0) & (reg.view("q") < 2 * np.pi))
