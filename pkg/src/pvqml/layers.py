"""Building-block layers: dense, LSTM cells, and the VVRQ / QDI quantum layers.

Parameters live in a :class:`ParamRegistry`, a single flat float64 vector cut
into named segments. Layers hold segment names only; a forward pass receives
a ``{name: Tensor}`` mapping produced by :meth:`ParamRegistry.tensors`.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError, ShapeError
from .qsim import CircuitSpec, Feature, Observable, Param, cnot, expectations, rot, vjp

TWO_PI = 2.0 * np.pi


class ParamRegistry:
    """Named flat parameter segments; ``flat`` is the single source of truth."""

    def __init__(self):
        self._segments: "OrderedDict[str, tuple[int, tuple[int, ...], str]]" = OrderedDict()
        self._size = 0
        self.flat = np.zeros(0)

    def add(self, name, shape, init="uniform", fan_in=None):
        if name in self._segments:
            raise ConfigurationError(f"duplicate parameter segment {name!r}")
        shape = tuple(int(s) for s in shape)
        self._segments[name] = (self._size, shape, init if fan_in is None else f"{init}:{fan_in}")
        self._size += int(np.prod(shape))
        self.flat = np.zeros(self._size)
        return name

    @property
    def size(self) -> int:
        return self._size

    def names(self):
        return list(self._segments)

    def segment_sizes(self) -> dict:
        return {n: int(np.prod(s)) for n, (_, s, _) in self._segments.items()}

    def view(self, name) -> np.ndarray:
        off, shape, _ = self._segments[name]
        return self.flat[off:off + int(np.prod(shape))].reshape(shape)

    def initialize(self, rng: np.random.Generator):
        """Classical segments ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); quantum ~ U(0, 2*pi)."""
        for name, (off, shape, init) in self._segments.items():
            size = int(np.prod(shape))
            kind, _, fan = init.partition(":")
            if kind == "quantum":
                vals = rng.uniform(0.0, TWO_PI, size)
            elif kind == "zeros":
                vals = np.zeros(size)
            else:
                bound = 1.0 / np.sqrt(float(fan)) if fan else 1.0
                vals = rng.uniform(-bound, bound, size)
            self.flat[off:off + size] = vals

    def tensors(self, requires_grad=True) -> dict:
        return {n: Tensor(self.view(n), requires_grad=requires_grad, name=n) for n in self._segments}

    def gather_grads(self, tensors: dict) -> np.ndarray:
        out = np.zeros(self._size)
        for name, (off, shape, _) in self._segments.items():
            g = tensors[name].grad
            if g is not None:
                out[off:off + int(np.prod(shape))] = np.asarray(g).reshape(-1)
        return out


class Dense:
    """Affine map with an optional elementwise activation."""

    def __init__(self, registry: ParamRegistry, name: str, n_in: int, n_out: int, activation="identity"):
        self.n_in, self.n_out, self.activation = n_in, n_out, activation
        self.w = registry.add(f"{name}.weight", (n_out, n_in), "uniform", fan_in=n_in)
        self.b = registry.add(f"{name}.bias", (n_out,), "uniform", fan_in=n_in)

    @property
    def n_params(self):
        return self.n_out * self.n_in + self.n_out

    def __call__(self, p: dict, x: Tensor) -> Tensor:
        return ad.activation(ad.affine(x, p[self.w], p[self.b]), self.activation)


def fc_forward(weight, bias, x, activation="identity"):
    """Dense layer on plain arrays."""
    return ad.activation(ad.affine(x, weight, bias), activation).values


# --------------------------------------------------------------------------- quantum

def quantum_node(circuit: CircuitSpec, observables, weights: Tensor, x: Tensor, groups: int = 1) -> Tensor:
    """Differentiable circuit evaluation.

    ``x`` has ``groups * n_features`` columns and ``weights`` is ``[P]`` (one
    group) or ``[groups, P]``; group ``j`` runs the circuit on columns
    ``j*F:(j+1)*F`` with weight row ``j``. The output concatenates the
    ``K`` expectations of each group, ``groups * K`` columns.
    """
    nf, npar, nk = circuit.n_features, circuit.n_params, len(observables)
    xv = x.values
    single = xv.ndim == 1
    if single:
        xv = xv[None, :]
    if xv.shape[1] != groups * nf:
        raise ShapeError(f"quantum layer expects {groups * nf} inputs, got {xv.shape[1]}")
    wv = weights.values.reshape(groups, npar)
    if wv.size != groups * npar or weights.values.size != groups * npar:
        raise ShapeError(f"quantum layer expects {groups * npar} weights, got {weights.values.size}")
    batch = xv.shape[0]
    # rows ordered group-major: row j*batch + b
    feats = xv.reshape(batch, groups, nf).transpose(1, 0, 2).reshape(groups * batch, nf)
    params = np.repeat(wv, batch, axis=0)
    vals = expectations(circuit, params, feats, observables)
    out = vals.reshape(groups, batch, nk).transpose(1, 0, 2).reshape(batch, groups * nk)

    def back(g):
        g2 = g[None, :] if single else g
        up = g2.reshape(batch, groups, nk).transpose(1, 0, 2).reshape(groups * batch, nk)
        _, gp, gf = vjp(circuit, params, feats, observables, up)
        gx = gf.reshape(groups, batch, nf).transpose(1, 0, 2).reshape(batch, groups * nf)
        gw = gp.reshape(groups, batch, npar).sum(axis=1).reshape(weights.shape)
        return (gx[0] if single else gx), gw

    return ad.custom((x, weights), out[0] if single else out, back)


def _ring(q):
    if q < 2:
        return []
    return [cnot(i, (i + 1) % q) for i in range(q)] if q > 2 else [cnot(0, 1), cnot(1, 0)]


def _chain(q):
    return [cnot(i, i + 1) for i in range(q - 1)]


@dataclass(frozen=True)
class VVRQConfig:
    q: int
    d: int
    embedding_axis: str = "X"
    entanglement: str = "basic"
    measure_axis: str = "Z"

    def __post_init__(self):
        if self.q < 1 or self.d < 0:
            raise ConfigurationError("VVRQ needs q >= 1 and d >= 0")
        if self.entanglement not in ("basic", "strong"):
            raise ConfigurationError(f"unknown entanglement {self.entanglement!r}")
        for axis in (self.embedding_axis, self.measure_axis):
            if axis not in ("X", "Y", "Z"):
                raise ConfigurationError(f"unknown axis {axis!r}")

    @property
    def n_params(self) -> int:
        return self.q * self.d * (1 if self.entanglement == "basic" else 3)

    def circuit(self) -> CircuitSpec:
        q = self.q
        gates = [rot(self.embedding_axis, j, Feature(j)) for j in range(q)]
        for layer in range(self.d):
            for i in range(q):
                if self.entanglement == "basic":
                    gates.append(rot("X", i, Param(layer * q + i)))
                else:
                    base = 3 * (layer * q + i)
                    gates += [rot("Z", i, Param(base)), rot("Y", i, Param(base + 1)), rot("Z", i, Param(base + 2))]
            gates += _ring(q)
        return CircuitSpec(q, tuple(gates), self.n_params, q)

    def observables(self):
        return [Observable.pauli(self.measure_axis, i) for i in range(self.q)]


@dataclass(frozen=True)
class QDIConfig:
    q: int
    depth: int
    readout: str = "scalar"  # "scalar": <Y> on qubit 0 after fan-in; "vector": <Z> per qubit
    reupload: bool = False

    def __post_init__(self):
        if self.q < 1 or self.depth < 1:
            raise ConfigurationError("QDI needs q >= 1 and depth >= 1")
        if self.readout not in ("scalar", "vector"):
            raise ConfigurationError(f"unknown QDI readout {self.readout!r}")

    @property
    def n_params(self) -> int:
        return self.q * (self.depth + 1)

    @property
    def n_features(self) -> int:
        return self.q if self.reupload else self.q * self.depth

    @property
    def n_outputs(self) -> int:
        return 1 if self.readout == "scalar" else self.q

    def circuit(self) -> CircuitSpec:
        q = self.q
        gates = [rot("Y", i, Param(i)) for i in range(q)] + _chain(q)
        for block in range(self.depth):
            for i in range(q):
                gates.append(rot("Z", i, Feature(i if self.reupload else block * q + i)))
            gates += [rot("Y", i, Param((block + 1) * q + i)) for i in range(q)] + _chain(q)
        if self.readout == "scalar":
            gates += [cnot(i, 0) for i in range(1, q)]
        return CircuitSpec(q, tuple(gates), self.n_params, self.n_features)

    def observables(self):
        if self.readout == "scalar":
            return [Observable.pauli("Y", 0)]
        return [Observable.pauli("Z", i) for i in range(self.q)]


def _check_len(arr, n, what):
    if np.shape(arr)[-1] != n:
        raise ShapeError(f"{what}: expected length {n}, got {np.shape(arr)[-1]}")


def vvrq_forward(cfg: VVRQConfig, weights, x) -> np.ndarray:
    """Per-qubit expectations of the VVRQ circuit for input ``x`` (length q, or a row batch)."""
    _check_len(weights, cfg.n_params, "VVRQ weights")
    _check_len(x, cfg.q, "VVRQ input")
    out = expectations(cfg.circuit(), np.asarray(weights, float), np.asarray(x, float), cfg.observables())
    return out[0] if np.ndim(x) == 1 else out


def qdi_forward(cfg: QDIConfig, weights, x):
    """QDI readout: a float in scalar mode, a length-q vector in vector mode (per row for batches)."""
    _check_len(weights, cfg.n_params, "QDI weights")
    _check_len(x, cfg.n_features, "QDI input")
    out = expectations(cfg.circuit(), np.asarray(weights, float), np.asarray(x, float), cfg.observables())
    if np.ndim(x) == 1:
        return float(out[0, 0]) if cfg.readout == "scalar" else out[0]
    return out[:, 0] if cfg.readout == "scalar" else out


class QuantumLayer:
    """Trainable VVRQ or QDI block; ``groups`` independent copies share one kernel call."""

    def __init__(self, registry: ParamRegistry, name: str, config, groups: int = 1):
        self.config = config
        self.groups = groups
        self._circuit = config.circuit()
        self._obs = config.observables()
        shape = (config.n_params,) if groups == 1 else (groups, config.n_params)
        self.w = registry.add(f"{name}.weights", shape, "quantum")

    @property
    def n_params(self):
        return self.groups * self.config.n_params

    def __call__(self, p: dict, x: Tensor) -> Tensor:
        return quantum_node(self._circuit, self._obs, p[self.w], x, self.groups)

    def describe(self):
        return {"type": type(self.config).__name__, **asdict(self.config), "groups": self.groups}


# --------------------------------------------------------------------------- recurrent

def _gate_algebra(i_pre, f_pre, g_pre, o_pre, C_prev):
    i = ad.sigmoid(i_pre)
    f = ad.sigmoid(f_pre)
    g = ad.tanh(g_pre)
    o = ad.sigmoid(o_pre)
    C = ad.add(ad.mul(f, C_prev), ad.mul(i, g))
    h = ad.mul(o, ad.tanh(C))
    return h, C


class LSTMCell:
    """Classical LSTM cell, gate order (input, forget, cell, output), dual biases."""

    def __init__(self, registry: ParamRegistry, name: str, input_dim: int, hidden_dim: int):
        self.input_dim, self.hidden_dim = input_dim, hidden_dim
        h4 = 4 * hidden_dim
        self.w_ih = registry.add(f"{name}.W_ih", (h4, input_dim), "uniform", fan_in=hidden_dim)
        self.w_hh = registry.add(f"{name}.W_hh", (h4, hidden_dim), "uniform", fan_in=hidden_dim)
        self.b_ih = registry.add(f"{name}.b_ih", (h4,), "uniform", fan_in=hidden_dim)
        self.b_hh = registry.add(f"{name}.b_hh", (h4,), "uniform", fan_in=hidden_dim)

    @property
    def n_params(self):
        return 4 * self.hidden_dim * (self.input_dim + self.hidden_dim + 2)

    def __call__(self, p: dict, x: Tensor, h: Tensor, C: Tensor):
        pre = ad.add(ad.affine(x, p[self.w_ih], p[self.b_ih]), ad.affine(h, p[self.w_hh], p[self.b_hh]))
        return _gate_algebra(*ad.split(pre, 4), C)


def lstm_cell_step(W_ih, W_hh, b_ih, b_hh, x_t, h_prev, C_prev):
    """One classical LSTM step on plain arrays; returns ``(h_t, C_t)``."""
    hd = np.shape(h_prev)[-1]
    if np.shape(W_ih) != (4 * hd, np.shape(x_t)[-1]) or np.shape(W_hh) != (4 * hd, hd):
        raise ShapeError("LSTM weight shapes do not match input/hidden sizes")
    if np.shape(C_prev) != np.shape(h_prev):
        raise ShapeError("cell state and hidden state shapes differ")
    pre = ad.add(ad.affine(x_t, W_ih, b_ih), ad.affine(h_prev, W_hh, b_hh))
    h, C = _gate_algebra(*ad.split(pre, 4), ad.Tensor(C_prev))
    return h.values, C.values


class HQLSTMCell:
    """LSTM cell whose four gate pre-activations pass through QDI circuits.

    x_t -> 4*n_q and h -> 4*n_q affine maps, summed, split into four groups,
    each group through its own QDI (vector-Z readout) and an affine map to
    ``hidden_dim``; then the usual sigmoid/sigmoid/tanh/sigmoid gate algebra.
    """

    def __init__(self, registry: ParamRegistry, name: str, input_dim: int, hidden_dim: int,
                 n_qubits: int = 4, depth: int = 3):
        self.input_dim, self.hidden_dim, self.n_qubits = input_dim, hidden_dim, n_qubits
        width = 4 * n_qubits
        self.in_x = Dense(registry, f"{name}.in_x", input_dim, width)
        self.in_h = Dense(registry, f"{name}.in_h", hidden_dim, width)
        self.qdi_config = QDIConfig(n_qubits, depth, readout="vector", reupload=True)
        self.qdi = QuantumLayer(registry, f"{name}.qdi", self.qdi_config, groups=4)
        self.out = [Dense(registry, f"{name}.out_{gate}", n_qubits, hidden_dim) for gate in "ifgo"]

    @property
    def n_params(self):
        return self.in_x.n_params + self.in_h.n_params + self.qdi.n_params + sum(d.n_params for d in self.out)

    def __call__(self, p: dict, x: Tensor, h: Tensor, C: Tensor):
        comb = ad.add(self.in_x(p, x), self.in_h(p, h))
        q_out = self.qdi(p, comb)
        pre = [dense(p, part) for dense, part in zip(self.out, ad.split(q_out, 4))]
        return _gate_algebra(*pre, C)


def hq_lstm_cell_step(cell: HQLSTMCell, params: dict, x_t, h_prev, C_prev):
    """One HQLSTM step on plain arrays; ``params`` maps segment names to arrays."""
    if np.shape(x_t)[-1] != cell.input_dim or np.shape(h_prev)[-1] != cell.hidden_dim:
        raise ShapeError(f"HQLSTM step expects x of length {cell.input_dim} and h of length {cell.hidden_dim}")
    if np.shape(C_prev) != np.shape(h_prev):
        raise ShapeError("cell state and hidden state shapes differ")
    p = {k: Tensor(np.asarray(v, float)) for k, v in params.items()}
    h, C = cell(p, Tensor(np.asarray(x_t, float)), Tensor(np.asarray(h_prev, float)), Tensor(np.asarray(C_prev, float)))
    return h.values, C.values
