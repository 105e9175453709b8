"""The six forecasting architectures and their inference entry points.

All models take windows shaped ``[batch, steps, 5]`` with columns
(Ta, Tm, I3, I15, P), already scaled to the unit interval. Hour-ahead models
(MLP, HQNN, LSTM, HQLSTM) return one value per window; the sequence models
return ``horizon`` values.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError, ContractError, ShapeError
from .layers import Dense, HQLSTMCell, LSTMCell, ParamRegistry, QDIConfig, QuantumLayer, VVRQConfig

N_FEATURES = 5
POWER = 4
WINDOW = 24

KINDS = ("mlp", "hqnn", "lstm", "hqlstm", "seq2seq", "hqseq2seq")
SEQUENCE_KINDS = ("seq2seq", "hqseq2seq")


@dataclass
class ModelDescriptor:
    kind: str
    dims: dict
    quantum: dict = field(default_factory=dict)
    total_params: int = 0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(kind=d["kind"], dims=dict(d["dims"]), quantum=dict(d.get("quantum", {})),
                   total_params=int(d["total_params"]))


class Model:
    kind = ""

    def __init__(self, **dims):
        self.dims = dims
        self.registry = ParamRegistry()
        self.quantum = {}
        self._build()

    def _build(self):
        raise NotImplementedError

    @property
    def descriptor(self) -> ModelDescriptor:
        return ModelDescriptor(self.kind, dict(self.dims), dict(self.quantum), self.registry.size)

    @property
    def is_sequence(self) -> bool:
        return self.kind in SEQUENCE_KINDS

    def init_params(self, seed=0):
        self.registry.initialize(np.random.default_rng(seed))
        return self

    def forward(self, p: dict, inputs: np.ndarray, horizon: int = 1, training=False, rng=None) -> Tensor:
        raise NotImplementedError

    def predict(self, inputs: np.ndarray, horizon: int = 1) -> np.ndarray:
        """Deterministic predictions (dropout off), shape ``[batch, horizon]``."""
        p = self.registry.tensors(requires_grad=False)
        return self.forward(p, np.asarray(inputs, dtype=np.float64), horizon=horizon).values

    def _check_inputs(self, inputs, steps=None):
        if inputs.ndim != 3 or inputs.shape[2] != N_FEATURES or (steps is not None and inputs.shape[1] != steps):
            want = f"[batch, {steps if steps else 'T'}, {N_FEATURES}]"
            raise ShapeError(f"{self.kind}: expected windows shaped {want}, got {inputs.shape}")


def _dropout(h: Tensor, rate: float, training: bool, rng):
    if not training or rate <= 0.0:
        return h
    keep = 1.0 - rate
    mask = (rng.random(h.shape) < keep) / keep
    return ad.scale(h, mask)


class MLP(Model):
    kind = "mlp"

    def _build(self):
        widths = [self.dims.get("window", WINDOW) * N_FEATURES, *self.dims.get("hidden", (32, 3, 3)), 1]
        self.dims = {"window": widths[0] // N_FEATURES, "hidden": list(widths[1:-1])}
        self.layers = [
            Dense(self.registry, f"fc{i}", widths[i], widths[i + 1], "tanh" if i < len(widths) - 2 else "identity")
            for i in range(len(widths) - 1)
        ]

    def forward(self, p, inputs, horizon=1, training=False, rng=None):
        self._check_inputs(inputs, self.dims["window"])
        if horizon != 1:
            raise ContractError("hour-ahead models forecast exactly one step")
        x = Tensor(inputs.reshape(inputs.shape[0], -1))
        for layer in self.layers:
            x = layer(p, x)
        return x


class HQNN(Model):
    kind = "hqnn"

    def _build(self):
        window = self.dims.get("window", WINDOW)
        h1 = self.dims.get("hidden", 17)
        vq = VVRQConfig(self.dims.get("qubits", 8), self.dims.get("depth", 7),
                        self.dims.get("embedding", "X"), self.dims.get("entanglement", "basic"),
                        self.dims.get("measurement", "Z"))
        self.dims = {"window": window, "hidden": h1, "qubits": vq.q, "depth": vq.d, "embedding": vq.embedding_axis,
                     "entanglement": vq.entanglement, "measurement": vq.measure_axis}
        self.fc1 = Dense(self.registry, "fc1", window * N_FEATURES, h1, "tanh")
        self.fc2 = Dense(self.registry, "fc2", h1, vq.q, "tanh")
        self.vvrq = QuantumLayer(self.registry, "vvrq", vq)
        self.head = Dense(self.registry, "head", vq.q, 1)
        self.quantum = {"vvrq": self.vvrq.describe()}

    def forward(self, p, inputs, horizon=1, training=False, rng=None):
        self._check_inputs(inputs, self.dims["window"])
        if horizon != 1:
            raise ContractError("hour-ahead models forecast exactly one step")
        x = Tensor(inputs.reshape(inputs.shape[0], -1))
        return self.head(p, self.vvrq(p, self.fc2(p, self.fc1(p, x))))


class _Recurrent(Model):
    """Shared unrolling for LSTM and HQLSTM: concat of all hidden states -> one neuron."""

    def _unroll(self, p, inputs, training, rng):
        self._check_inputs(inputs, self.dims["window"])
        batch = inputs.shape[0]
        hd = self.dims["hidden"]
        h = Tensor(np.zeros((batch, hd)))
        C = Tensor(np.zeros((batch, hd)))
        outs = []
        for t in range(inputs.shape[1]):
            h, C = self.cell(p, Tensor(inputs[:, t, :]), h, C)
            outs.append(_dropout(h, self.dims["dropout"], training, rng))
        return self.head(p, ad.concat(outs))

    def forward(self, p, inputs, horizon=1, training=False, rng=None):
        if horizon != 1:
            raise ContractError("hour-ahead models forecast exactly one step")
        return self._unroll(p, inputs, training, rng)


class LSTMModel(_Recurrent):
    kind = "lstm"

    def _build(self):
        self.dims = {"window": self.dims.get("window", WINDOW), "hidden": self.dims.get("hidden", 21),
                     "dropout": self.dims.get("dropout", 0.158)}
        self.cell = LSTMCell(self.registry, "lstm", N_FEATURES, self.dims["hidden"])
        self.head = Dense(self.registry, "head", self.dims["window"] * self.dims["hidden"], 1)


class HQLSTMModel(_Recurrent):
    kind = "hqlstm"

    def _build(self):
        self.dims = {"window": self.dims.get("window", WINDOW), "hidden": self.dims.get("hidden", 20),
                     "dropout": self.dims.get("dropout", 0.239), "qubits": self.dims.get("qubits", 4),
                     "qdi_depth": self.dims.get("qdi_depth", 3)}
        self.cell = HQLSTMCell(self.registry, "hqlstm", N_FEATURES, self.dims["hidden"],
                               self.dims["qubits"], self.dims["qdi_depth"])
        self.head = Dense(self.registry, "head", self.dims["window"] * self.dims["hidden"], 1)
        self.quantum = {"qdi": self.cell.qdi.describe()}


class Seq2Seq(Model):
    """Encoder LSTM over all features; decoder LSTM over power only, fed back autoregressively."""

    kind = "seq2seq"

    def _build(self):
        raw = self.dims
        hd = raw.get("hidden", 16)
        self.dims = {"hidden": hd}
        self._raw = raw
        self.encoder = LSTMCell(self.registry, "encoder", N_FEATURES, hd)
        self.decoder = LSTMCell(self.registry, "decoder", 1, hd)
        self._build_head(hd)

    def _build_head(self, hd):
        self.head = Dense(self.registry, "head", hd, 1)

    def forward(self, p, inputs, horizon=1, training=False, rng=None):
        self._check_inputs(inputs)
        if inputs.shape[1] < 1:
            raise ContractError("sequence models need at least one history step")
        if horizon < 1:
            raise ContractError("horizon must be >= 1")
        batch = inputs.shape[0]
        hd = self.dims["hidden"]
        h = Tensor(np.zeros((batch, hd)))
        C = Tensor(np.zeros((batch, hd)))
        for t in range(inputs.shape[1]):
            h, C = self.encoder(p, Tensor(inputs[:, t, :]), h, C)
        y = Tensor(inputs[:, -1, POWER:POWER + 1])
        outs = []
        for _ in range(horizon):
            h, C = self.decoder(p, y, h, C)
            y = self.head(p, h)
            outs.append(y)
        return ad.concat(outs)


class HQSeq2Seq(Seq2Seq):
    kind = "hqseq2seq"

    def _build_head(self, hd):
        q = self._raw.get("qubits", 4)
        if hd % q:
            raise ConfigurationError(f"QDI head needs hidden size divisible by {q} qubits, got {hd}")
        self.dims["qubits"] = q
        # one encoding block per consecutive group of q hidden units
        cfg = QDIConfig(q, hd // q, readout="scalar", reupload=False)
        self.head = QuantumLayer(self.registry, "qdi", cfg)
        self.quantum = {"qdi": self.head.describe()}


_CLASSES = {cls.kind: cls for cls in (MLP, HQNN, LSTMModel, HQLSTMModel, Seq2Seq, HQSeq2Seq)}


def build_model(kind: str, seed: int | None = 0, **dims) -> Model:
    try:
        cls = _CLASSES[kind]
    except KeyError:
        raise ConfigurationError(f"unknown model kind {kind!r}; choose from {KINDS}") from None
    model = cls(**dims)
    if seed is not None:
        model.init_params(seed)
    return model


def build_mlp(seed=0, **dims):
    return build_model("mlp", seed, **dims)


def build_hqnn(seed=0, **dims):
    return build_model("hqnn", seed, **dims)


def build_lstm(seed=0, **dims):
    return build_model("lstm", seed, **dims)


def build_hqlstm(seed=0, **dims):
    return build_model("hqlstm", seed, **dims)


def build_seq2seq(seed=0, **dims):
    return build_model("seq2seq", seed, **dims)


def build_hqseq2seq(seed=0, **dims):
    return build_model("hqseq2seq", seed, **dims)


def forecast_next_hour(model: Model, window) -> float:
    """Scaled power for the hour after a ``[24, 5]`` window."""
    if model.is_sequence:
        raise ContractError("use seq2seq_forecast for sequence models")
    window = np.asarray(window, dtype=np.float64)
    if window.shape != (model.dims["window"], N_FEATURES):
        raise ShapeError(f"expected window shape ({model.dims['window']}, {N_FEATURES}), got {window.shape}")
    return float(model.predict(window[None])[0, 0])


def seq2seq_forecast(model: Model, history, horizon: int) -> np.ndarray:
    """Greedy autoregressive forecast of ``horizon`` scaled power values."""
    if not model.is_sequence:
        raise ContractError("hour-ahead models cannot forecast multi-step horizons")
    history = np.asarray(history, dtype=np.float64)
    if history.ndim != 2 or history.shape[0] == 0:
        raise ContractError("history must be a non-empty [T, 5] matrix")
    return model.predict(history[None], horizon=horizon)[0]
