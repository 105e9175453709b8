"""Circuit description types and the dense state-vector operations built on them.

Conventions
-----------
* Rotations are half-angle: ``R_A(theta) = exp(-i * theta * A / 2)`` for
  ``A`` in {X, Y, Z}.
* Qubit 0 is the most significant bit of the amplitude index, so ``|10>``
  on two qubits is amplitude index 2.
* Every function accepts either a single parameter/feature vector or a batch
  (one row per sample); batch evaluation runs the selected kernel once over
  all rows.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Sequence

import numpy as np

from ..errors import ConfigurationError, ShapeError, UnsupportedCircuitError
from ._backend import get_kernels

MAX_QUBITS = 12


class Gate(IntEnum):
    RX = 0
    RY = 1
    RZ = 2
    CNOT = 3


ROTATIONS = (Gate.RX, Gate.RY, Gate.RZ)
_AXIS_GATE = {"X": Gate.RX, "Y": Gate.RY, "Z": Gate.RZ}


@dataclass(frozen=True)
class AngleSource:
    """Where a rotation angle comes from: a trainable slot, a feature slot or a constant."""

    kind: str  # "param" | "feature" | "const"
    value: float = 0.0

    @property
    def slot(self) -> int:
        return int(self.value)


def Param(slot: int) -> AngleSource:
    return AngleSource("param", int(slot))


def Feature(slot: int) -> AngleSource:
    return AngleSource("feature", int(slot))


def Const(value: float) -> AngleSource:
    return AngleSource("const", float(value))


@dataclass(frozen=True)
class GateOp:
    kind: Gate
    target: int
    control: int | None = None
    angle: AngleSource | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Gate(self.kind))
        if self.kind == Gate.CNOT:
            if self.control is None or self.control == self.target:
                raise ConfigurationError("CNOT needs a control distinct from its target")
        elif self.angle is None:
            raise ConfigurationError(f"{self.kind.name} needs an angle source")


def rot(axis: str, target: int, angle: AngleSource) -> GateOp:
    """Rotation about ``axis`` ("X", "Y" or "Z") on ``target``."""
    try:
        return GateOp(_AXIS_GATE[axis.upper()], target, angle=angle)
    except KeyError:
        raise ConfigurationError(f"unknown rotation axis {axis!r}") from None


def cnot(control: int, target: int) -> GateOp:
    return GateOp(Gate.CNOT, target, control=control)


@dataclass(frozen=True)
class Observable:
    """Pauli product over distinct qubits, e.g. ``((0, "Z"), (2, "X"))``."""

    terms: tuple[tuple[int, str], ...]

    def __post_init__(self):
        terms = tuple((int(q), str(a).upper()) for q, a in self.terms)
        qubits = [q for q, _ in terms]
        if len(set(qubits)) != len(qubits):
            raise ConfigurationError("observable qubit indices must be distinct")
        for q, a in terms:
            if a not in ("X", "Y", "Z"):
                raise ConfigurationError(f"unknown Pauli axis {a!r}")
            if q < 0:
                raise ConfigurationError("negative qubit index")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def pauli(cls, axis: str, qubit: int) -> "Observable":
        return cls(((qubit, axis),))

    def masks(self, n_qubits: int) -> tuple[int, int, int]:
        xm = zm = ny = 0
        for q, a in self.terms:
            if q >= n_qubits:
                raise ConfigurationError(f"observable qubit {q} out of range for {n_qubits} qubits")
            bit = 1 << (n_qubits - 1 - q)
            if a in ("X", "Y"):
                xm |= bit
            if a in ("Z", "Y"):
                zm |= bit
            ny += a == "Y"
        return xm, zm, ny


def _observable_arrays(observables: Sequence[Observable], n_qubits: int):
    masks = [o.masks(n_qubits) for o in observables]
    xm = np.array([m[0] for m in masks], dtype=np.int64)
    zm = np.array([m[1] for m in masks], dtype=np.int64)
    ny = np.array([m[2] for m in masks], dtype=np.int32)
    return xm, zm, ny


@dataclass(frozen=True)
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        _check_qubits(self.n_qubits)
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (1 << self.n_qubits,):
            raise ShapeError(f"expected {1 << self.n_qubits} amplitudes, got shape {amps.shape}")
        object.__setattr__(self, "amplitudes", amps)

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class CircuitSpec:
    """Immutable gate list with slot bindings.

    Slots may be reused by several gates (data re-uploading, shared weights).
    The dense incidence matrices ``param_map`` (gates x params) and
    ``feature_map`` (gates x features) turn slot vectors into per-gate angles
    with one matrix product, and route per-gate gradients back to slots.
    """

    n_qubits: int
    gates: tuple[GateOp, ...]
    n_params: int = 0
    n_features: int = 0
    _arrays: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        _check_qubits(self.n_qubits)
        gates = tuple(self.gates)
        object.__setattr__(self, "gates", gates)
        n = len(gates)
        kinds = np.zeros(n, dtype=np.int32)
        targets = np.zeros(n, dtype=np.int32)
        controls = np.zeros(n, dtype=np.int32)
        pmap = np.zeros((n, self.n_params))
        fmap = np.zeros((n, self.n_features))
        const = np.zeros(n)
        for g, op in enumerate(gates):
            _check_index(op.target, self.n_qubits)
            kinds[g] = int(op.kind)
            targets[g] = op.target
            if op.kind == Gate.CNOT:
                _check_index(op.control, self.n_qubits)
                controls[g] = op.control
                continue
            src = op.angle
            if src.kind == "param":
                if not 0 <= src.slot < self.n_params:
                    raise ConfigurationError(f"gate {g}: param slot {src.slot} >= n_params={self.n_params}")
                pmap[g, src.slot] = 1.0
            elif src.kind == "feature":
                if not 0 <= src.slot < self.n_features:
                    raise ConfigurationError(f"gate {g}: feature slot {src.slot} >= n_features={self.n_features}")
                fmap[g, src.slot] = 1.0
            elif src.kind == "const":
                const[g] = src.value
            else:
                raise ConfigurationError(f"gate {g}: unknown angle source {src.kind!r}")
        object.__setattr__(self, "_arrays", dict(
            kinds=kinds, targets=targets, controls=controls,
            param_map=pmap, feature_map=fmap, const=const,
        ))

    @property
    def kinds(self) -> np.ndarray:
        return self._arrays["kinds"]

    @property
    def param_map(self) -> np.ndarray:
        return self._arrays["param_map"]

    @property
    def feature_map(self) -> np.ndarray:
        return self._arrays["feature_map"]

    def feature_degrees(self) -> np.ndarray:
        """Number of encoding gates reading each feature slot."""
        return self.feature_map.sum(axis=0).astype(int)

    def angles(self, params, features) -> np.ndarray:
        """Resolve per-gate angles, shape ``(batch, n_gates)``."""
        p = _as_batch(params, self.n_params, "params")
        f = _as_batch(features, self.n_features, "features")
        batch = max(p.shape[0], f.shape[0])
        out = np.broadcast_to(self._arrays["const"], (batch, len(self.gates))).copy()
        if self.n_params:
            out += p @ self.param_map.T
        if self.n_features:
            out += f @ self.feature_map.T
        return np.ascontiguousarray(out)

    def kernel_args(self):
        a = self._arrays
        return a["kinds"], a["targets"], a["controls"]


def _check_qubits(n):
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_QUBITS:
        raise ConfigurationError(f"n_qubits must be an integer in [1, {MAX_QUBITS}], got {n!r}")


def _check_index(q, n):
    if q is None or not 0 <= q < n:
        raise ConfigurationError(f"qubit index {q} out of range for {n} qubits")


def _as_batch(values, width, name):
    if values is None:
        values = np.zeros(width)
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != width:
        raise ShapeError(f"{name}: expected length {width}, got shape {np.shape(values)}")
    return arr


def init_state(n_qubits: int) -> StateVector:
    _check_qubits(n_qubits)
    amps = np.zeros(1 << n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(n_qubits, amps)


def apply_gate(state: StateVector, gate: GateOp, angle: float = 0.0, backend=None) -> StateVector:
    """Return ``gate`` applied to ``state``; ``angle`` is ignored for CNOT."""
    n = state.n_qubits
    _check_index(gate.target, n)
    if gate.kind == Gate.CNOT:
        _check_index(gate.control, n)
    amps = state.amplitudes.copy()[None, :]
    get_kernels(backend).evolve(
        amps,
        np.array([int(gate.kind)], dtype=np.int32),
        np.array([gate.target], dtype=np.int32),
        np.array([gate.control or 0], dtype=np.int32),
        np.array([[float(angle)]]),
        n,
    )
    return StateVector(n, amps[0])


def run_batch(circuit: CircuitSpec, params=None, features=None, backend=None) -> np.ndarray:
    """Final amplitudes for each batch row, shape ``(batch, 2**n)``."""
    kinds, targets, controls = circuit.kernel_args()
    return get_kernels(backend).forward(kinds, targets, controls, circuit.angles(params, features), circuit.n_qubits)


def run_circuit(circuit: CircuitSpec, params=None, features=None, backend=None) -> StateVector:
    if params is not None and np.ndim(params) != 1 or features is not None and np.ndim(features) != 1:
        raise ShapeError("run_circuit takes single vectors; use run_batch for batches")
    return StateVector(circuit.n_qubits, run_batch(circuit, params, features, backend)[0])


def expectation(state: StateVector, obs: Observable, backend=None) -> float:
    xm, zm, ny = _observable_arrays([obs], state.n_qubits)
    amps = np.ascontiguousarray(state.amplitudes[None, :])
    return float(get_kernels(backend).expval(amps, xm, zm, ny)[0, 0])


def expectations(circuit: CircuitSpec, params, features, observables: Sequence[Observable], backend=None) -> np.ndarray:
    """Exact expectations of each observable per batch row, shape ``(batch, K)``."""
    states = run_batch(circuit, params, features, backend)
    xm, zm, ny = _observable_arrays(observables, circuit.n_qubits)
    return get_kernels(backend).expval(states, xm, zm, ny)


def _require_differentiable(circuit):
    # the kernel set is closed over {RX, RY, RZ, CNOT}; anything else is a malformed circuit
    bad = [g for g, op in enumerate(circuit.gates) if op.kind not in ROTATIONS and op.kind != Gate.CNOT]
    if bad:
        raise UnsupportedCircuitError(f"gates {bad} have no generator for adjoint differentiation")


def vjp(circuit: CircuitSpec, params, features, observables: Sequence[Observable], upstream, backend=None):
    """Adjoint vector-Jacobian product.

    Returns ``(values, grad_params, grad_features)`` where ``values`` has
    shape ``(batch, K)`` and the gradients are those of
    ``sum_k upstream[b, k] * <O_k>_b`` for every row ``b``.
    """
    _require_differentiable(circuit)
    angles = circuit.angles(params, features)
    upstream = np.ascontiguousarray(np.broadcast_to(np.asarray(upstream, dtype=np.float64), (angles.shape[0], len(observables))))
    xm, zm, ny = _observable_arrays(observables, circuit.n_qubits)
    kinds, targets, controls = circuit.kernel_args()
    values, g_angles = get_kernels(backend).adjoint(kinds, targets, controls, angles, circuit.n_qubits, xm, zm, ny, upstream)
    return values, g_angles @ circuit.param_map, g_angles @ circuit.feature_map


def adjoint_gradient(circuit: CircuitSpec, params, features, obs: Observable, backend=None):
    """Value of ``<obs>`` and its exact gradient w.r.t. every param and feature slot."""
    _single(params, features)
    values, gp, gf = vjp(circuit, params, features, [obs], np.ones((1, 1)), backend)
    return float(values[0, 0]), gp[0], gf[0]


def _single(params, features):
    if params is not None and np.ndim(params) != 1 or features is not None and np.ndim(features) != 1:
        raise ShapeError("expected single (unbatched) parameter and feature vectors")


def parameter_shift_gradient(circuit: CircuitSpec, params, features, obs: Observable, wrt: str = "params", backend=None):
    """Gradient by the two-term shift rule, one shifted pair per gate occurrence.

    Independent of the adjoint sweep: it only runs forward simulations.
    ``wrt`` selects "params", "features" or "both" (returns a tuple).
    """
    _require_differentiable(circuit)
    _single(params, features)
    base = circuit.angles(params, features)[0]
    rot_gates = [g for g, op in enumerate(circuit.gates) if op.kind in ROTATIONS]
    shifted = np.repeat(base[None, :], 2 * len(rot_gates), axis=0)
    for i, g in enumerate(rot_gates):
        shifted[2 * i, g] += math.pi / 2
        shifted[2 * i + 1, g] -= math.pi / 2
    kinds, targets, controls = circuit.kernel_args()
    k = get_kernels(backend)
    xm, zm, ny = _observable_arrays([obs], circuit.n_qubits)
    vals = k.expval(k.forward(kinds, targets, controls, shifted, circuit.n_qubits), xm, zm, ny)[:, 0]
    per_gate = np.zeros(len(circuit.gates))
    per_gate[rot_gates] = (vals[0::2] - vals[1::2]) / 2
    gp, gf = per_gate @ circuit.param_map, per_gate @ circuit.feature_map
    return {"params": gp, "features": gf, "both": (gp, gf)}[wrt]


def finite_difference_gradient(circuit: CircuitSpec, params, features, obs: Observable, h: float = 1e-5, wrt: str = "params", backend=None):
    """Central finite differences over slots; a check oracle, not for training."""
    _single(params, features)
    p = np.zeros(circuit.n_params) if params is None else np.asarray(params, dtype=float)
    f = np.zeros(circuit.n_features) if features is None else np.asarray(features, dtype=float)

    def value(pp, ff):
        return expectations(circuit, pp, ff, [obs], backend)[0, 0]

    def fd(vec, other, is_param):
        out = np.zeros(len(vec))
        for i in range(len(vec)):
            up, dn = vec.copy(), vec.copy()
            up[i] += h
            dn[i] -= h
            if is_param:
                out[i] = (value(up, other) - value(dn, other)) / (2 * h)
            else:
                out[i] = (value(other, up) - value(other, dn)) / (2 * h)
        return out

    gp, gf = fd(p, f, True), fd(f, p, False)
    return {"params": gp, "features": gf, "both": (gp, gf)}[wrt]


def dump_amplitudes_csv(state: StateVector, dest) -> None:
    """Write ``index,re,im`` rows for every amplitude (debug tooling)."""
    own = isinstance(dest, (str, bytes)) or hasattr(dest, "__fspath__")
    fh = open(dest, "w", newline="") if own else dest
    try:
        writer = csv.writer(fh)
        writer.writerow(["index", "re", "im"])
        for i, a in enumerate(state.amplitudes):
            writer.writerow([i, repr(float(a.real)), repr(float(a.imag))])
    finally:
        if own:
            fh.close()
