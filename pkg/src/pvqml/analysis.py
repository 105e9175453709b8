"""Circuit diagnostics: Fisher information (trainability) and Fourier spectra (expressivity).

Fisher information uses outcome probabilities ``|<y|psi(theta, x)>|^2`` over
all computational basis states ``y``, with probability gradients from the
two-term shift rule. Fourier coefficients follow ``f(x) = sum_w c_w exp(i w.x)``
and are recovered exactly by a DFT on a ``2d+1``-point grid per scanned feature.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractError
from .layers import QDIConfig, VVRQConfig
from .qsim import ROTATIONS, CircuitSpec, Observable, expectations, get_kernels

RANK_TOL = 1e-10
FOURIER_THRESHOLD = 1e-4
MAX_GRID = 10 ** 6
PROB_FLOOR = 1e-14
JAC_FLOOR = 1e-14  # shifted-probability differences below this are roundoff


@dataclass
class FimResult:
    matrix: np.ndarray  # mean FIM over theta draws
    eigenvalues: np.ndarray  # of ``matrix``, descending
    rank: int  # max numerical rank over the per-draw FIMs
    n_theta: int
    n_x: int
    draws: np.ndarray = field(repr=False)  # [n_theta, N, N]
    draw_eigenvalues: np.ndarray = field(repr=False)  # [n_theta, N], each row descending
    tolerance: float = RANK_TOL

    @property
    def mean_rank(self) -> int:
        return numerical_rank(self.eigenvalues, self.tolerance)


def numerical_rank(eigenvalues, tolerance=RANK_TOL) -> int:
    ev = np.asarray(eigenvalues, float)
    top = ev.max(initial=0.0)
    if top <= 0.0:
        return 0
    return int(np.sum(ev > tolerance * top))


def _sym_eigvals(m):
    return np.linalg.eigvalsh(m)[::-1]


def probability_jacobian(circuit: CircuitSpec, params, features, backend=None):
    """Outcome probabilities ``[B, 2^n]`` and their parameter Jacobians ``[B, P, 2^n]``.

    ``features`` is a row batch sharing one parameter vector.
    """
    feats = np.atleast_2d(np.asarray(features, float))
    B = feats.shape[0]
    base = circuit.angles(np.broadcast_to(params, (B, circuit.n_params)), feats)  # [B, G]
    shift_gates = [g for g, op in enumerate(circuit.gates)
                   if op.kind in ROTATIONS and circuit.param_map[g].any()]
    S = len(shift_gates)
    k = get_kernels(backend)
    kinds, targets, controls = circuit.kernel_args()
    # rows: [B, 1 + 2S, G]; slot 0 unshifted, then +pi/2 / -pi/2 pairs
    angles = np.repeat(base[:, None, :], 1 + 2 * S, axis=1)
    for i, g in enumerate(shift_gates):
        angles[:, 1 + 2 * i, g] += math.pi / 2
        angles[:, 2 + 2 * i, g] -= math.pi / 2
    amps = k.forward(kinds, targets, controls, np.ascontiguousarray(angles.reshape(-1, base.shape[1])),
                     circuit.n_qubits)
    probs = (amps.real ** 2 + amps.imag ** 2).reshape(B, 1 + 2 * S, -1)
    per_gate = (probs[:, 1::2] - probs[:, 2::2]) / 2  # [B, S, D]
    per_gate[np.abs(per_gate) < JAC_FLOOR] = 0.0
    jac = np.einsum("gp,bgd->bpd", circuit.param_map[shift_gates], per_gate)
    return probs[:, 0], jac


def _fim_single(circuit, theta, xs, backend):
    p, jac = probability_jacobian(circuit, theta, xs, backend)
    w = np.where(p > PROB_FLOOR, 1.0 / np.where(p > PROB_FLOOR, p, 1.0), 0.0)  # zero-probability terms skipped
    F = np.einsum("bpd,bd,bqd->pq", jac, w, jac) / len(xs)
    return 0.5 * (F + F.T)


def fim_estimate(circuit: CircuitSpec, n_theta_draws: int = 20, n_x_draws: int = 50, seed: int = 0,
                 tolerance: float = RANK_TOL, backend=None) -> FimResult:
    """Per-draw FIM ``E_x sum_y p (grad log p)(grad log p)^T`` with theta ~ U(0, 2pi), x ~ N(0, 1)."""
    if n_theta_draws < 1 or n_x_draws < 1:
        raise ContractError("FIM needs at least one theta draw and one x draw")
    if circuit.n_params < 1:
        raise ContractError("circuit has no trainable parameters")
    rng = np.random.default_rng(seed)
    draws = []
    for _ in range(n_theta_draws):
        theta = rng.uniform(0.0, 2 * math.pi, circuit.n_params)
        xs = rng.normal(0.0, 1.0, (n_x_draws, circuit.n_features))
        draws.append(_fim_single(circuit, theta, xs, backend))
    draws = np.array(draws)
    ev = np.array([_sym_eigvals(m) for m in draws])
    mean = draws.mean(axis=0)
    rank = max(numerical_rank(e, tolerance) for e in ev)
    return FimResult(mean, _sym_eigvals(mean), rank, n_theta_draws, n_x_draws, draws, ev, tolerance)


def circuit_family(name: str, **overrides):
    """Depth -> circuit for the named layer; overrides pass through to its config."""
    if name == "vvrq":
        q = overrides.pop("q", 8)
        return lambda d: VVRQConfig(q, d, **overrides).circuit()
    if name == "qdi":
        q = overrides.pop("q", 4)
        opts = {"readout": "scalar", "reupload": False, **overrides}
        return lambda d: QDIConfig(q, d, **opts).circuit()
    raise ConfigurationError(f"unknown circuit {name!r}; choose vvrq or qdi")


def fim_rank_curve(family, depths, tolerance: float = RANK_TOL, n_theta_draws: int = 5, n_x_draws: int = 50,
                   seed: int = 0, backend=None) -> list[tuple[int, int]]:
    """Numerical FIM rank per depth for ``family(depth) -> CircuitSpec``."""
    depths = list(depths)
    if any(b <= a for a, b in zip(depths, depths[1:])):
        raise ContractError("depths must be strictly increasing")
    if isinstance(family, str):
        family = circuit_family(family)
    return [(d, fim_estimate(family(d), n_theta_draws, n_x_draws, seed, tolerance, backend).rank) for d in depths]


@dataclass
class EigenHistogram:
    edges: np.ndarray
    mass: np.ndarray  # sums to 1
    near_zero_fraction: float


def fim_eigenspectrum(result: FimResult, bins: int = 20, tolerance: float | None = None) -> EigenHistogram:
    """Histogram of per-draw eigenvalues relative to each draw's largest, normalised to unit mass."""
    tol = result.tolerance if tolerance is None else tolerance
    rel = []
    for ev in result.draw_eigenvalues:
        top = ev.max()
        rel.append(np.clip(ev / top, 0.0, 1.0) if top > 0 else np.zeros_like(ev))
    rel = np.concatenate(rel)
    counts, edges = np.histogram(rel, bins=bins, range=(0.0, 1.0))
    return EigenHistogram(edges, counts / counts.sum(), float(np.mean(rel < tol)))


@dataclass
class FourierSpectrum:
    dims: tuple  # scanned feature slots
    degrees: tuple  # d_i per scanned slot
    coefficients: np.ndarray  # [n_theta, 2d_1+1, ..., 2d_k+1], index j <-> frequency j - d_i
    threshold: float = FOURIER_THRESHOLD

    @property
    def frequencies(self):
        return [np.arange(-d, d + 1) for d in self.degrees]

    @property
    def grid_size(self) -> int:
        return int(np.prod([2 * d + 1 for d in self.degrees]))

    @property
    def std_real(self):
        return self.coefficients.real.std(axis=0)

    @property
    def std_imag(self):
        return self.coefficients.imag.std(axis=0)

    def _components(self):
        # real parts of every coefficient, imaginary parts of all but c_0 (identically zero for real f)
        imag = self.std_imag.ravel()
        centre = np.ravel_multi_index(tuple(self.degrees), self.std_imag.shape) if self.degrees else 0
        return np.concatenate([self.std_real.ravel(), np.delete(imag, centre)])

    @property
    def n_components(self) -> int:
        return 2 * self.grid_size - 1

    @property
    def nonzero_count(self) -> int:
        return int(np.sum(self._components() > self.threshold))

    @property
    def nonzero_fraction(self) -> float:
        return self.nonzero_count / self.n_components

    def evaluate(self, draw: int, x) -> float:
        """Reconstruct ``f`` for one theta draw at scanned-feature values ``x``."""
        x = np.asarray(x, float)
        c = self.coefficients[draw]
        phase = np.zeros(c.shape)
        for axis, (w, xi) in enumerate(zip(self.frequencies, x)):
            shape = [1] * c.ndim
            shape[axis] = -1
            phase = phase + (w * xi).reshape(shape)
        return float(np.real(np.sum(c * np.exp(1j * phase))))


def fourier_spectrum(circuit: CircuitSpec, observable: Observable, encoded_dims=None, n_theta_draws: int = 50,
                     threshold: float = FOURIER_THRESHOLD, seed: int = 0, fixed_features=None,
                     backend=None) -> FourierSpectrum:
    """Fourier coefficients of ``f(x) = <obs>`` over the scanned feature slots, per theta draw.

    Features outside ``encoded_dims`` are held at ``fixed_features`` (default:
    seeded draws from U(0, 2pi)). Each theta_i ~ U(0, 2pi).
    """
    dims = tuple(range(circuit.n_features)) if encoded_dims is None else tuple(int(d) for d in encoded_dims)
    if not dims:
        raise ContractError("no encoded dimensions to scan")
    if any(not 0 <= d < circuit.n_features for d in dims):
        raise ContractError(f"encoded dims {dims} outside feature slots 0..{circuit.n_features - 1}")
    all_deg = circuit.feature_degrees()
    degrees = tuple(int(all_deg[d]) for d in dims)
    sizes = [2 * d + 1 for d in degrees]
    total = int(np.prod(sizes))
    if total > MAX_GRID:
        raise ContractError(f"Fourier grid of {total} points exceeds {MAX_GRID}; scan fewer dimensions")
    rng = np.random.default_rng(seed)
    if fixed_features is None:
        base = rng.uniform(0.0, 2 * math.pi, circuit.n_features)
    else:
        base = np.array(fixed_features, float)
    axes = [2 * math.pi * np.arange(n) / n for n in sizes]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(dims))
    feats = np.repeat(base[None, :], total, axis=0)
    feats[:, list(dims)] = mesh
    coeffs = []
    for _ in range(n_theta_draws):
        theta = rng.uniform(0.0, 2 * math.pi, circuit.n_params)
        f = expectations(circuit, np.broadcast_to(theta, (total, circuit.n_params)), feats, [observable],
                         backend)[:, 0].reshape(sizes)
        c = np.fft.fftn(f) / total
        coeffs.append(np.fft.fftshift(c))  # index j -> frequency j - d
    return FourierSpectrum(dims, degrees, np.array(coeffs), threshold)


# --------------------------------------------------------------------------- exports

def write_rank_curve_csv(curve, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["depth", "rank"])
        w.writerows(curve)


def write_eigenvalues_csv(result: FimResult, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["draw", "index", "eigenvalue"])
        for i, ev in enumerate(result.eigenvalues):
            w.writerow(["mean", i, repr(float(ev))])
        for d, row in enumerate(result.draw_eigenvalues):
            for i, ev in enumerate(row):
                w.writerow([d, i, repr(float(ev))])


def write_spectrum_csv(spec: FourierSpectrum, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*(f"w{d}" for d in spec.dims), "mean_re", "mean_im", "std_re", "std_im"])
        mean = spec.coefficients.mean(axis=0)
        for idx in np.ndindex(*mean.shape):
            freq = [i - d for i, d in zip(idx, spec.degrees)]
            w.writerow([*freq, repr(float(mean[idx].real)), repr(float(mean[idx].imag)),
                        repr(float(spec.std_real[idx])), repr(float(spec.std_imag[idx]))])
