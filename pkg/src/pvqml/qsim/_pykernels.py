"""Pure-numpy batch kernels; same signatures and conventions as ``_ckernels``.

Vectorised over the batch axis; each gate is one strided update on a
``(batch, left, 2, right)`` view of the amplitude array.
"""
from functools import lru_cache

import numpy as np

RX, RY, RZ, CNOT = 0, 1, 2, 3
_PHASES = (1.0, 1j, -1.0, -1j)


@lru_cache(maxsize=None)
def _cnot_perm(n_qubits, control, target):
    idx = np.arange(1 << n_qubits)
    cbit = 1 << (n_qubits - 1 - control)
    tbit = 1 << (n_qubits - 1 - target)
    return np.where(idx & cbit, idx ^ tbit, idx)


@lru_cache(maxsize=None)
def _pauli_tables(dim, xm, zm, ny):
    m = np.arange(dim)
    src = m ^ xm
    parity = np.array([bin(v).count("1") & 1 for v in (src & zm)], dtype=np.int64)
    phase = _PHASES[ny & 3] * np.where(parity, -1.0, 1.0)
    return src, phase


def _split(states, n_qubits, target):
    batch = states.shape[0]
    return states.reshape(batch, 1 << target, 2, 1 << (n_qubits - 1 - target))


def _rotate(states, n_qubits, kind, target, theta):
    view = _split(states, n_qubits, target)
    c = np.cos(0.5 * theta)[:, None, None]
    s = np.sin(0.5 * theta)[:, None, None]
    a = view[:, :, 0, :].copy()
    b = view[:, :, 1, :]
    if kind == RZ:
        view[:, :, 0, :] = a * (c - 1j * s)
        view[:, :, 1, :] = b * (c + 1j * s)
    elif kind == RX:
        view[:, :, 0, :] = c * a - 1j * s * b
        view[:, :, 1, :] = -1j * s * a + c * b
    else:
        view[:, :, 0, :] = c * a - s * b
        view[:, :, 1, :] = s * a + c * b


def _apply(states, n_qubits, kind, target, control, theta):
    if kind == CNOT:
        states[:] = states[:, _cnot_perm(n_qubits, int(control), int(target))]
    else:
        _rotate(states, n_qubits, kind, int(target), theta)


def evolve(states, kinds, targets, controls, angles, n_qubits):
    """Apply the gate sequence in place to every row of ``states``."""
    angles = np.asarray(angles, dtype=np.float64)
    for g in range(len(kinds)):
        _apply(states, n_qubits, kinds[g], targets[g], controls[g], angles[:, g])


def forward(kinds, targets, controls, angles, n_qubits):
    angles = np.asarray(angles, dtype=np.float64)
    states = np.zeros((angles.shape[0], 1 << n_qubits), dtype=np.complex128)
    states[:, 0] = 1.0
    evolve(states, kinds, targets, controls, angles, n_qubits)
    return states


def _pauli_apply(states, xm, zm, ny):
    src, phase = _pauli_tables(states.shape[1], int(xm), int(zm), int(ny))
    return states[:, src] * phase


def expval(states, xmask, zmask, ny):
    out = np.empty((states.shape[0], len(xmask)))
    for k in range(len(xmask)):
        out[:, k] = np.einsum("bi,bi->b", states.conj(), _pauli_apply(states, xmask[k], zmask[k], ny[k])).real
    return out


def _generator_im(lam, psi, n_qubits, kind, target):
    lv = _split(lam, n_qubits, target)
    pv = _split(psi, n_qubits, target)
    l0, l1 = lv[:, :, 0, :].conj(), lv[:, :, 1, :].conj()
    p0, p1 = pv[:, :, 0, :], pv[:, :, 1, :]
    if kind == RX:
        acc = l0 * p1 + l1 * p0
    elif kind == RY:
        acc = -1j * l0 * p1 + 1j * l1 * p0
    else:
        acc = l0 * p0 - l1 * p1
    return acc.sum(axis=(1, 2)).imag


def adjoint(kinds, targets, controls, angles, n_qubits, xmask, zmask, ny, weights):
    angles = np.asarray(angles, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    psi = forward(kinds, targets, controls, angles, n_qubits)
    values = expval(psi, xmask, zmask, ny)
    lam = np.zeros_like(psi)
    for k in range(len(xmask)):
        lam += weights[:, k:k + 1] * _pauli_apply(psi, xmask[k], zmask[k], ny[k])
    grads = np.zeros((angles.shape[0], len(kinds)))
    for g in range(len(kinds) - 1, -1, -1):
        kind = kinds[g]
        if kind == CNOT:
            perm = _cnot_perm(n_qubits, int(controls[g]), int(targets[g]))
            psi = psi[:, perm]
            lam = lam[:, perm]
            continue
        grads[:, g] = _generator_im(lam, psi, n_qubits, kind, int(targets[g]))
        if g > 0:
            _rotate(psi, n_qubits, kind, int(targets[g]), -angles[:, g])
            _rotate(lam, n_qubits, kind, int(targets[g]), -angles[:, g])
    return values, grads
