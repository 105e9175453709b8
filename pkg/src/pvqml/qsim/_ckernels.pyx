# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled batch kernels: gate sweeps, Pauli expectations and adjoint sweeps.

Gate codes: 0=RX, 1=RY, 2=RZ, 3=CNOT. Qubit 0 is the most significant bit of
the amplitude index. Rotations follow R_A(t) = exp(-i t A / 2).
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin

cnp.import_array()

cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil


cdef inline void _rotate(double complex* psi, Py_ssize_t dim, Py_ssize_t bit,
                         int kind, double theta) noexcept nogil:
    cdef double c = cos(0.5 * theta)
    cdef double s = sin(0.5 * theta)
    cdef Py_ssize_t i
    cdef double complex a, b
    cdef double complex e0, e1
    if kind == 2:
        e0 = c - 1j * s
        e1 = c + 1j * s
        for i in range(dim):
            if i & bit:
                psi[i] = psi[i] * e1
            else:
                psi[i] = psi[i] * e0
        return
    for i in range(dim):
        if i & bit:
            continue
        a = psi[i]
        b = psi[i | bit]
        if kind == 0:
            psi[i] = c * a - 1j * s * b
            psi[i | bit] = -1j * s * a + c * b
        else:
            psi[i] = c * a - s * b
            psi[i | bit] = s * a + c * b


cdef inline void _cnot(double complex* psi, Py_ssize_t dim, Py_ssize_t cbit,
                       Py_ssize_t tbit) noexcept nogil:
    cdef Py_ssize_t i
    cdef double complex tmp
    for i in range(dim):
        if (i & cbit) and not (i & tbit):
            tmp = psi[i]
            psi[i] = psi[i | tbit]
            psi[i | tbit] = tmp


cdef inline double complex _phase(int ny) noexcept nogil:
    ny = ny & 3
    if ny == 0:
        return 1.0
    if ny == 1:
        return 1j
    if ny == 2:
        return -1.0
    return -1j


cdef inline double _pauli_expval(const double complex* psi, Py_ssize_t dim,
                                 long long xm, long long zm, int ny) noexcept nogil:
    cdef Py_ssize_t m, src
    cdef double complex acc = 0.0
    cdef double complex ph = _phase(ny)
    cdef double sign
    for m in range(dim):
        src = m ^ xm
        sign = -1.0 if (__builtin_popcountll(<unsigned long long>(src & zm)) & 1) else 1.0
        acc = acc + psi[m].conjugate() * (sign * psi[src])
    return (acc * ph).real


cdef inline void _pauli_accumulate(const double complex* psi, double complex* out,
                                   Py_ssize_t dim, long long xm, long long zm,
                                   int ny, double weight) noexcept nogil:
    cdef Py_ssize_t m, src
    cdef double complex ph = _phase(ny) * weight
    cdef double sign
    for m in range(dim):
        src = m ^ xm
        sign = -1.0 if (__builtin_popcountll(<unsigned long long>(src & zm)) & 1) else 1.0
        out[m] = out[m] + ph * (sign * psi[src])


cdef inline double _generator_im(const double complex* lam, const double complex* psi,
                                 Py_ssize_t dim, Py_ssize_t bit, int kind) noexcept nogil:
    # Im <lam| A |psi> for A the generator of the rotation kind
    cdef Py_ssize_t i
    cdef double complex acc = 0.0
    for i in range(dim):
        if i & bit:
            continue
        if kind == 0:
            acc = acc + lam[i].conjugate() * psi[i | bit] + lam[i | bit].conjugate() * psi[i]
        elif kind == 1:
            acc = acc + lam[i].conjugate() * (-1j * psi[i | bit]) \
                + lam[i | bit].conjugate() * (1j * psi[i])
        else:
            acc = acc + lam[i].conjugate() * psi[i] - lam[i | bit].conjugate() * psi[i | bit]
    return acc.imag


cdef void _sweep(double complex* psi, Py_ssize_t dim, int n,
                 const int[::1] kinds, const int[::1] targets, const int[::1] controls,
                 const double[::1] theta) noexcept nogil:
    cdef Py_ssize_t g
    for g in range(kinds.shape[0]):
        if kinds[g] == 3:
            _cnot(psi, dim, (<Py_ssize_t>1) << (n - 1 - controls[g]),
                  (<Py_ssize_t>1) << (n - 1 - targets[g]))
        else:
            _rotate(psi, dim, (<Py_ssize_t>1) << (n - 1 - targets[g]), kinds[g], theta[g])


def forward(const int[::1] kinds, const int[::1] targets, const int[::1] controls,
            const double[:, ::1] angles, int n_qubits):
    cdef Py_ssize_t batch = angles.shape[0]
    cdef Py_ssize_t dim = (<Py_ssize_t>1) << n_qubits
    out = np.zeros((batch, dim), dtype=np.complex128)
    cdef double complex[:, ::1] states = out
    cdef Py_ssize_t b
    with nogil:
        for b in range(batch):
            states[b, 0] = 1.0
            _sweep(&states[b, 0], dim, n_qubits, kinds, targets, controls, angles[b])
    return out


def evolve(double complex[:, ::1] states, const int[::1] kinds, const int[::1] targets,
           const int[::1] controls, const double[:, ::1] angles, int n_qubits):
    """Apply the gate sequence in place to every row of ``states``."""
    cdef Py_ssize_t b
    cdef Py_ssize_t dim = states.shape[1]
    with nogil:
        for b in range(states.shape[0]):
            _sweep(&states[b, 0], dim, n_qubits, kinds, targets, controls, angles[b])


def expval(const double complex[:, ::1] states, const long long[::1] xmask,
           const long long[::1] zmask, const int[::1] ny):
    cdef Py_ssize_t batch = states.shape[0]
    cdef Py_ssize_t dim = states.shape[1]
    cdef Py_ssize_t nterms = xmask.shape[0]
    out = np.empty((batch, nterms), dtype=np.float64)
    cdef double[:, ::1] vals = out
    cdef Py_ssize_t b, k
    with nogil:
        for b in range(batch):
            for k in range(nterms):
                vals[b, k] = _pauli_expval(&states[b, 0], dim, xmask[k], zmask[k], ny[k])
    return out


def adjoint(const int[::1] kinds, const int[::1] targets, const int[::1] controls,
            const double[:, ::1] angles, int n_qubits,
            const long long[::1] xmask, const long long[::1] zmask, const int[::1] ny,
            const double[:, ::1] weights):
    """Values of every term and d(sum_k w_k <P_k>)/d(angle_g) per row."""
    cdef Py_ssize_t batch = angles.shape[0]
    cdef Py_ssize_t ngates = kinds.shape[0]
    cdef Py_ssize_t dim = (<Py_ssize_t>1) << n_qubits
    cdef Py_ssize_t nterms = xmask.shape[0]
    values_arr = np.empty((batch, nterms), dtype=np.float64)
    grads_arr = np.zeros((batch, ngates), dtype=np.float64)
    psi_arr = np.empty(dim, dtype=np.complex128)
    lam_arr = np.empty(dim, dtype=np.complex128)
    cdef double[:, ::1] values = values_arr
    cdef double[:, ::1] grads = grads_arr
    cdef double complex[::1] psi = psi_arr
    cdef double complex[::1] lam = lam_arr
    cdef Py_ssize_t b, g, k, i, bit
    with nogil:
        for b in range(batch):
            for i in range(dim):
                psi[i] = 0.0
                lam[i] = 0.0
            psi[0] = 1.0
            _sweep(&psi[0], dim, n_qubits, kinds, targets, controls, angles[b])
            for k in range(nterms):
                values[b, k] = _pauli_expval(&psi[0], dim, xmask[k], zmask[k], ny[k])
                if weights[b, k] != 0.0:
                    _pauli_accumulate(&psi[0], &lam[0], dim, xmask[k], zmask[k], ny[k],
                                      weights[b, k])
            for g in range(ngates - 1, -1, -1):
                if kinds[g] == 3:
                    _cnot(&psi[0], dim, (<Py_ssize_t>1) << (n_qubits - 1 - controls[g]),
                          (<Py_ssize_t>1) << (n_qubits - 1 - targets[g]))
                    _cnot(&lam[0], dim, (<Py_ssize_t>1) << (n_qubits - 1 - controls[g]),
                          (<Py_ssize_t>1) << (n_qubits - 1 - targets[g]))
                    continue
                bit = (<Py_ssize_t>1) << (n_qubits - 1 - targets[g])
                grads[b, g] = _generator_im(&lam[0], &psi[0], dim, bit, kinds[g])
                if g > 0:
                    _rotate(&psi[0], dim, bit, kinds[g], -angles[b, g])
                    _rotate(&lam[0], dim, bit, kinds[g], -angles[b, g])
    return values_arr, grads_arr
