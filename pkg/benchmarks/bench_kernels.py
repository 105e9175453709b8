"""Compare the compiled and numpy state-vector kernels.

    python3 benchmarks/bench_kernels.py [--repeats 5]

Times a batched forward pass and an adjoint sweep on the QDI and VVRQ
circuits used by the models, and prints the speed-up of the compiled kernels.
"""
import argparse
import timeit

import numpy as np

from pvqml.layers import QDIConfig, VVRQConfig
from pvqml.qsim._backend import KERNELS
from pvqml.qsim.circuit import _observable_arrays

CASES = {
    "qdi(4,3) x4 groups, B=128": (QDIConfig(4, 3, readout="vector", reupload=True), 128 * 4),
    "vvrq(8,7), B=32": (VVRQConfig(8, 7), 32),
    "vvrq(10,4), B=16": (VVRQConfig(10, 4), 16),
}


def bench(name, cfg, batch, repeats):
    circ = cfg.circuit()
    rng = np.random.default_rng(0)
    angles = circ.angles(rng.uniform(0, 2 * np.pi, circ.n_params), rng.normal(size=(batch, circ.n_features)))
    kinds, targets, controls = circ.kernel_args()
    xm, zm, ny = _observable_arrays(cfg.observables(), circ.n_qubits)
    weights = np.ones((batch, len(cfg.observables())))
    rows = {}
    for backend, k in KERNELS.items():
        fwd = min(timeit.repeat(lambda: k.forward(kinds, targets, controls, angles, circ.n_qubits),
                                number=1, repeat=repeats))
        adj = min(timeit.repeat(lambda: k.adjoint(kinds, targets, controls, angles, circ.n_qubits, xm, zm, ny, weights),
                                number=1, repeat=repeats))
        rows[backend] = (fwd, adj)
    print(f"{name}")
    for backend, (fwd, adj) in rows.items():
        print(f"  {backend:7s} forward {fwd * 1e3:8.2f} ms   adjoint {adj * 1e3:8.2f} ms")
    if len(rows) == 2:
        (nf, na), (cf, ca) = rows["numpy"], rows["cython"]
        print(f"  speed-up forward x{nf / cf:.1f}   adjoint x{na / ca:.1f}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    if "cython" not in KERNELS:
        print("compiled kernels not built; showing numpy timings only")
    for name, (cfg, batch) in CASES.items():
        bench(name, cfg, batch, args.repeats)


if __name__ == "__main__":
    main()
