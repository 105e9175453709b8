import numpy as np
import pytest

from pvqml.qsim._backend import KERNELS
from pvqml.qsim import CircuitSpec, Feature, Gate, GateOp, Observable, Param, cnot, rot

BACKENDS = sorted(KERNELS)


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def random_circuit(rng, max_qubits=6, max_gates=30, n_params=None, n_features=None):
    """Random RX/RY/RZ/CNOT circuit; slots are reused at random."""
    n = int(rng.integers(1, max_qubits + 1))
    n_gates = int(rng.integers(1, max_gates + 1))
    n_params = n_params or int(rng.integers(1, 8))
    n_features = n_features or int(rng.integers(1, 4))
    gates = []
    for _ in range(n_gates):
        kind = int(rng.integers(0, 4 if n > 1 else 3))
        if kind == Gate.CNOT:
            c, t = rng.choice(n, 2, replace=False)
            gates.append(cnot(int(c), int(t)))
        else:
            src = Param(int(rng.integers(n_params))) if rng.random() < 0.7 else Feature(int(rng.integers(n_features)))
            gates.append(GateOp(Gate(kind), int(rng.integers(n)), angle=src))
    return CircuitSpec(n, tuple(gates), n_params, n_features)


def random_observable(rng, n):
    k = int(rng.integers(1, n + 1))
    qubits = rng.choice(n, k, replace=False)
    return Observable(tuple((int(q), str(rng.choice(list("XYZ")))) for q in qubits))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
