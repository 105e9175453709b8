"""Dense state-vector simulation with exact expectations and adjoint gradients."""
from ._backend import BACKEND, get_kernels
from .circuit import (
    MAX_QUBITS,
    ROTATIONS,
    AngleSource,
    CircuitSpec,
    Const,
    Feature,
    Gate,
    GateOp,
    Observable,
    Param,
    StateVector,
    adjoint_gradient,
    apply_gate,
    cnot,
    dump_amplitudes_csv,
    expectation,
    expectations,
    finite_difference_gradient,
    init_state,
    parameter_shift_gradient,
    rot,
    run_batch,
    run_circuit,
    vjp,
)

__all__ = [
    "BACKEND", "MAX_QUBITS", "ROTATIONS", "AngleSource", "CircuitSpec", "Const", "Feature", "Gate", "GateOp",
    "Observable", "Param", "StateVector", "adjoint_gradient", "apply_gate", "cnot",
    "dump_amplitudes_csv", "expectation", "expectations", "finite_difference_gradient",
    "get_kernels", "init_state", "parameter_shift_gradient", "rot", "run_batch", "run_circuit", "vjp",
]
