"""Encode classical vectors as shallow two-qubit-gate circuits and classify
them with a fidelity-kernel SVM.

Set ``AQCEKIT_BACKEND=numpy`` before import to bypass the numba kernels.
"""

from ._accel import BACKEND
from .aqce import TIERS, EncodeParams, EncodeResult, encode, fidelity, fidelity_env, optimal_gate, sweep
from .qasmio import emit_base, emit_dense, parse, tokenize
from .qkernel import GramMatrix, gram, kernel_entry
from .statevec import Circuit, StateVector, TwoQubitGate, from_classical, run_circuit, zero_state
from .svm import predict, train_binary, train_multiclass

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "TIERS",
    "EncodeParams",
    "EncodeResult",
    "encode",
    "fidelity",
    "fidelity_env",
    "optimal_gate",
    "sweep",
    "emit_base",
    "emit_dense",
    "parse",
    "tokenize",
    "GramMatrix",
    "gram",
    "kernel_entry",
    "Circuit",
    "StateVector",
    "TwoQubitGate",
    "from_classical",
    "run_circuit",
    "zero_state",
    "predict",
    "train_binary",
    "train_multiclass",
]
