"""Automatic quantum circuit encoding: grow and sweep a two-qubit-gate circuit
until ``F = |<0| C^dagger |target>|`` reaches a target.

Overlap decomposition used throughout (0-based slots, ``C = G_0 ... G_{M-1}``)::

    <0|C^dagger|target> = <left_m| G_m^dagger |right_m>
    right_m = G_{m-1}^dagger ... G_0^dagger |target>
    left_m  = G_{m+1} ... G_{M-1} |0>

With ``E_m[i, j] = sum_rest right_m[rest; i] conj(left_m[rest; j])`` the
overlap is ``tr(E_m @ G_m^dagger)``, and for ``E_m = X diag(d) Y`` the gate
``G_m = X @ Y`` attains ``sum(d)``, the maximum of ``|tr(E_m @ U^dagger)|``
over all unitaries ``U``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .smallalg import svd_4x4
from .statevec import (
    Circuit,
    DimensionError,
    StateVector,
    TwoQubitGate,
    from_classical,
    identity_gates,
    inner_product,
    run_circuit,
    zero_state,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EncodeParams:
    """Inputs of the grow-and-sweep loop.

    ``sweeps`` is the sweep budget per growth step; once the gate budget is
    exhausted the loop is allowed ``final_sweeps`` more. Sweeping stops
    early when the target is met or a whole sweep gains less than
    ``min_gain``. ``initial_gates`` defaults to ``delta``.
    """

    max_gates: int = 100
    delta: int = 12
    target_fidelity: float = 0.95
    sweeps: int = 10
    final_sweeps: int = 100
    initial_gates: int | None = None
    min_gain: float = 1e-6

    def __post_init__(self):
        if self.initial_gates is None:
            object.__setattr__(self, "initial_gates", self.delta)
        if self.delta < 1:
            raise ValueError("delta must be >= 1")
        if self.initial_gates < 1:
            raise ValueError("initial_gates must be >= 1")
        if self.initial_gates > self.max_gates:
            raise ValueError("initial_gates must not exceed max_gates")
        if self.max_gates > 1024:
            raise ValueError("max_gates above 1024 is not supported")
        if not 0.0 < self.target_fidelity <= 1.0:
            raise ValueError("target_fidelity must lie in (0, 1]")
        if self.sweeps < 1 or self.final_sweeps < 1:
            raise ValueError("sweep budgets must be >= 1")
        if self.min_gain < 0:
            raise ValueError("min_gain must be non-negative")


# (max gates, delta) per fidelity tier of the published datasets.
TIERS: dict[str, EncodeParams] = {
    "f80": EncodeParams(max_gates=25, delta=3, target_fidelity=0.80),
    "f90": EncodeParams(max_gates=50, delta=6, target_fidelity=0.90),
    "f95": EncodeParams(max_gates=100, delta=12, target_fidelity=0.95),
}


@dataclass
class EncodeResult:
    circuit: Circuit
    fidelity: float
    sweeps_used: int
    gate_count: int
    history: list[float] = field(default_factory=list, repr=False)
    events: list[str] = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class FidelityEnv:
    """4x4 environment of one gate slot restricted to a qubit pair.

    ``overlap == trace(matrix @ U.conj().T)`` for the gate ``U`` placed in
    ``position`` on ``pair``.
    """

    matrix: np.ndarray
    position: int
    pair: tuple[int, int]


def all_pairs(n_qubits: int) -> np.ndarray:
    return np.array(list(itertools.combinations(range(n_qubits), 2)), dtype=np.int64).reshape(-1, 2)


def _check_dims(circuit: Circuit, target: StateVector):
    if circuit.n_qubits != target.n_qubits:
        raise DimensionError(f"circuit has {circuit.n_qubits} qubits, target has {target.n_qubits}")


def overlap(circuit: Circuit, target: StateVector) -> complex:
    """``<0| C^dagger |target>``, the complex amplitude behind the fidelity."""
    _check_dims(circuit, target)
    return inner_product(run_circuit(circuit), target)


def fidelity(circuit: Circuit, target: StateVector) -> float:
    return abs(overlap(circuit, target))


def _half_states(circuit: Circuit, target: StateVector, position: int):
    mats, pairs = circuit.as_arrays()
    n = circuit.n_qubits
    M = len(mats)
    left = zero_state(n).amplitudes.copy()
    for k in range(M - 1, position, -1):
        left = _kernels.apply_2q(left, mats[k], pairs[k, 0], pairs[k, 1], n)
    right = target.amplitudes.copy()
    for k in range(min(position, M)):
        right = _kernels.apply_2q(right, mats[k].conj().T.copy(), pairs[k, 0], pairs[k, 1], n)
    return right, left


def fidelity_env(circuit: Circuit, target: StateVector, position: int, pair: tuple[int, int]) -> FidelityEnv:
    """Environment of slot ``position`` (0-based) for a gate on ``pair``.

    ``position == len(circuit)`` addresses a new slot after the last gate,
    i.e. a gate that would act on ``|0...0>`` before everything else.
    """
    _check_dims(circuit, target)
    n = circuit.n_qubits
    qa, qb = int(pair[0]), int(pair[1])
    if qa == qb or not (0 <= qa < n and 0 <= qb < n):
        raise ValueError(f"invalid qubit pair {pair} for {n} qubits")
    if not 0 <= position <= len(circuit):
        raise IndexError(f"position {position} outside 0..{len(circuit)}")
    right, left = _half_states(circuit, target, position)
    env = _kernels.pair_envs(right, left, n, np.array([[qa, qb]], dtype=np.int64))[0]
    return FidelityEnv(np.asarray(env, dtype=np.complex128), position, (qa, qb))


def optimal_gate(env: FidelityEnv | np.ndarray) -> tuple[np.ndarray, float]:
    """Gate maximizing ``|trace(env @ U^dagger)|`` and the value it attains."""
    mat = env.matrix if isinstance(env, FidelityEnv) else np.asarray(env)
    res = svd_4x4(mat)
    gate = np.asarray(_kernels.gate_from_svd(res.x, res.d, res.y), dtype=np.complex128)
    return gate, res.nuclear_norm


def replace_gate(circuit: Circuit, position: int, gate: TwoQubitGate) -> Circuit:
    gates = list(circuit.gates)
    if position == len(gates):
        gates.append(gate)
    else:
        gates[position] = gate
    return Circuit(circuit.n_qubits, tuple(gates))


def _work_dtype(target: np.ndarray, mats: np.ndarray):
    # real targets with real gates stay real under the update: 4x cheaper kernels
    if not np.any(target.imag) and not np.any(mats.imag):
        return np.float64
    return np.complex128


class _Sweeper:
    """Array-level state of one encoding, so repeated sweeps avoid rebuilding Circuits."""

    def __init__(self, circuit: Circuit, target: StateVector):
        _check_dims(circuit, target)
        self.n = circuit.n_qubits
        mats, self.pairs = circuit.as_arrays()
        self.dtype = _work_dtype(target.amplitudes, mats)
        self.mats = np.ascontiguousarray(mats.real if self.dtype == np.float64 else mats)
        amps = target.amplitudes
        self.target = np.ascontiguousarray(amps.real if self.dtype == np.float64 else amps)
        self.cands = all_pairs(self.n)

    def sweep(self) -> tuple[float, np.ndarray]:
        trace = np.empty(len(self.mats))
        fid = _kernels.sweep(self.mats, self.pairs, self.target, self.n, self.cands, trace)
        return float(fid), trace

    def grow(self, count: int):
        eye = np.tile(np.eye(4, dtype=self.dtype), (count, 1, 1))
        pairs = np.tile(np.array([0, 1], dtype=np.int64), (count, 1))
        self.mats = np.ascontiguousarray(np.concatenate([self.mats, eye]))
        self.pairs = np.ascontiguousarray(np.concatenate([self.pairs, pairs]))

    def circuit(self) -> Circuit:
        return Circuit.from_arrays(self.n, self.mats.astype(np.complex128), self.pairs)


def sweep(circuit: Circuit, target: StateVector, trace: list | None = None) -> tuple[Circuit, float]:
    """Replace every gate, first to last, by the best gate over all qubit pairs.

    Returns the new circuit and its fidelity. If ``trace`` is a list, the
    fidelity after each single-gate replacement is appended to it.
    """
    if len(circuit) == 0:
        raise ValueError("cannot sweep an empty circuit")
    sw = _Sweeper(circuit, target)
    fid, tr = sw.sweep()
    if trace is not None:
        trace.extend(float(v) for v in tr)
    return sw.circuit(), fid


def encode(x, params: EncodeParams = TIERS["f95"], n_qubits: int | None = None) -> EncodeResult:
    """Encode a classical vector into a circuit with ``C|0> ~ x / |x|``.

    ``history`` records the fidelity at the start, after every single-gate
    replacement and after every gate addition, in order.
    """
    target = from_classical(x, n_qubits)
    n = target.n_qubits
    if n < 2:
        raise DimensionError("two-qubit gates need a target of at least 2 qubits")

    circuit = Circuit(n, tuple(identity_gates(params.initial_gates)))
    sw = _Sweeper(circuit, target)
    fid = abs(complex(target.amplitudes[0]))
    history = [fid]
    events = ["init"]
    sweeps_used = 0

    while True:
        budget = params.sweeps if len(sw.mats) < params.max_gates else params.final_sweeps
        for _ in range(budget):
            new_fid, tr = sw.sweep()
            sweeps_used += 1
            history.extend(float(v) for v in tr)
            events.extend(["update"] * len(tr))
            gain = new_fid - fid
            fid = new_fid
            if fid >= params.target_fidelity or gain < params.min_gain:
                break
        if fid >= params.target_fidelity or len(sw.mats) >= params.max_gates:
            break
        add = min(params.delta, params.max_gates - len(sw.mats))
        sw.grow(add)
        # identity gates leave the overlap untouched; recompute to log it honestly
        fid = fidelity(sw.circuit(), target)
        history.append(fid)
        events.append("grow")

    out = sw.circuit()
    fid = fidelity(out, target)
    log.debug("encoded %d qubits: F=%.6f gates=%d sweeps=%d", n, fid, len(out), sweeps_used)
    return EncodeResult(out, fid, sweeps_used, len(out), history, events)
