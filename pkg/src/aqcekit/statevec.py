"""Dense statevector simulation with two-qubit gates.

Basis index ``i`` is little-endian: qubit ``q`` is bit ``(i >> q) & 1``.
A :class:`TwoQubitGate` on ``(qa, qb)`` indexes its 4x4 matrix by
``2 * bit(qa) + bit(qb)``, so ``qa`` is the high-order bit of the gate.

A :class:`Circuit` holds gates ``[U_1, ..., U_M]`` and represents the
operator ``C = U_1 U_2 ... U_M``; on a ket, ``U_M`` is applied first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels

MAX_QUBITS = 20
UNITARY_TOL = 1e-10


class DimensionError(ValueError):
    """Qubit counts or vector lengths do not line up."""


class InvalidGateError(ValueError):
    """Gate qubits are repeated/out of range or the matrix is not unitary."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class StateVector:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        n = int(amps.size).bit_length() - 1
        if amps.size < 2 or (1 << n) != amps.size:
            raise DimensionError(f"amplitude count {amps.size} is not a power of two >= 2")
        if n > MAX_QUBITS:
            raise DimensionError(f"{n} qubits exceeds the {MAX_QUBITS}-qubit limit")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @property
    def n_qubits(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def __len__(self) -> int:
        return self.amplitudes.size

    def __repr__(self) -> str:
        return f"StateVector(n_qubits={self.n_qubits})"


@dataclass(frozen=True, eq=False)
class TwoQubitGate:
    matrix: np.ndarray
    qa: int
    qb: int

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.complex128)
        if m.shape != (4, 4):
            raise InvalidGateError(f"gate matrix must be 4x4, got {m.shape}")
        qa, qb = int(self.qa), int(self.qb)
        if qa == qb:
            raise InvalidGateError(f"gate acts twice on qubit {qa}")
        if qa < 0 or qb < 0:
            raise InvalidGateError(f"negative qubit index in ({qa}, {qb})")
        defect = np.abs(m.conj().T @ m - np.eye(4)).max()
        if defect > UNITARY_TOL:
            raise InvalidGateError(f"gate matrix is not unitary (defect {defect:.3e})")
        object.__setattr__(self, "matrix", _frozen(m))
        object.__setattr__(self, "qa", qa)
        object.__setattr__(self, "qb", qb)

    @property
    def qubits(self) -> tuple[int, int]:
        return (self.qa, self.qb)

    def dagger(self) -> "TwoQubitGate":
        return TwoQubitGate(self.matrix.conj().T, self.qa, self.qb)

    def __eq__(self, other):
        if not isinstance(other, TwoQubitGate):
            return NotImplemented
        return self.qubits == other.qubits and np.array_equal(self.matrix, other.matrix)

    def __hash__(self):
        return hash((self.qa, self.qb, self.matrix.tobytes()))


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple[TwoQubitGate, ...] = field(default_factory=tuple)

    def __post_init__(self):
        n = int(self.n_qubits)
        if not 1 <= n <= MAX_QUBITS:
            raise DimensionError(f"circuit needs 1..{MAX_QUBITS} qubits, got {n}")
        gates = tuple(self.gates)
        for g in gates:
            if max(g.qubits) >= n:
                raise InvalidGateError(f"gate on {g.qubits} does not fit {n} qubits")
        object.__setattr__(self, "n_qubits", n)
        object.__setattr__(self, "gates", gates)

    def __len__(self) -> int:
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    @property
    def gate_count(self) -> int:
        return len(self.gates)

    def as_arrays(self, dtype=np.complex128) -> tuple[np.ndarray, np.ndarray]:
        """Stacked ``(mats[M, 4, 4], pairs[M, 2])`` copies for the kernels."""
        mats = np.empty((len(self.gates), 4, 4), dtype=dtype)
        pairs = np.empty((len(self.gates), 2), dtype=np.int64)
        for k, g in enumerate(self.gates):
            mats[k] = g.matrix if dtype == np.complex128 else g.matrix.real
            pairs[k] = g.qubits
        return mats, pairs

    @classmethod
    def from_arrays(cls, n_qubits: int, mats: np.ndarray, pairs: np.ndarray) -> "Circuit":
        return cls(n_qubits, tuple(TwoQubitGate(m, int(a), int(b)) for m, (a, b) in zip(mats, pairs)))


def zero_state(n_qubits: int) -> StateVector:
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise DimensionError(f"n_qubits must be in 1..{MAX_QUBITS}, got {n_qubits}")
    amps = np.zeros(1 << n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(amps)


def from_classical(x: Sequence[float] | np.ndarray, n_qubits: int | None = None) -> StateVector:
    """Amplitude-encode a classical vector.

    The vector is normalized and zero-padded to ``2**ceil(log2(d))`` entries
    (at least one qubit). Passing ``n_qubits`` pads further.
    """
    x = np.asarray(x).reshape(-1)
    d = x.size
    if d == 0:
        raise DimensionError("cannot encode an empty vector")
    if not np.all(np.isfinite(x)):
        raise ValueError("vector has non-finite entries")
    nrm = np.linalg.norm(x)
    if nrm == 0:
        raise ZeroDivisionError("cannot normalize the zero vector")
    n = max(1, (d - 1).bit_length())
    if n_qubits is not None:
        if n_qubits < n:
            raise DimensionError(f"{d} entries need at least {n} qubits")
        n = n_qubits
    if n > MAX_QUBITS:
        raise DimensionError(f"{d} entries need {n} qubits, above the {MAX_QUBITS} limit")
    amps = np.zeros(1 << n, dtype=np.complex128)
    amps[:d] = x / nrm
    return StateVector(amps)


def apply_gate(state: StateVector, gate: TwoQubitGate) -> StateVector:
    n = state.n_qubits
    if max(gate.qubits) >= n:
        raise InvalidGateError(f"gate on {gate.qubits} does not fit {n} qubits")
    out = _kernels.apply_2q(state.amplitudes, gate.matrix, gate.qa, gate.qb, n)
    return StateVector(out)


def _run_arrays(amps: np.ndarray, mats: np.ndarray, pairs: np.ndarray, n: int) -> np.ndarray:
    out = np.array(amps, dtype=mats.dtype if mats.size else amps.dtype)
    for k in range(len(mats) - 1, -1, -1):
        out = _kernels.apply_2q(out, mats[k], pairs[k, 0], pairs[k, 1], n)
    return out


def run_circuit(circuit: Circuit, initial: StateVector | None = None) -> StateVector:
    """Return ``C |initial>`` (``|0...0>`` when ``initial`` is omitted)."""
    if initial is None:
        initial = zero_state(circuit.n_qubits)
    if initial.n_qubits != circuit.n_qubits:
        raise DimensionError(
            f"circuit has {circuit.n_qubits} qubits, state has {initial.n_qubits}"
        )
    mats, pairs = circuit.as_arrays()
    return StateVector(_run_arrays(initial.amplitudes, mats, pairs, circuit.n_qubits))


def inner_product(a: StateVector, b: StateVector) -> complex:
    """``<a|b>``, conjugating the first argument."""
    if a.n_qubits != b.n_qubits:
        raise DimensionError(f"qubit counts differ: {a.n_qubits} vs {b.n_qubits}")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def dagger_circuit(circuit: Circuit) -> Circuit:
    return Circuit(circuit.n_qubits, tuple(g.dagger() for g in reversed(circuit.gates)))


def concat(first: Circuit, then: Circuit) -> Circuit:
    """Circuit for the operator ``then @ first`` (``first`` acts on the ket first)."""
    if first.n_qubits != then.n_qubits:
        raise DimensionError("qubit counts differ")
    return Circuit(first.n_qubits, then.gates + first.gates)


def full_matrix(gate: TwoQubitGate, n_qubits: int) -> np.ndarray:
    """Explicit ``2**n x 2**n`` operator of a gate, for small-n cross checks."""
    dim = 1 << n_qubits
    out = np.zeros((dim, dim), dtype=np.complex128)
    qa, qb = gate.qubits
    for col in range(dim):
        ca, cb = (col >> qa) & 1, (col >> qb) & 1
        rest = col & ~((1 << qa) | (1 << qb))
        for ra in (0, 1):
            for rb in (0, 1):
                row = rest | (ra << qa) | (rb << qb)
                out[row, col] += gate.matrix[2 * ra + rb, 2 * ca + cb]
    return out


def identity_gates(count: int, pair: tuple[int, int] = (0, 1)) -> list[TwoQubitGate]:
    eye = np.eye(4, dtype=np.complex128)
    return [TwoQubitGate(eye, *pair) for _ in range(count)]


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_circuit(n_qubits: int, n_gates: int, rng: np.random.Generator) -> Circuit:
    gates = []
    for _ in range(n_gates):
        qa, qb = rng.choice(n_qubits, size=2, replace=False)
        gates.append(TwoQubitGate(random_unitary(4, rng), int(qa), int(qb)))
    return Circuit(n_qubits, tuple(gates))
