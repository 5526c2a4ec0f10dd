"""Fidelity kernel ``K(x_i, x_j) = |<0| C_j^dagger C_i |0>|^2`` over encoded circuits."""

from __future__ import annotations

import hashlib
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .statevec import Circuit, DimensionError, concat, dagger_circuit, run_circuit, zero_state

log = logging.getLogger(__name__)

MODES = ("statevector", "concatenated")
CACHE_FORMAT = "aqcekit-gram-v1"


def circuit_hash(circuit: Circuit) -> str:
    """Content hash: qubit count, gate pairs and raw matrix bytes."""
    h = hashlib.sha256()
    h.update(np.int64(circuit.n_qubits).tobytes())
    for g in circuit.gates:
        h.update(np.array(g.qubits, dtype=np.int64).tobytes())
        h.update(np.ascontiguousarray(g.matrix, dtype=np.complex128).tobytes())
    return h.hexdigest()


def _check_mode(mode: str):
    if mode not in MODES:
        raise ValueError(f"kernel mode must be one of {MODES}, got {mode!r}")


def kernel_entry(c_i: Circuit, c_j: Circuit, mode: str = "statevector") -> float:
    """``|<psi_j|psi_i>|^2``.

    ``concatenated`` runs ``C_j^dagger C_i`` on ``|0...0>`` and reads the
    probability of the all-zero outcome, the form a device would measure.
    """
    _check_mode(mode)
    if c_i.n_qubits != c_j.n_qubits:
        raise DimensionError(f"qubit counts differ: {c_i.n_qubits} vs {c_j.n_qubits}")
    if mode == "statevector":
        a = run_circuit(c_i).amplitudes
        b = run_circuit(c_j).amplitudes
        return float(abs(np.vdot(b, a)) ** 2)
    d = concat(c_i, dagger_circuit(c_j))
    out = run_circuit(d, zero_state(c_i.n_qubits))
    return float(abs(out.amplitudes[0]) ** 2)


@dataclass
class GramMatrix:
    entries: np.ndarray
    keys: tuple[str, ...] = ()
    mode: str = "statevector"

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.float64)
        if self.entries.ndim != 2 or self.entries.shape[0] != self.entries.shape[1]:
            raise ValueError(f"Gram matrix must be square, got {self.entries.shape}")

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def check(self, tol: float = 1e-10, psd_tol: float = 1e-8) -> dict:
        """Validity report: symmetry, unit diagonal, range and smallest eigenvalue."""
        k = self.entries
        rep = {
            "asymmetry": float(np.abs(k - k.T).max()),
            "diag_error": float(np.abs(np.diag(k) - 1.0).max()),
            "min_entry": float(k.min()),
            "max_entry": float(k.max()),
            "min_eig": float(np.linalg.eigvalsh((k + k.T) / 2).min()),
        }
        rep["ok"] = (
            rep["asymmetry"] <= tol
            and rep["diag_error"] <= tol
            and rep["min_entry"] >= -1e-12
            and rep["max_entry"] <= 1 + 1e-12
            and rep["min_eig"] >= -psd_tol
        )
        return rep


def states_of(circuits: Sequence[Circuit]) -> np.ndarray:
    """Output states stacked row-wise; the statevector kernel is built from these."""
    if not circuits:
        raise ValueError("no circuits given")
    n = circuits[0].n_qubits
    for c in circuits:
        if c.n_qubits != n:
            raise DimensionError("circuits have different qubit counts")
    return np.stack([run_circuit(c).amplitudes for c in circuits])


def _resolve_workers(workers: int | None) -> int:
    if workers is None or workers <= 0:
        return os.cpu_count() or 1
    return workers


def gram_from_states(states: np.ndarray) -> np.ndarray:
    ov = states.conj() @ states.T
    k = np.abs(ov) ** 2
    k = np.triu(k)
    k = k + np.triu(k, 1).T
    return k


def gram(circuits: Sequence[Circuit], mode: str = "statevector", workers: int | None = 1) -> GramMatrix:
    """Gram matrix over ``circuits``; only the upper triangle is computed."""
    _check_mode(mode)
    if len(circuits) == 0:
        raise ValueError("no circuits given")
    keys = tuple(circuit_hash(c) for c in circuits)
    if mode == "statevector":
        return GramMatrix(gram_from_states(states_of(circuits)), keys, mode)

    n = len(circuits)
    k = np.eye(n)
    idx = [(i, j) for i in range(n) for j in range(i + 1, n)]
    with ThreadPoolExecutor(_resolve_workers(workers)) as ex:
        vals = list(ex.map(lambda ij: kernel_entry(circuits[ij[0]], circuits[ij[1]], mode), idx))
    # deterministic merge: results arrive in submission order
    for (i, j), v in zip(idx, vals):
        k[i, j] = k[j, i] = v
    for i in range(n):
        k[i, i] = kernel_entry(circuits[i], circuits[i], mode)
    return GramMatrix(k, keys, mode)


def cross_kernel(test: Sequence[Circuit], train: Sequence[Circuit]) -> np.ndarray:
    """Rectangular ``K[t, n] = K(x_test_t, x_train_n)`` used for prediction."""
    if len(test) == 0:
        return np.zeros((0, len(train)))
    a = states_of(test)
    b = states_of(train)
    if a.shape[1] != b.shape[1]:
        raise DimensionError("train and test circuits have different qubit counts")
    return np.abs(a.conj() @ b.T) ** 2


def classical_gram(x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
    """Oracle kernel ``(x_i . x_j)^2`` on unit-normalized rows."""
    xn = x / np.linalg.norm(x, axis=1, keepdims=True)
    yn = xn if y is None else y / np.linalg.norm(y, axis=1, keepdims=True)
    return (xn @ yn.T) ** 2


# Cache: numpy .npz with the matrix, the per-sample circuit hashes, the mode
# and a format tag. A load only succeeds when every hash matches.


def save_gram(g: GramMatrix, path):
    with open(path, "wb") as fh:
        np.savez(
            fh,
            format=np.array(CACHE_FORMAT),
            n=np.array(g.size),
            mode=np.array(g.mode),
            keys=np.array(g.keys, dtype="U64"),
            entries=g.entries,
        )


def load_gram(path, expect_keys: Sequence[str] | None = None) -> GramMatrix:
    with np.load(path, allow_pickle=False) as z:
        if str(z["format"]) != CACHE_FORMAT:
            raise ValueError(f"{path}: not a Gram cache file")
        g = GramMatrix(z["entries"], tuple(str(k) for k in z["keys"]), str(z["mode"]))
        if int(z["n"]) != g.size or len(g.keys) != g.size:
            raise ValueError(f"{path}: header and matrix size disagree")
    if expect_keys is not None and tuple(expect_keys) != g.keys:
        raise KeyError(f"{path}: cached circuits do not match the requested ones")
    return g


def cached_gram(circuits: Sequence[Circuit], path, mode: str = "statevector", workers: int | None = 1) -> GramMatrix:
    keys = [circuit_hash(c) for c in circuits]
    if path is not None and os.path.exists(path):
        try:
            g = load_gram(path, keys)
            if g.mode == mode:
                log.info("gram cache hit: %s", path)
                return g
        except (KeyError, ValueError) as exc:
            log.info("gram cache stale (%s); recomputing", exc)
    g = gram(circuits, mode, workers)
    if path is not None:
        save_gram(g, path)
    return g
