"""4x4 complex linear algebra used by the gate update."""

from dataclasses import dataclass

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class SVDResult:
    """``a = x @ diag(d) @ y`` with ``x``, ``y`` unitary and ``d`` descending.

    Note ``y`` enters the product as-is; with the textbook ``a = u s vh``
    form, ``y`` is ``vh``.
    """

    x: np.ndarray
    d: np.ndarray
    y: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.x * self.d) @ self.y

    @property
    def nuclear_norm(self) -> float:
        return float(self.d.sum())


def _as_4x4(a) -> np.ndarray:
    a = np.asarray(a)
    if a.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def svd_4x4(a) -> SVDResult:
    """Singular value decomposition of a 4x4 matrix.

    Real input stays real (``x`` and ``y`` orthogonal); anything else is
    promoted to complex128.
    """
    a = _as_4x4(a)
    dtype = np.float64 if np.isrealobj(a) else np.complex128
    x, d, y = _kernels.svd4(np.ascontiguousarray(a, dtype=dtype))
    return SVDResult(np.asarray(x), np.asarray(d, dtype=np.float64), np.asarray(y))


def unitarity_defect(u) -> float:
    """Max-norm distance ``||U^dagger U - I||_max``."""
    u = np.asarray(u)
    return float(np.abs(u.conj().T @ u - np.eye(u.shape[0])).max())


def nearest_unitary(a) -> np.ndarray:
    """Polar factor of ``a``: the unitary closest in Frobenius norm."""
    res = svd_4x4(a)
    return res.x @ res.y
