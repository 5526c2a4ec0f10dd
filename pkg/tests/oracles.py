"""Independent reference computations used by the tests.

Nothing here calls into the package's kernels; each oracle rebuilds its
answer from first principles (explicit Kronecker products, brute-force
enumeration, dense eigensolvers).
"""

import itertools

import numpy as np

E = {(r, c): np.outer(np.eye(2)[r], np.eye(2)[c]) for r in (0, 1) for c in (0, 1)}


def kron_gate(mat, qa, qb, n):
    """Full operator of a two-qubit gate built from Kronecker products.

    Little-endian: the leftmost Kronecker factor is qubit n-1.
    """
    out = np.zeros((1 << n, 1 << n), dtype=complex)
    for ra, rb, ca, cb in itertools.product((0, 1), repeat=4):
        coef = mat[2 * ra + rb, 2 * ca + cb]
        if coef == 0:
            continue
        term = np.ones((1, 1))
        for q in range(n - 1, -1, -1):
            if q == qa:
                f = E[(ra, ca)]
            elif q == qb:
                f = E[(rb, cb)]
            else:
                f = np.eye(2)
            term = np.kron(term, f)
        out += coef * term
    return out


def circuit_operator(circuit):
    """``C = U_1 U_2 ... U_M`` as a dense matrix."""
    n = circuit.n_qubits
    op = np.eye(1 << n, dtype=complex)
    for g in circuit.gates:
        op = op @ kron_gate(g.matrix, g.qa, g.qb, n)
    return op


def singular_values(a):
    """Square roots of the eigenvalues of ``A^dagger A`` (descending)."""
    w = np.linalg.eigvalsh(a.conj().T @ a)
    return np.sqrt(np.clip(w, 0, None))[::-1]


def brute_force_dual(K, t, C):
    """Maximize the SVM dual by enumerating every active set.

    Each sample is fixed at 0, fixed at C, or free; the free block solves
    the equality-constrained stationarity system. The best feasible point
    over all 3^N patterns is the global maximum (the dual is concave).
    """
    K = np.asarray(K, dtype=float)
    t = np.asarray(t, dtype=float)
    n = len(t)
    Q = np.outer(t, t) * K
    best, best_a = -np.inf, None
    for pattern in itertools.product((0, 1, 2), repeat=n):
        a = np.zeros(n)
        fixed_c = [i for i, s in enumerate(pattern) if s == 1]
        free = [i for i, s in enumerate(pattern) if s == 2]
        a[fixed_c] = C
        if free:
            F = np.array(free)
            B = np.array([i for i in range(n) if i not in free], dtype=int)
            m = len(F)
            A = np.zeros((m + 1, m + 1))
            A[:m, :m] = Q[np.ix_(F, F)]
            A[:m, m] = t[F]
            A[m, :m] = t[F]
            rhs = np.zeros(m + 1)
            rhs[:m] = 1 - (Q[np.ix_(F, B)] @ a[B] if len(B) else 0)
            rhs[m] = -(t[B] @ a[B]) if len(B) else 0
            sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
            if np.abs(A @ sol - rhs).max() > 1e-9:
                continue
            a[F] = sol[:m]
        if abs(a @ t) > 1e-9 or a.min() < -1e-12 or a.max() > C + 1e-12:
            continue
        val = a.sum() - 0.5 * a @ Q @ a
        if val > best:
            best, best_a = val, a.copy()
    return best, best_a
