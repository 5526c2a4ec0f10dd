"""Two-qubit gate decomposition into u3 rotations and at most three CNOTs.

Matrices use the gate convention of :mod:`statevec`: index ``2*bit(qa) + bit(qb)``,
so ``kron(A, B)`` puts ``A`` on ``qa``. In the magic basis local gates
``SU(2) x SU(2)`` become real orthogonal matrices, and two gates are locally
equivalent exactly when the spectra of ``U_B^T U_B`` agree (up to the sign
coming from the fourth root of the determinant). The decomposer picks the
cheapest CNOT template with a matching spectrum and solves for the local
gates around it.
"""

from __future__ import annotations

import itertools

import numpy as np

MAGIC = np.array(
    [[1, 0, 0, 1j], [0, 1j, 1, 0], [0, 1j, -1, 0], [1, 0, 0, -1j]], dtype=np.complex128
) / np.sqrt(2)

CX = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=np.complex128)
CX_REV = np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=np.complex128)
I2 = np.eye(2, dtype=np.complex128)

SPEC_TOL = 1e-7
_MIX = (0.41421356, 1.73205081, -0.61803399, 2.71828183, -3.14159265)


class DecompositionError(ValueError):
    pass


def rz(t):
    return np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])


def ry(t):
    c, s = np.cos(t / 2), np.sin(t / 2)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def rx(t):
    c, s = np.cos(t / 2), np.sin(t / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)


def u3_matrix(theta, phi, lam):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array(
        [[c, -np.exp(1j * lam) * s], [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c]],
        dtype=np.complex128,
    )


def u3_angles(u) -> tuple[float, float, float]:
    """Angles with ``u == exp(i g) u3(theta, phi, lam)`` for some phase ``g``."""
    u = np.asarray(u, dtype=np.complex128)
    theta = 2.0 * np.arctan2(abs(u[1, 0]), abs(u[0, 0]))
    if abs(u[0, 0]) > 1e-12:
        g = np.angle(u[0, 0])
        if abs(u[1, 0]) > 1e-12:
            phi = np.angle(u[1, 0]) - g
            lam = np.angle(-u[0, 1]) - g
        else:
            phi, lam = 0.0, np.angle(u[1, 1]) - g
    else:
        g = np.angle(u[1, 0])
        phi, lam = 0.0, np.angle(-u[0, 1]) - g
    return float(theta), float(_wrap(phi)), float(_wrap(lam))


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def phase_distance(a, b) -> float:
    """``1 - |tr(a^dagger b)| / dim``: zero iff equal up to global phase."""
    return float(1.0 - abs(np.vdot(a, b)) / a.shape[0])


def _to_su4(u):
    return u / np.linalg.det(u) ** 0.25


def _gamma(u):
    ub = MAGIC.conj().T @ u @ MAGIC
    return ub, ub.T @ ub


def _spec_distance(a, b) -> float:
    # a, b are unordered eigenvalue sets; small, so brute-force the matching
    return min(max(abs(a[p[i]] - b[i]) for i in range(4)) for p in itertools.permutations(range(4)))


def _real_eig_symmetric_unitary(m):
    """Real orthogonal ``P`` (det +1) with ``P^T m P`` diagonal."""
    for r in _MIX:
        _, p = np.linalg.eigh(m.real + r * m.imag)
        d = p.T @ m @ p
        if np.abs(d - np.diag(np.diag(d))).max() < 1e-9:
            if np.linalg.det(p) < 0:
                p[:, 0] = -p[:, 0]
            return p, np.diag(d).copy()
    raise DecompositionError("could not diagonalize the gate invariant")


def factor_product(u) -> tuple[np.ndarray, np.ndarray, float]:
    """Split ``u ~ kron(a, b)``; returns ``(a, b, residual)`` with unitary factors."""
    r = np.asarray(u).reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(4, 4)
    uu, s, vh = np.linalg.svd(r)
    # a unitary factor has Frobenius norm sqrt(2)
    a = uu[:, 0].reshape(2, 2) * np.sqrt(2)
    b = vh[0].reshape(2, 2) * np.sqrt(2)
    b *= s[0] / 2
    return a, b, float(s[1:].sum() / max(s[0], 1e-300))


def local_equivalence(u, v):
    """Find ``(a, b, c, d)`` with ``u ~ kron(a, b) @ v @ kron(c, d)`` up to phase.

    Returns ``None`` if ``u`` and ``v`` are not locally equivalent.
    """
    us = _to_su4(np.asarray(u, dtype=np.complex128))
    ub, mu = _gamma(us)
    eu = np.linalg.eigvals(mu)
    pu = du = None
    for branch in (1.0, 1j):
        vs = _to_su4(np.asarray(v, dtype=np.complex128)) * branch
        vb, mv = _gamma(vs)
        if _spec_distance(eu, np.linalg.eigvals(mv)) > SPEC_TOL:
            continue
        if pu is None:
            pu, du = _real_eig_symmetric_unitary(mu)
        pv, dv = _real_eig_symmetric_unitary(mv)
        order = []
        free = list(range(4))
        for k in range(4):
            j = min(free, key=lambda j: abs(dv[j] - du[k]))
            order.append(j)
            free.remove(j)
        pv = pv[:, order]
        if np.linalg.det(pv) < 0:
            pv[:, 0] = -pv[:, 0]
        h = np.sqrt(du)
        ku = (ub @ pu / h).real
        kv = (vb @ pv / h).real
        left = ku @ kv.T
        right = pv @ pu.T
        ab = MAGIC @ left @ MAGIC.conj().T
        cd = MAGIC @ right @ MAGIC.conj().T
        a, b, _ = factor_product(ab)
        c, d, _ = factor_product(cd)
        rebuilt = np.kron(a, b) @ v @ np.kron(c, d)
        if phase_distance(rebuilt, u) < 1e-9:
            return a, b, c, d
    return None


def _conjugate_pairs(ev):
    """Split four unit eigenvalues into two conjugate pairs, or ``None``."""
    for p in ((0, 1, 2, 3), (0, 2, 1, 3), (0, 3, 1, 2)):
        if abs(ev[p[0]] - np.conj(ev[p[1]])) < 1e-7 and abs(ev[p[2]] - np.conj(ev[p[3]])) < 1e-7:
            return np.angle(ev[p[0]]), np.angle(ev[p[2]])
    return None


def template_2cx(s, t):
    """``CX . (Rx(s) x Rz(t)) . CX``, i.e. ``exp(-i s/2 XX - i t/2 ZZ)``."""
    return CX @ np.kron(rx(s), rz(t)) @ CX


def template_3cx(t1, t2, t3):
    return CX_REV @ np.kron(I2, ry(t3)) @ CX @ np.kron(rz(t1), ry(t2)) @ CX_REV


def _interaction_angles(u):
    """Candidate ``(a, b, c)`` of ``exp(i(a XX + b YY + c ZZ))`` matching ``u``."""
    _, m = _gamma(_to_su4(u))
    out = []
    for sign in (1.0, -1.0):
        lam = np.angle(sign * np.linalg.eigvals(m)) / 2
        k = int(round(lam.sum() / np.pi))
        idx = np.argsort(lam)
        if k > 0:
            lam[idx[-k:]] -= np.pi
        elif k < 0:
            lam[idx[:-k]] += np.pi
        for p in itertools.permutations(range(4)):
            l1, l2, l3, _ = lam[list(p)]
            out.append(((l1 + l3) / 2, (l2 + l3) / 2, (l1 + l2) / 2))
    return out


def decompose(u):
    """Decompose a 4x4 unitary into an op list in execution order.

    Ops are ``("u", k, 2x2)`` for a single-qubit gate on local qubit ``k``
    (0 is the gate's first qubit) and ``("cx", c, t)``. Consecutive
    single-qubit gates are merged, so at most two rotations surround each CNOT.
    """
    u = np.asarray(u, dtype=np.complex128)
    if np.abs(u.conj().T @ u - np.eye(4)).max() > 1e-8:
        raise DecompositionError("gate is not unitary")

    a, b, res = factor_product(u)
    if res < 1e-10 and phase_distance(np.kron(a, b), u) < 1e-12:
        return _merge([("u", 0, a), ("u", 1, b)])

    candidates = [(CX, [("cx", 0, 1)])]
    _, m = _gamma(_to_su4(u))
    ev = np.linalg.eigvals(m)
    for sign in (1.0, -1.0):
        pairs = _conjugate_pairs(sign * ev)
        if pairs is not None:
            mu1, mu2 = pairs[0] / 2, pairs[1] / 2
            aa, cc = (mu1 + mu2) / 2, (mu1 - mu2) / 2
            s, t = -2 * aa, -2 * cc
            ops = [("cx", 0, 1), ("u", 0, rx(s)), ("u", 1, rz(t)), ("cx", 0, 1)]
            candidates.append((template_2cx(s, t), ops))
    for aa, bb, cc in _interaction_angles(u):
        t1, t2, t3 = 2 * aa - np.pi / 2, 2 * bb - np.pi / 2, 2 * cc - np.pi / 2
        ops = [
            ("cx", 1, 0), ("u", 0, rz(t1)), ("u", 1, ry(t2)),
            ("cx", 0, 1), ("u", 1, ry(t3)), ("cx", 1, 0),
        ]
        candidates.append((template_3cx(t1, t2, t3), ops))

    for v, core in candidates:
        sol = local_equivalence(u, v)
        if sol is None:
            continue
        a, b, c, d = sol
        return _merge([("u", 0, c), ("u", 1, d)] + core + [("u", 0, a), ("u", 1, b)])
    raise DecompositionError("no CNOT template matched the gate")


def _merge(ops):
    out = []
    pending = {}
    for op in ops:
        if op[0] == "u":
            k = op[1]
            pending[k] = op[2] @ pending[k] if k in pending else op[2]
        else:
            for k in (op[1], op[2]):
                if k in pending:
                    out.append(("u", k, pending.pop(k)))
            out.append(op)
    for k in sorted(pending):
        out.append(("u", k, pending[k]))
    return [op for op in out if not (op[0] == "u" and phase_distance(op[2], I2) < 1e-14)]


def ops_matrix(ops) -> np.ndarray:
    """Rebuild the 4x4 operator of an op list (for checks)."""
    out = np.eye(4, dtype=np.complex128)
    for op in ops:
        if op[0] == "u":
            g = np.kron(op[2], I2) if op[1] == 0 else np.kron(I2, op[2])
        else:
            g = CX if (op[1], op[2]) == (0, 1) else CX_REV
        out = g @ out
    return out
