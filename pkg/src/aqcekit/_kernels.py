"""Hot loops: two-qubit gate application, pair environments, 4x4 SVD, AQCE sweep.

Conventions shared by every kernel:

* basis index ``i`` is little-endian, qubit ``q`` is bit ``(i >> q) & 1``;
* a two-qubit gate on ``(qa, qb)`` is a 4x4 matrix whose row/column index is
  ``2 * bit(qa) + bit(qb)``;
* a circuit is stored as ``mats[M, 4, 4]`` plus ``pairs[M, 2]`` with the
  operator ``C = G_0 G_1 ... G_{M-1}``, so ``G_{M-1}`` hits ``|0...0>`` first.

Functions suffixed ``_nb`` are numba-compiled, ``_np`` are numpy. The public
names at the bottom are bound to one or the other by :mod:`aqcekit._accel`.
"""

import numpy as np

from ._accel import njit, pick

# Ties between candidate pairs closer than this are resolved to the lower index.
TIE_TOL = 1e-13
_JACOBI_EPS = 1e-15
# Singular values at or below this (absolute, fidelity units) carry no signal.
ABS_NULL = 1e-14
# Singular values below this fraction of the largest count as null.
NULL_TOL = 1e-13
_JACOBI_MAX_SWEEPS = 60


# --------------------------------------------------------------------------
# numba path
# --------------------------------------------------------------------------


@njit
def _base_index(r, lo, hi):
    r = ((r >> lo) << (lo + 1)) | (r & ((1 << lo) - 1))
    r = ((r >> hi) << (hi + 1)) | (r & ((1 << hi) - 1))
    return r


@njit
def _apply_inplace_nb(state, mat, qa, qb, n):
    lo = min(qa, qb)
    hi = max(qa, qb)
    ma = 1 << qa
    mb = 1 << qb
    for r in range(1 << (n - 2)):
        i0 = _base_index(r, lo, hi)
        i1 = i0 | mb
        i2 = i0 | ma
        i3 = i2 | mb
        v0 = state[i0]
        v1 = state[i1]
        v2 = state[i2]
        v3 = state[i3]
        state[i0] = mat[0, 0] * v0 + mat[0, 1] * v1 + mat[0, 2] * v2 + mat[0, 3] * v3
        state[i1] = mat[1, 0] * v0 + mat[1, 1] * v1 + mat[1, 2] * v2 + mat[1, 3] * v3
        state[i2] = mat[2, 0] * v0 + mat[2, 1] * v1 + mat[2, 2] * v2 + mat[2, 3] * v3
        state[i3] = mat[3, 0] * v0 + mat[3, 1] * v1 + mat[3, 2] * v2 + mat[3, 3] * v3


@njit
def apply_2q_nb(state, mat, qa, qb, n):
    out = state.copy()
    _apply_inplace_nb(out, mat, qa, qb, n)
    return out


@njit
def _apply_dagger_inplace_nb(state, mat, qa, qb, n):
    _apply_inplace_nb(state, np.conj(mat).T.copy(), qa, qb, n)


@njit
def pair_envs_nb(right, left, n, cands):
    """``E[p, i, j] = sum_rest right[rest; i] * conj(left[rest; j])`` per pair."""
    P = cands.shape[0]
    out = np.zeros((P, 4, 4), dtype=right.dtype)
    lc = np.conj(left)
    for p in range(P):
        qa = cands[p, 0]
        qb = cands[p, 1]
        lo = min(qa, qb)
        hi = max(qa, qb)
        ma = 1 << qa
        mb = 1 << qb
        acc = np.zeros((4, 4), dtype=right.dtype)
        for r in range(1 << (n - 2)):
            i0 = _base_index(r, lo, hi)
            i1 = i0 | mb
            i2 = i0 | ma
            i3 = i2 | mb
            r0 = right[i0]
            r1 = right[i1]
            r2 = right[i2]
            r3 = right[i3]
            l0 = lc[i0]
            l1 = lc[i1]
            l2 = lc[i2]
            l3 = lc[i3]
            acc[0, 0] += r0 * l0
            acc[0, 1] += r0 * l1
            acc[0, 2] += r0 * l2
            acc[0, 3] += r0 * l3
            acc[1, 0] += r1 * l0
            acc[1, 1] += r1 * l1
            acc[1, 2] += r1 * l2
            acc[1, 3] += r1 * l3
            acc[2, 0] += r2 * l0
            acc[2, 1] += r2 * l1
            acc[2, 2] += r2 * l2
            acc[2, 3] += r2 * l3
            acc[3, 0] += r3 * l0
            acc[3, 1] += r3 * l1
            acc[3, 2] += r3 * l2
            acc[3, 3] += r3 * l3
        out[p] = acc
    return out


@njit
def _complete_nb(m, filled):
    """Fill the unset columns of ``m`` by Gram-Schmidt on the unit basis."""
    for k in range(4):
        if filled[k]:
            continue
        best = np.zeros(4, dtype=m.dtype)
        best_norm = -1.0
        for e in range(4):
            cand = np.zeros(4, dtype=m.dtype)
            cand[e] = 1.0
            for _rep in range(2):
                for j in range(4):
                    if filled[j]:
                        proj = cand[0] * 0.0
                        for i in range(4):
                            proj += np.conj(m[i, j]) * cand[i]
                        for i in range(4):
                            cand[i] -= proj * m[i, j]
            nrm = 0.0
            for i in range(4):
                nrm += abs(cand[i]) ** 2
            nrm = np.sqrt(nrm)
            if nrm > best_norm + 1e-12:
                best_norm = nrm
                best = cand
        for i in range(4):
            m[i, k] = best[i] / best_norm
        filled[k] = True


@njit
def svd4_nb(a):
    """One-sided (Hestenes) Jacobi SVD of a 4x4 matrix, real or complex.

    Returns ``(x, d, y)`` with ``a = x @ diag(d) @ y``, ``d`` descending.
    """
    w = a.copy()
    v = np.zeros((4, 4), dtype=a.dtype)
    for i in range(4):
        v[i, i] = 1.0
    for _ in range(_JACOBI_MAX_SWEEPS):
        rotated = False
        for p in range(3):
            for q in range(p + 1, 4):
                alpha = 0.0
                beta = 0.0
                gamma = w[0, p] * 0.0
                for i in range(4):
                    alpha += abs(w[i, p]) ** 2
                    beta += abs(w[i, q]) ** 2
                    gamma += np.conj(w[i, p]) * w[i, q]
                g = abs(gamma)
                if g == 0.0 or g <= _JACOBI_EPS * np.sqrt(alpha * beta):
                    continue
                rotated = True
                phase = np.conj(gamma) / g
                zeta = (beta - alpha) / (2.0 * g)
                t = 1.0 / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                if zeta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for i in range(4):
                    wp = w[i, p]
                    wq = w[i, q] * phase
                    w[i, p] = c * wp - s * wq
                    w[i, q] = s * wp + c * wq
                    vp = v[i, p]
                    vq = v[i, q] * phase
                    v[i, p] = c * vp - s * vq
                    v[i, q] = s * vp + c * vq
        if not rotated:
            break

    sig = np.empty(4)
    for k in range(4):
        acc = 0.0
        for i in range(4):
            acc += abs(w[i, k]) ** 2
        sig[k] = np.sqrt(acc)
    order = np.argsort(-sig, kind="mergesort")
    d = sig[order]
    scale = max(d[0], 1e-300)

    x = np.zeros((4, 4), dtype=a.dtype)
    yh = np.zeros((4, 4), dtype=a.dtype)
    filled = np.zeros(4, dtype=np.bool_)
    for k in range(4):
        src = order[k]
        if d[k] > NULL_TOL * scale:
            for i in range(4):
                x[i, k] = w[i, src] / d[k]
                yh[i, k] = v[i, src]
            filled[k] = True
    # The null block of V is whatever the rotations left behind, so both
    # sides are rebuilt from the unit basis to keep X Y a continuous choice.
    _complete_nb(x, filled.copy())
    _complete_nb(yh, filled)
    return x, d, np.conj(yh).T.copy()


@njit
def nuclear_norm4_nb(a):
    """Sum of singular values of a 4x4 matrix (Jacobi without vectors)."""
    w = a.copy()
    for _ in range(_JACOBI_MAX_SWEEPS):
        rotated = False
        for p in range(3):
            for q in range(p + 1, 4):
                alpha = 0.0
                beta = 0.0
                gamma = w[0, p] * 0.0
                for i in range(4):
                    alpha += abs(w[i, p]) ** 2
                    beta += abs(w[i, q]) ** 2
                    gamma += np.conj(w[i, p]) * w[i, q]
                g = abs(gamma)
                if g == 0.0 or g <= _JACOBI_EPS * np.sqrt(alpha * beta):
                    continue
                rotated = True
                phase = np.conj(gamma) / g
                zeta = (beta - alpha) / (2.0 * g)
                t = 1.0 / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                if zeta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for i in range(4):
                    wp = w[i, p]
                    wq = w[i, q] * phase
                    w[i, p] = c * wp - s * wq
                    w[i, q] = s * wp + c * wq
        if not rotated:
            break
    total = 0.0
    for k in range(4):
        acc = 0.0
        for i in range(4):
            acc += abs(w[i, k]) ** 2
        total += np.sqrt(acc)
    return total


@njit
def batch_svd4_nb(envs):
    P = envs.shape[0]
    xs = np.empty((P, 4, 4), dtype=envs.dtype)
    ds = np.empty((P, 4))
    ys = np.empty((P, 4, 4), dtype=envs.dtype)
    for p in range(P):
        x, d, y = svd4_nb(envs[p])
        xs[p] = x
        ds[p] = d
        ys[p] = y
    return xs, ds, ys


@njit
def _left_start_nb(mats, pairs, n):
    left = np.zeros(1 << n, dtype=mats.dtype)
    left[0] = 1.0
    for k in range(mats.shape[0] - 1, 0, -1):
        _apply_inplace_nb(left, mats[k], pairs[k, 0], pairs[k, 1], n)
    return left


@njit
def _null_rank(d):
    cut = max(NULL_TOL * d[0], ABS_NULL)
    r = 0
    for k in range(4):
        if d[k] > cut:
            r += 1
    return r


# Used when the environment vanishes altogether: F is 0 for every gate, and
# a fixed real mixing gate (H x H) lets later slots reach the target's support.
MIX_GATE = 0.5 * np.array([[1.0, 1, 1, 1], [1, -1, 1, -1], [1, 1, -1, -1], [1, -1, -1, 1]])


@njit
def gate_from_svd_nb(x, d, y):
    """Optimal gate from an SVD of the environment.

    Only the signal block of ``X Y`` is fixed by the optimum. The null block
    is rebuilt from the unit basis on both sides so the choice does not
    depend on roundoff; a vanishing environment gives ``MIX_GATE``.
    """
    r = _null_rank(d)
    if r == 4:
        return x @ y
    if r == 0:
        return MIX_GATE.astype(x.dtype)
    xs = np.zeros((4, 4), dtype=x.dtype)
    yh = np.zeros((4, 4), dtype=x.dtype)
    filled = np.zeros(4, dtype=np.bool_)
    for k in range(r):
        filled[k] = True
        for i in range(4):
            xs[i, k] = x[i, k]
            yh[i, k] = np.conj(y[k, i])
    _complete_nb(xs, filled.copy())
    _complete_nb(yh, filled)
    return xs @ np.conj(yh).T


@njit
def sweep_nb(mats, pairs, target, n, cands, trace):
    """One coordinate-ascent pass over all gate slots, in place.

    ``trace[m]`` receives the overlap right after slot ``m`` was replaced.
    Returns the final overlap (real, non-negative).
    """
    M = mats.shape[0]
    left = _left_start_nb(mats, pairs, n)
    right = target.copy()
    fid = 0.0
    for m in range(M):
        envs = pair_envs_nb(right, left, n, cands)
        best = -1
        best_s = -1.0
        for p in range(cands.shape[0]):
            s = nuclear_norm4_nb(envs[p])
            if s > best_s + TIE_TOL:
                best = p
                best_s = s
        best_x, d, best_y = svd4_nb(envs[best])
        best_s = d[0] + d[1] + d[2] + d[3]
        gate = gate_from_svd_nb(best_x, d, best_y)
        mats[m] = gate
        pairs[m, 0] = cands[best, 0]
        pairs[m, 1] = cands[best, 1]
        fid = best_s
        trace[m] = best_s
        _apply_dagger_inplace_nb(right, gate, pairs[m, 0], pairs[m, 1], n)
        if m + 1 < M:
            _apply_dagger_inplace_nb(left, mats[m + 1], pairs[m + 1, 0], pairs[m + 1, 1], n)
    return fid


# --------------------------------------------------------------------------
# numpy path
# --------------------------------------------------------------------------


def _pair_view(state, n, qa, qb):
    t = np.moveaxis(state.reshape((2,) * n), (n - 1 - qa, n - 1 - qb), (0, 1))
    return t.reshape(4, -1), t.shape


def apply_2q_np(state, mat, qa, qb, n):
    view, shape = _pair_view(state, n, qa, qb)
    out = (mat @ view).reshape(shape)
    return np.ascontiguousarray(np.moveaxis(out, (0, 1), (n - 1 - qa, n - 1 - qb))).reshape(-1)


def pair_envs_np(right, left, n, cands):
    out = np.empty((len(cands), 4, 4), dtype=np.result_type(right, left))
    for p, (qa, qb) in enumerate(cands):
        r4, _ = _pair_view(right, n, int(qa), int(qb))
        l4, _ = _pair_view(left, n, int(qa), int(qb))
        out[p] = r4 @ l4.conj().T
    return out


def _complete_np(m, keep):
    m = m.copy()
    filled = list(keep)
    for k in range(4):
        if filled[k]:
            continue
        basis = m[:, filled]
        best, best_norm = None, -1.0
        for e in range(4):
            cand = np.zeros(4, dtype=m.dtype)
            cand[e] = 1.0
            for _rep in range(2):
                cand = cand - basis @ (basis.conj().T @ cand)
            nrm = np.linalg.norm(cand)
            if nrm > best_norm + 1e-12:
                best, best_norm = cand, nrm
        m[:, k] = best / best_norm
        filled[k] = True
    return m


def _canonical_np(x, d, y):
    keep = d > NULL_TOL * max(d[0], 1e-300)
    if keep.all():
        return x, d, y
    x = _complete_np(np.where(keep, x, 0), keep)
    yh = _complete_np(np.where(keep, y.conj().T, 0), keep)
    return x, d, yh.conj().T


def svd4_np(a):
    return _canonical_np(*np.linalg.svd(np.asarray(a)))


def batch_svd4_np(envs):
    return np.linalg.svd(envs)


def gate_from_svd_np(x, d, y):
    r = _null_rank_np(d)
    if r == 4:
        return x @ y
    if r == 0:
        return MIX_GATE.astype(x.dtype)
    keep = np.arange(4) < r
    xs = _complete_np(np.where(keep, x, 0), keep)
    yh = _complete_np(np.where(keep, y.conj().T, 0), keep)
    return xs @ yh.conj().T


def _null_rank_np(d):
    return int(np.sum(d > max(NULL_TOL * d[0], ABS_NULL)))


def sweep_np(mats, pairs, target, n, cands, trace):
    M = mats.shape[0]
    left = np.zeros(1 << n, dtype=mats.dtype)
    left[0] = 1.0
    for k in range(M - 1, 0, -1):
        left = apply_2q_np(left, mats[k], pairs[k, 0], pairs[k, 1], n)
    right = np.array(target, dtype=mats.dtype)
    fid = 0.0
    for m in range(M):
        envs = pair_envs_np(right, left, n, cands)
        xs, ds, ys = np.linalg.svd(envs)
        sums = ds.sum(axis=1)
        best = 0
        for p in range(1, len(sums)):
            if sums[p] > sums[best] + TIE_TOL:
                best = p
        gate = gate_from_svd_np(xs[best], ds[best], ys[best])
        mats[m] = gate
        pairs[m] = cands[best]
        fid = float(sums[best])
        trace[m] = fid
        right = apply_2q_np(right, gate.conj().T, pairs[m, 0], pairs[m, 1], n)
        if m + 1 < M:
            left = apply_2q_np(left, mats[m + 1].conj().T, pairs[m + 1, 0], pairs[m + 1, 1], n)
    return fid


# --------------------------------------------------------------------------
# exported
# --------------------------------------------------------------------------

apply_2q = pick(apply_2q_nb, apply_2q_np)
pair_envs = pick(pair_envs_nb, pair_envs_np)
svd4 = pick(svd4_nb, svd4_np)
batch_svd4 = pick(batch_svd4_nb, batch_svd4_np)
sweep = pick(sweep_nb, sweep_np)
gate_from_svd = pick(gate_from_svd_nb, gate_from_svd_np)
