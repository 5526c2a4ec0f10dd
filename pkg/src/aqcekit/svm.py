"""Kernel SVM trained in the dual with SMO, plus one-vs-one / one-vs-rest wrappers.

Dual problem (maximized)::

    W(a) = sum(a) - 1/2 sum_ij a_i a_j t_i t_j K_ij,   0 <= a_i <= C,   sum(a t) = 0

Working pairs are chosen by maximal KKT violation on the gradient
``G = Q a - 1`` with ``Q_ij = t_i t_j K_ij``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from ._accel import njit, pick

log = logging.getLogger(__name__)

TOL = 1e-6
MAX_ITER = 1_000_000
JITTER = 1e-8
TAU = 1e-12
STRATEGIES = ("one_vs_one", "one_vs_rest")
MODEL_FORMAT = "aqcekit-svm 1"


# ------------------------------------------------------------------ SMO core


@njit
def _smo_nb(K, t, C, tol, max_iter, record):
    n = K.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)
    hist = np.empty(max_iter + 1 if record else 1)
    it = 0
    converged = False
    while True:
        if record:
            hist[it] = 0.5 * (alpha.sum() - np.dot(alpha, grad))
        # i maximizes -t G over I_up, j minimizes it over I_low
        gmax = -np.inf
        gmin = np.inf
        i = -1
        j = -1
        for k in range(n):
            v = -t[k] * grad[k]
            up = (t[k] > 0 and alpha[k] < C) or (t[k] < 0 and alpha[k] > 0)
            low = (t[k] > 0 and alpha[k] > 0) or (t[k] < 0 and alpha[k] < C)
            if up and v > gmax:
                gmax = v
                i = k
            if low and v < gmin:
                gmin = v
                j = k
        if i < 0 or j < 0 or gmax - gmin < tol:
            converged = True
            break
        if it >= max_iter:
            break
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if eta <= 0.0:
            eta = TAU
        lam = (gmax - gmin) / eta
        # box limits along the feasible direction
        lim_i = C - alpha[i] if t[i] > 0 else alpha[i]
        lim_j = alpha[j] if t[j] > 0 else C - alpha[j]
        if lam > lim_i:
            lam = lim_i
        if lam > lim_j:
            lam = lim_j
        di = t[i] * lam
        dj = -t[j] * lam
        alpha[i] += di
        alpha[j] += dj
        # snap onto the bounds to keep the index sets exact
        for k in (i, j):
            if alpha[k] < 1e-14 * C:
                alpha[k] = 0.0
            elif alpha[k] > C * (1.0 - 1e-14):
                alpha[k] = C
        for k in range(n):
            grad[k] += t[k] * (t[i] * K[k, i] * di + t[j] * K[k, j] * dj)
        it += 1
    if record:
        hist[it] = 0.5 * (alpha.sum() - np.dot(alpha, grad))
        hist = hist[: it + 1].copy()
    return alpha, grad, it, converged, hist


def _smo_np(K, t, C, tol, max_iter, record):
    n = K.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)
    hist = []
    it = 0
    converged = False
    Q = (t[:, None] * t[None, :]) * K
    while True:
        if record:
            hist.append(0.5 * (alpha.sum() - alpha @ grad))
        v = -t * grad
        up = ((t > 0) & (alpha < C)) | ((t < 0) & (alpha > 0))
        low = ((t > 0) & (alpha > 0)) | ((t < 0) & (alpha < C))
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.argmax(np.where(up, v, -np.inf)))
        j = int(np.argmin(np.where(low, v, np.inf)))
        gmax, gmin = v[i], v[j]
        if gmax - gmin < tol:
            converged = True
            break
        if it >= max_iter:
            break
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if eta <= 0.0:
            eta = TAU
        lam = (gmax - gmin) / eta
        lim_i = C - alpha[i] if t[i] > 0 else alpha[i]
        lim_j = alpha[j] if t[j] > 0 else C - alpha[j]
        lam = min(lam, lim_i, lim_j)
        di, dj = t[i] * lam, -t[j] * lam
        alpha[i] += di
        alpha[j] += dj
        for k in (i, j):
            if alpha[k] < 1e-14 * C:
                alpha[k] = 0.0
            elif alpha[k] > C * (1.0 - 1e-14):
                alpha[k] = C
        grad += Q[:, i] * di + Q[:, j] * dj
        it += 1
    return alpha, grad, it, converged, np.asarray(hist if record else [0.0])


smo = pick(_smo_nb, _smo_np)


# ------------------------------------------------------------ binary model


@dataclass
class SVMModel:
    alphas: np.ndarray
    bias: float
    targets: np.ndarray
    C: float
    iterations: int = 0
    converged: bool = True
    history: np.ndarray | None = field(default=None, repr=False)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.alphas > 0)

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero((self.alphas > 0) & (self.alphas < self.C))

    def dual_objective(self, K) -> float:
        return dual_objective(K, self.targets, self.alphas)

    def kkt_residual(self, K) -> float:
        """Largest ``|t f(x) - 1|`` over non-bound support vectors (0 if none)."""
        fr = self.free
        if fr.size == 0:
            return 0.0
        f = decision(self, np.asarray(K)[fr])
        return float(np.abs(self.targets[fr] * f - 1.0).max())


def dual_objective(K, t, alpha) -> float:
    at = np.asarray(alpha) * np.asarray(t)
    return float(np.sum(alpha) - 0.5 * at @ np.asarray(K) @ at)


def _as_targets(targets) -> np.ndarray:
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if not np.all(np.isin(t, (-1.0, 1.0))):
        raise ValueError("targets must be +1 or -1")
    if not (np.any(t > 0) and np.any(t < 0)):
        raise ValueError("training needs samples of both classes")
    return t


def _prepare_gram(gram) -> np.ndarray:
    K = np.asarray(getattr(gram, "entries", gram), dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError(f"Gram matrix must be square, got {K.shape}")
    if not np.all(np.isfinite(K)):
        raise ValueError("Gram matrix has non-finite entries")
    K = 0.5 * (K + K.T)
    if K.shape[0] <= 2000:
        lo = np.linalg.eigvalsh(K).min()
        if lo < -JITTER:
            log.warning("Gram matrix min eigenvalue %.3e < %.0e; adding jitter", lo, -JITTER)
            K = K + JITTER * np.eye(K.shape[0])
    return np.ascontiguousarray(K)


def _bias(alpha, grad, t, C) -> float:
    v = -t * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(v[free].mean())
    up = ((t > 0) & (alpha < C)) | ((t < 0) & (alpha > 0))
    low = ((t > 0) & (alpha > 0)) | ((t < 0) & (alpha < C))
    hi = v[up].max() if up.any() else v.max()
    lo = v[low].min() if low.any() else v.min()
    return float(0.5 * (hi + lo))


def train_binary(gram, targets, C: float = 1.0, tol: float = TOL, max_iter: int = MAX_ITER,
                 record: bool = False) -> SVMModel:
    """Solve the dual with SMO. ``record`` keeps the objective after every step."""
    if not C > 0:
        raise ValueError("C must be positive")
    t = _as_targets(targets)
    K = _prepare_gram(gram)
    if K.shape[0] != t.size:
        raise ValueError(f"Gram has {K.shape[0]} rows but {t.size} targets were given")
    alpha, grad, it, conv, hist = smo(K, t, float(C), float(tol), int(max_iter), bool(record))
    if not conv:
        log.warning("SMO hit the iteration cap (%d) before converging", max_iter)
    return SVMModel(np.asarray(alpha), _bias(alpha, grad, t, C), t, float(C), int(it), bool(conv),
                    np.asarray(hist) if record else None)


def decision(model: SVMModel, kernel_row) -> np.ndarray | float:
    """``sum_n t_n a_n K(x_n, x) + b`` for one row or a stack of rows."""
    k = np.asarray(kernel_row, dtype=np.float64)
    if k.shape[-1] != model.alphas.size:
        raise ValueError(f"kernel row has {k.shape[-1]} entries, model was trained on {model.alphas.size}")
    sv = model.support
    # support vectors only, so a saved-and-loaded model sums in the same order
    out = k[..., sv] @ (model.alphas[sv] * model.targets[sv]) + model.bias
    return float(out) if k.ndim == 1 else out


# -------------------------------------------------------------- multiclass


@dataclass
class Component:
    """One binary model; ``index`` maps its samples to training-set rows."""

    classes: tuple[int, ...]
    index: np.ndarray
    model: SVMModel


@dataclass
class MulticlassModel:
    strategy: str
    classes: np.ndarray
    n_train: int
    components: list[Component]

    def scores(self, kernel_rows) -> np.ndarray:
        """Per-component decision values, shape ``(T, n_components)``."""
        k = np.atleast_2d(np.asarray(kernel_rows, dtype=np.float64))
        if k.shape[1] != self.n_train:
            raise ValueError(f"kernel rows have {k.shape[1]} entries, expected {self.n_train}")
        out = np.empty((k.shape[0], len(self.components)))
        for c, comp in enumerate(self.components):
            out[:, c] = decision(comp.model, k[:, comp.index])
        return out


def train_multiclass(gram, labels, strategy: str = "one_vs_one", C: float = 1.0, **kw) -> MulticlassModel:
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}")
    K = np.asarray(getattr(gram, "entries", gram), dtype=np.float64)
    y = np.asarray(labels).reshape(-1)
    if K.shape != (y.size, y.size):
        raise ValueError(f"Gram shape {K.shape} does not match {y.size} labels")
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("need at least two classes")
    comps = []
    if strategy == "one_vs_one":
        for a, b in itertools.combinations(classes.tolist(), 2):
            idx = np.flatnonzero((y == a) | (y == b))
            t = np.where(y[idx] == a, 1.0, -1.0)
            comps.append(Component((a, b), idx, train_binary(K[np.ix_(idx, idx)], t, C, **kw)))
    else:
        idx = np.arange(y.size)
        for c in classes.tolist():
            t = np.where(y == c, 1.0, -1.0)
            comps.append(Component((c,), idx, train_binary(K, t, C, **kw)))
    return MulticlassModel(strategy, classes, y.size, comps)


def predict(model: MulticlassModel, kernel_rows) -> np.ndarray:
    """Class per test row. OvO votes, ties go to the larger summed score."""
    k = np.asarray(kernel_rows, dtype=np.float64)
    if k.size == 0:
        return np.zeros(0, dtype=model.classes.dtype)
    s = model.scores(k)
    classes = model.classes.tolist()
    pos = {c: i for i, c in enumerate(classes)}
    if model.strategy == "one_vs_rest":
        return model.classes[np.argmax(s, axis=1)]
    votes = np.zeros((s.shape[0], len(classes)))
    agg = np.zeros_like(votes)
    for c, comp in enumerate(model.components):
        a, b = pos[comp.classes[0]], pos[comp.classes[1]]
        win_a = s[:, c] > 0
        votes[:, a] += win_a
        votes[:, b] += ~win_a
        agg[:, a] += s[:, c]
        agg[:, b] -= s[:, c]
    out = np.empty(s.shape[0], dtype=int)
    for r in range(s.shape[0]):
        top = np.flatnonzero(votes[r] == votes[r].max())
        out[r] = top[np.argmax(agg[r, top])]
    return model.classes[out]


def accuracy(pred, truth) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError("prediction and truth lengths differ")
    return float(np.mean(pred == truth)) if pred.size else float("nan")


# ----------------------------------------------------------- persistence
#
# Plain text. Only support vectors are written; floats use repr so a
# save/load cycle reproduces decision values exactly.


def save_model(model: MulticlassModel, path):
    lines = [
        MODEL_FORMAT,
        f"strategy {model.strategy}",
        "classes " + " ".join(str(int(c)) for c in model.classes),
        f"n_train {model.n_train}",
        f"components {len(model.components)}",
    ]
    for comp in model.components:
        m = comp.model
        sv = m.support
        lines += [
            "component " + " ".join(str(int(c)) for c in comp.classes),
            f"C {m.C!r}",
            f"bias {m.bias!r}",
            f"support {sv.size}",
            "index " + " ".join(str(int(i)) for i in comp.index[sv]),
            "targets " + " ".join(str(int(v)) for v in m.targets[sv]),
            "alphas " + " ".join(repr(float(v)) for v in m.alphas[sv]),
            "end",
        ]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _field(line: str, key: str) -> list[str]:
    parts = line.split()
    if not parts or parts[0] != key:
        raise ValueError(f"expected '{key}' line, got {line!r}")
    return parts[1:]


def load_model(path) -> MulticlassModel:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != MODEL_FORMAT:
        raise ValueError(f"{path}: not a model file")
    it = iter(lines[1:])
    strategy = _field(next(it), "strategy")[0]
    classes = np.array([int(v) for v in _field(next(it), "classes")])
    n_train = int(_field(next(it), "n_train")[0])
    count = int(_field(next(it), "components")[0])
    comps = []
    for _ in range(count):
        cls = tuple(int(v) for v in _field(next(it), "component"))
        C = float(_field(next(it), "C")[0])
        bias = float(_field(next(it), "bias")[0])
        nsv = int(_field(next(it), "support")[0])
        idx = np.array([int(v) for v in _field(next(it), "index")], dtype=np.int64)
        t = np.array([float(v) for v in _field(next(it), "targets")])
        a = np.array([float(v) for v in _field(next(it), "alphas")])
        if not (idx.size == t.size == a.size == nsv):
            raise ValueError(f"{path}: support vector count mismatch in component {cls}")
        _field(next(it), "end")
        comps.append(Component(cls, idx, SVMModel(a, bias, t, C)))
    return MulticlassModel(strategy, classes, n_train, comps)
