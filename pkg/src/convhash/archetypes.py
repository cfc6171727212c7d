"""Archetypal analysis and convex (simplex-constrained) coding.

Columns are samples throughout the functional API: a data matrix ``X`` is
``(K, l)``, a dictionary ``D`` is ``(K, d)`` and ``D = X @ B`` with every
column of ``B`` on the probability simplex. :class:`ArchetypalAnalysis`
wraps the same routines with the usual samples-as-rows estimator layout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_finite_matrix
from .exceptions import DataError

logger = logging.getLogger(__name__)


# Simplex-constrained least squares -------------------------------------

def simplex_lstsq(D, x, gram=None, init=None, max_iter=None, tol=1e-10):
    """Solve ``min_y ||x - D y||^2`` subject to ``y >= 0, sum(y) = 1``.

    Primal active-set method. Starting from the best single column (or from
    the feasible point ``init``), the equality-constrained problem on the
    current support is solved in closed form; if that leaves the simplex, a
    step is taken to the boundary and the blocking coordinate is dropped,
    otherwise the coordinate whose gradient most undercuts the support's
    common gradient value is added. No step increases the objective.

    Parameters
    ----------
    D : ndarray, shape (K, n)
    x : ndarray, shape (K,)
    gram : ndarray, shape (n, n), optional
        Precomputed ``D.T @ D``. Without it, Gram columns are computed on
        demand for the support only, which is what the dictionary update
        needs when ``n`` is the number of training samples.
    init : ndarray, shape (n,), optional
        Feasible warm start.
    max_iter : int, optional
        Iteration cap, ``10 * n`` by default.
    tol : float
        Optimality tolerance on the gradient gap, relative to the problem
        scale.

    Returns
    -------
    y : ndarray, shape (n,)
    """
    D = np.ascontiguousarray(D, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = D.shape[1]
    c = D.T @ x
    if gram is not None:
        gram = np.ascontiguousarray(gram, dtype=np.float64)
        diag = np.ascontiguousarray(np.diagonal(gram))
    else:
        gram = _NO_GRAM
        diag = np.einsum("ij,ij->j", D, D)
    if init is None:
        init = _NO_INIT
    else:
        init = np.ascontiguousarray(init, dtype=np.float64)
    if max_iter is None:
        max_iter = 10 * n
    scale = max(1.0, float(np.abs(c).max(initial=0.0)), float(diag.max(initial=0.0)))
    y, hit_cap = _active_set(D, c, diag, gram, init, int(max_iter), tol * scale)
    if hit_cap:
        logger.debug("simplex_lstsq hit the iteration cap (%d)", max_iter)
    return y


_NO_GRAM = np.zeros((0, 0))
_NO_INIT = np.zeros(0)


@numba.njit(cache=True)
def _gram_column(D, gram, j, out):
    if gram.shape[0] > 0:
        out[:] = gram[:, j]
    else:
        out[:] = D.T @ np.ascontiguousarray(D[:, j])


@numba.njit(cache=True)
def _active_set(D, c, diag, gram, init, max_iter, gap_tol):
    n = c.shape[0]
    support = np.empty(n, dtype=np.int64)
    y_s = np.empty(n)
    cap = min(n, 32)
    cols = np.empty((cap, n))  # row k holds the Gram column of support[k]

    s = 0
    if init.shape[0] == 0:
        # best vertex: argmin ||x - d_j||^2, first index on ties
        best = 0
        best_val = diag[0] - 2.0 * c[0]
        for j in range(1, n):
            v = diag[j] - 2.0 * c[j]
            if v < best_val:
                best_val = v
                best = j
        support[0] = best
        y_s[0] = 1.0
        s = 1
    else:
        total = 0.0
        for j in range(n):
            if init[j] > 0.0:
                support[s] = j
                y_s[s] = init[j]
                total += init[j]
                s += 1
        for k in range(s):
            y_s[k] /= total
    if s > cap:
        cap = s
        cols = np.empty((cap, n))
    for k in range(s):
        _gram_column(D, gram, support[k], cols[k])

    hit_cap = True
    for _ in range(max_iter):
        kkt = np.empty((s + 1, s + 1))
        rhs = np.empty(s + 1)
        for a in range(s):
            for b in range(s):
                kkt[a, b] = cols[b, support[a]]
            kkt[a, s] = 1.0
            kkt[s, a] = 1.0
            rhs[a] = c[support[a]]
        kkt[s, s] = 0.0
        rhs[s] = 1.0
        try:
            sol = np.linalg.solve(kkt, rhs)
        except Exception:
            sol = np.linalg.lstsq(kkt, rhs)[0]
        z = sol[:s]

        infeasible = False
        for k in range(s):
            if z[k] <= 0.0:
                infeasible = True
                break
        if infeasible:
            alpha = np.inf
            blocking = 0
            for k in range(s):
                step = z[k] - y_s[k]
                if step < 0.0:
                    r = y_s[k] / -step
                    if r < alpha:
                        alpha = r
                        blocking = k
            alpha = min(alpha, 1.0)
            total = 0.0
            new_s = 0
            for k in range(s):
                v = y_s[k] + alpha * (z[k] - y_s[k])
                if k != blocking and v > 0.0:
                    support[new_s] = support[k]
                    y_s[new_s] = v
                    if new_s != k:
                        cols[new_s] = cols[k]
                    total += v
                    new_s += 1
            s = new_s
            for k in range(s):
                y_s[k] /= total
            continue

        for k in range(s):
            y_s[k] = z[k]
        grad = -c.copy()
        for k in range(s):
            grad += y_s[k] * cols[k]
        level = 0.0
        for k in range(s):
            level += grad[support[k]]
        level /= s
        for k in range(s):
            grad[support[k]] = np.inf
        j = np.argmin(grad)
        if not grad[j] < level - gap_tol:
            hit_cap = False
            break
        if s == cap:
            cap = min(n, 2 * cap)
            grown = np.empty((cap, n))
            grown[:s] = cols[:s]
            cols = grown
        _gram_column(D, gram, j, cols[s])
        support[s] = j
        y_s[s] = 0.0
        s += 1

    y = np.zeros(n)
    for k in range(s):
        y[support[k]] = y_s[k]
    return y, hit_cap


# Dictionary learning ---------------------------------------------------

@dataclass
class AaConfig:
    d: int = 25
    max_outer_iters: int = 100
    tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be >= 2")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass
class ArchetypalDictionary:
    D: np.ndarray
    B: np.ndarray | None
    class_label: str | None = None
    objective: list = field(default_factory=list)

    @property
    def d(self) -> int:
        return self.D.shape[1]


def furthest_sum(X: np.ndarray, d: int, seed: int = 0) -> list[int]:
    """Pick ``d`` column indices of ``X`` by greedy max-min distance.

    A random column only orients the search: the first pick is the column
    furthest from it, and each later pick is the column furthest from its
    nearest already-picked column. Ties go to the lower index.
    """
    rng = np.random.default_rng(seed)
    l = X.shape[1]
    sq = np.einsum("ij,ij->j", X, X)

    def dist_to(j):
        return np.maximum(sq - 2.0 * (X.T @ X[:, j]) + sq[j], 0.0)

    start = int(rng.integers(l))
    chosen = [int(np.argmax(dist_to(start)))]
    nearest = dist_to(chosen[0])
    while len(chosen) < d:
        cand = nearest.copy()
        cand[chosen] = -1.0
        j = int(np.argmax(cand))
        chosen.append(j)
        nearest = np.minimum(nearest, dist_to(j))
    return chosen


def _objective(X, D, A):
    R = X - D @ A
    return float(np.einsum("ij,ij->", R, R))


def simplex_lstsq_batch(D, X, gram=None, init=None, tol=1e-10):
    """:func:`simplex_lstsq` for every column of ``X``; returns ``(n, l)``.

    ``init``, if given, is an ``(n, l)`` array of feasible warm starts.
    """
    D = np.ascontiguousarray(D, dtype=np.float64)
    if gram is None:
        gram = D.T @ D
    gram = np.ascontiguousarray(gram, dtype=np.float64)
    C = np.ascontiguousarray((D.T @ X).T)
    diag = np.ascontiguousarray(np.diagonal(gram))
    if init is None:
        init = np.zeros((X.shape[1], 0))
    else:
        init = np.ascontiguousarray(np.asarray(init, dtype=np.float64).T)
    scales = np.maximum(np.maximum(1.0, np.abs(C).max(axis=1, initial=0.0)), diag.max(initial=0.0))
    return _active_set_batch(D, C, diag, gram, init, 10 * D.shape[1], tol * scales).T


@numba.njit(cache=True)
def _active_set_batch(D, C, diag, gram, init, max_iter, gap_tols):
    out = np.empty((C.shape[0], C.shape[1]))
    for i in range(C.shape[0]):
        out[i] = _active_set(D, C[i], diag, gram, init[i], max_iter, gap_tols[i])[0]
    return out


def _update_codes(X, D, A=None):
    return simplex_lstsq_batch(D, X, init=A)


def _update_archetypes(X, D, A, B, sq_norms):
    R = X - D @ A
    max_iter = 10 * X.shape[1]
    for j in range(D.shape[1]):
        a = A[j]
        na = float(a @ a)
        if na <= 0.0:
            continue
        target = D[:, j] + (R @ a) / na
        c = X.T @ target
        scale = max(1.0, float(np.abs(c).max()), float(sq_norms.max()))
        b = _active_set(X, c, sq_norms, _NO_GRAM, np.ascontiguousarray(B[:, j]), max_iter, 1e-10 * scale)[0]
        d_new = X @ b
        R -= np.outer(d_new - D[:, j], a)
        D[:, j] = d_new
        B[:, j] = b
    return D, B


def learn_dictionary(X, cfg: AaConfig = AaConfig(), class_label=None) -> ArchetypalDictionary:
    """Archetypal analysis ``X ~ X B A`` by block-coordinate descent.

    ``X`` is ``(K, l)`` (or a :class:`~convhash.frontend.CsfMatrix`).
    Alternates exact simplex-constrained updates of every column of ``A``
    and of every column of ``B``; stops on a relative objective change
    below ``cfg.tol`` or after ``cfg.max_outer_iters`` sweeps.
    ``objective[0]`` is the value after the first code update, and one
    value is appended per sweep.
    """
    X = getattr(X, "columns", X)
    try:
        X = check_finite_matrix(X)
    except DataError:
        raise DataError("invalid data: CSF matrix must be finite and 2-D") from None
    K, l = X.shape
    if l < cfg.d:
        raise DataError(
            f"insufficient data for d archetypes ({l} columns < d={cfg.d})"
            + (f" in class {class_label!r}" if class_label is not None else "")
        )

    idx = furthest_sum(X, cfg.d, cfg.seed)
    B = np.zeros((l, cfg.d))
    B[idx, np.arange(cfg.d)] = 1.0
    D = X @ B
    A = _update_codes(X, D)
    obj = [_objective(X, D, A)]

    X = np.ascontiguousarray(X)
    sq_norms = np.einsum("ij,ij->j", X, X)
    for _ in range(cfg.max_outer_iters):
        D, B = _update_archetypes(X, D, A, B, sq_norms)
        A = _update_codes(X, D, A)
        obj.append(_objective(X, D, A))
        prev, cur = obj[-2], obj[-1]
        if abs(prev - cur) <= cfg.tol * max(prev, np.finfo(float).tiny):
            break

    D = X @ B
    return ArchetypalDictionary(D=D, B=B, class_label=class_label, objective=obj)


# Concatenated dictionary and coding ------------------------------------

class ConcatenatedDictionary:
    """Per-class dictionaries stacked side by side, ``D_f = [D_1 ... D_q]``.

    Immutable once built; the Gram matrix is computed once for coding.
    """

    def __init__(self, dictionaries: Sequence[ArchetypalDictionary]):
        if not dictionaries:
            raise ValueError("need at least one class dictionary")
        K = {dic.D.shape[0] for dic in dictionaries}
        if len(K) != 1:
            raise DataError("class dictionaries have different feature dimensions")
        self.labels = [dic.class_label for dic in dictionaries]
        self.D_f = np.ascontiguousarray(np.hstack([dic.D for dic in dictionaries]))
        self.D_f.flags.writeable = False
        offsets = np.cumsum([0] + [dic.d for dic in dictionaries])
        self.class_offsets = [(int(a), int(b)) for a, b in zip(offsets[:-1], offsets[1:])]
        self.gram = self.D_f.T @ self.D_f
        self.gram.flags.writeable = False

    @property
    def K(self) -> int:
        return self.D_f.shape[0]

    @property
    def q(self) -> int:
        return len(self.labels)

    @property
    def qd(self) -> int:
        return self.D_f.shape[1]

    def dictionary(self, k: int) -> np.ndarray:
        a, b = self.class_offsets[k]
        return self.D_f[:, a:b]

    def owner(self, index: int) -> int:
        """Class position owning archetype ``index``."""
        for k, (a, b) in enumerate(self.class_offsets):
            if a <= index < b:
                return k
        raise IndexError(index)


def encode(x, Df: ConcatenatedDictionary) -> np.ndarray:
    """Convex code of one CSF against ``Df`` (a point of the simplex)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size != Df.K:
        raise DataError(f"dictionary/input mismatch: input has {x.size} dims, dictionary {Df.K}")
    if not np.all(np.isfinite(x)):
        raise DataError("invalid data: non-finite CSF")
    return simplex_lstsq(Df.D_f, x, gram=Df.gram)


def encode_batch(X, Df: ConcatenatedDictionary) -> np.ndarray:
    """Codes for every column of ``X`` (K, l); returns an ``(l, qd)`` array."""
    X = getattr(X, "columns", X)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != Df.K:
        raise DataError(f"dictionary/input mismatch: expected ({Df.K}, l) input, got {X.shape}")
    out = np.empty((X.shape[1], Df.qd))
    for i in range(X.shape[1]):
        out[i] = encode(X[:, i], Df)
    return out


class ArchetypalAnalysis(TransformerMixin, BaseEstimator):
    """Archetypal analysis with samples as rows.

    Parameters
    ----------
    n_archetypes : int, default=25
    max_iter : int, default=100
        Maximum number of block-coordinate sweeps.
    tol : float, default=1e-6
        Relative objective change that stops the sweeps.
    random_state : int, default=0
        Seed for the furthest-sum initialisation.

    Attributes
    ----------
    archetypes_ : ndarray of shape (n_archetypes, n_features)
    weights_ : ndarray of shape (n_samples, n_archetypes)
        Column ``j`` holds the convex weights building archetype ``j``.
    objective_ : list of float
    n_iter_ : int
    """

    def __init__(self, n_archetypes=25, max_iter=100, tol=1e-6, random_state=0):
        self.n_archetypes = n_archetypes
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_finite_matrix(X)
        cfg = AaConfig(d=self.n_archetypes, max_outer_iters=self.max_iter, tol=self.tol, seed=self.random_state)
        result = learn_dictionary(X.T, cfg)
        self.archetypes_ = result.D.T
        self.weights_ = result.B
        self.objective_ = result.objective
        self.n_iter_ = len(result.objective) - 1
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "archetypes_")
        X = check_finite_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise DataError(f"dictionary/input mismatch: expected {self.n_features_in_} features, got {X.shape[1]}")
        D = self.archetypes_.T
        gram = D.T @ D
        return np.array([simplex_lstsq(D, x, gram=gram) for x in X]).reshape(len(X), -1)
