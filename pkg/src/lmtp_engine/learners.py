"""Regression and classification primitives used for every nuisance fit.

The menu is small and fully in-repo: weighted GLMs fitted by iteratively
reweighted least squares (optionally saturated, i.e. one parameter per cell of
the discrete features), brute-force k-nearest neighbours, and a CART-style
regression tree. ``stack_superlearner`` combines candidates with convex
weights chosen by cross-validated loss.
"""

from __future__ import annotations

import fnmatch
import re
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import LearnerError, SignatureError

FAMILIES = ("glm", "gaussian-glm", "binomial-glm", "knn", "tree")
_ALIASES = {"k-nearest-neighbor": "knn", "regression-tree": "tree", "saturated": "glm"}
PARAMETRIC = ("glm", "gaussian-glm", "binomial-glm")

PROB_CLIP = 1e-6
GRAD_TOL = 1e-8
MAX_IRLS = 100
RIDGE_FALLBACK = 1e-6


@dataclass(frozen=True)
class LearnerSpec:
    """Declarative learner.

    Parameters
    ----------
    family : str
        ``glm`` picks the gaussian or binomial link from the task;
        ``gaussian-glm`` / ``binomial-glm`` fix it; ``knn`` and ``tree`` are
        data-adaptive.
    features : sequence of str, optional
        Feature names relative to the fitting time (see :func:`resolve_features`).
        ``None`` means the full history plus the current exposure.
    drop : sequence of str
        Names removed after resolution; used to induce misspecification.
    saturated : bool
        For GLMs, one parameter per observed cell of the features.
    ridge : float
        L2 penalty on non-intercept GLM coefficients.
    k : int
        Neighbours for ``knn``.
    max_depth, min_leaf : int
        Tree growth limits.
    """

    family: str = "glm"
    features: tuple[str, ...] | None = None
    drop: tuple[str, ...] = ()
    saturated: bool = False
    ridge: float = 0.0
    k: int = 10
    max_depth: int = 4
    min_leaf: int = 10
    name: str = ""

    def __post_init__(self):
        fam = _ALIASES.get(self.family, self.family)
        if self.family == "saturated":
            object.__setattr__(self, "saturated", True)
        object.__setattr__(self, "family", fam)
        if fam not in FAMILIES:
            raise LearnerError(f"unknown learner family {self.family!r}")
        if self.features is not None:
            object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "drop", tuple(self.drop))
        if self.ridge < 0:
            raise LearnerError("ridge penalty must be >= 0")
        if self.k < 1:
            raise LearnerError("k must be >= 1")
        if self.max_depth < 0 or self.min_leaf < 1:
            raise LearnerError("tree needs max_depth >= 0 and min_leaf >= 1")
        if self.saturated and fam not in PARAMETRIC:
            raise LearnerError("only GLMs can be saturated")

    @property
    def parametric(self) -> bool:
        return self.family in PARAMETRIC

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        base = ("saturated-" if self.saturated else "") + self.family
        if self.family == "knn":
            base += f"(k={self.k})"
        if self.family == "tree":
            base += f"(depth={self.max_depth})"
        return base

    @classmethod
    def from_mapping(cls, m: Mapping) -> LearnerSpec:
        allowed = {f for f in cls.__dataclass_fields__}
        unknown = set(m) - allowed
        if unknown:
            raise LearnerError(f"unknown learner keys: {sorted(unknown)}")
        return cls(**m)


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------

_REL = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*?)(?:\[-(\d+)\])?$")


def resolve_features(names: Sequence[str] | None, drop: Sequence[str], available: Sequence[str],
                     t: int, baseline: Sequence[str] = ()) -> list[str]:
    """Map time-relative feature names to absolute column names.

    ``L`` means ``L_t`` (or the baseline column ``L``), ``L[-1]`` means
    ``L_{t-1}`` and is skipped when ``t-1 < 0``; absolute names and shell
    globs (``L_*``) are matched against ``available`` directly.
    """
    avail = list(available)

    def one(name: str, strict: bool) -> list[str]:
        if name in avail:
            return [name]
        if any(ch in name for ch in "*?["):
            if "[-" not in name:
                return [c for c in avail if fnmatch.fnmatchcase(c, name)]
        m = _REL.match(name)
        if m:
            base, lag = m.group(1), int(m.group(2) or 0)
            if lag == 0 and base in baseline:
                return [base] if base in avail else []
            s = t - lag
            if s < 0:
                return []
            cand = f"{base}_{s}"
            if cand in avail:
                return [cand]
            if any(c.startswith(base + "_") for c in avail):
                return []
        if strict:
            raise LearnerError(f"unknown feature {name!r}; available: {', '.join(avail)}")
        return []

    chosen = avail if names is None else [c for n in names for c in one(n, True)]
    dropped = {c for n in drop for c in one(n, False)}
    out, seen = [], set()
    for c in chosen:
        if c not in dropped and c not in seen:
            out.append(c)
            seen.add(c)
    return out


# ---------------------------------------------------------------------------
# Fitted models
# ---------------------------------------------------------------------------

def _as_matrix(X, names=None) -> tuple[np.ndarray, tuple[str, ...] | None]:
    if names is not None:
        names = tuple(str(c) for c in names)
    if hasattr(X, "columns"):
        names = tuple(str(c) for c in X.columns)
        X = X.to_numpy(dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    return X, names


@dataclass(frozen=True)
class FittedModel:
    """An immutable fitted learner; ``predict`` checks the feature signature."""

    spec: LearnerSpec
    task: str
    n_features: int
    signature: tuple[str, ...] | None
    params: dict = field(default_factory=dict)
    ridge_fallback: bool = False
    iterations: int = 0
    select: tuple[int, ...] | None = None

    def _check(self, X, names=None):
        X, names = _as_matrix(X, names)
        if X.shape[0] == 0:
            return X.reshape(0, self.n_features)
        if X.shape[1] != self.n_features:
            raise SignatureError(f"model expects {self.n_features} features, got {X.shape[1]}")
        if names is not None and self.signature is not None and names != self.signature:
            raise SignatureError(f"feature names {names} differ from training {self.signature}")
        return X

    def predict(self, X, names=None) -> np.ndarray:
        X = self._check(X, names)
        if X.shape[0] == 0:
            return np.zeros(0)
        if self.select is not None:
            X = X[:, list(self.select)]
        kind = self.params["kind"]
        if kind == "constant":
            out = np.full(X.shape[0], self.params["value"])
        elif kind == "cells":
            out = _predict_cells(self.params, X)
        elif kind == "glm":
            eta = self.params["coef"][0] + X @ self.params["coef"][1:]
            out = _expit(eta) if self.task == "binomial" else eta
        elif kind == "knn":
            out = _predict_knn(self.params, X, self.spec.k)
        elif kind == "tree":
            out = _predict_tree(self.params["nodes"], X)
        else:  # pragma: no cover
            raise LearnerError(f"corrupt model kind {kind!r}")
        if self.task == "binomial":
            out = np.clip(out, 0.0, 1.0)
        return out

    @property
    def coefficients(self) -> np.ndarray:
        if self.params.get("kind") != "glm":
            raise LearnerError("coefficients exist only for non-saturated GLMs")
        return self.params["coef"]


def _expit(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _task_for(spec: LearnerSpec, task: str) -> str:
    if spec.family == "gaussian-glm":
        return "gaussian"
    if spec.family == "binomial-glm":
        return "binomial"
    return task


def fit_learner(spec: LearnerSpec, X, y, w=None, task: str | None = None,
                force_task: bool = False, names: Sequence[str] | None = None) -> FittedModel:
    """Fit one learner.

    Parameters
    ----------
    spec : LearnerSpec
    X : array-like or DataFrame, shape (n, p)
    y : array-like, shape (n,)
        Targets; binomial targets may be fractional in [0, 1].
    w : array-like, optional
        Non-negative case weights.
    task : {"binomial", "gaussian"}, optional
        Used by ``glm`` and to clip predictions. Defaults to binomial when all
        targets lie in [0, 1] and the family is ``binomial-glm``.
    force_task : bool
        Override the fixed link of ``gaussian-glm`` / ``binomial-glm``.
    names : sequence of str, optional
        Column names for an ndarray ``X``. With names, ``spec.features`` and
        ``spec.drop`` select the columns this learner uses.
    """
    X, names = _as_matrix(X, names)
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    if y.shape[0] != n:
        raise LearnerError(f"X has {n} rows but y has {y.shape[0]}")
    w = np.ones(n) if w is None else np.asarray(w, dtype=float).ravel()
    if w.shape[0] != n:
        raise LearnerError("weights must have one entry per row")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y)) and np.all(np.isfinite(w))):
        raise LearnerError("non-finite values in learner inputs")
    if np.any(w < 0):
        raise LearnerError("weights must be non-negative")
    if n == 0 or w.sum() <= 0:
        raise LearnerError("no rows with positive weight to fit")
    if task is None:
        task = "binomial" if spec.family == "binomial-glm" else "gaussian"
    if not force_task:
        task = _task_for(spec, task)
    if task == "binomial" and (y.min() < 0 or y.max() > 1):
        raise LearnerError("binomial targets must lie in [0, 1]")
    base = dict(spec=spec, task=task, n_features=X.shape[1], signature=names)
    if names is not None and (spec.features is not None or spec.drop):
        chosen = resolve_features(spec.features, spec.drop, names, 0)
        sel = tuple(names.index(c) for c in chosen)
        base["select"] = sel
        X = X[:, list(sel)]
    if spec.parametric:
        if spec.saturated:
            return FittedModel(params=_fit_cells(X, y, w), **base)
        if X.shape[1] == 0:
            return FittedModel(params={"kind": "glm", "coef": np.array([_wmean(y, w)])}
                               if task == "gaussian" else
                               {"kind": "glm", "coef": np.array([_logit(_wmean(y, w))])},
                               **base)
        coef, fallback, its = _irls(X, y, w, task, spec.ridge)
        return FittedModel(params={"kind": "glm", "coef": coef}, ridge_fallback=fallback,
                           iterations=its, **base)
    if spec.family == "knn":
        return FittedModel(params=_fit_knn(X, y, w), **base)
    return FittedModel(params={"kind": "tree", "nodes": _fit_tree(X, y, w, spec)}, **base)


def predict(model, X, names=None) -> np.ndarray:
    """One prediction per row; probabilities for binomial tasks."""
    return model.predict(X, names)


def _wmean(y, w):
    return float(np.dot(w, y) / w.sum())


def _logit(p):
    p = np.clip(p, PROB_CLIP, 1 - PROB_CLIP)
    return np.log(p) - np.log1p(-p)


# -- GLM ----------------------------------------------------------------------

def _irls(X, y, w, task, ridge):
    n, p = X.shape
    Z = np.column_stack([np.ones(n), X])
    pen = np.full(p + 1, ridge)
    pen[0] = 0.0
    fallback = False
    gram = Z.T @ (Z * w[:, None])
    if np.linalg.matrix_rank(gram) < p + 1 and ridge == 0:
        pen[1:] = RIDGE_FALLBACK * max(1.0, w.sum())
        fallback = True
    if task == "gaussian":
        beta = np.linalg.solve(gram + np.diag(pen), Z.T @ (w * y))
        return beta, fallback, 1
    beta = np.zeros(p + 1)
    beta[0] = float(_logit(_wmean(y, w)))
    its = 0
    for its in range(1, MAX_IRLS + 1):
        mu = _expit(Z @ beta)
        grad = Z.T @ (w * (y - mu)) - pen * beta
        if np.linalg.norm(grad) / max(w.sum(), 1.0) <= GRAD_TOL:
            break
        v = np.maximum(mu * (1 - mu), 1e-10) * w
        hess = Z.T @ (Z * v[:, None]) + np.diag(pen)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        beta = beta + step
        if not np.all(np.isfinite(beta)):
            raise LearnerError("IRLS diverged")
    return beta, fallback, its


# -- saturated cells ---------------------------------------------------------

def _codes(X: np.ndarray, uniques: list[np.ndarray]) -> np.ndarray:
    """Mixed-radix cell code per row; -1 when a value was never seen in training."""
    code = np.zeros(X.shape[0], dtype=np.int64)
    seen = np.ones(X.shape[0], dtype=bool)
    for j, u in enumerate(uniques):
        pos = np.searchsorted(u, X[:, j])
        pos = np.minimum(pos, len(u) - 1)
        seen &= u[pos] == X[:, j]
        code = code * len(u) + pos
    return np.where(seen, code, -1)


def _fit_cells(X, y, w):
    if X.shape[1] == 0:
        return {"kind": "constant", "value": _wmean(y, w)}
    uniques = [np.unique(X[:, j]) for j in range(X.shape[1])]
    if np.prod([float(len(u)) for u in uniques]) > 2.0 ** 62:
        raise LearnerError("too many cells for a saturated model")
    code = _codes(X, uniques)
    cells, inv = np.unique(code, return_inverse=True)
    sw = np.bincount(inv, weights=w, minlength=len(cells))
    swy = np.bincount(inv, weights=w * y, minlength=len(cells))
    pooled = _wmean(y, w)
    means = np.where(sw > 0, swy / np.where(sw > 0, sw, 1.0), pooled)
    return {"kind": "cells", "uniques": uniques, "cells": cells, "means": means,
            "pooled": pooled}


def _predict_cells(params, X):
    code = _codes(X, params["uniques"])
    cells = params["cells"]
    pos = np.minimum(np.searchsorted(cells, code), len(cells) - 1)
    hit = (code >= 0) & (cells[pos] == code)
    return np.where(hit, params["means"][pos], params["pooled"])


# -- k-NN ----------------------------------------------------------------------

def _fit_knn(X, y, w):
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return {"kind": "knn", "X": X / sd, "y": y, "w": w, "scale": sd}


def _predict_knn(params, X, k, chunk=2048):
    Xt, yt, wt = params["X"], params["y"], params["w"]
    k = min(k, Xt.shape[0])
    Xs = X / params["scale"]
    out = np.empty(X.shape[0])
    for start in range(0, X.shape[0], chunk):
        block = Xs[start:start + chunk]
        d = ((block[:, None, :] - Xt[None, :, :]) ** 2).sum(axis=2)
        # stable sort keeps the lowest training index among ties
        idx = np.argsort(d, axis=1, kind="stable")[:, :k]
        ww = wt[idx]
        tot = ww.sum(axis=1)
        num = (ww * yt[idx]).sum(axis=1)
        out[start:start + chunk] = np.where(tot > 0, num / np.where(tot > 0, tot, 1),
                                            yt[idx].mean(axis=1))
    return out


# -- regression tree -------------------------------------------------------------

def _fit_tree(X, y, w, spec: LearnerSpec):
    nodes: list[tuple] = []

    def grow(rows: np.ndarray, depth: int) -> int:
        ww, yy = w[rows], y[rows]
        value = float(np.dot(ww, yy) / ww.sum()) if ww.sum() > 0 else float(yy.mean())
        me = len(nodes)
        nodes.append(("leaf", value))
        if depth >= spec.max_depth or rows.size < 2 * spec.min_leaf:
            return me
        best = None
        parent = np.dot(ww, (yy - value) ** 2)
        for j in range(X.shape[1]):
            order = np.argsort(X[rows, j], kind="stable")
            xs = X[rows, j][order]
            ws, ys = ww[order], yy[order]
            cw, cwy, cwy2 = np.cumsum(ws), np.cumsum(ws * ys), np.cumsum(ws * ys * ys)
            tw, twy, twy2 = cw[-1], cwy[-1], cwy2[-1]
            pos = np.arange(spec.min_leaf - 1, rows.size - spec.min_leaf)
            if pos.size == 0:
                continue
            pos = pos[xs[pos] < xs[pos + 1]]
            if pos.size == 0:
                continue
            lw, rw = cw[pos], tw - cw[pos]
            ok = (lw > 0) & (rw > 0)
            if not ok.any():
                continue
            pos, lw, rw = pos[ok], lw[ok], rw[ok]
            sse = (cwy2[pos] - cwy[pos] ** 2 / lw) + ((twy2 - cwy2[pos]) - (twy - cwy[pos]) ** 2 / rw)
            i = int(np.argmin(sse))
            if best is None or sse[i] < best[0] - 1e-12:
                best = (sse[i], j, 0.5 * (xs[pos[i]] + xs[pos[i] + 1]))
        if best is None or best[0] >= parent - 1e-12:
            return me
        _, j, cut = best
        left = rows[X[rows, j] <= cut]
        right = rows[X[rows, j] > cut]
        li = grow(left, depth + 1)
        ri = grow(right, depth + 1)
        nodes[me] = ("split", j, cut, li, ri, value)
        return me

    grow(np.arange(X.shape[0]), 0)
    return nodes


def _predict_tree(nodes, X):
    out = np.empty(X.shape[0])
    stack = [(0, np.arange(X.shape[0]))]
    while stack:
        i, rows = stack.pop()
        node = nodes[i]
        if node[0] == "leaf":
            out[rows] = node[1]
            continue
        _, j, cut, li, ri, _ = node
        go_left = X[rows, j] <= cut
        stack.append((li, rows[go_left]))
        stack.append((ri, rows[~go_left]))
    return out


# ---------------------------------------------------------------------------
# Folds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FoldAssignment:
    """Per-unit fold indices; all time points of a unit share its fold."""

    k: int
    fold: np.ndarray
    seed: int

    def __post_init__(self):
        self.fold.setflags(write=False)

    @property
    def n(self) -> int:
        return self.fold.shape[0]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold, minlength=self.k)

    def train(self, j: int) -> np.ndarray:
        return self.fold != j

    def test(self, j: int) -> np.ndarray:
        return self.fold == j


def make_folds(n: int, k: int, seed: int) -> FoldAssignment:
    """Random balanced partition of ``n`` units into ``k`` folds."""
    if k < 2:
        raise LearnerError("need at least 2 folds")
    if k > n:
        raise LearnerError(f"cannot split {n} units into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    fold = np.empty(n, dtype=np.int64)
    fold[perm] = np.arange(n) % k
    return FoldAssignment(k, fold, seed)


# ---------------------------------------------------------------------------
# Stacking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StackWeights:
    labels: tuple[str, ...]
    weights: np.ndarray
    cv_risk: np.ndarray
    ensemble_risk: float


@dataclass(frozen=True)
class Ensemble:
    """Convex combination of full-data refits."""

    models: tuple[FittedModel | None, ...]
    weights: np.ndarray
    task: str

    def predict(self, X, names=None) -> np.ndarray:
        X, names = _as_matrix(X, names)
        out = np.zeros(X.shape[0])
        for m, a in zip(self.models, self.weights):
            if a > 0 and m is not None:
                out += a * m.predict(X, names)
        if self.task == "binomial":
            out = np.clip(out, 0.0, 1.0)
        return out


def _loss(pred, y, w, loss):
    if loss == "squared":
        return float(np.dot(w, (y - pred) ** 2) / w.sum())
    p = np.clip(pred, PROB_CLIP, 1 - PROB_CLIP)
    return float(-np.dot(w, y * np.log(p) + (1 - y) * np.log1p(-p)) / w.sum())


def _loss_grad(Z, a, y, w, loss):
    pred = Z @ a
    if loss == "squared":
        r = -2.0 * w * (y - pred)
    else:
        p = np.clip(pred, PROB_CLIP, 1 - PROB_CLIP)
        r = -w * (y / p - (1 - y) / (1 - p))
    return Z.T @ r / w.sum()


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def simplex_weights(Z: np.ndarray, y: np.ndarray, w: np.ndarray, loss: str,
                    max_iter: int = 500) -> np.ndarray:
    """Minimise the loss of ``Z @ a`` over the simplex by projected gradient.

    Starts at the best single column, so the result never does worse than it.
    """
    m = Z.shape[1]
    risks = np.array([_loss(Z[:, j], y, w, loss) for j in range(m)])
    a = np.zeros(m)
    a[int(np.argmin(risks))] = 1.0
    if m == 1:
        return a
    cur = _loss(Z @ a, y, w, loss)
    step = 1.0
    for _ in range(max_iter):
        g = _loss_grad(Z, a, y, w, loss)
        improved = False
        while step > 1e-12:
            cand = project_simplex(a - step * g)
            val = _loss(Z @ cand, y, w, loss)
            if val < cur - 1e-15:
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        if cur - val < 1e-13:
            a, cur = cand, val
            break
        a, cur = cand, val
        step = min(step * 2.0, 1e6)
    a = np.where(a < 1e-14, 0.0, a)
    return a / a.sum()


def stack_superlearner(specs: Sequence[LearnerSpec], X, y, k: int = 5, loss: str = "squared",
                       w=None, seed: int = 0, task: str | None = None,
                       folds: FoldAssignment | None = None,
                       names: Sequence[str] | None = None) -> tuple[StackWeights, Ensemble]:
    """Cross-validated convex stacking of candidate learners.

    Each candidate sees the columns named by its ``features`` when ``X`` carries
    column names (a DataFrame or ``names``).
    """
    specs = list(specs)
    if not specs:
        raise LearnerError("superlearner needs at least one candidate")
    if loss not in ("squared", "log"):
        raise LearnerError(f"unknown loss {loss!r}")
    Xm, names = _as_matrix(X, names)
    y = np.asarray(y, dtype=float).ravel()
    w = np.ones(len(y)) if w is None else np.asarray(w, dtype=float)
    if task is None:
        task = "binomial" if loss == "log" else "gaussian"
    if loss == "log" and (y.min() < 0 or y.max() > 1):
        raise LearnerError("log loss needs targets in [0, 1]")
    def refit(spec):
        try:
            return fit_learner(spec, Xm, y, w, task=task, names=names)
        except LearnerError:
            return None

    if len(specs) == 1:
        model = refit(specs[0])
        if model is None:
            raise LearnerError("the only candidate learner failed to fit")
        wts = np.array([1.0])
        return (StackWeights((specs[0].label,), wts, np.array([np.nan]), np.nan),
                Ensemble((model,), wts, task))
    if folds is None:
        folds = make_folds(len(y), min(k, len(y)), seed)
    Z = np.full((len(y), len(specs)), np.nan)
    for j, spec in enumerate(specs):
        try:
            for f in range(folds.k):
                tr, te = folds.train(f), folds.test(f)
                m = fit_learner(spec, Xm[tr], y[tr], w[tr], task=task, names=names)
                Z[te, j] = m.predict(Xm[te], names)
        except LearnerError:
            Z[:, j] = np.nan
    ok = np.all(np.isfinite(Z), axis=0)
    if not ok.any():
        raise LearnerError("every candidate learner failed to fit")
    risks = np.full(len(specs), np.inf)
    for j in np.flatnonzero(ok):
        risks[j] = _loss(Z[:, j], y, w, loss)
    alpha = np.zeros(len(specs))
    alpha[ok] = simplex_weights(Z[:, ok], y, w, loss)
    models = tuple(refit(s) if a > 0 else None for s, a in zip(specs, alpha))
    if any(m is None for m, a in zip(models, alpha) if a > 0):
        raise LearnerError("a weighted candidate failed on the full data")
    ens_risk = _loss(Z[:, ok] @ alpha[ok], y, w, loss)
    return (StackWeights(tuple(s.label for s in specs), alpha, risks, ens_risk),
            Ensemble(models, alpha, task))


def fit_stack(specs: Sequence[LearnerSpec], X, y, w=None, task: str = "gaussian",
              k: int = 5, seed: int = 0, names: Sequence[str] | None = None,
              force_task: bool = False):
    """Fit a single learner directly or a superlearner over several."""
    specs = list(specs)
    if force_task:
        specs = [with_task(s, task) for s in specs]
    if len(specs) == 1:
        return fit_learner(specs[0], X, y, w, task=task, names=names)
    loss = "log" if task == "binomial" else "squared"
    return stack_superlearner(specs, X, y, k=k, loss=loss, w=w, seed=seed, task=task,
                              names=names)[1]


def with_task(spec: LearnerSpec, task: str) -> LearnerSpec:
    """Swap a fixed-link GLM to the link of ``task`` (used for unbounded pseudo-outcomes)."""
    if spec.family == "binomial-glm" and task == "gaussian":
        return replace(spec, family="gaussian-glm")
    if spec.family == "gaussian-glm" and task == "binomial":
        return replace(spec, family="binomial-glm")
    return spec
