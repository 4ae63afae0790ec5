"""RBF-kernel support vector machine trained with SMO.

Multi-class problems are reduced one-vs-rest. Each binary dual

    min_a  1/2 a'Qa - e'a    s.t.  y'a = 0,  0 <= a_i <= C,   Q_ij = y_i y_j K(x_i, x_j)

is solved by sequential minimal optimization with second-order working-pair
selection. All binary machines share one cache of kernel rows.
"""
from __future__ import annotations

import json
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse

from ..data_io import STANCES, Stance
from .common import Prediction, Source, argmax_label

logger = logging.getLogger(__name__)

TAU = 1e-12
DEFAULT_TOL = 1e-3
DEFAULT_CACHE_BYTES = 64 * 2**20


def _as_matrix(X) -> np.ndarray | sparse.csr_matrix:
    if sparse.issparse(X):
        X = sparse.csr_matrix(X, dtype=np.float64)
        data = X.data
    else:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        data = X
    if not np.isfinite(data).all():
        raise ValueError("features contain non-finite values")
    return X


def _sq_norms(X) -> np.ndarray:
    if sparse.issparse(X):
        return np.asarray(X.multiply(X).sum(axis=1)).ravel()
    return np.einsum("ij,ij->i", X, X)


def _cross(A, B) -> np.ndarray:
    prod = A @ B.T
    return prod.toarray() if sparse.issparse(prod) else np.asarray(prod)


def rbf_kernel(x, y, gamma: float) -> float:
    """exp(-gamma * ||x - y||^2) for two vectors."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    d = x - y
    return float(np.exp(-gamma * (d @ d)))


def rbf_matrix(A, B, gamma: float) -> np.ndarray:
    d2 = _sq_norms(A)[:, None] + _sq_norms(B)[None, :] - 2.0 * _cross(A, B)
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-gamma * d2)


class KernelRows:
    """Rows of the training kernel matrix, computed on demand and kept in an
    LRU cache bounded by ``budget_bytes``."""

    def __init__(self, X, gamma: float, budget_bytes: int = DEFAULT_CACHE_BYTES):
        self.X = X
        self.gamma = gamma
        self.n = X.shape[0]
        self.sq = _sq_norms(X)
        self.capacity = max(2, budget_bytes // (8 * max(self.n, 1)))
        self._rows: OrderedDict[int, np.ndarray] = OrderedDict()

    def row(self, i: int) -> np.ndarray:
        r = self._rows.get(i)
        if r is not None:
            self._rows.move_to_end(i)
            return r
        d2 = self.sq + self.sq[i] - 2.0 * _cross(self.X, self.X[i:i + 1]).ravel()
        np.maximum(d2, 0.0, out=d2)
        d2[i] = 0.0
        r = np.exp(-self.gamma * d2)
        self._rows[i] = r
        if len(self._rows) > self.capacity:
            self._rows.popitem(last=False)
        return r


@dataclass
class SmoResult:
    alpha: np.ndarray
    rho: float
    n_iter: int
    gap: float
    converged: bool


def smo(kernel: KernelRows, y: np.ndarray, C: float, tol: float = DEFAULT_TOL,
        max_iter: int | None = None) -> SmoResult:
    """Solve one binary dual. ``y`` holds +1/-1.

    Stops when the maximal violating pair gap ``m - M`` drops below ``tol``.
    """
    n = len(y)
    if max_iter is None:
        max_iter = 10 * n
    alpha = np.zeros(n)
    G = -np.ones(n)
    pos = y > 0
    gap = np.inf
    it = 0
    while True:
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        score = -y * G
        if not up.any() or not low.any():
            gap = 0.0
            break
        masked = np.where(up, score, -np.inf)
        i = int(np.argmax(masked))
        m = masked[i]
        M = np.where(low, score, np.inf).min()
        gap = m - M
        if gap < tol or it >= max_iter:
            break
        Ki = kernel.row(i)
        cand = low & (score < m)
        b = m - score
        a = 1.0 + 1.0 - 2.0 * Ki  # RBF diagonal is 1
        a = np.where(a > 0, a, TAU)
        obj = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(obj))
        Kj = kernel.row(j)

        yi, yj = y[i], y[j]
        ai_old, aj_old = alpha[i], alpha[j]
        Kij = Ki[j]
        quad = max(2.0 - 2.0 * Kij, TAU)
        if yi != yj:
            delta = (-G[i] - G[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            delta = (G[i] - G[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        G += y * (yi * (ai - ai_old) * Ki + yj * (aj - aj_old) * Kj)
        it += 1

    converged = gap < tol
    if not converged:
        logger.warning("SMO stopped at the %d-iteration cap with gap %.3g", max_iter, gap)
    return SmoResult(alpha, _rho(alpha, y, G, C), it, float(gap), converged)


def _rho(alpha, y, G, C) -> float:
    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(yG[free].mean())
    at_upper = alpha >= C
    ub_mask = np.where(at_upper, y < 0, y > 0)
    ub = yG[ub_mask].min() if ub_mask.any() else np.inf
    lb = yG[~ub_mask].max() if (~ub_mask).any() else -np.inf
    if not np.isfinite(ub):
        return float(lb)
    if not np.isfinite(lb):
        return float(ub)
    return float((ub + lb) / 2)


@dataclass
class BinaryMachine:
    label: Stance
    support: np.ndarray          # indices into the training rows
    dual_coef: np.ndarray        # alpha_i * y_i for the support vectors
    rho: float
    n_iter: int = 0
    kkt_gap: float = 0.0
    alpha: np.ndarray | None = field(default=None, repr=False)   # full vector, fit-time only


class SvmModel:
    """One-vs-rest RBF SVM. Classes are always held in AGAINST, FAVOR, NONE
    order so predictions do not depend on the order labels were seen."""

    VERSION = 1

    def __init__(self, classes: Sequence[Stance], machines: Sequence[BinaryMachine],
                 support_vectors, C: float, gamma: float):
        self.classes = tuple(classes)
        self.machines = list(machines)
        self.support_vectors = support_vectors
        self.C = C
        self.gamma = gamma

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]

    def decision_function(self, X) -> np.ndarray:
        """Per-class decision values, shape (n, n_classes)."""
        X = _as_matrix(X)
        if X.shape[1] != self.n_features:
            raise ValueError(f"dimension mismatch: model has {self.n_features} features, got {X.shape[1]}")
        K = rbf_matrix(X, self.support_vectors, self.gamma)
        return np.column_stack([K[:, m.support] @ m.dual_coef - m.rho for m in self.machines])

    def predict_many(self, X) -> list[Prediction]:
        S = self.decision_function(X)
        out = []
        for row in S:
            scores = dict(zip(self.classes, row.tolist()))
            out.append(Prediction(argmax_label(scores), Source.RELATIONAL, scores))
        return out

    def to_json(self) -> str:
        sv = self.support_vectors
        if sparse.issparse(sv):
            sv_json = {"format": "csr", "shape": list(sv.shape), "data": sv.data.tolist(),
                       "indices": sv.indices.tolist(), "indptr": sv.indptr.tolist()}
        else:
            sv_json = {"format": "dense", "shape": list(sv.shape), "rows": sv.tolist()}
        return json.dumps({
            "version": self.VERSION,
            "kernel": {"type": "rbf", "gamma": self.gamma},
            "C": self.C,
            "classes": [c.value for c in self.classes],
            "support_vectors": sv_json,
            "machines": [
                {"label": m.label.value, "support": m.support.tolist(), "dual_coef": m.dual_coef.tolist(),
                 "rho": m.rho, "n_iter": m.n_iter, "kkt_gap": m.kkt_gap}
                for m in self.machines
            ],
        })

    @classmethod
    def from_json(cls, text: str) -> "SvmModel":
        data = json.loads(text)
        if data.get("version") != cls.VERSION:
            raise ValueError(f"unsupported SVM model version {data.get('version')!r}")
        sv = data["support_vectors"]
        if sv["format"] == "csr":
            vectors = sparse.csr_matrix((sv["data"], sv["indices"], sv["indptr"]), shape=tuple(sv["shape"]))
        else:
            vectors = np.array(sv["rows"], dtype=np.float64).reshape(sv["shape"])
        machines = [
            BinaryMachine(Stance(m["label"]), np.array(m["support"], dtype=np.int64),
                          np.array(m["dual_coef"]), m["rho"], m["n_iter"], m["kkt_gap"])
            for m in data["machines"]
        ]
        return cls([Stance(c) for c in data["classes"]], machines, vectors,
                   data["C"], data["kernel"]["gamma"])


def svm_fit(X, y: Sequence[Stance], C: float = 1.0, gamma: float = 1.0, tol: float = DEFAULT_TOL,
            cache_bytes: int = DEFAULT_CACHE_BYTES) -> SvmModel:
    """Train one binary machine per class present in ``y``.

    The SMO iteration cap per machine is ``10 * n * n_classes``.
    """
    if C <= 0 or gamma <= 0:
        raise ValueError("C and gamma must be positive")
    X = _as_matrix(X)
    y = [Stance(c) for c in y]
    if X.shape[0] != len(y):
        raise ValueError("X and y differ in length")
    classes = tuple(c for c in STANCES if c in set(y))
    if len(classes) < 2:
        raise ValueError("need at least two distinct labels to train an SVM")

    n = len(y)
    labels = np.array([c.value for c in y])
    kernel = KernelRows(X, gamma, cache_bytes)
    cap = 10 * n * len(classes)
    results = []
    for c in classes:
        yc = np.where(labels == c.value, 1.0, -1.0)
        res = smo(kernel, yc, C, tol, cap)
        results.append((c, yc, res))

    # support vectors are shared: keep the union, re-index each machine into it
    used = np.flatnonzero(np.any([r.alpha > 0 for _, _, r in results], axis=0))
    remap = {int(old): new for new, old in enumerate(used)}
    machines = []
    for c, yc, res in results:
        sv = np.flatnonzero(res.alpha > 0)
        machines.append(BinaryMachine(
            label=c,
            support=np.array([remap[int(i)] for i in sv], dtype=np.int64),
            dual_coef=res.alpha[sv] * yc[sv],
            rho=res.rho,
            n_iter=res.n_iter,
            kkt_gap=res.gap,
            alpha=res.alpha,
        ))
    return SvmModel(classes, machines, X[used], C, gamma)


def svm_predict(model: SvmModel, x) -> Prediction:
    """Decision value per class; label is the argmax with the fixed tie order."""
    if hasattr(x, "to_dense"):
        x = x.to_dense()
    if not sparse.issparse(x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("svm_predict takes a single vector")
    return model.predict_many(x)[0]
