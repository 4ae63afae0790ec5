"""2D PCA of user vectors and stance-colored SVG scatter plots."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, TextIO
from xml.sax.saxutils import escape

import numpy as np

from .data_io import STANCES, Stance

POWER_TOL = 1e-10
POWER_MAX_ITER = 10_000


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray          # (k, D), orthonormal rows
    explained_variance: np.ndarray  # (k,), descending

    def transform(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return (X - self.mean) @ self.components.T

    def inverse_transform(self, Y) -> np.ndarray:
        return np.atleast_2d(np.asarray(Y, dtype=np.float64)) @ self.components + self.mean


def _orthogonalize(v: np.ndarray, basis: list[np.ndarray]) -> np.ndarray:
    # two passes of classical Gram-Schmidt keep the loss of orthogonality at rounding level
    for _ in range(2):
        for b in basis:
            v = v - (b @ v) * b
    return v


def _fallback_direction(D: int, basis: list[np.ndarray]) -> np.ndarray:
    for j in range(D):
        e = np.zeros(D)
        e[j] = 1.0
        v = _orthogonalize(e, basis)
        n = np.linalg.norm(v)
        if n > 1e-6:
            return v / n
    raise ValueError("cannot extend the basis")  # unreachable while len(basis) < D


def _power_vector(cov: np.ndarray, basis: list[np.ndarray], rng: np.random.Generator) -> np.ndarray:
    D = cov.shape[0]
    scale = max(float(np.trace(cov)), 1e-300)
    v = _orthogonalize(rng.standard_normal(D), basis)
    v /= np.linalg.norm(v)
    for _ in range(POWER_MAX_ITER):
        w = _orthogonalize(cov @ v, basis)
        n = np.linalg.norm(w)
        if n <= 1e-14 * scale:
            # remaining spectrum is numerically zero; any orthogonal direction will do
            return _fallback_direction(D, basis) if n == 0 else w / n
        lam = v @ cov @ v
        if np.linalg.norm(cov @ v - lam * v) <= POWER_TOL * scale:
            return v
        v = w / n
    return v


def pca_fit(X, k: int = 2, seed: int = 0) -> PcaModel:
    """Top-k principal components of the rows of ``X``.

    Components come from a deflated power method followed by a small
    Rayleigh-Ritz step that fixes their order. Each component is signed so
    that its largest-magnitude entry is positive.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D matrix")
    n, D = X.shape
    if n < 2:
        raise ValueError(f"PCA needs at least 2 points, got {n}")
    if not 1 <= k <= D:
        raise ValueError(f"k must lie in [1, {D}]")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (n - 1)

    rng = np.random.default_rng(seed)
    basis: list[np.ndarray] = []
    for _ in range(k):
        basis.append(_power_vector(cov, basis, rng))
    V = np.array(basis)

    evals, rot = np.linalg.eigh(V @ cov @ V.T)
    order = np.argsort(-evals, kind="stable")
    comps = rot[:, order].T @ V
    comps /= np.linalg.norm(comps, axis=1, keepdims=True)
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    var = np.maximum(np.einsum("kd,de,ke->k", comps, cov, comps), 0.0)
    return PcaModel(mean, comps, var)


# --------------------------------------------------------------------------
# SVG output

PALETTE = {Stance.AGAINST: "#d62728", Stance.FAVOR: "#1f77b4", Stance.NONE: "#7f7f7f"}
WIDTH, HEIGHT, MARGIN = 640, 480, 50


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def emit_scatter(points, labels: Sequence[Stance | str], stream: TextIO, title: str = "") -> None:
    """Write a deterministic SVG scatter of 2D ``points`` colored by stance."""
    P = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    labels = [Stance(l) for l in labels]
    if len(labels) != len(P):
        raise ValueError("one label per point required")

    plot_w, plot_h = WIDTH - 2 * MARGIN - 110, HEIGHT - 2 * MARGIN
    if len(P):
        lo, hi = P.min(axis=0), P.max(axis=0)
    else:
        lo, hi = np.zeros(2), np.ones(2)
    span = np.where(hi - lo > 0, hi - lo, 1.0)

    def px(p):
        x = MARGIN + (p[0] - lo[0]) / span[0] * plot_w
        y = MARGIN + plot_h - (p[1] - lo[1]) / span[1] * plot_h
        return x, y

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH // 2}" y="25" text-anchor="middle" font-size="14">{escape(title)}</text>')
    x0, y0 = MARGIN, MARGIN + plot_h
    out.append(f'<g class="axes" stroke="black" stroke-width="1">'
               f'<line x1="{x0}" y1="{y0}" x2="{x0 + plot_w}" y2="{y0}"/>'
               f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{MARGIN}"/></g>')
    out.append(f'<text x="{x0 + plot_w / 2:.0f}" y="{y0 + 35}" text-anchor="middle" font-size="12">PC1</text>')
    out.append(f'<text x="{x0 - 35}" y="{MARGIN + plot_h / 2:.0f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 {x0 - 35} {MARGIN + plot_h / 2:.0f})">PC2</text>')
    for value, (x, y, anchor) in ((lo[0], (x0, y0 + 15, "start")), (hi[0], (x0 + plot_w, y0 + 15, "end")),
                                  (lo[1], (x0 - 5, y0, "end")), (hi[1], (x0 - 5, MARGIN + 4, "end"))):
        out.append(f'<text x="{x}" y="{y}" text-anchor="{anchor}" font-size="10">{value:.3g}</text>')

    out.append('<g class="points">')
    for p, lab in zip(P, labels):
        x, y = px(p)
        out.append(f'<circle class="marker" cx="{_fmt(x)}" cy="{_fmt(y)}" r="3" '
                   f'fill="{PALETTE[lab]}" fill-opacity="0.7"/>')
    out.append('</g>')

    lx, ly = WIDTH - MARGIN - 90, MARGIN
    out.append('<g class="legend" font-size="12">')
    for i, s in enumerate(STANCES):
        y = ly + 20 * i
        out.append(f'<g class="legend-entry"><rect x="{lx}" y="{y}" width="12" height="12" fill="{PALETTE[s]}"/>'
                   f'<text x="{lx + 18}" y="{y + 11}">{s.value}</text></g>')
    out.append('</g>')
    out.append('</svg>')
    stream.write("\n".join(out) + "\n")


def write_coordinates(users: Sequence[str], points, labels: Sequence[Stance | str], stream: TextIO) -> None:
    """TSV dump: user, x, y, label."""
    P = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    for u, (x, y), lab in zip(users, P, labels):
        stream.write(f"{u}\t{x:.9g}\t{y:.9g}\t{Stance(lab).value}\n")


def user_labels(tweets, users: Sequence[str] | None = None) -> dict[str, Stance]:
    """Majority stance per author (ties broken by the fixed label order)."""
    counts: dict[str, dict[Stance, int]] = {}
    for t in tweets:
        counts.setdefault(t.author, {s: 0 for s in STANCES})[t.stance] += 1
    out = {}
    for u, c in counts.items():
        if users is None or u in users:
            out[u] = max(STANCES, key=lambda s: (c[s], -STANCES.index(s)))
    return out
