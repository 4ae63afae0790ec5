"""Stance metrics, k-fold splits and the grid search over embeddings and SVM
hyperparameters."""
from __future__ import annotations

import enum
import itertools
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .data_io import STANCES, InteractionSet, LabeledTweet, Stance, WordVectorTable
from .relemb import Mode, TrainConfig, build_corpus, train
from .systems import parse_system, run_system

logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# metrics


class ConfusionMatrix:
    """Counts indexed (gold, predicted) over AGAINST, FAVOR, NONE."""

    def __init__(self, counts: np.ndarray | None = None):
        self.counts = np.zeros((3, 3), dtype=np.int64) if counts is None else np.asarray(counts, dtype=np.int64)

    @classmethod
    def from_labels(cls, gold: Sequence[Stance], pred: Sequence[Stance]) -> "ConfusionMatrix":
        if len(gold) != len(pred):
            raise ValueError(f"gold and predicted labels differ in length ({len(gold)} vs {len(pred)})")
        cm = cls()
        pos = {s: i for i, s in enumerate(STANCES)}
        for g, p in zip(gold, pred):
            cm.counts[pos[Stance(g)], pos[Stance(p)]] += 1
        return cm

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_tsv(self) -> str:
        lines = ["gold\\pred\t" + "\t".join(s.value for s in STANCES)]
        for s, row in zip(STANCES, self.counts):
            lines.append(s.value + "\t" + "\t".join(str(int(v)) for v in row))
        return "\n".join(lines) + "\n"


@dataclass
class EvalReport:
    f1_against: float
    f1_favor: float
    f1_avg: float
    precision: dict[str, float]
    recall: dict[str, float]
    n: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    # 2PR/(P+R) written over counts, which avoids two rounded divisions
    f = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
    return p, r, f


def f1_favor_against(gold: Sequence[Stance], pred: Sequence[Stance]) -> EvalReport:
    """Mean of the FAVOR and AGAINST F1 scores; an undefined F1 counts as 0."""
    cm = ConfusionMatrix.from_labels(gold, pred)
    c = cm.counts
    precision, recall, f1 = {}, {}, {}
    for i, s in enumerate(STANCES):
        tp = int(c[i, i])
        fp = int(c[:, i].sum()) - tp
        fn = int(c[i, :].sum()) - tp
        precision[s.value], recall[s.value], f1[s] = _prf(tp, fp, fn)
    fa, ff = f1[Stance.AGAINST], f1[Stance.FAVOR]
    return EvalReport(fa, ff, (fa + ff) / 2, precision, recall, cm.total)


# --------------------------------------------------------------------------
# cross-validation splits


class FoldMode(str, enum.Enum):
    BY_TWEET = "BY_TWEET"
    BY_USER = "BY_USER"


def kfold_split(records: Sequence[LabeledTweet], k: int, seed: int = 0,
                mode: FoldMode | str = FoldMode.BY_TWEET) -> list[tuple[np.ndarray, np.ndarray]]:
    """Return k ``(train_idx, val_idx)`` pairs over ``records``.

    BY_TWEET deals tweets round-robin within each label (stratified);
    BY_USER deals whole authors, so no author is on both sides of a fold.
    """
    mode = mode if isinstance(mode, FoldMode) else FoldMode(str(mode).upper())
    if k < 2:
        raise ValueError("need at least 2 folds")
    rng = np.random.default_rng(seed)
    n = len(records)
    fold_of = np.empty(n, dtype=np.int64)
    if mode is FoldMode.BY_TWEET:
        if k > n:
            raise ValueError(f"{k} folds requested but only {n} tweets")
        slot = 0
        for s in STANCES:
            idx = np.array([i for i, r in enumerate(records) if r.stance == s], dtype=np.int64)
            for i in rng.permutation(idx).tolist():
                fold_of[i] = slot % k
                slot += 1
    else:
        authors = sorted({r.author for r in records})
        if k > len(authors):
            raise ValueError(f"{k} folds requested but only {len(authors)} authors")
        user_fold = {authors[j]: pos % k for pos, j in enumerate(rng.permutation(len(authors)).tolist())}
        fold_of[:] = [user_fold[r.author] for r in records]
    everything = np.arange(n)
    return [(everything[fold_of != f], everything[fold_of == f]) for f in range(k)]


# --------------------------------------------------------------------------
# grid search


@dataclass
class GridSpec:
    dims: list[int] = field(default_factory=lambda: [10, 20])
    Cs: list[float] = field(default_factory=lambda: [1.0, 10.0])
    gammas: list[float] = field(default_factory=lambda: [0.1, 1.0])
    folds: int = 5
    seed: int = 0
    modes: list[Mode] = field(default_factory=lambda: list(Mode))
    fold_mode: FoldMode = FoldMode.BY_TWEET

    def validate(self) -> None:
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if not (self.dims and self.Cs and self.gammas and self.modes):
            raise ValueError("grid lists must be non-empty")


@dataclass
class CvRow:
    system: str
    mode: str | None
    dim: int | None
    C: float
    gamma: float
    fold_f1: list[float]

    @property
    def mean_f1(self) -> float:
        return float(np.mean(self.fold_f1))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean_f1"] = self.mean_f1
        return d


@dataclass
class GridResult:
    best: CvRow
    table: list[CvRow]

    def to_json(self) -> str:
        return json.dumps({"best": self.best.to_dict(), "table": [r.to_dict() for r in self.table]},
                          indent=2) + "\n"


_MODE_ORDER = {m.value: i for i, m in enumerate(Mode)}


def _rank_key(row: CvRow):
    # best mean first, then smaller dim, C, gamma
    return (-row.mean_f1, row.dim or 0, row.C, row.gamma, _MODE_ORDER.get(row.mode, -1))


def grid_search(records: Sequence[LabeledTweet], retweets: InteractionSet, friends: InteractionSet,
                grid: GridSpec, system: str = "relemb-svm", train_cfg: TrainConfig | None = None,
                wordvecs: WordVectorTable | None = None) -> GridResult:
    """Cross-validate every grid cell on ``records`` (the training tweets).

    Systems using relational data span embedding mode x dim x C x gamma;
    text-only systems span C x gamma. Embeddings are unsupervised and are
    trained once per (mode, dim) on the full interaction data.
    """
    grid.validate()
    spec = parse_system(system)
    records = list(records)
    folds = kfold_split(records, grid.folds, grid.seed, grid.fold_mode)
    base = train_cfg or TrainConfig()

    if spec.needs_embedding:
        emb_cells = []
        for mode in grid.modes:
            try:
                corpus = build_corpus(retweets, friends, mode)
            except ValueError:
                logger.warning("skipping mode %s: no interaction pairs", Mode(mode).value)
                continue
            for dim in grid.dims:
                cfg = replace(base, dim=dim, seed=grid.seed)
                emb_cells.append((Mode(mode).value, dim, train(corpus, cfg)))
        if not emb_cells:
            raise ValueError("no embedding could be trained for any mode")
    else:
        emb_cells = [(None, None, None)]

    table = []
    for (mode, dim, emb), C, gamma in itertools.product(emb_cells, grid.Cs, grid.gammas):
        scores = []
        for tr, va in folds:
            tr_rec = [records[i] for i in tr]
            va_rec = [records[i] for i in va]
            preds = run_system(spec, tr_rec, va_rec, emb=emb, wordvecs=wordvecs, C=C, gamma=gamma)
            scores.append(f1_favor_against([r.stance for r in va_rec], [p.label for p in preds]).f1_avg)
        row = CvRow(spec.name, mode, dim, C, gamma, scores)
        logger.info("cv %s mode=%s dim=%s C=%g gamma=%g mean f1=%.4f", spec.name, mode, dim, C, gamma, row.mean_f1)
        table.append(row)
    best = min(table, key=_rank_key)
    return GridResult(best, table)


def format_table(rows: Sequence[CvRow]) -> str:
    header = ("system", "mode", "dim", "C", "gamma", "mean_f1", "folds")
    body = [(r.system, r.mode or "-", "-" if r.dim is None else str(r.dim), f"{r.C:g}", f"{r.gamma:g}",
             f"{r.mean_f1:.4f}", " ".join(f"{s:.4f}" for s in r.fold_f1)) for r in rows]
    widths = [max(len(x) for x in col) for col in zip(header, *body)]
    return "\n".join("  ".join(x.ljust(w) for x, w in zip(line, widths)).rstrip()
                     for line in (header, *body)) + "\n"
