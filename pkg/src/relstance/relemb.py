"""Relational embeddings trained from (source, target) interaction pairs.

Every pair is one training instance: the source user's input vector is trained
to predict the target user through a single hidden layer, with the softmax
replaced by negative sampling. No context windows and no random walks; the
observed pairs are the whole corpus.
"""
from __future__ import annotations

import enum
import json
import logging
import math
import threading
from collections import Counter
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from .data_io import InteractionPair, InteractionSet, Kind

logger = logging.getLogger(__name__)

MAX_DOT = 30.0
MAX_RESAMPLE = 100


class Mode(str, enum.Enum):
    RETWEET = "RETWEET"
    FRIENDS = "FRIENDS"
    MIXED = "MIXED"


def build_corpus(retweets: InteractionSet, friends: InteractionSet, mode: Mode | str) -> InteractionSet:
    """Select the training pairs for one embedding type (multiset union for MIXED)."""
    mode = mode if isinstance(mode, Mode) else Mode(str(mode).upper())
    if mode is Mode.RETWEET:
        pairs = list(retweets)
    elif mode is Mode.FRIENDS:
        pairs = list(friends)
    else:
        pairs = list(retweets) + list(friends)
    if not pairs:
        raise ValueError(f"no interaction pairs available for mode {mode.value}")
    return InteractionSet(pairs)


# --------------------------------------------------------------------------
# vocabulary and sampling distributions


@dataclass(frozen=True)
class Vocab:
    users: tuple[str, ...]
    index: dict[str, int]
    source_freq: np.ndarray
    target_freq: np.ndarray

    @property
    def U(self) -> int:
        return len(self.users)

    @property
    def freq(self) -> np.ndarray:
        return self.source_freq + self.target_freq

    def __contains__(self, user: str) -> bool:
        return user in self.index


def build_vocab(pairs: Iterable[InteractionPair]) -> Vocab:
    """Index users in order of first appearance and count source/target slots."""
    index: dict[str, int] = {}
    src_count: Counter[str] = Counter()
    tgt_count: Counter[str] = Counter()
    for p in pairs:
        for u in (p.source, p.target):
            if u not in index:
                index[u] = len(index)
        src_count[p.source] += 1
        tgt_count[p.target] += 1
    if not index:
        raise ValueError("cannot build a vocabulary from an empty interaction set")
    users = tuple(index)
    return Vocab(
        users=users,
        index=index,
        source_freq=np.array([src_count[u] for u in users], dtype=np.int64),
        target_freq=np.array([tgt_count[u] for u in users], dtype=np.int64),
    )


def negative_table(vocab: Vocab, alpha: float = 0.75) -> np.ndarray:
    """Probability of drawing each user as a negative, proportional to
    ``target_freq ** alpha``. Users never seen as a target get probability 0."""
    freq = vocab.target_freq.astype(np.float64)
    seen = freq > 0
    weights = np.zeros_like(freq)
    weights[seen] = freq[seen] ** alpha
    return weights / weights.sum()


def _discount(f: np.ndarray | float, t: float):
    ratio = t / np.asarray(f, dtype=np.float64)
    return np.minimum(1.0, np.sqrt(ratio) + ratio)


def keep_probability(user: str, vocab: Vocab, t: float) -> float:
    """Chance that a pair whose target is ``user`` survives subsampling."""
    if t <= 0:
        raise ValueError("subsampling threshold must be positive")
    n = vocab.target_freq[vocab.index[user]]
    if n == 0:
        return 1.0
    f = n / vocab.target_freq.sum()
    return float(_discount(f, t))


def _pair_keep_probs(src: np.ndarray, tgt: np.ndarray, vocab: Vocab, t: float, unit: str) -> np.ndarray:
    if unit == "target":
        f = vocab.target_freq / vocab.target_freq.sum()
        with np.errstate(divide="ignore"):
            per_user = np.where(f > 0, _discount(np.maximum(f, 1e-300), t), 1.0)
        return per_user[tgt]
    if unit == "pair":
        key = src.astype(np.int64) * vocab.U + tgt
        _, inverse, counts = np.unique(key, return_inverse=True, return_counts=True)
        return _discount(counts[inverse] / len(src), t)
    raise ValueError(f"unknown subsample unit {unit!r}")


def _draw(cdf: np.ndarray, rng: np.random.Generator, size) -> np.ndarray:
    idx = np.searchsorted(cdf, rng.random(size), side="right")
    return np.minimum(idx, len(cdf) - 1)


# --------------------------------------------------------------------------
# configuration and state


@dataclass
class TrainConfig:
    dim: int = 20
    epochs: int = 15
    initial_lr: float = 0.025
    negatives_k: int = 5
    subsample_t: float = 1e-3
    ns_power: float = 0.75
    seed: int = 1
    min_lr: float = 1e-4
    threads: int = 1
    subsample_unit: str = "target"

    def validate(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.initial_lr > 0:
            raise ValueError("initial_lr must be > 0")
        if not 0 <= self.min_lr <= self.initial_lr:
            raise ValueError("min_lr must lie in [0, initial_lr]")
        if self.negatives_k < 1:
            raise ValueError("negatives_k must be >= 1")
        if not 0 < self.subsample_t <= 1:
            raise ValueError("subsample_t must lie in (0, 1]")
        if not 0 <= self.ns_power <= 1:
            raise ValueError("ns_power must lie in [0, 1]")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.subsample_unit not in ("target", "pair"):
            raise ValueError("subsample_unit must be 'target' or 'pair'")

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainerState:
    """Input matrix ``W`` (the user vectors) and output matrix ``W_out``."""

    vocab: Vocab
    W: np.ndarray
    W_out: np.ndarray
    step: int = 0

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    @classmethod
    def initial(cls, vocab: Vocab, dim: int, rng: np.random.Generator) -> "TrainerState":
        W = (rng.random((vocab.U, dim)) - 0.5) / dim
        return cls(vocab, W, np.zeros((vocab.U, dim)))


class TrainingError(FloatingPointError):
    pass


def _signs(n_rows: int) -> np.ndarray:
    sign = -np.ones(n_rows)
    sign[0] = 1.0
    return sign


def _sgns_update(W: np.ndarray, W_out: np.ndarray, s: int, rows: list[int], lr: float,
                 sign: np.ndarray | None = None) -> float:
    # rows[0] is the true target, the rest are negatives
    if sign is None or len(sign) != len(rows):
        sign = _signs(len(rows))
    w = W[s]
    out = W_out[rows]
    z = (out @ w) * sign
    if not np.isfinite(z).all():
        raise TrainingError(f"non-finite score for source row {s}")
    np.clip(z, -MAX_DOT, MAX_DOT, out=z)
    # with e = exp(-z): -log s(z) = log1p(e) and label - s(x) = sign * e / (1 + e)
    e = np.exp(-z)
    loss = float(np.log1p(e).sum())
    g = (lr * sign) * (e / (1.0 + e))
    dw = g @ out
    upd = np.outer(g, w)
    if len(set(rows)) == len(rows):
        W_out[rows] += upd
    else:
        np.add.at(W_out, rows, upd)
    W[s] += dw
    return loss


def sgns_step(state: TrainerState, pair: tuple[int, int], negatives: Sequence[int], lr: float) -> float:
    """Apply one SGD step for ``pair = (source_row, target_row)``.

    The pair loss is ``-log s(w_s . w'_t) - sum_n log s(-w_s . w'_n)``. Only
    ``W[source]`` and the ``W_out`` rows of the target and negatives change.
    Returns the loss evaluated before the update.
    """
    if not lr > 0:
        raise ValueError("learning rate must be positive")
    s, t = int(pair[0]), int(pair[1])
    rows = [t, *(int(n) for n in negatives)]
    U = state.W.shape[0]
    if not 0 <= s < U or any(not 0 <= r < U for r in rows):
        raise IndexError("user row out of range")
    loss = _sgns_update(state.W, state.W_out, s, rows, lr)
    state.step += 1
    return loss


def pair_loss(w_source: np.ndarray, out_rows: np.ndarray) -> float:
    """Loss of one pair given the source vector and the stacked target/negative
    output vectors (target first). Used for monitoring and gradient checks."""
    x = np.clip(out_rows @ w_source, -MAX_DOT, MAX_DOT)
    return float(np.logaddexp(0.0, -x[0]) + np.logaddexp(0.0, x[1:]).sum())


# --------------------------------------------------------------------------
# embedding


class RelationalEmbedding:
    """Immutable user -> vector map; unknown users look up as the zero vector."""

    def __init__(self, users: Sequence[str], vectors: np.ndarray):
        vectors = np.array(vectors, dtype=np.float64, copy=True)
        if vectors.ndim != 2 or vectors.shape[0] != len(users):
            raise ValueError("vectors must be a (U, D) matrix with one row per user")
        if vectors.shape[1] < 1:
            raise ValueError("embedding dimension must be >= 1")
        if not np.isfinite(vectors).all():
            raise ValueError("embedding contains non-finite values")
        self.users: tuple[str, ...] = tuple(users)
        self.index = {u: i for i, u in enumerate(self.users)}
        if len(self.index) != len(self.users):
            raise ValueError("duplicate user ids in embedding")
        vectors.flags.writeable = False
        self.vectors = vectors

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.users)

    def __contains__(self, user: str) -> bool:
        return user in self.index

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RelationalEmbedding):
            return NotImplemented
        return self.users == other.users and np.array_equal(self.vectors, other.vectors)

    def is_known(self, user: str) -> bool:
        return user in self.index

    def lookup(self, user: str) -> np.ndarray:
        i = self.index.get(user)
        if i is None:
            return np.zeros(self.dim)
        return self.vectors[i].copy()

    def lookup_many(self, users: Iterable[str]) -> np.ndarray:
        users = list(users)
        out = np.zeros((len(users), self.dim))
        for r, u in enumerate(users):
            i = self.index.get(u)
            if i is not None:
                out[r] = self.vectors[i]
        return out


# --------------------------------------------------------------------------
# training


class Trainer:
    """Epoch-by-epoch SGNS trainer over an interaction multiset.

    ``threads > 1`` runs unsynchronized workers on shared matrices: faster in
    principle, but results are no longer reproducible.
    """

    def __init__(self, pairs: InteractionSet, cfg: TrainConfig):
        cfg.validate()
        self.cfg = cfg
        self.vocab = build_vocab(pairs)
        self.rng = np.random.default_rng(cfg.seed)
        self.state = TrainerState.initial(self.vocab, cfg.dim, self.rng)
        idx = self.vocab.index
        self.src = np.array([idx[p.source] for p in pairs], dtype=np.int64)
        self.tgt = np.array([idx[p.target] for p in pairs], dtype=np.int64)
        self.cdf = np.cumsum(negative_table(self.vocab, cfg.ns_power))
        self.keep = _pair_keep_probs(self.src, self.tgt, self.vocab, cfg.subsample_t, cfg.subsample_unit)
        self.total_steps = cfg.epochs * len(self.src)
        self.processed = 0
        self.epoch = 0

    def lr_at(self, processed: int) -> float:
        cfg = self.cfg
        frac = min(processed / self.total_steps, 1.0)
        return max(cfg.initial_lr - (cfg.initial_lr - cfg.min_lr) * frac, cfg.min_lr)

    def _negatives(self, targets: np.ndarray) -> list[list[int]]:
        k = self.cfg.negatives_k
        draws = _draw(self.cdf, self.rng, (len(targets), k))
        out: list[list[int]] = []
        for t, row in zip(targets.tolist(), draws.tolist()):
            if t in row:
                fixed = []
                for n in row:
                    tries = 0
                    while n == t and tries < MAX_RESAMPLE:
                        n = int(_draw(self.cdf, self.rng, 1)[0])
                        tries += 1
                    if n != t:
                        fixed.append(n)
                row = fixed
            out.append(row)
        return out

    def _run(self, order: np.ndarray, kept: np.ndarray, negs: list[list[int]], start: int, losses: list[float]):
        W, W_out = self.state.W, self.state.W_out
        src, tgt = self.src.tolist(), self.tgt.tolist()
        cfg = self.cfg
        lr0, decay = cfg.initial_lr, (cfg.initial_lr - cfg.min_lr) / self.total_steps
        sign = _signs(1 + cfg.negatives_k)
        kept = kept.tolist()
        for j, i in enumerate(order.tolist()):
            if not kept[j]:
                continue
            lr = max(lr0 - decay * (start + j), cfg.min_lr)
            losses.append(_sgns_update(W, W_out, src[i], [tgt[i], *negs[j]], lr, sign))

    def run_epoch(self) -> float:
        """Train one pass over all pairs; returns the mean pre-update loss."""
        if self.epoch >= self.cfg.epochs:
            raise RuntimeError("all scheduled epochs have already run")
        n = len(self.src)
        order = self.rng.permutation(n)
        kept = self.rng.random(n) < self.keep[order]
        negs = self._negatives(self.tgt[order])
        start = self.processed

        threads = self.cfg.threads
        if threads == 1:
            losses: list[float] = []
            self._run(order, kept, negs, start, losses)
        else:
            chunks = np.array_split(np.arange(n), threads)
            per_thread: list[list[float]] = [[] for _ in chunks]
            workers = [
                threading.Thread(
                    target=self._run,
                    args=(order[c], kept[c], [negs[j] for j in c.tolist()], start + (c[0] if len(c) else 0), acc),
                )
                for c, acc in zip(chunks, per_thread)
            ]
            for w in workers:
                w.start()
            for w in workers:
                w.join()
            losses = [x for acc in per_thread for x in acc]

        self.processed += n
        self.epoch += 1
        self.state.step += len(losses)
        lr = self.lr_at(self.processed)
        if not losses:
            logger.warning("epoch %d: every pair was removed by subsampling", self.epoch)
            return math.nan
        mean = float(np.mean(losses))
        logger.info("epoch %d/%d mean loss %.6f lr %.6f", self.epoch, self.cfg.epochs, mean, lr)
        return mean

    def embedding(self) -> RelationalEmbedding:
        return RelationalEmbedding(self.vocab.users, self.state.W)


def train(pairs: InteractionSet, cfg: TrainConfig) -> RelationalEmbedding:
    """Train relational embeddings and return the input matrix as user vectors."""
    trainer = Trainer(pairs, cfg)
    for _ in range(cfg.epochs):
        trainer.run_epoch()
    return trainer.embedding()


def mean_loss(state: TrainerState, pairs: InteractionSet, cfg: TrainConfig) -> float:
    """Average pair loss over ``pairs`` with negatives drawn from ``cfg.seed``.

    Nothing is updated, so repeated calls on the same state agree exactly.
    """
    if len(pairs) == 0:
        raise ValueError("mean loss of an empty pair list is undefined")
    idx = state.vocab.index
    src = np.array([idx[p.source] for p in pairs], dtype=np.int64)
    tgt = np.array([idx[p.target] for p in pairs], dtype=np.int64)
    rng = np.random.default_rng(cfg.seed)
    cdf = np.cumsum(negative_table(state.vocab, cfg.ns_power))
    negs = _draw(cdf, rng, (len(src), cfg.negatives_k))
    rows = np.concatenate([tgt[:, None], negs], axis=1)
    x = np.einsum("pd,pkd->pk", state.W[src], state.W_out[rows])
    np.clip(x, -MAX_DOT, MAX_DOT, out=x)
    losses = np.logaddexp(0.0, -x[:, 0]) + np.logaddexp(0.0, x[:, 1:]).sum(axis=1)
    return float(losses.mean())
