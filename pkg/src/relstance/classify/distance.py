"""Nearest-community rule: a query vector gets the class whose training
vectors are, on average, most similar to it."""
from __future__ import annotations

import json
from typing import Iterable

import numpy as np

from ..data_io import STANCES, LabeledTweet, Split, Stance
from ..relemb import RelationalEmbedding
from .common import Prediction, Source, argmax_label

SIMILARITIES = ("cosine", "negative-euclidean")


class ClassDistanceModel:
    VERSION = 1

    def __init__(self, banks: dict[Stance, np.ndarray], similarity: str = "cosine"):
        if similarity not in SIMILARITIES:
            raise ValueError(f"unknown similarity {similarity!r}")
        self.similarity = similarity
        self.banks: dict[Stance, np.ndarray] = {}
        for c in STANCES:
            bank = np.asarray(banks.get(c, np.zeros((0, 0))), dtype=np.float64)
            if bank.size and not np.all(np.linalg.norm(bank, axis=1) > 0):
                raise ValueError(f"zero vector in the {c.value} bank")
            self.banks[c] = bank
        if not any(len(b) for b in self.banks.values()):
            raise ValueError("every class bank is empty")
        # rows pre-normalized once; cosine then reduces to a mean of dot products
        self._unit = {c: b / np.linalg.norm(b, axis=1, keepdims=True) for c, b in self.banks.items() if len(b)}

    @property
    def classes(self) -> tuple[Stance, ...]:
        """Classes with a non-empty bank; the others never win."""
        return tuple(c for c in STANCES if len(self.banks[c]))

    def bank_sizes(self) -> dict[Stance, int]:
        return {c: len(b) for c, b in self.banks.items()}

    def scores(self, b: np.ndarray) -> dict[Stance, float]:
        b = np.asarray(b, dtype=np.float64).ravel()
        norm = np.linalg.norm(b)
        if not norm > 0:
            raise ValueError("query vector is zero; route it to the textual back-off instead")
        out = {}
        for c in self.classes:
            if self.similarity == "cosine":
                out[c] = float(np.mean(self._unit[c] @ (b / norm)))
            else:
                out[c] = float(-np.mean(np.linalg.norm(self.banks[c] - b, axis=1)))
        return out

    def to_json(self) -> str:
        return json.dumps({
            "version": self.VERSION,
            "similarity": self.similarity,
            "banks": {c.value: b.tolist() for c, b in self.banks.items() if len(b)},
        })

    @classmethod
    def from_json(cls, text: str) -> "ClassDistanceModel":
        data = json.loads(text)
        if data.get("version") != cls.VERSION:
            raise ValueError(f"unsupported class-distance model version {data.get('version')!r}")
        banks = {Stance(k): np.array(v) for k, v in data["banks"].items()}
        return cls(banks, data["similarity"])


def cdist_fit(train: Iterable[LabeledTweet], emb: RelationalEmbedding,
              similarity: str = "cosine") -> ClassDistanceModel:
    """Bank the author vector of every TRAIN tweet under the tweet's label.

    A user with several labeled tweets contributes once per tweet; tweets by
    users missing from the embedding are skipped.
    """
    rows: dict[Stance, list[np.ndarray]] = {c: [] for c in STANCES}
    for t in train:
        if t.split != Split.TRAIN or not emb.is_known(t.author):
            continue
        vec = emb.lookup(t.author)
        if np.any(vec):
            rows[t.stance].append(vec)
    banks = {c: np.vstack(v) if v else np.zeros((0, emb.dim)) for c, v in rows.items()}
    return ClassDistanceModel(banks, similarity)


def cdist_predict(model: ClassDistanceModel, b: np.ndarray) -> Prediction:
    scores = model.scores(b)
    return Prediction(argmax_label(scores), Source.RELATIONAL, scores)
