"""Named stance systems: relemb-svm, tfidf-svm, ftemb-svm, and their
``backoff:<textual>`` and ``ensemble:<textual>`` combinations."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

from .classify import (
    BackoffClassifier,
    EnsembleClassifier,
    Prediction,
    RelEmbClassifier,
    TextClassifier,
    cdist_fit,
)
from .data_io import LabeledTweet, WordVectorTable
from .relemb import RelationalEmbedding
from .textfeat import AvgVecFeaturizer, TfIdfFeaturizer

log = logging.getLogger(__name__)

TEXTUAL = ("tfidf-svm", "ftemb-svm")
SYSTEMS = ("relemb-svm", *TEXTUAL,
           *(f"backoff:{t}" for t in TEXTUAL), *(f"ensemble:{t}" for t in TEXTUAL))

DEFAULT_C = 10.0
DEFAULT_GAMMA = 1.0


@dataclass(frozen=True)
class SystemSpec:
    name: str
    kind: str                 # relemb | text | backoff | ensemble
    textual: str | None = None

    @property
    def needs_embedding(self) -> bool:
        return self.kind != "text"

    @property
    def needs_wordvecs(self) -> bool:
        return self.textual == "ftemb-svm"


def parse_system(name: str) -> SystemSpec:
    name = name.strip().lower()
    if name == "relemb-svm":
        return SystemSpec(name, "relemb")
    if name in TEXTUAL:
        return SystemSpec(name, "text", name)
    kind, _, textual = name.partition(":")
    if kind in ("backoff", "ensemble") and textual in TEXTUAL:
        return SystemSpec(name, kind, textual)
    raise ValueError(f"unknown system {name!r}; choose from {', '.join(SYSTEMS)}")


def make_featurizer(textual: str, wordvecs: WordVectorTable | None = None, max_features: int | None = None):
    if textual == "tfidf-svm":
        return TfIdfFeaturizer(max_features)
    if textual == "ftemb-svm":
        if wordvecs is None:
            raise ValueError("ftemb-svm needs a word-vector table")
        return AvgVecFeaturizer(wordvecs)
    raise ValueError(f"unknown textual system {textual!r}")


def fit_system(system: str | SystemSpec, train: Sequence[LabeledTweet], emb: RelationalEmbedding | None = None,
               wordvecs: WordVectorTable | None = None, C: float = DEFAULT_C, gamma: float = DEFAULT_GAMMA,
               max_features: int | None = None, similarity: str = "cosine"):
    """Fit a system on training tweets; the result has ``predict(tweets)``.

    Only the texts and labels of ``train`` are used for fitting.
    """
    spec = parse_system(system) if isinstance(system, str) else system
    if spec.needs_embedding and emb is None:
        raise ValueError(f"{spec.name} needs a relational embedding")
    if spec.kind == "relemb":
        return RelEmbClassifier(emb, C, gamma).fit(train)
    featurizer = make_featurizer(spec.textual, wordvecs, max_features)
    if spec.kind == "ensemble":
        return EnsembleClassifier(featurizer, emb, C, gamma).fit(train)
    text = TextClassifier(featurizer, C, gamma).fit(train)
    if spec.kind == "text":
        return text
    try:
        rel = cdist_fit(train, emb, similarity)
    except ValueError as err:
        if "empty" not in str(err):
            raise
        log.warning("no training author has a relational vector; all tweets use the text classifier")
        rel = None
    return BackoffClassifier(rel, text, emb)


def run_system(system: str | SystemSpec, train: Sequence[LabeledTweet], test: Sequence[LabeledTweet],
               **kwargs) -> list[Prediction]:
    return fit_system(system, train, **kwargs).predict(list(test))
