"""Tweet tokenization, TF-IDF vectors and averaged word vectors."""
from __future__ import annotations

import json
import math
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .data_io import WordVectorTable

URL_TOKEN = "<url>"
_KEEP_PREFIX = "#@"


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, trim punctuation (keeping leading
    ``#``/``@``), and collapse URLs to ``<url>``."""
    tokens = []
    for raw in text.lower().split():
        if raw.startswith(("http://", "https://")):
            tokens.append(URL_TOKEN)
            continue
        start, end = 0, len(raw)
        while start < end and _is_punct(raw[start]) and raw[start] not in _KEEP_PREFIX:
            start += 1
        while end > start and _is_punct(raw[end - 1]):
            end -= 1
        tok = raw[start:end]
        if tok and tok not in _KEEP_PREFIX:
            tokens.append(tok)
    return tokens


@dataclass(frozen=True)
class SparseVector:
    dim: int
    indices: tuple[int, ...] = ()
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.indices) != len(self.values):
            raise ValueError("indices and values differ in length")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("indices must be strictly increasing")
        if self.indices and (self.indices[0] < 0 or self.indices[-1] >= self.dim):
            raise ValueError("index out of range")
        if any(v == 0 for v in self.values):
            raise ValueError("explicit zeros are not stored")

    @property
    def entries(self) -> list[tuple[int, float]]:
        return list(zip(self.indices, self.values))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[list(self.indices)] = self.values
        return out

    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.values))


class TfIdfModel:
    """Fitted vocabulary and smoothed idf weights. Never mutated after fit."""

    VERSION = 1

    def __init__(self, vocabulary: dict[str, int], idf: Sequence[float], n_docs: int,
                 max_features: int | None = None):
        self.vocabulary = dict(vocabulary)
        self.idf = np.asarray(idf, dtype=np.float64)
        self.idf.flags.writeable = False
        self.n_docs = n_docs
        self.max_features = max_features
        if sorted(self.vocabulary.values()) != list(range(len(self.vocabulary))):
            raise ValueError("vocabulary indices must be contiguous from 0")
        if len(self.idf) != len(self.vocabulary):
            raise ValueError("idf length does not match vocabulary")

    @property
    def dim(self) -> int:
        return len(self.vocabulary)

    def idf_of(self, token: str) -> float:
        return float(self.idf[self.vocabulary[token]])

    def to_json(self) -> str:
        terms = sorted(self.vocabulary, key=self.vocabulary.__getitem__)
        return json.dumps({
            "version": self.VERSION,
            "vocabulary": terms,
            "idf": self.idf.tolist(),
            "n_docs": self.n_docs,
            "max_features": self.max_features,
        })

    @classmethod
    def from_json(cls, text: str) -> "TfIdfModel":
        data = json.loads(text)
        if data.get("version") != cls.VERSION:
            raise ValueError(f"unsupported TF-IDF model version {data.get('version')!r}")
        vocab = {t: i for i, t in enumerate(data["vocabulary"])}
        return cls(vocab, data["idf"], data["n_docs"], data.get("max_features"))


def fit_tfidf(corpus: Sequence[Sequence[str]], max_features: int | None = None) -> TfIdfModel:
    """idf(t) = ln((1 + N) / (1 + df(t))) + 1.

    With ``max_features`` only the most frequent tokens (total count, ties
    broken lexicographically) are kept. Columns are in lexicographic order.
    """
    if not corpus:
        raise ValueError("cannot fit TF-IDF on an empty corpus")
    if max_features is not None and max_features < 1:
        raise ValueError("max_features must be positive")
    n_docs = len(corpus)
    df: Counter[str] = Counter()
    tf: Counter[str] = Counter()
    for doc in corpus:
        tf.update(doc)
        df.update(set(doc))
    terms = sorted(df)
    if max_features is not None and len(terms) > max_features:
        terms = sorted(sorted(terms, key=lambda t: (-tf[t], t))[:max_features])
    vocab = {t: i for i, t in enumerate(terms)}
    idf = [math.log((1 + n_docs) / (1 + df[t])) + 1.0 for t in terms]
    return TfIdfModel(vocab, idf, n_docs, max_features)


def _weights(model: TfIdfModel, tokens: Iterable[str]) -> tuple[list[int], np.ndarray]:
    vocab = model.vocabulary
    counts = Counter(vocab[t] for t in tokens if t in vocab)
    if not counts:
        return [], np.zeros(0)
    cols = sorted(counts)
    vals = np.array([counts[c] * model.idf[c] for c in cols])
    return cols, vals / np.linalg.norm(vals)


def transform_tfidf(model: TfIdfModel, tokens: Iterable[str]) -> SparseVector:
    """Raw count times idf, L2-normalized; unknown tokens are ignored."""
    cols, vals = _weights(model, tokens)
    return SparseVector(model.dim, tuple(cols), tuple(float(v) for v in vals))


def tfidf_matrix(model: TfIdfModel, docs: Iterable[Iterable[str]]) -> sparse.csr_matrix:
    """Row-stacked :func:`transform_tfidf` for a batch of token lists."""
    data, indices, indptr = [], [], [0]
    for doc in docs:
        cols, vals = _weights(model, doc)
        indices.extend(cols)
        data.extend(vals.tolist())
        indptr.append(len(indices))
    return sparse.csr_matrix((data, indices, indptr), shape=(len(indptr) - 1, model.dim))


def avg_word_vectors(tokens: Iterable[str], table: WordVectorTable) -> tuple[np.ndarray, int]:
    """Mean vector of the in-vocabulary tokens and the number of hits."""
    hits = [table.entries[t] for t in tokens if t in table.entries]
    if not hits:
        return np.zeros(table.dim), 0
    return np.mean(hits, axis=0), len(hits)


# --------------------------------------------------------------------------
# featurizers: fit on training texts, then map any text to a feature row


class TfIdfFeaturizer:
    kind = "tfidf"

    def __init__(self, max_features: int | None = None):
        self.max_features = max_features
        self.model: TfIdfModel | None = None

    def fit(self, texts: Sequence[str]) -> "TfIdfFeaturizer":
        self.model = fit_tfidf([tokenize(t) for t in texts], self.max_features)
        return self

    @property
    def dim(self) -> int:
        return self.model.dim

    def transform(self, texts: Sequence[str]) -> sparse.csr_matrix:
        return tfidf_matrix(self.model, (tokenize(t) for t in texts))


class AvgVecFeaturizer:
    kind = "avgvec"

    def __init__(self, table: WordVectorTable):
        self.table = table

    def fit(self, texts: Sequence[str]) -> "AvgVecFeaturizer":
        return self

    @property
    def dim(self) -> int:
        return self.table.dim

    def transform(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.table.dim))
        for i, t in enumerate(texts):
            out[i], _ = avg_word_vectors(tokenize(t), self.table)
        return out
