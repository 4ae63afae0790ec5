"""Stance systems built from the SVM and the class-distance rule: text-only,
relational-only, back-off, and concatenation ensembles."""
from __future__ import annotations

from dataclasses import replace
from typing import Sequence

import numpy as np
from scipy import sparse

from ..data_io import LabeledTweet
from ..relemb import RelationalEmbedding
from ..textfeat import SparseVector
from .common import Prediction, Source
from .distance import ClassDistanceModel, cdist_predict
from .svm import SvmModel, svm_fit


def _relabel(preds: list[Prediction], source: Source) -> list[Prediction]:
    return [replace(p, source=source) for p in preds]


class TextClassifier:
    """Featurizer (TF-IDF or averaged word vectors) followed by an RBF SVM."""

    def __init__(self, featurizer, C: float = 1.0, gamma: float = 1.0):
        self.featurizer = featurizer
        self.C = C
        self.gamma = gamma
        self.svm: SvmModel | None = None

    def fit(self, tweets: Sequence[LabeledTweet]) -> "TextClassifier":
        texts = [t.text for t in tweets]
        self.featurizer.fit(texts)
        self.svm = svm_fit(self.featurizer.transform(texts), [t.stance for t in tweets], self.C, self.gamma)
        return self

    def predict(self, tweets: Sequence[LabeledTweet]) -> list[Prediction]:
        if not tweets:
            return []
        X = self.featurizer.transform([t.text for t in tweets])
        return _relabel(self.svm.predict_many(X), Source.TEXTUAL)


class RelEmbClassifier:
    """SVM over author vectors only; unknown authors become zero vectors."""

    def __init__(self, emb: RelationalEmbedding, C: float = 1.0, gamma: float = 1.0):
        self.emb = emb
        self.C = C
        self.gamma = gamma
        self.svm: SvmModel | None = None

    def fit(self, tweets: Sequence[LabeledTweet]) -> "RelEmbClassifier":
        X = self.emb.lookup_many(t.author for t in tweets)
        self.svm = svm_fit(X, [t.stance for t in tweets], self.C, self.gamma)
        return self

    def predict(self, tweets: Sequence[LabeledTweet]) -> list[Prediction]:
        if not tweets:
            return []
        return self.svm.predict_many(self.emb.lookup_many(t.author for t in tweets))


def backoff_predict(rel: ClassDistanceModel, txt, tweet: LabeledTweet,
                    emb: RelationalEmbedding) -> Prediction:
    """Class-distance rule when the author has relational data, otherwise the
    textual classifier. Zero vectors never reach the distance rule."""
    if emb.is_known(tweet.author):
        vec = emb.lookup(tweet.author)
        if np.any(vec):
            return cdist_predict(rel, vec)
    pred = txt.predict([tweet])[0]
    return replace(pred, source=Source.TEXTUAL_BACKOFF)


class BackoffClassifier:
    def __init__(self, rel: ClassDistanceModel | None, txt, emb: RelationalEmbedding):
        # rel is None when no training author had a vector; every tweet then backs off
        self.rel = rel
        self.txt = txt
        self.emb = emb

    def predict(self, tweets: Sequence[LabeledTweet]) -> list[Prediction]:
        out: list[Prediction | None] = [None] * len(tweets)
        fallback = []
        for i, t in enumerate(tweets):
            vec = self.emb.lookup(t.author)
            if self.rel is not None and self.emb.is_known(t.author) and np.any(vec):
                out[i] = cdist_predict(self.rel, vec)
            else:
                fallback.append(i)
        if fallback:
            preds = self.txt.predict([tweets[i] for i in fallback])
            for i, p in zip(fallback, preds):
                out[i] = replace(p, source=Source.TEXTUAL_BACKOFF)
        return out


def concat_features(text_vec, rel_vec: np.ndarray | None, D: int) -> np.ndarray:
    """``text_vec`` followed by the relational vector, or by D zeros when the
    author has no relational data. Sparse text vectors are densified."""
    if isinstance(text_vec, SparseVector):
        text_vec = text_vec.to_dense()
    elif sparse.issparse(text_vec):
        text_vec = text_vec.toarray().ravel()
    text_vec = np.asarray(text_vec, dtype=np.float64).ravel()
    if not np.isfinite(text_vec).all():
        raise ValueError("text vector contains non-finite values")
    if rel_vec is None:
        rel_vec = np.zeros(D)
    rel_vec = np.asarray(rel_vec, dtype=np.float64).ravel()
    if rel_vec.shape[0] != D:
        raise ValueError(f"relational vector has dimension {rel_vec.shape[0]}, expected {D}")
    return np.concatenate([text_vec, rel_vec])


def _concat_rows(T, R: np.ndarray):
    # row-wise concat_features for a batch; a sparse text block stays sparse
    if sparse.issparse(T):
        return sparse.hstack([T, sparse.csr_matrix(R)], format="csr")
    return np.hstack([np.asarray(T), R])


class EnsembleClassifier:
    """One SVM over [textual features | author vector] rows."""

    def __init__(self, featurizer, emb: RelationalEmbedding, C: float = 1.0, gamma: float = 1.0):
        self.featurizer = featurizer
        self.emb = emb
        self.C = C
        self.gamma = gamma
        self.svm: SvmModel | None = None

    def features(self, tweets: Sequence[LabeledTweet]):
        T = self.featurizer.transform([t.text for t in tweets])
        R = self.emb.lookup_many(t.author for t in tweets)
        return _concat_rows(T, R)

    @property
    def dim(self) -> int:
        return self.featurizer.dim + self.emb.dim

    def fit(self, tweets: Sequence[LabeledTweet]) -> "EnsembleClassifier":
        self.featurizer.fit([t.text for t in tweets])
        self.svm = svm_fit(self.features(tweets), [t.stance for t in tweets], self.C, self.gamma)
        return self

    def predict(self, tweets: Sequence[LabeledTweet]) -> list[Prediction]:
        if not tweets:
            return []
        return _relabel(self.svm.predict_many(self.features(tweets)), Source.ENSEMBLE)


def ensemble_fit(train: Sequence[LabeledTweet], featurizer, emb: RelationalEmbedding,
                 C: float = 1.0, gamma: float = 1.0) -> EnsembleClassifier:
    """Fit ``featurizer`` on the training texts only, then the SVM on the
    concatenated rows. The fitted SVM is ``result.svm``."""
    return EnsembleClassifier(featurizer, emb, C, gamma).fit(train)
