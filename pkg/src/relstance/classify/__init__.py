from .combine import (
    BackoffClassifier,
    EnsembleClassifier,
    RelEmbClassifier,
    TextClassifier,
    backoff_predict,
    concat_features,
    ensemble_fit,
)
from .common import Prediction, Source, argmax_label
from .distance import ClassDistanceModel, cdist_fit, cdist_predict
from .svm import SvmModel, rbf_kernel, svm_fit, svm_predict

__all__ = [
    "BackoffClassifier", "ClassDistanceModel", "EnsembleClassifier", "Prediction",
    "RelEmbClassifier", "Source", "SvmModel", "TextClassifier", "argmax_label",
    "backoff_predict", "cdist_fit", "cdist_predict", "concat_features", "ensemble_fit",
    "rbf_kernel", "svm_fit", "svm_predict",
]
