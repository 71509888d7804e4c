"""Brute-force k-nearest-neighbors reference classifier.

Only here so the pipeline can run end to end without an external model. The
monitor itself never looks at the model; it consumes predicted labels.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_count, check_features, check_labels
from .ecdf import Dataset
from .exceptions import EmptySample, InvalidConfig, SchemaMismatch

_CHUNK = 1024


class KnnClassifier(ClassifierMixin, BaseEstimator):
    """Majority vote over the ``n_neighbors`` closest training rows (Euclidean).

    Ties are resolved deterministically: equal distances favor the lower
    training row index, equal votes favor the smaller class id. Each query
    costs O(n_train * n_features).
    """

    def __init__(self, n_neighbors=5):
        self.n_neighbors = n_neighbors

    def fit(self, X, y):
        X = check_features(X)
        y = check_labels(y, X.shape[0])
        if X.shape[0] == 0:
            raise EmptySample("cannot fit on an empty training set")
        k = check_count(self.n_neighbors, "n_neighbors", minimum=1)
        if k > X.shape[0]:
            raise InvalidConfig(f"n_neighbors={k} exceeds the {X.shape[0]} training rows")
        self.X_ = X.copy()
        self.y_ = y.copy()
        self._sq_norms = (X * X).sum(axis=1)
        self.classes_ = np.unique(y)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "X_")
        X = check_features(X)
        if X.shape[1] != self.n_features_in_:
            raise SchemaMismatch(
                f"query has {X.shape[1]} features, model was fit on {self.n_features_in_}"
            )
        k = self.n_neighbors
        n_classes = int(self.y_.max()) + 1
        out = np.empty(X.shape[0], dtype=np.int64)
        for start in range(0, X.shape[0], _CHUNK):
            q = X[start:start + _CHUNK]
            # squared distance minus the per-query constant |q|^2; same ordering
            d2 = self._sq_norms[None, :] - 2.0 * (q @ self.X_.T)
            nearest = np.argpartition(d2, k - 1, axis=1)[:, :k]
            kth = np.take_along_axis(d2, nearest, axis=1).max(axis=1)
            # rows with a tie straddling the k-th place are redone with a stable sort
            crowded = np.flatnonzero((d2 <= kth[:, None]).sum(axis=1) > k)
            for i in crowded:
                nearest[i] = np.argsort(d2[i], kind="stable")[:k]
            labels = self.y_[nearest]
            votes = (labels[:, :, None] == np.arange(n_classes)).sum(axis=1)
            out[start:start + q.shape[0]] = np.argmax(votes, axis=1)
        return out


def knn_fit(train: Dataset, k: int = 5) -> KnnClassifier:
    return KnnClassifier(n_neighbors=k).fit(train.features, train.labels)


def knn_predict(model: KnnClassifier, features) -> int:
    """Predicted class of a single feature vector."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 1:
        raise SchemaMismatch("knn_predict takes a single feature vector")
    return int(model.predict(features.reshape(1, -1))[0])
