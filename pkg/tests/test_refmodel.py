import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.neighbors import KNeighborsClassifier

from scopeguard import Dataset, KnnClassifier, generate, knn_fit, knn_predict, separable_scenario
from scopeguard.exceptions import InvalidConfig, SchemaMismatch


def test_one_nn_reproduces_training_labels(rng):
    X = rng.normal(size=(80, 3))
    y = rng.integers(0, 4, size=80)
    model = knn_fit(Dataset(X, y), k=1)
    np.testing.assert_array_equal(model.predict(X), y)
    assert knn_predict(model, X[7]) == y[7]


def test_vote_tie_goes_to_smaller_class():
    model = knn_fit(Dataset(np.array([[0.0], [2.0]]), [1, 0]), k=2)
    assert knn_predict(model, [1.0]) == 0


def test_distance_tie_goes_to_lower_row_index():
    # query equidistant from rows 0 (class 2) and 1 (class 0); k=1 keeps row 0
    model = knn_fit(Dataset(np.array([[-1.0], [1.0], [9.0]]), [2, 0, 1]), k=1)
    assert knn_predict(model, [0.0]) == 2


def test_errors():
    train = Dataset(np.zeros((3, 2)), [0, 1, 1])
    with pytest.raises(InvalidConfig):
        knn_fit(train, k=4)
    model = knn_fit(train, k=1)
    with pytest.raises(SchemaMismatch):
        knn_predict(model, [1.0, 2.0, 3.0])
    with pytest.raises(SchemaMismatch):
        model.predict(np.zeros((2, 3)))


def test_agrees_with_sklearn_brute_force(rng):
    X = rng.normal(size=(300, 4))
    y = rng.integers(0, 3, size=300)
    Q = rng.normal(size=(500, 4))
    ours = KnnClassifier(n_neighbors=5).fit(X, y).predict(Q)
    ref = KNeighborsClassifier(n_neighbors=5, algorithm="brute").fit(X, y).predict(Q)
    np.testing.assert_array_equal(ours, ref)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_rotation_and_translation_invariance(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 3))
    y = rng.integers(0, 3, size=40)
    Q = rng.normal(size=(20, 3))
    R, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    shift = rng.normal(size=3)
    a = KnnClassifier(3).fit(X, y).predict(Q)
    b = KnnClassifier(3).fit(X @ R + shift, y).predict(Q @ R + shift)
    np.testing.assert_array_equal(a, b)


def test_separable_scenario_accuracy():
    train, test, _ = generate(separable_scenario(seed=0))
    acc = np.mean(knn_fit(train, 5).predict(test.features) == test.labels)
    assert acc >= 0.99


def test_estimator_api():
    est = KnnClassifier(n_neighbors=3)
    assert est.get_params() == {"n_neighbors": 3}
    assert clone(est).n_neighbors == 3
    X = np.array([[0.0], [0.1], [5.0], [5.1]])
    y = np.array([0, 0, 1, 1])
    assert est.fit(X, y).score(X, y) == 1.0
    # fit has no randomness
    np.testing.assert_array_equal(est.predict(X), KnnClassifier(3).fit(X, y).predict(X))
