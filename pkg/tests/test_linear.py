import numpy as np
import pytest

from prodtax.features import DocVector
from prodtax.linear import LinearModel, ovr_objective, predict_linear, train_linear_ovr


def two_blobs(seed=0, n=10):
    rng = np.random.default_rng(seed)
    a = rng.normal([-3.0, -2.0], 0.4, size=(n, 2))
    b = rng.normal([3.0, 2.0], 0.4, size=(n, 2))
    return np.vstack([a, b]), ["neg"] * n + ["pos"] * n


def separating_gap(X, y):
    """Brute-force widest gap over a grid of directions (exhaustive margin check)."""
    y = np.array([1 if l == "pos" else -1 for l in y])
    best = -np.inf
    for theta in np.linspace(0, np.pi * 2, 3600, endpoint=False):
        proj = X @ np.array([np.cos(theta), np.sin(theta)])
        best = max(best, proj[y == 1].min() - proj[y == -1].max())
    return best


def test_separable_blob_fits_perfectly():
    X, y = two_blobs()
    # margin >= 1 on each side means a gap of at least 2 along some direction
    assert separating_gap(X, y) >= 2.0
    model = train_linear_ovr(X, y, C=1.0, epochs=30, seed=0)
    assert [predict_linear(model, x)[0] for x in X] == y


def test_docvectors_accepted():
    X, y = two_blobs(1)
    model = train_linear_ovr([DocVector(x, 0.0) for x in X], y)
    assert model.dimension == 2 and model.C == 1.0


def test_deterministic():
    X, y = two_blobs(2)
    a = train_linear_ovr(X, y, seed=7)
    b = train_linear_ovr(X, y, seed=7)
    assert np.array_equal(a.weights, b.weights) and np.array_equal(a.biases, b.biases)
    assert a.history == b.history


def test_objective_trends_down():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(120, 5))
    y = [str(int(v)) for v in np.argmax(X[:, :3] + rng.normal(0, 0.5, size=(120, 3)), axis=1)]
    model = train_linear_ovr(X, y, epochs=40, seed=1)
    h = model.history
    assert np.mean(h[-10:]) <= np.mean(h[:10])
    assert h[-1] <= h[0]


def test_objective_value():
    X = np.array([[1.0, 0.0], [0.0, 1.0]])
    Y = np.array([[1.0, -1.0], [-1.0, 1.0]])
    W = np.zeros((2, 3))
    # zero weights: every hinge is exactly 1
    assert ovr_objective(X, Y, W, lam=0.5) == 2.0


def test_multiclass_labels_sorted():
    X = np.array([[0.0, 5.0], [5.0, 0.0], [-5.0, -5.0]] * 4)
    y = ["b", "c", "a"] * 4
    model = train_linear_ovr(X, y, epochs=50)
    assert model.labels == ("a", "b", "c")
    assert [predict_linear(model, x)[0] for x in X[:3]] == ["b", "c", "a"]


def test_heavy_regularization_flattens_scores():
    X, y = two_blobs(4)
    model = train_linear_ovr(X, y, C=1e-8, epochs=5)
    assert np.abs(model.decision_function(X)).max() < 1e-3


def test_errors():
    with pytest.raises(ValueError, match="two distinct"):
        train_linear_ovr(np.zeros((3, 2)), ["a"] * 3)
    with pytest.raises(ValueError, match="mixed dimensions"):
        train_linear_ovr([np.zeros(2), np.zeros(3)], ["a", "b"])
    model = LinearModel(np.zeros((2, 2)), np.zeros(2), ("a", "b"))
    with pytest.raises(ValueError, match="dimension"):
        predict_linear(model, np.zeros(3))


def test_all_tie_goes_to_first_label():
    model = LinearModel(np.zeros((3, 2)), np.zeros(3), ("x", "y", "z"))
    label, scores = predict_linear(model, np.array([1.0, -1.0]))
    assert label == "x" and scores.tolist() == [0.0, 0.0, 0.0]


def test_argmax_and_scale_invariance():
    W = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
    b = np.array([0.0, 0.5, 0.0])
    x = np.array([0.2, 0.9])
    assert predict_linear(LinearModel(W, b, ("p", "q", "r")), x)[0] == "q"
    for k in (1e-3, 2.0, 1e6):
        assert predict_linear(LinearModel(k * W, k * b, ("p", "q", "r")), x)[0] == "q"
