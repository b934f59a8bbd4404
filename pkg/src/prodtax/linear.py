"""One-vs-rest linear SVM trained with Pegasos-style stochastic subgradient steps."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

__all__ = ["LinearModel", "predict_linear", "train_linear_ovr", "ovr_objective"]


@dataclass(eq=False)
class LinearModel:
    weights: np.ndarray
    biases: np.ndarray
    labels: tuple[str, ...]
    C: float = 1.0
    history: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.shape[0] != len(self.labels) or self.biases.shape != (len(self.labels),):
            raise ValueError("weight rows and biases must match the label count")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.biases))):
            raise ValueError("non-finite linear model parameters")

    @property
    def dimension(self) -> int:
        return int(self.weights.shape[1])

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dimension:
            raise ValueError(f"expected vectors of dimension {self.dimension}, got {X.shape[1]}")
        return X @ self.weights.T + self.biases


def _as_matrix(vectors) -> np.ndarray:
    rows = [getattr(v, "values", v) for v in vectors]
    dims = {np.shape(r)[-1] for r in rows}
    if len(dims) > 1:
        raise ValueError(f"vectors have mixed dimensions {sorted(dims)}")
    return np.asarray(rows, dtype=np.float64)


def ovr_objective(X: np.ndarray, Y: np.ndarray, W: np.ndarray, lam: float) -> float:
    """Sum over classes of ``lam/2 |w|^2 + mean hinge``; ``W`` holds the bias column."""
    Xa = np.hstack([X, np.ones((len(X), 1))])
    margins = Y * (Xa @ W.T)
    hinge = np.maximum(0.0, 1.0 - margins).mean(axis=0)
    return float(np.sum(0.5 * lam * np.sum(W * W, axis=1) + hinge))


def train_linear_ovr(
    vectors: Sequence,
    labels: Sequence[str],
    C: float = 1.0,
    epochs: int = 30,
    seed: int = 0,
) -> LinearModel:
    """Fit one binary hinge-loss model per class, the rest being negatives.

    The primal objective per class is ``1/2 |w|^2 + C * sum(hinge)``, i.e.
    Pegasos with ``lambda = 1 / (C n)`` and step ``1 / (lambda t)``. The bias
    is learned as the weight of a constant feature. All K problems share one
    seeded sample order, so they are updated together.
    """
    X = _as_matrix(vectors)
    labels = [str(l) for l in labels]
    if len(labels) != len(X):
        raise ValueError("vectors and labels differ in length")
    classes = tuple(sorted(set(labels)))
    if len(classes) < 2:
        raise ValueError("need at least two distinct labels to train")
    if C <= 0 or epochs < 1:
        raise ValueError("C and epochs must be positive")
    n, d = X.shape
    pos = {c: i for i, c in enumerate(classes)}
    Y = -np.ones((n, len(classes)))
    Y[np.arange(n), [pos[l] for l in labels]] = 1.0
    Xa = np.hstack([X, np.ones((n, 1))])

    lam = 1.0 / (C * n)
    radius = 1.0 / np.sqrt(lam)
    W = np.zeros((len(classes), d + 1))
    rng = np.random.default_rng(seed)
    history = []
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            x, y = Xa[i], Y[i]
            active = y * (W @ x) < 1.0
            W *= 1.0 - eta * lam
            W[active] += (eta * y[active])[:, None] * x
            norms = np.linalg.norm(W, axis=1)
            over = norms > radius
            if np.any(over):
                W[over] *= (radius / norms[over])[:, None]
        history.append(ovr_objective(X, Y, W, lam))
    return LinearModel(weights=W[:, :d].copy(), biases=W[:, d].copy(), labels=classes, C=C, history=history)


def predict_linear(model: LinearModel, vector) -> tuple[str, np.ndarray]:
    """Label with the highest score; ties go to the earliest label."""
    scores = model.decision_function(getattr(vector, "values", vector))[0]
    return model.labels[int(np.argmax(scores))], scores
