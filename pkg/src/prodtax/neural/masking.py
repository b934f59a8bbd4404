"""Hierarchy mask and the dynamic masked softmax over subcategories.

For a category row ``c`` of the mask ``M`` the subcategory distribution is

    P(s) = (exp(O_s) M[c, s] + exp(-8)) / sum_s' (exp(O_s') M[c, s'] + exp(-8))

with the smoothing constant added once per subcategory, so the vector sums
to one. Evaluation shifts every exponent by ``max(max unmasked O, -8)``,
which leaves the value unchanged and keeps every exponential <= 1.
"""

from __future__ import annotations

import warnings

import numpy as np

from ..corpus import Taxonomy

__all__ = [
    "SMOOTHING_LOG",
    "DegenerateMaskWarning",
    "build_mask",
    "masked_softmax",
    "masked_softmax_batch",
    "masked_softmax_nll_grad",
    "softmax",
]

SMOOTHING_LOG = -8.0


class DegenerateMaskWarning(RuntimeWarning):
    """A mask row without any admissible subcategory was used."""


def build_mask(taxonomy: Taxonomy) -> np.ndarray:
    """Binary ``C x S`` matrix with ``M[c, s] = 1`` iff ``s`` belongs to ``c``."""
    M = np.zeros((taxonomy.n_categories, taxonomy.n_subcategories), dtype=np.float64)
    M[list(taxonomy.parent), np.arange(taxonomy.n_subcategories)] = 1.0
    return M


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _masked_terms(O: np.ndarray, M: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shifted numerator terms ``a`` (masked exps), ``eps`` and the normalizer."""
    allowed = M > 0
    top = np.where(allowed, O, -np.inf).max(axis=-1, keepdims=True)
    shift = np.maximum(top, SMOOTHING_LOG)
    a = np.where(allowed, np.exp(np.where(allowed, O, shift) - shift), 0.0)
    eps = np.exp(SMOOTHING_LOG - shift)
    Z = a.sum(axis=-1, keepdims=True) + O.shape[-1] * eps
    return a, eps, Z


def masked_softmax_batch(logits: np.ndarray, mask_rows: np.ndarray) -> np.ndarray:
    O = np.asarray(logits, dtype=np.float64)
    M = np.asarray(mask_rows, dtype=np.float64)
    if O.shape != M.shape:
        raise ValueError(f"logits {O.shape} and mask rows {M.shape} differ in shape")
    if not np.all(M.any(axis=-1)):
        warnings.warn("mask row admits no subcategory; returning uniform smoothing", DegenerateMaskWarning, stacklevel=2)
    a, eps, Z = _masked_terms(O, M)
    return (a + eps) / Z


def masked_softmax(logits, mask_row) -> np.ndarray:
    """Dynamic masked softmax of one logit vector under one mask row."""
    O = np.asarray(logits, dtype=np.float64)
    M = np.asarray(mask_row, dtype=np.float64)
    if O.ndim != 1 or O.shape != M.shape:
        raise ValueError("logits and mask_row must be vectors of equal length")
    if not np.all(np.isfinite(O)):
        raise ValueError("logits must be finite")
    if not M.any():
        warnings.warn("mask row admits no subcategory; returning uniform smoothing", DegenerateMaskWarning, stacklevel=2)
    a, eps, Z = _masked_terms(O[None, :], M[None, :])
    return ((a + eps) / Z)[0]


def masked_softmax_nll_grad(
    logits: np.ndarray, mask_rows: np.ndarray, gold: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-row ``-log P(gold)`` and its gradient with respect to the logits.

    d(-log P_g)/dO_j = a_j / Z - [j = g] a_g / (a_g + eps), which is exactly
    zero wherever the mask is zero.
    """
    O = np.asarray(logits, dtype=np.float64)
    M = np.asarray(mask_rows, dtype=np.float64)
    a, eps, Z = _masked_terms(O, M)
    rows = np.arange(O.shape[0])
    P = (a + eps) / Z
    nll = -np.log(P[rows, gold])
    grad = a / Z
    ag = a[rows, gold]
    grad[rows, gold] -= ag / (ag + eps[:, 0])
    return nll, grad
