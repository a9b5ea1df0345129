"""Counterfactual quality metrics, bootstrap intervals and integrated gradients."""

from __future__ import annotations

import enum
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from . import nn
from .cegen import CounterfactualResult
from .errors import InputError
from .nn import autodiff as ad

LENGTHSCALE = 0.5


def implausibility_ip(x_cf, X_ref) -> float:
    """Mean l1 distance from ``x_cf`` to the reference sample."""
    X_ref = np.atleast_2d(np.asarray(X_ref, dtype=np.float64))
    if X_ref.shape[0] == 0 or X_ref.size == 0:
        raise InputError("reference sample is empty")
    return float(np.abs(X_ref - np.asarray(x_cf, dtype=np.float64)).sum(axis=1).mean())


def gaussian_kernel(x, x2, lengthscale: float = LENGTHSCALE) -> float:
    d = np.asarray(x, dtype=np.float64) - np.asarray(x2, dtype=np.float64)
    return float(np.exp(-np.dot(d, d) / (2 * lengthscale**2)))


def _gram(A: np.ndarray, B: np.ndarray, lengthscale: float) -> np.ndarray:
    return np.exp(-cdist(A, B, "sqeuclidean") / (2 * lengthscale**2))


def mmd_unbiased(X, Y, lengthscale: float = LENGTHSCALE) -> float:
    """Unbiased squared MMD with a Gaussian kernel (diagonals excluded)."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    m, n = X.shape[0], Y.shape[0]
    if m < 2 or n < 2:
        raise InputError(f"unbiased MMD needs at least two samples per side, got {m} and {n}")
    Kxx = _gram(X, X, lengthscale)
    Kyy = _gram(Y, Y, lengthscale)
    Kxy = _gram(X, Y, lengthscale)
    xx = (Kxx.sum() - np.trace(Kxx)) / (m * (m - 1))
    yy = (Kyy.sum() - np.trace(Kyy)) / (n * (n - 1))
    return float(xx + yy - 2 * Kxy.mean())


def implausibility_ipstar(X_cf, X_ref, lengthscale: float = LENGTHSCALE) -> float:
    """Distributional implausibility: MMD between counterfactuals and the reference sample."""
    return mmd_unbiased(X_cf, X_ref, lengthscale)


def cost_l1(x_cf, x0) -> float:
    x_cf = np.asarray(x_cf, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    if x_cf.shape != x0.shape:
        raise InputError(f"shape mismatch: {x_cf.shape} vs {x0.shape}")
    return float(np.abs(x_cf - x0).sum())


def validity_rate(results: Sequence[CounterfactualResult], tau: float) -> float:
    """Fraction of results whose final target-class probability reaches ``tau``."""
    if len(results) == 0:
        raise InputError("no counterfactual results")
    return float(np.mean([r.target_prob >= tau for r in results]))


def bootstrap_percentile_ci(stats, alpha: float = 0.01) -> tuple[float, float, float, bool]:
    """Mean and percentile interval of per-round statistics.

    Quantiles use the nearest-rank convention, so both bounds are values of
    the input. Returns ``(mean, lb, ub, significant)`` where *significant*
    means the interval excludes zero.
    """
    s = np.asarray(stats, dtype=np.float64).ravel()
    if s.size < 2:
        raise InputError("need at least two rounds for an interval")
    if not 0 < alpha < 1:
        raise InputError(f"alpha must lie in (0, 1), got {alpha}")
    lb, ub = np.quantile(s, [alpha / 2, 1 - alpha / 2], method="inverted_cdf")
    return float(s.mean()), float(lb), float(ub), bool(lb > 0 or ub < 0)


class IgOutput(str, enum.Enum):
    PROBABILITY = "probability"
    LOGIT = "logit"


def integrated_gradients(model: nn.MlpModel, x, baseline, target: int | None = None, steps: int = 64,
                         output: IgOutput | str = IgOutput.PROBABILITY) -> np.ndarray:
    """Path attributions from ``baseline`` to ``x`` for one class.

    Uses a right-endpoint Riemann sum with ``steps`` points along the straight
    path. ``target`` defaults to the class predicted at ``x``.
    """
    if steps < 1:
        raise InputError("need at least one integration step")
    output = IgOutput(output)
    x = np.asarray(x, dtype=np.float64)
    b = np.asarray(baseline, dtype=np.float64)
    if x.shape != b.shape or x.ndim != 1:
        raise InputError(f"input {x.shape} and baseline {b.shape} must be matching vectors")
    c = int(np.argmax(nn.forward(model, x))) if target is None else int(target)
    alphas = np.arange(1, steps + 1, dtype=np.float64)[:, None] / steps
    path = b + alphas * (x - b)
    cls = np.full(steps, c)

    def f(logits, _):
        z = ad.pick(logits, cls)
        if output is IgOutput.LOGIT:
            return z.sum()
        return ad.exp(z - ad.logsumexp(logits)).sum()

    grads = nn.grad_input(model, path, f)
    return (x - b) * grads.mean(axis=0)


class IgScaling(str, enum.Enum):
    RANGE_RATIO = "range_ratio"
    MIN_MAX = "min_max"


def standardize_ig(g, mode: IgScaling | str = IgScaling.RANGE_RATIO) -> np.ndarray:
    """Rescale attributions so they are comparable across features.

    ``range_ratio`` takes ``|g| / (max g - min g)``, ``min_max`` maps onto
    [0, 1]. A constant vector maps to zeros under both.
    """
    g = np.asarray(g, dtype=np.float64)
    mode = IgScaling(mode)
    span = g.max() - g.min()
    if span == 0:
        return np.zeros_like(g)
    if mode is IgScaling.RANGE_RATIO:
        return np.abs(g) / span
    return (g - g.min()) / span
