"""Posterior mode of a Bernoulli parameter under soft observations.

Each observation is a Bayes factor ``kappa`` in ``[0, inf]`` and contributes
the factor ``kappa * p - p + 1`` to the unnormalized posterior; a Beta prior
contributes ``p**(alpha-1) * (1-p)**(beta-1)``.  ``kappa = inf`` is an exact
positive observation and contributes ``p``; ``kappa = 0`` contributes
``1 - p``.

The log-posterior is strictly concave on (0, 1) unless it is flat, so its
derivative is strictly decreasing and bisection on the derivative's sign
finds the unique mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BOUNDARY_EPS = 1e-12
WIDTH_TOL = 1e-12
MAX_BISECTIONS = 200


@dataclass(frozen=True, eq=False)
class SoftObservations:
    """Bayes factors with optional multiplicities plus Beta exponents.

    ``weights[i]`` counts how many identical copies of ``kappas[i]`` were
    observed; a weight of ``m`` is the same as repeating the entry ``m``
    times.
    """

    kappas: np.ndarray
    alpha: float = 1.0
    beta: float = 1.0
    weights: np.ndarray | None = None

    def __post_init__(self):
        k = np.array(self.kappas, dtype=float).reshape(-1)
        if np.any(np.isnan(k)) or np.any(k < 0.0):
            raise ValueError("Bayes factors must lie in [0, inf]")
        if self.alpha < 1.0 or self.beta < 1.0:
            raise ValueError("Beta exponents must be >= 1")
        w = np.ones_like(k) if self.weights is None else np.array(self.weights, dtype=float).reshape(-1)
        if w.shape != k.shape or np.any(w < 0.0):
            raise ValueError("weights must be non-negative, one per Bayes factor")
        object.__setattr__(self, "kappas", k)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))

    def is_flat(self) -> bool:
        return self.alpha == 1.0 and self.beta == 1.0 and bool(np.all((self.kappas == 1.0) | (self.weights == 0.0)))


def _split(kappas, weights, alpha, beta):
    """Fold infinite Bayes factors into the exponent of ``p``.

    Returns ``(a, b, k, w)`` with finite ``k``; entries that were infinite
    are replaced by the neutral value 1 with weight 0.
    """
    kappas = np.asarray(kappas, dtype=float)
    weights = np.asarray(weights, dtype=float)
    inf = np.isinf(kappas)
    a = np.asarray(alpha, dtype=float) - 1.0 + np.sum(np.where(inf, weights, 0.0), axis=-1)
    b = np.asarray(beta, dtype=float) - 1.0
    k = np.where(inf, 1.0, kappas)
    w = np.where(inf, 0.0, weights)
    return a, b, k, w


def _xlog(c, x):
    # c * log(x) with 0 * log(0) = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(c == 0.0, 0.0, c * np.log(x))


def log_objective(p: float, obs: SoftObservations) -> float:
    """Log of the unnormalized posterior density at ``p`` in [0, 1]."""
    a, b, k, w = _split(obs.kappas, obs.weights, obs.alpha, obs.beta)
    terms = _xlog(w, (k - 1.0) * p + 1.0)
    return float(_xlog(a, p) + _xlog(b, 1.0 - p) + np.sum(terms))


def _d1(p, a, b, k, w):
    slope = (k - 1.0) / ((k - 1.0) * p[..., None] + 1.0)
    return a / p - b / (1.0 - p) + np.sum(w * slope, axis=-1)


def _d2(p, a, b, k, w):
    slope = (k - 1.0) / ((k - 1.0) * p[..., None] + 1.0)
    return -a / p**2 - b / (1.0 - p) ** 2 - np.sum(w * slope**2, axis=-1)


def d_log_objective(p: float, obs: SoftObservations) -> float:
    """First derivative of :func:`log_objective`, for ``0 < p < 1``."""
    return float(_d1(np.asarray(p, float), *_split(obs.kappas, obs.weights, obs.alpha, obs.beta)))


def d2_log_objective(p: float, obs: SoftObservations) -> float:
    """Second derivative of :func:`log_objective`, for ``0 < p < 1``."""
    return float(_d2(np.asarray(p, float), *_split(obs.kappas, obs.weights, obs.alpha, obs.beta)))


def solve_modes(kappas: np.ndarray, weights: np.ndarray, alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Vectorized :func:`solve_mode` over the rows of ``kappas``.

    ``kappas`` and ``weights`` have shape ``(P, M)``; padding entries should
    carry weight 0.  ``alpha`` and ``beta`` have shape ``(P,)``.
    """
    kappas = np.atleast_2d(np.asarray(kappas, dtype=float))
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    a, b, k, w = _split(kappas, weights, np.asarray(alpha, float), np.asarray(beta, float))
    a = np.broadcast_to(a, kappas.shape[:1]).astype(float)
    b = np.broadcast_to(b, kappas.shape[:1]).astype(float)

    # drop neutral entries; shrink the observation axis when possible
    active = (w > 0.0) & (k != 1.0)
    width = int(active.sum(axis=1).max(initial=0))
    if width < k.shape[1]:
        order = np.argsort(~active, axis=1, kind="stable")[:, :width]
        k = np.take_along_axis(k, order, axis=1)
        w = np.take_along_axis(np.where(active, w, 0.0), order, axis=1)

    result = np.full(kappas.shape[0], 0.5)
    flat = (a == 0.0) & (b == 0.0) & ~np.any(active, axis=1)
    todo = ~flat

    lo = np.full(result.shape, BOUNDARY_EPS)
    hi = np.full(result.shape, 1.0 - BOUNDARY_EPS)
    at_zero = todo & (_d1(lo, a, b, k, w) <= 0.0)
    result[at_zero] = 0.0
    todo &= ~at_zero
    at_one = todo & (_d1(hi, a, b, k, w) >= 0.0)
    result[at_one] = 1.0
    todo &= ~at_one

    idx = np.flatnonzero(todo)
    if idx.size:
        a, b, k, w = a[idx], b[idx], k[idx], w[idx]
        lo, hi = lo[idx], hi[idx]
        for _ in range(MAX_BISECTIONS):
            if np.all(hi - lo <= WIDTH_TOL):
                break
            mid = 0.5 * (lo + hi)
            up = _d1(mid, a, b, k, w) > 0.0
            lo = np.where(up, mid, lo)
            hi = np.where(up, hi, mid)
        result[idx] = 0.5 * (lo + hi)
    return result


def solve_mode(obs: SoftObservations) -> float:
    """The unique maximizer of :func:`log_objective` over [0, 1].

    A flat objective (all Bayes factors neutral, ``alpha = beta = 1``)
    returns 0.5.
    """
    return float(
        solve_modes(obs.kappas[None, :], obs.weights[None, :], np.array([obs.alpha]), np.array([obs.beta]))[0]
    )
