"""EM and EDML parameter learning for binary Bayesian networks.

Both learners sweep the distinct examples of a dataset (weighted by their
multiplicity), run exact inference under the current estimates, and then
update every parameter.  EM uses the closed-form MAP update on expected
counts; EDML turns each example into a Bayes factor per parameter and sets
the parameter to the posterior mode under those soft observations.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .infer import BatchMarginals, ZeroProbabilityError, batch_family_marginals, log_prior
from .model import BetaPriors, Dataset, Network, distinct_rows
from .softest import solve_modes

EPS_THETA = 1e-9


def _upper_bound(eps: float) -> float:
    # smallest float u with 1 - u <= eps; plain 1.0 - eps rounds outward
    u = 1.0 - eps
    while 1.0 - u > eps:
        u = float(np.nextafter(u, 1.0))
    return u


THETA_MAX = _upper_bound(EPS_THETA)
KAPPA_ZERO_TOL = 1e-12
KAPPA_NEUTRAL_TOL = 1e-12

ALGORITHMS = ("em", "edml")


def clamp(theta: np.ndarray) -> np.ndarray:
    return np.clip(theta, EPS_THETA, THETA_MAX)


@dataclass(frozen=True)
class BayesFactorTable:
    """Bayes factors ``kappas[i][j, u]`` of distinct example ``j`` on
    parameter ``theta_{x|u}`` of variable ``i``, with example multiplicities."""

    kappas: tuple[np.ndarray, ...]
    counts: np.ndarray

    def example(self, j: int) -> tuple[np.ndarray, ...]:
        return tuple(k[j] for k in self.kappas)


def _marginals(network: Network, rows: np.ndarray, first: np.ndarray, iteration: int | None = None) -> BatchMarginals:
    try:
        return batch_family_marginals(network, rows, index_map=first, strategy="shared")
    except ZeroProbabilityError as exc:
        raise ZeroProbabilityError(exc.index, iteration) from None


def _em_update(network: Network, marg: BatchMarginals, counts: np.ndarray, priors: BetaPriors) -> Network:
    theta = []
    for t, joint, a, b in zip(network.theta, marg.joint, priors.alpha, priors.beta):
        pos = counts @ joint[:, :, 1] if len(counts) else np.zeros_like(t)
        tot = counts @ joint.sum(axis=2) if len(counts) else np.zeros_like(t)
        num = a - 1.0 + pos
        den = a + b - 2.0 + tot
        with np.errstate(invalid="ignore", divide="ignore"):
            new = np.where(den > 0.0, num / den, t)
        theta.append(clamp(new))
    return network.with_theta(theta)


def em_iteration(network: Network, dataset: Dataset, priors: BetaPriors) -> Network:
    """One EM step: expected counts under ``network``, then the MAP update."""
    dataset.check_header(network)
    rows, counts, first = distinct_rows(dataset)
    return _em_update(network, _marginals(network, rows, first), counts, priors)


def bayes_factors_from_marginals(network: Network, marg: BatchMarginals) -> tuple[np.ndarray, ...]:
    out = []
    for t, joint in zip(network.theta, marg.joint):
        pxu = joint[:, :, 1]
        pxbu = joint[:, :, 0]
        pu = pxu + pxbu
        num = pxu / t - pu + 1.0
        den = pxbu / (1.0 - t) - pu + 1.0
        num = np.where(np.abs(num) <= KAPPA_ZERO_TOL, 0.0, num)
        den = np.where(np.abs(den) <= KAPPA_ZERO_TOL, 0.0, den)
        with np.errstate(divide="ignore", invalid="ignore"):
            kappa = num / den
        kappa = np.where(den == 0.0, np.where(num > 0.0, np.inf, 1.0), kappa)
        # round-off around exactly neutral evidence
        neutral = np.abs(num - den) <= KAPPA_NEUTRAL_TOL * np.maximum(np.abs(num), np.abs(den))
        kappa = np.where(neutral & (den != 0.0), 1.0, kappa)
        out.append(kappa)
    return tuple(out)


def edml_bayes_factors(network: Network, example: Sequence[int]) -> tuple[np.ndarray, ...]:
    """Bayes factors one example induces on every parameter: entry ``[i][u]``
    is the factor on ``theta_{x|u}`` of variable ``i``."""
    rows = np.asarray(example, dtype=np.int8).reshape(1, -1)
    marg = _marginals(network, rows, np.array([0]))
    return tuple(k[0] for k in bayes_factors_from_marginals(network, marg))


def edml_bayes_factor_table(network: Network, dataset: Dataset) -> BayesFactorTable:
    dataset.check_header(network)
    rows, counts, first = distinct_rows(dataset)
    marg = _marginals(network, rows, first)
    return BayesFactorTable(bayes_factors_from_marginals(network, marg), counts)


def _edml_update(network: Network, kappas: Sequence[np.ndarray], counts: np.ndarray, priors: BetaPriors, gamma: float) -> Network:
    sizes = [t.size for t in network.theta]
    if len(counts):
        stacked = np.concatenate([k.T for k in kappas], axis=0)
    else:
        stacked = np.ones((sum(sizes), 0))
    weights = np.broadcast_to(counts.astype(float), stacked.shape)
    alpha = np.concatenate(priors.alpha) if sizes else np.zeros(0)
    beta = np.concatenate(priors.beta) if sizes else np.zeros(0)
    modes = solve_modes(stacked, weights, alpha, beta)
    theta = []
    start = 0
    for t, size in zip(network.theta, sizes):
        p = modes[start:start + size]
        start += size
        theta.append(clamp((1.0 - gamma) * t + gamma * p))
    return network.with_theta(theta)


def edml_iteration(network: Network, dataset: Dataset, priors: BetaPriors, gamma: float = 0.5) -> Network:
    """One EDML step: Bayes factors under ``network``, then a damped move
    towards each parameter's soft-observation posterior mode."""
    dataset.check_header(network)
    rows, counts, first = distinct_rows(dataset)
    marg = _marginals(network, rows, first)
    return _edml_update(network, bayes_factors_from_marginals(network, marg), counts, priors, gamma)


def random_parameters(structure: Network, seed: int, low: float = 0.05, high: float = 0.95) -> Network:
    """Re-parameterize ``structure`` with independent uniform draws."""
    rng = np.random.default_rng(seed)
    return structure.with_theta([rng.uniform(low, high, size=t.size) for t in structure.theta])


@dataclass(frozen=True)
class LearnConfig:
    algorithm: str = "em"
    priors: BetaPriors | tuple[float, float] = (1.0, 1.0)
    gamma: float = 0.5
    max_iterations: int = 1000
    # None disables the parameter-change test (fixed iteration budget)
    stop_delta: float | None = 1e-6
    seed: int = 0
    seed_network: Network | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.stop_delta is not None and not self.stop_delta > 0.0:
            raise ValueError("stop_delta must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")

    def resolve_priors(self, structure: Network) -> BetaPriors:
        if isinstance(self.priors, BetaPriors):
            if not self.priors.matches(structure):
                raise ValueError("priors do not match the network's parameters")
            return self.priors
        a, b = self.priors
        return BetaPriors.uniform(structure, a, b)


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    log_posterior: float
    max_delta: float
    elapsed: float


@dataclass
class Trace:
    rows: list[TraceRow] = field(default_factory=list)
    converged: bool = False

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def log_posteriors(self) -> np.ndarray:
        return np.array([r.log_posterior for r in self.rows])

    @property
    def iterations(self) -> int:
        """Number of update steps taken (rows minus the seed row)."""
        return len(self.rows) - 1


def _log_posterior(network: Network, marg: BatchMarginals, counts: np.ndarray, priors: BetaPriors) -> float:
    if len(counts) == 0:
        ll = 0.0
    else:
        ll = float(np.dot(counts, np.log(marg.evidence)))
    return ll + log_prior(network, priors)


def run(
    config: LearnConfig,
    structure: Network,
    dataset: Dataset,
    callback: Callable[[TraceRow, Network], None] | None = None,
) -> tuple[Network, Trace]:
    """Iterate EM or EDML from a seed until the largest parameter change
    drops below ``stop_delta`` or the iteration budget is spent.

    Row 0 of the trace evaluates the seed.  Raises
    :class:`ZeroProbabilityError` naming the example's dataset index and the
    iteration at which it became impossible.
    """
    dataset.check_header(structure)
    priors = config.resolve_priors(structure)
    if config.seed_network is not None:
        if config.seed_network.structure != structure.structure:
            raise ValueError("seed network has a different structure")
        theta = config.seed_network
    else:
        theta = random_parameters(structure, config.seed)
    rows, counts, first = distinct_rows(dataset)

    trace = Trace()
    start = time.perf_counter()

    def record(it, net, marg, delta):
        row = TraceRow(it, _log_posterior(net, marg, counts, priors), delta, time.perf_counter() - start)
        trace.rows.append(row)
        if callback is not None:
            callback(row, net)

    marg = _marginals(theta, rows, first, 0)
    record(0, theta, marg, math.nan)
    for it in range(1, config.max_iterations + 1):
        if config.algorithm == "em":
            new = _em_update(theta, marg, counts, priors)
        else:
            kappas = bayes_factors_from_marginals(theta, marg)
            new = _edml_update(theta, kappas, counts, priors, config.gamma)
        delta = theta.max_abs_diff(new)
        theta = new
        marg = _marginals(theta, rows, first, it)
        record(it, theta, marg, delta)
        if config.stop_delta is not None and delta < config.stop_delta:
            trace.converged = True
            break
    return theta, trace
