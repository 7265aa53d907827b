"""Independent oracles for the inference, learning and mode-finding code.

Everything here is computed by a deliberately different route from the
production path: full joint enumeration instead of variable elimination,
an explicitly constructed example island instead of the closed-form Bayes
factor, counting instead of iterating, and grid search instead of
bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import infer, learn, softest
from .infer import FamilyMarginals
from .model import MISSING, BetaPriors, Dataset, ModelError, Network, hide_at_random, random_network, simulate_dataset
from .softest import SoftObservations

MAX_ENUMERATION_VARS = 20


class OracleSizeError(ValueError):
    """The instance is too large to enumerate."""


class DatasetConditionError(ValueError):
    """The dataset does not satisfy a closed form's completeness condition."""


@dataclass(frozen=True)
class JointTable:
    """Full joint over all network variables; axis ``i`` is variable ``i``."""

    variables: tuple[str, ...]
    probs: np.ndarray


def brute_force_joint(network: Network) -> JointTable:
    n = len(network)
    if n > MAX_ENUMERATION_VARS:
        raise OracleSizeError(f"{n} variables exceed the enumeration cap of {MAX_ENUMERATION_VARS}")
    joint = np.ones((2,) * n)
    for v, (ps, t) in enumerate(zip(network.parents, network.theta)):
        family = (*ps, v)
        cpt = np.stack([1.0 - t, t], axis=-1).reshape((2,) * len(family))
        # move family axes into variable-index positions, unit size elsewhere
        perm = np.argsort(family)
        shape = [1] * n
        for axis in family:
            shape[axis] = 2
        joint = joint * np.transpose(cpt, perm).reshape(shape)
    return JointTable(network.variables, joint)


def _evidence_mask(example: Sequence[int], n: int) -> np.ndarray:
    mask = np.ones((2,) * n)
    for v, val in enumerate(example):
        if val != MISSING:
            index = [slice(None)] * n
            index[v] = 1 - int(val)
            mask[tuple(index)] = 0.0
    return mask


def brute_force_evidence(network: Network, example: Sequence[int], joint: JointTable | None = None) -> float:
    joint = joint or brute_force_joint(network)
    return float(np.sum(joint.probs * _evidence_mask(example, len(network))))


def brute_force_marginals(network: Network, example: Sequence[int], joint: JointTable | None = None) -> FamilyMarginals:
    joint = joint or brute_force_joint(network)
    n = len(network)
    restricted = joint.probs * _evidence_mask(example, n)
    pd = float(restricted.sum())
    if pd <= 0.0:
        raise infer.ZeroProbabilityError(0)
    out = []
    for v, ps in enumerate(network.parents):
        family = [*ps, v]
        table = np.einsum(restricted, list(range(n)), family) / pd
        out.append(table.reshape(2 ** len(ps), 2))
    return FamilyMarginals(pd, tuple(out))


@dataclass(frozen=True)
class ExampleIsland:
    """One example's island with generators made explicit.

    ``network`` contains one root generator per base parameter, with
    ``Pr(generator = positive) = theta_{x|u}``, followed by one instance of
    every base variable whose CPT deterministically copies the generator
    selected by its parents' values.
    """

    base: Network
    network: Network
    generator: tuple[tuple[int, ...], ...]
    instance: tuple[int, ...]
    example: tuple[int, ...]

    @property
    def evidence(self) -> tuple[int, ...]:
        """The example asserted on the base-variable instances."""
        ev = [MISSING] * len(self.network)
        for v, val in enumerate(self.example):
            ev[self.instance[v]] = val
        return tuple(ev)


def build_example_island(network: Network, example: Sequence[int]) -> ExampleIsland:
    names: list[str] = []
    parents: list[tuple[int, ...]] = []
    theta: list[np.ndarray] = []
    generator = []
    for v, t in enumerate(network.theta):
        k = len(network.parents[v])
        ids = []
        for u in range(t.size):
            ids.append(len(names))
            names.append(f"{network.variables[v]}|{format(u, f'0{k}b') if k else ''}")
            parents.append(())
            theta.append(np.array([t[u]]))
        generator.append(tuple(ids))
    instance = tuple(range(len(names), len(names) + len(network)))
    for v, ps in enumerate(network.parents):
        k = len(ps)
        gens = generator[v]
        names.append(network.variables[v])
        parents.append(tuple(instance[p] for p in ps) + gens)
        # parent pattern: base parents (high bits) then generators (low bits)
        selector = np.zeros(2 ** (k + len(gens)))
        for pattern in range(selector.size):
            u = pattern >> len(gens)
            g_bit = (pattern >> (len(gens) - 1 - u)) & 1
            selector[pattern] = g_bit
        theta.append(selector)
    if len(names) > MAX_ENUMERATION_VARS:
        raise OracleSizeError(f"island has {len(names)} variables; cap is {MAX_ENUMERATION_VARS}")
    island = Network(tuple(names), tuple(parents), tuple(theta))
    return ExampleIsland(network, island, tuple(generator), instance, tuple(int(x) for x in example))


def island_base_marginal(island: ExampleIsland) -> np.ndarray:
    """Joint over the base-variable instances with generators summed out."""
    joint = brute_force_joint(island.network).probs
    n = len(island.network)
    return np.einsum(joint, list(range(n)), list(island.instance))


def island_bayes_factor(network: Network, example: Sequence[int], variable: int, u: int) -> float:
    """``Pr(d | x_u) / Pr(d | not x_u)`` in the island, by enumeration."""
    island = build_example_island(network, example)
    joint = brute_force_joint(island.network).probs
    n = len(island.network)
    g = island.generator[variable][u]
    restricted = joint * _evidence_mask(island.evidence, n)
    pd_g = np.einsum(restricted, list(range(n)), [g])
    theta = float(network.theta[variable][u])
    num = pd_g[1] / theta
    den = pd_g[0] / (1.0 - theta)
    if den == 0.0:
        return math.inf if num > 0.0 else 1.0
    return float(num / den)


@dataclass(frozen=True)
class ClosedFormCounts:
    """Per variable, counts over parent instantiations ``u``:
    ``n_xu`` (X positive), ``n_u`` (parents set to u), ``n_plus`` (X observed)
    and ``n_minus`` (X missing)."""

    n_xu: tuple[np.ndarray, ...]
    n_u: tuple[np.ndarray, ...]
    n_plus: tuple[np.ndarray, ...]
    n_minus: tuple[np.ndarray, ...]


def count_families(dataset: Dataset, structure: Network) -> ClosedFormCounts:
    dataset.check_header(structure)
    rows = dataset.rows.astype(np.int64)
    n_xu, n_u, n_plus, n_minus = [], [], [], []
    for v, ps in enumerate(structure.parents):
        size = 2 ** len(ps)
        set_parents = np.all(rows[:, list(ps)] != MISSING, axis=1) if ps else np.ones(len(rows), bool)
        u = np.zeros(len(rows), np.int64)
        for p in ps:
            u = (u << 1) | np.where(rows[:, p] == 1, 1, 0)
        x = rows[:, v]
        n_u.append(np.bincount(u[set_parents], minlength=size))
        n_xu.append(np.bincount(u[set_parents & (x == 1)], minlength=size))
        n_plus.append(np.bincount(u[set_parents & (x != MISSING)], minlength=size))
        n_minus.append(np.bincount(u[set_parents & (x == MISSING)], minlength=size))
    return ClosedFormCounts(tuple(n_xu), tuple(n_u), tuple(n_plus), tuple(n_minus))


def is_leaf_missing(dataset: Dataset, structure: Network) -> bool:
    leaves = set(structure.leaves())
    missing_cols = np.flatnonzero(np.any(dataset.rows == MISSING, axis=0))
    return all(int(c) in leaves for c in missing_cols)


def complete_estimates(dataset: Dataset, structure: Network) -> tuple[np.ndarray, ...]:
    """``D#(xu)/D#(u)`` per parameter, NaN where ``D#(u) = 0``."""
    if not dataset.is_complete():
        raise DatasetConditionError("dataset has missing values")
    c = count_families(dataset, structure)
    return tuple(_ratio(c.n_xu[v], c.n_u[v]) for v in range(len(structure)))


def leaf_missing_estimates(dataset: Dataset, structure: Network) -> tuple[np.ndarray, ...]:
    """``D#(xu)/D+#(u)`` per parameter, NaN where ``D+#(u) = 0``."""
    if not is_leaf_missing(dataset, structure):
        raise DatasetConditionError("a non-leaf variable has missing values")
    c = count_families(dataset, structure)
    return tuple(_ratio(c.n_xu[v], c.n_plus[v]) for v in range(len(structure)))


def closed_form_complete(dataset: Dataset, structure: Network) -> Network:
    """The unique ML parameters for a complete dataset."""
    return _strict(complete_estimates(dataset, structure), structure)


def closed_form_leaf_missing(dataset: Dataset, structure: Network) -> Network:
    """The unique ML parameters when only leaves have missing values."""
    return _strict(leaf_missing_estimates(dataset, structure), structure)


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    return np.where(den > 0, num / np.maximum(den, 1), np.nan)


def _strict(theta: Sequence[np.ndarray], structure: Network) -> Network:
    for v, t in enumerate(theta):
        bad = np.flatnonzero(np.isnan(t))
        if bad.size:
            k = len(structure.parents[v])
            pattern = format(int(bad[0]), f"0{k}b") if k else "(root)"
            raise ModelError(
                f"parameter of {structure.variables[v]} at parent pattern {pattern} has no supporting examples"
            )
    return structure.with_theta(theta)


def em_one_step_leaf_missing(network: Network, dataset: Dataset) -> Network:
    """The EM update ``(D#(xu) + D-#(u) theta_{x|u}) / D#(u)`` written out
    in closed form.  Unsupported parameters keep their current value."""
    if not is_leaf_missing(dataset, network):
        raise DatasetConditionError("a non-leaf variable has missing values")
    c = count_families(dataset, network)
    theta = []
    for v, t in enumerate(network.theta):
        n_u = c.n_u[v]
        theta.append(np.where(n_u > 0, (c.n_xu[v] + c.n_minus[v] * t) / np.maximum(n_u, 1), t))
    return network.with_theta(theta)


def _grid_values(p: np.ndarray, obs: SoftObservations) -> np.ndarray:
    # log of p^(a-1)(1-p)^(b-1) prod_i (kappa_i p - p + 1), one row per grid point
    with np.errstate(divide="ignore", invalid="ignore"):
        total = np.zeros_like(p)
        if obs.alpha != 1.0:
            total = total + (obs.alpha - 1.0) * np.log(p)
        if obs.beta != 1.0:
            total = total + (obs.beta - 1.0) * np.log(1.0 - p)
        for kappa, w in zip(obs.kappas, obs.weights):
            if w == 0.0 or kappa == 1.0:
                continue
            factor = p if math.isinf(kappa) else kappa * p - p + 1.0
            total = total + w * np.log(factor)
    return total


def grid_mode_oracle(obs: SoftObservations, coarse: int = 10_000, rounds: int = 2, points: int = 1_000) -> float:
    """Argmax of the soft-observation posterior by repeated grid refinement.

    A flat objective returns 0.5.
    """
    grid = np.linspace(0.0, 1.0, coarse)
    values = _grid_values(grid, obs)
    if np.all(values == values[0]):
        return 0.5
    for _ in range(rounds):
        i = int(np.argmax(values))
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, grid.size - 1)]
        grid = np.linspace(lo, hi, points)
        values = _grid_values(grid, obs)
    return float(grid[int(np.argmax(values))])


# -- randomized suites -----------------------------------------------------


@dataclass(frozen=True)
class SuiteReport:
    name: str
    instances: int
    max_discrepancy: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_discrepancy <= self.tolerance

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{self.name:<12} instances={self.instances:<5d} max_discrepancy={self.max_discrepancy:.3e} tol={self.tolerance:.0e} {verdict}"


def random_example(network: Network, rng: np.random.Generator, missing: float = 0.5) -> tuple[int, ...]:
    values = rng.integers(0, 2, size=len(network))
    hide = rng.random(len(network)) < missing
    return tuple(int(MISSING) if h else int(x) for x, h in zip(values, hide))


def relative_discrepancy(a: float, b: float) -> float:
    if a == b:
        return 0.0
    if math.isinf(a) or math.isinf(b):
        return math.inf
    return abs(a - b) / max(abs(a), abs(b))


def infer_suite(seed: int = 0, instances: int = 500, max_vars: int = 12) -> SuiteReport:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        net = random_network(int(rng.integers(1, max_vars + 1)), rng, max_parents=3)
        example = random_example(net, rng, missing=float(rng.uniform(0.2, 0.9)))
        joint = brute_force_joint(net)
        exact = brute_force_marginals(net, example, joint)
        worst = max(worst, abs(infer.prob_evidence(net, example) - exact.evidence))
        fm = infer.family_marginals(net, example)
        for a, b in zip(fm.joint, exact.joint):
            worst = max(worst, float(np.max(np.abs(a - b))))
    return SuiteReport("infer", instances, worst, 1e-10)


def random_island_instance(rng: np.random.Generator, max_vars: int = 6):
    while True:
        net = random_network(int(rng.integers(1, max_vars + 1)), rng, max_parents=3)
        if len(net) + net.n_parameters <= MAX_ENUMERATION_VARS:
            break
    example = random_example(net, rng, missing=float(rng.uniform(0.0, 0.8)))
    v = int(rng.integers(len(net)))
    u = int(rng.integers(net.theta[v].size))
    return net, example, v, u


def island_suite(seed: int = 0, instances: int = 100) -> SuiteReport:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        net, example, v, u = random_island_instance(rng)
        fast = float(learn.edml_bayes_factors(net, example)[v][u])
        slow = island_bayes_factor(net, example, v, u)
        worst = max(worst, relative_discrepancy(fast, slow))
    return SuiteReport("island", instances, worst, 1e-9)


def random_soft_observations(rng: np.random.Generator, max_obs: int = 30) -> SoftObservations:
    m = int(rng.integers(0, max_obs + 1))
    kappas = np.exp(rng.uniform(np.log(1e-3), np.log(1e3), size=m))
    special = rng.random(m)
    kappas[special < 0.05] = 0.0
    kappas[special > 0.95] = np.inf
    return SoftObservations(kappas, float(rng.uniform(1, 5)), float(rng.uniform(1, 5)))


def mode_suite(seed: int = 0, instances: int = 1000) -> SuiteReport:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        obs = random_soft_observations(rng)
        worst = max(worst, abs(softest.solve_mode(obs) - grid_mode_oracle(obs)))
    return SuiteReport("mode", instances, worst, 1e-6)


def defined_diff(a: Sequence[np.ndarray], b: Sequence[np.ndarray]) -> float:
    """Largest absolute difference over entries defined (non-NaN) in both."""
    worst = 0.0
    for x, y in zip(a, b):
        ok = np.isfinite(x) & np.isfinite(y)
        if np.any(ok):
            worst = max(worst, float(np.max(np.abs(x[ok] - y[ok]))))
    return worst


def closed_form_suite(seed: int = 0, instances: int = 20, n: int = 200) -> SuiteReport:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(instances):
        truth = random_network(int(rng.integers(2, 9)), rng, max_parents=3)
        structure = truth
        complete = simulate_dataset(truth, n, seed=seed * 1000 + i)
        partial = hide_at_random(complete, truth.leaves(), 0.3, seed=seed * 1000 + i)
        priors = BetaPriors.uniform(structure, 1.0, 1.0)
        start = learn.random_parameters(structure, int(rng.integers(1 << 31)))

        prop1 = complete_estimates(complete, structure)
        worst = max(worst, defined_diff(learn.em_iteration(start, complete, priors).theta, prop1))
        worst = max(worst, defined_diff(learn.edml_iteration(start, complete, priors, 1.0).theta, prop1))

        prop2 = leaf_missing_estimates(partial, structure)
        worst = max(worst, defined_diff(learn.edml_iteration(start, partial, priors, 1.0).theta, prop2))
        one_step = em_one_step_leaf_missing(start, partial)
        worst = max(worst, defined_diff(learn.em_iteration(start, partial, priors).theta, one_step.theta))
    return SuiteReport("closed-form", instances, worst, 1e-9)


SUITES: dict[str, Callable[[int], SuiteReport]] = {
    "infer": infer_suite,
    "island": island_suite,
    "mode": mode_suite,
    "closed-form": closed_form_suite,
}


def run_suites(names: Sequence[str], seed: int = 0) -> list[SuiteReport]:
    if "all" in names:
        names = list(SUITES)
    return [SUITES[name](seed) for name in names]
