"""Exact inference by variable elimination.

Evidence enters as indicator vectors multiplied into each variable's CPT
factor, which lets a whole batch of examples share one elimination: every
factor table carries a leading batch axis.  Elimination orders come from
the min-fill heuristic with ties broken by variable name, and depend only
on the network structure and the set of variables kept.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import BetaPriors, Dataset, Network, distinct_rows


class ZeroProbabilityError(ArithmeticError):
    """An example has probability zero under the current parameters."""

    def __init__(self, index: int, iteration: int | None = None):
        self.index = index
        self.iteration = iteration
        msg = f"example {index} has zero probability"
        if iteration is not None:
            msg += f" at iteration {iteration}"
        super().__init__(msg)


@dataclass(frozen=True)
class Factor:
    """A batch of non-negative tables over binary variables.

    ``table`` has shape ``(B, 2, ..., 2)`` with one axis per scope variable;
    flattening the trailing axes gives the joint bit-pattern index with the
    first scope variable as the most significant bit.
    """

    scope: tuple[int, ...]
    table: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.table.reshape(self.table.shape[0], int(np.prod(self.table.shape[1:])))


def _multiply_sum(factors: Sequence[Factor], out_scope: tuple[int, ...]) -> Factor:
    """Product of ``factors`` summed down to ``out_scope`` (kept in that order)."""
    union: list[int] = list(out_scope)
    for f in factors:
        union.extend(v for v in f.scope if v not in union)
    axis = {v: i + 1 for i, v in enumerate(union)}
    product = None
    for f in factors:
        # align f to the union layout: permute its axes, unit size elsewhere
        perm = sorted(range(len(f.scope)), key=lambda i: axis[f.scope[i]])
        shape = [f.table.shape[0]] + [1] * len(union)
        for v in f.scope:
            shape[axis[v]] = 2
        aligned = np.transpose(f.table, [0] + [i + 1 for i in perm]).reshape(shape)
        product = aligned if product is None else product * aligned
    summed = tuple(range(len(out_scope) + 1, len(union) + 1))
    if summed:
        product = product.sum(axis=summed)
    shape = (product.shape[0],) + (2,) * len(out_scope)
    return Factor(out_scope, np.broadcast_to(product, shape))


@functools.lru_cache(maxsize=4096)
def elimination_order(structure, keep: tuple[int, ...] = ()) -> tuple[int, ...]:
    """Min-fill order eliminating every variable not in ``keep``."""
    names, parents = structure
    adj: list[set[int]] = [set() for _ in names]
    for child, ps in enumerate(parents):
        family = (*ps, child)
        for a in family:
            adj[a].update(b for b in family if b != a)
    remaining = set(range(len(names))) - set(keep)
    order = []

    def fill(v):
        nb = list(adj[v])
        return sum(1 for i, a in enumerate(nb) for b in nb[i + 1:] if b not in adj[a])

    while remaining:
        v = min(remaining, key=lambda x: (fill(x), names[x]))
        nb = adj[v]
        for a in nb:
            adj[a].update(b for b in nb if b != a)
            adj[a].discard(v)
        adj[v] = set()
        remaining.discard(v)
        order.append(v)
    return tuple(order)


def indicators(examples: np.ndarray, n_vars: int) -> np.ndarray:
    """Evidence indicators of shape ``(B, n, 2)``; missing cells give (1, 1)."""
    ex = np.asarray(examples, dtype=np.int8).reshape(-1, n_vars)
    lam = np.empty(ex.shape + (2,))
    lam[..., 0] = ex != 1
    lam[..., 1] = ex != 0
    return lam


def cpt_factors(network: Network, examples: np.ndarray) -> list[Factor]:
    """One factor per variable: its CPT times its own evidence indicator."""
    lam = indicators(examples, len(network))
    out = []
    for v, (ps, t) in enumerate(zip(network.parents, network.theta)):
        k = len(ps)
        cpt = np.stack([1.0 - t, t], axis=-1).reshape((2,) * (k + 1))
        ind = lam[:, v, :].reshape((lam.shape[0],) + (1,) * k + (2,))
        out.append(Factor((*ps, v), cpt[None, ...] * ind))
    return out


def eliminate(factors: Sequence[Factor], order: Sequence[int], keep: tuple[int, ...]) -> Factor:
    """Sum out ``order`` one variable at a time; returns a factor over ``keep``."""
    pool = list(factors)
    for v in order:
        touching = [f for f in pool if v in f.scope]
        if not touching:
            continue
        pool = [f for f in pool if v not in f.scope]
        scope: list[int] = []
        for f in touching:
            scope.extend(x for x in f.scope if x != v and x not in scope)
        pool.append(_multiply_sum(touching, tuple(scope)))
    return _multiply_sum(pool, tuple(keep))


def _check_positive(evidence: np.ndarray, index_map: Sequence[int] | None = None) -> None:
    bad = np.flatnonzero(~(evidence > 0.0))
    if bad.size:
        j = int(bad[0])
        raise ZeroProbabilityError(int(index_map[j]) if index_map is not None else j)


def batch_prob_evidence(network: Network, examples: np.ndarray, order: Sequence[int] | None = None) -> np.ndarray:
    ex = np.asarray(examples, dtype=np.int8).reshape(-1, len(network))
    if order is None:
        order = elimination_order(network.structure, ())
    return eliminate(cpt_factors(network, ex), order, ()).table.copy()


def prob_evidence(network: Network, example: Sequence[int], order: Sequence[int] | None = None) -> float:
    """Exact ``Pr(example)``; missing cells are summed out.  Returns 0.0 for
    impossible evidence."""
    return float(batch_prob_evidence(network, np.asarray(example), order)[0])


@dataclass(frozen=True)
class FamilyMarginals:
    """Posterior family marginals for one example.

    ``joint[i]`` has shape ``(2**k, 2)``: entry ``[u, x]`` is
    ``Pr(U=u, X=x | d)`` for variable ``i``.
    """

    evidence: float
    joint: tuple[np.ndarray, ...]

    def pr_xu(self, i: int) -> np.ndarray:
        return self.joint[i][:, 1]

    def pr_xbar_u(self, i: int) -> np.ndarray:
        return self.joint[i][:, 0]

    def pr_u(self, i: int) -> np.ndarray:
        return self.joint[i].sum(axis=1)


@dataclass(frozen=True)
class BatchMarginals:
    """Family marginals for a batch of examples; ``joint[i]`` has shape
    ``(B, 2**k, 2)``."""

    evidence: np.ndarray
    joint: tuple[np.ndarray, ...]

    def __getitem__(self, b: int) -> FamilyMarginals:
        return FamilyMarginals(float(self.evidence[b]), tuple(j[b] for j in self.joint))

    def __len__(self) -> int:
        return self.evidence.shape[0]


@dataclass(frozen=True)
class BucketTree:
    """Symbolic schedule for two-pass elimination over one order.

    Bucket ``b`` eliminates ``order[b]``; ``home[v]`` is the bucket that
    receives variable ``v``'s CPT factor.  ``parent[b]`` is the bucket that
    receives ``b``'s message over ``separator[b]`` (None for roots).
    """

    order: tuple[int, ...]
    home: tuple[int, ...]
    clique: tuple[tuple[int, ...], ...]
    separator: tuple[tuple[int, ...], ...]
    parent: tuple[int | None, ...]
    children: tuple[tuple[int, ...], ...]


@functools.lru_cache(maxsize=256)
def bucket_tree(structure) -> BucketTree:
    names, parents = structure
    order = elimination_order(structure, ())
    pos = {v: i for i, v in enumerate(order)}
    n = len(order)
    home = tuple(min(pos[x] for x in (*ps, v)) for v, ps in enumerate(parents))
    pending: list[list[int]] = [[] for _ in range(n)]
    for v, ps in enumerate(parents):
        for x in (*ps, v):
            if x not in pending[home[v]]:
                pending[home[v]].append(x)
    clique, separator, parent = [], [], []
    children: list[list[int]] = [[] for _ in range(n)]
    for b in range(n):
        scope = tuple(pending[b]) if order[b] in pending[b] else (order[b], *pending[b])
        sep = tuple(x for x in scope if x != order[b])
        clique.append(scope)
        separator.append(sep)
        if sep:
            target = min(pos[x] for x in sep)
            parent.append(target)
            children[target].append(b)
            for x in sep:
                if x not in pending[target]:
                    pending[target].append(x)
        else:
            parent.append(None)
    return BucketTree(order, home, tuple(clique), tuple(separator), tuple(parent), tuple(tuple(c) for c in children))


def _shared_family_tables(network: Network, factors: list[Factor]) -> tuple[list[Factor], np.ndarray]:
    tree = bucket_tree(network.structure)
    n = len(tree.order)
    local: list[list[Factor]] = [[] for _ in range(n)]
    for v, f in enumerate(factors):
        local[tree.home[v]].append(f)
    batch = factors[0].table.shape[0]

    up: list[Factor | None] = [None] * n
    for b in range(n):
        incoming = [up[c] for c in tree.children[b]]
        up[b] = _multiply_sum(local[b] + incoming, tree.separator[b])

    down: list[Factor | None] = [None] * n
    for b in reversed(range(n)):
        inbound = [] if down[b] is None else [down[b]]
        for c in tree.children[b]:
            parts = local[b] + [up[o] for o in tree.children[b] if o != c] + inbound
            # separator variables absent from every part are constant along that axis
            present = {x for f in parts for x in f.scope}
            if parts:
                down[c] = _multiply_sum(parts, tuple(x for x in tree.separator[c] if x in present))

    evidence = np.ones(batch)
    for b in range(n):
        if tree.parent[b] is None:
            evidence = evidence * up[b].table

    tables: list[Factor | None] = [None] * len(factors)
    for b in range(n):
        homed = [v for v in range(len(factors)) if tree.home[v] == b]
        if not homed:
            continue
        parts = local[b] + [up[c] for c in tree.children[b]] + ([] if down[b] is None else [down[b]])
        belief = _multiply_sum(parts, tree.clique[b])
        for v in homed:
            tables[v] = _multiply_sum([belief], factors[v].scope)
    return tables, evidence


def batch_family_marginals(
    network: Network,
    examples: np.ndarray,
    index_map: Sequence[int] | None = None,
    strategy: str = "per-family",
) -> BatchMarginals:
    """Family posteriors for every example in the batch.

    ``strategy="per-family"`` runs a separate elimination for each family;
    ``"shared"`` runs one upward and one downward pass over a bucket tree and
    reads every family off the cached messages.  ``index_map`` translates
    batch positions into the indices reported by
    :class:`ZeroProbabilityError`.
    """
    ex = np.asarray(examples, dtype=np.int8).reshape(-1, len(network))
    factors = cpt_factors(network, ex)
    if not factors:
        return BatchMarginals(np.ones(len(ex)), ())
    if strategy == "shared":
        tables, evidence = _shared_family_tables(network, factors)
        _check_positive(evidence, index_map)
    elif strategy == "per-family":
        tables = []
        evidence = None
        for v, ps in enumerate(network.parents):
            family = (*ps, v)
            order = elimination_order(network.structure, tuple(sorted(family)))
            tables.append(eliminate(factors, order, family))
            if evidence is None:
                evidence = tables[0].values.sum(axis=1)
                _check_positive(evidence, index_map)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    joints = []
    for f, ps in zip(tables, network.parents):
        table = f.values.reshape(len(ex), 2 ** len(ps), 2)
        joints.append(table / table.sum(axis=(1, 2))[:, None, None])
    return BatchMarginals(evidence, tuple(joints))


def family_marginals(network: Network, example: Sequence[int], strategy: str = "per-family") -> FamilyMarginals:
    return batch_family_marginals(network, np.asarray(example), strategy=strategy)[0]


def log_likelihood(network: Network, dataset: Dataset) -> float:
    dataset.check_header(network)
    rows, counts, _ = distinct_rows(dataset)
    if len(rows) == 0:
        return 0.0
    return _weighted_log(batch_prob_evidence(network, rows), counts)


def _weighted_log(evidence: np.ndarray, counts: np.ndarray) -> float:
    if np.any(evidence <= 0.0):
        return -np.inf
    return float(np.dot(counts, np.log(evidence)))


def log_prior(network: Network, priors: BetaPriors) -> float:
    """Unnormalized log Beta density summed over all parameters."""
    total = 0.0
    with np.errstate(divide="ignore"):
        for t, a, b in zip(network.theta, priors.alpha, priors.beta):
            on_a = a > 1.0
            on_b = b > 1.0
            total += float(np.sum((a[on_a] - 1.0) * np.log(t[on_a])))
            total += float(np.sum((b[on_b] - 1.0) * np.log1p(-t[on_b])))
    return total


def log_posterior(network: Network, dataset: Dataset, priors: BetaPriors) -> float:
    return log_likelihood(network, dataset) + log_prior(network, priors)

