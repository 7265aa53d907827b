"""Binary Bayesian networks, incomplete datasets, Beta priors, file formats
and forward sampling.

Parent instantiations are keyed by a bit pattern over the declared parent
order: the first parent is the most significant bit and bit 1 means the
positive value.  A CPT for a variable with ``k`` parents is therefore a
length ``2**k`` vector of ``Pr(X = positive | U = u)``.

Dataset cells hold ``1`` (positive), ``0`` (negative) or ``MISSING``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

MISSING = -1

_CELL_TOKENS = {"1": 1, "0": 0, "?": MISSING}
_CELL_CHARS = {1: "1", 0: "0", MISSING: "?"}


class ModelError(ValueError):
    """Malformed network, dataset or prior specification."""


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _topological_order(variables: Sequence[str], parents: Sequence[Sequence[int]]) -> tuple[int, ...]:
    # Kahn's algorithm; ties broken by declaration order.
    n = len(variables)
    indegree = [len(p) for p in parents]
    children: list[list[int]] = [[] for _ in range(n)]
    for child, ps in enumerate(parents):
        for p in ps:
            children[p].append(child)
    ready = [i for i in range(n) if indegree[i] == 0]
    order = []
    while ready:
        ready.sort()
        node = ready.pop(0)
        order.append(node)
        for c in children[node]:
            indegree[c] -= 1
            if indegree[c] == 0:
                ready.append(c)
    if len(order) != n:
        stuck = [variables[i] for i in range(n) if indegree[i] > 0]
        raise ModelError(f"cycle detected among variables: {', '.join(stuck)}")
    return tuple(order)


@dataclass(frozen=True, eq=False)
class Network:
    """A DAG over binary variables with one CPT vector per variable.

    ``parents[i]`` holds indices into ``variables``; ``theta[i]`` has
    ``2 ** len(parents[i])`` entries.  Instances are immutable; use
    :meth:`with_theta` to obtain a re-parameterized copy.
    """

    variables: tuple[str, ...]
    parents: tuple[tuple[int, ...], ...]
    theta: tuple[np.ndarray, ...]
    order: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        n = len(self.variables)
        if len(set(self.variables)) != n:
            raise ModelError("duplicate variable name")
        if len(self.parents) != n or len(self.theta) != n:
            raise ModelError("parents/theta must have one entry per variable")
        parents = tuple(tuple(int(p) for p in ps) for ps in self.parents)
        for i, ps in enumerate(parents):
            if len(set(ps)) != len(ps) or any(p < 0 or p >= n or p == i for p in ps):
                raise ModelError(f"invalid parent list for {self.variables[i]}")
        theta = []
        for i, t in enumerate(self.theta):
            t = np.array(t, dtype=float).reshape(-1)
            if t.shape != (2 ** len(parents[i]),):
                raise ModelError(
                    f"{self.variables[i]}: expected {2 ** len(parents[i])} CPT entries, got {t.size}"
                )
            if not np.all((t >= 0.0) & (t <= 1.0)):
                raise ModelError(f"{self.variables[i]}: CPT entry outside [0, 1]")
            theta.append(_frozen(t))
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "theta", tuple(theta))
        object.__setattr__(self, "order", _topological_order(self.variables, parents))

    @classmethod
    def from_names(
        cls,
        variables: Sequence[str],
        parents: Mapping[str, Sequence[str]],
        theta: Mapping[str, Sequence[float]],
    ) -> "Network":
        idx = {v: i for i, v in enumerate(variables)}
        try:
            par = [tuple(idx[p] for p in parents.get(v, ())) for v in variables]
        except KeyError as exc:
            raise ModelError(f"undeclared parent {exc.args[0]}") from None
        return cls(tuple(variables), tuple(par), tuple(np.atleast_1d(theta[v]) for v in variables))

    def __len__(self) -> int:
        return len(self.variables)

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.variables == other.variables
            and self.parents == other.parents
            and all(np.array_equal(a, b) for a, b in zip(self.theta, other.theta))
        )

    __hash__ = None

    def index(self, name: str) -> int:
        try:
            return self.variables.index(name)
        except ValueError:
            raise ModelError(f"unknown variable {name!r}") from None

    @property
    def structure(self) -> tuple[tuple[str, ...], tuple[tuple[int, ...], ...]]:
        """Hashable key identifying the DAG (names and parent lists)."""
        return self.variables, self.parents

    @property
    def n_parameters(self) -> int:
        return sum(t.size for t in self.theta)

    def children(self, i: int) -> list[int]:
        return [c for c, ps in enumerate(self.parents) if i in ps]

    def leaves(self) -> list[int]:
        has_child = {p for ps in self.parents for p in ps}
        return [i for i in range(len(self)) if i not in has_child]

    def with_theta(self, theta: Sequence[np.ndarray]) -> "Network":
        return Network(self.variables, self.parents, tuple(theta))

    def max_abs_diff(self, other: "Network") -> float:
        return max(
            (float(np.max(np.abs(a - b))) for a, b in zip(self.theta, other.theta)),
            default=0.0,
        )


def parent_index(example: Sequence[int], parents: Sequence[int]) -> int | None:
    """Bit-pattern index of the parent instantiation set by ``example``,
    or None if any parent is missing."""
    u = 0
    for p in parents:
        v = example[p]
        if v == MISSING:
            return None
        u = (u << 1) | int(v)
    return u


def parse_network(text: str) -> Network:
    """Parse the line-oriented network format.

    ``var X`` declares a variable, ``parents X P1 ... Pk`` sets its parents
    and ``cpt X [bits] theta`` sets one CPT entry.  ``#`` starts a comment.
    """
    names: list[str] = []
    parent_names: dict[str, list[str]] = {}
    entries: dict[str, dict[int, float]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        kind, args = tokens[0], tokens[1:]
        where = f"line {lineno}"
        if kind == "var":
            if len(args) != 1:
                raise ModelError(f"{where}: 'var' takes exactly one name")
            if args[0] in entries:
                raise ModelError(f"{where}: duplicate variable {args[0]!r}")
            names.append(args[0])
            entries[args[0]] = {}
        elif kind == "parents":
            if not args or args[0] not in entries:
                raise ModelError(f"{where}: 'parents' for undeclared variable")
            if args[0] in parent_names:
                raise ModelError(f"{where}: parents of {args[0]!r} given twice")
            parent_names[args[0]] = args[1:]
        elif kind == "cpt":
            if not args or args[0] not in entries:
                raise ModelError(f"{where}: 'cpt' for undeclared variable")
            if len(args) == 2:
                bits, value = "", args[1]
            elif len(args) == 3:
                bits, value = args[1], args[2]
            else:
                raise ModelError(f"{where}: malformed 'cpt' line")
            if bits and set(bits) - {"0", "1"}:
                raise ModelError(f"{where}: bad bit pattern {bits!r}")
            try:
                theta = float(value)
            except ValueError:
                raise ModelError(f"{where}: bad probability {value!r}") from None
            if not 0.0 <= theta <= 1.0:
                raise ModelError(f"{where}: probability {theta} outside [0, 1]")
            entries[args[0]][(len(bits), int(bits, 2) if bits else 0)] = theta
        else:
            raise ModelError(f"{where}: unknown directive {kind!r}")

    for child, ps in parent_names.items():
        for p in ps:
            if p not in entries:
                raise ModelError(f"undeclared parent {p!r} of {child!r}")
    theta = {}
    for v in names:
        k = len(parent_names.get(v, ()))
        table = entries[v]
        if any(width != k for width, _ in table):
            raise ModelError(f"{v}: bit pattern width must equal its {k} parents")
        missing = [u for u in range(2**k) if (k, u) not in table]
        if missing:
            raise ModelError(f"{v}: missing CPT entry for parent pattern {format(missing[0], f'0{k}b') if k else '(root)'}")
        theta[v] = [table[(k, u)] for u in range(2**k)]
    return Network.from_names(names, parent_names, theta)


def serialize_network(network: Network) -> str:
    out = io.StringIO()
    for v in network.variables:
        out.write(f"var {v}\n")
    for i, v in enumerate(network.variables):
        if network.parents[i]:
            out.write(f"parents {v} {' '.join(network.variables[p] for p in network.parents[i])}\n")
    for i, v in enumerate(network.variables):
        k = len(network.parents[i])
        for u, t in enumerate(network.theta[i]):
            bits = f" {format(u, f'0{k}b')}" if k else ""
            # repr round-trips exactly (17 significant digits)
            out.write(f"cpt {v}{bits} {float(t)!r}\n")
    return out.getvalue()


@dataclass(frozen=True, eq=False)
class Dataset:
    """Examples over a fixed variable header.

    ``rows`` is an ``(N, n)`` int8 array with cells in ``{1, 0, MISSING}``.
    """

    header: tuple[str, ...]
    rows: np.ndarray

    def __post_init__(self):
        header = tuple(self.header)
        rows = np.array(self.rows, dtype=np.int8)
        if rows.size == 0:
            rows = rows.reshape(0, len(header))
        if rows.ndim != 2 or rows.shape[1] != len(header):
            raise ModelError("every example needs exactly one value per header variable")
        if not np.all(np.isin(rows, (0, 1, MISSING))):
            raise ModelError("dataset cells must be 1, 0 or missing")
        object.__setattr__(self, "header", header)
        object.__setattr__(self, "rows", _frozen(rows))

    def __len__(self) -> int:
        return self.rows.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.header == other.header and np.array_equal(self.rows, other.rows)

    __hash__ = None

    def is_complete(self) -> bool:
        return not np.any(self.rows == MISSING)

    def check_header(self, network: Network) -> None:
        if self.header != network.variables:
            raise ModelError(
                f"dataset header {list(self.header)} does not match network variables {list(network.variables)}"
            )


def parse_dataset(text: str) -> Dataset:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ModelError("dataset has no header row")
    header = tuple(h.strip() for h in lines[0].split(","))
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != len(header):
            raise ModelError(f"line {lineno}: expected {len(header)} cells, got {len(cells)}")
        try:
            rows.append([_CELL_TOKENS[c] for c in cells])
        except KeyError as exc:
            raise ModelError(f"line {lineno}: unknown token {exc.args[0]!r}") from None
    return Dataset(header, np.array(rows, dtype=np.int8).reshape(len(rows), len(header)))


def serialize_dataset(dataset: Dataset) -> str:
    out = io.StringIO()
    out.write(",".join(dataset.header) + "\n")
    for row in dataset.rows:
        out.write(",".join(_CELL_CHARS[int(c)] for c in row) + "\n")
    return out.getvalue()


def distinct_examples(dataset: Dataset) -> list[tuple[tuple[int, ...], int]]:
    """Distinct examples with multiplicities, in first-occurrence order."""
    rows, counts, _ = distinct_rows(dataset)
    return [(tuple(int(c) for c in r), int(m)) for r, m in zip(rows, counts)]


def distinct_rows(dataset: Dataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Array form of :func:`distinct_examples`.

    Returns ``(rows, counts, first_index)`` where ``first_index[j]`` is the
    position in the dataset where distinct row ``j`` first occurs.
    """
    if len(dataset) == 0:
        n = len(dataset.header)
        return np.zeros((0, n), np.int8), np.zeros(0, np.int64), np.zeros(0, np.int64)
    uniq, first, inverse, counts = np.unique(
        dataset.rows, axis=0, return_index=True, return_inverse=True, return_counts=True
    )
    perm = np.argsort(first, kind="stable")
    return uniq[perm], counts[perm], first[perm]


@dataclass(frozen=True, eq=False)
class BetaPriors:
    """Beta exponents per (variable, parent instantiation), both >= 1."""

    alpha: tuple[np.ndarray, ...]
    beta: tuple[np.ndarray, ...]

    def __post_init__(self):
        alpha = tuple(_frozen(np.array(a, dtype=float).reshape(-1)) for a in self.alpha)
        beta = tuple(_frozen(np.array(b, dtype=float).reshape(-1)) for b in self.beta)
        if len(alpha) != len(beta) or any(a.shape != b.shape for a, b in zip(alpha, beta)):
            raise ModelError("alpha and beta must have matching shapes")
        for a, b in zip(alpha, beta):
            if np.any(a < 1.0) or np.any(b < 1.0):
                raise ModelError("Beta exponents must be >= 1")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def uniform(cls, network: Network, alpha: float = 1.0, beta: float = 1.0) -> "BetaPriors":
        return cls(
            tuple(np.full(t.size, float(alpha)) for t in network.theta),
            tuple(np.full(t.size, float(beta)) for t in network.theta),
        )

    def matches(self, network: Network) -> bool:
        return len(self.alpha) == len(network) and all(
            a.shape == t.shape for a, t in zip(self.alpha, network.theta)
        )


def simulate_dataset(network: Network, n: int, hidden: Iterable[str] = (), seed: int = 0) -> Dataset:
    """Forward-sample ``n`` examples, then blank out the hidden variables.

    Example ``i`` draws its uniforms from its own stream seeded by
    ``(seed, i)``, so row ``i`` does not depend on how many rows are drawn.
    """
    hidden_idx = sorted({network.index(h) for h in hidden})
    nv = len(network)
    if n < 0:
        raise ModelError("sample size must be non-negative")
    uniforms = np.empty((n, nv))
    for i in range(n):
        uniforms[i] = np.random.default_rng([seed, i]).random(nv)
    rows = np.zeros((n, nv), dtype=np.int8)
    for v in network.order:
        u = np.zeros(n, dtype=np.int64)
        for p in network.parents[v]:
            u = (u << 1) | rows[:, p]
        rows[:, v] = uniforms[:, v] < network.theta[v][u]
    rows[:, hidden_idx] = MISSING
    return Dataset(network.variables, rows)


def hide_at_random(dataset: Dataset, variables: Iterable[int], prob: float, seed: int = 0) -> Dataset:
    """Independently replace each cell of the given columns by MISSING with
    probability ``prob``."""
    rng = np.random.default_rng(seed)
    rows = dataset.rows.copy()
    for v in sorted(set(variables)):
        mask = rng.random(len(dataset)) < prob
        rows[mask, v] = MISSING
    return Dataset(dataset.header, rows)


def random_network(
    n_vars: int,
    rng: np.random.Generator,
    max_parents: int = 3,
    low: float = 0.05,
    high: float = 0.95,
    edge_prob: float = 0.5,
    prefix: str = "X",
) -> Network:
    """Random DAG consistent with the order X0 < X1 < ...; each variable
    picks up to ``max_parents`` earlier variables as parents."""
    width = len(str(max(n_vars - 1, 0)))
    names = [f"{prefix}{i:0{width}d}" for i in range(n_vars)]
    parents = []
    for i in range(n_vars):
        candidates = [j for j in range(i) if rng.random() < edge_prob]
        if len(candidates) > max_parents:
            candidates = sorted(rng.choice(candidates, size=max_parents, replace=False).tolist())
        parents.append(tuple(candidates))
    theta = tuple(rng.uniform(low, high, size=2 ** len(ps)) for ps in parents)
    return Network(tuple(names), tuple(parents), theta)


def choose_hidden(network: Network, fraction: float, seed: int) -> list[str]:
    """``ceil(fraction * n)`` variable names chosen uniformly at random."""
    if not 0.0 <= fraction <= 1.0:
        raise ModelError(f"hidden fraction {fraction} outside [0, 1]")
    k = math.ceil(fraction * len(network) - 1e-12)
    rng = np.random.default_rng(seed)
    chosen = sorted(rng.choice(len(network), size=k, replace=False).tolist())
    return [network.variables[i] for i in chosen]
