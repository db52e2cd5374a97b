"""Sequential decompositions of a factor graph.

A decomposition splits the factor list into K ordered, disjoint groups and
tracks which variables each group introduces.  The running product of the
first k groups (optionally multiplied by a per-step twist that keeps the
intermediate functions integrable) defines the k-th intermediate target of
the SMC sampler; at k = K it is proportional to the full unnormalized
density of the graph.

Decompositions may also be *conditional*: a subset of variables is clamped
to externally supplied values, the steps cover only the free variables, and
step factors may reach into the clamped set.  This is how block samplers
target p(block | rest).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .graph import (
    Angle,
    Discrete,
    FactorGraph,
    MissingVariableError,
    RealLine,
)
from . import lattice as _lat

__all__ = [
    "DecompositionStep",
    "Decomposition",
    "DecompositionError",
    "ValidationReport",
    "build_decomposition",
    "build_grouped_decomposition",
    "conditional_decomposition",
    "resolve_order",
    "log_gamma",
    "validate",
    "ORDERING_NAMES",
]


class DecompositionError(ValueError):
    """Invalid ordering, grouping, or missing lattice metadata."""


@dataclass(frozen=True)
class DecompositionStep:
    """One target increment: factor group C_k plus introduced variables.

    ``ind`` is the union of the group's cliques.  ``new_vars`` are the
    variables this step adds to the growing space; it contains every
    clique variable not seen before, plus any factor-less variable the
    step was asked to introduce (a node can join before any factor
    touches it).
    """

    index: int  # 1-based step number k
    factor_ids: tuple[int, ...]
    ind: tuple[int, ...]
    new_vars: tuple[int, ...]


Twist = float | Callable


class Decomposition:
    """Ordered steps over a graph, with optional twists and clamped variables.

    ``twists[k-1]`` is the log twist for step k: ``None`` (log q = 0), a
    float constant, or a callable taking a full-width value row.  The final
    twist must be identically zero so the last target matches the graph.
    """

    def __init__(
        self,
        graph: FactorGraph,
        steps: Sequence[DecompositionStep],
        twists: Sequence[Twist | None] | None = None,
        clamped: Sequence[int] = (),
    ):
        self.graph = graph
        self.steps = tuple(steps)
        if not self.steps:
            raise DecompositionError("decomposition needs at least one step")
        self.clamped = tuple(sorted(int(c) for c in clamped))
        if twists is None:
            twists = [None] * len(self.steps)
        if len(twists) != len(self.steps):
            raise DecompositionError("need one twist entry per step")
        if twists[-1] not in (None, 0, 0.0):
            raise DecompositionError("final twist must be identically zero")
        self.twists = tuple(twists)

        cumulative = []
        seen: set[int] = set()
        for step in self.steps:
            seen |= set(step.new_vars)
            cumulative.append(tuple(sorted(seen)))
        self._cumulative = tuple(cumulative)
        self._cumulative_sets = tuple(frozenset(c) for c in cumulative)
        self._compiled = [
            _compile_factor_group([graph.factors[i] for i in step.factor_ids])
            for step in self.steps
        ]

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def cumulative(self, k: int) -> tuple[int, ...]:
        """Sorted variable ids of the step-k space (1-based k)."""
        return self._cumulative[k - 1]

    def cumulative_set(self, k: int) -> frozenset[int]:
        return self._cumulative_sets[k - 1]

    @property
    def free_vars(self) -> tuple[int, ...]:
        return self._cumulative[-1]

    def step_factors(self, k: int):
        return [self.graph.factors[i] for i in self.steps[k - 1].factor_ids]

    def log_twist(self, k: int, values_row) -> float:
        t = self.twists[k - 1]
        if t is None:
            return 0.0
        if callable(t):
            return float(t(values_row))
        return float(t)

    def log_twist_rows(self, k: int, values: np.ndarray) -> np.ndarray:
        t = self.twists[k - 1]
        n = values.shape[0]
        if t is None:
            return np.zeros(n)
        if callable(t):
            return np.array([float(t(values[i])) for i in range(n)])
        return np.full(n, float(t))

    def step_log_potential_rows(self, k: int, values: np.ndarray) -> np.ndarray:
        """Sum of step-k factor log potentials on full-width value rows.

        Parametric factors of a common kind are fused into single
        vectorized evaluations (this path dominates the particle loops).
        """
        out = np.zeros(values.shape[0])
        for fn in self._compiled[k - 1]:
            out += fn(values)
        return out

    def to_dict(self) -> dict:
        if any(t is not None and callable(t) for t in self.twists):
            raise DecompositionError("callable twists are not serializable")
        return {
            "format": "graphsmc-decomposition",
            "version": 1,
            "clamped": list(self.clamped),
            "twists": [t if t is None else float(t) for t in self.twists],
            "steps": [
                {"factors": list(s.factor_ids), "new_vars": list(s.new_vars)}
                for s in self.steps
            ],
        }

    @classmethod
    def from_dict(cls, graph: FactorGraph, data: Mapping) -> "Decomposition":
        if data.get("format") != "graphsmc-decomposition":
            raise DecompositionError("not a graphsmc decomposition description")
        steps = []
        seen: set[int] = set(int(c) for c in data.get("clamped", ()))
        clamped = tuple(sorted(seen))
        free_seen: set[int] = set()
        for k, s in enumerate(data["steps"], start=1):
            fids = tuple(int(i) for i in s["factors"])
            new_vars = tuple(int(v) for v in s["new_vars"])
            ind = _union_of_cliques(graph, fids)
            steps.append(DecompositionStep(k, fids, ind, new_vars))
            free_seen |= set(new_vars)
        twists = data.get("twists")
        return cls(graph, steps, twists=twists, clamped=clamped)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, graph: FactorGraph, path) -> "Decomposition":
        with open(path) as fh:
            return cls.from_dict(graph, json.load(fh))


def _union_of_cliques(graph, factor_ids):
    ind: set[int] = set()
    for fi in factor_ids:
        ind |= set(graph.factors[fi].clique)
    return tuple(sorted(ind))


def _compile_factor_group(factors):
    """Fuse same-kind parametric factors into single vectorized callables."""
    from .graph import GaussianObsFactor, GaussianPairFactor, XYPairFactor

    fns = []
    gauss_pairs, gauss_obs, xy_pairs, rest = [], [], [], []
    for f in factors:
        if isinstance(f, GaussianPairFactor):
            gauss_pairs.append(f)
        elif isinstance(f, GaussianObsFactor):
            gauss_obs.append(f)
        elif isinstance(f, XYPairFactor):
            xy_pairs.append(f)
        else:
            rest.append(f)
    if gauss_pairs:
        i = np.array([f.clique[0] for f in gauss_pairs], dtype=np.intp)
        j = np.array([f.clique[1] for f in gauss_pairs], dtype=np.intp)
        w = np.array([0.5 / f.sigma**2 for f in gauss_pairs])

        def eval_gauss_pairs(values, i=i, j=j, w=w):
            d = values[:, i] - values[:, j]
            return -(d * d) @ w

        fns.append(eval_gauss_pairs)
    if gauss_obs:
        i = np.array([f.clique[0] for f in gauss_obs], dtype=np.intp)
        y = np.array([f.y for f in gauss_obs])
        w = np.array([0.5 / f.sigma**2 for f in gauss_obs])

        def eval_gauss_obs(values, i=i, y=y, w=w):
            d = values[:, i] - y
            return -(d * d) @ w

        fns.append(eval_gauss_obs)
    if xy_pairs:
        i = np.array([f.clique[0] for f in xy_pairs], dtype=np.intp)
        j = np.array([f.clique[1] for f in xy_pairs], dtype=np.intp)
        w = np.array([f.weight for f in xy_pairs])

        def eval_xy_pairs(values, i=i, j=j, w=w):
            return np.cos(values[:, i] - values[:, j]) @ w

        fns.append(eval_xy_pairs)
    fns.extend(f.log_potential_rows for f in rest)
    return fns


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

ORDERING_NAMES = ("left_right", "diagonal", "spiral", "snake", "random_neighbour")

_LATTICE_ORDERS = {
    "left_right": _lat.order_left_right,
    "lr": _lat.order_left_right,
    "diagonal": _lat.order_diagonal,
    "diag": _lat.order_diagonal,
    "spiral": _lat.order_spiral,
    "snake": _lat.order_snake_columns,
}


def resolve_order(graph: FactorGraph, order, seed=None) -> list[int]:
    """Turn an ordering strategy into an explicit node order.

    ``order`` is either a strategy name (``left_right``/``lr``, ``diagonal``/
    ``diag``, ``spiral``, ``snake``, ``random_neighbour``/``rndn``), or an
    explicit sequence of variable ids.  Lattice strategies require the graph
    to carry lattice metadata; ``random_neighbour`` additionally needs a seed.
    """
    if not isinstance(order, str):
        ids = [int(v) for v in order]
        if sorted(ids) != list(range(graph.n_vars)):
            raise DecompositionError("explicit order must be a permutation of all variables")
        return ids
    name = order.lower()
    if name in ("random_neighbour", "rndn", "rnd-n"):
        if graph.lattice is None:
            raise DecompositionError("random_neighbour ordering needs lattice metadata")
        if seed is None:
            raise DecompositionError("random_neighbour ordering needs a seed")
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        return _lat.order_random_neighbour(graph.lattice, rng)
    fn = _LATTICE_ORDERS.get(name)
    if fn is None:
        raise DecompositionError(f"unknown ordering strategy {order!r}")
    if graph.lattice is None:
        raise DecompositionError(f"{order!r} ordering needs lattice metadata")
    return fn(graph.lattice)


def build_decomposition(
    graph: FactorGraph,
    order,
    twists: Sequence[Twist | None] | None = None,
    seed=None,
) -> Decomposition:
    """One node per step, in the given order.

    Step k introduces the k-th node of the order together with every factor
    not yet placed whose clique lies entirely inside the nodes added so far.
    The groups always partition the factor set and K = |V|.
    """
    node_order = resolve_order(graph, order, seed=seed)
    added: set[int] = set()
    placed = np.zeros(len(graph.factors), dtype=bool)
    steps = []
    for k, node in enumerate(node_order, start=1):
        added.add(node)
        fids = []
        for fi in graph.factors_touching(node):
            if not placed[fi] and set(graph.factors[fi].clique) <= added:
                placed[fi] = True
                fids.append(fi)
        fids = tuple(sorted(fids))
        steps.append(
            DecompositionStep(k, fids, _union_of_cliques(graph, fids), (node,))
        )
    if not placed.all():
        # unreachable for permutations, kept as a guard
        raise DecompositionError("some factors were never placed")
    return Decomposition(graph, steps, twists=twists)


def build_grouped_decomposition(
    graph: FactorGraph,
    factor_groups: Sequence[Sequence[int]],
    extra_vars: Sequence[Sequence[int]] | None = None,
    twists: Sequence[Twist | None] | None = None,
) -> Decomposition:
    """Explicit multi-factor steps (possibly with empty variable increments).

    ``factor_groups[k-1]`` lists the factor ids of step k; the groups must
    partition the factor set.  Variables enter at the first step whose group
    mentions them; ``extra_vars`` can introduce factor-less variables at a
    chosen step.  Steps whose groups only mention already-added variables
    get an empty increment (handled by the engine as weight-only steps).
    """
    n_extra = extra_vars or [[] for _ in factor_groups]
    if len(n_extra) != len(factor_groups):
        raise DecompositionError("extra_vars must align with factor_groups")
    seen_factors: set[int] = set()
    added: set[int] = set()
    steps = []
    for k, (group, extra) in enumerate(zip(factor_groups, n_extra), start=1):
        fids = tuple(int(i) for i in group)
        if seen_factors & set(fids):
            raise DecompositionError(f"factor groups overlap at step {k}")
        seen_factors |= set(fids)
        ind = _union_of_cliques(graph, fids)
        new_vars = tuple(sorted((set(ind) | set(extra)) - added))
        if k == 1 and not new_vars:
            raise DecompositionError("first step must introduce at least one variable")
        added |= set(new_vars)
        steps.append(DecompositionStep(k, fids, ind, new_vars))
    if seen_factors != set(range(len(graph.factors))):
        missing = sorted(set(range(len(graph.factors))) - seen_factors)
        raise DecompositionError(f"factor groups miss factors {missing}")
    if added != set(range(graph.n_vars)):
        missing = sorted(set(range(graph.n_vars)) - added)
        raise DecompositionError(f"variables never introduced: {missing}")
    return Decomposition(graph, steps, twists=twists)


def conditional_decomposition(
    graph: FactorGraph,
    block: Sequence[int],
    twists: Sequence[Twist | None] | None = None,
) -> Decomposition:
    """Decomposition of p(block | rest): steps walk ``block`` in order.

    Factors with no clique variable in the block are constants of the
    conditional and are excluded.  Remaining factors join at the first step
    where their in-block variables are all available (out-of-block clique
    variables are clamped, so they are always available).
    """
    block = [int(v) for v in block]
    block_set = set(block)
    if len(block_set) != len(block):
        raise DecompositionError("block contains duplicate variables")
    clamped = sorted(set(range(graph.n_vars)) - block_set)
    relevant = [
        fi for fi, f in enumerate(graph.factors) if set(f.clique) & block_set
    ]
    placed = {fi: False for fi in relevant}
    available = set(clamped)
    steps = []
    for k, node in enumerate(block, start=1):
        available.add(node)
        fids = []
        for fi in relevant:
            if not placed[fi] and set(graph.factors[fi].clique) <= available:
                placed[fi] = True
                fids.append(fi)
        fids = tuple(sorted(fids))
        steps.append(
            DecompositionStep(k, fids, _union_of_cliques(graph, fids), (node,))
        )
    return Decomposition(graph, steps, twists=twists, clamped=clamped)


# ---------------------------------------------------------------------------
# Evaluation and validation
# ---------------------------------------------------------------------------


def _as_row(decomp: Decomposition, k: int, assignment) -> np.ndarray:
    graph = decomp.graph
    if isinstance(assignment, np.ndarray) and assignment.ndim == 1:
        return assignment
    row = np.full(graph.n_vars, np.nan)
    for i, v in assignment.items():
        row[i] = v
    needed = set(decomp.cumulative(k)) | set(decomp.clamped)
    missing = [i for i in sorted(needed) if math.isnan(row[i])]
    if missing:
        raise MissingVariableError(f"assignment misses variables {missing}")
    return row


def log_gamma(decomp: Decomposition, k: int, assignment) -> float:
    """Log of the k-th intermediate target (factor groups 1..k plus twist).

    ``assignment`` covers the step-k space (mapping or full-width row); at
    k = K with default twists the value equals the graph's full unnormalized
    log density (restricted to the block, for conditional decompositions).
    """
    if not 1 <= k <= decomp.n_steps:
        raise ValueError(f"step {k} outside 1..{decomp.n_steps}")
    row = _as_row(decomp, k, assignment)[None, :]
    total = 0.0
    for ell in range(1, k + 1):
        total += float(decomp.step_log_potential_rows(ell, row)[0])
    return total + decomp.log_twist(k, row[0])


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def _random_row(graph: FactorGraph, rng) -> np.ndarray:
    row = np.empty(graph.n_vars)
    for v in graph.variables:
        if isinstance(v.domain, Discrete):
            row[v.id] = rng.integers(v.domain.cardinality)
        elif isinstance(v.domain, Angle):
            row[v.id] = rng.uniform(-np.pi, np.pi)
        else:
            row[v.id] = rng.standard_normal()
    return row


def validate(decomp: Decomposition, rng=None, n_probe: int = 8) -> ValidationReport:
    """Check the decomposition's structural conditions.

    Errors: factor groups must partition the factor set (for conditional
    decompositions, the factors touching the block), each step's ``ind``
    must match its cliques, every free variable must be introduced exactly
    once, and the final twist must vanish (probed at random assignments).
    Empty increments are reported as informational warnings only.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    report = ValidationReport()
    graph = decomp.graph
    block_set = set(range(graph.n_vars)) - set(decomp.clamped)
    expected = {
        fi for fi, f in enumerate(graph.factors) if set(f.clique) & block_set
    }
    seen: list[int] = []
    for step in decomp.steps:
        seen.extend(step.factor_ids)
        if _union_of_cliques(graph, step.factor_ids) != step.ind:
            report.errors.append(f"step {step.index}: ind does not match clique union")
        if not step.new_vars and step.index > 1:
            report.warnings.append(f"step {step.index}: empty increment")
    dup = {fi for fi in seen if seen.count(fi) > 1}
    if dup:
        report.errors.append(f"factors assigned to multiple steps: {sorted(dup)}")
    missing = expected - set(seen)
    if missing:
        report.errors.append(f"factors never assigned: {sorted(missing)}")
    alien = set(seen) - expected
    if alien:
        report.errors.append(f"steps include out-of-scope factors: {sorted(alien)}")

    introduced: list[int] = []
    for step in decomp.steps:
        introduced.extend(step.new_vars)
    if len(set(introduced)) != len(introduced):
        report.errors.append("a variable is introduced more than once")
    if set(introduced) != block_set:
        report.errors.append("introduced variables do not cover the free variable set")

    for _ in range(n_probe):
        row = _random_row(graph, rng)
        if decomp.log_twist(decomp.n_steps, row) != 0.0:
            report.errors.append("final twist is not identically zero")
            break
    return report
