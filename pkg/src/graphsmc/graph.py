"""Factor graphs over mixed discrete/continuous variables.

A factor graph is a list of variables (each with a domain) plus a list of
factors, where each factor attaches a nonnegative potential to a clique of
variables.  All potentials are stored and combined in log domain; ``-inf``
encodes a zero potential.  The unnormalized density of a full assignment is
the sum of the factor log-potentials, and the partition function is the
integral (or sum) of its exponential over all joint assignments.

Graphs are immutable after construction and evaluation is pure, so they can
be shared freely between threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "Discrete",
    "Angle",
    "RealLine",
    "VariableSpec",
    "Factor",
    "TableFactor",
    "XYPairFactor",
    "GaussianObsFactor",
    "GaussianPairFactor",
    "FunctionFactor",
    "LatticeInfo",
    "FactorGraph",
    "MissingVariableError",
    "DomainTooLargeError",
    "UnsupportedDomainError",
    "GraphFormatError",
    "eval_log_factor",
    "eval_log_unnorm_density",
    "brute_force_log_partition",
    "wrap_angle",
    "save_graph",
    "load_graph",
]

TWO_PI = 2.0 * math.pi


class MissingVariableError(ValueError):
    """An assignment does not cover every variable a factor needs."""


class DomainTooLargeError(ValueError):
    """The joint discrete state space exceeds the enumeration cap."""


class UnsupportedDomainError(ValueError):
    """An operation requires discrete domains but got a continuous one."""


class GraphFormatError(ValueError):
    """A graph description file violates the documented schema."""


def wrap_angle(x):
    """Wrap angles into the canonical half-open interval (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + np.pi, TWO_PI) - np.pi
    y = np.where(y == -np.pi, np.pi, y)
    return float(y) if np.isscalar(x) or np.ndim(x) == 0 else y


# ---------------------------------------------------------------------------
# Variable domains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Discrete:
    """Finite domain {0, ..., cardinality - 1}."""

    cardinality: int

    def __post_init__(self):
        if self.cardinality < 1:
            raise ValueError(f"cardinality must be >= 1, got {self.cardinality}")

    def contains(self, value) -> bool:
        v = float(value)
        return v == int(v) and 0 <= int(v) < self.cardinality


@dataclass(frozen=True)
class Angle:
    """Circular domain, canonically the half-open interval (-pi, pi]."""

    def contains(self, value) -> bool:
        return -math.pi < float(value) <= math.pi


@dataclass(frozen=True)
class RealLine:
    """Unbounded real domain."""

    def contains(self, value) -> bool:
        return math.isfinite(float(value))


Domain = Discrete | Angle | RealLine


@dataclass(frozen=True)
class VariableSpec:
    id: int
    domain: Domain


# ---------------------------------------------------------------------------
# Factors
# ---------------------------------------------------------------------------


class Factor:
    """Base class: a log-potential over an ordered, duplicate-free clique.

    Subclasses implement ``log_potential`` on scalar clique values and the
    vectorized ``log_potential_rows`` on a full-width value matrix with one
    row per sample (only the clique's columns are read).
    """

    clique: tuple[int, ...]

    def __init__(self, clique: Sequence[int]):
        clique = tuple(int(c) for c in clique)
        if not clique:
            raise ValueError("factor clique must be non-empty")
        if len(set(clique)) != len(clique):
            raise ValueError(f"factor clique has duplicate variables: {clique}")
        self.clique = clique

    def log_potential(self, *values) -> float:
        raise NotImplementedError

    def log_potential_rows(self, values: np.ndarray) -> np.ndarray:
        cols = [values[:, c] for c in self.clique]
        return np.array([self.log_potential(*row) for row in zip(*cols)])


class TableFactor(Factor):
    """Discrete factor backed by a dense log-value table.

    ``log_table`` is indexed by the clique variables in clique order
    (row-major), so serialization order is deterministic.
    """

    def __init__(self, clique, log_table):
        super().__init__(clique)
        table = np.asarray(log_table, dtype=float)
        if table.ndim != len(self.clique):
            raise ValueError(
                f"table rank {table.ndim} does not match clique size {len(self.clique)}"
            )
        if np.any(np.isnan(table)) or np.any(table == np.inf):
            raise ValueError("log table entries must lie in [-inf, inf)")
        self.log_table = table

    def log_potential(self, *values):
        idx = tuple(int(v) for v in values)
        return float(self.log_table[idx])

    def log_potential_rows(self, values):
        idx = tuple(values[:, c].astype(np.intp) for c in self.clique)
        return self.log_table[idx]


class XYPairFactor(Factor):
    """Pairwise planar-spin interaction: log potential = weight * cos(x_i - x_j)."""

    def __init__(self, i, j, weight):
        super().__init__((i, j))
        self.weight = float(weight)

    def log_potential(self, xi, xj):
        return self.weight * math.cos(xi - xj)

    def log_potential_rows(self, values):
        i, j = self.clique
        return self.weight * np.cos(values[:, i] - values[:, j])


class GaussianObsFactor(Factor):
    """Unary Gaussian pull toward an observed value: -(x - y)^2 / (2 sigma^2)."""

    def __init__(self, i, y, sigma):
        super().__init__((i,))
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.y = float(y)
        self.sigma = float(sigma)

    def log_potential(self, x):
        return -((x - self.y) ** 2) / (2.0 * self.sigma**2)

    def log_potential_rows(self, values):
        d = values[:, self.clique[0]] - self.y
        return -(d * d) / (2.0 * self.sigma**2)


class GaussianPairFactor(Factor):
    """Pairwise Gaussian smoothness: -(x_i - x_j)^2 / (2 sigma^2)."""

    def __init__(self, i, j, sigma):
        super().__init__((i, j))
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.sigma = float(sigma)

    def log_potential(self, xi, xj):
        return -((xi - xj) ** 2) / (2.0 * self.sigma**2)

    def log_potential_rows(self, values):
        i, j = self.clique
        d = values[:, i] - values[:, j]
        return -(d * d) / (2.0 * self.sigma**2)


class FunctionFactor(Factor):
    """Arbitrary log-potential given as a callable (not serializable)."""

    def __init__(self, clique, fn: Callable, batch_fn: Callable | None = None):
        super().__init__(clique)
        self.fn = fn
        self.batch_fn = batch_fn

    def log_potential(self, *values):
        return float(self.fn(*values))

    def log_potential_rows(self, values):
        if self.batch_fn is not None:
            return np.asarray(self.batch_fn(*(values[:, c] for c in self.clique)))
        return super().log_potential_rows(values)


# ---------------------------------------------------------------------------
# Graph
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LatticeInfo:
    """Optional grid metadata; node ids are row-major (id = r * cols + c)."""

    rows: int
    cols: int
    periodic: bool = False

    @property
    def n_sites(self):
        return self.rows * self.cols


class FactorGraph:
    """Immutable collection of variables and factors."""

    def __init__(
        self,
        variables: Sequence[VariableSpec | Domain],
        factors: Sequence[Factor],
        lattice: LatticeInfo | None = None,
    ):
        specs = []
        for i, v in enumerate(variables):
            if isinstance(v, VariableSpec):
                specs.append(v)
            else:
                specs.append(VariableSpec(i, v))
        ids = [v.id for v in specs]
        if ids != list(range(len(specs))):
            raise ValueError("variable ids must be contiguous 0..|V|-1")
        self.variables: tuple[VariableSpec, ...] = tuple(specs)
        self.factors: tuple[Factor, ...] = tuple(factors)
        self.lattice = lattice
        n = len(self.variables)
        touching: list[list[int]] = [[] for _ in range(n)]
        for fi, f in enumerate(self.factors):
            for c in f.clique:
                if not 0 <= c < n:
                    raise ValueError(f"factor {fi} references unknown variable {c}")
                touching[c].append(fi)
        self._touching = tuple(tuple(t) for t in touching)

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    def domain(self, i: int) -> Domain:
        return self.variables[i].domain

    def factors_touching(self, i: int) -> tuple[int, ...]:
        """Indices of factors whose clique contains variable ``i``."""
        return self._touching[i]

    def all_discrete(self) -> bool:
        return all(isinstance(v.domain, Discrete) for v in self.variables)

    def cardinalities(self) -> np.ndarray:
        if not self.all_discrete():
            raise UnsupportedDomainError("graph has non-discrete variables")
        return np.array([v.domain.cardinality for v in self.variables], dtype=np.int64)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _clique_values(factor: Factor, assignment: Mapping[int, float]):
    try:
        return [assignment[c] for c in factor.clique]
    except KeyError as err:
        raise MissingVariableError(
            f"assignment misses variable {err.args[0]} of clique {factor.clique}"
        ) from None


def eval_log_factor(factor: Factor, assignment: Mapping[int, float]) -> float:
    """Log potential of one factor at an assignment covering its clique."""
    return float(factor.log_potential(*_clique_values(factor, assignment)))


def eval_log_unnorm_density(graph: FactorGraph, assignment: Mapping[int, float]) -> float:
    """Sum of all factor log-potentials; requires a full assignment."""
    for v in graph.variables:
        if v.id not in assignment:
            raise MissingVariableError(f"assignment misses variable {v.id}")
    return float(sum(eval_log_factor(f, assignment) for f in graph.factors))


def brute_force_log_partition(
    graph: FactorGraph, cap: int = 2**24, chunk: int = 2**15
) -> float:
    """Enumeration oracle: log sum over all joint discrete assignments.

    Streams the state space in chunks through a running log-sum-exp, so
    memory stays bounded by ``chunk`` rows.  Only valid for fully discrete
    graphs whose joint state count does not exceed ``cap``.
    """
    cards = graph.cardinalities()
    total = int(np.prod(cards, dtype=object))
    if total > cap:
        raise DomainTooLargeError(f"joint state space {total} exceeds cap {cap}")
    running = -np.inf
    for start in range(0, total, chunk):
        stop = min(start + chunk, total)
        flat = np.arange(start, stop, dtype=np.int64)
        values = np.empty((stop - start, graph.n_vars), dtype=float)
        rem = flat
        # row-major mixed-radix decode, last variable fastest
        for i in range(graph.n_vars - 1, -1, -1):
            values[:, i] = rem % cards[i]
            rem = rem // cards[i]
        logp = np.zeros(stop - start)
        for f in graph.factors:
            logp += f.log_potential_rows(values)
        m = float(np.max(logp))
        if m > -np.inf:
            block = m + math.log(float(np.sum(np.exp(logp - m))))
            running = np.logaddexp(running, block)
    return float(running)


# ---------------------------------------------------------------------------
# Graph description files (JSON schema, round-trip lossless)
# ---------------------------------------------------------------------------

_DOMAIN_TAGS = {"discrete", "angle", "real"}


def _domain_to_dict(d: Domain) -> dict:
    if isinstance(d, Discrete):
        return {"type": "discrete", "cardinality": d.cardinality}
    if isinstance(d, Angle):
        return {"type": "angle"}
    return {"type": "real"}


def _domain_from_dict(d: dict) -> Domain:
    t = d.get("type")
    if t == "discrete":
        return Discrete(int(d["cardinality"]))
    if t == "angle":
        return Angle()
    if t == "real":
        return RealLine()
    raise GraphFormatError(f"unknown domain type {t!r} (expected one of {_DOMAIN_TAGS})")


def _factor_to_dict(f: Factor) -> dict:
    if isinstance(f, TableFactor):
        return {
            "type": "table",
            "clique": list(f.clique),
            "log_values": f.log_table.ravel(order="C").tolist(),
        }
    if isinstance(f, XYPairFactor):
        return {"type": "xy_pair", "clique": list(f.clique), "weight": f.weight}
    if isinstance(f, GaussianObsFactor):
        return {"type": "gaussian_obs", "clique": list(f.clique), "y": f.y, "sigma": f.sigma}
    if isinstance(f, GaussianPairFactor):
        return {"type": "gaussian_pair", "clique": list(f.clique), "sigma": f.sigma}
    raise GraphFormatError(f"factor of type {type(f).__name__} is not serializable")


def _factor_from_dict(d: dict, graph_domains: Sequence[Domain]) -> Factor:
    t = d.get("type")
    clique = [int(c) for c in d.get("clique", [])]
    if t == "table":
        shape = []
        for c in clique:
            dom = graph_domains[c]
            if not isinstance(dom, Discrete):
                raise GraphFormatError("table factor over non-discrete variable")
            shape.append(dom.cardinality)
        vals = np.asarray(d["log_values"], dtype=float)
        if vals.size != int(np.prod(shape)):
            raise GraphFormatError(
                f"table factor expects {int(np.prod(shape))} log values, got {vals.size}"
            )
        return TableFactor(clique, vals.reshape(shape, order="C"))
    if t == "xy_pair":
        return XYPairFactor(clique[0], clique[1], d["weight"])
    if t == "gaussian_obs":
        return GaussianObsFactor(clique[0], d["y"], d["sigma"])
    if t == "gaussian_pair":
        return GaussianPairFactor(clique[0], clique[1], d["sigma"])
    raise GraphFormatError(f"unknown factor type {t!r}")


def graph_to_dict(graph: FactorGraph) -> dict:
    out = {
        "format": "graphsmc-graph",
        "version": 1,
        "variables": [
            {"id": v.id, "domain": _domain_to_dict(v.domain)} for v in graph.variables
        ],
        "factors": [_factor_to_dict(f) for f in graph.factors],
    }
    if graph.lattice is not None:
        out["lattice"] = {
            "rows": graph.lattice.rows,
            "cols": graph.lattice.cols,
            "periodic": graph.lattice.periodic,
        }
    return out


def graph_from_dict(data: dict) -> FactorGraph:
    if data.get("format") != "graphsmc-graph":
        raise GraphFormatError("not a graphsmc graph description")
    raw_vars = data.get("variables", [])
    domains = [None] * len(raw_vars)
    for rv in raw_vars:
        i = int(rv["id"])
        if not 0 <= i < len(raw_vars) or domains[i] is not None:
            raise GraphFormatError("variable ids must be contiguous and unique")
        domains[i] = _domain_from_dict(rv["domain"])
    factors = [_factor_from_dict(rf, domains) for rf in data.get("factors", [])]
    lattice = None
    if "lattice" in data:
        lat = data["lattice"]
        lattice = LatticeInfo(int(lat["rows"]), int(lat["cols"]), bool(lat["periodic"]))
    return FactorGraph(domains, factors, lattice=lattice)


def save_graph(graph: FactorGraph, path) -> None:
    with open(path, "w") as fh:
        json.dump(graph_to_dict(graph), fh, indent=1)
        fh.write("\n")


def load_graph(path) -> FactorGraph:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as err:
            raise GraphFormatError(f"invalid graph file: {err}") from None
    return graph_from_dict(data)
