"""Planar-rotor (XY) lattice model with exact one-site adaptation.

Each site carries an angle in (-pi, pi]; every lattice edge contributes
``beta * J_ij * cos(x_i - x_j)`` to the log density.  Conditioned on its
already-placed neighbours, a new site is von Mises distributed: the sum of
edge cosines collapses to ``kappa * cos(x_k - mu)`` with ``kappa e^{i mu} =
sum_j beta J_kj e^{i x_j}``.  Sampling that conditional and using its
normalizer ``2 pi I_0(kappa)`` as the adjustment multiplier makes the SMC
sampler fully adapted: every importance weight equals one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..decompose import Decomposition, build_decomposition
from ..engine import Proposal
from ..graph import Angle, FactorGraph, LatticeInfo, XYPairFactor, wrap_angle
from ..lattice import grid_edges

__all__ = [
    "XYModel",
    "VonMisesParams",
    "combine_cosines",
    "von_mises_params",
    "log_bessel_i0",
    "sample_von_mises",
    "adapted_proposal",
    "default_decomposition",
    "AdaptedVonMisesProposal",
]

LOG_TWO_PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class XYModel:
    """Square-lattice XY model at inverse temperature ``beta``.

    ``couplings`` optionally overrides the uniform coupling J per edge,
    keyed by the (min, max) variable-id pair.
    """

    rows: int
    cols: int
    beta: float
    periodic: bool = True
    coupling: float = 1.0
    couplings: Mapping[tuple[int, int], float] | None = field(default=None, hash=False)

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")

    @property
    def n_sites(self) -> int:
        return self.rows * self.cols

    def edge_coupling(self, i: int, j: int) -> float:
        if self.couplings is not None:
            return float(self.couplings.get((min(i, j), max(i, j)), self.coupling))
        return self.coupling

    def graph(self) -> FactorGraph:
        factors = [
            XYPairFactor(i, j, self.beta * self.edge_coupling(i, j))
            for i, j in grid_edges(self.rows, self.cols, self.periodic)
        ]
        return FactorGraph(
            [Angle()] * self.n_sites,
            factors,
            lattice=LatticeInfo(self.rows, self.cols, self.periodic),
        )


@dataclass(frozen=True)
class VonMisesParams:
    kappa: float
    mu: float

    def __post_init__(self):
        if not (self.kappa >= 0 and math.isfinite(self.kappa)):
            raise ValueError("kappa must be finite and nonnegative")


def combine_cosines(weights, angles):
    """Collapse sum_j w_j cos(x - a_j) into kappa * cos(x - mu).

    Works on matching arrays; returns (kappa, mu) arrays.  Empty input
    gives kappa = 0 (uniform).
    """
    weights = np.asarray(weights, dtype=float)
    angles = np.asarray(angles, dtype=float)
    c = np.sum(weights * np.cos(angles), axis=-1)
    s = np.sum(weights * np.sin(angles), axis=-1)
    return np.hypot(c, s), np.arctan2(s, c)


def von_mises_params(model: XYModel, decomp: Decomposition, k: int, values) -> VonMisesParams:
    """Conditional parameters of the step-k site given the placed prefix.

    ``values`` must cover the step-(k-1) space (mapping or full row); the
    parameters collapse the step's edge factors into a single cosine.
    """
    if k < 2:
        raise ValueError("the initial site has no placed neighbours; use k >= 2")
    step = decomp.steps[k - 1]
    (site,) = step.new_vars
    if isinstance(values, np.ndarray):
        row = values
    else:
        row = np.full(decomp.graph.n_vars, np.nan)
        for i, v in values.items():
            row[i] = v
    ws, angs = [], []
    for f in decomp.step_factors(k):
        if not isinstance(f, XYPairFactor):
            raise ValueError("step factors must be planar-spin pair factors")
        other = f.clique[0] if f.clique[1] == site else f.clique[1]
        ws.append(f.weight)
        angs.append(row[other])
    kappa, mu = combine_cosines(np.array(ws), np.array(angs))
    return VonMisesParams(float(kappa), float(mu))


def log_bessel_i0(kappa):
    """log I_0(kappa) for kappa >= 0.

    Power series below kappa = 20, scaled asymptotic expansion above;
    accurate to ~1e-13 relative on the series branch and better than
    1e-10 on the asymptotic branch.
    """
    k = np.asarray(kappa, dtype=float)
    if np.any(k < 0):
        raise ValueError("kappa must be nonnegative")
    scalar = k.ndim == 0
    k = np.atleast_1d(k)
    out = np.empty_like(k)

    small = k <= 20.0
    if small.any():
        x = k[small]
        q = 0.25 * x * x
        term = np.ones_like(x)
        total = np.ones_like(x)
        for m in range(1, 90):
            term = term * q / (m * m)
            total += term
            if np.all(term <= 1e-18 * total):
                break
        out[small] = np.log(total)

    big = ~small
    if big.any():
        x = k[big]
        inv8 = 1.0 / (8.0 * x)
        term = np.ones_like(x)
        total = np.ones_like(x)
        for m in range(40):
            term = term * (2 * m + 1) ** 2 * inv8 / (m + 1)
            total += term
            if np.all(term <= 1e-17 * total):
                break
        out[big] = x - 0.5 * np.log(2.0 * np.pi * x) + np.log(total)

    return float(out[0]) if scalar else out


def sample_von_mises(params: VonMisesParams, rng: np.random.Generator, size=None):
    """Exact von Mises draws (wrapped-Cauchy rejection), wrapped to (-pi, pi]."""
    draws = rng.vonmises(params.mu, params.kappa, size=size)
    return wrap_angle(draws)


# ---------------------------------------------------------------------------
# Fully adapted proposal
# ---------------------------------------------------------------------------


class AdaptedVonMisesProposal(Proposal):
    """Exact conditional proposal with matching adjustment multipliers.

    Requires a decomposition that introduces one angle per step and whose
    step factors are pair factors linking the new site to placed (or
    clamped) sites.  Twists must be constants; their increments fold into
    the adjustment multipliers so the engine's weights stay at one.
    """

    adapted = True

    def __init__(self, decomp: Decomposition):
        self.decomp = decomp
        graph = decomp.graph
        self._site = []
        self._neigh = []    # per step: (variable ids, weights)
        twist_consts = []
        for step in decomp.steps:
            if len(step.new_vars) != 1:
                raise ValueError("adapted proposal needs one new site per step")
            (site,) = step.new_vars
            if not isinstance(graph.domain(site), Angle):
                raise ValueError("adapted proposal needs angle domains")
            others, ws = [], []
            for f in decomp.step_factors(step.index):
                if not isinstance(f, XYPairFactor) or site not in f.clique:
                    raise ValueError("step factors must be pair factors touching the new site")
                others.append(f.clique[0] if f.clique[1] == site else f.clique[1])
                ws.append(f.weight)
            self._site.append(site)
            self._neigh.append((np.array(others, dtype=np.intp), np.array(ws)))
            t = decomp.twists[step.index - 1]
            if callable(t):
                raise ValueError("adapted proposal needs constant twists")
            twist_consts.append(0.0 if t is None else float(t))
        self._twist = np.array(twist_consts)

    def _params(self, k, values):
        others, ws = self._neigh[k - 1]
        if len(others) == 0:
            n = values.shape[0]
            return np.zeros(n), np.zeros(n)
        ang = values[:, others]
        c = np.cos(ang) @ ws
        s = np.sin(ang) @ ws
        return np.hypot(c, s), np.arctan2(s, c)

    def _draw(self, k, values, rng):
        site = self._site[k - 1]
        kappa, mu = self._params(k, values)
        x = wrap_angle(rng.vonmises(mu, kappa))
        values[:, site] = x
        return kappa * np.cos(x - mu) - LOG_TWO_PI - log_bessel_i0(kappa)

    def sample_initial(self, values, rng):
        return self._draw(1, values, rng)

    def sample_increment(self, k, values, rng):
        return self._draw(k, values, rng)

    def log_adjustment(self, k, values):
        kappa, _ = self._params(k + 1, values)
        dt = self._twist[k] - self._twist[k - 1]
        return LOG_TWO_PI + log_bessel_i0(kappa) + dt

    def _density(self, k, values):
        site = self._site[k - 1]
        kappa, mu = self._params(k, values)
        return kappa * np.cos(values[:, site] - mu) - LOG_TWO_PI - log_bessel_i0(kappa)

    def log_initial_density(self, values):
        return self._density(1, values)

    def log_increment_density(self, k, values):
        return self._density(k, values)


def adapted_proposal(model: XYModel, decomp: Decomposition) -> AdaptedVonMisesProposal:
    return AdaptedVonMisesProposal(decomp)


def default_decomposition(model: XYModel, ordering="lr", seed=None) -> Decomposition:
    """One site per step in the requested order, with the first target
    normalized (its integral over the circle folds into the first twist),
    so the fully adapted sampler emits unit weights at every step."""
    graph = model.graph()
    decomp = build_decomposition(graph, ordering, seed=seed)
    if decomp.steps[0].factor_ids:
        raise AssertionError("first lattice site cannot carry a factor yet")
    twists = [-LOG_TWO_PI] + [None] * (decomp.n_steps - 1)
    if decomp.n_steps == 1:
        twists = [None]
    return Decomposition(graph, decomp.steps, twists=twists)
