"""Particle Gibbs with ancestor sampling, and blocked Gibbs drivers.

``pgas_kernel`` runs a conditional SMC sweep: one particle slot is pinned
to a retained reference trajectory, the remaining slots follow the plain
sampler, and at every resampling boundary the reference's ancestor is
redrawn with probabilities proportional to

    w_{k-1}^i * prod_{j in A_k} psi_j(prefix_i joined with reference suffix)
               / q_{k-1}(prefix_i),

where A_k indexes the factor groups at or after step k that touch the
space already sampled.  Restricting the product to A_k is exact: every
other remaining group is independent of the prefix.  The kernel leaves the
decomposition's final target invariant for any number of particles N >= 2.

``partial_blocking_gibbs`` sweeps arbitrary per-block transition kernels
over a partition of the variables; with PGAS kernels per block it is an
SMC-based blocked Gibbs sampler, with exact conditional samplers it covers
single-site Gibbs and tree sampling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .decompose import Decomposition, conditional_decomposition
from .engine import Proposal, resample_multinomial
from .graph import FactorGraph, GaussianPairFactor, XYPairFactor

__all__ = [
    "DependencySets",
    "compute_dependency_sets",
    "ancestor_log_weights",
    "CompiledAncestorWeights",
    "pgas_kernel",
    "BlockPartition",
    "PgasBlockKernel",
    "partial_blocking_gibbs",
]


@dataclass(frozen=True)
class DependencySets:
    """For each step k >= 2, the indices j >= k of factor groups whose
    variables intersect the step-(k-1) sampled space."""

    sets: tuple[tuple[int, ...], ...]  # entry k-2 holds A_k

    def for_step(self, k: int) -> tuple[int, ...]:
        return self.sets[k - 2]

    @property
    def max_size(self) -> int:
        return max((len(s) for s in self.sets), default=0)


def compute_dependency_sets(decomp: Decomposition) -> DependencySets:
    """A_k = { j : k <= j <= K, sampled-prefix(k-1) meets the domain of group j }.

    Clamped variables never count: they are fixed on both sides of the
    boundary, so factors reaching only them carry no prefix information.
    """
    K = decomp.n_steps
    sets = []
    for k in range(2, K + 1):
        prev = decomp.cumulative_set(k - 1)
        a_k = tuple(
            j for j in range(k, K + 1) if prev & set(decomp.steps[j - 1].ind)
        )
        sets.append(a_k)
    return DependencySets(tuple(sets))


def ancestor_log_weights(
    decomp: Decomposition,
    k: int,
    prefix_values: np.ndarray,
    log_weights: np.ndarray,
    ref_values: np.ndarray,
    deps: DependencySets | None = None,
) -> np.ndarray:
    """Unnormalized log probabilities for the reference's ancestor at step k.

    ``prefix_values`` holds the step-(k-1) particles (full-width rows),
    ``ref_values`` the complete reference assignment whose suffix is being
    inherited.  Returns log w_{k-1}^i plus the A_k factor groups evaluated
    on each particle prefix joined with the reference suffix, minus the
    step-(k-1) twist.
    """
    if deps is None:
        deps = compute_dependency_sets(decomp)
    n = prefix_values.shape[0]
    tilde = np.tile(np.asarray(ref_values, dtype=float), (n, 1))
    prev_cols = list(decomp.cumulative(k - 1))
    tilde[:, prev_cols] = prefix_values[:, prev_cols]
    out = np.asarray(log_weights, dtype=float).copy()
    for j in deps.for_step(k):
        out += decomp.step_log_potential_rows(j, tilde)
    out -= decomp.log_twist_rows(k - 1, prefix_values)
    return out


class CompiledAncestorWeights:
    """Fast ancestor-weight evaluator for one decomposition.

    For each step the coupling terms between a particle prefix and the
    reference suffix are flattened into fused array operations; terms that
    are constant across particles (suffix-suffix pairs, observation pulls
    on suffix sites, constant twists) are dropped, so the returned log
    probabilities equal :func:`ancestor_log_weights` up to a per-step
    additive constant, which categorical sampling ignores.  Factor kinds
    without a fused form fall back to full evaluation on the joined rows.
    """

    def __init__(self, decomp: Decomposition, deps: DependencySets | None = None):
        self.decomp = decomp
        self.deps = deps if deps is not None else compute_dependency_sets(decomp)
        step_of = {}
        for step in decomp.steps:
            for v in step.new_vars:
                step_of[v] = step.index
        self._per_step = []
        for k in range(2, decomp.n_steps + 1):
            gp, xy, leftovers = [], [], []
            for j in self.deps.for_step(k):
                for f in decomp.step_factors(j):
                    sides = [
                        v in step_of and step_of[v] <= k - 1 for v in f.clique
                    ]
                    if not any(sides):
                        continue  # constant across particles
                    fused = gp if isinstance(f, GaussianPairFactor) else (
                        xy if isinstance(f, XYPairFactor) else None
                    )
                    if fused is None or all(sides):
                        leftovers.append(f)
                        continue
                    prefix_var = f.clique[0] if sides[0] else f.clique[1]
                    suffix_var = f.clique[1] if sides[0] else f.clique[0]
                    weight = 0.5 / f.sigma**2 if isinstance(f, GaussianPairFactor) else f.weight
                    fused.append((prefix_var, suffix_var, weight))
            def pack(terms):
                if not terms:
                    return None
                v, u, w = zip(*terms)
                return (
                    np.array(v, dtype=np.intp),
                    np.array(u, dtype=np.intp),
                    np.array(w, dtype=float),
                )

            self._per_step.append(
                (pack(gp), pack(xy), leftovers, callable(decomp.twists[k - 2]))
            )

    def __call__(self, k, prefix_values, log_weights, ref_values):
        gp, xy, leftovers, twisted = self._per_step[k - 2]
        out = np.array(log_weights, dtype=float, copy=True)
        if gp is not None:
            v, u, w = gp
            d = prefix_values[:, v] - ref_values[u]
            out -= (d * d) @ w
        if xy is not None:
            v, u, w = xy
            out += np.cos(prefix_values[:, v] - ref_values[u]) @ w
        if leftovers or twisted:
            n = prefix_values.shape[0]
            tilde = np.tile(np.asarray(ref_values, dtype=float), (n, 1))
            prev_cols = list(self.decomp.cumulative(k - 1))
            tilde[:, prev_cols] = prefix_values[:, prev_cols]
            for f in leftovers:
                out += f.log_potential_rows(tilde)
            if twisted:
                out -= self.decomp.log_twist_rows(k - 1, prefix_values)
        return out


def pgas_kernel(
    decomp: Decomposition,
    proposal: Proposal,
    ref_values: np.ndarray,
    n_particles: int,
    rng: np.random.Generator,
    deps: DependencySets | CompiledAncestorWeights | None = None,
) -> np.ndarray:
    """One conditional-SMC transition from the reference trajectory.

    The reference occupies the last particle slot.  Empty-increment steps
    update weights only (no resampling, no ancestor draw).  Returns the new
    trajectory, drawn from the final particles with probabilities
    proportional to their terminal weights.
    """
    if n_particles < 2:
        raise ValueError("conditional SMC needs at least two particles")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    if not isinstance(deps, CompiledAncestorWeights):
        deps = CompiledAncestorWeights(decomp, deps)
    graph = decomp.graph
    K = decomp.n_steps
    N = n_particles
    ref = np.asarray(ref_values, dtype=float)

    values = np.tile(ref, (N, 1))
    free = list(decomp.free_vars)
    values[:-1, free] = np.nan

    step1 = decomp.steps[0]
    logr = proposal.sample_initial(values, rng)
    values[N - 1, list(step1.new_vars)] = ref[list(step1.new_vars)]
    logr[N - 1] = proposal.log_initial_density(values[N - 1 : N])[0]
    logw = (
        decomp.step_log_potential_rows(1, values)
        + decomp.log_twist_rows(1, values)
        - logr
    )

    for k in range(2, K + 1):
        step = decomp.steps[k - 1]
        new = list(step.new_vars)
        if not new:
            logw = (
                logw
                + decomp.step_log_potential_rows(k, values)
                + decomp.log_twist_rows(k, values)
                - decomp.log_twist_rows(k - 1, values)
            )
            continue
        nu = proposal.log_adjustment(k - 1, values)
        anc = np.empty(N, dtype=np.intp)
        anc[: N - 1] = resample_multinomial(nu + logw, N - 1, rng)
        anc[N - 1] = resample_multinomial(deps(k, values, logw, ref), 1, rng)[0]
        values = values[anc]
        logr = proposal.sample_increment(k, values, rng)
        values[N - 1, new] = ref[new]
        logr[N - 1] = proposal.log_increment_density(k, values[N - 1 : N])[0]
        logw = (
            decomp.step_log_potential_rows(k, values)
            + decomp.log_twist_rows(k, values)
            - decomp.log_twist_rows(k - 1, values)
            - nu[anc]
            - logr
        )

    winner = resample_multinomial(logw, 1, rng)[0]
    return values[winner].copy()


# ---------------------------------------------------------------------------
# Partial blocking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockPartition:
    """Disjoint variable blocks covering the whole graph, each with the
    factor ids whose cliques touch it."""

    blocks: tuple[tuple[int, ...], ...]
    clique_sets: tuple[tuple[int, ...], ...]

    @classmethod
    def build(cls, graph: FactorGraph, blocks: Sequence[Sequence[int]]) -> "BlockPartition":
        blocks = tuple(tuple(int(v) for v in b) for b in blocks)
        flat = [v for b in blocks for v in b]
        if sorted(flat) != list(range(graph.n_vars)):
            raise ValueError("blocks must partition the variable set")
        cliques = tuple(
            tuple(
                fi
                for fi, f in enumerate(graph.factors)
                if set(f.clique) & set(b)
            )
            for b in blocks
        )
        return cls(blocks, cliques)

    def conditional_decompositions(self, graph: FactorGraph) -> list[Decomposition]:
        return [conditional_decomposition(graph, b) for b in self.blocks]


class PgasBlockKernel:
    """Conditional-SMC update of one block given the rest of the state.

    The block's decomposition walks its variables in the given order; the
    proposal is built once (it reads clamped neighbour values straight from
    the state row at call time).
    """

    def __init__(
        self,
        graph: FactorGraph,
        block: Sequence[int],
        proposal_factory: Callable[[Decomposition], Proposal],
        n_particles: int,
    ):
        self.decomp = conditional_decomposition(graph, block)
        self.proposal = proposal_factory(self.decomp)
        self.n_particles = int(n_particles)
        self.deps = CompiledAncestorWeights(self.decomp)

    def __call__(self, state: np.ndarray, rng) -> np.ndarray:
        new = pgas_kernel(
            self.decomp, self.proposal, state, self.n_particles, rng, deps=self.deps
        )
        state[:] = new
        return state


def partial_blocking_gibbs(
    graph: FactorGraph,
    blocks: Sequence[Sequence[int]],
    kernels: Sequence[Callable],
    iterations: int,
    rng,
    scan: str = "systematic",
    init=None,
    track=None,
) -> np.ndarray:
    """Sweep block kernels over a partition of the variables.

    ``kernels[m]`` must update block m of a full state row in place (and
    return it), targeting p(block_m | rest).  One chain row is recorded
    after each full sweep.  ``scan`` is "systematic" (fixed block order)
    or "random" (fresh permutation per sweep).
    """
    part = blocks if isinstance(blocks, BlockPartition) else BlockPartition.build(graph, blocks)
    if len(kernels) != len(part.blocks):
        raise ValueError("need exactly one kernel per block")
    if scan not in ("systematic", "random"):
        raise ValueError("scan must be 'systematic' or 'random'")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    state = np.zeros(graph.n_vars) if init is None else np.asarray(init, dtype=float).copy()
    track_idx = np.arange(graph.n_vars) if track is None else np.asarray(track, dtype=np.intp)
    chain = np.empty((iterations, len(track_idx)))
    m = len(kernels)
    for it in range(iterations):
        order = range(m) if scan == "systematic" else rng.permutation(m)
        for b in order:
            state = kernels[b](state, rng)
        chain[it] = state[track_idx]
    return chain
