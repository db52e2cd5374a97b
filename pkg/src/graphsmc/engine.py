"""Auxiliary sequential Monte Carlo over a decomposition.

The sampler follows the classic auxiliary scheme: an initial importance
draw targeting the first increment, then for each later step a multinomial
ancestor draw with probabilities proportional to adjustment multipliers
times weights, a proposal draw for the new variables, and an incremental
importance weight

    W_k = gamma_k / (gamma_{k-1} * nu_{k-1} * r_k).

Steps that introduce no new variables skip resampling and proposal and
only multiply the weights by the target ratio.  The running product of
per-step weight means is an unbiased estimator of the normalizing constant
of the final target.

Randomness comes from one counter-based stream per (seed, step), so a run
is reproducible bit-for-bit regardless of how callers schedule work.
Weights are kept unnormalized throughout; normalization happens only
inside resampling and the estimator.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .decompose import Decomposition
from .graph import Angle, Discrete

__all__ = [
    "Proposal",
    "UniformProposal",
    "AdaptedDiscreteProposal",
    "ParticleSystem",
    "ZEstimate",
    "DegenerateWeightsError",
    "run_smc",
    "log_weight",
    "estimate_log_partition",
    "resample_multinomial",
    "resample_systematic",
    "effective_sample_size",
    "step_stream",
    "normalize_first_step",
    "save_trace",
]


class DegenerateWeightsError(RuntimeError):
    """Every particle weight vanished; the proposal misses the support."""


def step_stream(seed, step: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, step index)."""
    ss = np.random.SeedSequence(entropy=(int(seed), int(step)))
    return np.random.Generator(np.random.Philox(ss))


def _logmeanexp(logx: np.ndarray) -> float:
    return float(logsumexp(logx) - math.log(len(logx)))


def effective_sample_size(log_weights) -> float:
    """(sum w)^2 / sum w^2, computed from log weights; lies in [1, N]."""
    lw = np.asarray(log_weights, dtype=float)
    m = np.max(lw)
    if m == -np.inf:
        raise DegenerateWeightsError("all weights are zero")
    w = np.exp(lw - m)
    return float(w.sum() ** 2 / np.sum(w * w))


def _normalized_cdf(log_probs):
    lp = np.asarray(log_probs, dtype=float)
    m = np.max(lp)
    if m == -np.inf or not np.isfinite(m):
        raise DegenerateWeightsError("resampling needs at least one finite log probability")
    p = np.exp(lp - m)
    cdf = np.cumsum(p)
    return cdf / cdf[-1]


def resample_multinomial(log_probs, n: int, rng: np.random.Generator) -> np.ndarray:
    """n independent categorical draws with probabilities prop. to exp(log_probs)."""
    cdf = _normalized_cdf(log_probs)
    idx = np.searchsorted(cdf, rng.random(n), side="right")
    return np.minimum(idx, len(cdf) - 1).astype(np.intp)


def resample_systematic(log_probs, n: int, rng: np.random.Generator) -> np.ndarray:
    """Systematic resampling (lower variance, not covered by the unbiasedness proof)."""
    cdf = _normalized_cdf(log_probs)
    points = (rng.random() + np.arange(n)) / n
    idx = np.searchsorted(cdf, points, side="right")
    return np.minimum(idx, len(cdf) - 1).astype(np.intp)


_RESAMPLERS = {"multinomial": resample_multinomial, "systematic": resample_systematic}


# ---------------------------------------------------------------------------
# Proposals
# ---------------------------------------------------------------------------


class Proposal:
    """Sampling interface for one decomposition.

    Proposals operate on a full-width value matrix with one row per
    particle: ``sample_initial``/``sample_increment`` write the columns of
    the variables the step introduces and return the log proposal density
    of what they wrote.  ``log_adjustment(k, values)`` returns the log
    adjustment multiplier nu_k used to bias resampling toward the next
    target (identically zero for non-adapted proposals).

    ``adapted`` declares that (r_k, nu_{k-1}) satisfy the full-adaptation
    identities, in which case every weight the engine emits equals one up
    to floating-point error.
    """

    adapted: bool = False

    def sample_initial(self, values: np.ndarray, rng) -> np.ndarray:
        raise NotImplementedError

    def sample_increment(self, k: int, values: np.ndarray, rng) -> np.ndarray:
        raise NotImplementedError

    def log_adjustment(self, k: int, values: np.ndarray) -> np.ndarray:
        return np.zeros(values.shape[0])

    def log_increment_density(self, k: int, values: np.ndarray) -> np.ndarray:
        """Density of the step-k increment stored in ``values``.

        Needed by conditional SMC (the pinned reference is not sampled, so
        its proposal density must be evaluated) and by the incremental
        weight diagnostic.
        """
        raise NotImplementedError(f"{type(self).__name__} cannot evaluate increment densities")

    def log_initial_density(self, values: np.ndarray) -> np.ndarray:
        """Density of the first-step draw stored in ``values``."""
        return self.log_increment_density(1, values)


class UniformProposal(Proposal):
    """Uniform independent draws over discrete or angle domains, nu = 1."""

    def __init__(self, decomp: Decomposition):
        self.decomp = decomp
        graph = decomp.graph
        for step in decomp.steps:
            for v in step.new_vars:
                if not isinstance(graph.domain(v), (Discrete, Angle)):
                    raise ValueError("UniformProposal needs discrete or angle domains")

    def _draw(self, varids, values, rng):
        graph = self.decomp.graph
        n = values.shape[0]
        logr = np.zeros(n)
        for v in varids:
            dom = graph.domain(v)
            if isinstance(dom, Discrete):
                values[:, v] = rng.integers(dom.cardinality, size=n)
                logr -= math.log(dom.cardinality)
            else:
                values[:, v] = np.pi - rng.random(n) * (2.0 * np.pi)
                logr -= math.log(2.0 * np.pi)
        return logr

    def sample_initial(self, values, rng):
        return self._draw(self.decomp.steps[0].new_vars, values, rng)

    def sample_increment(self, k, values, rng):
        return self._draw(self.decomp.steps[k - 1].new_vars, values, rng)

    def log_increment_density(self, k, values):
        graph = self.decomp.graph
        total = 0.0
        for v in self.decomp.steps[k - 1].new_vars:
            dom = graph.domain(v)
            total -= math.log(dom.cardinality if isinstance(dom, Discrete) else 2.0 * np.pi)
        return np.full(values.shape[0], total)


class AdaptedDiscreteProposal(Proposal):
    """Fully adapted proposal for small discrete increments, by enumeration.

    For each step the joint domain of the new variables is enumerated;
    r_k is the exact conditional of the next target and nu_{k-1} its
    normalizer, so all weights are one (the first-step weight additionally
    requires the first target to be normalized, see
    :func:`normalize_first_step`).
    """

    adapted = True

    def __init__(self, decomp: Decomposition, max_states: int = 4096):
        self.decomp = decomp
        graph = decomp.graph
        self._grids = []
        for step in decomp.steps:
            cards = []
            for v in step.new_vars:
                dom = graph.domain(v)
                if not isinstance(dom, Discrete):
                    raise ValueError("AdaptedDiscreteProposal needs discrete increments")
                cards.append(dom.cardinality)
            m = int(np.prod(cards)) if cards else 1
            if m > max_states:
                raise ValueError(f"step {step.index} increment has {m} > {max_states} states")
            grid = np.stack(
                [g.ravel() for g in np.meshgrid(*[np.arange(c) for c in cards], indexing="ij")],
                axis=1,
            ) if cards else np.zeros((1, 0))
            self._grids.append(grid)

    def _logits(self, k, values):
        """(n, m) log target-increment for every candidate assignment."""
        decomp = self.decomp
        step = decomp.steps[k - 1]
        grid = self._grids[k - 1]
        n, m = values.shape[0], grid.shape[0]
        logits = np.empty((n, m))
        prev_twist = decomp.log_twist_rows(k - 1, values) if k > 1 else 0.0
        saved = values[:, step.new_vars].copy()
        for j in range(m):
            values[:, step.new_vars] = grid[j]
            logits[:, j] = (
                decomp.step_log_potential_rows(k, values)
                + decomp.log_twist_rows(k, values)
                - prev_twist
            )
        values[:, step.new_vars] = saved
        return logits

    def _sample(self, k, values, rng):
        step = self.decomp.steps[k - 1]
        grid = self._grids[k - 1]
        logits = self._logits(k, values)
        lognorm = logsumexp(logits, axis=1)
        p = np.exp(logits - lognorm[:, None])
        cdf = np.cumsum(p, axis=1)
        u = rng.random(values.shape[0])
        choice = np.minimum(
            (u[:, None] > cdf).sum(axis=1), grid.shape[0] - 1
        ).astype(np.intp)
        values[:, step.new_vars] = grid[choice]
        return logits[np.arange(len(choice)), choice] - lognorm

    def sample_initial(self, values, rng):
        return self._sample(1, values, rng)

    def sample_increment(self, k, values, rng):
        return self._sample(k, values, rng)

    def log_adjustment(self, k, values):
        return logsumexp(self._logits(k + 1, values), axis=1)

    def log_increment_density(self, k, values):
        step = self.decomp.steps[k - 1]
        grid = self._grids[k - 1]
        logits = self._logits(k, values)
        current = values[:, step.new_vars]
        match = np.all(current[:, None, :] == grid[None, :, :], axis=2)
        idx = np.argmax(match, axis=1)
        return logits[np.arange(values.shape[0]), idx] - logsumexp(logits, axis=1)


def normalize_first_step(decomp: Decomposition) -> Decomposition:
    """Return a copy whose first twist makes the first target a density.

    Only enumerable discrete first steps are supported; the lattice models
    install their own closed-form constants instead.
    """
    graph = decomp.graph
    step = decomp.steps[0]
    twists = list(decomp.twists)
    if callable(twists[0]):
        raise ValueError("cannot fold a constant into a callable twist")
    cards = []
    for v in step.new_vars:
        dom = graph.domain(v)
        if not isinstance(dom, Discrete):
            raise ValueError("can only normalize enumerable discrete first steps")
        cards.append(dom.cardinality)
    grid = np.stack(
        [g.ravel() for g in np.meshgrid(*[np.arange(c) for c in cards], indexing="ij")],
        axis=1,
    )
    rows = np.full((grid.shape[0], graph.n_vars), np.nan)
    rows[:, step.new_vars] = grid
    base = decomp.log_twist_rows(1, rows)
    logz1 = float(logsumexp(decomp.step_log_potential_rows(1, rows) + base))
    prev = 0.0 if twists[0] is None else float(twists[0])
    twists[0] = prev - logz1
    return Decomposition(decomp.graph, decomp.steps, twists=twists, clamped=decomp.clamped)


# ---------------------------------------------------------------------------
# Particle system
# ---------------------------------------------------------------------------


@dataclass
class ParticleSystem:
    """Complete record of one SMC run.

    ``log_adjustments[k-1]`` holds log nu_k for the boundaries where
    resampling actually happened (NaN elsewhere); ``ancestors`` row k-1
    holds a_k (identity where no resampling took place).  ``history``
    stores per-step snapshots of the value matrix when requested, each in
    that step's own particle indexing (rows of step k descend from rows
    ``ancestors[k-1]`` of step k-1).
    """

    decomposition: Decomposition
    n_particles: int
    values: np.ndarray            # (N, n_vars) final trajectories
    log_weights: np.ndarray       # (K, N)
    log_adjustments: np.ndarray   # (K, N), row k-1 = log nu_k where defined
    ancestors: np.ndarray         # (K, N) int
    resampled: np.ndarray         # (K,) bool, True if step k drew ancestors
    ess: np.ndarray               # (K,)
    wall_ns: np.ndarray           # (K,)
    history: list | None = None


@dataclass
class ZEstimate:
    """Running log of the normalizing-constant estimator, one entry per step."""

    log_z_per_step: np.ndarray

    @property
    def log_z(self) -> float:
        return float(self.log_z_per_step[-1])


def estimate_log_partition(system: ParticleSystem, k: int) -> float:
    """Estimator at step k from the stored weights and adjustments.

    log of (mean of step-k weights) plus the sum over earlier resampling
    boundaries of log mean(nu_l * w_l), everything via log-sum-exp.
    """
    if not 1 <= k <= system.log_weights.shape[0]:
        raise ValueError(f"step {k} outside the completed range")
    total = _logmeanexp(system.log_weights[k - 1])
    for ell in range(2, k + 1):
        if system.resampled[ell - 1]:
            total += _logmeanexp(
                system.log_adjustments[ell - 2] + system.log_weights[ell - 2]
            )
    return total


def log_weight(decomp: Decomposition, proposal: Proposal, k: int, values: np.ndarray) -> np.ndarray:
    """Incremental weight function for step k >= 2 on full-width rows.

    log gamma_k - log gamma_{k-1} - log nu_{k-1} - log r_k, where the
    increment density is evaluated through the proposal.  Rows must cover
    the step-k space.
    """
    if k < 2:
        raise ValueError("the incremental weight function is defined for k >= 2")
    values = np.atleast_2d(values)
    return (
        decomp.step_log_potential_rows(k, values)
        + decomp.log_twist_rows(k, values)
        - decomp.log_twist_rows(k - 1, values)
        - proposal.log_adjustment(k - 1, values)
        - proposal.log_increment_density(k, values)
    )


# ---------------------------------------------------------------------------
# The sampler
# ---------------------------------------------------------------------------


def run_smc(
    decomp: Decomposition,
    proposal: Proposal,
    n_particles: int,
    seed,
    *,
    base_values=None,
    resampling: str = "multinomial",
    ess_threshold: float | None = None,
    record_history: bool = False,
) -> tuple[ParticleSystem, ZEstimate]:
    """Run the sampler over all steps of ``decomp``.

    Parameters
    ----------
    n_particles : number of particles N >= 1.
    seed : integer key for the per-step random streams.
    base_values : full-width row of values for clamped variables
        (required when the decomposition is conditional).
    resampling : "multinomial" (default, matches the unbiasedness proof)
        or "systematic".
    ess_threshold : if set, resample only when ESS < threshold * N
        (excluded from the unbiasedness guarantees).
    record_history : keep per-step snapshots of the particle matrix.

    Returns the particle system and the running partition-function
    estimate.  Raises :class:`DegenerateWeightsError` if every particle
    weight vanishes at some step.
    """
    if n_particles < 1:
        raise ValueError("need at least one particle")
    resampler = _RESAMPLERS[resampling]
    graph = decomp.graph
    K = decomp.n_steps
    N = n_particles

    values = np.full((N, graph.n_vars), np.nan)
    if decomp.clamped:
        if base_values is None:
            raise ValueError("conditional decomposition needs base_values for clamped variables")
        base = np.asarray(base_values, dtype=float)
        values[:, decomp.clamped] = base[list(decomp.clamped)]

    log_weights = np.empty((K, N))
    log_nu = np.full((K, N), np.nan)
    ancestors = np.tile(np.arange(N, dtype=np.intp), (K, 1))
    resampled = np.zeros(K, dtype=bool)
    ess = np.empty(K)
    wall = np.empty(K, dtype=np.int64)
    history = [] if record_history else None

    t0 = time.perf_counter_ns()
    rng = step_stream(seed, 1)
    logr = proposal.sample_initial(values, rng)
    logw = (
        decomp.step_log_potential_rows(1, values)
        + decomp.log_twist_rows(1, values)
        - logr
    )
    _check_alive(logw, 1)
    log_weights[0] = logw
    ess[0] = effective_sample_size(logw)
    wall[0] = time.perf_counter_ns() - t0
    if record_history:
        history.append(values.copy())

    log_norm = 0.0  # accumulated log of resampling normalizers
    log_z = np.empty(K)
    log_z[0] = _logmeanexp(logw)

    for k in range(2, K + 1):
        t0 = time.perf_counter_ns()
        step = decomp.steps[k - 1]
        rng = step_stream(seed, k)
        if not step.new_vars:
            # weight-only step: multiply by the target ratio
            logw = (
                logw
                + decomp.step_log_potential_rows(k, values)
                + decomp.log_twist_rows(k, values)
                - decomp.log_twist_rows(k - 1, values)
            )
        else:
            do_resample = True
            if ess_threshold is not None:
                do_resample = effective_sample_size(logw) < ess_threshold * N
            if do_resample:
                nu = proposal.log_adjustment(k - 1, values)
                log_nu[k - 2] = nu
                anc = resampler(nu + logw, N, rng)
                ancestors[k - 1] = anc
                resampled[k - 1] = True
                log_norm += _logmeanexp(nu + logw)
                values = values[anc]
                logr = proposal.sample_increment(k, values, rng)
                logw = (
                    decomp.step_log_potential_rows(k, values)
                    + decomp.log_twist_rows(k, values)
                    - decomp.log_twist_rows(k - 1, values)
                    - nu[anc]
                    - logr
                )
            else:
                logr = proposal.sample_increment(k, values, rng)
                logw = (
                    logw
                    + decomp.step_log_potential_rows(k, values)
                    + decomp.log_twist_rows(k, values)
                    - decomp.log_twist_rows(k - 1, values)
                    - logr
                )
        _check_alive(logw, k)
        log_weights[k - 1] = logw
        ess[k - 1] = effective_sample_size(logw)
        log_z[k - 1] = _logmeanexp(logw) + log_norm
        wall[k - 1] = time.perf_counter_ns() - t0
        if record_history:
            history.append(values.copy())

    system = ParticleSystem(
        decomposition=decomp,
        n_particles=N,
        values=values,
        log_weights=log_weights,
        log_adjustments=log_nu,
        ancestors=ancestors,
        resampled=resampled,
        ess=ess,
        wall_ns=wall,
        history=history,
    )
    return system, ZEstimate(log_z_per_step=log_z)


def _check_alive(logw, k):
    if np.max(logw) == -np.inf:
        raise DegenerateWeightsError(
            f"all {len(logw)} particle weights vanished at step {k}; "
            "the proposal does not cover the target support"
        )


def save_trace(system: ParticleSystem, zest: ZEstimate, path_prefix: str) -> None:
    """Write ``<prefix>.npz`` (binary arrays) and ``<prefix>.csv`` (summary).

    The CSV has one row per step: step, ess, log_z_hat, wall_ns.
    """
    np.savez_compressed(
        f"{path_prefix}.npz",
        values=system.values,
        log_weights=system.log_weights,
        log_adjustments=system.log_adjustments,
        ancestors=system.ancestors,
        resampled=system.resampled,
        ess=system.ess,
        log_z_per_step=zest.log_z_per_step,
        wall_ns=system.wall_ns,
    )
    with open(f"{path_prefix}.csv", "w") as fh:
        fh.write("step,ess,log_z_hat,wall_ns\n")
        for k in range(system.log_weights.shape[0]):
            fh.write(
                f"{k + 1},{system.ess[k]!r},{zest.log_z_per_step[k]!r},{system.wall_ns[k]}\n"
            )
