"""Replicated experiment drivers with machine-readable result tables.

Every experiment is a pure function of its configuration: replicate r uses
a stream derived from (master seed, r), rows are assembled in replicate
order, and result CSVs are written with repr-exact floats, so a rerun with
the same configuration is byte-identical no matter how many worker
processes executed the replicates.
"""

from __future__ import annotations

import csv
import io
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import annealing as ann
from .decompose import build_decomposition
from .engine import run_smc
from .graph import brute_force_log_partition
from .models import discrete as mdiscrete
from .models import gmrf as mgmrf
from .models import lda as mlda
from .models import xy as mxy
from .pmcmc import CompiledAncestorWeights, PgasBlockKernel, partial_blocking_gibbs, pgas_kernel
from .lattice import double_spiral_blocks

__all__ = [
    "ExperimentConfig",
    "ResultTable",
    "SCHEMA_VERSION",
    "derive_seed",
    "replicate_rng",
    "compute_acf",
    "integrated_autocorr_time",
    "mc_standard_error",
    "bootstrap_ci",
    "mse_table",
    "matched_annealing_runs",
    "run_experiment",
    "xy_experiment",
    "unbiased_experiment",
    "acf_experiment",
    "lda_experiment",
    "gmrf_chain_experiment",
]

SCHEMA_VERSION = 1
COLUMNS = ("experiment", "method", "ordering", "N", "replicate", "metric", "value")


class ShortChainError(ValueError):
    """The chain is too short for the requested lag."""


# ---------------------------------------------------------------------------
# Seeding
# ---------------------------------------------------------------------------


def _tag(name: str) -> int:
    """Stable small integer for a method/ordering name (process-independent)."""
    return zlib.crc32(str(name).encode()) & 0xFFFF


def derive_seed(master, *indices) -> int:
    """Stable 64-bit seed hashed from the master seed and index tuple."""
    ss = np.random.SeedSequence(entropy=(int(master),) + tuple(int(i) for i in indices))
    a, b = ss.generate_state(2)
    return int(a) << 32 | int(b)


def replicate_rng(master, replicate) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=(int(master), int(replicate)))
    )


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


def compute_acf(values, center: float, max_lag: int) -> np.ndarray:
    """Autocorrelation centered at a supplied exact mean.

    rho(tau) = [sum_t (x_t - mu)(x_{t+tau} - mu) / (T - tau)]
             / [sum_t (x_t - mu)^2 / T]
    for tau = 0..max_lag.  Burn-in is the caller's responsibility.
    """
    x = np.asarray(values, dtype=float) - center
    n = len(x)
    if n <= max_lag:
        raise ShortChainError(f"chain of length {n} cannot support lag {max_lag}")
    denom = float(np.sum(x * x)) / n
    out = np.empty(max_lag + 1)
    for tau in range(max_lag + 1):
        upper = n - tau
        out[tau] = float(np.sum(x[:upper] * x[tau:tau + upper])) / upper / denom
    return out


def integrated_autocorr_time(values, center: float) -> float:
    """Initial-positive-sequence estimate of the integrated autocorrelation
    time: 1 + 2 sum rho(tau), truncated at the first nonpositive pair sum."""
    x = np.asarray(values, dtype=float)
    max_lag = min(len(x) - 1, 2000)
    rho = compute_acf(x, center, max_lag)
    total = 0.0
    m = 1
    while m + 1 <= max_lag:
        pair = rho[m] + rho[m + 1]
        if pair <= 0:
            break
        total += pair
        m += 2
    return 1.0 + 2.0 * total


def mc_standard_error(values, center: float) -> float:
    """Standard error of the chain mean around ``center``, inflated by the
    integrated autocorrelation time."""
    x = np.asarray(values, dtype=float)
    var = float(np.mean((x - center) ** 2))
    tau = integrated_autocorr_time(x, center)
    return math.sqrt(var * tau / len(x))


def bootstrap_ci(values, n_boot: int = 10_000, level: float = 0.95, rng=None):
    """Percentile bootstrap interval for the mean: (low, high, mean)."""
    x = np.asarray(values, dtype=float)
    if len(x) < 2:
        raise ValueError("bootstrap needs at least two values")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    idx = rng.integers(0, len(x), size=(n_boot, len(x)))
    means = x[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    low, high = np.quantile(means, [alpha, 1.0 - alpha])
    return float(low), float(high), float(x.mean())


def mse_table(estimates: dict, reference: float):
    """Rows of (method, N, mse) from per-(method, N) estimate lists."""
    if reference is None or not math.isfinite(reference):
        raise ValueError("a finite reference value is required")
    rows = []
    for (method, n), vals in sorted(estimates.items()):
        err = np.asarray(vals, dtype=float) - reference
        rows.append((method, int(n), float(np.mean(err * err))))
    return rows


def matched_annealing_runs(n_particles, n_steps, n_temps, sweeps, n_sites) -> int:
    """Importance-run count that matches the sequential sampler's budget.

    One particle-step counts as one single-site update, so
    runs = N * K / (temps * sweeps * sites), at least 1.
    """
    cost = n_particles * n_steps
    per_run = max(1, n_temps * max(sweeps, 1) * n_sites)
    return max(1, round(cost / per_run))


# ---------------------------------------------------------------------------
# Result table
# ---------------------------------------------------------------------------


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)

    def add(self, experiment, method, ordering, n, replicate, metric, value):
        self.rows.append(
            (
                str(experiment),
                str(method),
                str(ordering),
                "" if n is None else int(n),
                "" if replicate is None else int(replicate),
                str(metric),
                float(value),
            )
        )

    def extend(self, other: "ResultTable"):
        self.rows.extend(other.rows)

    def values(self, metric=None, method=None, ordering=None, n=None):
        out = []
        for row in self.rows:
            if metric is not None and row[5] != metric:
                continue
            if method is not None and row[1] != method:
                continue
            if ordering is not None and row[2] != ordering:
                continue
            if n is not None and row[3] != int(n):
                continue
            out.append(row[6])
        return out

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"# graphsmc-results v{SCHEMA_VERSION}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in self.rows:
            writer.writerow(
                [row[0], row[1], row[2], row[3], row[4], row[5], repr(row[6])]
            )
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_csv_text())

    @classmethod
    def load(cls, path) -> "ResultTable":
        table = cls()
        with open(path) as fh:
            first = fh.readline()
            if not first.startswith("# graphsmc-results"):
                raise ValueError("not a graphsmc result table")
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != COLUMNS:
                raise ValueError(f"unexpected columns {header}")
            for rec in reader:
                table.rows.append(
                    (
                        rec[0],
                        rec[1],
                        rec[2],
                        int(rec[3]) if rec[3] else "",
                        int(rec[4]) if rec[4] else "",
                        rec[5],
                        float(rec[6]),
                    )
                )
        return table


# ---------------------------------------------------------------------------
# Configuration and worker-pool plumbing
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    experiment: str
    master_seed: int = 0
    replicates: int = 10
    workers: int = 1
    out: str | None = None
    params: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.params.get(key, default)


def _replicate_task(payload):
    cfg, rep = payload
    fn = _REPLICATE_FNS[cfg.experiment]
    return rep, fn(cfg, rep)


def _map_replicates(cfg: ExperimentConfig):
    """Run the per-replicate function for all replicates, in a worker pool
    when requested, assembling outputs in replicate order."""
    payloads = [(cfg, r) for r in range(cfg.replicates)]
    if cfg.workers <= 1:
        results = [_replicate_task(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_replicate_task, payloads))
    return [out for _, out in sorted(results, key=lambda t: t[0])]


def _parse_size(size, default_rows=4, default_cols=4):
    if size is None:
        return default_rows, default_cols
    if isinstance(size, (tuple, list)):
        return int(size[0]), int(size[1])
    r, _, c = str(size).lower().partition("x")
    return int(r), int(c)


# ---------------------------------------------------------------------------
# XY: ordering / method comparison for log Z
# ---------------------------------------------------------------------------


def _xy_model(cfg) -> mxy.XYModel:
    rows, cols = _parse_size(cfg.get("size", "8x8"))
    return mxy.XYModel(rows, cols, beta=float(cfg.get("beta", 1.1)), periodic=bool(cfg.get("periodic", True)))


def _xy_smc_logz(model, ordering, n_particles, seed):
    decomp = mxy.default_decomposition(model, ordering, seed=derive_seed(seed, 101) if ordering in ("rndn", "random_neighbour") else None)
    proposal = mxy.adapted_proposal(model, decomp)
    _, zest = run_smc(decomp, proposal, n_particles, seed=seed)
    return zest.log_z


def _xy_replicate(cfg, rep):
    model = _xy_model(cfg)
    orderings = cfg.get("orderings", ["lr"])
    n_grid = [int(n) for n in cfg.get("n_grid", [cfg.get("particles", 100)])]
    methods = cfg.get("methods", ["smc"])
    temps = int(cfg.get("temps", 1000))
    sweeps = int(cfg.get("sweeps", 1))
    ladder = ann.make_ladder(cfg.get("ladder", "linear"), temps)
    out = []
    for n in n_grid:
        for method in methods:
            if method == "smc":
                for ordering in orderings:
                    seed = derive_seed(cfg.master_seed, rep, n, _tag(ordering))
                    out.append((method, ordering, n, _xy_smc_logz(model, ordering, n, seed)))
            else:
                runs = matched_annealing_runs(n, model.n_sites, temps, sweeps, model.n_sites)
                rng = np.random.default_rng(derive_seed(cfg.master_seed, rep, n, 7))
                amod = ann.XYAnnealing(model)
                if method == "ais":
                    out.append((method, "", n, ann.run_ais(amod, ladder, runs, sweeps, rng).log_z))
                elif method == "asir":
                    out.append((method, "", n, ann.run_asir(amod, ladder, max(runs, 2), sweeps, rng)))
                else:
                    raise ValueError(f"unknown method {method!r}")
    return out


def _xy_reference(cfg, model) -> float:
    """High-budget reference for the squared-error tables.

    Default: mean final estimate of three large fully adapted runs in
    row-major order.  ``reference="ais"`` switches to the annealing
    protocol (10000 rungs, 5000 runs).
    """
    kind = cfg.get("reference", "self")
    if kind == "ais":
        ladder = ann.make_ladder("linear", 10_000)
        amod = ann.XYAnnealing(model)
        res = ann.run_ais(amod, ladder, 5000, 1, np.random.default_rng(derive_seed(cfg.master_seed, 9_999)))
        return res.log_z
    n_ref = int(cfg.get("reference_particles", 20_000))
    vals = [
        _xy_smc_logz(model, "lr", n_ref, derive_seed(cfg.master_seed, 10_000 + i))
        for i in range(3)
    ]
    return float(np.mean(vals))


def xy_experiment(cfg: ExperimentConfig) -> ResultTable:
    model = _xy_model(cfg)
    table = ResultTable()
    per_rep = _map_replicates(cfg)
    for rep, rows in enumerate(per_rep):
        for method, ordering, n, logz in rows:
            table.add("xy", method, ordering, n, rep, "log_z", logz)
    reference = _xy_reference(cfg, model)
    table.add("xy", "reference", "lr", None, None, "reference_log_z", reference)
    estimates = {}
    for rep, rows in enumerate(per_rep):
        for method, ordering, n, logz in rows:
            key = (f"{method}:{ordering}" if ordering else method, n)
            estimates.setdefault(key, []).append(logz)
    for method, n, mse in mse_table(estimates, reference):
        name, _, ordering = method.partition(":")
        table.add("xy", name, ordering, n, None, "mse", mse)
    return table


# ---------------------------------------------------------------------------
# Unbiasedness harness on an enumerable binary field
# ---------------------------------------------------------------------------


def _unbiased_graph(cfg):
    rows, cols = _parse_size(cfg.get("size", "4x4"))
    return mdiscrete.random_binary_mrf(rows, cols, np.random.default_rng(derive_seed(cfg.master_seed, 1)))


def _unbiased_replicate(cfg, rep):
    graph = _unbiased_graph(cfg)
    n = int(cfg.get("particles", 100))
    methods = cfg.get("methods", ["smc"])
    temps = int(cfg.get("temps", 20))
    sweeps = int(cfg.get("sweeps", 1))
    out = []
    for method in methods:
        seed = derive_seed(cfg.master_seed, rep, _tag(method))
        if method == "smc":
            decomp = build_decomposition(graph, "lr")
            from .engine import UniformProposal

            _, zest = run_smc(decomp, UniformProposal(decomp), n, seed=seed)
            out.append((method, n, zest.log_z))
        elif method == "ais":
            amod = ann.DiscreteGraphAnnealing(graph)
            runs = matched_annealing_runs(n, graph.n_vars, temps, sweeps, graph.n_vars)
            res = ann.run_ais(amod, ann.make_ladder(cfg.get("ladder", "linear"), temps), runs, sweeps, np.random.default_rng(seed))
            out.append((method, n, res.log_z))
        elif method == "asir":
            amod = ann.DiscreteGraphAnnealing(graph)
            logz = ann.run_asir(amod, ann.make_ladder(cfg.get("ladder", "linear"), temps), n, sweeps, np.random.default_rng(seed))
            out.append((method, n, logz))
        else:
            raise ValueError(f"unknown method {method!r}")
    return out


def unbiased_experiment(cfg: ExperimentConfig) -> ResultTable:
    """3-standard-error check of mean(Z_hat / Z) against enumeration."""
    graph = _unbiased_graph(cfg)
    exact = brute_force_log_partition(graph)
    table = ResultTable()
    table.add("unbiased", "exact", "", None, None, "log_z", exact)
    per_rep = _map_replicates(cfg)
    methods = {}
    for rep, rows in enumerate(per_rep):
        for method, n, logz in rows:
            table.add("unbiased", method, "", n, rep, "log_z", logz)
            methods.setdefault((method, n), []).append(logz)
    for (method, n), vals in sorted(methods.items()):
        ratios = np.exp(np.asarray(vals) - exact)
        mean = float(ratios.mean())
        se = float(ratios.std(ddof=1) / math.sqrt(len(ratios)))
        table.add("unbiased", method, "", n, None, "z_ratio_mean", mean)
        table.add("unbiased", method, "", n, None, "z_ratio_se", se)
        table.add("unbiased", method, "", n, None, "within_3se", 1.0 if abs(mean - 1.0) <= 3 * se else 0.0)
    return table


# ---------------------------------------------------------------------------
# GMRF chains: sampler comparison via centered ACF
# ---------------------------------------------------------------------------


def _gmrf_model(cfg) -> mgmrf.GMRFModel:
    rows, cols = _parse_size(cfg.get("size", "10x10"), 10, 10)
    sigma_obs = float(cfg.get("sigma_obs", 1.0))
    sigma_pair = float(cfg.get("sigma_pair", 0.1))
    y = cfg.get("y")
    if y is None:
        y = mgmrf.simulate_observations(rows, cols, sigma_obs, sigma_pair, np.random.default_rng(derive_seed(cfg.master_seed, 2)))
    else:
        y = np.asarray(y, dtype=float)
    return mgmrf.GMRFModel(rows, cols, sigma_obs, sigma_pair, y)


def run_gmrf_chain(model, sampler, iterations, n_particles, rng, track=None, init=None):
    """One MCMC chain over the field posterior; rows are post-sweep states."""
    graph = model.graph()
    if init is None:
        init = model.y.copy()
    if sampler == "gibbs":
        return mgmrf.single_site_gibbs(model, iterations, rng, init=init, track=track)
    if sampler == "tree":
        return mgmrf.tree_sampler(model, iterations, rng, init=init, track=track)
    if sampler == "pgas":
        decomp = mgmrf.default_decomposition(model)
        proposal = mgmrf.adapted_proposal(model, decomp)
        deps = CompiledAncestorWeights(decomp)
        track_idx = np.arange(model.n_sites) if track is None else np.asarray(track, dtype=np.intp)
        state = np.asarray(init, dtype=float).copy()
        chain = np.empty((iterations, len(track_idx)))
        for it in range(iterations):
            state = pgas_kernel(decomp, proposal, state, n_particles, rng, deps=deps)
            chain[it] = state[track_idx]
        return chain
    if sampler == "pgas-pb":
        blocks = double_spiral_blocks(model.rows, model.cols)
        kernels = [
            PgasBlockKernel(graph, blk, lambda d: mgmrf.AdaptedGaussianProposal(d), n_particles)
            for blk in blocks
        ]
        return partial_blocking_gibbs(graph, list(blocks), kernels, iterations, rng, init=init, track=track)
    raise ValueError(f"unknown sampler {sampler!r}")


def acf_experiment(cfg: ExperimentConfig) -> ResultTable:
    """Centered autocorrelation curves for the four field samplers."""
    model = _gmrf_model(cfg)
    post = mgmrf.exact_posterior(model)
    samplers = cfg.get("samplers", ["gibbs", "pgas", "pgas-pb", "tree"])
    iterations = int(cfg.get("iterations", 10_000))
    burnin = float(cfg.get("burnin", 0.1))
    n_particles = int(cfg.get("particles", 50))
    track = int(cfg.get("track", 81))
    max_lag = int(cfg.get("max_lag", 50))
    table = ResultTable()
    table.add("acf", "exact", "", None, None, "posterior_mean", post.mean[track])
    for si, sampler in enumerate(samplers):
        rng = np.random.default_rng(derive_seed(cfg.master_seed, 3, si))
        chain = run_gmrf_chain(model, sampler, iterations, n_particles, rng, track=[track])
        kept = chain[int(burnin * iterations):, 0]
        rho = compute_acf(kept, post.mean[track], max_lag)
        for tau, value in enumerate(rho):
            table.add("acf", sampler, "", n_particles, None, f"acf_lag_{tau}", value)
        table.add("acf", sampler, "", n_particles, None, "chain_mean_err", float(np.mean(kept) - post.mean[track]))
    return table


def gmrf_chain_experiment(cfg: ExperimentConfig) -> ResultTable:
    """Single-chain run; records tracked values as chain_value rows."""
    model = _gmrf_model(cfg)
    sampler = cfg.get("sampler", "gibbs")
    iterations = int(cfg.get("iterations", 1000))
    n_particles = int(cfg.get("particles", 50))
    track = cfg.get("track")
    track_idx = [int(track)] if track is not None else None
    rng = np.random.default_rng(derive_seed(cfg.master_seed, 4))
    chain = run_gmrf_chain(model, sampler, iterations, n_particles, rng, track=track_idx)
    table = ResultTable()
    for it in range(chain.shape[0]):
        for col in range(chain.shape[1]):
            name = track if track is not None else col
            table.add("gmrf", sampler, "", n_particles, it, f"x_{name}", chain[it, col])
    return table


# ---------------------------------------------------------------------------
# LDA: held-out scoring comparison
# ---------------------------------------------------------------------------


def _lda_model_and_docs(cfg):
    t = int(cfg.get("topics", 4))
    w = int(cfg.get("vocab", 10))
    alpha = float(cfg.get("alpha", 0.3))
    rng = np.random.default_rng(derive_seed(cfg.master_seed, 5))
    phi_conc = float(cfg.get("word_concentration", 0.1))
    phi = rng.dirichlet(np.full(w, phi_conc), size=t)
    model = mlda.LDAModel(phi, alpha=alpha)
    docs = cfg.get("docs")
    if docs is None:
        docs = mlda.synthetic_corpus(model, int(cfg.get("n_docs", 10)), int(cfg.get("doc_len", 8)), rng)
    return model, docs


def _lda_replicate(cfg, rep):
    model, docs = _lda_model_and_docs(cfg)
    n = int(cfg.get("particles", 50))
    methods = cfg.get("methods", ["smc", "lrs"])
    out = []
    for di, doc in enumerate(docs):
        for method in methods:
            rng = np.random.default_rng(derive_seed(cfg.master_seed, rep, di, _tag(method)))
            if method == "smc":
                val = mlda.smc_heldout_loglik(model, doc, n, rng)
            elif method == "lrs":
                val = mlda.lrs_heldout_loglik(model, doc, n, rng, sweeps=int(cfg.get("sweeps", 1)))
            else:
                raise ValueError(f"unknown method {method!r}")
            out.append((method, di, n, val))
    return out


def lda_experiment(cfg: ExperimentConfig) -> ResultTable:
    model, docs = _lda_model_and_docs(cfg)
    table = ResultTable()
    for di, doc in enumerate(docs):
        if model.n_topics ** len(doc) <= 2**24:
            table.add("lda", "exact", f"doc{di}", None, None, "log_lik", mlda.exact_heldout_loglik(model, doc))
    per_rep = _map_replicates(cfg)
    for rep, rows in enumerate(per_rep):
        for method, di, n, val in rows:
            table.add("lda", method, f"doc{di}", n, rep, "log_lik", val)
    rng = np.random.default_rng(derive_seed(cfg.master_seed, 6))
    for di in range(len(docs)):
        for method in cfg.get("methods", ["smc", "lrs"]):
            vals = table.values(metric="log_lik", method=method, ordering=f"doc{di}")
            if len(vals) >= 2:
                low, high, mean = bootstrap_ci(np.asarray(vals), int(cfg.get("bootstrap", 10_000)), rng=rng)
                table.add("lda", method, f"doc{di}", None, None, "boot_low", low)
                table.add("lda", method, f"doc{di}", None, None, "boot_high", high)
                table.add("lda", method, f"doc{di}", None, None, "boot_mean", mean)
    return table


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

_REPLICATE_FNS = {
    "xy": _xy_replicate,
    "unbiased": _unbiased_replicate,
    "lda": _lda_replicate,
}

_EXPERIMENTS = {
    "xy": xy_experiment,
    "unbiased": unbiased_experiment,
    "acf": acf_experiment,
    "gmrf": gmrf_chain_experiment,
    "lda": lda_experiment,
}


def run_experiment(cfg: ExperimentConfig) -> ResultTable:
    """Execute a configuration and write its table when ``out`` is set."""
    try:
        fn = _EXPERIMENTS[cfg.experiment]
    except KeyError:
        raise ValueError(f"unknown experiment {cfg.experiment!r}") from None
    table = fn(cfg)
    if cfg.out:
        table.save(cfg.out)
    return table
