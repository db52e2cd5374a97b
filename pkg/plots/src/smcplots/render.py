"""Render static figures from experiment result tables.

The input is the versioned long-format CSV written by the experiment
drivers (columns: experiment, method, ordering, N, replicate, metric,
value).  Four figure kinds are supported:

- ``mse_lines``: mean-squared error of log-Z estimates against particle
  count, log-log axes, one line per method/ordering.
- ``boxplot``: per-replicate log-Z estimates, one box per method.
- ``acf``: autocorrelation against lag, one line per sampler.
- ``loglik_bars``: bootstrap mean and interval of held-out log-likelihood,
  one bar group per document, one bar per method.

Rendering never recomputes statistics: the CSV is the single source of
truth.  Each call returns the drawn data series and their checksum so
golden tests can pin outputs exactly.
"""

from __future__ import annotations

import csv
import hashlib
import re
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

__all__ = ["PlotSpec", "RenderResult", "SchemaError", "render", "read_result_table", "KINDS"]

COLUMNS = ("experiment", "method", "ordering", "N", "replicate", "metric", "value")
KINDS = ("mse_lines", "boxplot", "acf", "loglik_bars")

_ACF_METRIC = re.compile(r"^acf_lag_(\d+)$")


class SchemaError(ValueError):
    """The CSV lacks a column or metric the figure kind requires."""


@dataclass(frozen=True)
class PlotSpec:
    kind: str
    input_csv: str
    output_image: str
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")


@dataclass
class RenderResult:
    width_px: int
    height_px: int
    series: dict = field(default_factory=dict)  # label -> (x array, y array)

    @property
    def checksum(self) -> str:
        digest = hashlib.sha256()
        for label in sorted(self.series):
            x, y = self.series[label]
            digest.update(label.encode())
            digest.update(np.round(np.asarray(x, dtype=float), 9).tobytes())
            digest.update(np.round(np.asarray(y, dtype=float), 9).tobytes())
        return digest.hexdigest()


def read_result_table(path) -> list[dict]:
    """Parse the result CSV into row dictionaries, validating the header."""
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# graphsmc-results"):
            raise SchemaError("input is not a graphsmc result table (missing version comment)")
        reader = csv.reader(fh)
        try:
            header = tuple(next(reader))
        except StopIteration:
            raise SchemaError("result table has no header row") from None
        if header != COLUMNS:
            missing = set(COLUMNS) - set(header)
            raise SchemaError(f"unexpected header; missing columns {sorted(missing)}")
        rows = []
        for rec in reader:
            rows.append(
                {
                    "experiment": rec[0],
                    "method": rec[1],
                    "ordering": rec[2],
                    "N": int(rec[3]) if rec[3] else None,
                    "replicate": int(rec[4]) if rec[4] else None,
                    "metric": rec[5],
                    "value": float(rec[6]),
                }
            )
        return rows


def _label(row) -> str:
    return f"{row['method']}:{row['ordering']}" if row["ordering"] else row["method"]


def _new_axes(spec):
    fig, ax = plt.subplots(figsize=(6.4, 4.8), dpi=100)
    if spec.title:
        ax.set_title(spec.title)
    return fig, ax


def _finish(fig, ax, spec, series) -> RenderResult:
    if ax.get_legend_handles_labels()[1]:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(spec.output_image)
    width, height = fig.canvas.get_width_height()
    plt.close(fig)
    return RenderResult(width_px=width, height_px=height, series=series)


def _render_mse_lines(rows, spec):
    pts: dict[str, list] = {}
    for row in rows:
        if row["metric"] == "mse":
            if row["N"] is None:
                raise SchemaError("mse rows must carry the N column")
            pts.setdefault(_label(row), []).append((row["N"], row["value"]))
    fig, ax = _new_axes(spec)
    series = {}
    for label in sorted(pts):
        data = sorted(pts[label])
        x = np.array([d[0] for d in data], dtype=float)
        y = np.array([d[1] for d in data], dtype=float)
        ax.loglog(x, y, marker="o", label=label)
        series[label] = (x, y)
    ax.set_xlabel(spec.xlabel or "particles N")
    ax.set_ylabel(spec.ylabel or "MSE of log Z")
    return _finish(fig, ax, spec, series)


def _render_boxplot(rows, spec):
    groups: dict[str, list] = {}
    for row in rows:
        if row["metric"] in ("log_z", "log_lik") and row["replicate"] is not None:
            groups.setdefault(_label(row), []).append(row["value"])
    fig, ax = _new_axes(spec)
    series = {}
    labels = sorted(groups)
    if labels:
        data = [np.sort(np.array(groups[lab])) for lab in labels]
        ax.boxplot(data, tick_labels=labels)
        for lab, vals in zip(labels, data):
            series[lab] = (np.arange(len(vals), dtype=float), vals)
    ax.set_ylabel(spec.ylabel or "estimate")
    return _finish(fig, ax, spec, series)


def _render_acf(rows, spec):
    curves: dict[str, list] = {}
    for row in rows:
        m = _ACF_METRIC.match(row["metric"])
        if m:
            curves.setdefault(_label(row), []).append((int(m.group(1)), row["value"]))
    fig, ax = _new_axes(spec)
    series = {}
    for label in sorted(curves):
        data = sorted(curves[label])
        x = np.array([d[0] for d in data], dtype=float)
        y = np.array([d[1] for d in data], dtype=float)
        ax.plot(x, y, marker=".", label=label)
        series[label] = (x, y)
    ax.set_xlabel(spec.xlabel or "lag")
    ax.set_ylabel(spec.ylabel or "autocorrelation")
    ax.axhline(0.0, color="grey", linewidth=0.5)
    return _finish(fig, ax, spec, series)


def _render_loglik_bars(rows, spec):
    stats: dict[tuple, dict] = {}
    for row in rows:
        if row["metric"] in ("boot_mean", "boot_low", "boot_high"):
            stats.setdefault((row["ordering"], row["method"]), {})[row["metric"]] = row["value"]
    fig, ax = _new_axes(spec)
    series = {}
    keys = sorted(stats)
    if keys:
        for key, vals in stats.items():
            missing = {"boot_mean", "boot_low", "boot_high"} - set(vals)
            if missing:
                raise SchemaError(f"{key}: missing bootstrap metrics {sorted(missing)}")
        docs = sorted({k[0] for k in keys})
        methods = sorted({k[1] for k in keys})
        width = 0.8 / len(methods)
        for mi, method in enumerate(methods):
            x, y, lo, hi = [], [], [], []
            for di, doc in enumerate(docs):
                if (doc, method) in stats:
                    vals = stats[(doc, method)]
                    x.append(di + mi * width)
                    y.append(vals["boot_mean"])
                    lo.append(vals["boot_mean"] - vals["boot_low"])
                    hi.append(vals["boot_high"] - vals["boot_mean"])
            ax.bar(x, y, width=width, label=method, yerr=(lo, hi), capsize=2)
            series[method] = (np.array(x), np.array(y))
        ax.set_xticks([i + 0.4 - width / 2 for i in range(len(docs))])
        ax.set_xticklabels(docs, fontsize=7)
    ax.set_ylabel(spec.ylabel or "held-out log-likelihood")
    return _finish(fig, ax, spec, series)


_RENDERERS = {
    "mse_lines": _render_mse_lines,
    "boxplot": _render_boxplot,
    "acf": _render_acf,
    "loglik_bars": _render_loglik_bars,
}


def render(spec: PlotSpec) -> RenderResult:
    """Draw the requested figure and write it to ``spec.output_image``."""
    rows = read_result_table(spec.input_csv)
    return _RENDERERS[spec.kind](rows, spec)
