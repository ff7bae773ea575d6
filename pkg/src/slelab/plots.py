"""Figure rendering for experiment reports.

All functions draw onto a fresh matplotlib figure and save it as SVG,
returning the output path.  The Agg backend keeps rendering headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_trace_plot",
    "save_density_plot",
    "save_hitting_plot",
    "save_case_plot",
    "save_martingale_plot",
    "save_two_sample_plot",
]


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def save_trace_plot(points, path, *, geometry="half-plane", title="trace"):
    """Plot a trace polyline; strip geometry draws its boundary edges."""
    points = np.asarray(points, dtype=complex)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(points.real, points.imag, lw=0.7, color="tab:blue")
    ax.plot(points.real[:1], points.imag[:1], "o", ms=4, color="tab:red")
    if geometry == "strip":
        lo = min(points.real.min(), -1.0) - 0.5
        hi = max(points.real.max(), 1.0) + 0.5
        ax.hlines([0.0, np.pi], lo, hi, color="0.4", lw=1.0)
    else:
        ax.axhline(0.0, color="0.4", lw=1.0)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("Re")
    ax.set_ylabel("Im")
    ax.set_title(title)
    return _finish(fig, path)


def save_density_plot(samples, density, path, *, title="terminal point density"):
    """Histogram of terminal points with the model density overlaid."""
    samples = np.asarray(samples, dtype=float)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.hist(samples, bins=40, density=True, alpha=0.5, color="tab:blue",
            label="samples")
    lo, hi = np.quantile(samples, [0.001, 0.999])
    xs = np.linspace(lo - 1.0, hi + 1.0, 400)
    ax.plot(xs, [density(x) for x in xs], color="tab:red", lw=1.5,
            label="model density")
    ax.set_xlabel("terminal point")
    ax.set_ylabel("density")
    ax.set_title(title)
    ax.legend()
    return _finish(fig, path)


def save_hitting_plot(reports, path, *, title="boundary hitting probability"):
    """Predicted vs observed hitting probabilities with 3 SE bars."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    xs = np.arange(len(reports))
    pred = [r.predicted for r in reports]
    obs = [r.observed for r in reports]
    err = [3.0 * r.standard_error for r in reports]
    ax.errorbar(xs, obs, yerr=err, fmt="o", color="tab:blue",
                label="observed (3 SE)")
    ax.plot(xs, pred, "_", ms=20, color="tab:red", label="predicted")
    ax.set_xticks(xs)
    ax.set_xticklabels(
        [f"κ={r.kappa:g}\nσ={r.sigma:g}\nx₀={r.x0:g}" for r in reports]
    )
    ax.set_ylabel("P(exit right)")
    ax.set_title(title)
    ax.legend()
    return _finish(fig, path)


def save_case_plot(report, path, *, title=None):
    """Bar chart of empirical terminal-event frequencies for one case."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    names = [region.name.lower() for region in report.frequencies]
    vals = list(report.frequencies.values())
    ax.bar(names, vals, color="tab:blue", alpha=0.7)
    for region in report.label.predicted:
        ax.bar(region.name.lower(), report.frequencies[region],
               color="tab:red", alpha=0.7)
    ax.set_ylabel("frequency")
    ax.set_title(title or f"case ({report.label.j}{report.label.k})"
                          " — predicted events in red")
    fig.autofmt_xdate(rotation=30)
    return _finish(fig, path)


def save_martingale_plot(result, path, *, title="stopped martingale values"):
    """Histogram of stopped M values around the unit mean."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.hist(result.values, bins=40, color="tab:blue", alpha=0.7)
    ax.axvline(1.0, color="0.3", lw=1.0)
    ax.axvline(result.mean, color="tab:red", lw=1.5,
               label=f"mean = {result.mean:.4f} ± {result.standard_error:.4f}")
    ax.set_xlabel("M at the stopped corner")
    ax.set_ylabel("count")
    ax.set_title(title)
    ax.legend()
    return _finish(fig, path)


def save_two_sample_plot(a, b, path, *, labels=("sample A", "sample B"),
                         title="empirical distribution comparison"):
    """Overlaid empirical CDFs of two samples."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for values, label, color in zip((a, b), labels, ("tab:blue", "tab:red")):
        xs = np.sort(np.asarray(values, dtype=float))
        ys = np.arange(1, xs.size + 1) / xs.size
        ax.step(xs, ys, where="post", label=f"{label} (n={xs.size})",
                color=color)
    ax.set_xlabel("statistic")
    ax.set_ylabel("empirical CDF")
    ax.set_title(title)
    ax.legend()
    return _finish(fig, path)
