"""Report figures rendered to files alongside the delimited outputs.

Interval plots follow the convention used throughout: dot = median, thick
bar = 66% interval, thin bar = 95% interval.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .simulate import RecoveryResult, SweepResult

__all__ = ["sweep_figure", "recovery_figure", "posterior_figure"]

_PNG_META = {"Software": "adaptest"}


def sweep_figure(result: SweepResult, path: str | Path) -> None:
    """Relative SE difference against test length, Fig-3 style."""
    lengths = result.lengths
    med = [result.summary[L]["median"] for L in lengths]
    lo95 = [result.summary[L]["lo95"] for L in lengths]
    hi95 = [result.summary[L]["hi95"] for L in lengths]
    lo66 = [result.summary[L]["lo66"] for L in lengths]
    hi66 = [result.summary[L]["hi66"] for L in lengths]

    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.vlines(lengths, lo95, hi95, color="#9ecae1", linewidth=2.5, label="95% of persons")
    ax.vlines(lengths, lo66, hi66, color="#3182bd", linewidth=4.0, label="66% of persons")
    ax.plot(lengths, med, "o", color="#08306b", markersize=4, label="median")
    ax.axhline(0.0, color="grey", linewidth=0.8, linestyle="--")
    ax.set_xlabel("test length (scored items)")
    ax.set_ylabel("relative difference in SE")
    ax.set_title(f"Adaptive vs {result.baseline.replace('_', ' ')} baseline")
    ax.legend(loc="upper right", frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_PNG_META)
    plt.close(fig)


def recovery_figure(result: RecoveryResult, path: str | Path) -> None:
    """Histogram of recovery lengths; censored mistakes counted separately."""
    lengths = [r.recovery_length for r in result.records if r.recovery_length is not None]
    fig, ax = plt.subplots(figsize=(6, 4))
    if lengths:
        bins = np.arange(0.5, max(lengths) + 1.5)
        ax.hist(lengths, bins=bins, color="#3182bd", edgecolor="white")
        if result.median is not None:
            ax.axvline(result.median, color="#08306b", linestyle="--",
                       label=f"median = {result.median:g}")
            ax.legend(frameon=False)
    ax.set_xlabel("recovery length (items)")
    ax.set_ylabel("mistakes")
    ax.set_title(f"{result.n_mistakes} mistakes, {result.n_censored} unrecovered at termination")
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_PNG_META)
    plt.close(fig)


def posterior_figure(
    draws: np.ndarray, name: str, path: str | Path, ci: float = 0.95
) -> None:
    """Posterior density of one scalar quantity with median and CI markers."""
    pooled = np.asarray(draws).reshape(-1)
    lo, hi = np.quantile(pooled, [(1 - ci) / 2, 1 - (1 - ci) / 2])
    med = np.median(pooled)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(pooled, bins=80, density=True, color="#9ecae1", edgecolor="none")
    ax.axvline(med, color="#08306b", linestyle="-", label=f"median = {med:.3f}")
    ax.axvline(lo, color="#3182bd", linestyle="--", label=f"{ci:.0%} CI")
    ax.axvline(hi, color="#3182bd", linestyle="--")
    ax.set_xlabel(name)
    ax.set_ylabel("posterior density")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_PNG_META)
    plt.close(fig)
