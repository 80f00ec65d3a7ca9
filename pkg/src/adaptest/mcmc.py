"""Random-walk Metropolis over user-supplied log-posteriors with convergence
diagnostics.

Sampling happens in unconstrained space: positive parameters are
log-transformed, correlations atanh-transformed, with the Jacobian folded into
the target density. Step scales adapt per parameter during warmup toward an
acceptance rate in [0.25, 0.45] and are frozen afterwards, so kept draws come
from a fixed kernel.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import stats

__all__ = [
    "McmcConfig",
    "McmcRun",
    "DEFAULT_MCMC",
    "FAST_MCMC",
    "run_chains",
    "rhat",
    "ess",
    "export_draws_csv",
]

TRANSFORMS = ("identity", "log", "atanh")


@dataclass(frozen=True)
class McmcConfig:
    n_chains: int = 4
    n_iterations: int = 20_000
    n_warmup: int = 10_000
    thin: int = 5
    seed: int = 0
    initial_step_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.n_chains < 2:
            raise ValueError("need at least 2 chains for R-hat")
        if not 0 <= self.n_warmup < self.n_iterations:
            raise ValueError("n_warmup must be < n_iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")

    @property
    def n_kept(self) -> int:
        return (self.n_iterations - self.n_warmup) // self.thin


DEFAULT_MCMC = McmcConfig()
# for simulation loops and tests where the full run would be wasteful
FAST_MCMC = McmcConfig(n_chains=4, n_iterations=6_000, n_warmup=3_000, thin=1)


@dataclass
class McmcRun:
    param_names: list[str]
    draws: dict[str, np.ndarray]  # name -> (n_chains, n_kept)
    acceptance_rates: list[float]
    rhat: dict[str, float]
    ess_bulk: dict[str, float]
    ess_tail: dict[str, float]
    warnings: list[str] = field(default_factory=list)

    def pooled(self, name: str) -> np.ndarray:
        return self.draws[name].reshape(-1)

    def summary(self, name: str, ci: float = 0.95) -> dict[str, float]:
        x = self.pooled(name)
        lo, hi = np.quantile(x, [(1 - ci) / 2, 1 - (1 - ci) / 2])
        return {
            "median": float(np.median(x)),
            "mean": float(x.mean()),
            "ci_low": float(lo),
            "ci_high": float(hi),
            "rhat": self.rhat[name],
            "ess_bulk": self.ess_bulk[name],
            "ess_tail": self.ess_tail[name],
        }


def _to_constrained(z: np.ndarray, transforms: Sequence[str]) -> np.ndarray:
    x = z.copy()
    for k, t in enumerate(transforms):
        if t == "log":
            x[k] = np.exp(z[k])
        elif t == "atanh":
            x[k] = np.tanh(z[k])
    return x


def _log_jacobian(z: np.ndarray, transforms: Sequence[str]) -> float:
    lj = 0.0
    for k, t in enumerate(transforms):
        if t == "log":
            lj += z[k]
        elif t == "atanh":
            lj += np.log1p(-np.tanh(z[k]) ** 2)
    return lj


def _unconstrained(x: np.ndarray, transforms: Sequence[str]) -> np.ndarray:
    z = np.asarray(x, dtype=float).copy()
    for k, t in enumerate(transforms):
        if t == "log":
            z[k] = np.log(x[k])
        elif t == "atanh":
            z[k] = np.arctanh(x[k])
    return z


def run_chains(
    log_posterior: Callable[[np.ndarray], float],
    transforms: Sequence[str],
    config: McmcConfig = DEFAULT_MCMC,
    init: Sequence[float] | None = None,
    param_names: Sequence[str] | None = None,
    initial_step_scales: Sequence[float] | None = None,
) -> McmcRun:
    """Sample with component-wise random-walk Metropolis.

    ``log_posterior`` takes the constrained parameter vector. ``init`` is a
    constrained starting point (defaults to the transforms' neutral point);
    chains get a small seeded jitter around it in unconstrained space.
    """
    for t in transforms:
        if t not in TRANSFORMS:
            raise ValueError(f"unknown transform: {t}")
    dim = len(transforms)
    names = list(param_names) if param_names else [f"p{k}" for k in range(dim)]
    if init is None:
        init = [1.0 if t == "log" else 0.0 for t in transforms]
    z0 = _unconstrained(np.asarray(init, dtype=float), transforms)

    def target(z: np.ndarray) -> float:
        return float(log_posterior(_to_constrained(z, transforms))) + _log_jacobian(
            z, transforms
        )

    scales0 = (
        np.asarray(initial_step_scales, dtype=float)
        if initial_step_scales is not None
        else np.full(dim, config.initial_step_scale)
    )
    n_kept = config.n_kept
    kept = np.empty((config.n_chains, n_kept, dim))
    acceptance = []
    warnings: list[str] = []
    adapt_window = 50

    for c in range(config.n_chains):
        rng = np.random.default_rng([config.seed, c])
        z = z0 + 0.1 * rng.standard_normal(dim)
        lp = target(z)
        if not np.isfinite(lp):
            raise ValueError("log-posterior not finite at initial point")
        scales = scales0.copy()
        window_acc = np.zeros(dim)
        window_n = np.zeros(dim)
        post_acc = 0
        post_n = 0
        k_idx = 0
        for i in range(config.n_iterations):
            warm = i < config.n_warmup
            for k in range(dim):
                z_prop = z.copy()
                z_prop[k] += scales[k] * rng.standard_normal()
                lp_prop = target(z_prop)
                accept = np.log(rng.random()) < lp_prop - lp
                if accept:
                    z, lp = z_prop, lp_prop
                if warm:
                    window_acc[k] += accept
                    window_n[k] += 1
                else:
                    post_acc += accept
                    post_n += 1
            if warm and (i + 1) % adapt_window == 0:
                rates = window_acc / np.maximum(window_n, 1)
                scales[rates > 0.45] *= 1.25
                scales[rates < 0.25] /= 1.25
                window_acc[:] = 0
                window_n[:] = 0
            if not warm and (i - config.n_warmup + 1) % config.thin == 0:
                kept[c, k_idx] = _to_constrained(z, transforms)
                k_idx += 1
        rate = post_acc / post_n
        acceptance.append(float(rate))
        if rate < 0.01:
            warnings.append(f"chain {c}: post-warmup acceptance {rate:.4f} < 0.01")

    draws = {names[k]: kept[:, :, k].copy() for k in range(dim)}

    def _safe(fn: Callable[[], float], label: str) -> float:
        try:
            return fn()
        except ValueError as exc:
            warnings.append(f"{label}: {exc}")
            return float("nan")

    return McmcRun(
        param_names=names,
        draws=draws,
        acceptance_rates=acceptance,
        rhat={n: _safe(lambda n=n: rhat(draws[n]), f"rhat[{n}]") for n in names},
        ess_bulk={
            n: _safe(lambda n=n: ess(draws[n], mode="bulk"), f"ess_bulk[{n}]")
            for n in names
        },
        ess_tail={
            n: _safe(lambda n=n: ess(draws[n], mode="tail"), f"ess_tail[{n}]")
            for n in names
        },
        warnings=warnings,
    )


def _split_chains(draws: np.ndarray) -> np.ndarray:
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 2:
        raise ValueError("draws must be (n_chains, n_draws)")
    n = draws.shape[1] // 2
    return np.vstack([draws[:, :n], draws[:, -n:]])


def rhat(draws: np.ndarray) -> float:
    """Split-chain potential scale reduction factor.

    Each chain is halved; with W the mean within-half variance and B the
    between-half variance of the half means (times half-length n),
    R-hat = sqrt(((n-1)/n * W + B/n) / W).
    """
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 2 or draws.shape[0] < 2:
        raise ValueError("need >=2 chains of draws")
    if draws.shape[1] < 4:
        raise ValueError("need >=4 draws per chain")
    halves = _split_chains(draws)
    n = halves.shape[1]
    within = halves.var(axis=1, ddof=1)
    w = within.mean()
    if w <= 0:
        raise ValueError("degenerate chains")
    b_over_n = halves.mean(axis=1).var(ddof=1)
    return float(np.sqrt(((n - 1) / n * w + b_over_n) / w))


def _autocov(x: np.ndarray) -> np.ndarray:
    n = len(x)
    x = x - x.mean()
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    return np.fft.irfft(f * np.conjugate(f), m)[:n].real / n


def _ess_core(chains: np.ndarray) -> float:
    """Combined multi-chain ESS with Geyer initial positive/monotone truncation."""
    n_chain, n_draw = chains.shape
    acov = np.array([_autocov(chains[c]) for c in range(n_chain)])
    chain_mean = chains.mean(axis=1)
    mean_var = acov[:, 0].mean() * n_draw / (n_draw - 1.0)
    var_plus = mean_var * (n_draw - 1.0) / n_draw
    if n_chain > 1:
        var_plus += chain_mean.var(ddof=1)
    if var_plus <= 0:
        raise ValueError("degenerate chains")

    rho = np.zeros(n_draw)
    rho[0] = 1.0
    rho_even = 1.0
    rho_odd = 1.0 - (mean_var - acov[:, 1].mean()) / var_plus
    rho[1] = rho_odd
    t = 1
    while t < n_draw - 2 and (rho_even + rho_odd) >= 0.0:
        rho_even = 1.0 - (mean_var - acov[:, t + 1].mean()) / var_plus
        rho_odd = 1.0 - (mean_var - acov[:, t + 2].mean()) / var_plus
        rho[t + 1] = rho_even
        if rho_even + rho_odd >= 0:
            rho[t + 2] = rho_odd
        t += 2
    max_t = t
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0
            rho[t + 2] = rho[t + 1]
        t += 2
    tau = -1.0 + 2.0 * rho[:max_t].sum() + rho[max_t + 1 : max_t + 2].sum()
    return float(n_chain * n_draw / tau)


def _z_scale(ary: np.ndarray) -> np.ndarray:
    ranks = stats.rankdata(ary, method="average")
    z = stats.norm.ppf((ranks - 0.5) / ary.size)
    return z.reshape(ary.shape)


def ess(draws: np.ndarray, mode: str = "bulk") -> float:
    """Effective sample size: bulk on rank-normalized split chains; tail as the
    minimum over 5% / 95% quantile-exceedance indicators."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 2 or draws.shape[0] < 2:
        raise ValueError("need >=2 chains of draws")
    if draws.shape[1] < 4:
        raise ValueError("need >=4 draws per chain")
    if draws.min() == draws.max():
        raise ValueError("degenerate chains")
    if mode == "bulk":
        return _ess_core(_z_scale(_split_chains(draws)))
    if mode == "tail":
        out = []
        for prob in (0.05, 0.95):
            q = np.quantile(draws, prob)
            indicator = (draws <= q).astype(float)
            if indicator.min() == indicator.max():
                raise ValueError("degenerate chains")
            out.append(_ess_core(_z_scale(_split_chains(indicator))))
        return float(min(out))
    raise ValueError(f"unknown ess mode: {mode}")


def export_draws_csv(run: McmcRun, path: str | Path) -> None:
    """One row per kept draw: chain, iter, then one column per parameter."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["chain", "iter", *run.param_names])
        n_chains, n_kept = run.draws[run.param_names[0]].shape
        for c in range(n_chains):
            for i in range(n_kept):
                writer.writerow(
                    [c, i, *(repr(run.draws[p][c, i]) for p in run.param_names)]
                )
