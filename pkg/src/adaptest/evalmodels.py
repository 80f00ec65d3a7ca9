"""Bayesian measurement-error models for test-retest reliability and
convergent validity, plus sample-size selection by simulation.

Both models marginalize the per-person latent abilities analytically: each
person's observed score pair is bivariate Normal with the latent structure
folded into the covariance. That reduces the posterior to at most four
parameters, which the random-walk sampler handles comfortably.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import mcmc as mc

__all__ = [
    "RetestObservation",
    "PairedObservation",
    "IccPriors",
    "ValidityPriors",
    "ModelPosterior",
    "icc_from_variances",
    "fit_icc_model",
    "fit_validity_model",
    "sample_size_simulation",
    "simulate_retest_data",
    "simulate_paired_data",
    "load_retest_csv",
    "load_paired_csv",
]


@dataclass(frozen=True)
class RetestObservation:
    person_id: str
    theta_t1: float
    theta_t2: float
    se_t1: float
    se_t2: float

    def __post_init__(self) -> None:
        vals = (self.theta_t1, self.theta_t2, self.se_t1, self.se_t2)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("observations must be finite")
        if self.se_t1 <= 0 or self.se_t2 <= 0:
            raise ValueError("measurement errors must be positive")


@dataclass(frozen=True)
class PairedObservation:
    person_id: str
    theta_original: float
    theta_adaptive: float
    se_original: float
    se_adaptive: float

    def __post_init__(self) -> None:
        vals = (
            self.theta_original,
            self.theta_adaptive,
            self.se_original,
            self.se_adaptive,
        )
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("observations must be finite")
        if self.se_original <= 0 or self.se_adaptive <= 0:
            raise ValueError("measurement errors must be positive")


@dataclass(frozen=True)
class IccPriors:
    mu_mean: float = 0.0  # Normal(-1, 1) is the convention for hard banks
    mu_sd: float = 1.0
    sigma_scale: float = 1.0  # half-Normal scale for both variance components


@dataclass(frozen=True)
class ValidityPriors:
    diff_sd: float = 1.0
    sigma_mean: float = 1.0
    sigma_sd: float = 0.5


@dataclass
class ModelPosterior:
    """Posterior draws and summaries for one fitted evaluation model."""

    run: mc.McmcRun
    derived: dict[str, np.ndarray]  # name -> (n_chains, n_kept)

    def draws(self, name: str) -> np.ndarray:
        if name in self.derived:
            return self.derived[name]
        return self.run.draws[name]

    def summary(self, name: str, ci: float = 0.95) -> dict[str, float]:
        x = self.draws(name)
        pooled = x.reshape(-1)
        lo, hi = np.quantile(pooled, [(1 - ci) / 2, 1 - (1 - ci) / 2])
        return {
            "median": float(np.median(pooled)),
            "mean": float(pooled.mean()),
            "ci_low": float(lo),
            "ci_high": float(hi),
            "rhat": mc.rhat(x),
            "ess_bulk": mc.ess(x, "bulk"),
            "ess_tail": mc.ess(x, "tail"),
        }

    def all_summaries(self) -> dict[str, dict[str, float]]:
        names = list(self.run.param_names) + list(self.derived)
        return {n: self.summary(n) for n in names}

    def to_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "parameters": self.all_summaries(),
                    "acceptance_rates": self.run.acceptance_rates,
                    "warnings": self.run.warnings,
                },
                fh,
                indent=2,
                sort_keys=True,
            )
            fh.write("\n")


def icc_from_variances(sigma_alpha: float, sigma_epsilon: float) -> float:
    """Between-person variance over total: sa^2 / (sa^2 + se^2)."""
    if sigma_alpha <= 0 or sigma_epsilon <= 0:
        raise ValueError("variance components must be positive")
    va = sigma_alpha * sigma_alpha
    return va / (va + sigma_epsilon * sigma_epsilon)


def icc_pair_loglik(
    mu: float,
    sigma_alpha: float,
    sigma_epsilon: float,
    t1: np.ndarray,
    t2: np.ndarray,
    se1: np.ndarray,
    se2: np.ndarray,
) -> float:
    """Log-likelihood with the person effect and the latent true scores
    integrated out: each (t1, t2) pair is bivariate Normal with common mean mu,
    covariance sigma_alpha^2 off-diagonal, and per-attempt noise on the
    diagonal."""
    va = sigma_alpha * sigma_alpha
    ve = sigma_epsilon * sigma_epsilon
    v1 = va + ve + se1 * se1
    v2 = va + ve + se2 * se2
    cov = va
    det = v1 * v2 - cov * cov
    r1 = t1 - mu
    r2 = t2 - mu
    quad = (v2 * r1 * r1 - 2.0 * cov * r1 * r2 + v1 * r2 * r2) / det
    return float(-0.5 * np.sum(np.log(det) + quad) - t1.size * math.log(2 * math.pi))


def fit_icc_model(
    observations: Sequence[RetestObservation],
    priors: IccPriors = IccPriors(),
    config: mc.McmcConfig = mc.DEFAULT_MCMC,
    include_measurement_error: bool = True,
) -> ModelPosterior:
    """Test-retest reliability: posterior over (mu, sigma_alpha, sigma_epsilon)
    with the intraclass correlation derived per draw.

    ``include_measurement_error=False`` drops the per-person score errors from
    the likelihood (the naive variant, known to underestimate the ICC).
    """
    if len(observations) < 3:
        raise ValueError("need at least 3 persons with both attempts")
    t1 = np.array([o.theta_t1 for o in observations])
    t2 = np.array([o.theta_t2 for o in observations])
    if include_measurement_error:
        se1 = np.array([o.se_t1 for o in observations])
        se2 = np.array([o.se_t2 for o in observations])
    else:
        se1 = np.zeros(len(observations))
        se2 = np.zeros(len(observations))

    def log_post(x: np.ndarray) -> float:
        mu, sa, se_w = x
        lp = -0.5 * ((mu - priors.mu_mean) / priors.mu_sd) ** 2
        lp += -0.5 * (sa / priors.sigma_scale) ** 2  # half-Normal
        lp += -0.5 * (se_w / priors.sigma_scale) ** 2
        return lp + icc_pair_loglik(mu, sa, se_w, t1, t2, se1, se2)

    run = mc.run_chains(
        log_post,
        transforms=["identity", "log", "log"],
        config=config,
        init=[float(np.mean((t1 + t2) / 2)), 1.0, 0.5],
        param_names=["mu", "sigma_alpha", "sigma_epsilon"],
    )
    icc = run.draws["sigma_alpha"] ** 2 / (
        run.draws["sigma_alpha"] ** 2 + run.draws["sigma_epsilon"] ** 2
    )
    return ModelPosterior(run=run, derived={"icc": icc})


def validity_pair_loglik(
    diff: float,
    sigma_o: float,
    sigma_a: float,
    rho: float,
    t_o: np.ndarray,
    t_a: np.ndarray,
    se_o: np.ndarray,
    se_a: np.ndarray,
) -> float:
    """Bivariate-Normal log-likelihood with latent pairs marginalized; the
    original-test mean is pinned to zero by centering, so the location enters
    only through the adaptive-minus-original difference."""
    v1 = sigma_o * sigma_o + se_o * se_o
    v2 = sigma_a * sigma_a + se_a * se_a
    cov = rho * sigma_o * sigma_a
    det = v1 * v2 - cov * cov
    r1 = t_o
    r2 = t_a - diff
    quad = (v2 * r1 * r1 - 2.0 * cov * r1 * r2 + v1 * r2 * r2) / det
    return float(-0.5 * np.sum(np.log(det) + quad) - t_o.size * math.log(2 * math.pi))


def fit_validity_model(
    observations: Sequence[PairedObservation],
    priors: ValidityPriors = ValidityPriors(),
    config: mc.McmcConfig = mc.DEFAULT_MCMC,
) -> ModelPosterior:
    """Convergent validity: posterior over (difference, sigma_o, sigma_a, rho).

    All observed scores are centered on the mean of the original-test scores
    before fitting; rho carries a uniform prior on (-1, 1).
    """
    if len(observations) < 3:
        raise ValueError("need at least 3 persons with both tests")
    t_o = np.array([o.theta_original for o in observations])
    t_a = np.array([o.theta_adaptive for o in observations])
    se_o = np.array([o.se_original for o in observations])
    se_a = np.array([o.se_adaptive for o in observations])
    center = t_o.mean()
    t_o = t_o - center
    t_a = t_a - center

    def log_post(x: np.ndarray) -> float:
        diff, so, sa, rho = x
        lp = -0.5 * (diff / priors.diff_sd) ** 2
        lp += -0.5 * ((so - priors.sigma_mean) / priors.sigma_sd) ** 2  # truncated at 0
        lp += -0.5 * ((sa - priors.sigma_mean) / priors.sigma_sd) ** 2
        # uniform prior on rho: constant over (-1, 1)
        return lp + validity_pair_loglik(diff, so, sa, rho, t_o, t_a, se_o, se_a)

    run = mc.run_chains(
        log_post,
        transforms=["identity", "log", "log", "atanh"],
        config=config,
        init=[float(t_a.mean()), 1.0, 1.0, 0.0],
        param_names=["difference", "sigma_o", "sigma_a", "rho"],
    )
    return ModelPosterior(run=run, derived={})


def simulate_retest_data(
    n: int,
    mu: float,
    sigma_alpha: float,
    sigma_epsilon: float,
    se: float,
    seed: int,
) -> list[RetestObservation]:
    """Generative draw from the reliability model with constant score error."""
    rng = np.random.default_rng(seed)
    alpha = rng.normal(0.0, sigma_alpha, n)
    obs = []
    for j in range(n):
        latent = mu + alpha[j] + rng.normal(0.0, sigma_epsilon, 2)
        seen = latent + rng.normal(0.0, se, 2)
        obs.append(
            RetestObservation(
                person_id=f"p{j:04d}",
                theta_t1=float(seen[0]),
                theta_t2=float(seen[1]),
                se_t1=se,
                se_t2=se,
            )
        )
    return obs


def simulate_paired_data(
    n: int,
    rho: float,
    seed: int,
    mu_o: float = 0.0,
    mu_a: float = 0.0,
    sigma_o: float = 1.0,
    sigma_a: float = 1.0,
    se: float = 0.15,
) -> list[PairedObservation]:
    """Generative draw from the validity model with constant score error."""
    rng = np.random.default_rng(seed)
    cov = [
        [sigma_o**2, rho * sigma_o * sigma_a],
        [rho * sigma_o * sigma_a, sigma_a**2],
    ]
    latent = rng.multivariate_normal([mu_o, mu_a], cov, size=n)
    noisy = latent + rng.normal(0.0, se, size=(n, 2))
    return [
        PairedObservation(
            person_id=f"p{j:04d}",
            theta_original=float(noisy[j, 0]),
            theta_adaptive=float(noisy[j, 1]),
            se_original=se,
            se_adaptive=se,
        )
        for j in range(n)
    ]


def sample_size_simulation(
    model: str,
    generative: dict[str, float],
    candidate_ns: Sequence[int],
    target_ci_halfwidth: float,
    seed: int,
    n_replicates: int = 20,
    config: mc.McmcConfig = mc.FAST_MCMC,
) -> dict:
    """Median 95% CI half-width of the target quantity (icc or rho) at each
    candidate sample size; recommends the first n at or under the target."""
    if model not in ("icc", "validity"):
        raise ValueError("model must be 'icc' or 'validity'")
    halfwidths: dict[int, list[float]] = {}
    for n in candidate_ns:
        widths = []
        for r in range(n_replicates):
            rep_seed = seed * 100003 + n * 101 + r
            if model == "icc":
                data = simulate_retest_data(
                    n,
                    mu=generative.get("mu", 0.0),
                    sigma_alpha=generative["sigma_alpha"],
                    sigma_epsilon=generative["sigma_epsilon"],
                    se=generative.get("se", 0.2),
                    seed=rep_seed,
                )
                fit = fit_icc_model(data, config=mc.McmcConfig(
                    n_chains=config.n_chains,
                    n_iterations=config.n_iterations,
                    n_warmup=config.n_warmup,
                    thin=config.thin,
                    seed=rep_seed,
                ))
                s = fit.summary("icc")
            else:
                data = simulate_paired_data(
                    n,
                    rho=generative["rho"],
                    se=generative.get("se", 0.15),
                    seed=rep_seed,
                )
                fit = fit_validity_model(data, config=mc.McmcConfig(
                    n_chains=config.n_chains,
                    n_iterations=config.n_iterations,
                    n_warmup=config.n_warmup,
                    thin=config.thin,
                    seed=rep_seed,
                ))
                s = fit.summary("rho")
            widths.append((s["ci_high"] - s["ci_low"]) / 2.0)
        halfwidths[n] = widths

    medians = {n: float(np.median(w)) for n, w in halfwidths.items()}
    recommended = next(
        (n for n in sorted(medians) if medians[n] <= target_ci_halfwidth), None
    )
    return {
        "model": model,
        "target_ci_halfwidth": target_ci_halfwidth,
        "halfwidths": halfwidths,
        "median_halfwidth": medians,
        "recommended_n": recommended,
    }


def load_retest_csv(path: str | Path) -> list[RetestObservation]:
    """Columns: person_id, theta_1, se_1, theta_2, se_2."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(
                RetestObservation(
                    person_id=row["person_id"],
                    theta_t1=float(row["theta_1"]),
                    theta_t2=float(row["theta_2"]),
                    se_t1=float(row["se_1"]),
                    se_t2=float(row["se_2"]),
                )
            )
    return out


def load_paired_csv(path: str | Path) -> list[PairedObservation]:
    """Columns: person_id, theta_1, se_1, theta_2, se_2 (1=original, 2=adaptive)."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(
                PairedObservation(
                    person_id=row["person_id"],
                    theta_original=float(row["theta_1"]),
                    theta_adaptive=float(row["theta_2"]),
                    se_original=float(row["se_1"]),
                    se_adaptive=float(row["se_2"]),
                )
            )
    return out
