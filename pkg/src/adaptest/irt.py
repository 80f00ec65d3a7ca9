"""Two-parameter logistic (2PL) IRT primitives and grid-based ability posteriors.

The response model uses the *easiness* convention: the success probability of
a person with ability theta on an item with discrimination ``a`` and easiness
``b`` is ``1 / (1 + exp(-a * (theta + b)))``. Higher ``b`` makes the item
easier at fixed theta. Everything downstream (selection, scoring, simulation,
calibration) inherits this convention.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ItemParams",
    "GridSpec",
    "GridPosterior",
    "DEFAULT_GRID",
    "prob_correct",
    "item_information",
    "test_information",
    "standard_error",
    "log_likelihood_grid",
    "posterior_from_responses",
]


@dataclass(frozen=True)
class ItemParams:
    """Calibrated 2PL parameters: discrimination ``a`` > 0 and easiness ``b``."""

    a: float
    b: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError("item parameters must be finite")
        if self.a <= 0:
            raise ValueError("discrimination must be positive")


@dataclass(frozen=True)
class GridSpec:
    """Uniform ability grid on [lo, hi] with n_points nodes."""

    lo: float = -6.0
    hi: float = 6.0
    n_points: int = 1201

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise ValueError("grid_lo must be < grid_hi")
        if self.n_points < 3:
            raise ValueError("grid needs at least 3 points")

    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n_points)

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.n_points - 1)


DEFAULT_GRID = GridSpec()


@dataclass(frozen=True)
class GridPosterior:
    """Discretized ability distribution with trapezoid-rule summaries.

    ``mean`` is the score; ``sd`` is the per-person measurement error fed to
    the reliability and validity models.
    """

    grid: GridSpec
    log_density: np.ndarray
    mean: float
    sd: float

    def density(self) -> np.ndarray:
        """Normalized density on the grid (integrates to 1, trapezoid rule)."""
        d = np.exp(self.log_density - self.log_density.max())
        return d / np.trapezoid(d, dx=self.grid.step)


def prob_correct(theta: float, params: ItemParams) -> float:
    """P(correct) = 1 / (1 + exp(-a * (theta + b))), overflow-safe."""
    z = params.a * (theta + params.b)
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def item_information(theta: float, params: ItemParams) -> float:
    """Fisher information a^2 * p * (1 - p); peaks at theta = -b with a^2/4."""
    p = prob_correct(theta, params)
    return params.a * params.a * p * (1.0 - p)


def test_information(theta: float, items: list[ItemParams]) -> float:
    """Sum of item informations at theta."""
    if not items:
        raise ValueError("empty item set")
    return sum(item_information(theta, it) for it in items)


def standard_error(theta: float, items: list[ItemParams]) -> float:
    """SE(theta) = 1 / sqrt(total information). More information, smaller SE."""
    info = test_information(theta, items)
    if info <= 0.0:
        raise ValueError("degenerate information")
    return 1.0 / math.sqrt(info)


def _log_sigmoid(z: np.ndarray) -> np.ndarray:
    # log(1/(1+exp(-z))) = -log1p(exp(-z)), branch on sign for stability
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = -np.log1p(np.exp(-z[pos]))
    out[~pos] = z[~pos] - np.log1p(np.exp(z[~pos]))
    return out


def log_likelihood_grid(
    grid_points: np.ndarray, params: ItemParams, correct: bool
) -> np.ndarray:
    """Bernoulli log-likelihood of one response evaluated on the whole grid."""
    z = params.a * (grid_points + params.b)
    return _log_sigmoid(z) if correct else _log_sigmoid(-z)


def _summaries(grid: GridSpec, log_density: np.ndarray) -> tuple[float, float]:
    pts = grid.points()
    dens = np.exp(log_density - log_density.max())
    total = np.trapezoid(dens, dx=grid.step)
    # edge mass under trapezoid weights; a fat edge means the grid clipped the posterior
    edge = 0.5 * grid.step * max(dens[0], dens[-1]) / total
    if edge >= 1e-3:
        raise ValueError("grid truncation")
    dens = dens / total
    mean = float(np.trapezoid(pts * dens, dx=grid.step))
    var = float(np.trapezoid((pts - mean) ** 2 * dens, dx=grid.step))
    return mean, math.sqrt(var)


def posterior_from_responses(
    prior_mean: float,
    prior_sd: float,
    responses: list[tuple[ItemParams, bool]],
    grid: GridSpec = DEFAULT_GRID,
) -> GridPosterior:
    """Grid posterior over theta: Normal prior times 2PL Bernoulli likelihoods.

    Accumulates in the log domain (single max-subtraction before
    exponentiation) so long response sequences cannot underflow.
    """
    if prior_sd <= 0:
        raise ValueError("prior_sd must be positive")
    if grid.lo > prior_mean - 5 * prior_sd or grid.hi < prior_mean + 5 * prior_sd:
        raise ValueError("grid must cover prior_mean +/- 5 sd")
    pts = grid.points()
    log_dens = -0.5 * ((pts - prior_mean) / prior_sd) ** 2
    for params, correct in responses:
        log_dens = log_dens + log_likelihood_grid(pts, params, correct)
    mean, sd = _summaries(grid, log_dens)
    return GridPosterior(grid=grid, log_density=log_dens, mean=mean, sd=sd)
