"""Bayesian 2PL calibration from test-tryout response matrices.

The sampler is Metropolis-within-Gibbs with vectorized blocks: person
abilities update given item parameters, then discriminations and easiness
given abilities. Identification comes from the standard-normal ability prior.
Unscored items are dropped from the likelihood entirely; their columns can be
arbitrary without touching any posterior.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mcmc as mc
from .bank import ItemBank
from .irt import DEFAULT_GRID, GridPosterior, GridSpec, ItemParams, posterior_from_responses

__all__ = [
    "ResponseMatrix",
    "CalibrationPriors",
    "CalibrationResult",
    "load_response_matrix",
    "save_response_matrix",
    "fit_2pl",
    "estimate_person_thetas",
    "feature_correlations",
]


@dataclass(frozen=True)
class ResponseMatrix:
    """Dense person x item correctness matrix; NaN marks a missing response."""

    persons: list[str]
    items: list[str]
    kinds: list[str]
    responses: np.ndarray

    def __post_init__(self) -> None:
        n_p, n_i = self.responses.shape
        if n_p != len(self.persons) or n_i != len(self.items):
            raise ValueError("matrix dimensions inconsistent with labels")
        if len(self.kinds) != len(self.items):
            raise ValueError("kinds must parallel items")

    def scored_indices(self) -> np.ndarray:
        return np.array([k == "scored" for k in self.kinds], dtype=bool)


def load_response_matrix(
    path: str | Path, bank: ItemBank | None = None
) -> ResponseMatrix:
    """CSV with person_id first, then one 0/1/NA column per item. Item kinds
    come from the bank when given, else every column is treated as scored."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        items = header[1:]
        persons = []
        rows = []
        for row in reader:
            persons.append(row[0])
            rows.append(
                [math.nan if cell in ("NA", "") else float(cell) for cell in row[1:]]
            )
    kinds = (
        [bank.item(i).kind for i in items] if bank is not None else ["scored"] * len(items)
    )
    return ResponseMatrix(
        persons=persons, items=items, kinds=kinds, responses=np.array(rows)
    )


def save_response_matrix(matrix: ResponseMatrix, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["person_id", *matrix.items])
        for j, person in enumerate(matrix.persons):
            writer.writerow(
                [person]
                + [
                    "NA" if math.isnan(v) else str(int(v))
                    for v in matrix.responses[j]
                ]
            )


@dataclass(frozen=True)
class CalibrationPriors:
    a_log_mean: float = 0.0
    a_log_sd: float = 0.5
    b_mean: float = 0.0
    b_sd: float = 1.0
    theta_mean: float = 0.0
    theta_sd: float = 1.0


@dataclass
class CalibrationResult:
    item_ids: list[str]
    item_posterior: dict[str, dict[str, float]]  # id -> a_mean/a_sd/b_mean/b_sd
    person_ids: list[str]
    person_posterior: dict[str, dict[str, float]]  # id -> theta_mean/theta_sd
    rhat: dict[str, float]
    ess_bulk: dict[str, float]
    ess_tail: dict[str, float]
    quasi_separated: list[str]
    acceptance_rates: list[float]
    warnings: list[str] = field(default_factory=list)

    def params(self, item_id: str) -> ItemParams:
        p = self.item_posterior[item_id]
        return ItemParams(a=p["a_mean"], b=p["b_mean"])

    def bank_fragment(self) -> dict:
        """Item parameter block in the bank-file shape."""
        return {
            "items": [
                {
                    "item_id": i,
                    "params": {
                        "a": self.item_posterior[i]["a_mean"],
                        "b": self.item_posterior[i]["b_mean"],
                    },
                }
                for i in self.item_ids
            ]
        }

    def to_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "items": self.item_posterior,
                    "persons": self.person_posterior,
                    "rhat": self.rhat,
                    "ess_bulk": self.ess_bulk,
                    "ess_tail": self.ess_tail,
                    "quasi_separated": self.quasi_separated,
                    "acceptance_rates": self.acceptance_rates,
                    "warnings": self.warnings,
                    "bank_fragment": self.bank_fragment(),
                },
                fh,
                indent=2,
                sort_keys=True,
            )
            fh.write("\n")


def _cell_loglik(
    a: np.ndarray, b: np.ndarray, theta: np.ndarray, sgn: np.ndarray, missing: np.ndarray
) -> np.ndarray:
    """Per-cell Bernoulli log-likelihood; missing cells contribute zero.

    ``sgn`` is +1 for correct and -1 for incorrect, so each cell is
    log sigmoid(sgn * a * (theta + b)).
    """
    w = sgn * (a[None, :] * (theta[:, None] + b[None, :]))
    out = np.minimum(w, 0.0) - np.log1p(np.exp(-np.abs(w)))
    out[missing] = 0.0
    return out


def fit_2pl(
    matrix: ResponseMatrix,
    priors: CalibrationPriors = CalibrationPriors(),
    config: mc.McmcConfig = mc.DEFAULT_MCMC,
) -> CalibrationResult:
    """Joint posterior over item parameters and person abilities."""
    scored_mask = matrix.scored_indices()
    item_ids = [i for i, s in zip(matrix.items, scored_mask) if s]
    if len(item_ids) < 2:
        raise ValueError("need at least 2 scored items")
    if len(matrix.persons) < 10:
        raise ValueError("need at least 10 persons")
    y = matrix.responses[:, scored_mask]
    observed = ~np.isnan(y)
    if not observed.any(axis=0).all():
        missing = [item_ids[i] for i in np.flatnonzero(~observed.any(axis=0))]
        raise ValueError(f"scored items with no responses: {missing}")

    col_mean = np.nanmean(y, axis=0)
    quasi = [item_ids[i] for i in np.flatnonzero((col_mean == 0.0) | (col_mean == 1.0))]

    missing = np.isnan(y)
    sgn = np.where(np.nan_to_num(y, nan=0.0) > 0.5, 1.0, -1.0)
    n_p, n_i = y.shape
    n_kept = config.n_kept
    kept_a = np.empty((config.n_chains, n_kept, n_i))
    kept_b = np.empty((config.n_chains, n_kept, n_i))
    kept_t = np.empty((config.n_chains, n_kept, n_p))
    acceptance: list[float] = []
    adapt_window = 50

    for c in range(config.n_chains):
        rng = np.random.default_rng([config.seed, c])
        log_a = priors.a_log_mean + 0.1 * rng.standard_normal(n_i)
        b = priors.b_mean + 0.1 * rng.standard_normal(n_i)
        theta = priors.theta_mean + 0.1 * rng.standard_normal(n_p)
        ll = _cell_loglik(np.exp(log_a), b, theta, sgn, missing)
        item_ll = ll.sum(axis=0)
        person_ll = ll.sum(axis=1)

        s_t = np.full(n_p, 1.0)
        s_a = np.full(n_i, 0.5)
        s_b = np.full(n_i, 0.5)
        acc = {"t": np.zeros(n_p), "a": np.zeros(n_i), "b": np.zeros(n_i)}
        n_prop = 0
        post_acc = 0.0
        post_n = 0
        k_idx = 0

        for it in range(config.n_iterations):
            warm = it < config.n_warmup
            # ability block
            theta_prop = theta + s_t * rng.standard_normal(n_p)
            ll_prop = _cell_loglik(np.exp(log_a), b, theta_prop, sgn, missing)
            person_ll_prop = ll_prop.sum(axis=1)
            delta = (
                person_ll_prop
                - person_ll
                - 0.5 * ((theta_prop - priors.theta_mean) / priors.theta_sd) ** 2
                + 0.5 * ((theta - priors.theta_mean) / priors.theta_sd) ** 2
            )
            take = np.log(rng.random(n_p)) < delta
            theta = np.where(take, theta_prop, theta)
            ll = np.where(take[:, None], ll_prop, ll)
            person_ll = np.where(take, person_ll_prop, person_ll)
            acc["t"] += take

            # discrimination block (log scale)
            log_a_prop = log_a + s_a * rng.standard_normal(n_i)
            ll_prop = _cell_loglik(np.exp(log_a_prop), b, theta, sgn, missing)
            item_ll = ll.sum(axis=0)
            item_ll_prop = ll_prop.sum(axis=0)
            delta = (
                item_ll_prop
                - item_ll
                - 0.5 * ((log_a_prop - priors.a_log_mean) / priors.a_log_sd) ** 2
                + 0.5 * ((log_a - priors.a_log_mean) / priors.a_log_sd) ** 2
            )
            take = np.log(rng.random(n_i)) < delta
            log_a = np.where(take, log_a_prop, log_a)
            ll = np.where(take[None, :], ll_prop, ll)
            acc["a"] += take

            # easiness block
            b_prop = b + s_b * rng.standard_normal(n_i)
            ll_prop = _cell_loglik(np.exp(log_a), b_prop, theta, sgn, missing)
            item_ll = ll.sum(axis=0)
            item_ll_prop = ll_prop.sum(axis=0)
            delta = (
                item_ll_prop
                - item_ll
                - 0.5 * ((b_prop - priors.b_mean) / priors.b_sd) ** 2
                + 0.5 * ((b - priors.b_mean) / priors.b_sd) ** 2
            )
            take = np.log(rng.random(n_i)) < delta
            b = np.where(take, b_prop, b)
            ll = np.where(take[None, :], ll_prop, ll)
            person_ll = ll.sum(axis=1)
            acc["b"] += take

            n_prop += 1
            if warm and n_prop % adapt_window == 0:
                for key, scales in (("t", s_t), ("a", s_a), ("b", s_b)):
                    rates = acc[key] / adapt_window
                    scales[rates > 0.45] *= 1.25
                    scales[rates < 0.25] /= 1.25
                    acc[key][:] = 0
            if not warm:
                post_acc += take.mean()  # easiness block as proxy
                post_n += 1
                if (it - config.n_warmup + 1) % config.thin == 0:
                    kept_a[c, k_idx] = np.exp(log_a)
                    kept_b[c, k_idx] = b
                    kept_t[c, k_idx] = theta
                    k_idx += 1
        acceptance.append(float(post_acc / post_n))

    item_posterior = {}
    rhat: dict[str, float] = {}
    ess_bulk: dict[str, float] = {}
    ess_tail: dict[str, float] = {}
    for i, item_id in enumerate(item_ids):
        a_draws = kept_a[:, :, i]
        b_draws = kept_b[:, :, i]
        item_posterior[item_id] = {
            "a_mean": float(a_draws.mean()),
            "a_sd": float(a_draws.std(ddof=1)),
            "b_mean": float(b_draws.mean()),
            "b_sd": float(b_draws.std(ddof=1)),
        }
        rhat[f"a[{item_id}]"] = mc.rhat(a_draws)
        rhat[f"b[{item_id}]"] = mc.rhat(b_draws)
        ess_bulk[f"a[{item_id}]"] = mc.ess(a_draws, "bulk")
        ess_bulk[f"b[{item_id}]"] = mc.ess(b_draws, "bulk")
        ess_tail[f"a[{item_id}]"] = mc.ess(a_draws, "tail")
        ess_tail[f"b[{item_id}]"] = mc.ess(b_draws, "tail")

    person_posterior = {
        pid: {
            "theta_mean": float(kept_t[:, :, j].mean()),
            "theta_sd": float(kept_t[:, :, j].std(ddof=1)),
        }
        for j, pid in enumerate(matrix.persons)
    }
    warnings = [
        f"item {i} answered uniformly; posterior driven by the prior" for i in quasi
    ]
    return CalibrationResult(
        item_ids=item_ids,
        item_posterior=item_posterior,
        person_ids=list(matrix.persons),
        person_posterior=person_posterior,
        rhat=rhat,
        ess_bulk=ess_bulk,
        ess_tail=ess_tail,
        quasi_separated=quasi,
        acceptance_rates=acceptance,
        warnings=warnings,
    )


def estimate_person_thetas(
    matrix: ResponseMatrix,
    item_params: dict[str, ItemParams],
    prior: tuple[float, float] = (0.0, 1.0),
    grid: GridSpec = DEFAULT_GRID,
) -> dict[str, tuple[GridPosterior, bool]]:
    """Independent grid posterior per person given known item parameters.

    Returns person_id -> (posterior, answered_nothing). Missing responses are
    skipped; a person with no scored responses gets the prior back, flagged.
    """
    scored_mask = matrix.scored_indices()
    out: dict[str, tuple[GridPosterior, bool]] = {}
    for j, pid in enumerate(matrix.persons):
        responses = []
        for i, item_id in enumerate(matrix.items):
            if not scored_mask[i] or item_id not in item_params:
                continue
            v = matrix.responses[j, i]
            if math.isnan(v):
                continue
            responses.append((item_params[item_id], v > 0.5))
        post = posterior_from_responses(prior[0], prior[1], responses, grid)
        out[pid] = (post, len(responses) == 0)
    return out


def feature_correlations(
    matrix: ResponseMatrix,
    bank: ItemBank,
    dimension: str,
    config: mc.McmcConfig = mc.FAST_MCMC,
    min_items: int = 2,
) -> dict:
    """Pairwise posterior correlations between per-feature ability estimates.

    Two-stage: score each person on the item subset carrying each feature
    value, then fit the bivariate measurement-error model per feature pair.
    Feature values backed by fewer than ``min_items`` scored items are
    excluded with a warning.
    """
    from .evalmodels import PairedObservation, fit_validity_model

    values = bank.vocabularies[dimension]
    subsets: dict[str, list[str]] = {}
    excluded: list[str] = []
    for v in values:
        ids = [
            it.item_id
            for it in bank.scored_items()
            if it.features.get(dimension) == v and it.item_id in matrix.items
        ]
        if len(ids) < min_items:
            excluded.append(v)
        else:
            subsets[v] = ids

    params = {
        it.item_id: it.params for it in bank.scored_items() if it.params is not None
    }
    estimates: dict[str, dict[str, tuple[float, float]]] = {}
    for v, ids in subsets.items():
        cols = [i for i, item_id in enumerate(matrix.items) if item_id in set(ids)]
        sub = ResponseMatrix(
            persons=matrix.persons,
            items=[matrix.items[i] for i in cols],
            kinds=[matrix.kinds[i] for i in cols],
            responses=matrix.responses[:, cols],
        )
        posts = estimate_person_thetas(sub, params, prior=bank.theta_prior)
        estimates[v] = {
            pid: (post.mean, post.sd)
            for pid, (post, empty) in posts.items()
            if not empty
        }

    kept = list(subsets)
    n = len(kept)
    corr = np.eye(n)
    ci_low = np.eye(n)
    ci_high = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            vi, vj = kept[i], kept[j]
            common = sorted(set(estimates[vi]) & set(estimates[vj]))
            obs = [
                PairedObservation(
                    person_id=pid,
                    theta_original=estimates[vi][pid][0],
                    theta_adaptive=estimates[vj][pid][0],
                    se_original=estimates[vi][pid][1],
                    se_adaptive=estimates[vj][pid][1],
                )
                for pid in common
            ]
            fit = fit_validity_model(obs, config=config)
            s = fit.summary("rho")
            corr[i, j] = corr[j, i] = s["median"]
            ci_low[i, j] = ci_low[j, i] = s["ci_low"]
            ci_high[i, j] = ci_high[j, i] = s["ci_high"]
    return {
        "dimension": dimension,
        "values": kept,
        "correlation": corr,
        "ci_low": ci_low,
        "ci_high": ci_high,
        "excluded": excluded,
    }
