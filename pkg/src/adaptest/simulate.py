"""Simulation studies: precision-versus-length sweeps and mistake recovery.

Simulated persons carry a ground-truth ability; their response to any scored
item is a Bernoulli draw with the 2PL success probability, realized once per
(person, item) pair. That realization is shared between adaptive sessions and
static baselines, so administering the same item set always yields the same
responses regardless of order or test length.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bank import Item, ItemBank
from .engine import SessionConfig, SessionState, start_session, submit_answer
from .irt import DEFAULT_GRID, GridSpec, ItemParams, posterior_from_responses, prob_correct

__all__ = [
    "SimulatedPerson",
    "SweepResult",
    "RecoveryRecord",
    "RecoveryResult",
    "draw_persons",
    "simulate_response",
    "relative_se_difference",
    "sweep_lengths",
    "detect_mistakes",
    "recovery_analysis",
    "run_simulated_session",
]


@dataclass(frozen=True)
class SimulatedPerson:
    true_theta: float
    rng_seed: int


def draw_persons(n: int, mean: float, sd: float, seed: int) -> list[SimulatedPerson]:
    """n simulated persons with abilities from Normal(mean, sd)."""
    if sd <= 0:
        raise ValueError("sd must be positive")
    rng = np.random.default_rng(seed)
    thetas = rng.normal(mean, sd, n)
    seeds = rng.integers(0, 2**31 - 1, n)
    return [
        SimulatedPerson(true_theta=float(t), rng_seed=int(s))
        for t, s in zip(thetas, seeds)
    ]


def _item_entropy(item_id: str) -> int:
    digest = hashlib.sha256(item_id.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def simulate_response(person: SimulatedPerson, item: Item) -> bool:
    """Bernoulli correctness, realized deterministically per (person, item)."""
    if not item.scored:
        raise ValueError("cannot simulate a scored outcome for an unscored item")
    p = prob_correct(person.true_theta, item.params)
    rng = np.random.default_rng([person.rng_seed, _item_entropy(item.item_id)])
    return bool(rng.random() < p)


def response_table(person: SimulatedPerson, bank: ItemBank) -> dict[str, bool]:
    """All of one person's realized responses to the bank's scored items."""
    return {
        it.item_id: simulate_response(person, it) for it in bank.scored_items()
    }


def relative_se_difference(se_adaptive: float, se_original: float) -> float:
    """(SE_adaptive - SE_original) / SE_original; negative means the adaptive
    test is the more precise one."""
    if se_original <= 0:
        raise ValueError("non-positive baseline standard error")
    return (se_adaptive - se_original) / se_original


def run_simulated_session(
    bank: ItemBank,
    config: SessionConfig,
    person: SimulatedPerson,
    table: dict[str, bool] | None = None,
) -> SessionState:
    """Drive a full session with the person's realized responses.

    Unscored items get an arbitrary fixed answer; they never touch the
    posterior.
    """
    table = table if table is not None else response_table(person, bank)
    state = start_session(bank, config)
    while state.status == "active":
        item = bank.item(state.pending_item)
        if item.scored:
            correct = table[item.item_id]
            selected = (
                item.correct_index
                if correct
                else (item.correct_index + 1) % len(item.options)
            )
        else:
            selected = 0
        submit_answer(state, bank, item.item_id, selected)
    return state


def _se_from_items(theta: float, params: list[ItemParams]) -> float:
    info = 0.0
    for p in params:
        pc = prob_correct(theta, p)
        info += p.a * p.a * pc * (1.0 - pc)
    if info <= 0:
        raise ValueError("degenerate information")
    return 1.0 / math.sqrt(info)


def _score_item_set(
    bank: ItemBank,
    item_ids: list[str],
    table: dict[str, bool],
    prior: tuple[float, float],
    grid: GridSpec,
) -> tuple[float, float]:
    """Final posterior mean and information-based SE for a fixed item set.

    Items are processed in sorted-id order so that identical item sets give
    bit-identical floating-point results on the adaptive and baseline paths.
    """
    ordered = sorted(item_ids)
    responses = [(bank.item(i).params, table[i]) for i in ordered]
    post = posterior_from_responses(prior[0], prior[1], responses, grid)
    params = [bank.item(i).params for i in ordered]
    return post.mean, _se_from_items(post.mean, params)


@dataclass
class SweepResult:
    lengths: list[int]
    baseline: str
    per_person: dict[int, list[float]]  # length -> relative SE differences
    summary: dict[int, dict[str, float]]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["length", "person", "rel_se_diff"])
            for length in self.lengths:
                for j, v in enumerate(self.per_person[length]):
                    writer.writerow([length, j, repr(v)])

    def to_summary_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "baseline": self.baseline,
                    "lengths": self.lengths,
                    "summary": {str(k): v for k, v in self.summary.items()},
                },
                fh,
                indent=2,
                sort_keys=True,
            )
            fh.write("\n")


def _interval_summary(values: np.ndarray) -> dict[str, float]:
    q = np.quantile(values, [0.025, 0.17, 0.5, 0.83, 0.975])
    return {
        "median": float(q[2]),
        "lo66": float(q[1]),
        "hi66": float(q[3]),
        "lo95": float(q[0]),
        "hi95": float(q[4]),
        "mean": float(values.mean()),
    }


def sweep_lengths(
    bank: ItemBank,
    lengths: list[int],
    persons: list[SimulatedPerson],
    baseline: str = "full_bank",
    grid: GridSpec = DEFAULT_GRID,
) -> SweepResult:
    """Relative SE difference of fixed-length adaptive tests against a static
    baseline, per person and length, with median/66%/95% summaries."""
    if baseline == "full_bank":
        baseline_ids = [it.item_id for it in bank.scored_items()]
    elif baseline == "static_reference":
        if not bank.static_reference_ids:
            raise ValueError("baseline static_reference requires bank.static_reference_ids")
        baseline_ids = list(bank.static_reference_ids)
    else:
        raise ValueError(f"unknown baseline: {baseline}")

    minimum = bank.coverage_minimum()
    n_scored = len(bank.scored_items())
    for length in lengths:
        if length < minimum or length > n_scored:
            raise ValueError(
                f"infeasible length {length}: coverage minimum is {minimum}, bank has {n_scored}"
            )

    prior = bank.theta_prior
    per_person: dict[int, list[float]] = {length: [] for length in lengths}
    for person in persons:
        table = response_table(person, bank)
        _, se_base = _score_item_set(bank, baseline_ids, table, prior, grid)
        for length in lengths:
            config = SessionConfig(
                scored_length=length,
                covering_dimensions=tuple(bank.covering_dimensions),
                rng_seed=person.rng_seed,
                grid=grid,
            )
            state = run_simulated_session(bank, config, person, table)
            administered = [i for i, _, _, s in state.administered if s]
            _, se_adaptive = _score_item_set(bank, administered, table, prior, grid)
            per_person[length].append(relative_se_difference(se_adaptive, se_base))

    summary = {
        length: _interval_summary(np.array(per_person[length])) for length in lengths
    }
    return SweepResult(
        lengths=list(lengths),
        baseline=baseline,
        per_person=per_person,
        summary=summary,
    )


@dataclass(frozen=True)
class RecoveryRecord:
    person: int
    mistake_step: int
    recovery_length: int | None
    censored: bool


@dataclass
class RecoveryResult:
    records: list[RecoveryRecord]
    median: float | None
    sd: float | None
    n_mistakes: int
    n_censored: int

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["person", "mistake_step", "recovery_length", "censored"])
            for r in self.records:
                writer.writerow(
                    [
                        r.person,
                        r.mistake_step,
                        "" if r.recovery_length is None else r.recovery_length,
                        int(r.censored),
                    ]
                )


def detect_mistakes(
    distances: list[float], rule: str = "printed"
) -> list[tuple[int, int | None, bool]]:
    """Mistakes and recoveries from a |estimate - truth| trajectory.

    ``distances[0]`` is the pre-test distance from the prior mean. A mistake
    at step i is distances[i] > distances[i-1]. Recovery is the first later
    step back within the mistake distance (``printed`` rule) or within the
    pre-mistake distance (``pre_mistake`` rule); recovery length is the step
    gap. Unrecovered mistakes are censored.
    """
    if rule not in ("printed", "pre_mistake"):
        raise ValueError(f"unknown recovery rule: {rule}")
    out: list[tuple[int, int | None, bool]] = []
    for i in range(1, len(distances)):
        if distances[i] <= distances[i - 1]:
            continue
        threshold = distances[i] if rule == "printed" else distances[i - 1]
        recovery: int | None = None
        for i_prime in range(i + 1, len(distances)):
            if distances[i_prime] <= threshold:
                recovery = i_prime - i
                break
        out.append((i, recovery, recovery is None))
    return out


def recovery_analysis(
    bank: ItemBank,
    config: SessionConfig,
    persons: list[SimulatedPerson],
    rule: str = "printed",
) -> RecoveryResult:
    """Mistake recovery lengths over simulated adaptive sessions."""
    records: list[RecoveryRecord] = []
    for idx, person in enumerate(persons):
        state = run_simulated_session(bank, config, person)
        distances = [abs(state.prior[0] - person.true_theta)]
        for event in state.events():
            if event["event"] == "answer_submitted" and event["scored"]:
                distances.append(abs(event["posterior_mean"] - person.true_theta))
        for step, length, censored in detect_mistakes(distances, rule):
            records.append(
                RecoveryRecord(
                    person=idx,
                    mistake_step=step,
                    recovery_length=length,
                    censored=censored,
                )
            )
    recovered = [r.recovery_length for r in records if r.recovery_length is not None]
    return RecoveryResult(
        records=records,
        median=float(np.median(recovered)) if recovered else None,
        sd=float(np.std(recovered, ddof=1)) if len(recovered) > 1 else None,
        n_mistakes=len(records),
        n_censored=sum(1 for r in records if r.censored),
    )
