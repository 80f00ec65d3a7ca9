"""Adaptive test session state machine.

Flow: initialize the ability posterior from the bank prior, serve the most
informative item at the current ability estimate under content-balancing
constraints, update the posterior after each scored answer, interleave
unscored items at fixed positions, terminate after a fixed number of scored
items.

Content balancing: a ledger starts with every (dimension, value) pair that
must be covered. While more scored slots remain than uncovered pairs,
selection is an unconstrained information argmax; once the remaining slots
are no more than the uncovered count, selection is restricted to items that
cover at least one uncovered pair. Covered pairs leave the ledger when an
item carrying them is selected.
"""
from __future__ import annotations

import json
import math
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .bank import ItemBank
from .irt import DEFAULT_GRID, GridPosterior, GridSpec, log_likelihood_grid

__all__ = [
    "SessionConfig",
    "SessionState",
    "Score",
    "EngineError",
    "CoverageError",
    "default_config",
    "start_session",
    "select_next_scored",
    "assign_unscored_positions",
    "submit_answer",
    "final_score",
    "transcript_events",
    "write_transcript",
    "read_transcript",
    "replay_transcript",
]


class EngineError(RuntimeError):
    pass


class CoverageError(EngineError):
    pass


@dataclass(frozen=True)
class SessionConfig:
    scored_length: int
    covering_dimensions: tuple[str, ...]
    n_unscored_interleaved: int = 0
    unscored_positions: tuple[int, ...] = ()
    rng_seed: int = 0
    prior_override: tuple[float, float] | None = None
    grid: GridSpec = DEFAULT_GRID

    def __post_init__(self) -> None:
        if self.scored_length < 1:
            raise ValueError("scored_length must be positive")
        total = self.scored_length + self.n_unscored_interleaved
        if len(set(self.unscored_positions)) != len(self.unscored_positions):
            raise ValueError("unscored_positions must be distinct")
        if len(self.unscored_positions) != self.n_unscored_interleaved:
            raise ValueError("unscored_positions count must match n_unscored_interleaved")
        for p in self.unscored_positions:
            if not 1 <= p <= total:
                raise ValueError(f"unscored position {p} outside [1, {total}]")


def default_config(bank: ItemBank, rng_seed: int = 0, deployment_seed: int = 0) -> SessionConfig:
    """Family defaults: 27 scored for vlat_like; 11 scored + 4 fixed-position
    unscored for calvi_like. Unscored slot positions are drawn once per
    deployment (deployment_seed), not per session."""
    if bank.test_family == "calvi_like":
        n_unscored = min(4, len(bank.unscored_items()))
        rng = np.random.default_rng(deployment_seed)
        total = 11 + n_unscored
        positions = tuple(
            sorted(int(p) for p in rng.choice(np.arange(1, total + 1), size=n_unscored, replace=False))
        )
        return SessionConfig(
            scored_length=11,
            covering_dimensions=tuple(bank.covering_dimensions),
            n_unscored_interleaved=n_unscored,
            unscored_positions=positions,
            rng_seed=rng_seed,
        )
    return SessionConfig(
        scored_length=27 if bank.test_family == "vlat_like" else bank.coverage_minimum(),
        covering_dimensions=tuple(bank.covering_dimensions),
        rng_seed=rng_seed,
    )


@dataclass(frozen=True)
class Score:
    theta_mean: float
    theta_se: float
    raw_correctness: float


@dataclass
class SessionState:
    """One test-taker's administration. Mutated only through engine calls."""

    session_id: str
    config: SessionConfig
    bank_id: str
    prior: tuple[float, float]
    uncovered: set[tuple[str, str]]
    unscored_assignment: dict[int, str]
    administered: list[tuple[str, int, bool, bool]] = field(default_factory=list)
    pending_item: str | None = None
    status: str = "active"
    # internal scoring/selection caches
    _scored_ids: list[str] = field(default_factory=list, repr=False)
    _a: np.ndarray | None = field(default=None, repr=False)
    _b: np.ndarray | None = field(default=None, repr=False)
    _available: np.ndarray | None = field(default=None, repr=False)
    _features: list[frozenset[tuple[str, str]]] = field(default_factory=list, repr=False)
    _log_lik: np.ndarray | None = field(default=None, repr=False)
    _mean: float = 0.0
    _sd: float = 1.0
    _scored_responses: list[tuple[str, bool]] = field(default_factory=list, repr=False)
    _trace: list[dict] = field(default_factory=list, repr=False)

    @property
    def scored_count(self) -> int:
        return sum(1 for _, _, _, scored in self.administered if scored)

    @property
    def position(self) -> int:
        """1-based position of the pending item."""
        return len(self.administered) + 1

    @property
    def total_length(self) -> int:
        return self.config.scored_length + self.config.n_unscored_interleaved

    @property
    def posterior_mean(self) -> float:
        return self._mean

    @property
    def posterior_sd(self) -> float:
        return self._sd

    def posterior(self) -> GridPosterior:
        grid = self.config.grid
        pts = grid.points()
        mean0, sd0 = self.prior
        log_dens = -0.5 * ((pts - mean0) / sd0) ** 2 + self._log_lik
        return GridPosterior(grid=grid, log_density=log_dens, mean=self._mean, sd=self._sd)

    def scored_responses(self) -> list[tuple[str, bool]]:
        return list(self._scored_responses)

    def events(self) -> list[dict]:
        return [dict(e) for e in self._trace]


def _grid_summaries(grid: GridSpec, log_dens: np.ndarray) -> tuple[float, float]:
    pts = grid.points()
    dens = np.exp(log_dens - log_dens.max())
    total = np.trapezoid(dens, dx=grid.step)
    dens /= total
    mean = float(np.trapezoid(pts * dens, dx=grid.step))
    var = float(np.trapezoid((pts - mean) ** 2 * dens, dx=grid.step))
    return mean, math.sqrt(var)


def assign_unscored_positions(
    bank: ItemBank, config: SessionConfig, rng: np.random.Generator
) -> dict[int, str]:
    """Seeded uniform assignment of unscored items to the configured slots.

    The item pool prefers the unscored items flagged with a
    cannot-be-inferred option (the fixed normal-item set); anything else
    falls back to the full unscored pool.
    """
    n = config.n_unscored_interleaved
    if n == 0:
        return {}
    flagged = [it.item_id for it in bank.unscored_items() if it.has_cbi_option]
    pool = flagged if len(flagged) >= n else [it.item_id for it in bank.unscored_items()]
    if len(pool) < n:
        raise EngineError("too few unscored items for configured slots")
    chosen = [pool[i] for i in rng.permutation(len(pool))[:n]]
    return dict(zip(sorted(config.unscored_positions), chosen))


def start_session(
    bank: ItemBank, config: SessionConfig, session_id: str | None = None
) -> SessionState:
    """Initialize posterior to the bank prior and serve the first item."""
    for d in config.covering_dimensions:
        if d not in bank.vocabularies:
            raise EngineError(f"bank has no vocabulary for dimension {d}")
    minimum = bank.coverage_minimum(config.covering_dimensions)
    if config.scored_length < minimum:
        raise CoverageError(
            f"length below coverage minimum: need >= {minimum} scored items"
        )
    scored = bank.scored_items()
    if config.scored_length > len(scored):
        raise EngineError("scored_length exceeds bank size")

    prior = config.prior_override or bank.theta_prior
    grid = config.grid
    if grid.lo > prior[0] - 5 * prior[1] or grid.hi < prior[0] + 5 * prior[1]:
        raise EngineError("grid must cover prior_mean +/- 5 sd")

    rng = np.random.default_rng(config.rng_seed)
    assignment = assign_unscored_positions(bank, config, rng)

    state = SessionState(
        session_id=session_id or uuid.uuid4().hex,
        config=config,
        bank_id=bank.bank_id,
        prior=prior,
        uncovered={
            (d, v) for d in config.covering_dimensions for v in bank.vocabularies[d]
        },
        unscored_assignment=assignment,
    )
    state._scored_ids = [it.item_id for it in scored]
    state._a = np.array([it.params.a for it in scored])
    state._b = np.array([it.params.b for it in scored])
    state._available = np.ones(len(scored), dtype=bool)
    state._features = [
        frozenset(
            (d, v) for d, v in it.features.items() if d in config.covering_dimensions
        )
        for it in scored
    ]
    state._log_lik = np.zeros(grid.n_points)
    pts = grid.points()
    state._mean, state._sd = _grid_summaries(
        grid, -0.5 * ((pts - prior[0]) / prior[1]) ** 2
    )
    state._trace.append(
        {
            "event": "session_started",
            "session_id": state.session_id,
            "bank_id": bank.bank_id,
            "config": {
                "scored_length": config.scored_length,
                "covering_dimensions": list(config.covering_dimensions),
                "n_unscored_interleaved": config.n_unscored_interleaved,
                "unscored_positions": list(config.unscored_positions),
                "rng_seed": config.rng_seed,
                "prior_override": list(config.prior_override)
                if config.prior_override
                else None,
            },
            "unscored_assignment": {str(k): v for k, v in assignment.items()},
        }
    )
    _serve_next(state, bank)
    return state


def _serve_next(state: SessionState, bank: ItemBank) -> None:
    pos = state.position
    if pos in state.unscored_assignment:
        item_id = state.unscored_assignment[pos]
        scored = False
    else:
        item_id = select_next_scored(state, bank)
        scored = True
    state.pending_item = item_id
    state._trace.append(
        {
            "event": "item_served",
            "position": pos,
            "item_id": item_id,
            "scored": scored,
        }
    )


def select_next_scored(state: SessionState, bank: ItemBank) -> str:
    """Information argmax at the current ability estimate, constrained to
    uncovered features once remaining slots run down to the uncovered count.
    Removes the pick's features from the coverage ledger. Ties break to the
    lexicographically smallest item_id."""
    if state.status != "active":
        raise EngineError("session is not active")
    remaining = state.config.scored_length - state.scored_count
    if remaining < 1:
        raise EngineError("no scored slots remaining")
    if not state._available.any():
        raise EngineError("bank exhausted")

    uncovered = state.uncovered
    # each pick covers at most one value per dimension, so this lower bound
    # being unreachable means no completion can cover everything
    per_dim: dict[str, int] = {}
    for d, _ in uncovered:
        per_dim[d] = per_dim.get(d, 0) + 1
    if per_dim and remaining < max(per_dim.values()):
        raise CoverageError("coverage infeasible")

    eligible = state._available.copy()
    if remaining <= len(uncovered):
        covers = np.array(
            [bool(f & uncovered) for f in state._features], dtype=bool
        )
        eligible &= covers
        if not eligible.any():
            raise CoverageError("coverage infeasible")

    theta = state._mean
    z = state._a * (theta + state._b)
    p = np.empty_like(z)
    pos = z >= 0
    p[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    p[~pos] = np.exp(z[~pos]) / (1.0 + np.exp(z[~pos]))
    info = state._a**2 * p * (1.0 - p)
    info[~eligible] = -np.inf
    best = info.max()
    tied = np.flatnonzero(info == best)
    idx = min(tied, key=lambda i: state._scored_ids[i])

    state._available[idx] = False
    state.uncovered -= state._features[idx]
    return state._scored_ids[idx]


def submit_answer(
    state: SessionState, bank: ItemBank, item_id: str, selected_index: int
) -> SessionState:
    """Record an answer for the pending item, update the posterior if the item
    is scored, and serve the next item (or complete the session)."""
    if state.status != "active":
        raise EngineError("session already completed")
    if item_id != state.pending_item:
        raise EngineError("out-of-order answer")
    item = bank.item(item_id)
    if not 0 <= selected_index < len(item.options):
        raise EngineError("selected_index out of range")

    correct = selected_index == item.correct_index
    state.administered.append((item_id, selected_index, correct, item.scored))
    if item.scored:
        grid = state.config.grid
        state._log_lik = state._log_lik + log_likelihood_grid(
            grid.points(), item.params, correct
        )
        pts = grid.points()
        mean0, sd0 = state.prior
        state._mean, state._sd = _grid_summaries(
            grid, -0.5 * ((pts - mean0) / sd0) ** 2 + state._log_lik
        )
        state._scored_responses.append((item_id, correct))
    state._trace.append(
        {
            "event": "answer_submitted",
            "position": len(state.administered),
            "item_id": item_id,
            "selected_index": selected_index,
            "correct": correct,
            "scored": item.scored,
            "posterior_mean": state._mean,
            "posterior_sd": state._sd,
        }
    )

    if len(state.administered) == state.total_length:
        if state.uncovered:
            raise CoverageError("session completed without full coverage")
        state.status = "completed"
        state.pending_item = None
        score = final_score(state)
        state._trace.append(
            {
                "event": "session_completed",
                "score": {
                    "theta_mean": score.theta_mean,
                    "theta_se": score.theta_se,
                    "raw_correctness": score.raw_correctness,
                },
                "administered": len(state.administered),
            }
        )
    else:
        _serve_next(state, bank)
    return state


def final_score(state: SessionState) -> Score:
    """Posterior mean/sd plus raw correctness over scored items."""
    if state.status != "completed":
        raise EngineError("not terminated")
    n_correct = sum(1 for _, _, c, s in state.administered if s and c)
    n_scored = state.scored_count
    return Score(
        theta_mean=state._mean,
        theta_se=state._sd,
        raw_correctness=n_correct / n_scored,
    )


def transcript_events(state: SessionState) -> list[dict]:
    return state.events()


def write_transcript(state: SessionState, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for event in state.events():
            fh.write(json.dumps(event, sort_keys=True) + "\n")


def read_transcript(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def replay_transcript(bank: ItemBank, events: Iterable[dict]) -> SessionState:
    """Re-run the recorded answers through the engine; the deterministic
    selection rule reproduces the same item sequence and posteriors."""
    events = list(events)
    started = next(e for e in events if e["event"] == "session_started")
    cfg = started["config"]
    config = SessionConfig(
        scored_length=cfg["scored_length"],
        covering_dimensions=tuple(cfg["covering_dimensions"]),
        n_unscored_interleaved=cfg["n_unscored_interleaved"],
        unscored_positions=tuple(cfg["unscored_positions"]),
        rng_seed=cfg["rng_seed"],
        prior_override=tuple(cfg["prior_override"]) if cfg["prior_override"] else None,
    )
    state = start_session(bank, config, session_id=started["session_id"])
    for event in events:
        if event["event"] != "answer_submitted":
            continue
        if state.pending_item != event["item_id"]:
            raise EngineError(
                f"replay diverged: expected {event['item_id']}, engine served {state.pending_item}"
            )
        submit_answer(state, bank, event["item_id"], event["selected_index"])
    return state
