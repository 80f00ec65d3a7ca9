"""Item and bank data model, JSON file format, validation, synthetic banks.

A bank carries pre-calibrated 2PL parameters for its scored items, the
ability-prior metadata used to start sessions, and the feature vocabularies
(chart types, tasks, misleaders) that content balancing must cover. Unscored
items are administered but never enter the ability posterior, so they carry
no parameters.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .irt import ItemParams

__all__ = [
    "VLAT_CHART_TYPES",
    "VLAT_TASKS",
    "CALVI_MISLEADERS",
    "CBI_OPTION",
    "Item",
    "ItemBank",
    "SynthSpec",
    "BankValidationError",
    "load_bank",
    "save_bank",
    "bank_to_dict",
    "bank_from_dict",
    "validate_bank",
    "synth_bank",
    "feature_values",
]

VLAT_CHART_TYPES = [
    "Area Chart",
    "Bar Chart",
    "Bubble Chart",
    "Choropleth Map",
    "Histogram",
    "Line Chart",
    "Pie Chart",
    "Scatterplot",
    "Stacked Area Chart",
    "Stacked Bar Chart",
    "Treemap",
    "100% Stacked Bar Chart",
]

VLAT_TASKS = [
    "Determine Range",
    "Identify the Hierarchical Structure",
    "Find Anomalies",
    "Find Clusters",
    "Find Correlations/Trends",
    "Find Extremum",
    "Make Comparisons",
    "Retrieve Value",
]

CALVI_MISLEADERS = [
    "Cherry Picking",
    "Concealed Uncertainty",
    "Inappropriate Aggregation",
    "Manipulation of Scales - Inappropriate Order",
    "Manipulation of Scales - Inappropriate Scale Range",
    "Manipulation of Scales - Inappropriate Use of Scale Functions",
    "Manipulation of Scales - Unconventional Scale Directions",
    "Misleading Annotations",
    "Missing Data",
    "Missing Normalization",
    "Overplotting",
]

CBI_OPTION = "Cannot be inferred / inadequate information"

TEST_FAMILIES = ("vlat_like", "calvi_like", "custom")
ITEM_KINDS = ("scored", "unscored_normal")

_ITEM_KEYS = {
    "item_id",
    "kind",
    "params",
    "features",
    "stimulus",
    "question",
    "options",
    "correct_index",
    "has_cbi_option",
}
_BANK_KEYS = {
    "bank_id",
    "test_family",
    "theta_prior",
    "covering_dimensions",
    "vocabularies",
    "static_reference_ids",
    "items",
}


class BankValidationError(ValueError):
    """Raised when a bank file or bank object violates the schema/invariants."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("; ".join(violations))


@dataclass(frozen=True)
class Item:
    item_id: str
    kind: str
    params: ItemParams | None
    features: dict[str, str]
    stimulus: dict[str, str]
    question: str
    options: list[str]
    correct_index: int
    has_cbi_option: bool = False

    @property
    def scored(self) -> bool:
        return self.kind == "scored"


@dataclass(frozen=True)
class ItemBank:
    bank_id: str
    test_family: str
    theta_prior: tuple[float, float]  # (mean, sd)
    covering_dimensions: list[str]
    vocabularies: dict[str, list[str]]
    items: list[Item]
    static_reference_ids: list[str] | None = None
    _by_id: dict[str, Item] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_by_id", {it.item_id: it for it in self.items})

    def item(self, item_id: str) -> Item:
        return self._by_id[item_id]

    def scored_items(self) -> list[Item]:
        return [it for it in self.items if it.scored]

    def unscored_items(self) -> list[Item]:
        return [it for it in self.items if not it.scored]

    def coverage_minimum(self, dimensions: list[str] | tuple[str, ...] | None = None) -> int:
        """Smallest feasible scored length for content-balanced sessions.

        Covering all values one at a time needs sum(|vocab_d|) picks, but when
        every scored item carries a value in every covering dimension the first
        pick is guaranteed to cover one new value per dimension, so the worst
        case drops by (n_dims - 1).
        """
        dims = list(dimensions) if dimensions is not None else self.covering_dimensions
        total = sum(len(self.vocabularies[d]) for d in dims)
        if len(dims) > 1 and all(
            all(d in it.features for d in dims) for it in self.scored_items()
        ):
            return total - (len(dims) - 1)
        return total


def feature_values(bank: ItemBank, dimension: str) -> list[str]:
    """Vocabulary of a covering dimension, in bank order."""
    if dimension not in bank.covering_dimensions:
        raise KeyError(f"unknown covering dimension: {dimension}")
    return list(bank.vocabularies[dimension])


def validate_bank(bank: ItemBank) -> list[str]:
    """All invariant violations as data; empty list means the bank is valid."""
    v: list[str] = []
    if bank.test_family not in TEST_FAMILIES:
        v.append(f"unknown test_family: {bank.test_family}")
    mean, sd = bank.theta_prior
    if not (math.isfinite(mean) and math.isfinite(sd) and sd > 0):
        v.append("theta_prior sd must be positive and finite")
    for dim in bank.covering_dimensions:
        if dim not in bank.vocabularies:
            v.append(f"covering dimension without vocabulary: {dim}")

    seen: set[str] = set()
    for it in bank.items:
        if it.item_id in seen:
            v.append(f"duplicate item_id: {it.item_id}")
        seen.add(it.item_id)
        if it.kind not in ITEM_KINDS:
            v.append(f"item {it.item_id}: unknown kind {it.kind!r}")
        if it.scored and it.params is None:
            v.append(f"item {it.item_id}: scored item missing params")
        if not it.scored and it.params is not None:
            v.append(f"item {it.item_id}: unscored item must not carry params")
        if len(it.options) < 2:
            v.append(f"item {it.item_id}: needs at least 2 options")
        if not 0 <= it.correct_index < len(it.options):
            v.append(f"item {it.item_id}: correct_index out of range")
        for dim, val in it.features.items():
            vocab = bank.vocabularies.get(dim)
            if vocab is not None and val not in vocab:
                v.append(f"item {it.item_id}: feature {dim}={val} not in vocabulary")

    # every covering value must be reachable through at least one scored item
    for dim in bank.covering_dimensions:
        for val in bank.vocabularies.get(dim, []):
            if not any(
                it.scored and it.features.get(dim) == val for it in bank.items
            ):
                v.append(f"feature uncoverable: {dim}={val}")

    if bank.static_reference_ids is not None:
        for rid in bank.static_reference_ids:
            if rid not in bank._by_id:
                v.append(f"static_reference_ids references unknown item: {rid}")
    return v


def _item_from_dict(d: dict, lenient: bool) -> Item:
    if not lenient:
        unknown = set(d) - _ITEM_KEYS
        if unknown:
            raise BankValidationError(
                [f"item {d.get('item_id', '?')}: unknown keys {sorted(unknown)}"]
            )
    params = None
    if d.get("params") is not None:
        p = d["params"]
        a, b = float(p["a"]), float(p["b"])
        if a <= 0:
            raise BankValidationError(
                [f"item {d.get('item_id', '?')}: discrimination must be positive"]
            )
        params = ItemParams(a=a, b=b)
    return Item(
        item_id=str(d["item_id"]),
        kind=str(d["kind"]),
        params=params,
        features=dict(d.get("features", {})),
        stimulus=dict(d.get("stimulus", {"image_ref": "", "alt_text": ""})),
        question=str(d.get("question", "")),
        options=[str(o) for o in d["options"]],
        correct_index=int(d["correct_index"]),
        has_cbi_option=bool(d.get("has_cbi_option", False)),
    )


def bank_from_dict(data: dict, lenient: bool = False) -> ItemBank:
    if not lenient:
        unknown = set(data) - _BANK_KEYS
        if unknown:
            raise BankValidationError([f"unknown bank keys: {sorted(unknown)}"])
    try:
        prior = data["theta_prior"]
        bank = ItemBank(
            bank_id=str(data["bank_id"]),
            test_family=str(data["test_family"]),
            theta_prior=(float(prior["mean"]), float(prior["sd"])),
            covering_dimensions=[str(d) for d in data["covering_dimensions"]],
            vocabularies={k: list(vs) for k, vs in data["vocabularies"].items()},
            items=[_item_from_dict(d, lenient) for d in data["items"]],
            static_reference_ids=(
                [str(i) for i in data["static_reference_ids"]]
                if data.get("static_reference_ids") is not None
                else None
            ),
        )
    except BankValidationError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise BankValidationError([f"malformed bank: {exc}"]) from exc
    violations = validate_bank(bank)
    if violations:
        raise BankValidationError(violations)
    return bank


def bank_to_dict(bank: ItemBank) -> dict:
    return {
        "bank_id": bank.bank_id,
        "test_family": bank.test_family,
        "theta_prior": {"mean": bank.theta_prior[0], "sd": bank.theta_prior[1]},
        "covering_dimensions": list(bank.covering_dimensions),
        "vocabularies": {k: list(v) for k, v in bank.vocabularies.items()},
        "static_reference_ids": (
            list(bank.static_reference_ids)
            if bank.static_reference_ids is not None
            else None
        ),
        "items": [
            {
                "item_id": it.item_id,
                "kind": it.kind,
                "params": (
                    {"a": it.params.a, "b": it.params.b}
                    if it.params is not None
                    else None
                ),
                "features": dict(it.features),
                "stimulus": dict(it.stimulus),
                "question": it.question,
                "options": list(it.options),
                "correct_index": it.correct_index,
                "has_cbi_option": it.has_cbi_option,
            }
            for it in bank.items
        ],
    }


def load_bank(path: str | Path, lenient: bool = False) -> ItemBank:
    """Load and fully validate a UTF-8 JSON bank file."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return bank_from_dict(data, lenient=lenient)


def save_bank(bank: ItemBank, path: str | Path) -> None:
    """Write the bank as deterministic JSON (same bank, same bytes)."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(bank_to_dict(bank), fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class SynthSpec:
    """Shape of a synthetic bank; defaults follow the family conventions."""

    family: str = "vlat_like"
    n_scored: int = 53
    n_unscored: int = 0
    n_cbi_unscored: int = 0
    n_static_reference: int = 0
    a_log_mean: float = 0.0  # a ~ LogNormal(a_log_mean, a_log_sd)
    a_log_sd: float = 0.5
    b_mean: float = 0.0  # b ~ Normal(b_mean, b_sd)
    b_sd: float = 1.0

    @staticmethod
    def vlat_like() -> "SynthSpec":
        return SynthSpec(family="vlat_like", n_scored=53)

    @staticmethod
    def calvi_like() -> "SynthSpec":
        return SynthSpec(
            family="calvi_like",
            n_scored=45,
            n_unscored=15,
            n_cbi_unscored=4,
            n_static_reference=15,
        )


def _covered_assignment(
    rng: np.random.Generator, values: list[str], n: int
) -> list[str]:
    # every value appears floor/ceil(n/len) times, order shuffled
    reps = -(-n // len(values))
    pool = (list(values) * reps)[:n]
    rng.shuffle(pool)
    return pool


def synth_bank(seed: int, spec: SynthSpec | None = None) -> ItemBank:
    """Deterministic synthetic bank with every covering value represented.

    Parameter distributions (a lognormal around 1, b standard normal) stand in
    for real calibrated values; they are synthetic, not estimates of any
    published item set.
    """
    spec = spec or SynthSpec.vlat_like()
    rng = np.random.default_rng(seed)
    if spec.family == "vlat_like":
        dims = {"chart_type": VLAT_CHART_TYPES, "task": VLAT_TASKS}
    elif spec.family == "calvi_like":
        dims = {"misleader": CALVI_MISLEADERS}
    else:
        dims = {}
    if dims:
        total_vocab = sum(len(v) for v in dims.values())
        if spec.n_scored < total_vocab - (len(dims) - 1):
            raise ValueError("n_scored below coverage minimum: infeasible spec")

    assignments = {
        dim: _covered_assignment(rng, vals, spec.n_scored)
        for dim, vals in dims.items()
    }
    a_vals = np.exp(rng.normal(spec.a_log_mean, spec.a_log_sd, spec.n_scored))
    b_vals = rng.normal(spec.b_mean, spec.b_sd, spec.n_scored)

    items: list[Item] = []
    n_options = 4
    for i in range(spec.n_scored):
        features = {dim: assignments[dim][i] for dim in dims}
        correct = int(rng.integers(0, n_options))
        items.append(
            Item(
                item_id=f"s{i + 1:03d}",
                kind="scored",
                params=ItemParams(a=float(a_vals[i]), b=float(b_vals[i])),
                features=features,
                stimulus={
                    "image_ref": f"synthetic://{spec.family}/s{i + 1:03d}.png",
                    "alt_text": "Synthetic chart stimulus "
                    + ", ".join(features.values()),
                },
                question=f"Synthetic question {i + 1}",
                options=[f"Option {c}" for c in "ABCD"],
                correct_index=correct,
            )
        )
    for j in range(spec.n_unscored):
        with_cbi = j < spec.n_cbi_unscored
        if with_cbi:
            # CBI-flagged normal items never have the CBI option as the answer
            options = [f"Option {c}" for c in "ABC"] + [CBI_OPTION]
            correct = int(rng.integers(0, 3))
        else:
            options = [f"Option {c}" for c in "ABCD"]
            correct = int(rng.integers(0, 4))
        items.append(
            Item(
                item_id=f"u{j + 1:03d}",
                kind="unscored_normal",
                params=None,
                features={},
                stimulus={
                    "image_ref": f"synthetic://{spec.family}/u{j + 1:03d}.png",
                    "alt_text": "Synthetic well-formed chart stimulus",
                },
                question=f"Synthetic normal question {j + 1}",
                options=options,
                correct_index=correct,
                has_cbi_option=with_cbi,
            )
        )

    static_ids: list[str] | None = None
    if spec.n_static_reference:
        # fixed reference form: one item per covering value, then pad by id order
        static: list[str] = []
        covered: set[tuple[str, str]] = set()
        for it in items:
            if not it.scored:
                continue
            new = {(d, v) for d, v in it.features.items()} - covered
            if new:
                static.append(it.item_id)
                covered |= new
            if len(static) >= spec.n_static_reference:
                break
        for it in items:
            if len(static) >= spec.n_static_reference:
                break
            if it.scored and it.item_id not in static:
                static.append(it.item_id)
        static_ids = sorted(static)

    prior = (0.0, 1.0) if spec.family != "calvi_like" else (-1.0, 1.0)
    bank = ItemBank(
        bank_id=f"{spec.family}-seed{seed}",
        test_family=spec.family,
        theta_prior=prior,
        covering_dimensions=list(dims),
        vocabularies={d: list(v) for d, v in dims.items()},
        items=items,
        static_reference_ids=static_ids,
    )
    violations = validate_bank(bank)
    if violations:
        raise BankValidationError(violations)
    return bank
