"""Observation records: loading, validation, fit weights, FLOPs, subset schedules.

The on-disk format is JSON Lines, one observation per line, UTF-8, with keys
exactly matching the dataclass fields (condition nested as an object).
Unknown keys are rejected; optional fields are omitted when absent, so
serialize -> load is the identity on valid observation lists.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ObservationParseError, ValidationError

PRETRAIN = "pretrain"
HELD_OUT_C4 = "held_out_c4"
LOSS_BASES = (PRETRAIN, HELD_OUT_C4)

FEW_SHOT = "few_shot"
FINETUNED = "finetuned"
CONDITION_KINDS = (FEW_SHOT, FINETUNED)

INVERSE_DATA = "inverse_data"
UNIFORM = "uniform"
MAX_FINETUNE_WEIGHT = "max_finetune_weight"
INVERSE_D0 = "inverse_d0"
MEAN_ONE = "mean_one"


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValidationError(message)


@dataclass(frozen=True)
class Condition:
    """How a checkpoint was evaluated: few-shot prompting or finetuning.

    ``data_amount`` is required exactly when finetuned; ``num_shots`` exactly
    when few-shot. ``subset_seed`` distinguishes independently sampled subsets
    of the same size.
    """

    kind: str
    data_amount: int | None = None
    num_shots: int | None = None
    subset_seed: int | None = None

    def __post_init__(self):
        _require(self.kind in CONDITION_KINDS, f"condition kind must be one of {CONDITION_KINDS}, got {self.kind!r}")
        if self.kind == FINETUNED:
            _require(self.data_amount is not None, "finetuned condition requires data_amount")
            _require(self.num_shots is None, "finetuned condition must not set num_shots")
            _require(
                isinstance(self.data_amount, int) and self.data_amount >= 1,
                f"data_amount must be an integer >= 1, got {self.data_amount!r}",
            )
        else:
            _require(self.num_shots is not None, "few_shot condition requires num_shots")
            _require(self.data_amount is None, "few_shot condition must not set data_amount")
            _require(
                isinstance(self.num_shots, int) and self.num_shots >= 1,
                f"num_shots must be an integer >= 1, got {self.num_shots!r}",
            )
        if self.subset_seed is not None:
            _require(isinstance(self.subset_seed, int), f"subset_seed must be an integer, got {self.subset_seed!r}")


@dataclass(frozen=True)
class Observation:
    """One (checkpoint, condition) measurement of downstream performance."""

    model_id: str
    loss: float
    loss_basis: str
    condition: Condition
    performance: float
    task: str
    params_b: float | None = None
    tokens_b: float | None = None
    flops: float | None = None

    def __post_init__(self):
        _require(bool(self.model_id), "model_id must be nonempty")
        _require(bool(self.task), "task must be nonempty")
        _require(self.loss_basis in LOSS_BASES, f"loss_basis must be one of {LOSS_BASES}, got {self.loss_basis!r}")
        _require(math.isfinite(self.loss) and self.loss > 0, f"loss must be finite and > 0, got {self.loss}")
        _require(math.isfinite(self.performance), f"performance must be finite, got {self.performance}")
        for name in ("params_b", "tokens_b", "flops"):
            value = getattr(self, name)
            if value is not None:
                _require(math.isfinite(value) and value > 0, f"{name} must be finite and > 0, got {value}")


@dataclass(frozen=True)
class WeightScheme:
    """How observations are weighted in the fit objective.

    ``inverse_data`` weights each finetuned point by 1/data_amount; few-shot
    points receive either the largest finetuned weight or 1/d0 depending on
    ``few_shot_policy``. Weights are rescaled to mean 1 so the sum of weights
    equals the dataset size (which also sets the bootstrap replicate size).
    """

    kind: str = INVERSE_DATA
    few_shot_policy: str = MAX_FINETUNE_WEIGHT
    normalization: str = MEAN_ONE

    def __post_init__(self):
        _require(self.kind in (INVERSE_DATA, UNIFORM), f"unknown weight kind {self.kind!r}")
        _require(
            self.few_shot_policy in (MAX_FINETUNE_WEIGHT, INVERSE_D0),
            f"unknown few_shot_policy {self.few_shot_policy!r}",
        )
        _require(self.normalization == MEAN_ONE, f"unknown normalization {self.normalization!r}")


_CONDITION_KEYS = ("kind", "data_amount", "num_shots", "subset_seed")
_OBSERVATION_KEYS = ("model_id", "params_b", "tokens_b", "flops", "loss", "loss_basis", "condition", "performance", "task")


def observation_to_record(obs: Observation) -> dict:
    """Plain-dict form of an observation, optional fields omitted when unset."""
    condition = {"kind": obs.condition.kind}
    for key in _CONDITION_KEYS[1:]:
        value = getattr(obs.condition, key)
        if value is not None:
            condition[key] = value
    record = {
        "model_id": obs.model_id,
        "loss": obs.loss,
        "loss_basis": obs.loss_basis,
        "condition": condition,
        "performance": obs.performance,
        "task": obs.task,
    }
    for key in ("params_b", "tokens_b", "flops"):
        value = getattr(obs, key)
        if value is not None:
            record[key] = value
    return record


def observation_from_record(record: dict) -> Observation:
    """Inverse of observation_to_record; rejects unknown keys."""
    _require(isinstance(record, dict), f"observation record must be an object, got {type(record).__name__}")
    unknown = set(record) - set(_OBSERVATION_KEYS)
    _require(not unknown, f"unknown observation keys: {sorted(unknown)}")
    raw_condition = record.get("condition")
    _require(isinstance(raw_condition, dict), "condition must be an object")
    unknown = set(raw_condition) - set(_CONDITION_KEYS)
    _require(not unknown, f"unknown condition keys: {sorted(unknown)}")
    for key in ("model_id", "loss", "loss_basis", "performance", "task"):
        _require(key in record, f"missing required key {key!r}")
    condition = Condition(
        kind=raw_condition.get("kind"),
        data_amount=raw_condition.get("data_amount"),
        num_shots=raw_condition.get("num_shots"),
        subset_seed=raw_condition.get("subset_seed"),
    )
    return Observation(
        model_id=record["model_id"],
        loss=record["loss"],
        loss_basis=record["loss_basis"],
        condition=condition,
        performance=record["performance"],
        task=record["task"],
        params_b=record.get("params_b"),
        tokens_b=record.get("tokens_b"),
        flops=record.get("flops"),
    )


def validate_dataset(observations: Sequence[Observation], expected_task: str | None = None) -> None:
    """Check the cross-record invariants: a single task and a single loss basis."""
    _require(len(observations) > 0, "dataset is empty")
    bases = {o.loss_basis for o in observations}
    _require(len(bases) == 1, f"dataset mixes loss bases {sorted(bases)}")
    tasks = {o.task for o in observations}
    _require(len(tasks) == 1, f"dataset mixes tasks {sorted(tasks)}")
    if expected_task is not None:
        _require(tasks == {expected_task}, f"dataset task {tasks.pop()!r} != expected {expected_task!r}")


def load_observations(path, expected_task: str | None = None) -> list[Observation]:
    """Load and validate a JSONL observation file.

    Raises ObservationParseError (with the offending line number) for malformed
    lines, and ValidationError for dataset-level invariant violations.
    """
    path = Path(path)
    observations = []
    with path.open("r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ObservationParseError(path, line_number, f"invalid JSON: {exc.msg}") from exc
            try:
                observations.append(observation_from_record(record))
            except ValidationError as exc:
                raise ObservationParseError(path, line_number, str(exc)) from exc
    validate_dataset(observations, expected_task)
    return observations


def save_observations(observations: Iterable[Observation], path) -> None:
    """Write observations as JSONL (one record per line)."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for obs in observations:
            handle.write(json.dumps(observation_to_record(obs)) + "\n")


def compute_weights(observations: Sequence[Observation], scheme: WeightScheme, d0: int | None = None) -> np.ndarray:
    """Fit weights for the given observations under a weighting scheme.

    ``d0`` is only consulted by the ``inverse_d0`` few-shot policy. The result
    has mean exactly 1.
    """
    _require(len(observations) > 0, "cannot compute weights for an empty dataset")
    if scheme.kind == UNIFORM:
        return np.ones(len(observations))

    raw = np.empty(len(observations))
    finetuned_raw = [1.0 / o.condition.data_amount for o in observations if o.condition.kind == FINETUNED]
    for i, obs in enumerate(observations):
        if obs.condition.kind == FINETUNED:
            raw[i] = 1.0 / obs.condition.data_amount
        elif scheme.few_shot_policy == MAX_FINETUNE_WEIGHT:
            _require(
                len(finetuned_raw) > 0,
                "max_finetune_weight policy needs at least one finetuned observation to anchor few-shot weights",
            )
            raw[i] = max(finetuned_raw)
        else:
            _require(d0 is not None, "inverse_d0 few-shot policy requires d0")
            raw[i] = 1.0 / d0
    return raw * (len(raw) / raw.sum())


def estimate_flops(params_b: float, tokens_b: float) -> float:
    """Conventional training-FLOPs estimate: 6 * params * tokens."""
    _require(params_b > 0, f"params_b must be > 0, got {params_b}")
    _require(tokens_b > 0, f"tokens_b must be > 0, got {tokens_b}")
    return 6.0 * (params_b * 1e9) * (tokens_b * 1e9)


def observation_flops(obs: Observation) -> float:
    """Training FLOPs of an observation's checkpoint, measured or estimated."""
    if obs.flops is not None:
        return obs.flops
    if obs.params_b is not None and obs.tokens_b is not None:
        return estimate_flops(obs.params_b, obs.tokens_b)
    raise ValidationError(f"observation for {obs.model_id!r} has neither flops nor (params_b, tokens_b)")


def subset_schedule(full_size: int, fractions: Sequence) -> list[int]:
    """Subset sizes floor(fraction * full_size), deduplicated, descending.

    Fractions may be floats or fractions.Fraction; each must land on at least
    one example.
    """
    _require(isinstance(full_size, int) and full_size >= 1, f"full_size must be an integer >= 1, got {full_size!r}")
    _require(len(fractions) > 0, "fractions must be nonempty")
    sizes = set()
    for fraction in fractions:
        fraction = Fraction(fraction)
        _require(0 < fraction <= 1, f"fraction must be in (0, 1], got {fraction}")
        size = math.floor(fraction * full_size)
        _require(size >= 1, f"fraction {fraction} of {full_size} examples yields 0 examples")
        sizes.add(size)
    return sorted(sizes, reverse=True)


@dataclass(frozen=True)
class TaskPreset:
    """Per-task defaults: prompt shot count (the default d0) and subset fractions."""

    num_shots: int
    fractions: tuple[Fraction, ...]


# Benchmark presets used in the reference experiments. Fractions are the
# sampled-subset schedule on top of the full finetuning set.
TASK_PRESETS = {
    "mmlu": TaskPreset(5, (Fraction(1, 2), Fraction(1, 4), Fraction(1, 8), Fraction(1, 16), Fraction(3, 16), Fraction(3, 32))),
    "gsm8k": TaskPreset(6, (Fraction(1, 2), Fraction(1, 4), Fraction(1, 8), Fraction(1, 16), Fraction(1, 32), Fraction(3, 64))),
    "csqa": TaskPreset(
        7,
        (
            Fraction(1, 2),
            Fraction(1, 4),
            Fraction(1, 8),
            Fraction(1, 16),
            Fraction(1, 32),
            Fraction(3, 64),
            Fraction(3, 32),
            Fraction(3, 16),
        ),
    ),
    "cola": TaskPreset(
        5,
        (
            Fraction(1, 2),
            Fraction(1, 4),
            Fraction(1, 8),
            Fraction(1, 16),
            Fraction(1, 32),
            Fraction(1, 64),
            Fraction(1, 128),
            Fraction(3, 64),
            Fraction(3, 128),
            Fraction(3, 256),
        ),
    ),
    "apps": TaskPreset(
        2,
        (
            Fraction(1, 2),
            Fraction(1, 4),
            Fraction(1, 8),
            Fraction(1, 16),
            Fraction(1, 32),
            Fraction(1, 64),
            Fraction(1, 128),
            Fraction(1, 256),
            Fraction(3, 128),
        ),
    ),
}
