"""Scoring predictions against ground truth, holdout sweeps, FLOPs-advance
multipliers, series comparison, and loss-to-parameter-count mapping."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import multiprocessing
import numpy as np

from .dataset import FEW_SHOT, FINETUNED, Observation, observation_flops
from .errors import EmergelawError, ValidationError
from .fitting import EmergencePrediction, LawFitConfig, _resolve_workers
from .forms import ScalingLawParams, invert_scaling_law

# A prediction succeeds when the MLE lands within 0.1 nats of ground truth
# (closed boundary: exactly 0.1 counts as success).
SUCCESS_THRESHOLD_NATS = 0.1


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValidationError(message)


@dataclass(frozen=True)
class PredictionScore:
    """Absolute error of a predicted emergence point, in nats."""

    e_hat: float
    e_gt: float
    abs_error: float
    success: bool
    error_interval: tuple[float, float] | None = None  # (p5, p95) of |sample - gt|


def prediction_error(e_hat: float, e_gt: float, samples: Sequence[float] | None = None) -> PredictionScore:
    """Score a prediction against ground truth.

    Optional posterior/bootstrap ``samples`` attach the 5th/95th percentile of
    the per-sample absolute errors as an error interval.
    """
    _require(math.isfinite(e_hat), f"e_hat must be finite, got {e_hat}")
    _require(math.isfinite(e_gt), f"e_gt must be finite, got {e_gt}")
    abs_error = abs(e_hat - e_gt)
    interval = None
    if samples is not None:
        errors = np.abs(np.asarray(list(samples), dtype=float) - e_gt)
        _require(errors.size >= 1, "samples must be nonempty when given")
        interval = (float(np.percentile(errors, 5)), float(np.percentile(errors, 95)))
    return PredictionScore(
        e_hat=float(e_hat),
        e_gt=float(e_gt),
        abs_error=float(abs_error),
        success=abs_error <= SUCCESS_THRESHOLD_NATS,
        error_interval=interval,
    )


# ---------------------------------------------------------------------------
# Holdouts
# ---------------------------------------------------------------------------

DROP_LAST_N_CHECKPOINTS = "drop_last_n_checkpoints"
KEEP_LAST_N_CHECKPOINTS = "keep_last_n_checkpoints"
DROP_N_SMALLEST_SUBSETS = "drop_n_smallest_subsets"
DROP_N_LARGEST_SUBSETS = "drop_n_largest_subsets"
KEEP_SUBSET_REPLICATE = "keep_subset_replicate"
EVERY_OTHER_FROM_LAST_6 = "every_other_from_last_6"
HOLDOUT_KINDS = (
    DROP_LAST_N_CHECKPOINTS,
    KEEP_LAST_N_CHECKPOINTS,
    DROP_N_SMALLEST_SUBSETS,
    DROP_N_LARGEST_SUBSETS,
    KEEP_SUBSET_REPLICATE,
    EVERY_OTHER_FROM_LAST_6,
)

PARITY_EVEN = "even"
PARITY_ODD = "odd"


@dataclass(frozen=True)
class HoldoutSpec:
    """A deterministic filter over checkpoints or finetuning subsets.

    Checkpoints are ordered by capability (descending loss = ascending training
    progress); "last" means the most capable. ``parity`` applies only to the
    every-other kind: even keeps the most recent checkpoint and alternates back.
    """

    kind: str
    n: int = 0
    parity: str | None = None

    def __post_init__(self):
        _require(self.kind in HOLDOUT_KINDS, f"unknown holdout kind {self.kind!r}")
        _require(self.n >= 0, f"n must be >= 0, got {self.n}")
        if self.kind == EVERY_OTHER_FROM_LAST_6:
            _require(self.parity in (PARITY_EVEN, PARITY_ODD), "every_other_from_last_6 requires parity even|odd")
        else:
            _require(self.parity is None, f"{self.kind} does not take a parity")

    def label(self) -> str:
        if self.kind == EVERY_OTHER_FROM_LAST_6:
            return f"{self.kind}(parity={self.parity})"
        return f"{self.kind}(n={self.n})"


def _checkpoints_by_capability(observations: Sequence[Observation]) -> list[str]:
    """Distinct model ids ordered weakest first (highest loss = earliest)."""
    representative: dict[str, float] = {}
    for obs in observations:
        current = representative.get(obs.model_id)
        if current is None or obs.loss < current:
            representative[obs.model_id] = obs.loss
    return sorted(representative, key=lambda mid: (-representative[mid], mid))


def apply_holdout(observations: Sequence[Observation], spec: HoldoutSpec) -> list[Observation]:
    """Filter a dataset per the holdout spec; deterministic, order-preserving."""
    observations = list(observations)
    _require(len(observations) > 0, "dataset is empty")

    if spec.kind in (DROP_LAST_N_CHECKPOINTS, KEEP_LAST_N_CHECKPOINTS, EVERY_OTHER_FROM_LAST_6):
        ordered = _checkpoints_by_capability(observations)
        if spec.kind == DROP_LAST_N_CHECKPOINTS:
            _require(spec.n <= len(ordered), f"cannot drop {spec.n} of {len(ordered)} checkpoints")
            keep = set(ordered[: len(ordered) - spec.n])
        elif spec.kind == KEEP_LAST_N_CHECKPOINTS:
            _require(spec.n <= len(ordered), f"cannot keep {spec.n} of {len(ordered)} checkpoints")
            keep = set(ordered[len(ordered) - spec.n :])
        else:
            _require(len(ordered) >= 6, f"every_other_from_last_6 needs >= 6 checkpoints, got {len(ordered)}")
            recent_first = list(reversed(ordered[-6:]))
            offset = 0 if spec.parity == PARITY_EVEN else 1
            keep = set(recent_first[offset::2])
        filtered = [o for o in observations if o.model_id in keep]

    elif spec.kind in (DROP_N_SMALLEST_SUBSETS, DROP_N_LARGEST_SUBSETS):
        amounts = sorted({o.condition.data_amount for o in observations if o.condition.kind == FINETUNED})
        _require(spec.n <= len(amounts), f"cannot drop {spec.n} of {len(amounts)} subset sizes")
        dropped = set(amounts[: spec.n]) if spec.kind == DROP_N_SMALLEST_SUBSETS else set(amounts[len(amounts) - spec.n :])
        filtered = [
            o for o in observations if o.condition.kind != FINETUNED or o.condition.data_amount not in dropped
        ]

    else:  # KEEP_SUBSET_REPLICATE
        filtered = [
            o
            for o in observations
            if o.condition.kind != FINETUNED
            or o.condition.subset_seed is None
            or o.condition.subset_seed == spec.n
        ]

    _require(len(filtered) > 0, f"holdout {spec.label()} empties the dataset")
    return filtered


# ---------------------------------------------------------------------------
# FLOPs-advance sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdvanceRow:
    """One holdout's fit outcome in a FLOPs-advance sweep."""

    spec: HoldoutSpec
    flops_used: float  # FLOPs of the most capable checkpoint used for fitting
    score: PredictionScore | None
    note: str = ""


@dataclass(frozen=True)
class AdvanceReport:
    """How far ahead (in training FLOPs) emergence was predicted successfully.

    advance_multiplier = FLOPs of the earliest post-emergence checkpoint
    divided by the FLOPs of the most capable checkpoint used in the earliest
    successful prediction. The earliest success counts even when a deeper
    holdout later fails. None when undefined.
    """

    rows: tuple[AdvanceRow, ...]
    flops_first_emerged: float | None
    advance_multiplier: float | None


def _sweep_row(observations, gt, spec, config, uncertainty_fn):
    filtered = apply_holdout(observations, spec)
    flops_used = max(observation_flops(o) for o in filtered)
    try:
        fit, prediction = config.fit(filtered)
    except EmergelawError as exc:
        return AdvanceRow(spec=spec, flops_used=flops_used, score=None, note=str(exc))
    samples = uncertainty_fn(filtered, fit, prediction) if uncertainty_fn is not None else None
    return AdvanceRow(spec=spec, flops_used=flops_used, score=prediction_error(prediction.e_hat, gt, samples))


def _sweep_chunk(observations, gt, specs, config, uncertainty_fn):
    return [_sweep_row(observations, gt, spec, config, uncertainty_fn) for spec in specs]


def advance_sweep(
    observations: Sequence[Observation],
    gt: float,
    specs: Sequence[HoldoutSpec],
    fit_config: LawFitConfig,
    uncertainty_fn: Callable | None = None,
    workers: int | None = None,
) -> AdvanceReport:
    """Fit under each holdout, score against ``gt``, and compute the advance multiplier.

    Every observation must carry FLOPs (directly or via params_b/tokens_b).
    Rows whose fit fails a precondition or is unidentified are kept with
    score=None and the error message in ``note``. ``uncertainty_fn`` may map
    (filtered observations, fit, prediction) to e_hat samples to attach error
    intervals.
    """
    observations = list(observations)
    _require(len(specs) > 0, "no holdout specs given")
    _require(math.isfinite(gt), "gt must be finite")
    for obs in observations:
        observation_flops(obs)  # raises if FLOPs are unavailable

    post_emergence = [observation_flops(o) for o in observations if o.condition.kind == FEW_SHOT and o.loss < gt]
    flops_first_emerged = min(post_emergence) if post_emergence else None

    workers = _resolve_workers(workers)
    if workers > 1 and len(specs) > 1 and uncertainty_fn is None:
        chunk_size = max(1, math.ceil(len(specs) / (workers * 2)))
        chunks = [list(specs[i : i + chunk_size]) for i in range(0, len(specs), chunk_size)]
        context = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=workers, mp_context=context) as pool:
            futures = [pool.submit(_sweep_chunk, observations, gt, chunk, fit_config, None) for chunk in chunks]
            rows = [row for f in futures for row in f.result()]
    else:
        rows = _sweep_chunk(observations, gt, list(specs), fit_config, uncertainty_fn)

    successful = [row.flops_used for row in rows if row.score is not None and row.score.success]
    multiplier = None
    if flops_first_emerged is not None and successful:
        multiplier = flops_first_emerged / min(successful)
    return AdvanceReport(rows=tuple(rows), flops_first_emerged=flops_first_emerged, advance_multiplier=multiplier)


# ---------------------------------------------------------------------------
# Series comparison and parameter-count mapping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeriesComparison:
    """Which of two prediction series emerges first (at the weaker-model loss)."""

    first: str  # label of the earlier-emerging series, or "tie"
    label_a: str
    label_b: str
    e_hat_a: float
    e_hat_b: float
    margin_nats: float


def compare_series(
    pred_a: EmergencePrediction,
    pred_b: EmergencePrediction,
    label_a: str = "series_a",
    label_b: str = "series_b",
) -> SeriesComparison:
    """Order two series by predicted emergence.

    A larger e_hat (in nats) means emergence at a weaker-model loss, i.e.
    earlier in training. Predictions on different loss bases are not
    comparable and raise.
    """
    if pred_a.loss_basis != pred_b.loss_basis:
        raise ValidationError(
            f"cannot compare predictions across loss bases ({pred_a.loss_basis!r} vs {pred_b.loss_basis!r})"
        )
    if pred_a.e_hat > pred_b.e_hat:
        first = label_a
    elif pred_b.e_hat > pred_a.e_hat:
        first = label_b
    else:
        first = "tie"
    return SeriesComparison(
        first=first,
        label_a=label_a,
        label_b=label_b,
        e_hat_a=pred_a.e_hat,
        e_hat_b=pred_b.e_hat,
        margin_nats=abs(pred_a.e_hat - pred_b.e_hat),
    )


@dataclass(frozen=True)
class ParamCountSummary:
    """Emergence-point samples mapped through a scaling law to parameter counts.

    Counts are in billions. Samples at or below the irreducible loss cannot be
    mapped and are only tallied in n_beyond_range.
    """

    mle: float | None
    p5: float | None
    p95: float | None
    n_samples: int
    n_beyond_range: int


def map_prediction_to_params(
    samples: Sequence[float],
    scaling: ScalingLawParams,
    mle: float | None = None,
) -> ParamCountSummary:
    """Convert e_hat samples (nats) into parameter counts via scaling-law inversion."""
    arr = np.asarray(list(samples), dtype=float)
    _require(arr.size >= 1, "samples must be nonempty")
    valid = arr[arr > scaling.irreducible]
    n_beyond = int(arr.size - valid.size)
    mapped = np.array([invert_scaling_law(scaling, s) for s in valid])
    mle_mapped = None
    if mle is not None and mle > scaling.irreducible:
        mle_mapped = invert_scaling_law(scaling, mle)
    return ParamCountSummary(
        mle=mle_mapped,
        p5=float(np.percentile(mapped, 5)) if mapped.size else None,
        p95=float(np.percentile(mapped, 95)) if mapped.size else None,
        n_samples=int(arr.size),
        n_beyond_range=n_beyond,
    )
