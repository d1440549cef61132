"""Multistart weighted-MSE fitting: brute-force grid seeding plus L-BFGS refinement.

Three fit entry points share one engine:

- fit_relu: the emergence ReLU over few-shot observations (ground truth).
- fit_emergence_law: the finetune-aware model, jointly over all observations,
  plus the few-shot extrapolation at d0.
- fit_scaling_law: loss-vs-parameter-count law, objective in log space.

The law/ReLU parameter vector is ordered (slope, floor, data_coef, data_power,
elbow_base, finetune_shift); grid ties break lexicographically in that order,
and equal-objective refined fits break toward the smallest predicted emergence
point. All scans and refinements are deterministic and independent of the
worker count.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import multiprocessing
import numpy as np
from scipy.optimize import minimize

from .dataset import FEW_SHOT, FINETUNED, Observation, WeightScheme, compute_weights, validate_dataset
from .errors import IdentifiabilityError, ValidationError
from .forms import (
    LAW_FORMS,
    LOG_POWER,
    NO_FEWSHOT,
    POWER,
    EmergenceLawParams,
    ExtrapolationConfig,
    ReluParams,
    ScalingLawParams,
    eval_elbow,
)

REFINE_TOLERANCE = 1e-9
REFINE_MAX_ITERATIONS = 500


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValidationError(message)


def _resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("EMERGELAW_WORKERS", "1") or 1)
    return max(1, workers)


# ---------------------------------------------------------------------------
# Grid specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridAxis:
    """One parameter's grid values plus the refinement domain."""

    name: str
    values: tuple[float, ...]
    domain: tuple[float, float] = (-math.inf, math.inf)

    def __post_init__(self):
        _require(len(self.values) >= 1, f"axis {self.name} has no values")

    @classmethod
    def from_range(cls, name: str, spec: tuple[float, float, float], domain=(-math.inf, math.inf)) -> "GridAxis":
        start, stop, step = spec
        _require(step > 0, f"axis {name} step must be > 0")
        _require(stop >= start, f"axis {name} has stop < start")
        count = int(math.floor((stop - start) / step + 0.5)) + 1
        values = tuple(round(start + i * step, 12) for i in range(count))
        return cls(name, values, domain)

    @property
    def frozen(self) -> bool:
        return len(self.values) == 1

    @property
    def step(self) -> float:
        return self.values[1] - self.values[0] if len(self.values) > 1 else 0.0

    def bounds(self) -> tuple[float, float]:
        """Refinement box: one grid step beyond the range, clipped to the domain."""
        if self.frozen:
            return (self.values[0], self.values[0])
        return (max(self.domain[0], self.values[0] - self.step), min(self.domain[1], self.values[-1] + self.step))


@dataclass(frozen=True)
class GridSpec:
    """Seeding grids for the emergence fits, as (start, stop, step) ranges.

    ``data_power`` applies to the log forms; the power form uses
    ``power_form_exponent`` instead (its exponent must stay in (0, 2]).
    ``top_k`` is the number of grid seeds handed to the refiner; 1000 is the
    desk-scale default, paper_scale() raises it to 100k.
    """

    slope: tuple[float, float, float] = (0.0, 4.0, 0.1)
    floor: tuple[float, float, float] = (0.0, 1.0, 0.1)
    data_coef: tuple[float, float, float] = (0.0, 1.0, 0.05)
    data_power: tuple[float, float, float] = (1.0, 10.0, 0.5)
    elbow_base: tuple[float, float, float] = (0.0, 10.0, 0.5)
    finetune_shift: tuple[float, float, float] = (0.0, 0.2, 0.05)
    power_form_exponent: tuple[float, float, float] = (0.1, 2.0, 0.1)
    top_k: int = 1000

    def __post_init__(self):
        _require(self.top_k >= 1, f"top_k must be >= 1, got {self.top_k}")

    @classmethod
    def paper_scale(cls, **overrides) -> "GridSpec":
        overrides.setdefault("top_k", 100_000)
        return cls(**overrides)

    def law_axes(self, form: str) -> list[GridAxis]:
        if form == POWER:
            power_axis = GridAxis.from_range("data_power", self.power_form_exponent, (1e-9, 2.0))
        else:
            power_axis = GridAxis.from_range("data_power", self.data_power, (1.0, math.inf))
        if form == NO_FEWSHOT:
            shift_axis = GridAxis("finetune_shift", (0.0,))
        else:
            shift_axis = GridAxis.from_range("finetune_shift", self.finetune_shift)
        return [
            GridAxis.from_range("slope", self.slope, (0.0, math.inf)),
            GridAxis.from_range("floor", self.floor),
            GridAxis.from_range("data_coef", self.data_coef, (0.0, math.inf)),
            power_axis,
            GridAxis.from_range("elbow_base", self.elbow_base),
            shift_axis,
        ]

    def relu_axes(self) -> list[GridAxis]:
        """ReLU fits reuse the engine with the data-shift terms frozen at zero."""
        return [
            GridAxis.from_range("slope", self.slope, (0.0, math.inf)),
            GridAxis.from_range("floor", self.floor),
            GridAxis("data_coef", (0.0,)),
            GridAxis("data_power", (1.0,)),
            GridAxis.from_range("elbow_base", self.elbow_base),
            GridAxis("finetune_shift", (0.0,)),
        ]


def grid_digest(grid: GridSpec) -> str:
    """Short stable hash of a grid spec, recorded in fit documents."""
    payload = json.dumps(dataclasses.asdict(grid), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Objective pieces
# ---------------------------------------------------------------------------


def weighted_mse(predictions, targets, weights) -> float:
    """Weighted mean squared error: sum(w * (pred - target)^2) / sum(w)."""
    pred = np.asarray(predictions, dtype=float)
    target = np.asarray(targets, dtype=float)
    weight = np.asarray(weights, dtype=float)
    _require(pred.ndim == 1, "predictions must be one-dimensional")
    _require(pred.shape == target.shape == weight.shape, "predictions, targets, weights must have equal lengths")
    _require(pred.size >= 1, "weighted_mse needs at least one point")
    _require(bool(np.all(np.isfinite(weight)) and np.all(weight > 0)), "weights must be positive and finite")
    residual = pred - target
    return float((weight @ (residual * residual)) / weight.sum())


@dataclass(frozen=True)
class _FitData:
    """Observation arrays in fit-ready form (canonically sorted)."""

    losses: np.ndarray
    targets: np.ndarray
    finetuned: np.ndarray  # 0/1 indicator
    xvals: np.ndarray  # log(d) for log forms, d for the power form
    weights: np.ndarray
    x_unique: np.ndarray
    x_inverse: np.ndarray
    lnx_unique: np.ndarray  # log of x_unique where positive, else 0 (kink subgradient)
    tie_x: float  # x at d0; the tie-break maps params to the predicted emergence point

    @classmethod
    def build(cls, losses, targets, finetuned, xvals, weights, tie_x):
        losses = np.asarray(losses, dtype=float)
        xvals = np.asarray(xvals, dtype=float)
        x_unique, x_inverse = np.unique(xvals, return_inverse=True)
        with np.errstate(divide="ignore"):
            lnx = np.where(x_unique > 0, np.log(np.maximum(x_unique, 1e-300)), 0.0)
        return cls(
            losses=losses,
            targets=np.asarray(targets, dtype=float),
            finetuned=np.asarray(finetuned, dtype=float),
            xvals=xvals,
            weights=np.asarray(weights, dtype=float),
            x_unique=x_unique,
            x_inverse=x_inverse,
            lnx_unique=lnx,
            tie_x=float(tie_x),
        )

    def predict(self, params: np.ndarray) -> np.ndarray:
        slope, floor, coef, power, base, shift = params
        elbow = coef * (self.x_unique**power)[self.x_inverse] + base
        return slope * np.maximum(elbow - self.losses, 0.0) + floor + shift * self.finetuned

    def value(self, params: np.ndarray) -> float:
        residual = self.predict(params) - self.targets
        return float((self.weights @ (residual * residual)) / self.weights.sum())

    def value_grad(self, params: np.ndarray) -> tuple[float, np.ndarray]:
        slope, floor, coef, power, base, shift = params
        powered = (self.x_unique**power)[self.x_inverse]
        gap = coef * powered + base - self.losses
        hinge = np.maximum(gap, 0.0)
        active = gap > 0  # subgradient 0 at the kink
        residual = slope * hinge + floor + shift * self.finetuned - self.targets
        wr = self.weights * residual
        scale = 2.0 / self.weights.sum()
        wra = wr * active * slope
        grad = np.array(
            [
                scale * (wr @ hinge),
                scale * wr.sum(),
                scale * (wra @ powered),
                scale * (wra @ (coef * powered * self.lnx_unique[self.x_inverse])),
                scale * wra.sum(),
                scale * (wr @ self.finetuned),
            ]
        )
        return float((wr @ residual) / self.weights.sum()), grad

    def tie_value(self, params: np.ndarray) -> float:
        """Predicted emergence point at d0 (equals elbow_base for ReLU fits)."""
        return float(params[2] * self.tie_x ** params[3] + params[4])

    def elbow_at_max_data(self, params: np.ndarray) -> float:
        return float(params[2] * self.xvals.max() ** params[3] + params[4])


@dataclass(frozen=True)
class _ScalingData:
    """Scaling-law points; the objective is MSE between log losses."""

    n_b: np.ndarray
    log_losses: np.ndarray

    def value(self, params: np.ndarray) -> float:
        amplitude, exponent, irreducible = params
        pred = amplitude * self.n_b ** (-exponent) + irreducible
        if np.any(pred <= 0):
            return math.inf
        residual = np.log(pred) - self.log_losses
        return float(np.mean(residual * residual))

    def value_grad(self, params: np.ndarray) -> tuple[float, np.ndarray]:
        amplitude, exponent, irreducible = params
        decay = self.n_b ** (-exponent)
        pred = amplitude * decay + irreducible
        if np.any(pred <= 0):
            return math.inf, np.zeros(3)
        residual = np.log(pred) - self.log_losses
        common = 2.0 * residual / pred / len(residual)
        grad = np.array(
            [
                common @ decay,
                common @ (-amplitude * decay * np.log(self.n_b)),
                common.sum(),
            ]
        )
        return float(np.mean(residual * residual)), grad

    def batch(self, params: np.ndarray) -> np.ndarray:
        pred = params[:, 0:1] * self.n_b[None, :] ** (-params[:, 1:2]) + params[:, 2:3]
        with np.errstate(divide="ignore", invalid="ignore"):
            residual = np.where(pred > 0, np.log(np.maximum(pred, 1e-300)) - self.log_losses[None, :], np.inf)
        values = np.mean(residual * residual, axis=1)
        return np.where(np.isfinite(values), values, np.inf)

    def tie_value(self, params: np.ndarray) -> float:
        return 0.0


# ---------------------------------------------------------------------------
# Grid search
# ---------------------------------------------------------------------------


def _take_smallest(values: np.ndarray, flats: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices of the k smallest values; ties resolve toward smaller flat index.

    Returns (values, flats) sorted ascending by (value, flat index).
    """
    values = np.where(np.isnan(values), np.inf, values)
    if values.size > k:
        kth = np.partition(values, k - 1)[k - 1]
        lt = np.flatnonzero(values < kth)
        eq = np.flatnonzero(values == kth)
        need = k - lt.size
        eq = eq[np.argsort(flats[eq], kind="stable")[:need]]
        sel = np.concatenate([lt, eq])
        values, flats = values[sel], flats[sel]
    order = np.lexsort((flats, values))
    return values[order], flats[order]


def grid_search(objective: Callable[[np.ndarray], np.ndarray], axes: Sequence[GridAxis], top_k: int) -> list[tuple[np.ndarray, float]]:
    """Evaluate a batched objective on the full grid; return the best top_k points.

    ``objective`` maps an (m, n_params) array to m values. The result is
    ascending in objective with ties broken lexicographically in parameter
    order (earlier axes vary slowest).
    """
    _require(top_k >= 1, "top_k must be >= 1")
    _require(len(axes) >= 1, "grid must have at least one axis")
    dims = tuple(len(axis.values) for axis in axes)
    axis_values = [np.asarray(axis.values, dtype=float) for axis in axes]
    total = int(np.prod(dims))
    chunk = 1 << 16
    cand_values, cand_flats = [], []
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total), dtype=np.int64)
        multi = np.unravel_index(flat, dims)
        points = np.column_stack([axis_values[i][multi[i]] for i in range(len(axes))])
        values = np.asarray(objective(points), dtype=float)
        _require(values.shape == (len(flat),), "objective must return one value per grid point")
        v, f = _take_smallest(values, flat, min(top_k, len(flat)))
        cand_values.append(v)
        cand_flats.append(f)
    values, flats = _take_smallest(np.concatenate(cand_values), np.concatenate(cand_flats), min(top_k, total))
    multi = np.unravel_index(flats, dims)
    points = np.column_stack([axis_values[i][multi[i]] for i in range(len(axes))])
    return [(points[i], float(values[i])) for i in range(len(values))]


def _scan_law_grid(data: _FitData, axes: Sequence[GridAxis], top_k: int) -> np.ndarray:
    """Top-k grid seeds for the law objective, exploiting its structure.

    For fixed (data_coef, data_power, elbow_base) the prediction is linear in
    (slope, floor, finetune_shift), so the weighted MSE over those three axes
    is a quadratic in precomputed moments. Selection order matches the generic
    grid_search contract exactly: ascending objective, lexicographic ties.
    """
    slope_ax, floor_ax, coef_ax, power_ax, base_ax, shift_ax = [np.asarray(a.values, dtype=float) for a in axes]
    n_blocks = len(coef_ax) * len(power_ax) * len(base_ax)
    dims = (len(slope_ax), len(floor_ax), len(coef_ax), len(power_ax), len(base_ax), len(shift_ax))

    powered = data.x_unique[None, :] ** power_ax[:, None]  # (nP, nU)
    scaled = coef_ax[:, None, None] * powered[None, :, :]  # (nK, nP, nU)
    per_obs = scaled[:, :, data.x_inverse]  # (nK, nP, n)
    hinge = np.maximum(per_obs[:, :, None, :] + base_ax[None, None, :, None] - data.losses, 0.0)
    hinge = hinge.reshape(n_blocks, len(data.losses))

    w = data.weights
    wy = w * data.targets
    wf = w * data.finetuned
    s_w = w.sum()
    s_y = wy.sum()
    s_f = wf.sum()
    s_fy = wy @ data.finetuned
    s_yy = wy @ data.targets
    s_r = hinge @ w
    s_rr = (hinge * hinge) @ w
    s_ry = hinge @ wy
    s_rf = hinge @ wf

    slope_col = slope_ax[:, None]
    quad = slope_col * slope_col * s_rr[None, :] - 2.0 * slope_col * s_ry[None, :]  # (nA, nblocks)
    cross_floor = slope_col * s_r[None, :]
    cross_shift = slope_col * s_rf[None, :]

    # Lexicographic flat index: (slope, floor, coef, power, base, shift).
    stride_floor = n_blocks * len(shift_ax)
    stride_slope = len(floor_ax) * stride_floor
    base_flat = (np.arange(len(slope_ax), dtype=np.int64) * stride_slope)[:, None] + (
        np.arange(n_blocks, dtype=np.int64) * len(shift_ax)
    )[None, :]

    slice_k = min(top_k, quad.size)
    cand_values, cand_flats = [], []
    for bi, floor_v in enumerate(floor_ax):
        for di, shift_v in enumerate(shift_ax):
            const = floor_v * floor_v * s_w - 2.0 * floor_v * s_y + (shift_v * shift_v + 2.0 * floor_v * shift_v) * s_f
            const += -2.0 * shift_v * s_fy + s_yy
            values = (quad + (2.0 * floor_v) * cross_floor + (2.0 * shift_v) * cross_shift + const) / s_w
            flats = base_flat + (bi * stride_floor + di)
            v, f = _take_smallest(values.ravel(), flats.ravel(), slice_k)
            cand_values.append(v)
            cand_flats.append(f)

    total = int(np.prod(dims))
    _, flats = _take_smallest(np.concatenate(cand_values), np.concatenate(cand_flats), min(top_k, total))
    multi = np.unravel_index(flats, dims)
    values_per_axis = (slope_ax, floor_ax, coef_ax, power_ax, base_ax, shift_ax)
    return np.column_stack([values_per_axis[i][multi[i]] for i in range(6)])


# ---------------------------------------------------------------------------
# Refinement
# ---------------------------------------------------------------------------


def refine(
    objective: Callable[[np.ndarray], float],
    seed,
    bounds: Sequence[tuple[float, float]],
    tolerance: float = REFINE_TOLERANCE,
    max_iterations: int = REFINE_MAX_ITERATIONS,
    gradient: Callable[[np.ndarray], np.ndarray] | None = None,
) -> tuple[np.ndarray, float, bool]:
    """Local L-BFGS refinement of a seed within box bounds.

    Returns (point, value, converged); the value never exceeds the seed's.
    Without an explicit gradient the refiner falls back to finite differences,
    which matches the subgradient-0 convention at the ReLU kink.
    """
    seed = np.asarray(seed, dtype=float)
    for i, (lo, hi) in enumerate(bounds):
        _require(lo <= seed[i] <= hi, f"seed[{i}]={seed[i]} outside bounds [{lo}, {hi}]")
    f0 = float(objective(seed))
    _require(math.isfinite(f0), f"objective is not finite at seed: {f0}")
    result = minimize(
        objective,
        seed,
        jac=gradient,
        method="L-BFGS-B",
        bounds=list(bounds),
        options={"maxiter": max_iterations, "ftol": tolerance, "gtol": tolerance},
    )
    value = float(result.fun)
    if not math.isfinite(value) or value > f0:
        return seed.copy(), f0, False
    return np.asarray(result.x, dtype=float), value, _lbfgs_converged(result)


def _lbfgs_converged(result) -> bool:
    # status 2 is "no further decrease found in the line search": stationary
    # within precision (common at an exact optimum or on the ReLU kink).
    # Only hitting the iteration cap (status 1) counts as non-convergence.
    return bool(result.success or result.status == 2)


def _refine_fused(data, seed, bounds, tolerance, max_iterations):
    """Engine refinement with a fused value+gradient callable."""
    f0 = data.value(seed)
    if not math.isfinite(f0):
        return None
    result = minimize(
        data.value_grad,
        seed,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": max_iterations, "ftol": tolerance, "gtol": tolerance},
    )
    value = float(result.fun)
    if not math.isfinite(value) or value > f0:
        return seed.copy(), f0, False
    return np.asarray(result.x, dtype=float), value, _lbfgs_converged(result)


def _refine_chunk(data, bounds, tolerance, max_iterations, seeds, ranks):
    """Refine one chunk of seeds; return (best key tuple, n refined)."""
    best = None
    refined = 0
    for seed, rank in zip(seeds, ranks):
        outcome = _refine_fused(data, seed, bounds, tolerance, max_iterations)
        if outcome is None:
            continue
        refined += 1
        x, value, converged = outcome
        key = (value, data.tie_value(x), tuple(x), rank)
        if best is None or key < best[0]:
            best = (key, x, value, converged, rank)
    return best, refined


@dataclass(frozen=True)
class _MultistartOutcome:
    x: np.ndarray
    objective_value: float
    seed_rank: int
    n_refinements: int
    converged: bool


def _run_multistart(data, seeds: np.ndarray, bounds, workers: int | None) -> _MultistartOutcome:
    workers = _resolve_workers(workers)
    ranks = np.arange(len(seeds))
    chunk_size = max(16, math.ceil(len(seeds) / (workers * 8))) if workers > 1 else len(seeds)
    chunks = [(seeds[i : i + chunk_size], ranks[i : i + chunk_size]) for i in range(0, len(seeds), chunk_size)]

    results = []
    if workers > 1 and len(chunks) > 1:
        context = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=workers, mp_context=context) as pool:
            futures = [
                pool.submit(_refine_chunk, data, bounds, REFINE_TOLERANCE, REFINE_MAX_ITERATIONS, s, r)
                for s, r in chunks
            ]
            results = [f.result() for f in futures]
    else:
        results = [_refine_chunk(data, bounds, REFINE_TOLERANCE, REFINE_MAX_ITERATIONS, s, r) for s, r in chunks]

    best = None
    refined = 0
    for outcome, count in results:
        refined += count
        if outcome is not None and (best is None or outcome[0] < best[0]):
            best = outcome
    if best is None:
        raise ValidationError("no grid seed had a finite objective")
    _, x, value, converged, rank = best
    return _MultistartOutcome(x, value, int(rank), refined, converged)


# ---------------------------------------------------------------------------
# Fit results and entry points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    """Winning parameters of a multistart fit plus provenance."""

    params: ReluParams | EmergenceLawParams | ScalingLawParams
    objective_value: float
    seed_rank: int
    n_refinements: int
    converged: bool


@dataclass(frozen=True)
class EmergencePrediction:
    """Few-shot extrapolation of a fitted law: e_hat = elbow at d0, in nats."""

    law: EmergenceLawParams
    d0: int
    e_hat: float
    loss_basis: str

    def __post_init__(self):
        _require(math.isfinite(self.e_hat) and self.e_hat > 0, f"e_hat must be finite and > 0, got {self.e_hat}")
        expected = eval_elbow(self.law, self.d0)
        _require(abs(self.e_hat - expected) <= 1e-9 * max(1.0, abs(expected)), "e_hat inconsistent with law at d0")


def _canonical_sort(observations: Sequence[Observation]) -> list[int]:
    def key(i: int):
        o = observations[i]
        c = o.condition
        return (o.loss, c.kind, c.data_amount or 0, c.subset_seed or 0, c.num_shots or 0, o.performance, o.model_id)

    return sorted(range(len(observations)), key=key)


def _subset_weights(weights, observations, indices) -> np.ndarray:
    if weights is None:
        return None
    weights = np.asarray(weights, dtype=float)
    _require(weights.ndim == 1 and len(weights) == len(observations), "weights must align with the observation list")
    _require(bool(np.all(np.isfinite(weights)) and np.all(weights > 0)), "weights must be positive and finite")
    return weights[indices]


@dataclass(frozen=True)
class _LawProblem:
    data: _FitData
    d0: int
    loss_basis: str
    included: tuple[Observation, ...]


def _law_problem(
    observations: Sequence[Observation],
    form: str,
    scheme: WeightScheme,
    extrap: ExtrapolationConfig | None,
    weights=None,
) -> _LawProblem:
    _require(form in LAW_FORMS, f"unknown law form {form!r}")
    validate_dataset(observations)

    if extrap is not None:
        d0 = extrap.d0
    else:
        shot_counts = {o.condition.num_shots for o in observations if o.condition.kind == FEW_SHOT}
        _require(
            len(shot_counts) == 1,
            "cannot infer d0 from the data (no unique few-shot shot count); pass ExtrapolationConfig",
        )
        d0 = shot_counts.pop()

    indices = [i for i, o in enumerate(observations) if form != NO_FEWSHOT or o.condition.kind == FINETUNED]
    included = [observations[i] for i in indices]
    _require(len(included) > 0, "no observations left to fit")

    amounts = {o.condition.data_amount for o in included if o.condition.kind == FINETUNED}
    _require(len(amounts) >= 2, f"need >= 2 distinct finetuning data amounts, got {len(amounts)}")
    _require(len({o.loss for o in included}) >= 3, "need >= 3 distinct losses")

    subset = _subset_weights(weights, observations, indices)
    order = _canonical_sort(included)
    included = [included[i] for i in order]
    if subset is not None:
        subset = subset[order]
    else:
        subset = compute_weights(included, scheme, d0=d0)

    use_log = form != POWER
    xvals = [
        (math.log(o.condition.data_amount) if use_log else float(o.condition.data_amount))
        if o.condition.kind == FINETUNED
        else (math.log(d0) if use_log else float(d0))
        for o in included
    ]
    data = _FitData.build(
        losses=[o.loss for o in included],
        targets=[o.performance for o in included],
        finetuned=[1.0 if o.condition.kind == FINETUNED else 0.0 for o in included],
        xvals=xvals,
        weights=subset,
        tie_x=math.log(d0) if use_log else float(d0),
    )
    return _LawProblem(data=data, d0=d0, loss_basis=included[0].loss_basis, included=tuple(included))


def fit_emergence_law(
    observations: Sequence[Observation],
    form: str = LOG_POWER,
    scheme: WeightScheme | None = None,
    grid: GridSpec | None = None,
    extrap: ExtrapolationConfig | None = None,
    weights=None,
    workers: int | None = None,
) -> tuple[FitResult, EmergencePrediction]:
    """Jointly fit the finetune-aware emergence model and extrapolate to d0.

    Few-shot observations are evaluated at d0 without the finetune shift; the
    no_fewshot form drops them entirely and freezes the shift at 0. Explicit
    ``weights`` (aligned with ``observations``) override the scheme — the
    bootstrap uses this to pass resample multiplicities.
    """
    scheme = scheme or WeightScheme()
    grid = grid or GridSpec()
    problem = _law_problem(observations, form, scheme, extrap, weights)
    axes = grid.law_axes(form)
    seeds = _scan_law_grid(problem.data, axes, grid.top_k)
    outcome = _run_multistart(problem.data, seeds, [a.bounds() for a in axes], workers)

    elbow_step = axes[4].step
    min_loss = float(problem.data.losses.min())
    if problem.data.elbow_at_max_data(outcome.x) <= max(min_loss - elbow_step, 0.0):
        raise IdentifiabilityError(
            "unidentified: emergence beyond observed range (fitted elbow below every observed loss)"
        )
    e_hat = problem.data.tie_value(outcome.x)
    if e_hat <= 0:
        raise IdentifiabilityError("unidentified: predicted few-shot emergence at a non-positive loss")

    params = EmergenceLawParams(
        slope=float(outcome.x[0]),
        floor=float(outcome.x[1]),
        finetune_shift=float(outcome.x[5]),
        data_coef=float(outcome.x[2]),
        data_power=float(outcome.x[3]),
        elbow_base=float(outcome.x[4]),
        form=form,
    )
    fit = FitResult(params, outcome.objective_value, outcome.seed_rank, outcome.n_refinements, outcome.converged)
    prediction = EmergencePrediction(law=params, d0=problem.d0, e_hat=e_hat, loss_basis=problem.loss_basis)
    return fit, prediction


def fit_relu(
    observations: Sequence[Observation],
    grid: GridSpec | None = None,
    weights=None,
    workers: int | None = None,
) -> FitResult:
    """Fit the emergence ReLU to the few-shot observations (the ground truth).

    Uses uniform weights unless explicit weights (aligned with the full
    observation list) are supplied.
    """
    grid = grid or GridSpec()
    validate_dataset(observations)
    indices = [i for i, o in enumerate(observations) if o.condition.kind == FEW_SHOT]
    few_shot = [observations[i] for i in indices]
    _require(len(few_shot) >= 3, f"need >= 3 few-shot observations, got {len(few_shot)}")
    _require(len({o.loss for o in few_shot}) >= 2, "need >= 2 distinct few-shot losses")

    subset = _subset_weights(weights, observations, indices)
    order = _canonical_sort(few_shot)
    few_shot = [few_shot[i] for i in order]
    subset = subset[order] if subset is not None else np.ones(len(few_shot))

    data = _FitData.build(
        losses=[o.loss for o in few_shot],
        targets=[o.performance for o in few_shot],
        finetuned=np.zeros(len(few_shot)),
        xvals=np.zeros(len(few_shot)),
        weights=subset,
        tie_x=0.0,
    )
    axes = grid.relu_axes()
    seeds = _scan_law_grid(data, axes, grid.top_k)
    outcome = _run_multistart(data, seeds, [a.bounds() for a in axes], workers)

    elbow = float(outcome.x[4])
    min_loss = float(data.losses.min())
    if elbow <= max(min_loss - axes[4].step, 0.0):
        raise IdentifiabilityError("unidentified: emergence beyond observed range (all observations pre-emergence flat)")
    params = ReluParams(slope=float(outcome.x[0]), floor=float(outcome.x[1]), elbow=elbow)
    return FitResult(params, outcome.objective_value, outcome.seed_rank, outcome.n_refinements, outcome.converged)


DEFAULT_SCALING_AXES = (
    ("amplitude", (0.0, 5.0, 0.1), (0.0, math.inf)),
    ("exponent", (0.01, 1.0, 0.01), (1e-9, math.inf)),
    ("irreducible", (0.0, 1.0, 0.01), (0.0, math.inf)),
)


def fit_scaling_law(
    points: Sequence[tuple[float, float]],
    top_k: int = 1000,
    axes: Sequence[GridAxis] | None = None,
    workers: int | None = None,
) -> FitResult:
    """Fit loss(n) = amplitude / n**exponent + irreducible by log-space MSE.

    ``points`` are (parameter count in billions, loss in nats) pairs; at least
    three distinct parameter counts are required.
    """
    _require(len(points) >= 3, f"need >= 3 points, got {len(points)}")
    pairs = sorted((float(n), float(loss)) for n, loss in points)
    _require(len({n for n, _ in pairs}) >= 3, "need >= 3 distinct parameter counts")
    for n, loss in pairs:
        _require(n > 0, f"parameter count must be > 0, got {n}")
        _require(loss > 0, f"loss must be > 0, got {loss}")

    data = _ScalingData(
        n_b=np.array([n for n, _ in pairs]),
        log_losses=np.log(np.array([loss for _, loss in pairs])),
    )
    if axes is None:
        axes = [GridAxis.from_range(name, spec, domain) for name, spec, domain in DEFAULT_SCALING_AXES]
    seeded = grid_search(data.batch, axes, top_k)
    seeds = np.array([p for p, _ in seeded])
    outcome = _run_multistart(data, seeds, [a.bounds() for a in axes], workers)
    _require(outcome.x[0] > 0, "degenerate scaling-law fit: zero amplitude (flat loss curve)")
    params = ScalingLawParams(
        amplitude=float(outcome.x[0]), exponent=float(outcome.x[1]), irreducible=float(outcome.x[2])
    )
    return FitResult(params, outcome.objective_value, outcome.seed_rank, outcome.n_refinements, outcome.converged)


@dataclass(frozen=True)
class LawFitConfig:
    """Bundle of everything that defines a law fit, minus the data.

    Used wherever a fit must be re-run on perturbed data (bootstrap replicates,
    holdout sweeps, MCMC energy evaluation).
    """

    form: str = LOG_POWER
    scheme: WeightScheme = field(default_factory=WeightScheme)
    grid: GridSpec = field(default_factory=GridSpec)
    extrap: ExtrapolationConfig | None = None

    def fit(self, observations, weights=None, top_k: int | None = None, workers: int | None = None):
        grid = self.grid if top_k is None else replace(self.grid, top_k=top_k)
        return fit_emergence_law(
            observations,
            form=self.form,
            scheme=self.scheme,
            grid=grid,
            extrap=self.extrap,
            weights=weights,
            workers=workers,
        )

    def problem(self, observations, weights=None) -> _LawProblem:
        return _law_problem(observations, self.form, self.scheme, self.extrap, weights)
