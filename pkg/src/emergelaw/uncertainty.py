"""Calibrated uncertainty over the predicted emergence point.

Two routes to the same summary: a weighted bootstrap (resample-with-replacement
proportional to fit weights, multiplicities become replicate weights) and a
tempered-posterior MCMC over the law parameters (density ~ exp(-objective/T)
under a uniform prior on the refinement box). The sampler here is a seeded
random-walk Metropolis kernel; any kernel with detailed balance w.r.t. that
density conforms.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import multiprocessing
import numpy as np

from .errors import IdentifiabilityError, TemperatureSelectionError, ValidationError
from .fitting import FitResult, LawFitConfig, _resolve_workers
from .forms import EmergenceLawParams, ExtrapolationConfig

PERCENTILE_RANKS = (5, 10, 25, 50, 75, 90, 95)

BOOTSTRAP = "bootstrap"
MCMC = "mcmc"

_ADAPT_BATCH = 25
_TARGET_ACCEPT = 0.3


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValidationError(message)


@dataclass(frozen=True)
class BootstrapConfig:
    replicates: int = 1000
    seed: int = 0

    def __post_init__(self):
        _require(self.replicates >= 1, f"replicates must be >= 1, got {self.replicates}")
        _require(self.seed >= 0, "seed must be non-negative")


@dataclass(frozen=True)
class McmcConfig:
    chains: int = 4
    samples_per_chain: int = 25_000
    warmup: int = 15_000
    temperatures: tuple[float, ...] = (1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9)
    seed: int = 0
    mode_tolerance: float = 0.02  # nats; how close the pilot mode must sit to the MLE
    pilot_samples: int = 2000

    def __post_init__(self):
        _require(self.chains >= 1, "chains must be >= 1")
        _require(self.samples_per_chain >= 1, "samples_per_chain must be >= 1")
        _require(self.warmup >= 0, "warmup must be >= 0")
        _require(len(self.temperatures) >= 1, "temperatures must be nonempty")
        _require(all(t > 0 for t in self.temperatures), "temperatures must be strictly positive")
        _require(self.seed >= 0, "seed must be non-negative")
        _require(self.mode_tolerance > 0, "mode_tolerance must be > 0")
        _require(self.pilot_samples >= 10, "pilot_samples must be >= 10")


@dataclass(frozen=True)
class UncertaintySummary:
    """Samples of the predicted emergence point with percentiles and CDF."""

    samples: tuple[float, ...]
    percentiles: dict[int, float]
    method: str
    n_excluded: int = 0
    diagnostics: dict | None = None

    def cdf(self, x: float) -> float:
        """Empirical distribution function: fraction of samples <= x."""
        ordered = np.sort(np.asarray(self.samples))
        return float(np.searchsorted(ordered, x, side="right") / len(ordered))

    def cdf_curve(self) -> tuple[np.ndarray, np.ndarray]:
        """(sorted sample values, cumulative fractions) for step plotting."""
        ordered = np.sort(np.asarray(self.samples))
        return ordered, np.arange(1, len(ordered) + 1) / len(ordered)


def summarize(
    samples: Sequence[float],
    method: str = BOOTSTRAP,
    n_excluded: int = 0,
    diagnostics: dict | None = None,
) -> UncertaintySummary:
    """Percentile/CDF summary of emergence-point samples.

    Percentiles use inclusive linear interpolation between order statistics
    (the numpy default).
    """
    arr = np.asarray(list(samples), dtype=float)
    _require(arr.size >= 1, "cannot summarize an empty sample list")
    _require(bool(np.all(np.isfinite(arr))), "samples must be finite")
    percentiles = {rank: float(np.percentile(arr, rank)) for rank in PERCENTILE_RANKS}
    return UncertaintySummary(
        samples=tuple(float(s) for s in arr),
        percentiles=percentiles,
        method=method,
        n_excluded=n_excluded,
        diagnostics=diagnostics,
    )


def interval_jaccard(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Overlap-over-union of two closed intervals (1.0 for identical points)."""
    (a_lo, a_hi), (b_lo, b_hi) = sorted(a), sorted(b)
    union = max(a_hi, b_hi) - min(a_lo, b_lo)
    if union == 0:
        return 1.0 if a_lo == b_lo else 0.0
    intersection = max(0.0, min(a_hi, b_hi) - max(a_lo, b_lo))
    return intersection / union


# ---------------------------------------------------------------------------
# Weighted bootstrap
# ---------------------------------------------------------------------------


def _bootstrap_chunk(observations, probabilities, n_draw, config, top_k, seed, indices):
    out = []
    for i in indices:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(int(i),)))
        counts = rng.multinomial(n_draw, probabilities)
        mask = counts > 0
        replicate = [o for o, keep in zip(observations, mask) if keep]
        try:
            _, prediction = config.fit(replicate, weights=counts[mask].astype(float), top_k=top_k)
            out.append((i, prediction.e_hat))
        except (ValidationError, IdentifiabilityError):
            out.append((i, None))
    return out


def bootstrap_fit(
    observations,
    weights,
    fit_config: LawFitConfig,
    bcfg: BootstrapConfig,
    replicate_top_k: int = 200,
    workers: int | None = None,
) -> UncertaintySummary:
    """Weighted bootstrap over the law fit.

    Each replicate draws round(sum(weights)) indices with replacement with
    probability proportional to weight; multiplicity counts become the
    replicate's weights. Unidentified replicate fits are excluded from the
    summary and counted in n_excluded.
    """
    weights = np.asarray(weights, dtype=float)
    _require(len(weights) == len(observations), "weights must align with observations")
    _require(bool(np.all(np.isfinite(weights)) and np.all(weights > 0)), "weights must be positive and finite")
    n_draw = int(round(weights.sum()))
    _require(n_draw >= 1, "sum of weights rounds to zero draws")
    probabilities = weights / weights.sum()

    # Pin d0 from the full dataset so replicates that lose every few-shot
    # point still extrapolate to the same limit.
    d0 = fit_config.problem(list(observations), weights).d0
    config = replace(fit_config, extrap=ExtrapolationConfig(d0))

    observations = tuple(observations)
    workers = _resolve_workers(workers)
    indices = list(range(bcfg.replicates))
    chunk_size = max(1, math.ceil(len(indices) / (workers * 4))) if workers > 1 else len(indices)
    chunks = [indices[i : i + chunk_size] for i in range(0, len(indices), chunk_size)]

    args = (observations, probabilities, n_draw, config, replicate_top_k, bcfg.seed)
    if workers > 1 and len(chunks) > 1:
        context = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=workers, mp_context=context) as pool:
            futures = [pool.submit(_bootstrap_chunk, *args, chunk) for chunk in chunks]
            results = [f.result() for f in futures]
    else:
        results = [_bootstrap_chunk(*args, chunk) for chunk in chunks]

    paired = [item for chunk in results for item in chunk]
    paired.sort(key=lambda item: item[0])
    samples = [e_hat for _, e_hat in paired if e_hat is not None]
    n_excluded = bcfg.replicates - len(samples)
    if not samples:
        raise IdentifiabilityError("all bootstrap replicates were unidentified")
    return summarize(samples, method=BOOTSTRAP, n_excluded=n_excluded, diagnostics={"replicates": bcfg.replicates})


# ---------------------------------------------------------------------------
# Tempered-posterior MCMC
# ---------------------------------------------------------------------------


def _metropolis_chain(
    value_fn: Callable[[np.ndarray], float],
    init: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    temperature: float,
    warmup: int,
    n_samples: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, float]:
    """Random-walk Metropolis targeting exp(-value/temperature) on a box.

    Proposal scales adapt toward ~30% acceptance during warmup only, so the
    sampling phase satisfies detailed balance. Returns (samples, acceptance
    rate over the sampling phase).
    """
    x = np.clip(np.asarray(init, dtype=float), lower, upper)
    fx = float(value_fn(x))
    width = upper - lower
    scales = 0.02 * width  # zero on frozen dimensions
    dim = len(x)
    samples = np.empty((n_samples, dim))
    accepted_in_batch = 0
    accepted_sampling = 0

    total = warmup + n_samples
    for step in range(total):
        proposal = x + scales * rng.standard_normal(dim)
        accept = False
        if np.all(proposal >= lower) and np.all(proposal <= upper):
            f_new = float(value_fn(proposal))
            log_ratio = -(f_new - fx) / temperature
            if log_ratio >= 0 or math.log(max(rng.random(), 1e-300)) < log_ratio:
                accept = True
        if accept:
            x, fx = proposal, f_new
            accepted_in_batch += 1
            if step >= warmup:
                accepted_sampling += 1
        if step < warmup and (step + 1) % _ADAPT_BATCH == 0:
            rate = accepted_in_batch / _ADAPT_BATCH
            factor = math.exp(1.0 * (rate - _TARGET_ACCEPT))
            scales = np.maximum(scales * factor, 1e-12 * width)
            accepted_in_batch = 0
        if step >= warmup:
            samples[step - warmup] = x
    return samples, accepted_sampling / max(n_samples, 1)


def _mcmc_chain_job(data, init, lower, upper, temperature, warmup, n_samples, seed, chain_index):
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(int(chain_index),)))
    return _metropolis_chain(data.value, init, lower, upper, temperature, warmup, n_samples, rng)


def _e_hat_of(samples: np.ndarray, tie_x: float) -> np.ndarray:
    return samples[:, 2] * tie_x ** samples[:, 3] + samples[:, 4]


def _law_vector(params: EmergenceLawParams) -> np.ndarray:
    return np.array(
        [params.slope, params.floor, params.data_coef, params.data_power, params.elbow_base, params.finetune_shift]
    )


def mcmc_sample(
    observations,
    mle: FitResult,
    cfg: McmcConfig,
    temperature: float,
    fit_config: LawFitConfig,
    weights=None,
    workers: int | None = None,
) -> UncertaintySummary:
    """Sample the tempered posterior of the law parameters, mapped to e_hat.

    Chains start at the MLE and run independently on seeded streams; the merge
    is by chain index, so results do not depend on the worker count.
    """
    _require(temperature > 0, f"temperature must be > 0, got {temperature}")
    _require(isinstance(mle.params, EmergenceLawParams), "mcmc_sample needs an emergence-law fit as MLE")
    problem = fit_config.problem(list(observations), weights)
    axes = fit_config.grid.law_axes(fit_config.form)
    bounds = np.array([axis.bounds() for axis in axes])
    lower, upper = bounds[:, 0], bounds[:, 1]
    init = np.clip(_law_vector(mle.params), lower, upper)

    jobs = range(cfg.chains)
    workers = _resolve_workers(workers)
    if workers > 1 and cfg.chains > 1:
        context = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=workers, mp_context=context) as pool:
            futures = [
                pool.submit(
                    _mcmc_chain_job,
                    problem.data,
                    init,
                    lower,
                    upper,
                    temperature,
                    cfg.warmup,
                    cfg.samples_per_chain,
                    cfg.seed,
                    c,
                )
                for c in jobs
            ]
            chain_results = [f.result() for f in futures]
    else:
        chain_results = [
            _mcmc_chain_job(
                problem.data, init, lower, upper, temperature, cfg.warmup, cfg.samples_per_chain, cfg.seed, c
            )
            for c in jobs
        ]

    acceptance = [rate for _, rate in chain_results]
    stacked = np.concatenate([samples for samples, _ in chain_results], axis=0)
    e_hats = _e_hat_of(stacked, problem.data.tie_x)
    diagnostics = {
        "temperature": temperature,
        "acceptance_rates": [float(r) for r in acceptance],
        "chains": cfg.chains,
        "samples_per_chain": cfg.samples_per_chain,
    }
    return summarize(e_hats, method=MCMC, diagnostics=diagnostics)


def _histogram_mode(samples: np.ndarray, bin_width: float = 0.005) -> float:
    """Center of the fullest histogram bin (first one on ties)."""
    lo = float(samples.min())
    hi = float(samples.max())
    if hi - lo < bin_width:
        return 0.5 * (lo + hi)
    n_bins = int(math.ceil((hi - lo) / bin_width))
    edges = lo + bin_width * np.arange(n_bins + 1)
    counts, _ = np.histogram(samples, bins=edges)
    best = int(np.argmax(counts))
    return lo + (best + 0.5) * bin_width


def _select_from_pilots(
    pilot: Callable[[float], np.ndarray],
    temperatures: Sequence[float],
    mle_e_hat: float,
    tolerance: float,
) -> float:
    """Largest temperature whose pilot e_hat mode lands within tolerance of the MLE."""
    for temperature in sorted(temperatures, reverse=True):
        mode = _histogram_mode(np.asarray(pilot(temperature), dtype=float))
        if abs(mode - mle_e_hat) <= tolerance:
            return temperature
    raise TemperatureSelectionError(
        f"no temperature in {list(temperatures)} centered the posterior mode within "
        f"{tolerance} nats of the MLE; pass a temperature manually"
    )


def select_temperature(
    observations,
    mle: FitResult,
    cfg: McmcConfig,
    fit_config: LawFitConfig,
    weights=None,
    pilot: Callable[[float], np.ndarray] | None = None,
) -> float:
    """Sweep temperatures (descending) with short pilot chains; pick the largest
    whose sampled e_hat mode sits within cfg.mode_tolerance of the MLE e_hat.

    ``pilot`` may be overridden (temperature -> e_hat samples) for testing or
    custom pilots.
    """
    _require(isinstance(mle.params, EmergenceLawParams), "select_temperature needs an emergence-law fit as MLE")
    problem = fit_config.problem(list(observations), weights)
    data = problem.data
    mle_e_hat = data.tie_value(_law_vector(mle.params))

    if pilot is None:
        axes = fit_config.grid.law_axes(fit_config.form)
        bounds = np.array([axis.bounds() for axis in axes])
        lower, upper = bounds[:, 0], bounds[:, 1]
        init = np.clip(_law_vector(mle.params), lower, upper)
        warmup = max(200, cfg.pilot_samples // 2)
        temps = sorted(cfg.temperatures, reverse=True)

        def pilot(temperature: float) -> np.ndarray:
            index = temps.index(temperature)
            rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(10_000 + index,)))
            samples, _ = _metropolis_chain(
                data.value, init, lower, upper, temperature, warmup, cfg.pilot_samples, rng
            )
            return _e_hat_of(samples, data.tie_x)

    return _select_from_pilots(pilot, cfg.temperatures, mle_e_hat, cfg.mode_tolerance)
