"""Synthetic-emergence data generation and the recovery harness.

The generator is the independent oracle used throughout testing: data is laid
out like a real finetuning study (a loss grid crossed with data amounts and
subset replicates, plus few-shot rows) with every performance value computed
from a known truth vector. Randomness is per-point counter-based, so parallel
generation would yield the same dataset as serial.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import FEW_SHOT, FINETUNED, PRETRAIN, LOSS_BASES, Condition, Observation
from .errors import ValidationError
from .fitting import FitResult, EmergencePrediction, LawFitConfig
from .forms import EmergenceLawParams, ExtrapolationConfig, eval_elbow, eval_full_model

GAUSSIAN = "gaussian"
BINOMIAL = "binomial"


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValidationError(message)


@dataclass(frozen=True)
class SynthSpec:
    """Layout and noise model for a synthetic emergence study.

    ``noise_model`` is homoscedastic Gaussian on performance by default;
    ``binomial`` simulates pass/fail evaluation over ``eval_samples`` trials
    (heteroscedastic, for calibration studies).
    """

    truth: EmergenceLawParams
    loss_grid: tuple[float, ...]
    data_amounts: tuple[int, ...]
    replicates_per_amount: int
    few_shot_losses: tuple[float, ...]
    d0: int
    noise_sigma: float
    seed: int
    noise_model: str = GAUSSIAN
    eval_samples: int | None = None
    task: str = "synthetic"
    loss_basis: str = PRETRAIN

    def __post_init__(self):
        _require(len(self.loss_grid) > 0, "loss_grid must be nonempty")
        _require(all(l > 0 for l in self.loss_grid), "losses must be > 0")
        _require(list(self.loss_grid) == sorted(self.loss_grid), "loss_grid must be sorted ascending")
        _require(len(self.data_amounts) > 0, "data_amounts must be nonempty")
        _require(all(isinstance(d, int) and d >= 1 for d in self.data_amounts), "data amounts must be integers >= 1")
        _require(self.replicates_per_amount >= 1, "replicates_per_amount must be >= 1")
        _require(all(l > 0 for l in self.few_shot_losses), "few-shot losses must be > 0")
        _require(isinstance(self.d0, int) and self.d0 >= 1, "d0 must be an integer >= 1")
        _require(self.noise_sigma >= 0, "noise_sigma must be >= 0")
        _require(self.seed >= 0, "seed must be non-negative")
        _require(self.noise_model in (GAUSSIAN, BINOMIAL), f"unknown noise model {self.noise_model!r}")
        if self.noise_model == BINOMIAL:
            _require(
                isinstance(self.eval_samples, int) and self.eval_samples >= 1,
                "binomial noise requires eval_samples >= 1",
            )
        _require(self.loss_basis in LOSS_BASES, f"unknown loss basis {self.loss_basis!r}")


def _checkpoint_ids(spec: SynthSpec) -> dict[float, str]:
    """Stable checkpoint id per distinct loss; higher loss = earlier checkpoint."""
    losses = sorted(set(spec.loss_grid) | set(spec.few_shot_losses), reverse=True)
    return {loss: f"ckpt-{i + 1:02d}" for i, loss in enumerate(losses)}


def _noise(spec: SynthSpec, point_index: int, mean: float) -> float:
    if spec.noise_sigma == 0 and spec.noise_model == GAUSSIAN:
        return mean
    rng = np.random.default_rng(np.random.SeedSequence(entropy=spec.seed, spawn_key=(point_index,)))
    if spec.noise_model == GAUSSIAN:
        return mean + spec.noise_sigma * float(rng.standard_normal())
    rate = min(max(mean, 0.0), 1.0)
    return float(rng.binomial(spec.eval_samples, rate)) / spec.eval_samples


def generate(spec: SynthSpec) -> list[Observation]:
    """Observations on the truth surface plus per-point seeded noise."""
    ids = _checkpoint_ids(spec)
    observations = []
    point = 0
    for loss in spec.loss_grid:
        for amount in spec.data_amounts:
            for replicate in range(1, spec.replicates_per_amount + 1):
                mean = eval_full_model(spec.truth, loss, amount, True)
                observations.append(
                    Observation(
                        model_id=ids[loss],
                        loss=loss,
                        loss_basis=spec.loss_basis,
                        condition=Condition(kind=FINETUNED, data_amount=amount, subset_seed=replicate),
                        performance=_noise(spec, point, mean),
                        task=spec.task,
                    )
                )
                point += 1
    for loss in spec.few_shot_losses:
        mean = eval_full_model(spec.truth, loss, spec.d0, False)
        observations.append(
            Observation(
                model_id=ids[loss],
                loss=loss,
                loss_basis=spec.loss_basis,
                condition=Condition(kind=FEW_SHOT, num_shots=spec.d0),
                performance=_noise(spec, point, mean),
                task=spec.task,
            )
        )
        point += 1
    return observations


@dataclass(frozen=True)
class RecoveryReport:
    """Fit-vs-truth comparison on one synthetic dataset."""

    truth_e_hat: float
    fitted_e_hat: float
    abs_deviation: float
    parameter_deviations: dict[str, float]
    fit: FitResult
    prediction: EmergencePrediction


def recovery_report(spec: SynthSpec, fit_config: LawFitConfig, workers: int | None = None) -> RecoveryReport:
    """Generate from the spec, fit the law, and compare against the truth at d0."""
    _require(
        fit_config.form == spec.truth.form,
        f"fit form {fit_config.form!r} does not match the truth form {spec.truth.form!r}",
    )
    observations = generate(spec)
    config = fit_config if fit_config.extrap is not None else LawFitConfig(
        form=fit_config.form, scheme=fit_config.scheme, grid=fit_config.grid, extrap=ExtrapolationConfig(spec.d0)
    )
    fit, prediction = config.fit(observations, workers=workers)
    truth_e_hat = eval_elbow(spec.truth, config.extrap.d0)
    law = fit.params
    deviations = {
        name: abs(getattr(law, name) - getattr(spec.truth, name))
        for name in ("slope", "floor", "finetune_shift", "data_coef", "data_power", "elbow_base")
    }
    return RecoveryReport(
        truth_e_hat=float(truth_e_hat),
        fitted_e_hat=prediction.e_hat,
        abs_deviation=abs(prediction.e_hat - truth_e_hat),
        parameter_deviations=deviations,
        fit=fit,
        prediction=prediction,
    )
