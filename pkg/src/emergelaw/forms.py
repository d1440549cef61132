"""Parametric forms: the emergence ReLU, the data-shifted elbow, and the compute scaling law.

All functions here are pure and scalar. Losses are cross-entropy in nats
throughout; predicted performance is never clamped to metric bounds (clamping
happens only when rendering reports).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError

# Elbow-function variants. "no_fewshot" is the log-power form fit without the
# finetune base shift and without few-shot datapoints.
LOG_POWER = "log_power"
POWER = "power"
NO_FEWSHOT = "no_fewshot"
LAW_FORMS = (LOG_POWER, POWER, NO_FEWSHOT)

# The power-form exponent is kept in (0, 2] so the elbow cannot overflow at
# large data amounts; the log forms require exponent >= 1.
POWER_FORM_EXPONENT_MAX = 2.0


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValidationError(message)


def _require_finite(value: float, name: str) -> None:
    _require(isinstance(value, (int, float)) and math.isfinite(value), f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class ReluParams:
    """Emergence ReLU: performance = slope * max(elbow - loss, 0) + floor.

    ``elbow`` is the point of emergence in nats: above it (weaker models) the
    prediction sits flat at ``floor``; below it performance rises linearly.
    """

    slope: float
    floor: float
    elbow: float

    def __post_init__(self):
        for name in ("slope", "floor", "elbow"):
            _require_finite(getattr(self, name), name)
        _require(self.slope >= 0, f"slope must be >= 0, got {self.slope}")
        _require(self.elbow > 0, f"elbow must be > 0, got {self.elbow}")


@dataclass(frozen=True)
class EmergenceLawParams:
    """Finetune-aware emergence model.

    The elbow moves with the amount of finetuning data d:

        elbow(d) = data_coef * log(d)**data_power + elbow_base      (log forms)
        elbow(d) = data_coef * d**data_power + elbow_base           (power form)

    and predicted performance is

        slope * max(elbow(d) - loss, 0) + floor + finetune_shift * [finetuned]

    ``finetune_shift`` models the small base-rate gain finetuned models show
    even pre-emergence; it is identically 0 for the ``no_fewshot`` form.
    """

    slope: float
    floor: float
    finetune_shift: float
    data_coef: float
    data_power: float
    elbow_base: float
    form: str = LOG_POWER

    def __post_init__(self):
        _require(self.form in LAW_FORMS, f"unknown law form {self.form!r}")
        for name in ("slope", "floor", "finetune_shift", "data_coef", "data_power", "elbow_base"):
            _require_finite(getattr(self, name), name)
        _require(self.slope >= 0, f"slope must be >= 0, got {self.slope}")
        _require(self.data_coef >= 0, f"data_coef must be >= 0, got {self.data_coef}")
        if self.form == POWER:
            _require(
                0 < self.data_power <= POWER_FORM_EXPONENT_MAX,
                f"power-form data_power must be in (0, {POWER_FORM_EXPONENT_MAX}], got {self.data_power}",
            )
        else:
            _require(self.data_power >= 1, f"data_power must be >= 1, got {self.data_power}")
        if self.form == NO_FEWSHOT:
            _require(self.finetune_shift == 0, "no_fewshot form fixes finetune_shift to 0")


@dataclass(frozen=True)
class ExtrapolationConfig:
    """Low-data limit used to read the few-shot prediction off the law.

    ``d0`` stands in for the few-shot setting and defaults, at fit time, to
    the number of examples in the few-shot prompt.
    """

    d0: int

    def __post_init__(self):
        _require(isinstance(self.d0, int) and self.d0 >= 1, f"d0 must be an integer >= 1, got {self.d0!r}")


@dataclass(frozen=True)
class ScalingLawParams:
    """Loss-vs-parameter-count law: loss(n) = amplitude / n**exponent + irreducible.

    ``n`` is parameter count in billions; ``irreducible`` is the loss floor in
    nats.
    """

    amplitude: float
    exponent: float
    irreducible: float

    def __post_init__(self):
        for name in ("amplitude", "exponent", "irreducible"):
            _require_finite(getattr(self, name), name)
        _require(self.amplitude > 0, f"amplitude must be > 0, got {self.amplitude}")
        _require(self.exponent > 0, f"exponent must be > 0, got {self.exponent}")
        _require(self.irreducible >= 0, f"irreducible must be >= 0, got {self.irreducible}")


def eval_relu(p: ReluParams, loss: float) -> float:
    """Predicted performance of a checkpoint with the given pretraining loss."""
    _require(loss > 0, f"loss must be > 0, got {loss}")
    return p.slope * max(p.elbow - loss, 0.0) + p.floor


def eval_elbow(p: EmergenceLawParams, d: float) -> float:
    """Emergence point (nats) after finetuning on d examples.

    d may be fractional (the formula is continuous) but must be >= 1 so the
    log forms stay defined.
    """
    _require(d >= 1, f"d must be >= 1, got {d}")
    x = float(d) if p.form == POWER else math.log(d)
    return p.data_coef * x**p.data_power + p.elbow_base


def eval_full_model(p: EmergenceLawParams, loss: float, d: float, is_finetuned: bool) -> float:
    """Predicted performance at (loss, finetuning amount d, finetuned flag)."""
    _require(loss > 0, f"loss must be > 0, got {loss}")
    shift = p.finetune_shift if is_finetuned else 0.0
    return p.slope * max(eval_elbow(p, d) - loss, 0.0) + p.floor + shift


def eval_scaling_law(p: ScalingLawParams, n_b: float) -> float:
    """Pretraining loss (nats) of a model with n_b billion parameters."""
    _require(n_b > 0, f"n_b must be > 0, got {n_b}")
    return p.amplitude / n_b**p.exponent + p.irreducible


def invert_scaling_law(p: ScalingLawParams, target_loss: float) -> float:
    """Parameter count (billions) at which the law reaches target_loss.

    Raises ValidationError when target_loss is at or beyond the irreducible
    loss, where no finite model size suffices.
    """
    _require_finite(target_loss, "target_loss")
    if target_loss <= p.irreducible:
        raise ValidationError(
            f"target loss {target_loss} is beyond irreducible loss {p.irreducible}; no parameter count reaches it"
        )
    return (p.amplitude / (target_loss - p.irreducible)) ** (1.0 / p.exponent)
