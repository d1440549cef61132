import dataclasses

import numpy as np
import pytest

from emergelaw import (
    Condition,
    EmergenceLawParams,
    GridSpec,
    Observation,
    SynthSpec,
    generate,
)

# Truth vector used across unit tests; every coordinate sits on the
# small_grid lattice so noiseless fits recover it exactly.
UNIT_TRUTH = EmergenceLawParams(
    slope=1.0, floor=0.2, finetune_shift=0.05, data_coef=0.2, data_power=1.0, elbow_base=1.0
)
UNIT_LOSSES = tuple(np.round(np.arange(1.2, 2.61, 0.2), 10))
UNIT_AMOUNTS = (30, 100, 300, 1000)
UNIT_D0 = 5


@pytest.fixture
def small_grid():
    """Coarse grid containing UNIT_TRUTH; keeps unit-test fits fast."""
    return GridSpec(
        slope=(0.0, 2.0, 0.5),
        floor=(0.0, 0.4, 0.2),
        data_coef=(0.0, 0.4, 0.1),
        data_power=(1.0, 3.0, 1.0),
        elbow_base=(0.5, 2.5, 0.5),
        finetune_shift=(0.0, 0.1, 0.05),
        top_k=60,
    )


@pytest.fixture
def make_synth():
    """Factory for SynthSpec instances around UNIT_TRUTH."""

    def factory(noise_sigma=0.0, seed=0, truth=UNIT_TRUTH, losses=UNIT_LOSSES, amounts=UNIT_AMOUNTS,
                few_shot_losses=UNIT_LOSSES, replicates=1, d0=UNIT_D0, **kwargs):
        return SynthSpec(
            truth=truth,
            loss_grid=tuple(losses),
            data_amounts=tuple(amounts),
            replicates_per_amount=replicates,
            few_shot_losses=tuple(few_shot_losses),
            d0=d0,
            noise_sigma=noise_sigma,
            seed=seed,
            **kwargs,
        )

    return factory


@pytest.fixture
def unit_observations(make_synth):
    """Noiseless observations from UNIT_TRUTH."""
    return generate(make_synth())


@pytest.fixture
def few_shot_obs():
    """Factory for few-shot-only datasets on an exact ReLU surface."""

    def factory(slope=1.0, floor=0.1, elbow=2.0, losses=None, noise=None, task="unit"):
        losses = np.round(np.arange(1.0, 3.01, 0.2), 10) if losses is None else losses
        noise = np.zeros(len(losses)) if noise is None else noise
        return [
            Observation(
                model_id=f"ckpt-{i:02d}",
                loss=float(loss),
                loss_basis="pretrain",
                condition=Condition("few_shot", num_shots=5),
                performance=slope * max(elbow - loss, 0.0) + floor + float(eps),
                task=task,
            )
            for i, (loss, eps) in enumerate(zip(losses, noise))
        ]

    return factory


def with_flops(observations, flops_by_model):
    """Copy observations, attaching per-checkpoint FLOPs metadata."""
    return [dataclasses.replace(o, flops=flops_by_model[o.model_id]) for o in observations]
