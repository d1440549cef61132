import json
import math
from fractions import Fraction

import pytest

from emergelaw import (
    Condition,
    Observation,
    ObservationParseError,
    TASK_PRESETS,
    ValidationError,
    WeightScheme,
    compute_weights,
    estimate_flops,
    load_observations,
    observation_flops,
    save_observations,
    subset_schedule,
)


def _obs(loss=2.0, kind="finetuned", amount=100, shots=None, task="unit", basis="pretrain", perf=0.1, model="m1", **kw):
    condition = Condition(kind, data_amount=amount if kind == "finetuned" else None,
                          num_shots=shots if kind == "few_shot" else None)
    return Observation(model_id=model, loss=loss, loss_basis=basis, condition=condition,
                       performance=perf, task=task, **kw)


class TestLoading:
    def test_two_valid_records(self, tmp_path):
        path = tmp_path / "obs.jsonl"
        save_observations([_obs(), _obs(loss=1.5, kind="few_shot", shots=5, model="m2")], path)
        loaded = load_observations(path)
        assert len(loaded) == 2
        assert loaded[0].condition.data_amount == 100

    def test_zero_data_amount_rejected(self, tmp_path):
        path = tmp_path / "obs.jsonl"
        record = {"model_id": "m", "loss": 2.0, "loss_basis": "pretrain",
                  "condition": {"kind": "finetuned", "data_amount": 0},
                  "performance": 0.1, "task": "unit"}
        path.write_text(json.dumps(record) + "\n")
        with pytest.raises(ObservationParseError, match="data_amount"):
            load_observations(path)

    def test_mixed_loss_basis_rejected(self, tmp_path):
        path = tmp_path / "obs.jsonl"
        save_observations([_obs(), _obs(basis="held_out_c4", model="m2")], path)
        with pytest.raises(ValidationError, match="loss bases"):
            load_observations(path)

    def test_mixed_task_rejected(self, tmp_path):
        path = tmp_path / "obs.jsonl"
        save_observations([_obs(), _obs(task="other", model="m2")], path)
        with pytest.raises(ValidationError, match="tasks"):
            load_observations(path)

    def test_expected_task_mismatch(self, tmp_path):
        path = tmp_path / "obs.jsonl"
        save_observations([_obs()], path)
        with pytest.raises(ValidationError, match="expected"):
            load_observations(path, expected_task="other")

    def test_unknown_key_rejected_with_line_number(self, tmp_path):
        path = tmp_path / "obs.jsonl"
        good = json.dumps({"model_id": "m", "loss": 2.0, "loss_basis": "pretrain",
                           "condition": {"kind": "few_shot", "num_shots": 5},
                           "performance": 0.1, "task": "unit"})
        bad = json.dumps({"model_id": "m", "loss": 2.0, "loss_basis": "pretrain",
                          "condition": {"kind": "few_shot", "num_shots": 5},
                          "performance": 0.1, "task": "unit", "extra": 1})
        path.write_text(good + "\n" + bad + "\n")
        with pytest.raises(ObservationParseError, match=":2:"):
            load_observations(path)

    def test_malformed_json_names_line(self, tmp_path):
        path = tmp_path / "obs.jsonl"
        path.write_text("{not json}\n")
        with pytest.raises(ObservationParseError, match=":1:"):
            load_observations(path)

    def test_round_trip_identity(self, tmp_path):
        original = [
            _obs(params_b=3.0, tokens_b=420.5),
            _obs(loss=1.7, kind="few_shot", shots=5, model="m2", flops=1.25e21),
            _obs(loss=2.5, amount=250, model="m3", perf=-0.25),
        ]
        path = tmp_path / "obs.jsonl"
        save_observations(original, path)
        assert load_observations(path) == original


class TestWeights:
    def test_inverse_data_example(self):
        obs = [_obs(amount=d, model=f"m{d}") for d in (100, 200, 400)]
        weights = compute_weights(obs, WeightScheme())
        assert weights == pytest.approx([1.7143, 0.8571, 0.4286], abs=1e-4)

    def test_uniform_all_ones(self):
        obs = [_obs(amount=d, model=f"m{d}") for d in (100, 200, 400)]
        assert compute_weights(obs, WeightScheme(kind="uniform")).tolist() == [1.0, 1.0, 1.0]

    def test_few_shot_max_finetune_weight(self):
        obs = [_obs(amount=100), _obs(amount=100, model="m2"), _obs(kind="few_shot", shots=5, model="m3")]
        weights = compute_weights(obs, WeightScheme())
        assert weights.tolist() == [1.0, 1.0, 1.0]

    def test_few_shot_inverse_d0(self):
        obs = [_obs(amount=100), _obs(kind="few_shot", shots=5, model="m2")]
        weights = compute_weights(obs, WeightScheme(few_shot_policy="inverse_d0"), d0=5)
        # raw weights 1/100 and 1/5, rescaled to mean 1
        assert weights == pytest.approx([2 * 0.01 / 0.21, 2 * 0.2 / 0.21])

    def test_inverse_d0_requires_d0(self):
        obs = [_obs(amount=100), _obs(kind="few_shot", shots=5, model="m2")]
        with pytest.raises(ValidationError, match="d0"):
            compute_weights(obs, WeightScheme(few_shot_policy="inverse_d0"))

    def test_few_shot_only_needs_anchor(self):
        obs = [_obs(kind="few_shot", shots=5)]
        with pytest.raises(ValidationError, match="anchor"):
            compute_weights(obs, WeightScheme())

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            compute_weights([], WeightScheme())

    def test_mean_is_exactly_one(self):
        obs = [_obs(amount=d, model=f"m{d}") for d in (37, 113, 991, 4096)]
        weights = compute_weights(obs, WeightScheme())
        assert abs(weights.mean() - 1.0) <= 1e-12

    def test_nonincreasing_in_data_amount(self):
        obs = [_obs(amount=d, model=f"m{d}") for d in (50, 100, 200, 800)]
        weights = compute_weights(obs, WeightScheme())
        assert all(a >= b for a, b in zip(weights, weights[1:]))


class TestFlops:
    @pytest.mark.parametrize("params_b,tokens_b,expected", [(3, 1000, 1.8e22), (13, 1000, 7.8e22), (7, 2000, 8.4e22)])
    def test_examples(self, params_b, tokens_b, expected):
        assert estimate_flops(params_b, tokens_b) == pytest.approx(expected, rel=1e-12)

    def test_non_positive_rejected(self):
        with pytest.raises(ValidationError):
            estimate_flops(0, 1000)

    def test_observation_flops_prefers_measured(self):
        assert observation_flops(_obs(flops=5e20, params_b=3.0, tokens_b=100.0)) == 5e20
        assert observation_flops(_obs(params_b=3.0, tokens_b=100.0)) == pytest.approx(1.8e21)
        with pytest.raises(ValidationError):
            observation_flops(_obs())


class TestSubsetSchedule:
    def test_examples(self):
        assert subset_schedule(1000, [Fraction(1, 2), Fraction(1, 4), Fraction(1, 8)]) == [500, 250, 125]
        assert subset_schedule(1000, [1]) == [1000]
        with pytest.raises(ValidationError, match="0 examples"):
            subset_schedule(7, [Fraction(1, 8)])

    def test_deduplicates_and_sorts_descending(self):
        assert subset_schedule(100, [Fraction(1, 2), 0.5, Fraction(1, 4)]) == [50, 25]

    def test_task_presets_produce_valid_schedules(self):
        for name, preset in TASK_PRESETS.items():
            schedule = subset_schedule(100_000, preset.fractions)
            assert schedule == sorted(schedule, reverse=True), name
            assert preset.num_shots >= 1


class TestInvariantValidation:
    def test_loss_must_be_positive(self):
        with pytest.raises(ValidationError):
            _obs(loss=0.0)

    def test_performance_must_be_finite(self):
        with pytest.raises(ValidationError):
            _obs(perf=math.nan)

    def test_condition_field_exclusivity(self):
        with pytest.raises(ValidationError):
            Condition("few_shot", data_amount=10, num_shots=5)
        with pytest.raises(ValidationError):
            Condition("finetuned", data_amount=10, num_shots=5)
        with pytest.raises(ValidationError):
            Condition("finetuned")
