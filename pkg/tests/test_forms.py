import math

import pytest

from emergelaw import (
    EmergenceLawParams,
    ReluParams,
    ScalingLawParams,
    ValidationError,
    eval_elbow,
    eval_full_model,
    eval_relu,
    eval_scaling_law,
    invert_scaling_law,
)


class TestRelu:
    def test_flat_region(self):
        assert eval_relu(ReluParams(1.0, 0.0, 2.0), 2.5) == 0.0

    def test_linear_region(self):
        assert eval_relu(ReluParams(1.0, 0.0, 2.0), 1.5) == pytest.approx(0.5)

    def test_elbow_equals_floor(self):
        assert eval_relu(ReluParams(0.5, 0.25, 2.0), 2.0) == pytest.approx(0.25)

    def test_invariants_rejected(self):
        with pytest.raises(ValidationError):
            ReluParams(-0.1, 0.0, 2.0)
        with pytest.raises(ValidationError):
            ReluParams(1.0, 0.0, 0.0)


class TestElbow:
    def test_closed_form_at_log_two(self):
        p = EmergenceLawParams(1.0, 0.0, 0.0, 0.5, 2.0, 1.8)
        assert eval_elbow(p, math.e**2) == pytest.approx(3.8, rel=1e-12)

    def test_one_example_gives_offset(self):
        p = EmergenceLawParams(1.0, 0.0, 0.0, 0.7, 3.0, 1.23)
        assert eval_elbow(p, 1) == pytest.approx(1.23)

    def test_zero_coef_flat(self):
        p = EmergenceLawParams(1.0, 0.0, 0.0, 0.0, 3.0, 2.1)
        assert eval_elbow(p, 10**6) == pytest.approx(2.1)

    def test_power_form(self):
        p = EmergenceLawParams(1.0, 0.0, 0.0, 0.001, 1.0, 0.5, form="power")
        assert eval_elbow(p, 100) == pytest.approx(0.6)

    def test_d_below_one_rejected(self):
        p = EmergenceLawParams(1.0, 0.0, 0.0, 0.5, 2.0, 1.8)
        with pytest.raises(ValidationError):
            eval_elbow(p, 0.5)

    def test_power_form_exponent_bounds(self):
        with pytest.raises(ValidationError):
            EmergenceLawParams(1.0, 0.0, 0.0, 0.5, 2.5, 1.0, form="power")
        with pytest.raises(ValidationError):
            EmergenceLawParams(1.0, 0.0, 0.0, 0.5, 0.5, 1.0)  # log form needs >= 1

    def test_no_fewshot_fixes_shift(self):
        with pytest.raises(ValidationError):
            EmergenceLawParams(1.0, 0.0, 0.05, 0.5, 2.0, 1.8, form="no_fewshot")


class TestFullModel:
    P = EmergenceLawParams(slope=0.5, floor=0.25, finetune_shift=0.05, data_coef=0.0, data_power=1.0, elbow_base=2.0)

    def test_linear_with_shift(self):
        assert eval_full_model(self.P, 1.5, 100, True) == pytest.approx(0.55)

    def test_flat_no_shift(self):
        assert eval_full_model(self.P, 3.0, 100, False) == pytest.approx(0.25)

    def test_flat_with_shift(self):
        assert eval_full_model(self.P, 3.0, 100, True) == pytest.approx(0.30)


class TestScalingLaw:
    P = ScalingLawParams(amplitude=2.0, exponent=0.6, irreducible=1.2)

    def test_example(self):
        assert eval_scaling_law(self.P, 32) == pytest.approx(1.45)

    def test_limit_is_irreducible(self):
        assert eval_scaling_law(self.P, 1e12) == pytest.approx(1.2, abs=1e-6)

    def test_simple_power(self):
        assert eval_scaling_law(ScalingLawParams(1.0, 1.0, 0.0), 4) == pytest.approx(0.25)

    def test_invert_example(self):
        assert invert_scaling_law(self.P, 1.45) == pytest.approx(32.0, rel=1e-10)

    def test_invert_round_trip(self):
        loss = eval_scaling_law(self.P, 70.0)
        assert invert_scaling_law(self.P, loss) == pytest.approx(70.0, rel=1e-10)

    def test_invert_beyond_irreducible(self):
        with pytest.raises(ValidationError, match="irreducible"):
            invert_scaling_law(self.P, 1.1)

    def test_param_invariants(self):
        with pytest.raises(ValidationError):
            ScalingLawParams(0.0, 0.6, 1.2)
        with pytest.raises(ValidationError):
            ScalingLawParams(2.0, -0.1, 1.2)
