"""Property suites for the documented invariants: monotonicity, continuity,
scale invariance, round trips, and deterministic replay."""

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emergelaw import (
    Condition,
    EmergenceLawParams,
    ExtrapolationConfig,
    Observation,
    ReluParams,
    ScalingLawParams,
    eval_elbow,
    eval_full_model,
    eval_relu,
    eval_scaling_law,
    fit_emergence_law,
    invert_scaling_law,
    load_observations,
    save_observations,
    summarize,
    weighted_mse,
)

from conftest import UNIT_D0

finite = st.floats(allow_nan=False, allow_infinity=False)
losses = st.floats(min_value=0.01, max_value=10.0)
relu_params = st.builds(
    ReluParams,
    slope=st.floats(min_value=0.0, max_value=5.0),
    floor=st.floats(min_value=-1.0, max_value=1.0),
    elbow=st.floats(min_value=0.1, max_value=8.0),
)
law_params = st.builds(
    EmergenceLawParams,
    slope=st.floats(min_value=0.0, max_value=4.0),
    floor=st.floats(min_value=-1.0, max_value=1.0),
    finetune_shift=st.floats(min_value=-0.2, max_value=0.3),
    data_coef=st.floats(min_value=0.0, max_value=1.0),
    data_power=st.floats(min_value=1.0, max_value=6.0),
    elbow_base=st.floats(min_value=-2.0, max_value=5.0),
)
scaling_params = st.builds(
    ScalingLawParams,
    amplitude=st.floats(min_value=0.05, max_value=5.0),
    exponent=st.floats(min_value=0.05, max_value=1.0),
    irreducible=st.floats(min_value=0.0, max_value=2.0),
)


class TestReluProperties:
    @given(relu_params, losses, losses)
    def test_nonincreasing_in_loss(self, p, a, b):
        lo, hi = min(a, b), max(a, b)
        assert eval_relu(p, lo) >= eval_relu(p, hi)

    @given(relu_params, losses)
    def test_flat_at_floor_beyond_elbow(self, p, loss):
        assert eval_relu(p, p.elbow + loss) == p.floor

    @given(relu_params, losses, st.floats(min_value=1e-6, max_value=0.1))
    def test_lipschitz_continuity(self, p, loss, delta):
        # |f(x) - f(x+d)| <= slope * d everywhere, including across the kink
        assert abs(eval_relu(p, loss) - eval_relu(p, loss + delta)) <= p.slope * delta + 1e-12


class TestElbowProperties:
    @given(law_params, st.integers(min_value=1, max_value=10**6), st.integers(min_value=1, max_value=10**6))
    def test_elbow_nondecreasing_in_data(self, p, a, b):
        lo, hi = min(a, b), max(a, b)
        assert eval_elbow(p, lo) <= eval_elbow(p, hi) + 1e-12

    @given(law_params, losses, st.integers(min_value=1, max_value=10**5), st.integers(min_value=1, max_value=10**5),
           st.booleans())
    def test_full_model_nondecreasing_in_data(self, p, loss, a, b, finetuned):
        lo, hi = min(a, b), max(a, b)
        assert eval_full_model(p, loss, lo, finetuned) <= eval_full_model(p, loss, hi, finetuned) + 1e-12

    @given(law_params, losses, st.integers(min_value=1, max_value=10**4))
    def test_zero_shift_removes_finetune_term(self, p, loss, d):
        p0 = dataclasses.replace(p, finetune_shift=0.0)
        assert eval_full_model(p0, loss, d, True) == eval_full_model(p0, loss, d, False)

    @given(law_params, losses)
    def test_zero_coef_reduces_to_relu(self, p, loss):
        p0 = dataclasses.replace(p, data_coef=0.0, elbow_base=max(p.elbow_base, 0.5))
        relu = ReluParams(slope=p0.slope, floor=p0.floor, elbow=p0.elbow_base)
        assert eval_full_model(p0, loss, 123, False) == pytest.approx(eval_relu(relu, loss), abs=1e-12)


class TestScalingProperties:
    @given(scaling_params, st.floats(min_value=0.1, max_value=1e4))
    def test_round_trip(self, p, n_b):
        loss = eval_scaling_law(p, n_b)
        assert invert_scaling_law(p, loss) == pytest.approx(n_b, rel=1e-10)

    @given(scaling_params, st.floats(min_value=1e-3, max_value=3.0), st.floats(min_value=1e-3, max_value=3.0))
    def test_inversion_strictly_decreasing(self, p, da, db):
        lo = p.irreducible + min(da, db)
        hi = p.irreducible + max(da, db)
        if lo < hi:
            assert invert_scaling_law(p, lo) > invert_scaling_law(p, hi)


class TestWeightedMseProperties:
    @given(st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.01, 10)), min_size=1, max_size=20),
           st.floats(min_value=0.01, max_value=100))
    def test_weight_scale_invariance(self, rows, scale):
        preds, targets, weights = zip(*rows)
        a = weighted_mse(preds, targets, weights)
        b = weighted_mse(preds, targets, [w * scale for w in weights])
        assert a == pytest.approx(b, rel=1e-9, abs=1e-12)

    @given(st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.01, 10)), min_size=2, max_size=12))
    def test_duplication_with_split_weights(self, rows):
        preds, targets, weights = map(list, zip(*rows))
        whole = weighted_mse(preds, targets, weights)
        split = weighted_mse(
            preds + [preds[0]], targets + [targets[0]], [weights[0] / 2] + weights[1:] + [weights[0] / 2]
        )
        assert split == pytest.approx(whole, rel=1e-9, abs=1e-12)


class TestSummarizeProperties:
    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=200))
    def test_percentiles_nondecreasing(self, samples):
        summary = summarize(samples)
        ranks = sorted(summary.percentiles)
        values = [summary.percentiles[r] for r in ranks]
        assert values == sorted(values)

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=200, unique=True))
    def test_cdf_bounds_at_median(self, samples):
        # distinct samples: ties at the median would make the EDF jump past the bound
        summary = summarize(samples)
        n = len(samples)
        assert 0.5 - 1 / n <= summary.cdf(summary.percentiles[50]) <= 0.5 + 1 / n


class TestObservationRoundTrip:
    conditions = st.one_of(
        st.builds(
            Condition,
            kind=st.just("finetuned"),
            data_amount=st.integers(min_value=1, max_value=10**6),
            num_shots=st.none(),
            subset_seed=st.one_of(st.none(), st.integers(min_value=0, max_value=5)),
        ),
        st.builds(
            Condition,
            kind=st.just("few_shot"),
            data_amount=st.none(),
            num_shots=st.integers(min_value=1, max_value=64),
        ),
    )
    observations = st.builds(
        Observation,
        model_id=st.text(st.characters(categories=("Ll", "Nd")), min_size=1, max_size=8),
        loss=st.floats(min_value=1e-3, max_value=20),
        loss_basis=st.just("pretrain"),
        condition=conditions,
        performance=st.floats(min_value=-1, max_value=1),
        task=st.just("prop"),
        params_b=st.one_of(st.none(), st.floats(min_value=0.1, max_value=100)),
        tokens_b=st.one_of(st.none(), st.floats(min_value=0.1, max_value=5000)),
        flops=st.one_of(st.none(), st.floats(min_value=1e18, max_value=1e25)),
    )

    @settings(max_examples=50)
    @given(st.lists(observations, min_size=1, max_size=12))
    def test_save_load_identity(self, tmp_path_factory, batch):
        path = tmp_path_factory.mktemp("roundtrip") / "obs.jsonl"
        save_observations(batch, path)
        assert load_observations(path) == batch


class TestFitInvariances:
    def _fit(self, observations, small_grid, weights=None):
        return fit_emergence_law(
            observations, grid=small_grid, extrap=ExtrapolationConfig(UNIT_D0), weights=weights
        )

    def test_observation_order_invariance(self, unit_observations, small_grid):
        fit_a, pred_a = self._fit(unit_observations, small_grid)
        shuffled = list(unit_observations)
        np.random.default_rng(0).shuffle(shuffled)
        fit_b, pred_b = self._fit(shuffled, small_grid)
        assert pred_a.e_hat == pred_b.e_hat
        assert fit_a.params == fit_b.params

    def test_weight_scale_invariance(self, unit_observations, small_grid):
        n = len(unit_observations)
        base = np.linspace(0.5, 2.0, n)
        fit_a, pred_a = self._fit(unit_observations, small_grid, weights=base)
        fit_b, pred_b = self._fit(unit_observations, small_grid, weights=base * 7.3)
        assert pred_a.e_hat == pytest.approx(pred_b.e_hat, abs=1e-9)
        assert fit_a.objective_value == pytest.approx(fit_b.objective_value, rel=1e-9, abs=1e-15)

    def test_duplication_with_split_weights(self, unit_observations, small_grid):
        n = len(unit_observations)
        ones = np.ones(n)
        fit_a, pred_a = self._fit(unit_observations, small_grid, weights=ones)
        doubled = list(unit_observations) + [unit_observations[0]]
        weights = np.concatenate([[0.5], ones[1:], [0.5]])
        fit_b, pred_b = self._fit(doubled, small_grid, weights=weights)
        assert pred_a.e_hat == pytest.approx(pred_b.e_hat, abs=1e-9)

    def test_fit_workers_replay(self, unit_observations, small_grid):
        fit_a, pred_a = fit_emergence_law(unit_observations, grid=small_grid, workers=1)
        fit_b, pred_b = fit_emergence_law(unit_observations, grid=small_grid, workers=2)
        assert fit_a == fit_b
        assert pred_a == pred_b
