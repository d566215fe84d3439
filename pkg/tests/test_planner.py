import logging

import numpy as np
import pytest

from glucose_mbrl.errors import NotFittedError
from glucose_mbrl.planner import (
    DEFAULT_MULTIPLIERS,
    UncertaintyMode,
    act,
    build_action_table,
    plan,
    select_sequence,
    sequence_costs,
)
from glucose_mbrl.risk import risk_margin_profile


class StubForecaster:
    """Predicts glucose falling with the first bolus: bg = start - drop * bolus, plus fixed member offsets."""

    def __init__(self, start=200.0, drop=40.0, offsets=(0.0,), fitted=True):
        self.start = start
        self.drop = drop
        self.offsets = np.asarray(offsets, dtype=float)
        self.is_fitted = fitted
        self.calls = []

    def rollout_batch(self, actions, assumed_carbs):
        self.calls.append((np.array(actions), np.array(assumed_carbs)))
        actions = np.atleast_2d(actions)
        level = self.start - self.drop * actions[:, :1] + 0.5 * assumed_carbs.sum()
        trajectory = np.repeat(level, actions.shape[1], axis=1)
        return trajectory[:, None, :] + self.offsets[None, :, None]


def test_action_table():
    table = build_action_table(0.2)
    np.testing.assert_allclose(table.first_boluses, [0, 1, 2, 4, 8, 16])
    assert table.sequences.shape == (6, 48)
    assert np.all(table.sequences[:, 1:] == 0)
    assert table.multipliers == DEFAULT_MULTIPLIERS


@pytest.mark.parametrize("basal", [0.0, -0.1])
def test_action_table_needs_positive_basal(basal):
    with pytest.raises(ValueError):
        build_action_table(basal)


def test_plan_picks_bolus_closest_to_target():
    # 200 - 40 * bolus: bolus 2 (x10 at basal 0.2) lands at 120
    chosen = plan(StubForecaster(), build_action_table(0.2))
    assert chosen.chosen_multiplier == 10
    assert act(chosen) == pytest.approx(2.0)
    assert chosen.per_sequence_costs.shape == (6,)
    assert chosen.prediction_matrix.shape == (1, 48)


def test_plan_with_low_glucose_picks_no_bolus():
    chosen = plan(StubForecaster(start=90.0), build_action_table(0.2))
    assert chosen.chosen_multiplier == 0
    assert chosen.chosen_bolus == 0.0


def test_plan_requires_fitted_ensemble():
    with pytest.raises(NotFittedError):
        plan(StubForecaster(fitted=False), build_action_table(0.2))


def test_current_carbs_enter_first_step_only():
    stub = StubForecaster()
    plan(stub, build_action_table(0.2, horizon=6), carbs_now=45.0)
    _, carbs = stub.calls[0]
    np.testing.assert_array_equal(carbs, [45.0, 0, 0, 0, 0, 0])


def test_ties_go_to_smallest_multiplier():
    assert select_sequence(np.full(6, 3.0)) == 0
    assert select_sequence([5.0, 2.0, 2.0 + 1e-13, 2.0]) == 1
    assert select_sequence([5.0, 2.0 + 1e-9, 2.0]) == 2


def test_argmin_invariant_to_cost_scaling(rng):
    for _ in range(50):
        costs = rng.uniform(0, 50, 6)
        assert select_sequence(costs) == select_sequence(costs * 7.5) == int(np.argmin(costs))


def test_uncertainty_cost_dominates_mean_cost(rng):
    preds = rng.uniform(60, 250, size=(6, 5, 48))
    with_spread = sequence_costs(preds, UncertaintyMode.WITH_UNCERTAINTY)
    on_mean = sequence_costs(preds, UncertaintyMode.WITHOUT_UNCERTAINTY)
    assert np.all(with_spread >= on_mean - 1e-12)


def test_modes_agree_for_degenerate_ensemble():
    stub = StubForecaster(offsets=(0.0, 0.0, 0.0))
    table = build_action_table(0.2)
    a = plan(stub, table, UncertaintyMode.WITH_UNCERTAINTY)
    b = plan(stub, table, "without_uncertainty")
    np.testing.assert_allclose(a.per_sequence_costs, b.per_sequence_costs, atol=1e-12)
    assert a.chosen_index == b.chosen_index
    assert np.all(np.abs(a.risk_margin_profile) < 1e-12)


def test_spread_pushes_planner_away_from_low_glucose():
    # members disagree by +-40 mg/dl; near the hypo side the spread costs more than it does high
    stub = StubForecaster(start=200.0, drop=40.0, offsets=(-40.0, 0.0, 40.0))
    table = build_action_table(0.2)
    with_spread = plan(stub, table, UncertaintyMode.WITH_UNCERTAINTY)
    on_mean = plan(stub, table, UncertaintyMode.WITHOUT_UNCERTAINTY)
    assert with_spread.chosen_multiplier <= on_mean.chosen_multiplier
    assert np.all(with_spread.risk_margin_profile >= 0)


def test_explanation_covers_every_candidate():
    chosen = plan(StubForecaster(offsets=(-5.0, 5.0)), build_action_table(0.2))
    rows = chosen.explanation()
    assert [row["multiplier"] for row in rows] == list(DEFAULT_MULTIPLIERS)
    assert sum(row["chosen"] for row in rows) == 1
    assert rows[0]["mean_bg"] == pytest.approx(200.0)
    assert rows[0]["spread"] == pytest.approx(5.0)


def test_high_glucose_picks_largest_bolus():
    # 300 - 5 * bolus stays far above target even at x80
    chosen = plan(StubForecaster(start=300.0, drop=5.0), build_action_table(0.2))
    assert chosen.chosen_multiplier == 80


def test_planning_is_repeatable():
    stub = StubForecaster(offsets=(-10.0, 0.0, 10.0))
    table = build_action_table(0.2)
    first, second = plan(stub, table), plan(stub, table)
    assert act(first) == act(second)
    np.testing.assert_array_equal(first.per_sequence_costs, second.per_sequence_costs)


def test_mode_cost_gap_is_the_mean_risk_margin():
    stub = StubForecaster(start=100.0, drop=0.0, offsets=(0.0, 25.0))
    table = build_action_table(0.2)
    with_spread = plan(stub, table, UncertaintyMode.WITH_UNCERTAINTY)
    on_mean = plan(stub, table, UncertaintyMode.WITHOUT_UNCERTAINTY)
    gap = with_spread.per_sequence_costs - on_mean.per_sequence_costs
    expected = [risk_margin_profile(with_spread.predictions[s]).mean() for s in range(6)]
    np.testing.assert_allclose(gap, expected, rtol=1e-10, atol=1e-12)


def test_debug_log_lists_every_candidate(caplog):
    with caplog.at_level(logging.DEBUG, logger="glucose_mbrl.planner"):
        plan(StubForecaster(offsets=(-5.0, 5.0)), build_action_table(0.2))
    lines = [r.getMessage() for r in caplog.records if "spread=" in r.getMessage()]
    assert len(lines) == 6
    assert sum(line.endswith(" *") for line in lines) == 1
    assert "mean_bg=200.0" in lines[0]
