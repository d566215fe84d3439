import numpy as np
import pytest

from glucose_mbrl.mealgen import MealSpec, carbs_per_step, default_specs, hour_to_step, sample_day, sample_truncnorm

DAYS = 40_000


def forced(spec: MealSpec) -> MealSpec:
    return spec.model_copy(update={"probability": 1.0, "time_std": 1e-9})


def test_default_table():
    specs = default_specs()
    assert [s.name for s in specs] == ["breakfast", "snack1", "lunch", "snack2", "dinner", "snack3"]
    assert [s.probability for s in specs] == [0.95, 0.3, 0.95, 0.3, 0.95, 0.3]


def test_forced_meals_land_on_their_mean_times(rng):
    events = sample_day([forced(s) for s in default_specs()], rng)
    assert [e.time_step for e in events] == [12, 42, 72, 108, 144, 186]


@pytest.mark.parametrize("hour, step", [(5.0, 0), (6.0, 0), (7.0, 12), (12.0, 72), (6.04, 0), (6.05, 1), (30.0, 287)])
def test_hour_to_step(hour, step):
    assert hour_to_step(hour) == step


@pytest.mark.parametrize("index", range(6))
def test_occurrence_time_and_carb_statistics(index):
    spec = default_specs()[index]
    rng = np.random.default_rng(100 + index)
    days = [sample_day([spec], rng) for _ in range(DAYS)]
    events = [day[0] for day in days if day]
    assert all(len(day) <= 1 for day in days)
    assert len(events) / DAYS == pytest.approx(spec.probability, abs=0.01)
    assert all(hour_to_step(spec.time_lower) <= e.time_step <= hour_to_step(spec.time_upper) for e in events)
    assert np.mean([e.carbs for e in events]) == pytest.approx(spec.carb_mean, abs=1.0)


def test_carbs_clamped_to_one_gram(rng):
    spec = MealSpec(name="tiny", probability=1.0, time_lower=8, time_upper=9, time_mean=8.5, time_std=0.5, carb_mean=1.0, carb_std=20.0)
    carbs = [sample_day([spec], rng)[0].carbs for _ in range(500)]
    assert min(carbs) == 1.0


def test_same_step_events_are_merged(rng):
    a = MealSpec(name="a", probability=1.0, time_lower=7, time_upper=8, time_mean=7.5, time_std=1e-9, carb_mean=30, carb_std=0)
    b = a.model_copy(update={"name": "b", "carb_mean": 20})
    events = sample_day([a, b], rng)
    assert len(events) == 1
    assert events[0].carbs == pytest.approx(50.0)


def test_carbs_per_step_conserves_grams(rng):
    events = sample_day(default_specs(), rng)
    schedule = carbs_per_step(events)
    assert schedule.shape == (288,)
    assert schedule.sum() == pytest.approx(sum(e.carbs for e in events))


def test_meal_spec_bounds_validated():
    with pytest.raises(ValueError):
        MealSpec(name="bad", probability=0.5, time_lower=10, time_upper=9, time_mean=9.5, time_std=1, carb_mean=10, carb_std=1)


def test_truncnorm_without_mass_raises(rng):
    with pytest.raises(ValueError):
        sample_truncnorm(0.0, 1e-3, 50.0, 51.0, rng)


def test_sampling_is_deterministic():
    first = sample_day(default_specs(), np.random.default_rng(5))
    again = sample_day(default_specs(), np.random.default_rng(5))
    assert first == again


def test_truncnorm_stays_in_bounds_and_keeps_its_mean(rng):
    draws = np.array([sample_truncnorm(7.0, 1.0, 5.0, 9.0, rng) for _ in range(10_000)])
    assert draws.min() >= 5.0
    assert draws.max() <= 9.0
    assert draws.mean() == pytest.approx(7.0, abs=0.05)


def test_truncnorm_with_tiny_std_returns_the_mean(rng):
    assert sample_truncnorm(7.0, 1e-9, 5.0, 9.0, rng) == pytest.approx(7.0)


def test_forced_day_takes_every_meal_at_its_mean_carbs(rng):
    specs = [forced(s).model_copy(update={"carb_std": 0.0}) for s in default_specs()]
    assert [e.carbs for e in sample_day(specs, rng)] == [45.0, 10.0, 70.0, 10.0, 80.0, 10.0]


def test_meal_rows_load_by_column_heading():
    row = {
        "Meal type": "breakfast",
        "Prob.": 0.95,
        "lower": 5,
        "upper": 9,
        "mean": 7,
        "std.": 1,
        "carbs mean": 45,
        "carbs std.": 10,
    }
    assert MealSpec.model_validate(row) == default_specs()[0]
    with pytest.raises(ValueError):
        MealSpec.model_validate({**row, "portion": "large"})
