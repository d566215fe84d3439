import numpy as np
import pytest

from glucose_mbrl.errors import NotFittedError
from glucose_mbrl.esn import (
    EsnEnsemble,
    EsnHyper,
    EsnState,
    Normalizer,
    TrainingBuffer,
    features,
    fit_readout,
    init_esn,
    member_seeds,
    readout,
    rollout,
    spectral_radius,
    update_state,
)


def drive(weights, inputs, leak_rate, state=None):
    """Run a reservoir over inputs, returning (feature rows, final state)."""
    state = state or EsnState.zeros(weights.w.shape[0])
    rows = []
    for u in inputs:
        state = update_state(state, weights, u, leak_rate)
        rows.append(features(state, u))
    return np.array(rows), state


def filled_buffer(rows, targets, capacity=100_000):
    buffer = TrainingBuffer(rows.shape[1], targets.shape[1], capacity=capacity)
    for row, target in zip(rows, targets):
        buffer.append(row, target)
    return buffer


@pytest.mark.parametrize("size, connectivity", [(20, 0.3), (200, 0.1), (300, 0.05)])
def test_reservoir_spectral_radius(size, connectivity):
    hyper = EsnHyper(reservoir_size=size, connectivity=connectivity, spectral_radius=0.95)
    weights = init_esn(hyper, np.random.default_rng(0))
    assert np.max(np.abs(np.linalg.eigvals(weights.w))) == pytest.approx(0.95, abs=1e-6)
    assert spectral_radius(weights.w) == pytest.approx(0.95, abs=1e-6)


def test_same_seed_gives_identical_large_reservoir():
    hyper = EsnHyper(reservoir_size=400, connectivity=0.05, spectral_radius=0.95)
    first = init_esn(hyper, 42)
    second = init_esn(hyper, 42)
    np.testing.assert_array_equal(first.w, second.w)
    np.testing.assert_array_equal(first.w_in, second.w_in)
    assert spectral_radius(first.w) == pytest.approx(0.95, abs=1e-6)


def test_arnoldi_radius_is_exact_and_repeatable():
    weights = init_esn(EsnHyper(reservoir_size=50, connectivity=0.3, spectral_radius=0.9), 3)
    dense = np.max(np.abs(np.linalg.eigvals(weights.w)))
    first = spectral_radius(weights.w, dense_limit=0)
    assert first == pytest.approx(dense, abs=1e-6)
    assert spectral_radius(weights.w, dense_limit=0) == first


def test_reservoir_connectivity_and_input_scale():
    hyper = EsnHyper(reservoir_size=200, connectivity=0.1, input_scale=0.5)
    weights = init_esn(hyper, np.random.default_rng(1))
    assert np.count_nonzero(weights.w) / weights.w.size == pytest.approx(0.1, abs=0.02)
    assert weights.w_in.shape == (200, 2)
    assert np.all(np.abs(weights.w_in) <= 0.5)


def test_reservoir_is_read_only():
    weights = init_esn(EsnHyper(reservoir_size=10, connectivity=0.5), 0)
    with pytest.raises(ValueError):
        weights.w[0, 0] = 1.0


def test_hyper_rejects_reservoir_smaller_than_input():
    with pytest.raises(ValueError):
        EsnHyper(reservoir_size=1, input_dim=2)


def test_echo_state_contraction(rng):
    hyper = EsnHyper(reservoir_size=100, spectral_radius=0.95, leak_rate=1.0)
    weights = init_esn(hyper, rng)
    inputs = rng.uniform(-1, 1, size=(500, 2))
    _, a = drive(weights, inputs, 1.0, EsnState(x=rng.uniform(-1, 1, 100)))
    _, b = drive(weights, inputs, 1.0, EsnState(x=rng.uniform(-1, 1, 100)))
    assert np.max(np.abs(a.x - b.x)) < 1e-6


def test_update_state_rejects_non_finite_input():
    weights = init_esn(EsnHyper(reservoir_size=10, connectivity=0.5), 0)
    with pytest.raises(ValueError):
        update_state(EsnState.zeros(10), weights, [np.nan, 0.0], 0.3)


def test_fit_matches_pseudo_inverse_oracle(rng):
    hyper = EsnHyper(reservoir_size=8, connectivity=0.5)
    ridge = 1e-2
    for seed in range(5):
        weights = init_esn(hyper, seed)
        rows, _ = drive(weights, rng.uniform(-1, 1, size=(60, 2)), hyper.leak_rate)
        targets = rng.normal(size=(60, 1))
        fit = fit_readout(filled_buffer(rows, targets), ridge)
        augmented = np.vstack([rows, np.sqrt(ridge) * np.eye(rows.shape[1])])
        padded = np.vstack([targets, np.zeros((rows.shape[1], 1))])
        oracle = (np.linalg.pinv(augmented) @ padded).T
        np.testing.assert_allclose(fit.w_out, oracle, atol=1e-6)
        assert fit.refitted


def test_fit_recovers_known_readout(rng):
    rows = rng.normal(size=(400, 12))
    w_true = rng.normal(size=(1, 12))
    fit = fit_readout(filled_buffer(rows, rows @ w_true.T), ridge=0.0)
    np.testing.assert_allclose(fit.w_out, w_true, atol=1e-8)


def test_large_ridge_shrinks_readout_to_zero(rng):
    rows = rng.normal(size=(100, 6))
    fit = fit_readout(filled_buffer(rows, rng.normal(size=(100, 1))), ridge=1e12)
    assert np.max(np.abs(fit.w_out)) < 1e-8


def test_too_few_rows_keeps_previous_readout(rng):
    previous = np.ones((1, 6))
    fit = fit_readout(filled_buffer(rng.normal(size=(3, 6)), rng.normal(size=(3, 1))), 1e-6, previous)
    assert fit.w_out is previous
    assert not fit.refitted


def test_singular_system_raises():
    rows = np.zeros((20, 4))
    with pytest.raises(ValueError, match="ridge"):
        fit_readout(filled_buffer(rows, np.ones((20, 1))), ridge=0.0)


def test_buffer_eviction_keeps_accumulators_in_sync(rng):
    rows = rng.normal(size=(50, 5))
    targets = rng.normal(size=(50, 1))
    buffer = filled_buffer(rows, targets, capacity=20)
    assert len(buffer) == 20
    np.testing.assert_allclose(buffer.features, rows[-20:])
    np.testing.assert_allclose(buffer.gram, rows[-20:].T @ rows[-20:], atol=1e-9)
    np.testing.assert_allclose(buffer.cross, rows[-20:].T @ targets[-20:], atol=1e-9)


def test_buffer_washout_skips_episode_start():
    buffer = TrainingBuffer(3, washout=2)
    appended = [buffer.append(np.ones(3), [1.0]) for _ in range(4)]
    buffer.start_episode()
    appended.append(buffer.append(np.ones(3), [1.0]))
    assert appended == [False, False, True, True, False]
    assert len(buffer) == 2


def test_held_out_error_shrinks_with_more_data(rng):
    hyper = EsnHyper(reservoir_size=20, connectivity=0.3)
    weights = init_esn(hyper, 3)
    rows, _ = drive(weights, rng.uniform(-1, 1, size=(6000, 2)), hyper.leak_rate)
    w_true = rng.normal(size=(1, rows.shape[1]))
    targets = rows @ w_true.T + rng.normal(scale=0.1, size=(len(rows), 1))
    train, test = slice(0, 4000), slice(4000, None)
    errors = []
    for prefix in (60, 480, 3840):
        fit = fit_readout(filled_buffer(rows[train][:prefix], targets[train][:prefix]), 1e-6)
        errors.append(np.sqrt(np.mean((rows[test] @ fit.w_out.T - targets[test]) ** 2)))
    assert errors[0] >= errors[1] >= errors[2]


def test_readout_requires_fit():
    with pytest.raises(NotFittedError):
        readout(EsnState.zeros(4), [0.0, 0.0], None)


def test_rollout_does_not_touch_state(rng):
    hyper = EsnHyper(reservoir_size=10, connectivity=0.5)
    weights = init_esn(hyper, 0).with_readout(rng.normal(size=(1, 12)) * 0.1)
    state = EsnState(x=rng.uniform(-0.5, 0.5, 10))
    before = state.x.copy()
    first = rollout(weights, state, np.ones(8), np.zeros(8), hyper.leak_rate, Normalizer.for_basal(0.1))
    again = rollout(weights, state, np.ones(8), np.zeros(8), hyper.leak_rate, Normalizer.for_basal(0.1))
    np.testing.assert_array_equal(state.x, before)
    np.testing.assert_array_equal(first, again)
    assert np.all((first >= 1) & (first <= 1000))


def test_rollout_requires_fit():
    weights = init_esn(EsnHyper(reservoir_size=10, connectivity=0.5), 0)
    with pytest.raises(NotFittedError):
        rollout(weights, EsnState.zeros(10), np.ones(3), np.zeros(3), 0.3)


def trained_ensemble(hyper, rng, size=3, episodes=2):
    """An ensemble fitted on a synthetic glucose-like response."""
    ensemble = EsnEnsemble.create(hyper, size=size, seed=7, normalizer=Normalizer.for_basal(0.1))
    for _ in range(episodes):
        ensemble.start_episode()
        bg = 120.0
        for step in range(288):
            bolus = float(rng.choice([0.0, 0.5, 1.0]))
            carbs = float(rng.choice([0.0, 0.0, 0.0, 50.0]))
            ensemble.record_target(bg)
            ensemble.advance(bolus, carbs)
            bg = 0.9 * bg + 12.0 + 0.4 * carbs - 8.0 * bolus
        ensemble.record_target(bg)
        ensemble.fit()
    return ensemble


def test_member_seeds_are_distinct():
    seeds = member_seeds(11, 5)
    assert len(set(seeds)) == 5
    assert seeds == member_seeds(11, 5)


def test_ensemble_unfitted_rollout_raises(small_hyper):
    ensemble = EsnEnsemble.create(small_hyper, size=2)
    assert not ensemble.is_fitted
    with pytest.raises(NotFittedError):
        ensemble.rollout(np.zeros(4), np.zeros(4))


def test_batch_rollout_matches_member_rollout(small_hyper, rng):
    ensemble = trained_ensemble(small_hyper, rng)
    ensemble.advance(0.5, 30.0)
    actions = np.zeros((4, 12))
    actions[:, 0] = [0.0, 0.5, 1.0, 2.0]
    carbs = np.zeros(12)
    batch = ensemble.rollout_batch(actions, carbs)
    assert batch.shape == (4, 3, 12)
    for index, member in enumerate(ensemble.members):
        for s in range(4):
            expected = rollout(member, ensemble.member_state(index), actions[s], carbs, small_hyper.leak_rate, ensemble.normalizer)
            np.testing.assert_allclose(batch[s, index], expected, rtol=1e-10, atol=1e-9)


def test_batch_rollout_leaves_live_state(small_hyper, rng):
    ensemble = trained_ensemble(small_hyper, rng)
    before = ensemble.states
    ensemble.rollout_batch(np.ones((6, 5)), np.zeros(5))
    np.testing.assert_array_equal(ensemble.states, before)


def test_members_disagree(small_hyper, rng):
    ensemble = trained_ensemble(small_hyper, rng)
    preds = ensemble.rollout(np.r_[1.0, np.zeros(23)], np.zeros(24))
    assert preds.shape == (3, 24)
    assert np.max(preds.std(axis=0)) > 0


def test_members_hold_different_states_for_the_same_history(small_hyper, rng):
    ensemble = trained_ensemble(small_hyper, rng, size=5)
    states = ensemble.states
    for i in range(5):
        for j in range(i + 1, 5):
            assert not np.allclose(states[i], states[j])


def test_spread_grows_outside_the_training_regime(small_hyper, rng):
    ensemble = trained_ensemble(small_hyper, rng, size=5, episodes=3)
    ensemble.start_episode()
    for _ in range(12):
        ensemble.advance(0.0, 0.0)
    familiar = ensemble.rollout(np.zeros(24), np.zeros(24))
    unfamiliar = ensemble.rollout(np.r_[8.0, np.zeros(23)], np.r_[300.0, np.zeros(23)])
    assert unfamiliar.std(axis=0).mean() > familiar.std(axis=0).mean()


def test_ensemble_learns_the_response(small_hyper, rng):
    ensemble = trained_ensemble(small_hyper, rng, episodes=3)
    ensemble.start_episode()
    bg = 120.0
    for _ in range(48):
        ensemble.record_target(bg)
        ensemble.advance(0.0, 0.0)
        bg = 0.9 * bg + 12.0
    preds = ensemble.rollout(np.zeros(12), np.zeros(12))
    assert np.all(np.abs(preds.mean(axis=0) - 120.0) < 15.0)


def test_save_and_load(small_hyper, rng, tmp_path):
    ensemble = trained_ensemble(small_hyper, rng)
    path = tmp_path / "ensemble.yaml"
    ensemble.save(path)
    loaded = EsnEnsemble.load(path)
    assert loaded.seeds == ensemble.seeds
    ensemble.start_episode()
    actions = np.ones((2, 6))
    np.testing.assert_allclose(loaded.rollout_batch(actions, np.zeros(6)), ensemble.rollout_batch(actions, np.zeros(6)))
    for original, copy in zip(ensemble.members, loaded.members):
        np.testing.assert_array_equal(original.w, copy.w)
        np.testing.assert_allclose(original.w_out, copy.w_out)
