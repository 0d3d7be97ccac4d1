import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crchain.federated import (
    LinearTask,
    ModelUpdate,
    ModelWeights,
    WeightStore,
    WmaState,
    local_score,
    mse,
    train_local,
    wma_direct,
    wma_step,
)


def weights(*vals):
    return ModelWeights(np.array(vals, dtype=np.float64))


# ----- weighted moving average: iterated route -----


def test_single_step_by_hand():
    state = WmaState.initial(weights(0.0), n=2)
    nxt = wma_step(state, weights(2.0), 1.0)
    # window (1, 1) -> alpha 0.5 -> 0.5*0 + 0.5*2
    assert nxt.global_weights.values[0] == pytest.approx(1.0)
    assert nxt.round == 1
    assert nxt.window == (1.0, 1.0)


def test_two_steps_by_hand_window_slides():
    state = WmaState.initial(weights(0.0), n=2)
    state = wma_step(state, weights(1.0), 1.0)   # -> 0.5
    state = wma_step(state, weights(2.0), 1.0)   # alpha 0.5 -> 1.25, not 1.5
    assert state.global_weights.values[0] == pytest.approx(1.25)
    assert len(state.window) == 2


def test_unequal_scores_shift_blend():
    state = WmaState.initial(weights(0.0), n=4)
    state = wma_step(state, weights(10.0), 3.0)
    # window (1, 3): alpha 0.75
    assert state.global_weights.values[0] == pytest.approx(7.5)


def test_fixed_point_is_preserved():
    m = weights(1.0, -2.0, 3.0)
    state = WmaState.initial(m, n=3)
    for a in (1.0, 0.5, 2.0, 0.1):
        state = wma_step(state, m, a)
    np.testing.assert_allclose(state.global_weights.values, m.values)


def test_vanishing_score_leaves_global_nearly_unchanged():
    state = WmaState.initial(weights(5.0), n=4)
    state = wma_step(state, weights(1.0), 1.0)
    before = state.global_weights.values.copy()
    after = wma_step(state, weights(100.0), 1e-12)
    assert np.abs(after.global_weights.values - before).max() < 1e-5


def test_step_validates_inputs():
    state = WmaState.initial(weights(0.0, 0.0), n=2)
    with pytest.raises(ValueError):
        wma_step(state, weights(1.0), 1.0)  # dimension mismatch
    with pytest.raises(ValueError):
        wma_step(state, weights(1.0, 1.0), 0.0)  # score must be positive
    with pytest.raises(ValueError):
        WmaState.initial(weights(0.0), n=1)


# ----- weighted moving average: direct route -----


def test_direct_matches_weighted_mean_when_window_covers_history():
    hist = [(weights(0.0), 1.0), (weights(3.0), 2.0), (weights(9.0), 3.0)]
    got = wma_direct(hist, n=4)
    expect = (0 * 1 + 3 * 2 + 9 * 3) / (1 + 2 + 3)
    assert got.values[0] == pytest.approx(expect)


def test_direct_equals_iterated_on_sliding_counterexample():
    hist = [(weights(0.0), 1.0), (weights(1.0), 1.0), (weights(2.0), 1.0)]
    assert wma_direct(hist, n=2).values[0] == pytest.approx(1.25)


def test_direct_rejects_empty_history():
    with pytest.raises(ValueError):
        wma_direct([], n=2)


@given(
    n=st.sampled_from([2, 4, 8]),
    data=st.data(),
)
@settings(max_examples=60, deadline=None)
def test_direct_and_iterated_routes_agree(n, data):
    rng = np.random.default_rng(data.draw(st.integers(0, 2 ** 32 - 1)))
    length = data.draw(st.integers(min_value=1, max_value=50))
    dim = 16
    hist = [
        (ModelWeights(rng.normal(size=dim)), float(rng.uniform(0.05, 1.0)))
        for _ in range(length)
    ]
    state = WmaState.initial(hist[0][0], n=n, a0=hist[0][1])
    for m, a in hist[1:]:
        state = wma_step(state, m, a)
    direct = wma_direct(hist, n=n)
    scale = np.abs(direct.values).max() or 1.0
    err = np.abs(state.global_weights.values - direct.values).max() / scale
    assert err <= 1e-9


# ----- weight serialization and storage -----


def test_weights_bytes_roundtrip():
    m = weights(1.5, -2.25, 0.0, 3.75)
    back = ModelWeights.from_bytes(m.to_bytes())
    np.testing.assert_array_equal(back.values, m.values)


def test_weights_encoding_layout():
    m = weights(1.0)
    raw = m.to_bytes()
    assert raw[:8] == (1).to_bytes(8, "little")
    assert len(raw) == 8 + 8


def test_weights_reject_bad_values():
    with pytest.raises(ValueError):
        ModelWeights(np.array([np.nan]))
    with pytest.raises(ValueError):
        ModelWeights(np.zeros((2, 2)))


def test_store_roundtrip_and_unknown_version():
    store = WeightStore()
    m = weights(1.0, 2.0)
    ver = store.store(m)
    assert ver in store
    np.testing.assert_array_equal(store.fetch(ver).values, m.values)
    with pytest.raises(KeyError):
        store.fetch(b"\x00" * 32)


def test_store_version_is_content_addressed():
    store = WeightStore()
    v1 = store.store(weights(1.0))
    v2 = store.store(weights(1.0))
    v3 = store.store(weights(2.0))
    assert v1 == v2 != v3


def test_store_persists_to_directory(tmp_path):
    store = WeightStore(directory=tmp_path)
    ver = store.store(weights(4.0, 5.0))
    fresh = WeightStore(directory=tmp_path)
    np.testing.assert_array_equal(fresh.fetch(ver).values, weights(4.0, 5.0).values)


def test_update_digest_depends_on_fields():
    ver = b"\x01" * 32
    a = ModelUpdate("m0", ver, 3, 100, 7)
    b = ModelUpdate("m0", ver, 3, 100, 8)
    assert a.digest() != b.digest()
    assert a.digest() == ModelUpdate("m0", ver, 3, 100, 7).digest()


# ----- local training on the synthetic task -----


def test_train_local_descends_and_is_deterministic():
    task = LinearTask(dim=8, task_seed=5)
    start = ModelWeights.zeros(8)
    x, y = task.node_data(dataset_seed=0)
    trained = train_local(start, task, dataset_seed=0, steps=20, lr=0.05)
    again = train_local(start, task, dataset_seed=0, steps=20, lr=0.05)
    assert mse(trained, x, y) < mse(start, x, y) * 0.2
    np.testing.assert_array_equal(trained.values, again.values)


def test_train_local_zero_steps_is_identity():
    task = LinearTask(dim=4)
    start = ModelWeights.zeros(4)
    out = train_local(start, task, dataset_seed=1, steps=0)
    np.testing.assert_array_equal(out.values, start.values)


def test_local_score_rewards_better_models():
    task = LinearTask(dim=8, task_seed=5)
    bad = ModelWeights.zeros(8)
    good = train_local(bad, task, dataset_seed=2, steps=30, lr=0.05)
    s_bad = local_score(bad, task, dataset_seed=3)
    s_good = local_score(good, task, dataset_seed=3)
    assert 0 <= s_bad <= 10000 and 0 <= s_good <= 10000
    assert s_good > s_bad
    assert s_good > 8000
