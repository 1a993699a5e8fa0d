import math

import numpy as np
import pytest

from llgs.optim import AdamState, ParamStore, adam_step, exponential_lr, finite_difference_check


def scalar_store(value=0.0, group="g"):
    store = ParamStore()
    store.register("p", np.array([value]), group)
    return store


def test_register_twice_is_rejected():
    store = scalar_store()
    with pytest.raises(ValueError):
        store.register("p", np.zeros(1), "g")


def test_store_copy_is_independent():
    store = scalar_store(1.0)
    clone = store.copy()
    clone["p"][0] = 5.0
    assert store["p"][0] == 1.0
    assert clone.param("p").group == "g"


def test_take_rows_and_coordinates():
    store = ParamStore()
    store.register("rows", np.arange(6.0).reshape(3, 2), "a")
    store.register("bias", np.zeros(4), "b")
    assert len(store.coordinates()) == 10
    store.take_rows(["rows"], np.array([True, False, True]))
    np.testing.assert_array_equal(store["rows"], [[0.0, 1.0], [4.0, 5.0]])
    assert store.grad("rows").shape == (2, 2)
    assert store.groups() == ["a", "b"]


def test_adam_zero_gradient_leaves_parameters():
    store = scalar_store(0.3)
    state = adam_step(store, AdamState(), {"g": 0.1})
    assert store["p"][0] == 0.3
    assert state.step == 1


def test_adam_first_step_has_learning_rate_magnitude():
    store = scalar_store(0.0)
    store.accumulate("p", np.array([1.0]))
    adam_step(store, AdamState(), {"g": 0.1})
    assert store["p"][0] == pytest.approx(-0.1, rel=1e-6)
    assert store.grad("p")[0] == 0.0


def test_adam_rates_scale_updates_per_group():
    store = ParamStore()
    store.register("a", np.zeros(2), "fast")
    store.register("b", np.zeros(2), "slow")
    store.register("c", np.zeros(2), "frozen")
    for name in ("a", "b", "c"):
        store.accumulate(name, np.array([1.0, -2.0]))
    adam_step(store, AdamState(), {"fast": 0.1, "slow": 0.01})
    np.testing.assert_allclose(store["a"], 10.0 * store["b"])
    np.testing.assert_array_equal(store["c"], 0.0)


def test_adam_skips_non_finite_group():
    store = ParamStore()
    store.register("bad", np.ones(2), "broken")
    store.register("good", np.ones(2), "fine")
    store.accumulate("bad", np.array([np.nan, 1.0]))
    store.accumulate("good", np.array([1.0, 1.0]))
    state = adam_step(store, AdamState(), {"broken": 0.1, "fine": 0.1})
    np.testing.assert_array_equal(store["bad"], 1.0)
    assert np.all(store["good"] < 1.0)
    assert state.skipped == {"broken": 1}
    assert not store.grad("bad").any()


def test_adam_minimises_a_quadratic():
    store = scalar_store(3.0)
    state = AdamState()
    for _ in range(2000):
        store.accumulate("p", store["p"] - 1.0)
        adam_step(store, state, {"g": 0.05})
    assert store["p"][0] == pytest.approx(1.0, abs=1e-2)


def test_exponential_lr():
    assert exponential_lr(1e-2, 1e-4, 0, 100) == pytest.approx(1e-2)
    assert exponential_lr(1e-2, 1e-4, 50, 100) == pytest.approx(1e-3)
    assert exponential_lr(1e-2, 1e-4, 100, 100) == pytest.approx(1e-4)
    assert exponential_lr(1e-2, 1e-4, 500, 100) == pytest.approx(1e-4)
    assert exponential_lr(0.0, 1e-4, 10, 100) == 0.0


def quadratic(store):
    p = store["w"]
    store.accumulate("w", p)
    return 0.5 * float(np.sum(p * p))


def test_gradient_check_on_quadratic():
    store = ParamStore()
    rng = np.random.default_rng(0)
    store.register("w", rng.uniform(0.5, 2.0, 20) * rng.choice([-1.0, 1.0], 20), "g")
    report = finite_difference_check(quadratic, store, samples=20)
    assert len(report.accepted) == 20
    assert report.max_relative_error < 1e-9
    assert not store.grad("w").any()


def test_gradient_check_detects_wrong_gradient():
    store = ParamStore()
    store.register("w", np.array([1.0, 2.0]), "g")

    def wrong(s):
        s.accumulate("w", 2.0 * s["w"])
        return 0.5 * float(np.sum(s["w"] ** 2))

    report = finite_difference_check(wrong, store, samples=2)
    assert report.max_relative_error == pytest.approx(1.0, rel=1e-6)
    assert report.worst(1)[0].relative_error == report.max_relative_error


def test_gradient_check_flags_kinks():
    store = ParamStore()
    store.register("x", np.array([0.0, 1.5]), "g")

    def absolute(s):
        s.accumulate("x", np.sign(s["x"]))
        return float(np.sum(np.abs(s["x"])))

    report = finite_difference_check(absolute, store, samples=2)
    assert [(c.index, c.flag) for c in report.flagged] == [(0, "non-differentiable")]
    assert report.max_relative_error < 1e-9


def test_gradient_check_flags_non_finite_points():
    store = ParamStore()
    store.register("x", np.array([5e-5, 1.0]), "g")

    def logarithm(s):
        x = s["x"]
        s.accumulate("x", 1.0 / x)
        if np.any(x <= 0.0):
            return math.inf
        return float(np.sum(np.log(x)))

    report = finite_difference_check(logarithm, store, samples=2)
    assert [(c.index, c.flag) for c in report.flagged] == [(0, "non-finite")]
    assert report.names == ["x"]
    assert report.max_relative_error < 1e-6


def test_late_group_first_step_has_learning_rate_magnitude():
    store = ParamStore()
    store.register("early", np.zeros(1), "early")
    store.register("late", np.zeros(1), "late")
    state = AdamState()
    for _ in range(2000):
        store.accumulate("early", np.array([1.0]))
        adam_step(store, state, {"early": 0.01})
    store.accumulate("late", np.array([1.0]))
    adam_step(store, state, {"early": 0.01, "late": 0.1})
    assert store["late"][0] == pytest.approx(-0.1, rel=1e-6)
    assert state.steps == {"early": 2001, "late": 1}


def test_adam_copy_keeps_step_counts():
    store = scalar_store(0.0)
    state = AdamState()
    store.accumulate("p", np.array([1.0]))
    adam_step(store, state, {"g": 0.1})
    clone = state.copy()
    store.accumulate("p", np.array([1.0]))
    adam_step(store, state, {"g": 0.1})
    assert clone.steps == {"p": 1} and state.steps == {"p": 2}
