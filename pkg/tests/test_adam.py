"""Optimizer tests against a frozen scalar reference implementation."""

import numpy as np
import pytest

from sewergrade.errors import ShapeError
from sewergrade.nn.adam import Adam, AdamState, adam_step


def reference_adam(grads, lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8, x0=0.0):
    """Independent scalar Adam; the canonical textbook recurrence."""
    x, m, v = x0, 0.0, 0.0
    trajectory = []
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        x = x - lr * m_hat / (np.sqrt(v_hat) + eps)
        trajectory.append(x)
    return trajectory


class TestAdamStep:
    def test_first_step_moves_by_about_lr(self):
        """With fresh moments, bias correction makes the first update
        ~lr in magnitude regardless of gradient scale."""
        param = np.array([1.0, 1.0, 1.0])
        grad = np.array([10.0, 0.5, -3.0])
        state = AdamState.for_param(param, lr=0.01)
        adam_step(param, grad, state)
        moved = 1.0 - param
        assert np.allclose(np.abs(moved), 0.01, rtol=1e-6)
        assert np.all(np.sign(moved) == np.sign(grad))

    def test_zero_gradient_keeps_param_but_advances_t(self):
        param = np.array([2.0])
        state = AdamState.for_param(param, lr=0.5)
        adam_step(param, np.zeros(1), state)
        assert param[0] == 2.0
        assert state.t == 1

    def test_matches_scalar_reference_trajectory(self, rng):
        grads = rng.standard_normal(50)
        param = np.array([0.7])
        state = AdamState.for_param(param, lr=0.05)
        mine = []
        for g in grads:
            adam_step(param, np.array([g]), state)
            mine.append(param[0])
        theirs = reference_adam(grads, lr=0.05, x0=0.7)
        assert np.allclose(mine, theirs, rtol=1e-12, atol=1e-12)

    def test_quadratic_descent_converges(self):
        """Minimizing f(x) = x^2 from x=1, lr=0.1 over 100 steps.

        Derived from the scalar reference: |x| falls monotonically for the
        first ~10 steps, momentum then overshoots zero, and the oscillation
        envelope decays until x sits within 0.01 of the minimum.
        """
        param = np.array([1.0])
        state = AdamState.for_param(param, lr=0.1)
        history = [1.0]
        for _ in range(100):
            grad = 2.0 * param
            adam_step(param, grad.copy(), state)
            history.append(abs(param[0]))
        approach = history[:11]
        assert all(b < a for a, b in zip(approach, approach[1:]))
        envelope = [max(history[i : i + 25]) for i in range(1, 101, 25)]
        assert all(b < a for a, b in zip(envelope, envelope[1:]))
        assert history[-1] < 0.01

    def test_shape_mismatch_rejected(self):
        param = np.zeros(3)
        state = AdamState.for_param(param)
        with pytest.raises(ShapeError):
            adam_step(param, np.zeros(4), state)

    def test_bad_hyperparameters_rejected(self):
        with pytest.raises(ValueError):
            AdamState.for_param(np.zeros(2), lr=0.0)
        with pytest.raises(ValueError):
            AdamState.for_param(np.zeros(2), beta1=1.0)

    def test_same_seed_same_trajectory(self):
        """Two independently seeded runs over identical gradients agree
        bit for bit."""

        def run():
            rng = np.random.default_rng(42)
            param = np.zeros(10)
            state = AdamState.for_param(param, lr=0.01)
            for _ in range(20):
                adam_step(param, rng.standard_normal(10), state)
            return param

        assert np.array_equal(run(), run())


class TestAdamGroup:
    def test_steps_every_param(self, rng):
        params = {"a": np.ones(3), "b": np.ones((2, 2))}
        opt = Adam(params, lr=0.01)
        opt.step({"a": np.ones(3), "b": np.ones((2, 2))})
        assert np.allclose(params["a"], 1.0 - 0.01, rtol=1e-6)
        assert np.allclose(params["b"], 1.0 - 0.01, rtol=1e-6)
        assert opt.states["a"].t == 1

    def test_missing_grad_rejected(self):
        opt = Adam({"a": np.ones(3)})
        with pytest.raises(ShapeError):
            opt.step({})
