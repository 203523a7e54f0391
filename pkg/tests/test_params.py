"""ParamStore, gradient evaluation, the FD checker and Adam."""

import numpy as np
import pytest

from mechgp import autodiff as ad
from mechgp.errors import NonFiniteGradient
from mechgp.params import ParamStore, adam_step, grad, grad_check


class TestGrad:
    def test_square(self):
        ps = ParamStore()
        ps.add("x", 3.0)
        value = grad(lambda p: ad.square(p["x"]), ps)
        assert value == 9.0
        np.testing.assert_allclose(ps["x"].grad, 6.0, rtol=1e-15)

    def test_product_rule(self):
        ps = ParamStore()
        ps.add("x", 2.0)
        ps.add("y", 5.0)
        grad(lambda p: ad.mul(p["x"], p["y"]), ps)
        assert float(ps["x"].grad) == 5.0
        assert float(ps["y"].grad) == 2.0

    def test_untouched_parameter_gets_zero_slot(self):
        ps = ParamStore()
        ps.add("x", 1.0)
        ps.add("unused", np.ones(4))
        grad(lambda p: ad.square(p["x"]), ps)
        np.testing.assert_array_equal(ps["unused"].grad, np.zeros(4))

    def test_non_finite_gradient_raises(self):
        ps = ParamStore()
        ps.add("x", 0.0)
        with pytest.raises(NonFiniteGradient):
            grad(lambda p: ad.log(p["x"]), ps)


class TestGradCheck:
    def test_quadratic_near_exact(self):
        ps = ParamStore()
        ps.add("a", np.array([1.0, -2.0, 0.5]))
        err = grad_check(lambda p: ad.sum_(ad.square(p["a"])), ps, h=1e-6)
        assert err <= 1e-8

    def test_detects_injected_bug(self):
        # custom node whose backward claims d(x^2)/dx = 3x
        def bad_square(t):
            out = ad.Tensor(t.data ** 2)
            out._parents = (t,)
            out.requires_grad = True
            out._backward = lambda g: t.accumulate(g * 3.0 * t.data)
            return out

        ps = ParamStore()
        ps.add("x", np.array([1.5]))
        err = grad_check(lambda p: ad.sum_(bad_square(p["x"])), ps, h=1e-6)
        assert err >= 0.1

    def test_rejects_nonpositive_h(self):
        ps = ParamStore()
        ps.add("x", 1.0)
        with pytest.raises(ValueError):
            grad_check(lambda p: ad.square(p["x"]), ps, h=0.0)


class TestAdam:
    def test_first_step_is_lr(self):
        ps = ParamStore()
        t = ps.add("p", 0.0)
        t.grad = np.array(1.0)
        adam_step(ps, lr=0.01)
        np.testing.assert_allclose(t.data, -0.01, atol=1e-9)
        assert ps.step_count == 1

    def test_zero_gradient_fixed_point(self):
        ps = ParamStore()
        t = ps.add("p", np.array([1.0, -2.0]))
        t.grad = np.zeros(2)
        adam_step(ps, lr=0.1)
        np.testing.assert_array_equal(t.data, [1.0, -2.0])

    def test_second_identical_step_not_larger(self):
        ps = ParamStore()
        t = ps.add("p", 0.0)
        t.grad = np.array(1.0)
        adam_step(ps, lr=0.01)
        first = abs(float(t.data))
        t.grad = np.array(1.0)
        adam_step(ps, lr=0.01)
        second = abs(float(t.data)) - first
        assert second <= first * 1.01

    def test_step_counter_monotone(self):
        ps = ParamStore()
        t = ps.add("p", 0.0)
        for k in range(1, 4):
            t.grad = np.array(0.5)
            adam_step(ps, lr=0.01)
            assert ps.step_count == k

    def test_rejects_bad_lr(self):
        ps = ParamStore()
        ps.add("p", 0.0)
        with pytest.raises(ValueError):
            adam_step(ps, lr=0.0)
