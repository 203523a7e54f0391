"""Operator-level checks for the reverse-mode engine: closed-form Cholesky
cases, jitter schedule behavior, and finite-difference agreement for every
primitive in the vocabulary."""

import numpy as np
import pytest

from mechgp import autodiff as ad
from mechgp.errors import NotPositiveDefinite, ShapeMismatch
from mechgp.params import ParamStore, grad_check


class TestCholesky:
    def test_identity_zero_jitter(self):
        l, j = ad.cholesky_with_jitter(np.eye(3), (0.0,))
        np.testing.assert_array_equal(l, np.eye(3))
        assert j == 0.0

    def test_closed_form_2x2(self):
        # [[4,2],[2,3]] factors as [[2,0],[1,sqrt(2)]]
        l, j = ad.cholesky_with_jitter(np.array([[4.0, 2.0], [2.0, 3.0]]))
        np.testing.assert_allclose(l, [[2.0, 0.0], [1.0, np.sqrt(2.0)]], atol=1e-15)
        assert j == 0.0

    def test_rank_one_needs_jitter(self):
        m = np.ones((2, 2))
        l, j = ad.cholesky_with_jitter(m, (0.0, 1e-6))
        assert j == 1e-6
        np.testing.assert_allclose(l @ l.T, m + j * np.eye(2), atol=1e-12)

    def test_all_jitters_fail(self):
        m = np.array([[1.0, 0.0], [0.0, -5.0]])
        with pytest.raises(NotPositiveDefinite):
            ad.cholesky_with_jitter(m, (0.0, 1e-8))

    def test_asymmetric_rejected(self):
        m = np.array([[1.0, 0.5], [0.1, 1.0]])
        with pytest.raises(ShapeMismatch):
            ad.cholesky_with_jitter(m)

    def test_random_spd_reconstruction(self):
        # reconstruction error bounded relative to the matrix scale
        rng = np.random.default_rng(0)
        for n in (5, 20, 100):
            a = rng.normal(size=(n, n))
            m = a @ a.T + n * np.eye(n)
            l, j = ad.cholesky_with_jitter(m)
            err = np.abs(l @ l.T - (m + j * np.eye(n))).max()
            assert err <= 1e-8 * np.abs(m).max()


def _fd_check(build, shapes, seed=0, h=1e-6, tol=3e-7, scale=0.5):
    ps = ParamStore()
    rng = np.random.default_rng(seed)
    for name, shape in shapes.items():
        ps.add(name, rng.normal(size=shape) * scale)
    assert grad_check(build, ps, h=h) < tol


class TestPrimitiveGradients:
    def test_arithmetic_broadcasting(self):
        _fd_check(
            lambda p: ad.sum_(ad.div(ad.mul(ad.add(p["a"], p["b"]),
                                            ad.sub(p["a"], 2.0)),
                                     ad.add(ad.square(p["c"]), 1.5))),
            {"a": (3, 4), "b": (4,), "c": (3, 1)})

    def test_elementwise_nonlinear(self):
        _fd_check(
            lambda p: ad.sum_(ad.exp(ad.tanh(p["a"])))
            + ad.sum_(ad.log(ad.add(ad.square(p["a"]), 1.0)))
            + ad.sum_(ad.sqrt(ad.add(ad.square(p["a"]), 0.3)))
            + ad.sum_(ad.relu(p["a"])) + ad.sum_(ad.pow_const(ad.square(p["a"]), 1.5)),
            {"a": (5, 3)})

    def test_matmul_transpose_reshape_concat(self):
        _fd_check(
            lambda p: ad.sum_(ad.square(ad.matmul(
                ad.concat([p["a"], ad.transpose(p["b"])], axis=1),
                ad.reshape(p["c"], (5, 2))))),
            {"a": (4, 3), "b": (2, 4), "c": (10,)})

    def test_reductions_and_gather(self):
        idx = np.array([0, 2, 2, 1])
        _fd_check(
            lambda p: ad.sum_(ad.square(ad.mean_(ad.gather_rows(p["a"], idx), axis=1)))
            + ad.sum_(ad.sum_(p["a"], axis=0, keepdims=True)),
            {"a": (3, 4)})

    def test_conv_and_pool(self):
        _fd_check(
            lambda p: ad.sum_(ad.square(ad.global_avg_pool(
                ad.relu(ad.conv2d(p["x"], p["w"], p["b"]))))),
            {"x": (2, 3, 6, 6), "w": (4, 3, 3, 3), "b": (4,)})

    def test_cholesky_and_solves(self):
        def build(p):
            m = ad.add(ad.matmul(p["a"], ad.transpose(p["a"])),
                       ad.Tensor(np.eye(4) * 3.0))
            l, _ = ad.cholesky(m, (0.0,))
            x = ad.solve_lower(l, p["b"])
            y = ad.solve_lower(l, p["b"], trans=True)
            return ad.sum_(ad.square(x)) + ad.sum_(ad.exp(ad.mul(y, 0.1))) \
                + ad.sum_(ad.log(ad.sqrt(ad.square(l) + 1e-3)))
        _fd_check(build, {"a": (4, 4), "b": (4, 2)})

    def test_packed_lower_triangle(self):
        def build(p):
            l = ad.lower_from_packed(p["v"], 4)
            return ad.sum_(ad.square(ad.matmul(l, ad.transpose(l))))
        _fd_check(build, {"v": (10,)})

    def test_kernel_profiles(self):
        def build(p):
            u = ad.relu(ad.square(p["u"]))
            return ad.sum_(ad.matern52_profile(u)) + ad.sum_(ad.rbf_profile(u))
        _fd_check(build, {"u": (6,)})


class TestProfiles:
    def test_matern_at_zero_distance(self):
        out = ad.matern52_profile(ad.Tensor(np.zeros(3)))
        np.testing.assert_array_equal(out.data, np.ones(3))

    def test_matern_far_field(self):
        # r = 50 => correlation below 1e-15
        u = ad.Tensor(np.array([50.0 ** 2]))
        assert ad.matern52_profile(u).data[0] < 1e-15

    def test_rbf_profile_values(self):
        u = ad.Tensor(np.array([0.0, 2.0]))
        np.testing.assert_allclose(ad.rbf_profile(u).data,
                                   [1.0, np.exp(-1.0)], rtol=1e-15)


def test_no_grad_blocks_taping():
    t = ad.Tensor(np.ones(3), requires_grad=True)
    with ad.no_grad():
        out = ad.sum_(ad.square(t))
    assert out._parents == ()
    out2 = ad.sum_(ad.square(t))
    assert out2._parents != ()


def test_engine_is_deterministic():
    def run():
        rng = np.random.default_rng(42)
        x = ad.Tensor(rng.normal(size=(8, 8)), requires_grad=True)
        m = ad.add(ad.matmul(x, ad.transpose(x)), ad.Tensor(np.eye(8) * 4.0))
        l, _ = ad.cholesky(m)
        out = ad.sum_(ad.square(ad.solve_lower(l, x)))
        ad.backward(out)
        return out.data.copy(), x.grad.copy()

    v1, g1 = run()
    v2, g2 = run()
    assert np.array_equal(v1, v2)
    assert np.array_equal(g1, g2)
