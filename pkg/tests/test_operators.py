import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hjpdhg.operators import (
    DiagQuadratic,
    apply_D_hopf,
    apply_D_lax,
    apply_Dt_hopf,
    apply_Dt_lax,
    concave_diag_quad_conjugate,
    dense_D,
    diag_quad_conjugate,
    estimate_D_norm,
    shrink1,
    shrink2,
    stretch_quadratic,
)
from oracles import legendre_1d, legendre_batch, prox_1d, prox_1d_batch, prox_2d

finite = st.floats(-5, 5, allow_nan=False)


class TestShrink1:
    def test_branches(self):
        assert shrink1(2.0, 0.5) == 1.5
        assert shrink1(0.3, 0.5) == 0.0
        np.testing.assert_array_equal(shrink1(np.array([-2.0, 0.1]), 0.5), [-1.5, 0.0])

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValueError):
            shrink1(1.0, -0.1)

    @settings(max_examples=40, deadline=None)
    @given(v=finite, lam=st.floats(0.01, 3))
    def test_matches_brute_force(self, v, lam):
        ref = prox_1d(abs, v, lam)
        assert abs(float(shrink1(v, lam)) - ref) <= 1e-6

    @given(v=arrays(float, 5, elements=finite), lam=st.floats(0, 3))
    def test_nonexpansive_towards_zero(self, v, lam):
        out = shrink1(v, lam)
        assert np.all(np.abs(out) <= np.abs(v))
        assert np.all(np.abs(out - v) <= lam + 1e-15)


class TestShrink2:
    def test_zero_and_small(self):
        np.testing.assert_array_equal(shrink2(np.zeros(2), 1.0), [0.0, 0.0])
        np.testing.assert_array_equal(shrink2(np.array([0.3, 0.4]), 1.0), [0.0, 0.0])

    def test_three_four(self):
        # frozen from prox_2d on |x| + |x - v|^2 / 2 at v = (3, 4)
        np.testing.assert_allclose(shrink2(np.array([3.0, 4.0]), 1.0), [2.4, 3.2], atol=1e-12)

    def test_oracle_reproduces_frozen_value(self):
        ref = prox_2d(lambda u: np.sqrt((u * u).sum(-1)), np.array([3.0, 4.0]), 1.0)
        np.testing.assert_allclose(ref, [2.4, 3.2], atol=1e-6)

    def test_per_row_threshold(self):
        v = np.array([[3.0, 4.0], [3.0, 4.0]])
        out = shrink2(v, np.array([1.0, 10.0]))
        np.testing.assert_allclose(out, [[2.4, 3.2], [0.0, 0.0]])

    @settings(max_examples=15, deadline=None)
    @given(v=arrays(float, 2, elements=finite), lam=st.floats(0.05, 2))
    def test_matches_brute_force(self, v, lam):
        ref = prox_2d(lambda u: np.sqrt((u * u).sum(-1)), v, lam)
        np.testing.assert_allclose(shrink2(v, lam), ref, atol=1e-6)


class TestStretch:
    def test_values(self):
        g = DiagQuadratic(0.0, (1.0,))
        assert stretch_quadratic(np.array([0.0]), 0.3, g)[0] == 0.0
        assert stretch_quadratic(np.array([1.0]), 0.5, g)[0] == pytest.approx(2.0, abs=1e-15)

    def test_oracle_reproduces_frozen_value(self):
        assert prox_1d(lambda u: -0.5 * u * u, 1.0, 0.5, half_width=5.0) == pytest.approx(2.0, abs=1e-6)

    def test_singular_boundary(self):
        g = DiagQuadratic(0.0, (1.0, 0.25))
        with pytest.raises(ValueError):
            stretch_quadratic(np.ones(2), 0.25, g)

    @settings(max_examples=30, deadline=None)
    @given(v=finite, a=st.floats(0.2, 5), frac=st.floats(0.05, 0.9))
    def test_matches_brute_force(self, v, a, frac):
        tau = frac * a
        g = DiagQuadratic(0.0, (a,))
        out = float(stretch_quadratic(np.array([v]), tau, g)[0])
        ref = prox_1d(lambda u: -0.5 * u * u / a, v, tau, half_width=10.0 * (abs(v) + 1.0))
        assert abs(out - ref) <= 1e-6 * max(1.0, abs(out))


class TestConjugates:
    def test_identity_values(self):
        c = diag_quad_conjugate(DiagQuadratic(-0.5, (1.0,)))
        assert c.value(np.array([0.0])) == 0.5
        assert c.prox(np.array([0.0]), 7.0)[0] == 0.0
        assert c.prox(np.array([2.0]), 1.0)[0] == 1.0

    def test_legendre_oracle(self):
        assert legendre_1d(lambda x: -0.5 + 0.5 * x * x, 0.0) == pytest.approx(0.5, abs=1e-9)

    @settings(max_examples=20, deadline=None)
    @given(p=st.floats(-3, 3), a=st.floats(0.1, 4), c=st.floats(-1, 1))
    def test_value_matches_legendre(self, p, a, c):
        conj = diag_quad_conjugate(DiagQuadratic(c, (a,)))
        ref = legendre_1d(lambda x: c + 0.5 * x * x / a, p)
        assert float(conj.value(np.array([p]))) == pytest.approx(ref, abs=1e-6)

    @settings(max_examples=20, deadline=None)
    @given(v=finite, a=st.floats(0.1, 4), c=st.floats(-1, 1), sigma=st.floats(0.05, 5))
    def test_prox_matches_brute_force(self, v, a, c, sigma):
        conj = diag_quad_conjugate(DiagQuadratic(c, (a,)))
        numeric_conj = lambda p: legendre_batch(lambda x: c + 0.5 * x * x / a, p)
        ref = prox_1d_batch(numeric_conj, [v], [sigma])[0]
        assert float(conj.prox(np.array([v]), sigma)[0]) == pytest.approx(ref, abs=1e-6)

    def test_concave_conjugate(self):
        hq = DiagQuadratic(0.3, (2.0,))
        cc = concave_diag_quad_conjugate(hq)
        # h = -hq, so h_*(r) = inf_y r y + hq(y); evaluated on a dense grid
        ys = np.linspace(-40, 40, 400001)
        for r in (-1.3, 0.0, 0.7):
            ref = np.min(r * ys + hq(ys[:, None]))
            assert float(cc.value(np.array([r]))) == pytest.approx(ref, abs=1e-6)
            np.testing.assert_allclose(cc.grad(np.array([r])), -2.0 * r)


class TestDifferences:
    def test_lax_values(self):
        x = np.array([[1.0], [3.0], [6.0]])
        np.testing.assert_array_equal(apply_D_lax(x)[:, 0], [0, 2, 3])
        p = np.array([[0.0], [1.0], [1.0]])
        np.testing.assert_array_equal(apply_Dt_lax(p)[:, 0], [-1, 0, 1])

    def test_hopf_values(self):
        np.testing.assert_array_equal(apply_D_hopf(np.array([[1.0], [1.0]]))[:, 0], [0, 1])
        p = np.array([[2.5, -1.0]])
        np.testing.assert_array_equal(apply_D_hopf(p), p)

    @settings(max_examples=30)
    @given(seed=st.integers(0, 2**31), d=st.integers(1, 4))
    def test_adjoint_identity(self, seed, d):
        rng = np.random.default_rng(seed)
        a, b = rng.standard_normal((2, 20, d))
        assert np.sum(apply_D_hopf(a) * b) == pytest.approx(np.sum(a * apply_Dt_hopf(b)), abs=1e-12)
        # lax costates carry p_0 = 0
        b[0] = 0.0
        assert np.sum(apply_D_lax(a) * b) == pytest.approx(np.sum(a * apply_Dt_lax(b)), abs=1e-12)

    @pytest.mark.parametrize("scheme", ["lax", "hopf"])
    def test_dense_matches_apply(self, scheme):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((6, 2))
        D = dense_D(6, 2, scheme)
        f = apply_D_lax if scheme == "lax" else apply_D_hopf
        np.testing.assert_allclose(D @ x.ravel(), f(x).ravel())

    def test_batched(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((3, 5, 2))
        for k in range(3):
            np.testing.assert_array_equal(apply_D_lax(x)[k], apply_D_lax(x[k]))

    def test_bad_shape(self):
        with pytest.raises(ValueError):
            apply_D_lax(np.ones(3))


class TestNorm:
    def test_single_block(self):
        assert estimate_D_norm(1) == 1.0

    def test_fifty(self):
        v = estimate_D_norm(50, iters=5000, tol=1e-14)
        assert 1.9 <= v < 2.0

    def test_dense_svd_and_monotone(self):
        prev = 0.0
        for n in range(1, 11):
            # free variables x_0..x_{N-1}: drop the pinned last column of the lax operator
            D = dense_D(n + 1, 1, "lax")[1:, :n]
            ref = np.linalg.svd(D, compute_uv=False)[0]
            est = estimate_D_norm(n, iters=5000, tol=1e-15)
            assert est == pytest.approx(ref, rel=1e-6)
            assert est >= prev - 1e-12
            prev = est
