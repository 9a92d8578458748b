import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjpdhg.core import ConfigError, make_time_grid
from hjpdhg.pdhg_oc import fval_lax_oc, kkt_residual_oc
from hjpdhg.problems import eikonal_data
from hjpdhg.reference import (
    brute_force_lax,
    estimate_alpha,
    kkt_linear_oracle,
    lax_friedrichs_2d,
    quadratic_test_problem,
)


def norm_h(x, p, s=0.0):
    return np.sqrt((np.asarray(p) ** 2).sum(-1))


def cone(z):
    return np.sqrt((np.asarray(z) ** 2).sum(-1)) - 1.0


def cone_exact(z, t):
    # min of |y| - 1 over the ball of radius t about z
    return np.maximum(np.sqrt((np.asarray(z) ** 2).sum(-1)) - t, 0.0) - 1.0


class TestLaxFriedrichs:
    def test_constant_data_is_preserved(self):
        res = lax_friedrichs_2d(norm_h, lambda z: np.full(z.shape[:-1], 0.7), (-1, 1, -1, 1), 0.1, [0.1, 0.3],
                                alpha=(1.0, 1.0))
        np.testing.assert_allclose(res.values, 0.7, atol=1e-12)

    def test_constant_hamiltonian(self):
        h0 = 0.4
        H = lambda x, p, s=0.0: h0 + 0.0 * norm_h(x, p)
        res = lax_friedrichs_2d(H, lambda z: np.full(z.shape[:-1], 0.2), (-1, 1, -1, 1), 0.1, [0.25],
                                alpha=(1.0, 1.0))
        np.testing.assert_allclose(res.values[0], 0.2 - 0.25 * h0, atol=1e-10)

    @pytest.mark.parametrize("mesh", [0.1, 0.05])
    def test_cone(self, mesh):
        res = lax_friedrichs_2d(norm_h, cone, (-2, 2, -2, 2), mesh, [0.2])
        Z = np.stack(np.meshgrid(res.xs, res.ys, indexing="ij"), -1)
        assert np.abs(res.values[0] - cone_exact(Z, 0.2)).max() <= 2 * mesh

    def test_cone_exact_matches_brute_force(self):
        for pt in ([0.05, 0.0], [1.3, -0.4], [-0.9, 1.7]):
            assert brute_force_lax(cone, 1.0, np.array(pt), 0.2) == pytest.approx(
                float(cone_exact(np.array(pt), 0.2)), abs=1e-6)

    def test_lands_on_requested_times(self):
        res = lax_friedrichs_2d(norm_h, cone, (-1, 1, -1, 1), 0.1, [0.3, 0.1])
        np.testing.assert_array_equal(res.times, [0.1, 0.3])
        assert res.values.shape == (2, 21, 21)

    def test_monotone_in_data(self):
        rng = np.random.default_rng(0)
        for _ in range(3):
            c = rng.uniform(-1, 1, 4)
            g1 = lambda z, c=c: c[0] * np.sin(z[..., 0] + c[1]) + c[2] * np.cos(2 * z[..., 1]) + z[..., 0] ** 2 / 4
            bump = lambda z, c=c: np.exp(-((z[..., 0] - c[3]) ** 2 + z[..., 1] ** 2))
            g2 = lambda z, g1=g1, bump=bump: g1(z) + 0.3 * bump(z)
            r1 = lax_friedrichs_2d(norm_h, g1, (-2, 2, -2, 2), 0.1, [0.2], alpha=(2.0, 2.0))
            r2 = lax_friedrichs_2d(norm_h, g2, (-2, 2, -2, 2), 0.1, [0.2], alpha=(2.0, 2.0))
            assert np.all(r1.values <= r2.values + 1e-12)

    def test_cfl_guard(self):
        with pytest.raises(ConfigError):
            lax_friedrichs_2d(norm_h, cone, (-1, 1, -1, 1), 0.1, [0.1], cfl=1.0)

    def test_alpha_estimate(self):
        a = estimate_alpha(lambda x, p, s=0.0: 3.0 * norm_h(x, p), np.zeros((1, 2)), ((-1, 1), (-1, 1)))
        assert a[0] == pytest.approx(4.5, rel=1e-4) and a[1] == pytest.approx(4.5, rel=1e-4)


class TestBruteForceLax:
    g = eikonal_data(2)

    def test_interior_minimum(self):
        assert brute_force_lax(self.g, 1.0, np.zeros(2), 0.2) == -0.5

    def test_zero_time(self):
        x = np.array([1.0, 2.0])
        assert brute_force_lax(self.g, 1.0, x, 0.0) == float(self.g(x))

    def test_off_center(self):
        # the minimizer is (2.8, 0): g = -0.5 + 2.8^2 / 12.5
        v = brute_force_lax(self.g, 1.0, np.array([3.0, 0.0]), 0.2)
        assert v == pytest.approx(-0.5 + 2.8 ** 2 / 12.5, abs=1e-9)
        assert v == pytest.approx(0.1272, abs=1e-9)

    @settings(max_examples=15, deadline=None)
    @given(x=st.tuples(st.floats(-3, 3), st.floats(-3, 3)), t=st.floats(0.01, 0.5), dt=st.floats(0.01, 0.3))
    def test_nonincreasing_in_time(self, x, t, dt):
        x = np.array(x)
        assert brute_force_lax(self.g, 1.0, x, t + dt) <= brute_force_lax(self.g, 1.0, x, t) + 1e-9


class TestKKTOracle:
    def test_one_step_by_elimination(self):
        grid = make_time_grid(0.1, 0.1)
        b = kkt_linear_oracle(1.0, 0.0, 0.0, 0.0, 2.0, grid)
        # x_1 - x_0 = 0.1 p_1, p_1 = x_0
        assert b.x[0, 0] == pytest.approx(2.0 / 1.1, abs=1e-14)
        assert b.p[1, 0] == pytest.approx(2.0 / 1.1, abs=1e-14)
        assert b.x[1, 0] == 2.0

    @pytest.mark.parametrize("seed", range(5))
    def test_random_data(self, seed):
        rng = np.random.default_rng(seed)
        a, b, g0, kappa, target = rng.uniform(0.2, 2), rng.normal(), rng.normal(), rng.uniform(0, 1), rng.normal()
        grid = make_time_grid(0.05, 0.01)
        bun = kkt_linear_oracle(a, b, g0, kappa, target, grid)
        pr = quadratic_test_problem(a, b, g0, kappa)
        assert kkt_residual_oc(pr, bun, grid).max <= 1e-10
        x, p = bun.x[:, 0], bun.p[:, 0]
        direct = (g0 + 0.5 * a * x[0] ** 2 + b * x[0] + np.sum(p[1:] * np.diff(x))
                  - 0.01 * np.sum(0.5 * p[1:] ** 2 + 0.5 * kappa * x[1:] ** 2))
        assert fval_lax_oc(pr, bun, grid) == pytest.approx(direct, abs=1e-12)

    def test_needs_lax_grid(self):
        with pytest.raises(ConfigError):
            kkt_linear_oracle(1.0, 0.0, 0.0, 0.0, 1.0, make_time_grid(0.1, 0.02, "hopf"))

    def test_bad_curvature(self):
        with pytest.raises(ConfigError):
            quadratic_test_problem(a=0.0)
