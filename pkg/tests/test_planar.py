import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cmalab.domains import GridField, PlanarGrid
from cmalab.exceptions import InvalidRHSError, ParameterError, SolverFailureError
from cmalab.flows import (
    MoserTrudingerFlow,
    SobolevDescentFlow,
    initial_state,
    planar_flow_step,
    stationarity_residual,
)
from cmalab.functionals import psh_seminorm
from cmalab.planar import PoissonSystem, brezis_merle_check, poisson_solve, solve_spd


def sine_system(cells):
    g = PlanarGrid.unit_square(cells)
    sys = PoissonSystem.from_function(g, lambda x, y: 2 * np.pi ** 2 * np.sin(np.pi * x) * np.sin(np.pi * y))
    exact = GridField.from_function(g, lambda x, y: -np.sin(np.pi * x) * np.sin(np.pi * y))
    return sys, exact


class TestPoisson:
    def test_sine_second_order(self):
        errs = []
        for cells in (16, 32, 64):
            sys, exact = sine_system(cells)
            u = poisson_solve(sys)
            errs.append(np.max(np.abs(u.values - exact.values)))
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert orders.min() >= 1.9

    def test_zero(self, square64):
        u = poisson_solve(PoissonSystem.from_function(square64, lambda x, y: 0 * x))
        assert np.all(u.values == 0.0)

    def test_disc(self):
        errs = []
        for cells in (16, 32, 64):
            g = PlanarGrid.disc(1.0, cells)
            u = poisson_solve(PoissonSystem.from_function(g, lambda x, y: 4.0 + 0 * x))
            X, Y = g.coordinates
            errs.append(np.max(np.abs(u.values - (X ** 2 + Y ** 2 - 1))[g.interior]))
        assert errs[-1] < 1e-3
        assert errs[-1] < errs[0] / 3.5

    def test_stats_recorded(self):
        sys, _ = sine_system(32)
        poisson_solve(sys)
        assert sys.stats["iterations"] > 0 and sys.stats["residual"] <= 1e-9

    def test_negative_rhs(self, square64):
        with pytest.raises(InvalidRHSError):
            PoissonSystem.from_function(square64, lambda x, y: -1 + 0 * x)

    def test_iteration_cap(self):
        sys, _ = sine_system(32)
        from cmalab.planar import _spd_operator

        A = _spd_operator(sys.grid)
        b = np.random.default_rng(0).uniform(-1, 1, A.shape[0])
        with pytest.raises(SolverFailureError) as err:
            solve_spd(A, b, maxiter=2)
        assert "iterations" in err.value.stats

    @given(st.integers(0, 1000))
    def test_comparison_and_sign(self, seed):
        g = PlanarGrid.unit_square(16)
        rng = np.random.default_rng(seed)
        f1 = rng.uniform(0, 2, g.shape)
        f2 = f1 + rng.uniform(0, 2, g.shape)
        u1 = poisson_solve(PoissonSystem(g, GridField(g, f1)))
        u2 = poisson_solve(PoissonSystem(g, GridField(g, f2)))
        assert np.all(u1.values <= 0)
        assert np.all(u1.values >= u2.values - 1e-10)


class TestBrezisMerle:
    def test_bump_unit_mass(self, square64):
        f = GridField.from_function(square64, lambda x, y: np.exp(-((x - 0.5) ** 2 + (y - 0.5) ** 2) / 0.002))
        f = f.scaled(1 / float(np.vdot(square64.weights, f.values)))
        u = poisson_solve(PoissonSystem(square64, f))
        lhs, bound, ok = brezis_merle_check(u, f, math.pi)
        assert bound == pytest.approx(8 * math.pi)
        assert np.isfinite(lhs) and ok

    def test_disc_constant(self):
        g = PlanarGrid.disc(1.0, 64)
        f = GridField.from_function(g, lambda x, y: 4.0 + 0 * x)
        u = poisson_solve(PoissonSystem(g, f))
        lhs, bound, ok = brezis_merle_check(u, f, 2 * math.pi)
        assert bound == pytest.approx(8 * math.pi)
        assert ok

    def test_scale_free_exponent(self, square64):
        # (4 pi - delta)|u| / ||f||_1 does not change under f -> c f
        f = GridField.from_function(square64, lambda x, y: 1 + x)
        u = poisson_solve(PoissonSystem(square64, f))
        fc = f.scaled(1e8)
        uc = poisson_solve(PoissonSystem(square64, fc))
        assert brezis_merle_check(uc, fc, 1.0)[0] == pytest.approx(brezis_merle_check(u, f, 1.0)[0], rel=1e-8)

    def test_vanishing_exponent(self, square64):
        f = GridField.from_function(square64, lambda x, y: 1 + x)
        u = poisson_solve(PoissonSystem(square64, f))
        lhs, _, _ = brezis_merle_check(u, f, 4 * math.pi - 1e-9)
        assert lhs == pytest.approx(float(square64.weights.sum()), rel=1e-8)

    @pytest.mark.parametrize("delta", [0.0, 4 * math.pi, 13.0])
    def test_delta_range(self, square64, delta):
        f = GridField.from_function(square64, lambda x, y: 1 + 0 * x)
        u = poisson_solve(PoissonSystem(square64, f))
        with pytest.raises(ParameterError):
            brezis_merle_check(u, f, delta)


class TestPlanarFlow:
    def test_descent_square(self):
        g = PlanarGrid.unit_square(24)
        u0 = GridField.from_function(g, lambda x, y: -np.sin(np.pi * x) * np.sin(np.pi * y), potential=True)
        est = SobolevDescentFlow(p=2.0, lam=0.5, delta=1e-2, max_steps=200, min_steps=200).fit(u0)
        J = est.trace_.column("functional")
        assert np.max(np.diff(J)) <= 1e-9
        assert np.all(est.profile_.values <= 0)

    def test_stationary_step(self):
        g = PlanarGrid.unit_square(16)
        u0 = GridField.from_function(g, lambda x, y: -np.sin(np.pi * x) * np.sin(np.pi * y), potential=True)
        prm = dict(lam=1.0, p=2.0, delta=1e-2)
        est = SobolevDescentFlow(tol=1e-13, max_steps=2000, **prm).fit(u0)
        assert stationarity_residual(est.profile_, "sobolev-PE", prm) < 1e-10
        state = initial_state(est.profile_, "sobolev-PE", prm)
        nxt = planar_flow_step(state, "sobolev-PE", prm)
        assert np.max(np.abs(nxt.profile.values - est.profile_.values)) < 1e-10

    def test_mt_norm(self):
        g = PlanarGrid.disc(1.0, 24)
        u0 = GridField.from_function(g, lambda x, y: x ** 2 + y ** 2 - 1, potential=True)
        est = MoserTrudingerFlow(m=3, alpha=1.0, delta=0.1).fit(u0)
        assert abs(psh_seminorm(est.profile_) - 1) <= 1e-2
