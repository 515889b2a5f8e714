import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import expit

from cmalab.domains import GridField, PlanarGrid, RadialBall, RadialProfile
from cmalab.exceptions import CapabilityError
from cmalab.lab import LogCuspFamily, make_log_cusp, random_admissible_profiles
from cmalab.slices import boundary_terms, dimension_reduction_bound, slice_mass_check, slice_potential

from conftest import quadratic


def test_quadratic_potential():
    u = quadratic(2, 513)
    sp = slice_potential(u)
    assert np.allclose(sp.v, 2 * np.pi * (1 - sp.s_grid) ** 2, rtol=0, atol=1e-12)


def test_zero_potential():
    ball = RadialBall.uniform(2, 1.0, 65)
    sp = slice_potential(RadialProfile(ball, np.zeros(65)))
    assert np.all(sp.v == 0)


def test_log_cusp_against_adaptive_quadrature():
    fam = LogCuspFamily(2, c=0.5, L=3.0, w=0.5)
    ball = RadialBall.geometric(2, 1.0, 4096)
    u = make_log_cusp(fam, ball)
    sp = slice_potential(u)

    def vprime(r):
        x = math.log(r) + 2 * fam.L
        return 0.5 * fam.c * expit(x / fam.w) / r

    for s in (0.0, 1e-3, 0.1, 0.5, 0.9):
        exact = 4 * math.pi * quad(lambda r: (r - s) * vprime(r) ** 2, max(s, 1e-300), 1, limit=400,
                                   points=[math.exp(-2 * fam.L)] if s < math.exp(-2 * fam.L) else None)[0]
        assert sp.evaluate(math.sqrt(s), 0.0) == pytest.approx(exact, rel=1e-3)


def test_rotational_symmetry():
    sp = slice_potential(quadratic(2, 257))
    r = np.linspace(0, 1, 17)
    vals = [sp.evaluate(r * math.cos(t), r * math.sin(t)) for t in np.linspace(0, 2 * math.pi, 9)]
    assert np.max(np.ptp(np.array(vals), axis=0)) <= 1e-10


def test_nonnegative_and_zero_on_boundary():
    ball = RadialBall.uniform(2, 1.0, 257)
    for u in random_admissible_profiles(ball, 5, 3):
        sp = slice_potential(u)
        assert np.all(sp.v >= 0) and sp.v[-1] == 0


class TestMassCheck:
    def test_quadratic_exact(self):
        r = slice_mass_check(quadratic(2, 2049))
        assert r.integral == pytest.approx(8 * math.pi ** 2, rel=1e-6)
        assert r.twice_mass == pytest.approx(32 * math.pi ** 2, rel=1e-12)
        assert r.ratio == pytest.approx(0.25, rel=1e-6)
        assert r.boundary_ok

    def test_zero(self):
        ball = RadialBall.uniform(2, 1.0, 65)
        r = slice_mass_check(RadialProfile(ball, np.zeros(65)))
        assert r.integral == 0.0 and r.twice_mass == 0.0

    @given(st.integers(0, 10_000))
    def test_random_profiles(self, seed):
        ball = RadialBall.uniform(2, 1.0, 513)
        (u,) = random_admissible_profiles(ball, 1, seed)
        r = slice_mass_check(u, slack=0.02)
        assert r.integral <= r.twice_mass * 1.02
        assert r.max_boundary_term <= 0.0

    def test_divergence_identity(self):
        # the interior integral of Delta v vanishes because grad v = 0 on the unit circle
        errs = []
        for size in (257, 513, 1025):
            ball = RadialBall.uniform(2, 1.0, size)
            (u,) = random_admissible_profiles(ball, 1, 11)
            r = slice_mass_check(u)
            errs.append(abs(r.signed_integral) / r.integral)
        assert errs[-1] < 1e-2 and errs[-1] <= errs[0]

    def test_boundary_terms_shape(self):
        G = boundary_terms(quadratic(2, 65), n_angles=8)
        assert G.shape == (8, 64) and np.all(G <= 0)


class TestCapability:
    def test_wrong_dimension(self):
        with pytest.raises(CapabilityError):
            slice_potential(quadratic(1, 33))

    def test_planar(self):
        g = PlanarGrid.unit_square(8)
        with pytest.raises(CapabilityError):
            slice_potential(GridField(g, np.zeros(g.shape)))


class TestDimensionReduction:
    def test_quadratic(self):
        u = quadratic(2, 4097)
        lhs, rhs = dimension_reduction_bound(u, 2.0)
        assert lhs == pytest.approx(math.sqrt(math.pi ** 2 / 12), rel=1e-6)
        assert rhs == pytest.approx(4 * math.pi, rel=1e-12)

    def test_scale_invariant_ratio(self):
        u = quadratic(2, 257)
        a, b = dimension_reduction_bound(u, 3.0)
        c, d = dimension_reduction_bound(u.scaled(2.0), 3.0)
        assert c / d == pytest.approx(a / b, rel=1e-12)

    @pytest.mark.parametrize("p", [2.0, 4.0, 8.0])
    def test_log_cusp_sweep_bounded(self, p):
        ratios = []
        for L in (2.0, 5.0, 10.0, 20.0):
            u = make_log_cusp(LogCuspFamily(2, c=1.0, L=L, w=1.0))
            lhs, rhs = dimension_reduction_bound(u, p)
            ratios.append(lhs / rhs)
        assert np.all(np.isfinite(ratios))
        assert max(ratios) <= 2 * ratios[-1]
