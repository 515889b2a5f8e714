import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cmalab.domains import RadialBall, RadialProfile
from cmalab.exceptions import CapabilityError, ParameterError
from cmalab.flows import MoserTrudingerFlow
from cmalab.functionals import ma_energy, ma_mass, mt_functional, psh_seminorm
from cmalab.lab import (
    EstimateRecord,
    LogCuspFamily,
    MoserTrudingerAlphaEstimator,
    SobolevConstantEstimator,
    beta_iteration_schedule,
    bm_profile,
    bmq_delta,
    classify_growth,
    estimate_mt_alpha,
    estimate_sobolev_T,
    g_llogl_check,
    log_cusp_ball,
    make_log_cusp,
    mt_critical_alpha,
    mt_family_logs,
    norm_concentration_check,
    richardson,
    weak_bm_logs,
)
from cmalab.radial import check_admissible

from conftest import quadratic


class TestLogCusp:
    @pytest.mark.parametrize("n", [1, 2])
    def test_unit_mass_limit(self, n):
        fam = LogCuspFamily(n, c=1 / (2 * math.pi), L=40.0, w=1.0)
        assert fam.mass == pytest.approx(1.0, rel=1e-12)
        per_w = 64
        u = make_log_cusp(fam, per_w=per_w)
        # the boundary cell is first order in the log step
        assert ma_mass(u) == pytest.approx(1.0, rel=n / per_w)

    @pytest.mark.parametrize("n", [1, 2])
    def test_closed_form_energy(self, n):
        fam = LogCuspFamily(n, c=0.3, L=15.0, w=1.0)
        errs = [abs(ma_energy(make_log_cusp(fam, per_w=k)) / fam.energy - 1) for k in (16, 32, 64)]
        assert errs[-1] < 2e-3 and errs[-1] < errs[0]

    def test_admissible_and_metadata(self):
        u = make_log_cusp(LogCuspFamily(2, c=2.0, L=10.0, w=0.5))
        check_admissible(u)
        assert u.closed_form_mass == u.family.mass
        assert -u.v[0] == pytest.approx(u.family.depth, rel=1e-12)

    def test_vanishing_depth(self):
        # the smoothing width shrinks with the depth
        fams = [LogCuspFamily(2, c=1.0, L=L, w=L) for L in (1.0, 0.1, 0.01, 0.001)]
        depths = [np.max(-make_log_cusp(f).v) for f in fams]
        energies = [f.energy for f in fams]
        assert depths[-1] < 1e-2 and energies[-1] < 1e-2
        assert all(b <= 0.2 * a for a, b in zip(depths, depths[1:]))
        assert all(b <= 0.2 * a for a, b in zip(energies, energies[1:]))

    def test_bad_params(self):
        with pytest.raises(ParameterError):
            LogCuspFamily(1, c=-1.0)

    def test_too_deep(self):
        with pytest.raises(ParameterError):
            log_cusp_ball(2, 400.0)

    def test_family_logs_scale_free(self):
        Ls = [10.0, 20.0, 30.0, 40.0]
        a = mt_family_logs(2, 10.0, Ls, c=1.0)
        b = mt_family_logs(2, 10.0, Ls, c=3.0)
        assert np.allclose(a, b, rtol=1e-12)


class TestClassify:
    def test_divergent(self):
        assert classify_growth([0, 1, 2, 3, 4]) == "divergent"

    def test_bounded(self):
        assert classify_growth([0, 0.5, 0.501, 0.5015, 0.5016]) == "bounded"

    def test_undecided(self):
        assert classify_growth([0, 0.1, 0.2, 0.3, 0.4]) == "undecided"

    def test_short(self):
        with pytest.raises(ParameterError):
            classify_growth([0, 1, 2])


class TestRecord:
    def base(self, **kw):
        d = dict(name="x", params={"n": 1}, estimate=1.0, family="f", resolutions=(8, 16),
                 extrapolated=1.0, verdict=True)
        d.update(kw)
        return EstimateRecord(**d)

    def test_nonfinite(self):
        with pytest.raises(ParameterError):
            self.base(estimate=math.inf)

    def test_resolutions(self):
        with pytest.raises(ParameterError):
            self.base(resolutions=(16, 16))

    def test_json_deterministic(self):
        a = self.base(details={"b": 2, "a": Fraction(1, 3)})
        text = a.to_json()
        assert text == self.base(details={"a": Fraction(1, 3), "b": 2}).to_json()
        assert json.loads(text)["details"]["a"] == "1/3"

    def test_richardson(self):
        assert richardson(1.0 + 4 * 0.01, 1.0 + 0.01) == pytest.approx(1.0)


class TestMTAlpha:
    def test_n1_contains_2pi(self):
        rec = estimate_mt_alpha(1)
        lo, hi = rec.bracket
        assert lo <= 2 * math.pi <= hi and hi - lo <= 0.2 * 2 * math.pi

    def test_n2_contains_balance_value(self):
        lo, hi = estimate_mt_alpha(2).bracket
        assert lo <= 8 * math.pi / math.sqrt(3) <= hi
        assert mt_critical_alpha(2) == pytest.approx(8 * math.pi / math.sqrt(3))

    def test_subcritical_converges(self):
        lo, _ = estimate_mt_alpha(1).bracket
        logs = mt_family_logs(1, 0.5 * lo, np.arange(10.0, 101.0, 10.0))
        assert classify_growth(logs) == "bounded"
        assert np.all(np.isfinite(logs))

    def test_planar_capability(self):
        with pytest.raises(CapabilityError):
            estimate_mt_alpha(1, backend="planar")

    def test_estimator(self):
        est = MoserTrudingerAlphaEstimator(max_bisect=4).fit(1)
        assert est.bracket_[0] <= 2 * math.pi <= est.bracket_[1]
        assert est.get_params()["max_bisect"] == 4


class TestBM:
    def test_weak_bm_n1(self):
        lo, hi = bm_profile(1, "weak-BM").bracket
        assert lo <= 4 * math.pi <= hi and hi - lo <= 0.2 * 4 * math.pi

    def test_weak_bm_monotone(self):
        Ls = np.arange(10.0, 101.0, 10.0)
        labels = [classify_growth(weak_bm_logs(2, a, Ls)) for a in (5.0, 10.0, 20.0, 24.0, 26.0, 30.0, 40.0)]
        seen_div = False
        for lab in labels:
            if lab == "divergent":
                seen_div = True
            assert not (seen_div and lab == "bounded")

    def test_quasi_bm_slope(self):
        rec = bm_profile(2, "quasi-BM")
        assert abs(rec.estimate - 1.0) <= 0.1

    def test_bmq_supercritical_q(self):
        rec = bm_profile(2, "BMq", {"q": 2.0, "beta": 3.0, "delta": 0.1})
        assert rec.label == "bounded" and rec.verdict

    def test_bmq_critical_beta_bounded(self):
        delta = bmq_delta(2, 1.0, 4 * math.pi * 2)
        rec = bm_profile(2, "BMq", {"q": 1.0, "beta": 2.0, "delta": delta})
        assert rec.label == "bounded"

    def test_bmq_large_delta_diverges(self):
        # far above the top-hat threshold the same family blows up
        rec = bm_profile(2, "BMq", {"q": 1.0, "beta": 2.0, "delta": 5000.0, "expect": "divergent"})
        assert rec.label == "divergent"

    def test_bmq_delta_formula(self):
        alpha = 8 * math.pi
        eps = 2 / ((2 - 1) * (alpha / 2) ** 0.5)
        assert bmq_delta(2, 1, alpha) == pytest.approx(alpha / eps)
        with pytest.raises(ParameterError):
            bmq_delta(2, 2, alpha)

    def test_unknown_mode(self):
        with pytest.raises(ParameterError):
            bm_profile(1, "strong")


class TestBetaSchedule:
    def test_q1_n2(self):
        s = beta_iteration_schedule(1, 2, 5)
        assert s.betas[:4] == [1, Fraction(3, 2), Fraction(7, 4), Fraction(15, 8)]
        assert all(b == 2 - Fraction(1, 2 ** k) for k, b in enumerate(s.betas))
        assert s.limit == 2 and isinstance(s.limit, Fraction) and s.converges

    def test_small_q(self):
        s = beta_iteration_schedule(1e-12, 2, 10)
        assert np.allclose([float(b) for b in s.betas], 1.0, atol=1e-11)

    @given(st.integers(1, 6), st.integers(1, 5))
    def test_rational_limit(self, n, num):
        q = Fraction(num * n, 7)
        if q >= n:
            return
        s = beta_iteration_schedule(q, n, 3)
        assert s.limit == Fraction(n) / (n - q)
        assert all(b2 > b1 for b1, b2 in zip(s.betas, s.betas[1:]))

    def test_half_n(self):
        assert beta_iteration_schedule(Fraction(3, 2), 3, 2).limit == 2

    def test_divergent_flag(self):
        s = beta_iteration_schedule(2, 2, 5)
        assert not s.converges and math.isinf(s.limit)

    def test_bad_q(self):
        with pytest.raises(ParameterError):
            beta_iteration_schedule(-1, 2)


class TestNormConcentration:
    def test_brackets(self):
        rec = norm_concentration_check(1, 2, 1.0, 0.2, [0.2, 0.1, 0.05, 0.02])
        assert rec.verdict
        br = rec.details["brackets"]
        widths = [hi - lo for lo, hi in br]
        assert widths == sorted(widths, reverse=True)
        assert all(lo <= 1 <= hi for lo, hi in br)
        assert rec.details["comparisons"] == 50

    def test_equality_at_one(self, quad1):
        u = quad1.scaled(1 / psh_seminorm(quad1))
        g1 = 1.0 * math.exp(0.0)
        assert mt_functional(u.scaled(1.0), 3, 1.0) == pytest.approx(g1 * mt_functional(u, 3, 1.0))


class TestLLogL:
    def test_sweep_bounded(self):
        ball = RadialBall.uniform(1, 1.0, 257)
        u0 = RadialProfile.from_function(ball, lambda r: r - 1)
        ms = list(range(1, 22, 5))
        profs = [MoserTrudingerFlow(m=m, alpha=1.0, delta=0.2).fit(u0).profile_ for m in ms]
        A, ok = g_llogl_check(profs, ms, 1.0, 0.2)
        assert ok and np.all(A > 0)

    def test_delta_continuity(self):
        ball = RadialBall.uniform(1, 1.0, 257)
        u0 = RadialProfile.from_function(ball, lambda r: r - 1)
        vals = []
        for d in (1e-2, 1e-3, 1e-4):
            p = MoserTrudingerFlow(m=2, alpha=1.0, delta=d).fit(u0).profile_
            vals.append(g_llogl_check([p], [2], 1.0, d)[0][0])
        assert abs(vals[2] - vals[1]) < abs(vals[1] - vals[0]) + 1e-12

    def test_mismatched(self):
        with pytest.raises(ParameterError):
            g_llogl_check([], [], 1.0, 0.1)


class TestSobolevT:
    def test_upper_bound_n1_p1(self):
        rec = estimate_sobolev_T(1, 1.0)
        assert rec.estimate <= 3.0
        assert all(f <= g + 1e-9 for f, g in zip(rec.details["flow_values"], rec.details["family_values"]))

    def test_planar_backend(self):
        rec = estimate_sobolev_T(1, 1.0, "planar", {"n_cells": 16, "flow_steps": 100})
        radial = estimate_sobolev_T(1, 1.0)
        assert rec.estimate == pytest.approx(radial.estimate, rel=2e-2)

    def test_planar_needs_n1(self):
        with pytest.raises(CapabilityError):
            estimate_sobolev_T(2, 1.0, "planar")

    def test_monotone_in_radius(self):
        T = [estimate_sobolev_T(2, 3.0, R=R).estimate for R in (0.5, 1.0)]
        assert T[0] >= T[1]

    def test_estimator(self):
        est = SobolevConstantEstimator(p=1.0, size=129).fit(1)
        assert est.estimate_ <= 3.0
