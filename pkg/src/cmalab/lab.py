"""Test families and estimators for the inequality constants.

Divergence of a family integral ``I(L)`` is decided on a finite budget: the
integral *diverges* if it grows by a factor of at least 2 across each of the
last three ``L`` increments, is *bounded* if the last three relative
increments stay below 1%, and is *undecided* otherwise. All family integrals
are handled as logarithms so that growth far beyond double range is still
measured exactly.
"""

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import NamedTuple

import numpy as np
from scipy import optimize
from scipy.special import expit, logsumexp
from sklearn.base import BaseEstimator

from ._validation import check_dimension, check_int, check_positive
from .domains import GridField, PlanarGrid, RadialBall, RadialProfile
from .exceptions import CapabilityError, ParameterError, StagnationError
from .flows import FlowParams, make_ops, run_flow
from .functionals import (
    ConventionConstants,
    eta,
    lambda_mt,
    log_integral_exp,
    lorentz_zygmund_norm,
    ma_energy,
    ma_mass,
    mt_functional,
    mt_series,
    psh_seminorm,
    sobolev_ratio,
)
from .radial import ADMISSIBILITY_FLOOR, RadialRHS, admissibility_project, radial_ma_solve

GROWTH_FACTOR = 2.0
BOUNDED_INCREMENT = 0.01
# smallest rho kept on cusp grids: rho^n must stay well inside double range
_RHO_FLOOR_LOG = -280.0


def _softplus(z):
    return np.logaddexp(0.0, z)


# ---------------------------------------------------------------------------
# log-cusp family


@dataclass(frozen=True)
class LogCuspFamily:
    """Smoothed ``(c/2) log(rho / R^2)`` cut off at depth ``L`` with width ``w``.

    In ``x = log(rho / rho_L)``, ``rho_L = R^2 e^(-2L)``, the family has
    ``rho v' = (c/2) sigma(x / w)`` with the logistic ``sigma``.
    """

    n: int
    c: float = 1.0
    L: float = 10.0
    w: float = 1.0
    R: float = 1.0

    def __post_init__(self):
        check_dimension(self.n)
        for name in ("c", "L", "w", "R"):
            check_positive(getattr(self, name), name)

    @property
    def mass(self):
        """``(2 pi c)^n sigma(2L/w)^n``."""
        return (2.0 * math.pi * self.c * expit(2.0 * self.L / self.w)) ** self.n

    @property
    def energy(self):
        n, c, w = self.n, self.c, self.w
        K = (4.0 * math.pi) ** n / (n + 1.0)
        z = 2.0 * self.L / w
        s = expit(z)
        tail = sum(s ** j / j for j in range(1, n + 1))
        return K * (c / 2.0) ** (n + 1) * w * (float(_softplus(z)) - tail)

    @property
    def depth(self):
        """``sup(-u) = (c/2) w softplus(2L/w)``."""
        return 0.5 * self.c * self.w * float(_softplus(2.0 * self.L / self.w))


def log_cusp_ball(n, L, w=1.0, R=1.0, per_w=8, margin=10.0):
    """Grid uniform in ``log rho`` reaching ``margin * w`` below the cutoff depth."""
    per_w = check_int(per_w, "per_w", minimum=1)
    span = 2.0 * L + margin * w
    log_min = 2.0 * math.log(R) - span
    if n * log_min < _RHO_FLOOR_LOG * math.log(10.0):
        raise ParameterError(f"cusp depth L={L} is too deep for double precision at n={n}")
    cells = int(math.ceil(span * per_w / w))
    logs = np.linspace(log_min, 2.0 * math.log(R), cells + 1)
    rho = np.concatenate(([0.0], np.exp(logs)))
    return RadialBall(n, R, rho)


@dataclass(frozen=True, eq=False)
class LogCuspProfile(RadialProfile):
    """Radial profile generated by :func:`make_log_cusp` with its family metadata."""

    family: LogCuspFamily = None

    @property
    def closed_form_mass(self):
        return self.family.mass

    @property
    def closed_form_energy(self):
        return self.family.energy


def make_log_cusp(params, ball=None, per_w=8):
    """Sample a :class:`LogCuspFamily` member on ``ball`` (default: a fitted log grid).

    ``v`` is evaluated in closed form and slopes are exact differences of
    ``softplus``, so the profile is admissible to rounding.
    """
    if not isinstance(params, LogCuspFamily):
        params = LogCuspFamily(**params)
    fam = params
    if ball is None:
        ball = log_cusp_ball(fam.n, fam.L, fam.w, fam.R, per_w)
    elif ball.n != fam.n or not math.isclose(ball.R, fam.R):
        raise ParameterError("ball does not match the family dimension/radius")
    rho = ball.rho_grid
    R2 = fam.R ** 2
    with np.errstate(divide="ignore"):
        x = np.log(rho / R2) + 2.0 * fam.L
    sp = _softplus(x / fam.w)
    top = float(_softplus(2.0 * fam.L / fam.w))
    scale = 0.5 * fam.c * fam.w
    v = -scale * (top - sp)
    dv = scale * np.diff(sp) / ball.cell_widths
    return LogCuspProfile(ball, v, dv, family=fam)


# ---------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class EstimateRecord:
    """One estimated constant with resolutions, extrapolation and verdict."""

    name: str
    params: dict
    estimate: float
    family: str
    resolutions: tuple
    extrapolated: float
    verdict: bool
    label: str = ""
    bracket: tuple = None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.estimate):
            raise ParameterError(f"estimate must be finite, got {self.estimate!r}")
        res = tuple(int(r) for r in self.resolutions)
        if any(b <= a for a, b in zip(res, res[1:])):
            raise ParameterError("resolutions must be strictly increasing")
        object.__setattr__(self, "resolutions", res)

    def sort_key(self):
        return (self.name, json.dumps(_jsonable(self.params), sort_keys=True))

    def as_dict(self):
        return _jsonable(
            {
                "name": self.name,
                "params": self.params,
                "estimate": self.estimate,
                "family": self.family,
                "resolutions": list(self.resolutions),
                "extrapolated": self.extrapolated,
                "verdict": self.verdict,
                "label": self.label,
                "bracket": None if self.bracket is None else list(self.bracket),
                "details": self.details,
            }
        )

    def to_json(self):
        return json.dumps(self.as_dict(), sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x) or math.isinf(x):
            return repr(x)
        return float(repr(x)) if x != 0 else 0.0
    return obj


def richardson(coarse, fine, order=2):
    """Extrapolate two values computed with spacings ``h`` and ``h/2``."""
    k = 2.0 ** order
    return (k * fine - coarse) / (k - 1.0)


# ---------------------------------------------------------------------------
# divergence criterion


def classify_growth(log_values):
    """Classify a sequence of ``log I(L)`` on equally spaced ``L`` values.

    Returns ``"divergent"``, ``"bounded"`` or ``"undecided"``.
    """
    lv = np.asarray(log_values, dtype=float)
    if lv.size < 4:
        raise ParameterError("need at least four L values")
    if np.any(np.isnan(lv)):
        return "undecided"
    inc = np.diff(lv)[-3:]
    if np.all(inc >= math.log(GROWTH_FACTOR)):
        return "divergent"
    if np.all(inc < math.log1p(BOUNDED_INCREMENT)):
        return "bounded"
    return "undecided"


def _combine(labels):
    return labels[0] if all(lab == labels[0] for lab in labels) else "undecided"


def _L_values(budget):
    step = float(budget.get("L_step", 10.0))
    L_max = float(budget.get("L_max", 100.0))
    count = int(round(L_max / step))
    return step * np.arange(1, count + 1)


def _bracket_search(verdict_at, alpha0, max_steps):
    """Doubling then bisection on a monotone bounded/divergent verdict."""
    lo, hi = None, None
    a = alpha0
    history = []
    for _ in range(60):
        lab = verdict_at(a)
        history.append((a, lab))
        if lab == "bounded":
            lo = a
            a *= 2.0
        elif lab == "divergent":
            hi = a
            if lo is not None:
                break
            a *= 0.5
        else:
            break
        if lo is not None and hi is not None:
            break
    if lo is None or hi is None:
        return lo, hi, history
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        lab = verdict_at(mid)
        history.append((mid, lab))
        if lab == "bounded":
            lo = mid
            continue
        if lab == "divergent":
            hi = mid
            continue
        # undecided: try the quarter points before giving up
        moved = False
        for cand in (lo + 0.25 * (hi - lo), lo + 0.75 * (hi - lo)):
            lab = verdict_at(cand)
            history.append((cand, lab))
            if lab == "bounded" and cand > lo:
                lo, moved = cand, True
            elif lab == "divergent" and cand < hi:
                hi, moved = cand, True
        if not moved:
            break
    return lo, hi, history


# ---------------------------------------------------------------------------
# Sobolev constant


def _power_family(domain, a):
    if isinstance(domain, RadialBall):
        R2 = domain.R ** 2
        # discrete slopes of rho^a with a < 1 can dip near the origin
        return admissibility_project(RadialProfile.from_function(domain, lambda r: R2 * ((r / R2) ** a - 1.0)))
    cx, cy, R = domain.geometry
    u = GridField.from_function(
        domain, lambda x, y: R * R * ((((x - cx) ** 2 + (y - cy) ** 2) / (R * R)) ** a - 1.0), potential=True
    )
    return make_ops(u).project(u, ADMISSIBILITY_FLOOR)


def _sobolev_at(domain, p, budget):
    grid_a = np.geomspace(budget.get("a_min", 0.3), budget.get("a_max", 4.0), int(budget.get("family_size", 24)))
    scored = []
    for a in grid_a:
        u = _power_family(domain, float(a))
        scored.append((sobolev_ratio(u, p), float(a), u))
    scored.sort(key=lambda t: t[0])
    family_value = scored[0][0]
    flow_value = family_value
    stagnated = 0
    prm = FlowParams("sobolev-ratio", p=p)
    for _, _, u in scored[: int(budget.get("starts", 2))]:
        try:
            state = run_flow(u, "sobolev-ratio", prm, int(budget.get("flow_steps", 200)), tol=float(budget.get("flow_tol", 1e-11)))
        except StagnationError as err:
            state = err.state
            stagnated += 1
        flow_value = min(flow_value, sobolev_ratio(state.profile, p))
    return family_value, flow_value, scored[0][1], stagnated


def estimate_sobolev_T(n, p, backend="radial", budget=None, R=1.0):
    """Upper bound for the Sobolev constant ``T_{p, B_R}``.

    Sweeps the power family ``R^2((|z|/R)^(2a) - 1)`` and runs the
    ratio-descent flow from the best members; the smallest ratio found is the
    estimate. Two resolutions are used and Richardson-extrapolated.
    """
    n = check_dimension(n)
    p = check_positive(p, "p")
    budget = dict(budget or {})
    if backend == "radial":
        size = int(budget.get("size", 257))
        sizes = (size, 2 * size - 1)
        domains = [RadialBall.uniform(n, R, s) for s in sizes]
    elif backend == "planar":
        if n != 1:
            raise CapabilityError("the planar backend is n = 1 only")
        cells = int(budget.get("n_cells", 24))
        sizes = (cells, 2 * cells)
        domains = [PlanarGrid.disc(R, c) for c in sizes]
    else:
        raise ParameterError(f"unknown backend {backend!r}")
    vals = [_sobolev_at(d, p, budget) for d in domains]
    estimates = [min(f, g) for f, g, _, _ in vals]
    order = 2 if backend == "radial" else 1
    extrap = richardson(estimates[0], estimates[1], order)
    ok = all(g <= f + 1e-9 * abs(f) for f, g, _, _ in vals)
    return EstimateRecord(
        name="sobolev-T",
        params={"n": n, "p": p, "R": R, "backend": backend},
        estimate=estimates[1],
        family="power",
        resolutions=sizes,
        extrapolated=extrap,
        verdict=bool(ok),
        label="upper-bound",
        details={
            "family_values": [v[0] for v in vals],
            "flow_values": [v[1] for v in vals],
            "best_exponent": [v[2] for v in vals],
            "stagnated_runs": sum(v[3] for v in vals),
        },
    )


# ---------------------------------------------------------------------------
# Moser-Trudinger exponent


def mt_family_logs(n, alpha, Ls, w=1.0, per_w=8, c=1.0):
    """``log int exp(alpha (-u/||u||)^((n+1)/n))`` along the log-cusp family."""
    theta = (n + 1.0) / n
    ball = log_cusp_ball(n, float(max(Ls)), w, 1.0, per_w)
    out = []
    for L in Ls:
        u = make_log_cusp(LogCuspFamily(n, c, float(L), w), ball)
        a = -u.v / psh_seminorm(u)
        out.append(log_integral_exp(alpha * a ** theta, u))
    return np.array(out)


def mt_critical_alpha(n):
    """Log-cusp balance ``n K^(1/n)`` with ``K = (4 pi)^n / (n + 1)``."""
    n = check_dimension(n)
    return 4.0 * math.pi * n / (n + 1.0) ** (1.0 / n)


def estimate_mt_alpha(n, backend="radial", budget=None):
    """Bracket for the Moser-Trudinger exponent from the log-cusp family.

    An ``alpha`` is accepted when the family integral is bounded in ``L`` and
    rejected when it diverges, at both resolutions.
    """
    n = check_dimension(n)
    if backend != "radial":
        raise CapabilityError("log-cusp concentration needs the radial backend")
    budget = dict(budget or {})
    Ls = _L_values(budget)
    per = tuple(budget.get("per_w", (4, 8)))
    w = float(budget.get("w", 1.0))

    def verdict_at(alpha):
        return _combine([classify_growth(mt_family_logs(n, alpha, Ls, w, k)) for k in per])

    lo, hi, history = _bracket_search(verdict_at, float(budget.get("alpha0", 1.0)), int(budget.get("max_bisect", 10)))
    ok = lo is not None and hi is not None
    mid = 0.5 * (lo + hi) if ok else float("nan")
    return EstimateRecord(
        name="mt-alpha",
        params={"n": n, "L_max": float(Ls[-1]), "L_step": float(Ls[1] - Ls[0]), "w": w},
        estimate=mid if ok else 0.0,
        family="log-cusp",
        resolutions=tuple(int(k * (2 * Ls[-1] + 10.0) / w) + 2 for k in per),
        extrapolated=mid if ok else 0.0,
        verdict=bool(ok),
        label="bracket" if ok else "no-bracket",
        bracket=(lo, hi) if ok else None,
        details={"history": [[a, lab] for a, lab in history], "balance_value": mt_critical_alpha(n)},
    )


# ---------------------------------------------------------------------------
# Brezis-Merle type profiles


def _unit_mass_cusp(n, L, w, ball):
    c = 1.0 / (2.0 * math.pi * expit(2.0 * L / w))
    return make_log_cusp(LogCuspFamily(n, c, float(L), w), ball)


def weak_bm_logs(n, alpha, Ls, w=1.0, per_w=8):
    """``log int exp(alpha (-u))`` over unit-mass log cusps."""
    ball = log_cusp_ball(n, float(max(Ls)), w, 1.0, per_w)
    out = []
    for L in Ls:
        u = _unit_mass_cusp(n, L, w, ball)
        out.append(log_integral_exp(alpha * -u.v, u))
    return np.array(out)


def quasi_bm_log(n, dtilde, L, w=1.0, per_w=8, alpha_crit=None):
    """``log int exp((alpha_crit - dtilde)(-u))`` for a unit-mass cusp of depth ``L``."""
    a_c = 4.0 * math.pi * n if alpha_crit is None else alpha_crit
    ball = log_cusp_ball(n, L, w, 1.0, per_w)
    u = _unit_mass_cusp(n, L, w, ball)
    return log_integral_exp((a_c - dtilde) * -u.v, u)


def tophat_profile(n, L, q, ball, A=1.0):
    """Radial solve of a top-hat density on ``rho < e^(-2L)`` normalized to ``A_f = A``.

    The density is the Monge-Ampere measure ``(dd^c u)^n``; the raw
    determinant is ``f / kappa_n``.
    """
    rho = ball.rho_grid
    inside = rho < math.exp(-2.0 * L) * ball.R ** 2
    if not inside.any():
        raise ParameterError("top-hat support contains no grid node")
    lw = ball.log_weights[inside]
    log_vol = float(logsumexp(lw))

    def excess(logH):
        return logH + q * math.log(float(np.logaddexp(0.0, logH))) + log_vol - math.log(A)

    logH = optimize.brentq(excess, -50.0, 700.0, xtol=1e-14)
    f = np.where(inside, math.exp(logH), 0.0)
    kappa = ConventionConstants(n).kappa_n
    u = radial_ma_solve(RadialRHS(ball, f / kappa))
    return u, f


def bmq_logs(n, q, beta, delta, Ls, per_w=8, A=1.0):
    """``log int exp(delta (-u)^beta)`` over the A_f-normalized top-hat family."""
    ball = log_cusp_ball(n, float(max(Ls)), 1.0, 1.0, per_w)
    out = []
    for L in Ls:
        u, _ = tophat_profile(n, float(L), q, ball, A)
        out.append(log_integral_exp(delta * np.maximum(-u.v, 0.0) ** beta, u))
    return np.array(out)


def bmq_delta(n, q, alpha):
    """``delta = alpha / eps`` with ``eps = n / ((n - q) (alpha/2)^(q/n))``."""
    if not 0 < q < n:
        raise ParameterError("the delta(alpha) formula needs 0 < q < n")
    eps = n / ((n - q) * (0.5 * alpha) ** (q / n))
    return alpha / eps


def bm_profile(n, mode, params=None):
    """Brezis-Merle type estimates on radial families.

    ``mode="weak-BM"`` brackets the critical ``alpha`` for unit-mass cusps,
    ``"quasi-BM"`` fits the blow-up slope of ``log int e^((alpha_c - d)(-u))``
    against ``log(1/d)``, and ``"BMq"`` classifies the A_f-normalized top-hat
    family for given ``q``, ``beta``, ``delta``.
    """
    n = check_dimension(n)
    prm = dict(params or {})
    per = tuple(prm.get("per_w", (4, 8)))
    w = float(prm.get("w", 1.0))
    if mode == "weak-BM":
        Ls = _L_values(prm)

        def verdict_at(alpha):
            return _combine([classify_growth(weak_bm_logs(n, alpha, Ls, w, k)) for k in per])

        lo, hi, history = _bracket_search(verdict_at, float(prm.get("alpha0", 1.0)), int(prm.get("max_bisect", 10)))
        ok = lo is not None and hi is not None
        mid = 0.5 * (lo + hi) if ok else 0.0
        return EstimateRecord(
            name="weak-BM", params={"n": n, "L_max": float(Ls[-1]), "w": w}, estimate=mid,
            family="log-cusp unit mass", resolutions=per, extrapolated=mid, verdict=bool(ok),
            label="bracket" if ok else "no-bracket", bracket=(lo, hi) if ok else None,
            details={"history": [[a, lab] for a, lab in history]},
        )
    if mode == "quasi-BM":
        d_list = np.asarray(prm.get("dtilde", 4.0 * math.pi * np.array([0.4, 0.2, 0.1, 0.05])), dtype=float)
        L = float(prm.get("L", 120.0))
        slopes = []
        for k in per:
            logs = np.array([quasi_bm_log(n, d, L, w, k) for d in d_list])
            slope = float(np.polyfit(np.log(1.0 / d_list), logs, 1)[0])
            slopes.append(slope)
        extrap = richardson(slopes[0], slopes[1])
        target = float(n - 1)
        tol = float(prm.get("tol", 0.1))
        ok = all(abs(s - target) <= tol for s in slopes)
        return EstimateRecord(
            name="quasi-BM", params={"n": n, "L": L, "w": w}, estimate=slopes[-1],
            family="log-cusp unit mass", resolutions=per, extrapolated=extrap, verdict=bool(ok),
            label="slope", details={"dtilde": list(d_list), "slopes": slopes},
        )
    if mode == "BMq":
        q = check_positive(prm.get("q", 1.0), "q")
        beta = check_positive(prm.get("beta", n / (n - q) if q < n else 1.0), "beta")
        delta = check_positive(prm.get("delta", 1.0), "delta")
        A = check_positive(prm.get("A", 1.0), "A")
        Ls = _L_values(prm)
        labels, sups = [], []
        for k in per:
            logs = bmq_logs(n, q, beta, delta, Ls, k, A)
            labels.append(classify_growth(logs))
            sups.append(float(np.max(logs)))
        label = _combine(labels)
        expect = prm.get("expect", "bounded")
        return EstimateRecord(
            name="BMq", params={"n": n, "q": q, "beta": beta, "delta": delta, "A": A, "L_max": float(Ls[-1])},
            estimate=sups[-1], family="top-hat A_f-normalized", resolutions=per,
            extrapolated=richardson(sups[0], sups[1]), verdict=(label == expect), label=label,
            details={"labels": labels, "log_sup": sups},
        )
    raise ParameterError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# beta schedule


class BetaSchedule(NamedTuple):
    betas: list
    limit: object
    converges: bool


def beta_iteration_schedule(q, n, k_max=20):
    """``beta_0 = 1``, ``beta_{k+1} = 1 + (q/n) beta_k``; exact for rational ``q``.

    Examples
    --------
    >>> beta_iteration_schedule(1, 2, 3).betas
    [Fraction(1, 1), Fraction(3, 2), Fraction(7, 4), Fraction(15, 8)]
    """
    n = check_dimension(n)
    k_max = check_int(k_max, "k_max", minimum=0)
    if isinstance(q, bool) or not isinstance(q, (Rational, float)) or q <= 0:
        raise ParameterError(f"q must be positive, got {q!r}")
    r = Fraction(q) / n if isinstance(q, Rational) else q / n
    one = Fraction(1) if isinstance(r, Fraction) else 1.0
    betas = [one]
    for _ in range(k_max):
        betas.append(1 + r * betas[-1])
    if r < 1:
        return BetaSchedule(betas, one / (1 - r), True)
    return BetaSchedule(betas, math.inf, False)


# ---------------------------------------------------------------------------
# Lemma-norm diagnostics


def _unit_profiles(n, count=10, size=513):
    ball = RadialBall.uniform(n, 1.0, size)
    out = []
    for a in np.linspace(0.5, 3.0, count):
        u = RadialProfile.from_function(ball, lambda r, a=a: r ** a - 1.0)
        out.append(u.scaled(1.0 / psh_seminorm(u)))
    return out


def norm_concentration_check(n, m, alpha, delta, epsilon_list, t_values=(0.5, 0.8, 1.0, 1.5, 2.0),
                             profiles=None, t_sweep=None):
    """Lemma-norm comparison and near-maximizer norm brackets.

    For every unit-norm profile and every ``t`` the value at ``t u`` is
    compared with ``t e^(1-t)`` times the value at ``u``. Near-maximizers are
    the swept ``(u, t)`` with value at least ``(1 - eps)`` times the best one;
    ``[Theta_*, Theta^*]`` is the range of their norms.
    """
    n = check_dimension(n)
    profiles = _unit_profiles(n) if profiles is None else profiles
    t_sweep = np.linspace(0.25, 4.0, 301) if t_sweep is None else np.asarray(t_sweep)
    checks = []
    for u in profiles:
        base = mt_functional(u, m, alpha, delta)
        for t in t_values:
            val = mt_functional(u.scaled(t), m, alpha, delta)
            g = t * math.exp(1.0 - t)
            checks.append(val <= g * base * (1.0 + 1e-10) + 1e-14)
    table = []
    for u in profiles:
        a = -u.v
        w = u.ball.weights
        row = []
        for t in t_sweep:
            F, _ = mt_series(t * math.exp(1.0 - t) * a, m, n, alpha, delta)
            row.append(float(np.dot(w, F)))
        table.append(row)
    table = np.array(table)
    best = float(table.max())
    brackets = []
    for eps in epsilon_list:
        near = table >= (1.0 - eps) * best
        ts = np.broadcast_to(t_sweep, table.shape)[near]
        brackets.append([float(ts.min()), float(ts.max())])
    widths = [hi - lo for lo, hi in brackets]
    shrinking = all(b <= a + 1e-12 for a, b in zip(widths, widths[1:]))
    contains_one = all(lo <= 1.0 <= hi for lo, hi in brackets)
    ok = all(checks) and shrinking and contains_one
    return EstimateRecord(
        name="norm-concentration", params={"n": n, "m": m, "alpha": alpha, "delta": delta},
        estimate=widths[-1] if widths else 0.0, family="power unit-norm",
        resolutions=(len(t_sweep),), extrapolated=widths[-1] if widths else 0.0, verdict=bool(ok),
        label="bracket", details={"epsilons": list(epsilon_list), "brackets": brackets,
                                  "comparisons": len(checks), "comparisons_ok": int(sum(checks))},
    )


def stationary_density(u, m, alpha, delta):
    """``g = (lambda / ||u||) f_m^delta(-u / eta(||u||))`` at every node."""
    s = psh_seminorm(u)
    lam = lambda_mt(u, m, alpha, delta) / s
    _, f = mt_series(np.maximum(-u.v, 0.0) / eta(s), m, u.n, alpha, delta)
    return lam * f


def g_llogl_check(profiles, ms, alpha, delta, q=None, bound_factor=10.0):
    """``A``-values ``int g (log(1+g))^q`` of stationary densities across ``m``.

    Returns ``(A_values, flag)``; the flag requires finite values with
    ``max A <= bound_factor * A[0]``.
    """
    if len(profiles) != len(ms) or not profiles:
        raise ParameterError("need one profile per m")
    n = profiles[0].n
    q = n / (n + 1.0) if q is None else check_positive(q, "q")
    A = [lorentz_zygmund_norm(stationary_density(u, m, alpha, delta), q, u.ball) for u, m in zip(profiles, ms)]
    A = np.array(A)
    flag = bool(np.all(np.isfinite(A)) and A.max() <= bound_factor * A[0])
    return A, flag


# ---------------------------------------------------------------------------
# estimator wrappers


class SobolevConstantEstimator(BaseEstimator):
    """``fit(n)`` stores the :class:`EstimateRecord` of :func:`estimate_sobolev_T`."""

    def __init__(self, p=1.0, backend="radial", R=1.0, size=257, flow_steps=200, family_size=24):
        self.p = p
        self.backend = backend
        self.R = R
        self.size = size
        self.flow_steps = flow_steps
        self.family_size = family_size

    def fit(self, X, y=None):
        budget = {"size": self.size, "flow_steps": self.flow_steps, "family_size": self.family_size}
        self.record_ = estimate_sobolev_T(int(X), self.p, self.backend, budget, self.R)
        self.estimate_ = self.record_.estimate
        return self


class MoserTrudingerAlphaEstimator(BaseEstimator):
    """``fit(n)`` brackets the Moser-Trudinger exponent on the log-cusp family."""

    def __init__(self, L_max=100.0, L_step=10.0, max_bisect=10, alpha0=1.0):
        self.L_max = L_max
        self.L_step = L_step
        self.max_bisect = max_bisect
        self.alpha0 = alpha0

    def fit(self, X, y=None):
        budget = {"L_max": self.L_max, "L_step": self.L_step, "max_bisect": self.max_bisect, "alpha0": self.alpha0}
        self.record_ = estimate_mt_alpha(int(X), "radial", budget)
        self.bracket_ = self.record_.bracket
        return self


# ---------------------------------------------------------------------------
# random sweeps


def random_admissible_profiles(ball, count, seed=0, knots=8):
    """Seeded admissible radial profiles with ``q = rho v'`` a random increasing spline.

    ``q`` interpolates a non-negative increasing sequence at ``knots`` points,
    so every profile lies strictly inside the discrete cone.
    """
    count = check_int(count, "count", minimum=0)
    rng = np.random.default_rng(seed)
    mids = ball.midpoints
    t = mids / ball.R ** 2
    out = []
    for _ in range(count):
        xs = np.sort(np.concatenate(([0.0, 1.0], rng.uniform(0.0, 1.0, knots - 2))))
        ys = np.cumsum(rng.exponential(1.0, knots))
        q = np.interp(t, xs, ys) * mids / ball.R ** 2 + rng.uniform(0.0, 1.0) * mids
        out.append(RadialProfile.from_slopes(ball, q / mids))
    return out


def random_sources(grid, count, seed=0, bumps=3):
    """Seeded non-negative planar sources: sums of Gaussian bumps with random centers."""
    count = check_int(count, "count", minimum=0)
    rng = np.random.default_rng(seed)
    X, Y = grid.coordinates
    inside = grid.interior
    xs, ys = X[inside], Y[inside]
    out = []
    for _ in range(count):
        vals = np.zeros_like(X)
        for _ in range(bumps):
            k = rng.integers(xs.size)
            width = rng.uniform(0.02, 0.2)
            vals = vals + rng.uniform(0.1, 10.0) * np.exp(-((X - xs[k]) ** 2 + (Y - ys[k]) ** 2) / (2 * width ** 2))
        out.append(GridField(grid, vals))
    return out
