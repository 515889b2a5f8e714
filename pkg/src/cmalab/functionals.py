"""Scalar functionals of radial profiles and planar fields.

Interface quantities (energy, semi-norm, mass) use the normalization
``(dd^c u)^n = kappa_n det(u_{i jbar}) dmu`` with ``kappa_n = 4^n n!``, so that
``n = 1`` reduces to ``Delta u dmu``. The variational quantities used by the
flows (:func:`j_delta`, :func:`lambda_mt`) work with the raw determinant.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from ._validation import check_dimension, check_int, check_positive
from .domains import GridField, PlanarGrid, RadialBall, RadialProfile, grid_laplacian, radial_measure_constant
from .exceptions import (
    AdmissibilityError,
    DegenerateInputError,
    ParameterError,
    QuadratureMismatchError,
    ShapeMismatchError,
)
from .radial import RadialRHS, check_admissible, radial_det

ENERGY_RTOL = 1e-8


@dataclass(frozen=True)
class ConventionConstants:
    """Normalization constants for dimension ``n``."""

    n: int

    def __post_init__(self):
        check_dimension(self.n)

    @property
    def kappa_n(self):
        return 4.0 ** self.n * math.factorial(self.n)

    @property
    def c_n(self):
        return radial_measure_constant(self.n)

    def as_dict(self):
        return {"n": self.n, "kappa_n": self.kappa_n, "c_n": self.c_n}


# ---------------------------------------------------------------------------
# dispatch helpers


def _values_weights(u):
    if isinstance(u, RadialProfile):
        return u.v, u.ball.weights
    if isinstance(u, GridField):
        return u.values, u.grid.weights
    raise TypeError(f"expected RadialProfile or GridField, got {type(u).__name__}")


def _resolution(u):
    if isinstance(u, RadialProfile):
        return int(u.ball.size)
    return int(u.grid.shape[1] - 1)


def _planar_laplacian(u, check):
    # same operator as the Poisson solver and the flows, so solver outputs are consistent
    lap = grid_laplacian(u, scheme="symmetric").values
    if check:
        scale = max(1.0, float(np.max(np.abs(lap))))
        if np.any(lap[u.grid.interior] < -1e-9 * scale):
            raise AdmissibilityError("planar field is not subharmonic")
    return lap


def raw_det(u, check=True):
    """``det(u_{i jbar})`` at every node (``Delta u / 4`` on planar grids)."""
    if isinstance(u, RadialProfile):
        if check:
            check_admissible(u)
        return radial_det(u)
    if isinstance(u, GridField):
        return _planar_laplacian(u, check) / 4.0
    raise TypeError(f"expected RadialProfile or GridField, got {type(u).__name__}")


def _integrate(values, u):
    _, w = _values_weights(u)
    return float(np.vdot(w, values))


# ---------------------------------------------------------------------------
# energy, semi-norm, mass


def energy_by_parts(u):
    """Radial energy as ``kappa_n c_n / (n (n+1)) int rho^n (v')^(n+1) drho``."""
    ball = u.ball
    n = ball.n
    K = ConventionConstants(n).kappa_n * ball.c_n / (n * (n + 1))
    return K * float(np.sum(ball.midpoints ** n * u.dv ** (n + 1) * ball.cell_widths))


def ma_energy(u, check=True, rtol=ENERGY_RTOL):
    """Monge-Ampere energy ``E(u) = 1/(n+1) int (-u) (dd^c u)^n``.

    For radial profiles the direct quadrature is compared with the
    integrated-by-parts form and a :class:`QuadratureMismatchError` is raised
    when they disagree by more than ``rtol``.

    Examples
    --------
    >>> ball = RadialBall.uniform(1, size=257)
    >>> u = RadialProfile.from_function(ball, lambda r: r - 1)
    >>> round(ma_energy(u) / math.pi, 10)
    1.0
    """
    vals, w = _values_weights(u)
    n = u.n
    kappa = ConventionConstants(n).kappa_n
    det = raw_det(u, check)
    direct = kappa / (n + 1) * float(np.vdot(w, -vals * det))
    if isinstance(u, RadialProfile):
        parts = energy_by_parts(u)
        scale = max(abs(direct), abs(parts), np.finfo(float).tiny)
        if abs(direct - parts) > rtol * scale:
            raise QuadratureMismatchError(
                f"energy quadratures disagree: direct {direct!r}, by parts {parts!r}"
            )
    return max(direct, 0.0)


def psh_seminorm(u, check=True):
    """``||u|| = E(u)^(1/(n+1))``."""
    return ma_energy(u, check) ** (1.0 / (u.n + 1))


def ma_mass(u, check=True):
    """Total Monge-Ampere mass ``int kappa_n det dmu``."""
    kappa = ConventionConstants(u.n).kappa_n
    return max(kappa * _integrate(raw_det(u, check), u), 0.0)


def dirichlet_energy(u):
    """``1/2 int |grad u|^2`` by forward differences (planar fields only)."""
    if not isinstance(u, GridField):
        raise TypeError("dirichlet_energy needs a GridField")
    h = u.grid.h
    v = u.values
    gx = np.diff(v, axis=1) / h
    gy = np.diff(v, axis=0) / h
    return 0.5 * h * h * float(np.sum(gx ** 2) + np.sum(gy ** 2))


def lp_norm(u, p):
    """``(int |u|^p dmu)^(1/p)``."""
    p = check_positive(p, "p")
    vals, w = _values_weights(u)
    return float(np.vdot(w, np.abs(vals) ** p)) ** (1.0 / p)


def _nonzero_seminorm(u):
    norm = psh_seminorm(u)
    if norm <= 0.0 or not np.isfinite(norm):
        raise DegenerateInputError("seminorm of the input vanishes")
    return norm


def log_mt_integral(u, alpha, theta):
    """Logarithm of :func:`mt_integral`, safe against overflow."""
    alpha = check_positive(alpha, "alpha")
    theta = check_positive(theta, "theta")
    norm = _nonzero_seminorm(u)
    return log_integral_exp(alpha * (np.maximum(-_values_weights(u)[0], 0.0) / norm) ** theta, u)


def log_integral_exp(expo, u):
    """``log int exp(expo) dmu`` over the domain of ``u``, in log space."""
    if isinstance(u, RadialProfile):
        return float(logsumexp(np.asarray(expo) + u.ball.log_weights))
    w = u.grid.weights
    pos = w > 0
    return float(logsumexp(np.asarray(expo)[pos], b=w[pos]))


def mt_integral(u, alpha, theta):
    """``int exp(alpha (-u/||u||)^theta) dmu``; ``inf`` once it leaves double range."""
    lg = log_mt_integral(u, alpha, theta)
    return math.exp(lg) if lg < 709.0 else math.inf


def sobolev_ratio(u, p):
    """``E(u) / ||u||_{L^(p+1)}^(n+1)`` for one candidate ``u``."""
    p = check_positive(p, "p")
    denom = lp_norm(u, p + 1.0) ** (u.n + 1)
    if denom <= 0.0:
        raise DegenerateInputError("L^(p+1) norm of the input vanishes")
    return ma_energy(u) / denom


# ---------------------------------------------------------------------------
# cutoff density and its antiderivative


def _cutoff_pieces(M, p):
    M = check_positive(M, "M")
    if M < 1.0:
        raise ParameterError(f"M must be at least 1, got {M!r}")
    gap = math.exp(-M)
    a = M + gap
    return M, a, M ** p, gap / (a * a), gap


def cutoff_f(t, M, p):
    """Truncated power ``|t|^p`` capped by the decaying tail ``e^(-M) t^(-2)``.

    The gap ``(M, M + e^(-M))`` is bridged linearly.
    """
    M, a, fM, fa, gap = _cutoff_pieces(M, p)
    s = np.abs(np.asarray(t, dtype=float))
    low = np.power(np.minimum(s, M), p)
    mid = fM + (fa - fM) * (s - M) / gap
    tail = math.exp(-M) / np.maximum(s, a) ** 2
    out = np.where(s <= M, low, np.where(s < a, mid, tail))
    return float(out) if np.ndim(out) == 0 else out


def cutoff_f_prime(t, M, p):
    """Derivative of :func:`cutoff_f` with respect to ``|t|``."""
    M, a, fM, fa, gap = _cutoff_pieces(M, p)
    s = np.abs(np.asarray(t, dtype=float))
    with np.errstate(divide="ignore"):
        low = p * np.power(np.minimum(s, M), p - 1.0)
    mid = (fa - fM) / gap
    tail = -2.0 * math.exp(-M) / np.maximum(s, a) ** 3
    out = np.where(s <= M, low, np.where(s < a, mid, tail))
    return float(out) if np.ndim(out) == 0 else out


def cutoff_F(t, M, p):
    """``int_0^|t| cutoff_f``, in closed form on every branch."""
    M, a, fM, fa, gap = _cutoff_pieces(M, p)
    s = np.abs(np.asarray(t, dtype=float))
    low = np.minimum(s, M) ** (p + 1.0) / (p + 1.0)
    x = np.clip(s, M, a) - M
    mid = fM * x + 0.5 * (fa - fM) * x * x / gap
    y = np.maximum(s, a)
    tail = math.exp(-M) * (1.0 / a - 1.0 / y)
    out = low + mid + tail
    return float(out) if np.ndim(out) == 0 else out


def _sobolev_parts(u, p, M, delta):
    p = check_positive(p, "p")
    if M <= 1.0:
        raise ParameterError(f"M must exceed 1, got {M!r}")
    delta = check_positive(delta, "delta", strict=False)
    vals, _ = _values_weights(u)
    Fd = cutoff_F(vals, M, p) + delta * np.abs(vals)
    B = (p + 1.0) * _integrate(Fd, u)
    return p, delta, B


def beta_delta(u, p, M, delta):
    """``[(p+1) int F_delta(u)]^((n-p)/(p+1))``."""
    p, _, B = _sobolev_parts(u, p, M, delta)
    with np.errstate(divide="ignore"):
        return float(np.power(B, (u.n - p) / (p + 1.0)))


def j_delta(u, lam, p, M, delta):
    """Variational functional of the Sobolev flow.

    Returns ``(J, beta)`` with
    ``J = int (-u) det - lam [(p+1) int F_delta(u)]^((n+1)/(p+1))`` and ``beta``
    the factor ``beta_delta(u)``.
    """
    p, _, B = _sobolev_parts(u, p, M, delta)
    vals, _ = _values_weights(u)
    first = _integrate(-vals * raw_det(u), u)
    n = u.n
    J = first - lam * B ** ((n + 1.0) / (p + 1.0))
    with np.errstate(divide="ignore"):
        beta = float(np.power(B, (n - p) / (p + 1.0)))
    return J, beta


def _check_same_shape(a, b):
    if np.shape(a) != np.shape(b):
        raise ShapeMismatchError(f"shapes differ: {np.shape(a)} vs {np.shape(b)}")


def _density_values(psi, u):
    if isinstance(psi, (RadialRHS,)):
        vals = psi.f
    elif isinstance(psi, GridField):
        vals = psi.values
    else:
        vals = np.asarray(psi, dtype=float)
    _check_same_shape(vals, _values_weights(u)[0])
    return vals


def e_psi(u, psi, lam, p):
    """``int (-u) Psi - lam [int |u|^(p+1)]^((n+1)/(p+1))`` for a fixed density ``Psi``."""
    p = check_positive(p, "p")
    vals, _ = _values_weights(u)
    psi_vals = _density_values(psi, u)
    lin = _integrate(-vals * psi_vals, u)
    pw = _integrate(np.abs(vals) ** (p + 1.0), u)
    return lin - lam * pw ** ((u.n + 1.0) / (p + 1.0))


def e_psi_path(u1, u2, psi, lam, p):
    """Map ``t -> e_psi(u1 + t (u2 - u1))`` for concavity checks."""
    v1, _ = _values_weights(u1)
    v2, _ = _values_weights(u2)
    _check_same_shape(v1, v2)

    def phi(t):
        vals = v1 + t * (v2 - v1)
        if isinstance(u1, RadialProfile):
            ut = RadialProfile(u1.ball, vals)
        else:
            ut = GridField(u1.grid, vals)
        return e_psi(ut, psi, lam, p)

    return phi


# ---------------------------------------------------------------------------
# truncated exponential series


def eta(t):
    return math.exp(t - 1.0)


def mt_series_log(t, m, n, alpha, delta=0.0):
    """``(log F_m, log f_m)`` without the ``delta`` terms, vectorized over ``t``."""
    n = check_dimension(n)
    m = check_int(m, "m", minimum=1)
    if m < n:
        raise ParameterError(f"m must be >= n, got m={m}, n={n}")
    alpha = check_positive(alpha, "alpha")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ParameterError("t must be >= 0")
    beta = (n + 1.0) / n
    j = np.arange(n, m + 1, dtype=float).reshape((-1,) + (1,) * t.ndim)
    with np.errstate(divide="ignore"):
        logt = np.log(t)
    coef = j * math.log(alpha) - gammaln(j + 1.0)
    logF = logsumexp(coef + j * beta * logt, axis=0)
    logf = logsumexp(coef + np.log(j * beta) + (j * beta - 1.0) * logt, axis=0)
    return logF, logf


def mt_series_prime(t, m, n, alpha):
    """Second derivative ``f_m'(t)`` of the truncated series (``delta`` drops out)."""
    n = check_dimension(n)
    m = check_int(m, "m", minimum=n)
    alpha = check_positive(alpha, "alpha")
    t = np.asarray(t, dtype=float)
    beta = (n + 1.0) / n
    j = np.arange(n, m + 1, dtype=float).reshape((-1,) + (1,) * t.ndim)
    expo = j * beta - 2.0
    with np.errstate(divide="ignore"):
        logt = np.log(t)
    powers = np.where(expo == 0.0, 0.0, expo * logt)
    logc = j * math.log(alpha) - gammaln(j + 1.0) + np.log(j * beta * (j * beta - 1.0))
    out = np.exp(logsumexp(logc + powers, axis=0))
    return float(out) if np.ndim(out) == 0 else out


def mt_series(t, m, n, alpha, delta=0.0):
    """Truncated series ``F_m^delta(t)`` and its derivative ``f_m^delta(t)``.

    ``F_m(t) = sum_{j=n}^m alpha^j / j! t^(j beta)`` with ``beta = (n+1)/n``;
    all terms are positive and are summed in log space, which guards against
    overflow when ``alpha t^beta`` is large.

    Examples
    --------
    >>> mt_series(1.0, 1, 1, 1.0)
    (1.0, 2.0)
    """
    delta = check_positive(delta, "delta", strict=False)
    logF, logf = mt_series_log(t, m, n, alpha)
    with np.errstate(over="ignore"):
        F = np.exp(logF) + delta * np.asarray(t, dtype=float)
        f = np.exp(logf) + delta
    if np.ndim(F) == 0:
        return float(F), float(f)
    return F, f


def _mt_argument(u, norm=None):
    if norm is None:
        norm = _nonzero_seminorm(u)
    vals, _ = _values_weights(u)
    return np.maximum(-vals, 0.0) / eta(norm)


def mt_functional(u, m, alpha, delta=0.0):
    """``int F_m^delta(-u / eta(||u||)) dmu`` with ``eta(t) = e^(t-1)``."""
    F, _ = mt_series(_mt_argument(u), m, u.n, alpha, delta)
    return _integrate(F, u)


def lambda_mt(u, m, alpha, delta=0.0):
    """Multiplier ``(n+1) E_det(u) / int (-u) f_m^delta(-u/eta(||u||))``.

    ``E_det`` is the energy with the raw determinant, so the numerator is
    ``int (-u) det``.
    """
    vals, _ = _values_weights(u)
    _, f = mt_series(_mt_argument(u), m, u.n, alpha, delta)
    num = _integrate(-vals * raw_det(u), u)
    den = _integrate(-vals * f, u)
    if den <= 0.0 or not np.isfinite(den):
        raise DegenerateInputError("lambda_mt denominator vanishes")
    return num / den


def lorentz_zygmund_norm(f, q, domain=None):
    """``int |f| (log(1 + |f|))^q dmu``.

    ``f`` is a :class:`RadialRHS`, a :class:`GridField`, or raw samples with
    an explicit ``domain``.
    """
    q = check_positive(q, "q")
    if isinstance(f, RadialRHS):
        vals, domain = f.f, f.ball
    elif isinstance(f, GridField):
        vals, domain = f.values, f.grid
    else:
        vals = np.asarray(f, dtype=float)
        if not isinstance(domain, (RadialBall, PlanarGrid)):
            raise ParameterError("raw samples need a RadialBall or PlanarGrid domain")
    a = np.abs(vals)
    return float(np.vdot(domain.weights, a * np.log1p(a) ** q))


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class FunctionalReport:
    """Interface functionals of one input with its convention constants."""

    energy: float
    seminorm: float
    mass: float
    lp_norms: dict
    convention: ConventionConstants
    name: str = "u"
    grid_resolution: int = 0
    extra: dict = field(default_factory=dict)

    def records(self):
        base = {"n": self.convention.n, "kappa": self.convention.kappa_n, "grid_resolution": self.grid_resolution}
        rows = [
            dict(base, name=f"{self.name}.energy", value=self.energy),
            dict(base, name=f"{self.name}.seminorm", value=self.seminorm),
            dict(base, name=f"{self.name}.mass", value=self.mass),
        ]
        for p in sorted(self.lp_norms):
            rows.append(dict(base, name=f"{self.name}.L{p:g}", value=self.lp_norms[p]))
        for key in sorted(self.extra):
            rows.append(dict(base, name=f"{self.name}.{key}", value=self.extra[key]))
        return rows

    def to_json(self):
        return json.dumps(self.records(), sort_keys=True)


def functional_report(u, ps=(1.0, 2.0), name="u"):
    """Collect energy, semi-norm, mass and ``L^p`` norms of ``u``."""
    E = ma_energy(u)
    return FunctionalReport(
        energy=E,
        seminorm=E ** (1.0 / (u.n + 1)),
        mass=ma_mass(u),
        lp_norms={float(p): lp_norm(u, p) for p in ps},
        convention=ConventionConstants(u.n),
        name=name,
        grid_resolution=_resolution(u),
    )
