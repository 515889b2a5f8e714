"""Slice reduction for radial potentials on the unit ball of C^2.

For ``u(w, xi) = V(|w|^2 + |xi|^2)`` the slice potential is

    v(xi) = kappa_1 int_{D_xi} (-u) u_{w wbar} dmu_w,   D_xi = {|w|^2 <= 1 - |xi|^2}.

With ``s = |xi|^2`` and one integration by parts in ``rho = |w|^2 + s`` this is
``v(s) = 4 pi int_s^1 (rho - s) V'(rho)^2 drho``, so ``v' = -4 pi Q(s)`` with
``Q(s) = int_s^1 V'^2`` and ``v'' = 4 pi V'(s)^2``. Both are evaluated exactly
for the piecewise-linear profile.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._validation import as_frozen_array, check_positive
from .domains import RadialProfile
from .exceptions import CapabilityError, ParameterError
from .functionals import lp_norm, ma_mass
from .radial import check_admissible, eigen_second

KAPPA_1 = 4.0


def _require_radial_c2(u):
    if not isinstance(u, RadialProfile):
        raise CapabilityError("slice reduction supports radial profiles only")
    if u.n != 2:
        raise CapabilityError(f"slice reduction is implemented for n = 2, got n = {u.n}")
    if not math.isclose(u.ball.R, 1.0):
        raise ParameterError("slice reduction expects the unit ball")
    check_admissible(u)


def _tail_sums(u):
    ball = u.ball
    g = u.dv ** 2 * ball.cell_widths
    Q = np.concatenate((np.cumsum(g[::-1])[::-1], [0.0]))
    P = np.concatenate((np.cumsum((g * ball.midpoints)[::-1])[::-1], [0.0]))
    return P, Q


def _node_slope_sq(u):
    """``V'(s)^2`` at the nodes, linear between cell midpoints."""
    ball = u.ball
    return np.interp(ball.rho_grid, ball.midpoints, u.dv ** 2)


@dataclass(frozen=True, eq=False)
class SlicePotential:
    """Radial slice potential ``v(s)``, ``s = |xi|^2``, on the unit disc."""

    s_grid: np.ndarray
    v: np.ndarray
    source: RadialProfile

    def __post_init__(self):
        object.__setattr__(self, "s_grid", as_frozen_array(self.s_grid))
        object.__setattr__(self, "v", as_frozen_array(self.v))

    def evaluate(self, x, y):
        """``v`` at points ``xi = x + i y`` of the closed unit disc."""
        s = np.asarray(x, dtype=float) ** 2 + np.asarray(y, dtype=float) ** 2
        return np.interp(s, self.s_grid, self.v, right=0.0)

    def laplacian(self):
        """``Delta_xi v = 4 (v' + s v'')`` at the nodes of ``s_grid``."""
        _, Q = _tail_sums(self.source)
        s = self.s_grid
        return 16.0 * math.pi * (s * _node_slope_sq(self.source) - Q)


def slice_potential(u):
    """Slice potential of a radial plurisubharmonic profile on the unit ball of C^2.

    Examples
    --------
    >>> from cmalab.domains import RadialBall
    >>> ball = RadialBall.uniform(2, size=101)
    >>> sp = slice_potential(RadialProfile.from_function(ball, lambda r: r - 1))
    >>> bool(np.allclose(sp.v, 2 * np.pi * (1 - ball.rho_grid) ** 2))
    True
    """
    _require_radial_c2(u)
    P, Q = _tail_sums(u)
    s = u.ball.rho_grid
    v = 4.0 * math.pi * (P - s * Q)
    return SlicePotential(s, np.maximum(v, 0.0), u)


def _abs_trapezoid(g, s):
    """``int |g| ds`` for piecewise-linear ``g``, splitting cells at sign changes."""
    g0, g1 = g[:-1], g[1:]
    h = np.diff(s)
    same = g0 * g1 >= 0
    full = 0.5 * h * (np.abs(g0) + np.abs(g1))
    denom = np.where(same, 1.0, np.abs(g0) + np.abs(g1))
    split = 0.5 * h * (g0 ** 2 + g1 ** 2) / denom
    return float(np.sum(np.where(same, full, split)))


class SliceMassResult(NamedTuple):
    integral: float
    twice_mass: float
    boundary_ok: bool
    ratio: float
    signed_integral: float
    max_boundary_term: float


def boundary_terms(u, n_angles=16):
    """Normal derivative ``G`` of ``(-u) u_{w wbar}`` on ``dD_xi`` for all sampled ``(theta, s)``.

    Since ``u = 0`` there, ``G = -2 |w| V'(1) u_{w wbar}`` with
    ``u_{w wbar} = V'(1) + |w|^2 V''(1)``, a convex combination of the two
    Hessian eigenvalues.
    """
    _require_radial_c2(u)
    ball = u.ball
    s = ball.rho_grid[:-1]
    slope = u.dv[-1]
    e2 = max(float(eigen_second(u)[-1]), 0.0)
    theta_w = 1.0 - s
    uww = (1.0 - theta_w) * slope + theta_w * e2
    G = -2.0 * np.sqrt(theta_w) * slope * uww
    # radial source: identical on every angle of the boundary circle
    return np.broadcast_to(G, (int(n_angles), G.size))


def slice_mass_check(u, slack=0.0):
    """Compare ``int_D |Delta_xi v|`` with ``2 M(u)`` and check the boundary-term sign.

    Returns a :class:`SliceMassResult`; ``ratio`` is ``integral / (2 M)``.
    """
    slack = check_positive(slack, "slack", strict=False)
    sp = slice_potential(u)
    lap = sp.laplacian()
    s = sp.s_grid
    integral = math.pi * _abs_trapezoid(lap, s)
    signed = math.pi * float(np.sum(0.5 * np.diff(s) * (lap[:-1] + lap[1:])))
    twice_mass = 2.0 * ma_mass(u)
    G = boundary_terms(u)
    ok = bool(np.all(G <= 0.0)) and integral <= twice_mass * (1.0 + slack)
    ratio = integral / twice_mass if twice_mass > 0 else 0.0
    return SliceMassResult(integral, twice_mass, ok, ratio, signed, float(G.max()))


def dimension_reduction_bound(u, p):
    """``(||u||_{L^p}, M(u)^(1/n))`` for the empirical constant in the dimension reduction."""
    p = check_positive(p, "p")
    if not isinstance(u, RadialProfile):
        raise CapabilityError("dimension_reduction_bound supports radial profiles only")
    return lp_norm(u, p), ma_mass(u) ** (1.0 / u.n)
