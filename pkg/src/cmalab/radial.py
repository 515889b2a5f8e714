"""Radial complex Monge-Ampere operator on balls in C^n.

For ``u(z) = v(|z|^2)`` the complex Hessian has eigenvalues ``v'`` (n-1 times)
and ``v' + rho v''``, so

    det(u_{i jbar}) = (v')^(n-1) (v' + rho v'') = (n rho^(n-1))^(-1) d/drho [ (rho v')^n ].

The discrete operator is conservative in ``W = (rho v')^n``: ``W`` lives at
cell midpoints and the determinant at node ``k`` is the jump of ``W`` across
the node's dual cell divided by the jump of ``rho^n``. Forward application and
the exact Dirichlet solve are therefore inverse to each other up to rounding.
"""

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from sklearn.isotonic import isotonic_regression

from ._validation import as_frozen_array, check_positive
from .domains import RadialBall, RadialProfile
from .exceptions import AdmissibilityError, InvalidRHSError, ShapeMismatchError

ADMISSIBILITY_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class RadialRHS:
    """Non-negative determinant density sampled at the nodes of a ball."""

    ball: RadialBall
    f: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float)
        if f.shape != self.ball.rho_grid.shape:
            raise ShapeMismatchError("rhs does not match rho_grid")
        if not np.all(np.isfinite(f)):
            raise InvalidRHSError("rhs must be finite")
        scale = max(1.0, float(np.max(np.abs(f))))
        if np.any(f < -1e-12 * scale):
            raise InvalidRHSError("rhs must be non-negative")
        object.__setattr__(self, "f", as_frozen_array(np.clip(f, 0.0, None)))

    @property
    def values(self):
        return self.f

    @property
    def domain(self):
        return self.ball

    @classmethod
    def from_function(cls, ball, func):
        return cls(ball, func(ball.rho_grid))


def _power_jumps(ball):
    """``b_{k+1/2}^n - b_{k-1/2}^n`` over the dual cells (length N+1)."""
    b = ball._dual_edges()
    return np.diff(b ** ball.n)


def _w_extended(profile):
    """``W`` at ``rho=0``, at every midpoint, and extrapolated to ``rho=R^2``."""
    ball = profile.ball
    q = profile.q
    q_bnd = ball.rho_grid[-1] * profile.dv[-1]
    n = ball.n
    return np.concatenate(([0.0], q ** n, [q_bnd ** n]))


def eigen_second(profile):
    """Discrete ``v' + rho v''`` at nodes 0..N-1 (the radial Hessian eigenvalue)."""
    q = np.concatenate(([0.0], profile.q))
    mids = profile.ball.midpoints
    span = np.diff(np.concatenate(([0.0], mids)))
    return np.diff(q) / span


def admissibility_defect(profile):
    """Largest violation of ``q >= 0`` and ``q`` non-decreasing, relative to ``max |q|``."""
    q = np.concatenate(([0.0], profile.q))
    scale = max(float(np.max(np.abs(q))), np.finfo(float).tiny)
    drops = -np.diff(q)
    return max(0.0, float(np.max(drops)) / scale, float(-np.min(q)) / scale)


def check_admissible(profile, tol=1e-9):
    """Raise :class:`AdmissibilityError` unless the profile is discretely plurisubharmonic."""
    defect = admissibility_defect(profile)
    if defect > tol:
        raise AdmissibilityError(f"profile violates the plurisubharmonic cone (defect {defect:.3e})")
    if np.any(profile.v > 1e-12 * max(1.0, float(np.max(np.abs(profile.v))))):
        raise AdmissibilityError("profile must be <= 0")
    return profile


def radial_det(profile):
    """Discrete ``det(u_{i jbar})`` at every node (boundary node extrapolated)."""
    return np.diff(_w_extended(profile)) / _power_jumps(profile.ball)


def radial_ma_apply(profile, check=True):
    """Forward operator ``v -> det(u_{i jbar})`` as a :class:`RadialRHS`.

    Examples
    --------
    >>> ball = RadialBall.uniform(2, size=11)
    >>> rhs = radial_ma_apply(RadialProfile.from_function(ball, lambda r: r - 1))
    >>> bool(np.allclose(rhs.f, 1.0))
    True
    """
    if check:
        check_admissible(profile)
    return RadialRHS(profile.ball, radial_det(profile))


def radial_ma_solve(rhs):
    """Solve ``det(u_{i jbar}) = f`` in the ball with ``u = 0`` on the boundary.

    Integrates ``W(rho) = n int_0^rho s^(n-1) f(s) ds`` over dual cells, then
    ``v' = W^(1/n) / rho`` and ``v(rho) = -int_rho^{R^2} v'``.
    """
    if not isinstance(rhs, RadialRHS):
        raise InvalidRHSError("radial_ma_solve needs a RadialRHS")
    ball = rhs.ball
    jumps = _power_jumps(ball)[:-1]
    W = np.cumsum(rhs.f[:-1] * jumps)
    dv = W ** (1.0 / ball.n) / ball.midpoints
    return _profile_from_slopes(ball, dv)


def _profile_from_slopes(ball, dv):
    return RadialProfile.from_slopes(ball, dv)


def admissibility_project(profile, floor=ADMISSIBILITY_FLOOR):
    """Project a raw profile back into the discrete plurisubharmonic cone.

    The slope variable ``q = rho v'`` minus ``floor * rho`` is replaced by its
    weighted isotonic (non-decreasing) regression, clipped at zero; the profile
    is rebuilt by integrating from the boundary. Afterwards ``v' >= floor`` and
    ``v' + rho v'' >= floor``. Admissible inputs are returned unchanged.
    """
    floor = check_positive(floor, "floor", strict=False)
    ball = profile.ball
    mids = ball.midpoints
    shifted = profile.q - floor * mids
    ext = np.concatenate(([0.0], shifted))
    if np.all(np.diff(ext) >= 0.0):
        return profile
    fitted = isotonic_regression(shifted, sample_weight=ball.cell_widths, increasing=True)
    fitted = np.maximum(fitted, 0.0)
    return _profile_from_slopes(ball, (fitted + floor * mids) / mids)


def log_det_jacobian(profile):
    """Sparse Jacobian of ``log det`` with respect to the nodal values ``v_0..v_{N-1}``.

    ``W_k = q_k^n`` depends on ``v_k, v_{k+1}``; ``det_k`` on ``W_{k-1}, W_k``.
    """
    ball = profile.ball
    n = ball.n
    N = ball.size - 1
    mids, h = ball.midpoints, ball.cell_widths
    q = profile.q
    dW = n * q ** (n - 1) * mids / h  # dW_k/dv_{k+1} = dW_k, dW_k/dv_k = -dW_k
    jumps = _power_jumps(ball)[:-1]
    det = radial_det(profile)[:-1]
    scale = 1.0 / (det * jumps)
    # row k: (W_k - W_{k-1}); W_k -> (v_k, v_{k+1}), W_{k-1} -> (v_{k-1}, v_k)
    main = -dW.copy()
    main[1:] -= dW[:-1]
    upper = dW[:-1]
    lower = dW[:-1]
    J = sparse.diags([lower, main, upper], [-1, 0, 1], shape=(N, N), format="csr")
    return sparse.diags(scale) @ J
