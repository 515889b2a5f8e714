"""Dirichlet Poisson problems on planar grids (complex dimension one).

For ``n = 1`` the complex Hessian determinant is ``Delta u / 4`` and the
Monge-Ampere measure is ``Delta u dmu``. The solver works with the symmetric
embedded-boundary Laplacian so that the system is symmetric positive definite
and conjugate gradients apply; on rectangles it is the ordinary 5-point
stencil.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg

from ._validation import check_positive
from .domains import GridField, PlanarGrid
from .exceptions import InvalidRHSError, ParameterError, SolverFailureError

SOLVER_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class PoissonSystem:
    """``Delta u = rhs`` in the domain, ``u = 0`` on its boundary.

    ``rhs`` is the Monge-Ampere density ``4 det(u_{z zbar})``; it must be
    non-negative, which makes the solution non-positive.
    """

    grid: PlanarGrid
    rhs: GridField
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.rhs.grid is not self.grid:
            raise InvalidRHSError("rhs lives on a different grid")
        vals = self.rhs.interior_values
        scale = max(1.0, float(np.max(np.abs(vals))) if vals.size else 1.0)
        if np.any(vals < -1e-12 * scale):
            raise InvalidRHSError("rhs must be non-negative")

    @classmethod
    def from_function(cls, grid, func):
        return cls(grid, GridField.from_function(grid, func))

    @classmethod
    def from_det(cls, f):
        """System for ``det(u_{z zbar}) = f``, i.e. ``Delta u = 4 f``."""
        return cls(f.grid, f.scaled(4.0))


def _spd_operator(grid):
    A = -grid.laplacian_matrix("symmetric")
    return sparse.csr_matrix(A)


def solve_spd(A, b, rtol=SOLVER_RTOL, maxiter=None, x0=None):
    """Jacobi-preconditioned conjugate gradients; returns ``(x, stats)``."""
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SolverFailureError("operator is not positive definite", {"iterations": 0})
    M = sparse.diags(1.0 / diag)
    if maxiter is None:
        maxiter = max(1000, 10 * A.shape[0])
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), {"iterations": 0, "residual": 0.0}
    count = [0]

    def tick(_):
        count[0] += 1

    x, info = cg(A, b, x0=x0, rtol=rtol, atol=0.0, maxiter=maxiter, M=M, callback=tick)
    res = float(np.linalg.norm(b - A @ x)) / bnorm
    stats = {"iterations": count[0], "residual": res}
    if info != 0 or res > 10.0 * rtol:
        raise SolverFailureError(f"conjugate gradients did not converge (residual {res:.3e})", stats)
    return x, stats


def poisson_solve(system, rtol=SOLVER_RTOL):
    """Solve a :class:`PoissonSystem`; iteration count and residual go to ``system.stats``.

    Examples
    --------
    >>> grid = PlanarGrid.unit_square(8)
    >>> u = poisson_solve(PoissonSystem.from_function(grid, lambda x, y: 0 * x))
    >>> float(abs(u.values).max())
    0.0
    """
    grid = system.grid
    A = _spd_operator(grid)
    b = -system.rhs.interior_values
    x, stats = solve_spd(A, b, rtol=rtol)
    system.stats.update(stats)
    x = np.minimum(x, 0.0)
    return GridField.from_interior(grid, x, potential=True)


def brezis_merle_check(u, f, delta):
    """Exponential integrability against the classical Brezis-Merle bound.

    ``u`` solves ``-Delta u = f`` with zero boundary values, so ``-u >= 0``
    when ``f >= 0``. Returns ``(lhs, bound, holds)`` with
    ``lhs = int exp((4 pi - delta) |u| / ||f||_1)`` and
    ``bound = 4 pi^2 diam^2 / delta``.
    """
    delta = check_positive(delta, "delta")
    if delta >= 4.0 * math.pi:
        raise ParameterError(f"delta must lie in (0, 4 pi), got {delta!r}")
    if np.any(f.values < 0):
        raise InvalidRHSError("f must be non-negative")
    w = u.grid.weights
    fnorm = float(np.vdot(w, f.values))
    if fnorm <= 0.0:
        raise InvalidRHSError("f must have positive mass")
    expo = (4.0 * math.pi - delta) * np.abs(u.values) / fnorm
    lhs = float(np.vdot(w, np.exp(expo)))
    bound = 4.0 * math.pi ** 2 * u.grid.diameter ** 2 / delta
    return lhs, bound, bool(lhs <= bound)
