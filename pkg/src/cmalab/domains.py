"""Domains, discrete fields and quadrature.

Two discretizations are supported:

* radial balls in C^n, where a radial potential is stored as a function of
  ``rho = |z|^2`` on a strictly increasing grid ``0 = rho_0 < ... < rho_N = R^2``;
* planar (n = 1) uniform grids over rectangles or discs, with unequal-arm
  stencils at nodes next to a curved boundary.

All integrals are against Lebesgue measure on R^{2n}. For radial integrands
the measure is ``c_n rho^(n-1) d rho`` with ``c_n = pi^n / (n-1)!``.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import ndimage, optimize, sparse
from scipy.special import logsumexp

from ._validation import as_frozen_array, check_dimension, check_int, check_positive
from .exceptions import InconsistentMaskError, InvalidDomainError, ShapeMismatchError

EXTERIOR, BOUNDARY, INTERIOR = 0, 1, 2

# arm order used by PlanarGrid.offsets: +x, -x, +y, -y
_ARMS = ((1, 0), (-1, 0), (0, 1), (0, -1))


def radial_measure_constant(n):
    """Return ``c_n = pi^n / (n-1)!``, so that ``d mu = c_n rho^(n-1) d rho``."""
    n = check_dimension(n)
    return math.pi ** n / math.factorial(n - 1)


# ---------------------------------------------------------------------------
# radial balls
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RadialBall:
    """Ball of radius ``R`` in C^n discretized in ``rho = |z|^2``.

    Parameters
    ----------
    n : int
        Complex dimension.
    R : float
        Radius.
    rho_grid : array_like
        Strictly increasing nodes with ``rho_grid[0] == 0`` and
        ``rho_grid[-1] == R**2``.
    """

    n: int
    R: float
    rho_grid: np.ndarray

    def __post_init__(self):
        n = check_dimension(self.n)
        R = check_positive(self.R, "R")
        rho = np.asarray(self.rho_grid, dtype=float)
        if rho.ndim != 1 or rho.size < 2:
            raise InvalidDomainError("rho_grid needs at least 2 points")
        if rho[0] != 0.0:
            raise InvalidDomainError("rho_grid must start at 0")
        if not math.isclose(rho[-1], R * R, rel_tol=1e-12):
            raise InvalidDomainError(f"rho_grid must end at R^2={R * R}, got {rho[-1]}")
        if np.any(np.diff(rho) <= 0):
            raise InvalidDomainError("rho_grid must be strictly increasing")
        rho = rho.copy()
        rho[-1] = R * R
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "rho_grid", as_frozen_array(rho))

    @classmethod
    def uniform(cls, n, R=1.0, size=2048):
        size = check_int(size, "size", minimum=2)
        return cls(n, R, np.linspace(0.0, R * R, size))

    @classmethod
    def geometric(cls, n, R=1.0, size=2048, first_cell=None):
        """Grid whose cell widths grow geometrically away from the origin.

        ``first_cell`` defaults to ``1e-12 * R**2``; the growth factor is
        solved for so that the cells exactly fill ``[0, R^2]``.
        """
        size = check_int(size, "size", minimum=3)
        R = check_positive(R, "R")
        total = R * R
        h0 = 1e-12 * total if first_cell is None else check_positive(first_cell, "first_cell")
        cells = size - 1
        if h0 * cells >= total:
            return cls.uniform(n, R, size)

        # solve h0 * (g^cells - 1) / (g - 1) = total in log form
        def log_expm1(a):
            return a + math.log(-math.expm1(-a))

        def excess(log_g):
            return math.log(h0) + log_expm1(cells * log_g) - log_expm1(log_g) - math.log(total)

        hi = 1.0
        while excess(hi) < 0:
            hi *= 2.0
        log_g = optimize.brentq(excess, 1e-14, hi, xtol=1e-15, rtol=1e-15)
        widths = h0 * np.exp(log_g * np.arange(cells))
        rho = np.concatenate(([0.0], np.cumsum(widths)))
        rho *= total / rho[-1]
        return cls(n, R, rho)

    @property
    def size(self):
        return self.rho_grid.size

    @property
    def c_n(self):
        return radial_measure_constant(self.n)

    @property
    def cell_widths(self):
        return np.diff(self.rho_grid)

    @property
    def midpoints(self):
        rho = self.rho_grid
        return 0.5 * (rho[1:] + rho[:-1])

    @property
    def volume(self):
        return self.c_n * self.R ** (2 * self.n) / self.n

    @property
    def diameter(self):
        return 2.0 * self.R

    def _dual_edges(self):
        return np.concatenate(([0.0], self.midpoints, [self.rho_grid[-1]]))

    @property
    def weights(self):
        """Measure of the dual cell of each node (exact shell volumes)."""
        b = self._dual_edges() ** self.n
        return (self.c_n / self.n) * np.diff(b)

    @property
    def log_weights(self):
        """Natural log of :attr:`weights`, computed without underflow."""
        b = self._dual_edges()
        with np.errstate(divide="ignore"):
            lo, hi = np.log(b[:-1]), np.log(b[1:])
            ratio = np.exp(self.n * (lo - hi))
        return math.log(self.c_n / self.n) + self.n * hi + np.log1p(-ratio)

    def scaled(self, R):
        """Same relative grid on the ball of radius ``R``."""
        R = check_positive(R, "R")
        return RadialBall(self.n, R, self.rho_grid * (R * R / self.rho_grid[-1]))

    def refined(self):
        """Uniform bisection of every cell."""
        rho = self.rho_grid
        out = np.empty(2 * rho.size - 1)
        out[0::2] = rho
        out[1::2] = 0.5 * (rho[1:] + rho[:-1])
        return RadialBall(self.n, self.R, out)

    def with_dimension(self, n):
        return RadialBall(n, self.R, self.rho_grid)


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Radial potential ``u(z) = v(|z|^2)`` on a :class:`RadialBall`.

    ``v`` is sampled at the grid nodes and vanishes at ``rho = R^2``. The
    one-sided derivative ``dv`` lives at cell midpoints; when omitted it is
    taken from differences of ``v``. Profiles built by integrating known
    slopes (:meth:`from_slopes`) keep the slopes exactly, which matters on
    grids with cells near ``1e-12``.
    """

    ball: RadialBall
    v: np.ndarray
    dv: np.ndarray = None

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        if v.shape != self.ball.rho_grid.shape:
            raise ShapeMismatchError(f"profile has {v.shape} samples, grid has {self.ball.rho_grid.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidDomainError("profile values must be finite")
        scale = max(1.0, float(np.max(np.abs(v))))
        if abs(v[-1]) > 1e-12 * scale:
            raise InvalidDomainError(f"profile must vanish on the boundary, v(R^2)={v[-1]}")
        v = v.copy()
        v[-1] = 0.0
        if self.dv is None:
            dv = np.diff(v) / self.ball.cell_widths
        else:
            dv = np.asarray(self.dv, dtype=float)
            if dv.shape != (v.size - 1,):
                raise ShapeMismatchError("dv must have one value per cell")
        object.__setattr__(self, "v", as_frozen_array(v))
        object.__setattr__(self, "dv", as_frozen_array(dv))

    @classmethod
    def from_function(cls, ball, func):
        return cls(ball, func(ball.rho_grid))

    @classmethod
    def from_slopes(cls, ball, dv):
        """Integrate midpoint slopes inward from the boundary."""
        dv = np.asarray(dv, dtype=float)
        tail = np.cumsum((dv * ball.cell_widths)[::-1])[::-1]
        return cls(ball, np.concatenate((-tail, [0.0])), dv)

    @property
    def n(self):
        return self.ball.n

    @property
    def values(self):
        return self.v

    @property
    def domain(self):
        return self.ball

    @property
    def q(self):
        """``rho * v'`` at midpoints; admissibility means q >= 0 and non-decreasing."""
        return self.ball.midpoints * self.dv

    def scaled(self, t):
        return RadialProfile(self.ball, t * self.v, t * self.dv)

    def dilated(self, R):
        """``u_R(z) = u(z R_old / R)`` on the ball of radius ``R`` (same relative grid)."""
        ball = self.ball.scaled(R)
        return RadialProfile(ball, self.v, self.dv * (self.ball.R / R) ** 2)


def radial_integrate(g, ball):
    """Integrate radial samples ``g(rho)`` over the ball.

    Uses the exact measure of each node's dual cell, i.e. the composite
    trapezoid rule against ``c_n rho^(n-1) d rho`` with the weight integrated
    exactly. Exact for constant ``g``.
    """
    if not isinstance(ball, RadialBall):
        raise InvalidDomainError("radial_integrate needs a RadialBall")
    g = np.asarray(g, dtype=float)
    if g.shape != ball.rho_grid.shape:
        raise ShapeMismatchError("samples do not match rho_grid")
    return float(np.dot(ball.weights, g))


def radial_log_integrate_exp(log_g, ball):
    """Return ``log(integral of exp(log_g))`` computed in log space."""
    log_g = np.asarray(log_g, dtype=float)
    if log_g.shape != ball.rho_grid.shape:
        raise ShapeMismatchError("samples do not match rho_grid")
    return float(logsumexp(log_g + ball.log_weights))


# ---------------------------------------------------------------------------
# planar grids (n = 1)
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PlanarGrid:
    """Uniform grid with a node mask over a rectangle or a disc.

    ``mask`` holds EXTERIOR / BOUNDARY / INTERIOR per node (shape ``(ny, nx)``);
    ``offsets`` has shape ``(4, ny, nx)`` and stores, for every interior node,
    the fraction of the arm length ``h`` to the next node or boundary point in
    the directions +x, -x, +y, -y (1 for a full arm).
    """

    x0: float
    y0: float
    h: float
    mask: np.ndarray
    offsets: np.ndarray
    shape_kind: str = "rectangle"
    geometry: tuple = ()
    _weights: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=np.int8)
        offsets = np.asarray(self.offsets, dtype=float)
        if mask.ndim != 2 or offsets.shape != (4,) + mask.shape:
            raise InvalidDomainError("mask must be 2-D and offsets (4, ny, nx)")
        check_positive(self.h, "h")
        interior = mask == INTERIOR
        if not interior.any():
            raise InvalidDomainError("grid has no interior nodes")
        _, ncomp = ndimage.label(interior)
        if ncomp != 1:
            raise InvalidDomainError("interior nodes must form a connected set")
        arms = offsets[:, interior]
        if np.any(arms <= 0) or np.any(arms > 1):
            raise InvalidDomainError("fractional offsets must lie in (0, 1]")
        object.__setattr__(self, "mask", as_frozen_array(mask, dtype=np.int8))
        object.__setattr__(self, "offsets", as_frozen_array(offsets))
        if self._weights is None:
            object.__setattr__(self, "_weights", as_frozen_array(self._cell_areas()))

    # constructors ----------------------------------------------------------

    @classmethod
    def rectangle(cls, bounds=(0.0, 1.0, 0.0, 1.0), h=None, n_cells=64):
        """Rectangle ``[xmin, xmax] x [ymin, ymax]`` with nodes on its edges."""
        xmin, xmax, ymin, ymax = map(float, bounds)
        if xmax <= xmin or ymax <= ymin:
            raise InvalidDomainError("empty rectangle")
        if h is None:
            h = (xmax - xmin) / check_int(n_cells, "n_cells", minimum=2)
        nxc, nyc = (xmax - xmin) / h, (ymax - ymin) / h
        if abs(nxc - round(nxc)) > 1e-9 or abs(nyc - round(nyc)) > 1e-9:
            raise InvalidDomainError("h must divide both side lengths")
        nx, ny = int(round(nxc)) + 1, int(round(nyc)) + 1
        mask = np.full((ny, nx), BOUNDARY, dtype=np.int8)
        mask[1:-1, 1:-1] = INTERIOR
        offsets = np.ones((4, ny, nx))
        return cls(xmin, ymin, h, mask, offsets, "rectangle", (xmin, xmax, ymin, ymax))

    @classmethod
    def unit_square(cls, n_cells=64):
        return cls.rectangle((0.0, 1.0, 0.0, 1.0), n_cells=n_cells)

    @classmethod
    def disc(cls, R=1.0, n_cells=64, center=(0.0, 0.0)):
        """Disc of radius ``R`` with Shortley-Weller arm fractions at the boundary."""
        R = check_positive(R, "R")
        n_cells = check_int(n_cells, "n_cells", minimum=4)
        cx, cy = map(float, center)
        h = 2.0 * R / n_cells
        # one extra ring of exterior nodes keeps every neighbor index valid
        nx = ny = n_cells + 3
        x0, y0 = cx - R - h, cy - R - h
        xs = x0 + h * np.arange(nx)
        ys = y0 + h * np.arange(ny)
        X, Y = np.meshgrid(xs - cx, ys - cy)
        r = np.hypot(X, Y)
        tol = 1e-12 * R
        mask = np.full((ny, nx), EXTERIOR, dtype=np.int8)
        mask[r < R - tol] = INTERIOR
        mask[np.abs(r - R) <= tol] = BOUNDARY
        offsets = np.ones((4, ny, nx))
        for a, (dx, dy) in enumerate(_ARMS):
            nb = np.roll(np.roll(mask, -dy, axis=0), -dx, axis=1)
            cut = (mask == INTERIOR) & (nb == EXTERIOR)
            px, py = X[cut], Y[cut]
            # |p + theta h e|^2 = R^2 for theta in (0, 1)
            b = px * dx + py * dy
            c = px * px + py * py - R * R
            theta = (-b + np.sqrt(b * b - c)) / h
            offsets[a][cut] = np.clip(theta, 1e-12, 1.0)
        return cls(x0, y0, h, mask, offsets, "disc", (cx, cy, R))

    # geometry --------------------------------------------------------------

    @property
    def shape(self):
        return self.mask.shape

    @property
    def interior(self):
        return self.mask == INTERIOR

    @property
    def coordinates(self):
        ny, nx = self.mask.shape
        xs = self.x0 + self.h * np.arange(nx)
        ys = self.y0 + self.h * np.arange(ny)
        return np.meshgrid(xs, ys)

    @property
    def diameter(self):
        if self.shape_kind == "disc":
            return 2.0 * self.geometry[2]
        xmin, xmax, ymin, ymax = self.geometry
        return math.hypot(xmax - xmin, ymax - ymin)

    @property
    def area(self):
        if self.shape_kind == "disc":
            return math.pi * self.geometry[2] ** 2
        xmin, xmax, ymin, ymax = self.geometry
        return (xmax - xmin) * (ymax - ymin)

    def contains(self, X, Y):
        if self.shape_kind == "disc":
            cx, cy, R = self.geometry
            return (X - cx) ** 2 + (Y - cy) ** 2 <= R * R
        xmin, xmax, ymin, ymax = self.geometry
        return (X >= xmin) & (X <= xmax) & (Y >= ymin) & (Y <= ymax)

    def _cell_areas(self, sub=8):
        X, Y = self.coordinates
        h = self.h
        if self.shape_kind == "rectangle":
            xmin, xmax, ymin, ymax = self.geometry
            wx = np.clip(np.minimum(X + h / 2, xmax) - np.maximum(X - h / 2, xmin), 0.0, None)
            wy = np.clip(np.minimum(Y + h / 2, ymax) - np.maximum(Y - h / 2, ymin), 0.0, None)
            return wx * wy
        offs = (np.arange(sub) + 0.5) / sub - 0.5
        frac = np.zeros(X.shape)
        for ox in offs:
            for oy in offs:
                frac += self.contains(X + ox * h, Y + oy * h)
        return frac * (h * h / sub ** 2)

    @property
    def weights(self):
        """Area of each node's dual cell intersected with the domain."""
        return self._weights

    # stencils --------------------------------------------------------------

    def interior_index(self):
        """Map from node (iy, ix) to unknown number; -1 off the interior."""
        idx = np.full(self.mask.shape, -1, dtype=np.int64)
        idx[self.interior] = np.arange(int(self.interior.sum()))
        return idx

    def laplacian_matrix(self, scheme="shortley-weller"):
        """Sparse Laplacian acting on interior unknowns with zero boundary data.

        ``scheme="shortley-weller"`` uses the unequal-arm stencil
        ``2/(a+b) [(u_+ - u_P)/a + (u_- - u_P)/b]`` per axis. ``"symmetric"``
        replaces ``2/(a+b)`` by ``1/h``; it coincides with Shortley-Weller at
        full-arm nodes and yields a symmetric negative definite matrix.
        """
        if scheme not in ("shortley-weller", "symmetric"):
            raise ValueError(f"unknown scheme {scheme!r}")
        idx = self.interior_index()
        ny, nx = self.mask.shape
        iy, ix = np.nonzero(self.interior)
        rows, cols, vals = [], [], []
        diag = np.zeros(iy.size)
        h = self.h
        for axis in (0, 1):
            a_plus = self.offsets[2 * axis][iy, ix] * h
            a_minus = self.offsets[2 * axis + 1][iy, ix] * h
            pref = 2.0 / (a_plus + a_minus) if scheme == "shortley-weller" else np.full(iy.size, 1.0 / h)
            for sgn, arm in ((1, a_plus), (-1, a_minus)):
                dx, dy = (sgn, 0) if axis == 0 else (0, sgn)
                jy, jx = iy + dy, ix + dx
                if np.any((jy < 0) | (jy >= ny) | (jx < 0) | (jx >= nx)):
                    raise InconsistentMaskError("interior node on the grid edge")
                nb_mask = self.mask[jy, jx]
                full = np.isclose(arm, h)
                bad = (nb_mask == EXTERIOR) & full
                if np.any(bad):
                    raise InconsistentMaskError("interior node has an exterior neighbor and no boundary offset")
                coef = pref / arm
                diag -= coef
                link = (nb_mask == INTERIOR) & full
                rows.append(np.nonzero(link)[0])
                cols.append(idx[jy[link], jx[link]])
                vals.append(coef[link])
        m = iy.size
        rows.append(np.arange(m))
        cols.append(np.arange(m))
        vals.append(diag)
        return sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m)
        )


@dataclass(frozen=True, eq=False)
class GridField:
    """Scalar field on a :class:`PlanarGrid`; zero on boundary and exterior nodes."""

    grid: PlanarGrid
    values: np.ndarray
    potential: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ShapeMismatchError(f"field shape {vals.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise InvalidDomainError("field values must be finite")
        vals = np.where(self.grid.interior, vals, 0.0)
        if self.potential and np.any(vals > 1e-12 * max(1.0, np.abs(vals).max())):
            raise InvalidDomainError("a potential must be <= 0")
        object.__setattr__(self, "values", as_frozen_array(vals))

    @classmethod
    def from_function(cls, grid, func, potential=False):
        X, Y = grid.coordinates
        return cls(grid, func(X, Y), potential=potential)

    @classmethod
    def from_interior(cls, grid, interior_values, potential=False):
        vals = np.zeros(grid.shape)
        vals[grid.interior] = interior_values
        return cls(grid, vals, potential=potential)

    @property
    def n(self):
        return 1

    @property
    def domain(self):
        return self.grid

    @property
    def interior_values(self):
        return self.values[self.grid.interior]

    def scaled(self, t):
        return GridField(self.grid, t * self.values, potential=self.potential and t >= 0)


def grid_integrate(u):
    """Integrate a :class:`GridField` with dual-cell area weights.

    Interior nodes carry ``h^2``; nodes whose dual cell is cut by the boundary
    carry the covered area.
    """
    if not isinstance(u, GridField):
        raise InvalidDomainError("grid_integrate needs a GridField")
    return float(np.sum(u.grid.weights * u.values))


def grid_laplacian(u, scheme="shortley-weller"):
    """Discrete Laplacian of ``u`` at interior nodes (zero elsewhere)."""
    L = u.grid.laplacian_matrix(scheme)
    return GridField.from_interior(u.grid, L @ u.interior_values)


def boundary_flux(u):
    """Outward normal flux of ``u`` summed over the boundary of a rectangle.

    One-sided differences from boundary nodes to their inner neighbors; used to
    check the divergence theorem against ``grid_integrate(grid_laplacian(u))``.
    """
    g = u.grid
    if g.shape_kind != "rectangle":
        raise InvalidDomainError("boundary_flux is implemented for rectangles")
    v, h = u.values, g.h
    # edge weights of the trapezoid rule along each side, corners excluded
    def side(b, inner):
        w = np.full(b.size, h)
        w[0] = w[-1] = 0.0
        return float(np.sum(w * (b - inner) / h))

    return (
        side(v[0, :], v[1, :])
        + side(v[-1, :], v[-2, :])
        + side(v[:, 0], v[:, 1])
        + side(v[:, -1], v[:, -2])
    )


def integrate(values, domain):
    """Integrate raw samples over either kind of domain."""
    if isinstance(domain, RadialBall):
        return radial_integrate(values, domain)
    if isinstance(domain, PlanarGrid):
        return grid_integrate(GridField(domain, values))
    raise InvalidDomainError(f"unsupported domain {type(domain).__name__}")


def domain_weights(domain):
    return domain.weights
