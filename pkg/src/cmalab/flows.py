"""Descent flows ``u_t = log det(u_{i jbar}) - log(target density)``.

Three right-hand sides are provided:

``sobolev-PE``
    target ``lam * beta_delta(u) * f_delta(|u|)``; decreases ``J_delta``.
``sobolev-ratio``
    target ``(n+1) E_det(u) |u|^p / int |u|^(p+1)``; decreases the scale-free
    ratio ``E_det / ||u||_{p+1}^(n+1)`` and is used for constant estimates.
``moser-trudinger``
    target ``(lam / ||u||) f_m^delta(-u / eta(||u||))``; increases the
    truncated functional, so ``-F`` is the descent objective.

Each step is linearly implicit, ``(I - dt DF) d = dt F``, with the exact
Jacobian ``DF`` (sparse part plus low-rank corrections handled by the
Woodbury identity). A step is accepted only if the objective does not grow by
more than ``1e-9``; otherwise ``dt`` is halved. After every step the state is
projected back into the admissible cone.
"""

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu
from sklearn.base import BaseEstimator

from ._validation import check_int, check_positive
from .domains import GridField, PlanarGrid, RadialBall, RadialProfile
from .exceptions import CMALabError, ParameterError, StagnationError
from .functionals import (
    ConventionConstants,
    cutoff_F,
    cutoff_f,
    cutoff_f_prime,
    mt_series,
    mt_series_prime,
)
from .radial import ADMISSIBILITY_FLOOR, admissibility_project, log_det_jacobian, radial_det

KINDS = ("sobolev-PE", "sobolev-ratio", "moser-trudinger")
DESCENT_TOL = 1e-9
MAX_HALVINGS = 40

TRACE_COLUMNS = ("step", "t", "dt", "functional", "residual", "seminorm", "mass")


@dataclass(frozen=True)
class FlowTrace:
    """Per-step record of a flow run."""

    rows: tuple = ()

    def append(self, **row):
        return FlowTrace(self.rows + (tuple(float(row[c]) for c in TRACE_COLUMNS),))

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        k = TRACE_COLUMNS.index(name)
        return np.array([r[k] for r in self.rows])

    def to_csv(self, path=None):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for r in self.rows:
            writer.writerow([int(r[0])] + [repr(x) for x in r[1:]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


@dataclass(frozen=True)
class FlowParams:
    """Parameters of one flow kind; irrelevant fields are ignored."""

    kind: str
    lam: float = 1.0
    p: float = 1.0
    M: float = 50.0
    delta: float = 0.0
    m: int = 1
    alpha: float = 1.0
    floor: float = ADMISSIBILITY_FLOOR

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown flow kind {self.kind!r}; expected one of {KINDS}")
        check_positive(self.p, "p")
        check_positive(self.floor, "floor")
        if self.kind == "sobolev-PE":
            check_positive(self.lam, "lam")
            check_positive(self.delta, "delta")
            if self.M <= 1:
                raise ParameterError("M must exceed 1")
        if self.kind == "moser-trudinger":
            check_positive(self.alpha, "alpha")
            check_positive(self.delta, "delta", strict=False)
            check_int(self.m, "m", minimum=1)

    @classmethod
    def coerce(cls, kind, params):
        if isinstance(params, FlowParams):
            return params if params.kind == kind else replace(params, kind=kind)
        return cls(kind=kind, **dict(params or {}))


# ---------------------------------------------------------------------------
# backends: unknowns, determinant, log-det Jacobian, projection


class RadialOps:
    """Radial backend; the unknowns are ``v`` at all nodes but the last."""

    def __init__(self, ball):
        self.ball = ball
        self.n = ball.n
        self.w = ball.weights[:-1]
        self.h = ball.cell_widths

    def unknowns(self, u):
        return np.asarray(u.v[:-1])

    def det(self, u):
        return radial_det(u)[:-1]

    def log_det_jacobian(self, u):
        return log_det_jacobian(u).tocsc()

    def advance(self, u, d):
        d_ext = np.concatenate((d, [0.0]))
        return RadialProfile.from_slopes(self.ball, u.dv + np.diff(d_ext) / self.h)

    def project(self, u, floor):
        return admissibility_project(u, floor)


class PlanarOps:
    """Planar backend (``n = 1``); unknowns are the interior values.

    The Laplacian is the symmetric embedded-boundary variant and interior
    nodes carry the weight ``h^2``, which makes the discrete energy an exact
    quadratic form ``1/2 h^2 x^T (-L) x``.
    """

    def __init__(self, grid):
        self.grid = grid
        self.n = 1
        self.L = sparse.csc_matrix(grid.laplacian_matrix("symmetric"))
        m = self.L.shape[0]
        self.w = np.full(m, grid.h ** 2)
        self._lu = None

    def unknowns(self, u):
        return u.interior_values

    def det(self, u):
        return (self.L @ u.interior_values) / 4.0

    def log_det_jacobian(self, u):
        lap = self.L @ u.interior_values
        return sparse.csc_matrix(sparse.diags(1.0 / lap) @ self.L)

    def advance(self, u, d):
        return GridField.from_interior(self.grid, u.interior_values + d)

    def project(self, u, floor):
        lap = self.L @ u.interior_values
        if np.all(lap >= floor):
            return u
        if self._lu is None:
            self._lu = splu(self.L)
        x = self._lu.solve(np.maximum(lap, floor))
        return GridField.from_interior(self.grid, np.minimum(x, 0.0))


def make_ops(u):
    if isinstance(u, RadialProfile):
        return RadialOps(u.ball)
    if isinstance(u, GridField):
        return PlanarOps(u.grid)
    raise TypeError(f"expected RadialProfile or GridField, got {type(u).__name__}")


# ---------------------------------------------------------------------------
# right-hand sides


@dataclass
class _Eval:
    det: np.ndarray
    target: np.ndarray
    objective: float
    seminorm: float
    mass: float
    diag: np.ndarray = None
    lowrank: list = field(default_factory=list)


def _energy_det(ops, x, det):
    return float(np.dot(ops.w, -x * det)) / (ops.n + 1)


def _evaluate(ops, u, prm, jac=False):
    n = ops.n
    x = ops.unknowns(u)
    a = np.maximum(-x, 0.0)
    w = ops.w
    det = ops.det(u)
    kappa = ConventionConstants(n).kappa_n
    Ed = _energy_det(ops, x, det)
    seminorm = (kappa * max(Ed, 0.0)) ** (1.0 / (n + 1))
    mass = kappa * float(np.dot(w, det))
    ones = np.ones_like(x)

    if prm.kind == "sobolev-PE":
        p = prm.p
        fd = cutoff_f(a, prm.M, p) + prm.delta
        B = (p + 1.0) * float(np.dot(w, cutoff_F(a, prm.M, p) + prm.delta * a))
        beta = B ** ((n - p) / (p + 1.0))
        target = prm.lam * beta * fd
        objective = float(np.dot(w, a * det)) - prm.lam * B ** ((n + 1.0) / (p + 1.0))
        ev = _Eval(det, target, objective, seminorm, mass)
        if jac:
            ev.diag = cutoff_f_prime(a, prm.M, p) / fd
            ev.lowrank = [(ones, (n - p) * w * fd / B)]
        return ev

    if prm.kind == "sobolev-ratio":
        p = prm.p
        B = float(np.dot(w, a ** (p + 1.0)))
        target = (n + 1.0) * Ed * a ** p / B
        objective = Ed / B ** ((n + 1.0) / (p + 1.0))
        ev = _Eval(det, target, objective, seminorm, mass)
        if jac:
            ev.diag = p / a
            ev.lowrank = [(ones, w * det / Ed - (p + 1.0) * w * a ** p / B)]
        return ev

    # moser-trudinger
    s = seminorm
    eta = math.exp(s - 1.0)
    y = a / eta
    F, f = mt_series(y, prm.m, n, prm.alpha, prm.delta)
    D = float(np.dot(w, a * f))
    lam = (n + 1.0) * Ed / D
    target = (lam / s) * f
    objective = -float(np.dot(w, F))
    ev = _Eval(det, target, objective, seminorm, mass)
    if jac:
        fp = mt_series_prime(y, prm.m, n, prm.alpha)
        grad_Ed = -w * det
        grad_s = s * grad_Ed / ((n + 1.0) * Ed)
        grad_D = -w * f - w * a * fp / eta - float(np.dot(w, a * fp * y)) * grad_s
        grad_log_lam = grad_Ed / Ed - grad_D / D - grad_s / s
        ev.diag = fp / (f * eta)
        ev.lowrank = [(fp * y / f, grad_s), (-ones, grad_log_lam)]
    return ev


def flow_velocity(ev):
    return np.log(ev.det) - np.log(ev.target)


def flow_jacobian(ops, u, ev):
    """Dense Jacobian of the velocity (for checks on small problems)."""
    A = ops.log_det_jacobian(u).toarray() + np.diag(ev.diag)
    for a, b in ev.lowrank:
        A += np.outer(a, b)
    return A


def _implicit_increment(ops, u, ev, dt):
    """Solve ``(I - dt DF) d = dt F`` with ``DF = S + sum a_i b_i^T``."""
    F = flow_velocity(ev)
    m = F.size
    S = ops.log_det_jacobian(u) + sparse.diags(ev.diag)
    K = sparse.csc_matrix(sparse.identity(m) - dt * S)
    lu = splu(K)
    rhs = dt * F
    if not ev.lowrank:
        return lu.solve(rhs)
    U = -dt * np.column_stack([a for a, _ in ev.lowrank])
    V = np.column_stack([b for _, b in ev.lowrank])
    y = lu.solve(rhs)
    Z = lu.solve(U)
    cap = np.eye(U.shape[1]) + V.T @ Z
    return y - Z @ np.linalg.solve(cap, V.T @ y)


# ---------------------------------------------------------------------------
# state and stepping


@dataclass(frozen=True, eq=False)
class FlowState:
    """Profile (or planar field), flow time, current step size and history."""

    profile: object
    t: float = 0.0
    dt: float = 1e-2
    history: FlowTrace = field(default_factory=FlowTrace)
    steps: int = 0


def stationarity_residual(state, kind, params):
    """Weighted ``L^2`` norm of ``det - target`` (zero at discrete stationary points)."""
    prm = FlowParams.coerce(kind, params)
    u = state.profile if isinstance(state, FlowState) else state
    ops = make_ops(u)
    ev = _evaluate(ops, u, prm)
    return math.sqrt(float(np.dot(ops.w, (ev.det - ev.target) ** 2)))


def flow_objective(u, kind, params):
    prm = FlowParams.coerce(kind, params)
    return _evaluate(make_ops(u), u, prm).objective


def initial_state(u, kind, params, dt=1e-2):
    """Project ``u`` into the admissible cone and record step zero."""
    prm = FlowParams.coerce(kind, params)
    ops = make_ops(u)
    u = ops.project(u, prm.floor)
    ev = _evaluate(ops, u, prm)
    res = math.sqrt(float(np.dot(ops.w, (ev.det - ev.target) ** 2)))
    trace = FlowTrace().append(
        step=0, t=0.0, dt=dt, functional=ev.objective, residual=res, seminorm=ev.seminorm, mass=ev.mass
    )
    return FlowState(u, 0.0, dt, trace, 0)


def _flow_step(state, prm, ops, grow=2.0, dt_max=1e8):
    u = state.profile
    ev = _evaluate(ops, u, prm, jac=True)
    dt = state.dt
    for _ in range(MAX_HALVINGS + 1):
        try:
            with np.errstate(all="ignore"):
                d = _implicit_increment(ops, u, ev, dt)
            ok = np.all(np.isfinite(d))
        except (RuntimeError, np.linalg.LinAlgError):
            ok = False
        if ok:
            try:
                cand = ops.project(ops.advance(u, d), prm.floor)
                with np.errstate(all="ignore"):
                    new = _evaluate(ops, cand, prm)
                ok = np.isfinite(new.objective) and new.objective <= ev.objective + DESCENT_TOL
            except (CMALabError, ValueError, ZeroDivisionError):
                ok = False
        if ok:
            res = math.sqrt(float(np.dot(ops.w, (new.det - new.target) ** 2)))
            step = state.steps + 1
            t = state.t + dt
            trace = state.history.append(
                step=step, t=t, dt=dt, functional=new.objective, residual=res,
                seminorm=new.seminorm, mass=new.mass,
            )
            return FlowState(cand, t, min(dt * grow, dt_max), trace, step)
        dt *= 0.5
    raise StagnationError("step size underflow in flow", state)


def radial_flow_step(state, kind, params):
    """Advance a radial :class:`FlowState` by one accepted step."""
    if not isinstance(state.profile, RadialProfile):
        raise TypeError("radial_flow_step needs a RadialProfile state")
    prm = FlowParams.coerce(kind, params)
    return _flow_step(state, prm, RadialOps(state.profile.ball))


def planar_flow_step(state, kind, params):
    """Advance a planar :class:`FlowState` by one accepted step."""
    if not isinstance(state.profile, GridField):
        raise TypeError("planar_flow_step needs a GridField state")
    prm = FlowParams.coerce(kind, params)
    return _flow_step(state, prm, PlanarOps(state.profile.grid))


def run_flow(u, kind, params, max_steps=1000, tol=0.0, dt=1e-2, min_steps=0):
    """Iterate flow steps until ``max_steps`` or the residual drops below ``tol``.

    Returns the final :class:`FlowState`; a :class:`StagnationError` propagates
    with the last good state attached.
    """
    prm = FlowParams.coerce(kind, params)
    state = u if isinstance(u, FlowState) else initial_state(u, prm.kind, prm, dt)
    ops = make_ops(state.profile)
    while state.steps < max_steps:
        if state.steps >= min_steps and state.history.rows[-1][4] < tol:
            break
        state = _flow_step(state, prm, ops)
    return state


# ---------------------------------------------------------------------------
# estimator wrappers


class _FlowEstimator(BaseEstimator):
    kind = None

    def _params(self):
        raise NotImplementedError

    def fit(self, X, y=None):
        """Run the flow from the initial profile ``X``."""
        if not isinstance(X, (RadialProfile, GridField)):
            raise TypeError("X must be a RadialProfile or GridField")
        prm = self._params()
        state = initial_state(X, self.kind, prm, self.dt0)
        try:
            state = run_flow(state, self.kind, prm, self.max_steps, self.tol, min_steps=self.min_steps)
            self.stagnated_ = False
        except StagnationError as err:
            state = err.state
            self.stagnated_ = True
        self.state_ = state
        self.profile_ = state.profile
        self.trace_ = state.history
        self.residual_ = float(state.history.rows[-1][4])
        self.objective_ = float(state.history.rows[-1][3])
        self.seminorm_ = float(state.history.rows[-1][5])
        self.n_steps_ = state.steps
        return self


class SobolevDescentFlow(_FlowEstimator):
    """Descent flow for ``J_delta`` (``ratio=False``) or the Sobolev ratio (``ratio=True``)."""

    def __init__(self, p=1.0, lam=1.0, M=50.0, delta=1e-3, ratio=False,
                 max_steps=1000, tol=0.0, min_steps=0, dt0=1e-2, floor=ADMISSIBILITY_FLOOR):
        self.p = p
        self.lam = lam
        self.M = M
        self.delta = delta
        self.ratio = ratio
        self.max_steps = max_steps
        self.tol = tol
        self.min_steps = min_steps
        self.dt0 = dt0
        self.floor = floor

    @property
    def kind(self):
        return "sobolev-ratio" if self.ratio else "sobolev-PE"

    def _params(self):
        return FlowParams(self.kind, lam=self.lam, p=self.p, M=self.M, delta=self.delta, floor=self.floor)


class MoserTrudingerFlow(_FlowEstimator):
    """Ascent flow for the truncated Moser-Trudinger functional."""

    kind = "moser-trudinger"

    def __init__(self, m=1, alpha=1.0, delta=0.0, max_steps=500, tol=1e-9, min_steps=0,
                 dt0=1e-2, floor=ADMISSIBILITY_FLOOR):
        self.m = m
        self.alpha = alpha
        self.delta = delta
        self.max_steps = max_steps
        self.tol = tol
        self.min_steps = min_steps
        self.dt0 = dt0
        self.floor = floor

    def _params(self):
        return FlowParams(self.kind, m=self.m, alpha=self.alpha, delta=self.delta, floor=self.floor)
