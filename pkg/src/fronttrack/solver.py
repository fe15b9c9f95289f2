"""Explicit finite-volume stepper on moving reference grids.

Cells live between the faces of a :class:`~fronttrack.grid.MovingGrid`.  For
conservative systems the stepper advances ``width * f0(u)`` with the ALE flux
``f - s f0`` (``s`` the face velocity), which preserves constant states on any
moving grid.  Systems given only through ``A`` use a fluctuation-splitting form
of the same scheme.  Reconstruction is MUSCL with minmod applied to
characteristic slopes, and time stepping is Heun (SSP-RK2).

Several domains and a vector of ODE unknowns are advanced together by
:class:`Simulation`; a *problem* object couples them through boundary states,
face velocities and the ODE right-hand side.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional, Protocol, Sequence

import numpy as np

from .errors import (
    ClosureFailure,
    CflViolation,
    FrontTrackError,
    JacobianDegeneracy,
    NewtonDivergence,
    PhaseBoxExit,
    WrongCharacteristicCount,
)
from .grid import JACOBIAN_BOUNDS, MovingGrid
from .hypcore import eigen_arrays, eigen_from_matrix
from .systems import System2x2, perp

CFL_DEFAULT = 0.45
NEWTON_TOL = 1e-12
NEWTON_MAXIT = 50
HISTORY_LENGTH = 64


def _value(v, t):
    return v(t) if callable(v) else v


# ---------------------------------------------------------------------------
# boundary closures


@dataclass(frozen=True)
class LinearNu:
    """``nu(t) . u = g(t)``; ``nu`` and ``g`` are constants or callables of t."""

    nu: Any
    g: Any = 0.0

    def constraint(self, t: float, u: np.ndarray):
        nu = np.asarray(_value(self.nu, t), dtype=float)
        return float(nu @ u) - float(_value(self.g, t)), nu


@dataclass(frozen=True)
class NonlinearPhi:
    """``Phi(t, u) = g(t)``; the gradient is differenced when not supplied."""

    Phi: Callable[[float, np.ndarray], float]
    g: Any = 0.0
    grad: Optional[Callable[[float, np.ndarray], np.ndarray]] = None

    def constraint(self, t: float, u: np.ndarray):
        val = float(self.Phi(t, u)) - float(_value(self.g, t))
        if self.grad is not None:
            return val, np.asarray(self.grad(t, u), dtype=float)
        h = 1e-7 * (1.0 + np.abs(u))
        gr = np.empty(2)
        for k in range(2):
            e = np.zeros(2)
            e[k] = h[k]
            gr[k] = (self.Phi(t, u + e) - self.Phi(t, u - e)) / (2 * h[k])
        return val, gr


@dataclass(frozen=True)
class DirichletTrace:
    """Full trace ``u = u_i(t)``; only meaningful inside free-boundary drivers."""

    u_i: Any


@dataclass(frozen=True)
class Transparent:
    """Zeroth-order extrapolation of both invariants (truncated far field)."""


Closure = LinearNu | NonlinearPhi | DirichletTrace | Transparent


def outgoing_invariant(sys: System2x2, side: str, u_ref: np.ndarray):
    """Scalar carried from the interior to the boundary on ``side``, with its gradient.

    Uses the system's Riemann invariants when available, otherwise the
    characteristic variable frozen at ``u_ref``.
    """
    k = 1 if side == "left" else 0
    if sys.invariants is not None and sys.invariants_grad is not None:
        return (lambda u: float(sys.invariants(u)[k])), (lambda u: sys.invariants_grad(u)[k])
    es = eigen_from_matrix(sys.A(u_ref))
    incoming = es.e_plus if side == "left" else es.e_minus
    ell = perp(incoming)
    return (lambda u: float(ell @ u)), (lambda u: ell)


def check_characteristics(sys: System2x2, u_b: np.ndarray, speed: float, side: str,
                          margin: float = 0.0, time: float | None = None) -> None:
    """Require exactly one incoming characteristic: ``-lambda_- < speed < lambda_+``."""
    lp, lm, *_ = eigen_arrays(sys.A(u_b))
    if not (float(lp) - speed > margin and float(lm) + speed > margin):
        raise WrongCharacteristicCount(
            f"{side} boundary not subsonic: lambda+ - s = {float(lp) - speed:.4g}, "
            f"lambda- + s = {float(lm) + speed:.4g}", time=time)


def solve_closure(sys: System2x2, closure, t: float, u_ext: np.ndarray, side: str,
                  speed: float = 0.0, check: bool = True) -> np.ndarray:
    """Boundary state from a closure and the extrapolated interior trace."""
    u_ext = np.asarray(u_ext, dtype=float)
    if isinstance(closure, Transparent):
        return u_ext.copy()
    if isinstance(closure, DirichletTrace):
        return np.asarray(_value(closure.u_i, t), dtype=float).copy()
    w_fn, w_grad = outgoing_invariant(sys, side, u_ext)
    w_target = w_fn(u_ext)
    u = u_ext.copy()
    scale = 1.0 + abs(w_target) + np.max(np.abs(u_ext))
    for _ in range(NEWTON_MAXIT):
        r0, g0 = closure.constraint(t, u)
        r = np.array([r0, w_fn(u) - w_target])
        if np.max(np.abs(r)) <= NEWTON_TOL * scale:
            break
        J = np.vstack([g0, w_grad(u)])
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        if abs(det) < 1e-14 * (1.0 + np.abs(J).max() ** 2):
            raise ClosureFailure(f"closure Jacobian singular at {side} boundary", time=t)
        u = u - np.linalg.solve(J, r)
        if not np.all(np.isfinite(u)):
            raise NewtonDivergence("closure Newton produced non-finite state", time=t)
    else:
        raise NewtonDivergence(f"closure Newton did not reach {NEWTON_TOL:g}", time=t)
    if check:
        check_characteristics(sys, u, speed, side, time=t)
    return u


def trace_consistency(sys: System2x2, u_b, u_ext, side: str) -> float:
    """``|w_out(u_b) - w_out(u_ext)|`` for a trace imposed without the invariant."""
    w_fn, _ = outgoing_invariant(sys, side, np.asarray(u_ext, dtype=float))
    return abs(w_fn(np.asarray(u_b, dtype=float)) - w_fn(np.asarray(u_ext, dtype=float)))


# ---------------------------------------------------------------------------
# per-domain state and stage views


@dataclass
class SolverState:
    """One domain: a system, its moving grid (faces) and cell averages."""

    sys: System2x2
    grid: MovingGrid
    u: np.ndarray
    t: float = 0.0
    cfl: float = CFL_DEFAULT
    left: Any = None
    right: Any = None
    name: str = "main"
    history: deque = field(default_factory=lambda: deque(maxlen=HISTORY_LENGTH))

    @property
    def faces(self) -> np.ndarray:
        return self.grid.phi

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.grid.phi)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.grid.phi[1:] + self.grid.phi[:-1])

    def view(self) -> "StageView":
        return StageView(self.sys, self.grid.phi, self.u, self.grid.reference_nodes)

    def conserved(self) -> np.ndarray:
        return self.widths[:, None] * self.sys.eval_f0(self.u)


@dataclass
class StageView:
    """Read-only snapshot passed to problems during a Heun stage."""

    sys: System2x2
    faces: np.ndarray
    u: np.ndarray
    reference_nodes: np.ndarray | None = None

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.faces)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.faces[1:] + self.faces[:-1])

    def edge(self, side: str) -> np.ndarray:
        return self.u[0] if side == "left" else self.u[-1]

    def extrapolate(self, side: str) -> np.ndarray:
        """Linear extrapolation of the two edge cell averages to the end face."""
        w = self.widths
        if side == "left":
            u0, u1, w0, w1 = self.u[0], self.u[1], w[0], w[1]
        else:
            u0, u1, w0, w1 = self.u[-1], self.u[-2], w[-1], w[-2]
        slope = (u1 - u0) / (0.5 * (w0 + w1))
        return u0 - 0.5 * w0 * slope

    def boundary_derivative(self, side: str, u_b) -> np.ndarray:
        """d_x u at the end face from the face value and two cell averages.

        Fits a quadratic with the given face value and matching cell averages,
        so it is exact for quadratic profiles on any widths.
        """
        w = self.widths
        if side == "left":
            u0, u1, a, b = self.u[0], self.u[1], w[0], w[1]
        else:
            u0, u1, a, b = self.u[-1], self.u[-2], w[-1], w[-2]
        # averages of x and x^2 over [0, a] and [a, a + b]
        m1 = np.array([[a / 2, a * a / 3], [a + b / 2, (a * a + a * (a + b) + (a + b) ** 2) / 3]])
        rhs = np.vstack([u0 - u_b, u1 - u_b])
        coef = np.linalg.solve(m1, rhs)
        slope = coef[0]
        return slope if side == "left" else -slope


# ---------------------------------------------------------------------------
# spatial discretization


def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def reconstruct(sys: System2x2, u, faces, ub_left, ub_right):
    """Face values ``(u_at_left_face, u_at_right_face)`` of every cell."""
    xc = 0.5 * (faces[1:] + faces[:-1])
    ue = np.vstack([2 * ub_left - u[0], u, 2 * ub_right - u[-1]])
    xe = np.concatenate([[2 * faces[0] - xc[0]], xc, [2 * faces[-1] - xc[-1]]])
    d = np.diff(ue, axis=0) / np.diff(xe)[:, None]
    _, _, ep, em, _, _ = eigen_arrays(sys.A(u))
    R = np.stack([ep, em], axis=-1)
    L = np.linalg.inv(R)
    am = np.einsum("nij,nj->ni", L, d[:-1])
    ap = np.einsum("nij,nj->ni", L, d[1:])
    slope = np.einsum("nij,nj->ni", R, _minmod(am, ap))
    half = 0.5 * np.diff(faces)[:, None]
    return u - half * slope, u + half * slope


def _abs_shifted(sys: System2x2, ubar, s):
    """``|A(ubar) - s|`` through the spectral projectors."""
    lp, lm, _, _, pp, pm = eigen_arrays(sys.A(ubar))
    return np.abs(lp - s)[:, None, None] * pp + np.abs(lm + s)[:, None, None] * pm


def _split_shifted(sys: System2x2, ubar, s):
    lp, lm, _, _, pp, pm = eigen_arrays(sys.A(ubar))
    a = (lp - s)[:, None, None]
    b = (-lm - s)[:, None, None]
    pos = np.maximum(a, 0) * pp + np.maximum(b, 0) * pm
    neg = np.minimum(a, 0) * pp + np.minimum(b, 0) * pm
    return pos, neg


def ale_flux(sys: System2x2, u, s):
    """Physical flux seen by a face moving at speed ``s``: ``f(u) - s f0(u)``."""
    return sys.f(u) - np.asarray(s)[..., None] * sys.eval_f0(u)


def numerical_flux(sys: System2x2, uL, uR, s):
    ubar = 0.5 * (uL + uR)
    D = _abs_shifted(sys, ubar, s)
    if sys.f0 is not None:
        D = sys.f0_jacobian(ubar) @ D
    return 0.5 * (ale_flux(sys, uL, s) + ale_flux(sys, uR, s)) - 0.5 * np.einsum("nij,nj->ni", D, uR - uL)


def _source_terms(sys: System2x2, t, u, xc):
    if sys.B is None and sys.source is None:
        return None
    src = np.zeros_like(u)
    if sys.B is not None:
        src -= np.einsum("nij,nj->ni", np.asarray(sys.B(t, xc)).reshape(-1, 2, 2), u)
    if sys.source is not None:
        src += np.asarray(sys.source(t, xc)).reshape(-1, 2)
    return src


def semi_discrete(sys: System2x2, t, faces, u, ub_left, ub_right, speeds):
    """Time derivative of the evolved cell quantity and the two end-face fluxes.

    Conservative systems evolve ``width * f0(u)``; the returned fluxes are the
    ALE fluxes through the first and last faces.  Other systems evolve ``u``
    directly and the fluxes are ``None``.
    """
    uL, uR = reconstruct(sys, u, faces, ub_left, ub_right)
    w = np.diff(faces)
    xc = 0.5 * (faces[1:] + faces[:-1])
    src = _source_terms(sys, t, u, xc)
    if sys.conservative:
        F = np.empty((len(faces), 2))
        F[1:-1] = numerical_flux(sys, uR[:-1], uL[1:], speeds[1:-1])
        F[0] = ale_flux(sys, ub_left, speeds[0])
        F[-1] = ale_flux(sys, ub_right, speeds[-1])
        dW = -(F[1:] - F[:-1])
        if src is not None:
            if sys.f0 is not None:
                src = np.einsum("nij,nj->ni", sys.f0_jacobian(u), src)
            dW += w[:, None] * src
        return dW, (F[0], F[-1])
    left_states = np.vstack([ub_left, uR])
    right_states = np.vstack([uL, ub_right])
    jumps = right_states - left_states
    pos, neg = _split_shifted(sys, 0.5 * (left_states + right_states), speeds)
    fl_pos = np.einsum("nij,nj->ni", pos, jumps)
    fl_neg = np.einsum("nij,nj->ni", neg, jumps)
    sc = 0.5 * (speeds[1:] + speeds[:-1])
    Acell = sys.A(u) - sc[:, None, None] * np.eye(2)
    internal = np.einsum("nij,nj->ni", Acell, uR - uL)
    du = -(fl_pos[:-1] + fl_neg[1:] + internal) / w[:, None]
    if src is not None:
        du += src
    return du, None


def max_wave_speed(sys: System2x2, u, faces, speeds) -> np.ndarray:
    lp, lm, *_ = eigen_arrays(sys.A(u))
    sc = 0.5 * (speeds[1:] + speeds[:-1])
    return np.maximum(np.abs(lp - sc), np.abs(lm + sc))


# ---------------------------------------------------------------------------
# coupled engine


@dataclass
class StageOutput:
    """What a problem returns for one stage.

    ``boundary`` holds ``(u_left_face, u_right_face)`` per domain, ``speeds``
    the face velocities per domain, ``dydt`` the ODE right-hand side, and
    ``info`` free-form diagnostics recorded by the driver.
    """

    boundary: list
    speeds: list
    dydt: np.ndarray
    info: dict = field(default_factory=dict)


class CoupledProblem(Protocol):
    def evaluate(self, t: float, views: Sequence[StageView], y: np.ndarray) -> StageOutput: ...


def _recover(sys: System2x2, faces, evolved, guess):
    if not sys.conservative:
        return evolved
    m = evolved / np.diff(faces)[:, None]
    return sys.f0_inverse(m, guess)


class Simulation:
    """Heun integration of domains, face positions and ODE unknowns together."""

    def __init__(self, problem, states: list[SolverState], y=None, t: float = 0.0,
                 cfl: float = CFL_DEFAULT, check_jacobian: bool = True):
        self.problem = problem
        self.states = states
        self.y = np.zeros(0) if y is None else np.asarray(y, dtype=float).copy()
        self.t = float(t)
        self.cfl = cfl
        self.check_jacobian = check_jacobian
        self.last_stages: list[StageOutput] = []
        self.last_dt = 0.0
        self.steps = 0
        # time-integrated end-face fluxes per domain, for conservation checks
        self.flux_integrals = [np.zeros((2, 2)) for _ in states]

    def _evolved(self, st: SolverState, faces, u):
        if st.sys.conservative:
            return np.diff(faces)[:, None] * st.sys.eval_f0(u)
        return u.copy()

    def _stage(self, t, faces, evolved, y, guesses):
        views = []
        for st, f, e, gu in zip(self.states, faces, evolved, guesses):
            views.append(StageView(st.sys, f, _recover(st.sys, f, e, gu), st.grid.reference_nodes))
        out = self.problem.evaluate(t, views, y)
        rates, fluxes = [], []
        for st, v, (ubl, ubr), s in zip(self.states, views, out.boundary, out.speeds):
            r, fl = semi_discrete(st.sys, t, v.faces, v.u, ubl, ubr, s)
            rates.append(r)
            fluxes.append(fl)
        return views, out, rates, fluxes

    def stable_dt(self, views, out) -> float:
        dt = np.inf
        for st, v, s in zip(self.states, views, out.speeds):
            sp = max_wave_speed(st.sys, v.u, v.faces, s)
            with np.errstate(divide="ignore"):
                dt = min(dt, float(np.min(v.widths / np.maximum(sp, 1e-300))))
        return self.cfl * dt

    def step(self, dt: float | None = None, dt_max: float | None = None) -> float:
        t0 = self.t
        faces0 = [st.grid.phi.copy() for st in self.states]
        u0 = [st.u for st in self.states]
        ev0 = [self._evolved(st, f, u) for st, f, u in zip(self.states, faces0, u0)]
        y0 = self.y.copy()
        try:
            views1, out1, r1, fl1 = self._stage(t0, faces0, ev0, y0, u0)
            limit = self.stable_dt(views1, out1)
            if dt is None:
                dt = limit if dt_max is None else min(limit, dt_max)
            elif dt > limit * (1 + 1e-12):
                raise CflViolation(f"dt={dt:.4g} exceeds the CFL limit {limit:.4g}")
            faces1 = [f + dt * s for f, s in zip(faces0, out1.speeds)]
            ev1 = [e + dt * r for e, r in zip(ev0, r1)]
            y1 = y0 + dt * np.asarray(out1.dydt, dtype=float)
            views2, out2, r2, fl2 = self._stage(t0 + dt, faces1, ev1, y1, [v.u for v in views1])
            faces = [0.5 * (f0 + f1 + dt * s) for f0, f1, s in zip(faces0, faces1, out2.speeds)]
            ev = [0.5 * (e0 + e1 + dt * r) for e0, e1, r in zip(ev0, ev1, r2)]
            self.y = 0.5 * (y0 + y1 + dt * np.asarray(out2.dydt, dtype=float))
            for k, st in enumerate(self.states):
                u = _recover(st.sys, faces[k], ev[k], views2[k].u)
                speed = 0.5 * (out1.speeds[k] + out2.speeds[k])
                phi_x = np.gradient(faces[k], st.grid.reference_nodes, edge_order=2)
                st.grid = replace(st.grid, phi=faces[k], phi_x=phi_x, phi_t=speed)
                st.u = u
                st.t = t0 + dt
                if fl1[k] is not None:
                    self.flux_integrals[k] += 0.5 * dt * (np.vstack(fl1[k]) + np.vstack(fl2[k]))
                st.history.append((t0 + dt, out2.boundary[k][0].copy(), out2.boundary[k][1].copy()))
            self.t = t0 + dt
            self.last_stages = [out1, out2]
            self.last_dt = dt
            self.steps += 1
            self._check(self.t)
        except FrontTrackError as exc:
            if exc.time is None:
                exc.time = t0
            raise
        after = getattr(self.problem, "after_step", None)
        if after is not None:
            after(self)
        return dt

    def _check(self, t):
        lo, hi = JACOBIAN_BOUNDS
        for st in self.states:
            if self.check_jacobian:
                jac = np.diff(st.grid.phi) / np.diff(st.grid.reference_nodes)
                if np.any(jac < lo) or np.any(jac > hi):
                    raise JacobianDegeneracy(
                        f"d_x phi of domain {st.name} left [{lo}, {hi}]", time=t)
            if not np.all(np.isfinite(st.u)) or not np.all(st.sys.in_phase_box(st.u)):
                raise PhaseBoxExit(f"state left the admissible set in domain {st.name}", time=t)

    def run(self, end_time: float, dt: float | None = None, callback=None, max_steps: int = 10**7):
        """Step until ``end_time``; the last step is shortened to land on it."""
        n = 0
        while self.t < end_time - 1e-14 * max(1.0, abs(end_time)) and n < max_steps:
            remaining = end_time - self.t
            if dt is None:
                self.step(dt_max=remaining)
            else:
                self.step(min(dt, remaining))
            n += 1
            if callback is not None:
                callback(self)
        return self


# ---------------------------------------------------------------------------
# plain initial boundary value problem


def boundary_state(view: StageView, closure, side: str, t: float, speed: float = 0.0,
                   check: bool = True) -> np.ndarray:
    if closure is None or isinstance(closure, Transparent):
        return view.edge(side).copy()
    return solve_closure(view.sys, closure, t, view.extrapolate(side), side, speed, check)


class IBVPProblem:
    """Fixed domains with a closure at each end (default: transparent)."""

    def __init__(self, closures: Sequence[tuple]):
        self.closures = list(closures)

    def evaluate(self, t, views, y):
        bnd, speeds = [], []
        for v, (cl, cr) in zip(views, self.closures):
            bnd.append((boundary_state(v, cl, "left", t), boundary_state(v, cr, "right", t)))
            speeds.append(np.zeros(len(v.faces)))
        return StageOutput(bnd, speeds, np.zeros(0))


def apply_boundary(state: SolverState, closure, side: str = "left", t: float | None = None) -> np.ndarray:
    """Boundary value produced by ``closure`` for the current interior state."""
    t = state.t if t is None else t
    return boundary_state(state.view(), closure, side, t)


def farfield_close(state: SolverState, side: str = "right") -> np.ndarray:
    """Ghost value at a truncated end: both invariants copied from the edge cell."""
    return state.view().edge(side).copy()


def step(state: SolverState, closures: tuple | None = None, dt: float | None = None) -> SolverState:
    """Advance one domain with fixed ends by one Heun step; returns a new state."""
    closures = closures if closures is not None else (state.left, state.right)
    new = replace(state, u=state.u.copy(), history=deque(state.history, maxlen=HISTORY_LENGTH))
    sim = Simulation(IBVPProblem([closures]), [new], t=state.t, cfl=state.cfl)
    sim.step(dt)
    return new


def make_state(sys: System2x2, a: float, b: float, n_cells: int, u_init: Callable,
               left=None, right=None, cfl: float = CFL_DEFAULT, **grid_kw) -> SolverState:
    """Uniform grid on [a, b] with cell averages of ``u_init`` (3-point Gauss)."""
    grid = MovingGrid.uniform(a, b, n_cells, **grid_kw)
    return SolverState(sys, grid, cell_averages(u_init, grid.phi), cfl=cfl, left=left, right=right)


_GAUSS = (np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)]), np.array([5 / 18, 8 / 18, 5 / 18]))


def cell_averages(fn: Callable, faces: np.ndarray) -> np.ndarray:
    """Cell averages of a vectorized ``fn(x) -> (..., 2)`` by 3-point Gauss quadrature."""
    xc = 0.5 * (faces[1:] + faces[:-1])
    hw = 0.5 * np.diff(faces)
    acc = 0.0
    for node, wt in zip(*_GAUSS):
        acc = acc + wt * np.asarray(fn(xc + node * hw), dtype=float)
    return acc
