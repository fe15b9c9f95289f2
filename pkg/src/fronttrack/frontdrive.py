"""Front drivers: kinematic law, fully nonlinear contact law and ODE coupling.

The contact algebra (front speed from one-sided derivatives, the second-order
boundary data and the unit vector ``mu``) is pointwise and lives at the top
of the module.  The problem classes below plug it into
:class:`~fronttrack.solver.Simulation`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    DegenerateContact,
    FrontExcursionTooLarge,
    Nu2LopatinskiLoss,
    SingularA,
    SubsonicityLoss,
)
from .grid import cutoff_profile, max_cutoff_excursion
from .hypcore import eigen_arrays, eigen_from_matrix
from .solver import (
    DirichletTrace,
    StageOutput,
    StageView,
    boundary_state,
    solve_closure,
    trace_consistency,
)
from .systems import System2x2, perp

DEFAULT_C0 = 1e-8


@dataclass
class FrontState:
    """Tracked front: position, velocity, regime and the latest diagnostics."""

    xbar: float
    xbar_dot: float = 0.0
    mode: str = "kinematic"
    regime: str = "subsonic"
    mu: Optional[np.ndarray] = None
    nu2: Optional[np.ndarray] = None
    traces: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# finite-difference jets of analytic data


def _d1(fn, h):
    return (fn(-2 * h) - 8 * fn(-h) + 8 * fn(h) - fn(2 * h)) / (12 * h)


def _d2(fn, h):
    return (-fn(2 * h) + 16 * fn(h) - 30 * fn(0.0) + 16 * fn(-h) - fn(-2 * h)) / (12 * h * h)


def space_time_jet(fn: Callable, t: float, x: float, h1: float = 1e-3, h2: float = 1e-2) -> dict:
    """Value and derivatives up to order two of ``fn(t, x)`` by fourth-order stencils."""
    a = lambda dt, dx: np.asarray(fn(t + dt, x + dx), dtype=float)  # noqa: E731
    return {
        "ui": a(0.0, 0.0),
        "ui_t": _d1(lambda s: a(s, 0.0), h1),
        "ui_x": _d1(lambda s: a(0.0, s), h1),
        "ui_tt": _d2(lambda s: a(s, 0.0), h2),
        "ui_xx": _d2(lambda s: a(0.0, s), h2),
        "ui_tx": _d1(lambda s: _d1(lambda r: a(s, r), h2), h2),
    }


# ---------------------------------------------------------------------------
# pointwise contact algebra


def contact_speed(u_x, ui_x, u_t, ui_t, c0: float = DEFAULT_C0, clamp: bool = False) -> float:
    """``-(d_x U - d_x U_i).(d_t U - d_t U_i) / |d_x U - d_x U_i|^2``.

    With ``clamp`` the denominator is floored at ``c0^2/4`` instead of raising.
    """
    d = np.asarray(u_x, dtype=float) - np.asarray(ui_x, dtype=float)
    e = np.asarray(u_t, dtype=float) - np.asarray(ui_t, dtype=float)
    den = float(d @ d)
    if den < c0 * c0:
        if not clamp or den == 0.0:
            raise DegenerateContact(f"|d_x U - d_x U_i| = {np.sqrt(den):.3e} below c0 = {c0:.3e}")
        den = max(den, 0.25 * c0 * c0)
    return -float(d @ e) / den


def contact_mu(sys: System2x2, u, ui_x, ui_t, tiny: float = 1e-8) -> np.ndarray:
    """Unit vector orthogonal to ``d_t u_i + A(u_i) d_x u_i`` (u_i = u on the front)."""
    v = np.asarray(ui_t, dtype=float) + sys.A(np.asarray(u, dtype=float)) @ np.asarray(ui_x, dtype=float)
    n = np.linalg.norm(v)
    if n < tiny:
        raise DegenerateContact(f"|d_t u_i + A d_x u_i| = {n:.3e}; mu undefined")
    return perp(v) / n


@dataclass(frozen=True)
class SecondOrderData:
    u2: np.ndarray
    nu2: np.ndarray
    g2: float
    g1: np.ndarray
    chi2: float
    d: np.ndarray
    u_t: np.ndarray


def second_order_data(sys: System2x2, u, u_x, xdot: float, ui_x, ui_tt, ui_tx, ui_xx,
                      u_xx=None, u2=None, u_t=None, c0: float = DEFAULT_C0) -> SecondOrderData:
    """Quantities of the second-order reduction at the front.

    ``u2 = (d_t^phi)^2 u`` is taken from the argument when given, otherwise
    assembled from ``u_xx`` by eliminating the mixed and second space
    derivatives through the interior equation.
    """
    u = np.asarray(u, dtype=float)
    u_x = np.asarray(u_x, dtype=float)
    A = sys.A(u)
    if abs(np.linalg.det(A)) < 1e-12 * (1.0 + np.abs(A).max() ** 2):
        raise SingularA("A(u) is not invertible at the front")
    Ainv = np.linalg.inv(A)
    if u_t is None:
        u_t = -A @ u_x
    u_t = np.asarray(u_t, dtype=float)
    dAt = sys.dir_A(u, u_t)
    dAx = sys.dir_A(u, u_x)
    if u2 is None:
        if u_xx is None:
            raise ValueError("either u2 or u_xx is required")
        u2 = A @ A @ np.asarray(u_xx, dtype=float) + A @ dAx @ u_x - dAt @ u_x
    u2 = np.asarray(u2, dtype=float)
    g1 = ((2 * xdot * Ainv - xdot**2 * Ainv @ Ainv) @ dAt @ u_x
          + xdot**2 * Ainv @ dAx @ u_x
          + np.asarray(ui_tt, dtype=float) + 2 * xdot * np.asarray(ui_tx, dtype=float)
          + xdot**2 * np.asarray(ui_xx, dtype=float))
    d = u_x - np.asarray(ui_x, dtype=float)
    den = float(d @ d)
    if den < c0 * c0:
        raise DegenerateContact(f"|d_x u - d_x u_i| = {np.sqrt(den):.3e} below c0")
    K = np.eye(2) - xdot * Ainv
    K2 = K @ K
    nu2 = K2.T @ perp(d)
    g2 = float(perp(d) @ g1)
    chi2 = float(d @ (g1 - K2 @ u2)) / den
    return SecondOrderData(u2=u2, nu2=nu2, g2=g2, g1=g1, chi2=chi2, d=d, u_t=u_t)


def conalg_sides(sys: System2x2, u, d, xdot: float, mu, nu2=None) -> tuple[float, float]:
    """Both sides of the identity linking ``|nu2 . e+|`` and ``|mu . e+|``."""
    u = np.asarray(u, dtype=float)
    A = sys.A(u)
    es = eigen_from_matrix(A)
    if nu2 is None:
        K = np.eye(2) - xdot * np.linalg.inv(A)
        nu2 = (K @ K).T @ perp(np.asarray(d, dtype=float))
    lhs = abs(float(nu2 @ es.e_plus))
    M = (xdot * np.eye(2) - A).T @ np.asarray(mu, dtype=float)
    rhs = ((es.lambda_plus - xdot) ** 3 / es.lambda_plus**2) * np.linalg.norm(d) / np.linalg.norm(M) \
        * abs(float(np.asarray(mu) @ es.e_plus))
    return lhs, rhs


def rel1_residual(sys: System2x2, u, d, xdot: float, ui_x, ui_t) -> float:
    """Defect of ``(xdot - A(u)) d = d_t u_i + A(u_i) d_x u_i`` on the front."""
    u = np.asarray(u, dtype=float)
    A = sys.A(u)
    lhs = (xdot * np.eye(2) - A) @ np.asarray(d, dtype=float)
    rhs = np.asarray(ui_t, dtype=float) + A @ np.asarray(ui_x, dtype=float)
    return float(np.linalg.norm(lhs - rhs))


def check_subsonic(sys: System2x2, u, speed: float, c0: float = 0.0, time=None) -> None:
    """``lambda_+ - speed > c0`` and ``lambda_- + speed > c0`` at the front."""
    lp, lm, *_ = eigen_arrays(sys.A(np.asarray(u, dtype=float)))
    if not (float(lp) - speed > c0 and float(lm) + speed > c0):
        raise SubsonicityLoss(
            f"front speed {speed:.4g} not subsonic (lambda+={float(lp):.4g}, lambda-={float(lm):.4g})",
            time=time)


# ---------------------------------------------------------------------------
# kinematic law


def kinematic_advance(front: FrontState, law: Callable, trace_start, trace_end, dt: float,
                      sys: System2x2 | None = None) -> FrontState:
    """Heun update ``xbar += dt/2 (X(u_start) + X(u_end))``."""
    v0 = float(law(np.asarray(trace_start, dtype=float)))
    v1 = float(law(np.asarray(trace_end, dtype=float)))
    if sys is not None:
        check_subsonic(sys, trace_end, v1)
    return FrontState(front.xbar + 0.5 * dt * (v0 + v1), v1, "kinematic", front.regime)


class KinematicProblem:
    """Front at the left end moving with ``xdot = X(u|front)``; Lagrangian grid.

    Every face moves with ``X`` of the local state (interior faces use the
    mean of the two neighbouring cells) so that the grid realizes the map
    ``phi = x + int X(u) dt``.  ``y = [xbar]``.
    """

    def __init__(self, law: Callable, closure, far=None, grid: str = "lagrangian", c0: float = 0.0):
        self.law = law
        self.closure = closure
        self.far = far
        self.grid = grid
        self.c0 = c0
        self.front = None

    def _law_vec(self, u):
        return np.array([float(self.law(v)) for v in np.atleast_2d(u)])

    def evaluate(self, t, views, y):
        v = views[0]
        # closure does not depend on the face speed, so solve first then check
        ub = solve_closure(v.sys, self.closure, t, v.extrapolate("left"), "left", check=False)
        xdot = float(self.law(ub))
        check_subsonic(v.sys, ub, xdot, self.c0, time=t)
        ur = boundary_state(v, self.far, "right", t)
        if self.grid == "lagrangian":
            s = np.empty(len(v.faces))
            s[0] = xdot
            s[1:-1] = self._law_vec(0.5 * (v.u[1:] + v.u[:-1]))
            s[-1] = float(self.law(ur))
        else:
            s = self.weights * xdot
        return StageOutput([(ub, ur)], [s], np.array([xdot]), {"u_b": ub, "xdot": xdot})

    def attach(self, state, epsilon: float | None = None):
        if self.grid == "cutoff":
            psi, _ = cutoff_profile((state.grid.reference_nodes - state.grid.front_anchor) / epsilon)
            self.weights = psi
        return self


# ---------------------------------------------------------------------------
# fully nonlinear contact law


@dataclass
class ContactTraces:
    u: np.ndarray
    u_x: np.ndarray
    u_t: np.ndarray
    ui: np.ndarray
    ui_x: np.ndarray
    ui_t: np.ndarray


def one_sided_traces(view: StageView, side: str, u_b) -> tuple[np.ndarray, np.ndarray]:
    """``(d_x u, d_t u)`` at the front from the face value and two cell averages.

    The time derivative comes from the interior equation ``d_t u = -A d_x u``.
    """
    u_x = view.boundary_derivative(side, u_b)
    return u_x, -view.sys.A(u_b) @ u_x


class ContactProblem:
    """Front with the trace condition ``U = U_i`` and speed from the contact law.

    ``side`` is where the fluid domain lies relative to the front: ``"right"``
    means the domain is ``(xbar, L)`` and the front is its first face.

    Unknowns ``y``: ``[xbar]``, then ``xdot`` in second-order mode, then the
    ODE state ``W`` when ``G_i``/``F`` are supplied (``U_i = G_i(W, x)``).
    """

    def __init__(self, U_i: Callable | None = None, *, side: str = "right", far=None,
                 second_order: bool = False, G_i: Callable | None = None, F: Callable | None = None,
                 U_i_jet: Callable | None = None, c0: float = DEFAULT_C0, nu2_c0: float = 0.0):
        self.U_i = U_i
        self.side = side
        self.far = far
        self.second_order = second_order
        self.G_i = G_i
        self.F = F
        self.U_i_jet = U_i_jet
        self.c0 = c0
        self.nu2_c0 = nu2_c0
        self.weights = None
        self.anchor = 0.0
        self.epsilon = np.inf
        self.diagnostics: list[dict] = []

    def attach(self, state):
        g = state.grid
        self.epsilon = g.epsilon
        self.anchor = g.front_anchor
        psi, _ = cutoff_profile((g.reference_nodes - g.front_anchor) / g.epsilon)
        self.weights = psi
        return self

    def initial_y(self, xbar0: float, xdot0: float = 0.0, W0=None) -> np.ndarray:
        y = [xbar0]
        if self.second_order:
            y.append(xdot0)
        if W0 is not None:
            y.extend(np.atleast_1d(W0))
        return np.asarray(y, dtype=float)

    def _split(self, y):
        xbar = y[0]
        k = 1
        xdot_state = None
        if self.second_order:
            xdot_state = y[1]
            k = 2
        W = y[k:] if self.G_i is not None else None
        return xbar, xdot_state, W

    def interior_jet(self, t, xbar, W):
        """Trace data of ``U_i`` at the front (value, first and second derivatives)."""
        if W is not None:
            Wdot = np.asarray(self.F(W, xbar), dtype=float)
            # time derivatives along the current ODE velocity; second-order
            # terms in W are not included
            fn = lambda s, x: self.G_i(W + s * Wdot, x)  # noqa: E731
            return space_time_jet(fn, 0.0, xbar), Wdot
        if self.U_i_jet is not None:
            return self.U_i_jet(t, xbar), None
        return space_time_jet(self.U_i, t, xbar), None

    def evaluate(self, t, views, y):
        v = views[0]
        xbar, xdot_state, W = self._split(y)
        if abs(xbar - self.anchor) >= max_cutoff_excursion(self.epsilon):
            raise FrontExcursionTooLarge(f"front moved {xbar - self.anchor:.4g} from its anchor", time=t)
        jet, Wdot = self.interior_jet(t, xbar, W)
        ub = np.asarray(jet["ui"], dtype=float)
        side = "left" if self.side == "right" else "right"
        u_x, u_t = one_sided_traces(v, side, ub)
        chi = contact_speed(u_x, jet["ui_x"], u_t, jet["ui_t"], self.c0)
        xdot = chi if xdot_state is None else xdot_state
        check_subsonic(v.sys, ub, xdot, time=t)
        dy = [xdot]
        info = {"u_b": ub, "chi": chi, "xdot": xdot, "u_x": u_x, "u_t": u_t, "jet": jet,
                "trace_residual": trace_consistency(v.sys, ub, v.extrapolate(side), side)}
        if self.second_order:
            u_xx = self._second_derivative(v, side, ub)
            sod = second_order_data(v.sys, ub, u_x, xdot, jet["ui_x"], jet["ui_tt"], jet["ui_tx"],
                                    jet["ui_xx"], u_xx=u_xx, c0=self.c0)
            dy.append(sod.chi2)
            info["chi2"] = sod.chi2
        if W is not None:
            dy.extend(Wdot)
        far = boundary_state(v, self.far, self.side, t)
        s = self.weights * xdot
        bnd = (ub, far) if self.side == "right" else (far, ub)
        return StageOutput([bnd], [s], np.asarray(dy, dtype=float), info)

    @staticmethod
    def _second_derivative(view: StageView, side: str, u_b):
        w = view.widths
        if side == "left":
            u0, u1, a, b = view.u[0], view.u[1], w[0], w[1]
        else:
            u0, u1, a, b = view.u[-1], view.u[-2], w[-1], w[-2]
        m1 = np.array([[a / 2, a * a / 3], [a + b / 2, (a * a + a * (a + b) + (a + b) ** 2) / 3]])
        coef = np.linalg.solve(m1, np.vstack([u0 - u_b, u1 - u_b]))
        return 2 * coef[1]

    def after_step(self, sim):
        info = sim.last_stages[-1].info
        v = sim.states[0].view()
        ub = info["u_b"]
        jet = info["jet"]
        d = info["u_x"] - jet["ui_x"]
        xdot = info["xdot"]
        A = v.sys.A(ub)
        K = np.eye(2) - xdot * np.linalg.inv(A)
        nu2 = (K @ K).T @ perp(d)
        es = eigen_from_matrix(A)
        lop = abs(float(nu2 @ es.e_plus))
        if lop < self.nu2_c0:
            raise Nu2LopatinskiLoss(f"|nu2 . e+| = {lop:.3e} below {self.nu2_c0:.3e}", time=sim.t)
        self.diagnostics.append({"t": sim.t, "xbar": float(sim.y[0]), "xdot": xdot, "chi": info["chi"],
                                 "nu2_lopatinskii": lop,
                                 "rel1": rel1_residual(v.sys, ub, d, xdot, jet["ui_x"], jet["ui_t"]),
                                 "trace_residual": info["trace_residual"]})


def contact_advance(sim, dt: float | None = None) -> tuple[FrontState, DirichletTrace]:
    """One coupled step of a contact simulation; returns the front and the imposed trace."""
    sim.step(dt)
    info = sim.last_stages[-1].info
    prob = sim.problem
    xbar = float(sim.y[0])
    front = FrontState(xbar, info["xdot"], "contact_ode" if prob.G_i is not None else "contact")
    d = info["u_x"] - info["jet"]["ui_x"]
    try:
        front.mu = contact_mu(sim.states[0].sys, info["u_b"], info["jet"]["ui_x"], info["jet"]["ui_t"])
    except DegenerateContact:
        front.mu = None
    A = sim.states[0].sys.A(info["u_b"])
    K = np.eye(2) - info["xdot"] * np.linalg.inv(A)
    front.nu2 = (K @ K).T @ perp(d)
    front.traces = {"u_b": info["u_b"], "u_x": info["u_x"], "u_t": info["u_t"]}
    return front, DirichletTrace(info["u_b"])
