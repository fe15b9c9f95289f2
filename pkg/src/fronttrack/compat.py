"""Corner compatibility conditions at orders 0 to 2 and initial front velocities.

All quantities are evaluated at the boundary node from a boundary *jet*
(value, first and second space derivative) fitted to the first five samples
of the initial data.  Time derivatives of boundary data are taken by
differentiating the constraint along the Taylor path ``u0 + t u1 + t^2/2 u2``,
which reproduces the Leibniz sums of the corner identities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .errors import DegenerateContact, InsufficientStencil
from .frontdrive import _d1, _d2, space_time_jet
from .solver import DirichletTrace, LinearNu, NonlinearPhi
from .systems import System2x2, perp

STENCIL = 5


@dataclass
class CompatReport:
    order: int
    residuals: list
    derived_initials: dict = field(default_factory=dict)

    def max_residual(self, upto: int | None = None) -> float:
        upto = self.order if upto is None else upto
        return max(abs(float(r)) for r in self.residuals[: upto + 1])


def boundary_jet(x, u, side: str = "left", npts: int = STENCIL):
    """``(u, u_x, u_xx)`` at the end node from a degree ``npts-1`` polynomial fit."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if len(x) < npts:
        raise InsufficientStencil(f"need {npts} nodes near the boundary, got {len(x)}")
    if side == "left":
        xs, us = x[:npts], u[:npts]
    else:
        xs, us = x[-npts:][::-1], u[-npts:][::-1]
    scale = np.max(np.abs(xs - xs[0]))
    s = (xs - xs[0]) / scale
    V = np.vander(s, npts, increasing=True)
    coef = np.linalg.solve(V, us.reshape(npts, -1))
    val = coef[0]
    dx = coef[1] / scale
    dxx = 2 * coef[2] / scale**2
    shape = u.shape[1:]
    return val.reshape(shape), dx.reshape(shape), dxx.reshape(shape)


def _B(sys, t, x):
    if sys.B is None:
        return np.zeros(np.shape(x) + (2, 2))
    return np.asarray(sys.B(t, x), dtype=float).reshape(np.shape(x) + (2, 2))


def _src(sys, t, x):
    if sys.source is None:
        return np.zeros(np.shape(x) + (2,))
    return np.asarray(sys.source(t, x), dtype=float).reshape(np.shape(x) + (2,))


def initial_time_derivatives(sys: System2x2, x, u_in, order: int = 2, t0: float = 0.0) -> list:
    """``[u0, u1, u2]`` (up to ``order``) at every node for ``u_t + A u_x + B u = f``."""
    if order > 2:
        raise ValueError("orders above 2 are not supported")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u_in, dtype=float)
    if len(x) < STENCIL:
        raise InsufficientStencil(f"need {STENCIL} nodes, got {len(x)}")
    out = [u]
    if order == 0:
        return out
    ux = np.gradient(u, x, axis=0, edge_order=2)
    A = sys.A(u)
    B = _B(sys, t0, x)
    u1 = -np.einsum("nij,nj->ni", A, ux) - np.einsum("nij,nj->ni", B, u) + _src(sys, t0, x)
    out.append(u1)
    if order == 1:
        return out
    u1x = np.gradient(u1, x, axis=0, edge_order=2)
    Bt = _d1(lambda s: _B(sys, t0 + s, x), 1e-3)
    ft = _d1(lambda s: _src(sys, t0 + s, x), 1e-3)
    u2 = (-np.einsum("nij,nj->ni", sys.dir_A(u, u1), ux) - np.einsum("nij,nj->ni", A, u1x)
          - np.einsum("nij,nj->ni", Bt, u) - np.einsum("nij,nj->ni", B, u1) + ft)
    out.append(u2)
    return out


def _ibvp_boundary_derivatives(sys, x, u_in, t0, side="left"):
    """Boundary values of ``u0, u1, u2`` from the jet (exact chain rule)."""
    u, ux, uxx = boundary_jet(x, u_in, side)
    xb = float(x[0] if side == "left" else x[-1])
    A = sys.A(u)
    B = _B(sys, t0, np.array(xb))
    Bx = _d1(lambda s: _B(sys, t0, np.array(xb + s)), 1e-3)
    Bt = _d1(lambda s: _B(sys, t0 + s, np.array(xb)), 1e-3)
    f = _src(sys, t0, np.array(xb))
    fx = _d1(lambda s: _src(sys, t0, np.array(xb + s)), 1e-3)
    ft = _d1(lambda s: _src(sys, t0 + s, np.array(xb)), 1e-3)
    u1 = -A @ ux - B @ u + f
    u1x = -sys.dir_A(u, ux) @ ux - A @ uxx - Bx @ u - B @ ux + fx
    u2 = -sys.dir_A(u, u1) @ ux - A @ u1x - Bt @ u - B @ u1 + ft
    return u, u1, u2


def _path_residuals(closure, t0, u0, u1, u2, order):
    """k-th time derivative of ``constraint(t, u(t))`` along the Taylor path."""
    if isinstance(closure, DirichletTrace):
        raise TypeError("trace closures have vector residuals")

    def r(s):
        return closure.constraint(t0 + s, u0 + s * u1 + 0.5 * s * s * u2)[0]

    res = [r(0.0)]
    if order >= 1:
        res.append(_d1(r, 1e-3))
    if order >= 2:
        res.append(_d2(r, 1e-2))
    return res


# ---------------------------------------------------------------------------
# problem descriptions


@dataclass
class IBVPData:
    sys: System2x2
    x: np.ndarray
    u_in: np.ndarray
    closure: Any
    t0: float = 0.0
    side: str = "left"


@dataclass
class KinematicData:
    """Kinematic front: ``xdot = law(u|front)`` and a scalar closure on the front."""

    sys: System2x2
    x: np.ndarray
    u_in: np.ndarray
    closure: Any
    law: Callable
    law_grad: Optional[Callable] = None
    t0: float = 0.0


@dataclass
class ContactData:
    """Contact front with ``U = U_i`` at the front located at ``x[0]``.

    Either ``U_i(t, x)`` or the ODE form ``G_i(W, x)``, ``F(W, xbar)``, ``W0``.
    """

    sys: System2x2
    x: np.ndarray
    u_in: np.ndarray
    U_i: Optional[Callable] = None
    G_i: Optional[Callable] = None
    F: Optional[Callable] = None
    W0: Optional[np.ndarray] = None
    t0: float = 0.0
    c0: float = 1e-8


@dataclass
class PistonData:
    """Wall at ``x[0]`` driven by a spring; ``u_in = (zeta, v)``."""

    x: np.ndarray
    u_in: np.ndarray
    g: float
    h0: float
    rho: float
    m: float
    k: float
    x_eq: float
    xbar0: float = 0.0
    xdot0: float = 0.0


def _grad_fd(fn, u, h=1e-6):
    u = np.asarray(u, dtype=float)
    out = np.empty(2)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h * (1.0 + abs(u[k]))
        out[k] = (fn(u + e) - fn(u - e)) / (2 * e[k])
    return out


def _kinematic_boundary(p: KinematicData):
    sys = p.sys
    u, ux, uxx = boundary_jet(p.x, p.u_in)
    grad = p.law_grad or (lambda v: _grad_fd(p.law, v))
    X = float(p.law(u))
    gX = np.asarray(grad(u), dtype=float)
    A = sys.A(u)
    M = A - X * np.eye(2)
    u1 = -M @ ux
    dXx = float(gX @ ux)            # d_x X(u) = d_t d_x phi at t = 0
    dXt = float(gX @ u1)
    u1x = -(sys.dir_A(u, ux) - dXx * np.eye(2)) @ ux - M @ uxx
    u2 = -(sys.dir_A(u, u1) - dXt * np.eye(2)) @ ux - M @ u1x + M @ ux * dXx
    return u, u1, u2, X, dXt


def _contact_boundary(p: ContactData):
    sys = p.sys
    u, ux, uxx = boundary_jet(p.x, p.u_in)
    x0 = float(p.x[0])
    if p.G_i is not None:
        W0 = np.asarray(p.W0, dtype=float)
        Wdot = np.asarray(p.F(W0, x0), dtype=float)

        def U_i(t, x):
            return p.G_i(W0 + t * Wdot, x)

        jet = space_time_jet(U_i, 0.0, x0)
        # second time derivative needs W'' = dF/dW W' + dF/dxbar xbar'
        jet["_Wdot"] = Wdot
    else:
        jet = space_time_jet(p.U_i, p.t0, x0)
    A = sys.A(u)
    ut = -A @ ux
    utx = -sys.dir_A(u, ux) @ ux - A @ uxx
    utt = -sys.dir_A(u, ut) @ ux + A @ sys.dir_A(u, ux) @ ux + A @ A @ uxx
    d = ux - jet["ui_x"]
    den = float(d @ d)
    if den < p.c0**2:
        raise DegenerateContact(f"|d_x u_in - d_x U_i| = {np.sqrt(den):.3e} at the corner")
    e1 = ut - jet["ui_t"]
    x1 = -float(d @ e1) / den
    if p.G_i is not None:
        W0 = np.asarray(p.W0, dtype=float)
        Wdot = jet["_Wdot"]
        h = 1e-6
        dFdW = np.column_stack([(np.asarray(p.F(W0 + h * ek, x0)) - np.asarray(p.F(W0 - h * ek, x0))) / (2 * h)
                                for ek in np.eye(len(W0))])
        dFdx = (np.asarray(p.F(W0, x0 + h)) - np.asarray(p.F(W0, x0 - h))) / (2 * h)
        Wddot = dFdW @ Wdot + dFdx * x1

        def U_i2(t, x):
            return p.G_i(W0 + t * Wdot + 0.5 * t * t * Wddot, x)

        jet2 = space_time_jet(U_i2, 0.0, x0)
        jet.update({k: jet2[k] for k in ("ui_tt", "ui_tx", "ui_xx")})
    E0 = (utt - jet["ui_tt"]) + 2 * x1 * (utx - jet["ui_tx"]) + x1**2 * (uxx - jet["ui_xx"])
    x2 = -float(d @ E0) / den
    res = [float(np.linalg.norm(u - jet["ui"])), float(perp(d) @ e1), float(perp(d) @ E0)]
    return {"u": u, "u_x": ux, "u_xx": uxx, "u1": ut, "u2": utt, "x1": x1, "x2": x2,
            "residuals": res, "jet": jet, "d": d}


def _piston_boundary(p: PistonData):
    u, ux, uxx = boundary_jet(p.x, p.u_in)
    zeta, v = u
    zx, vx = ux
    zxx, vxx = uxx
    h = p.h0 + zeta
    zeta1 = -h * vx
    v1 = -p.g * zx
    v2 = p.g * (2 * zx * vx + h * vxx)
    x1 = p.xdot0
    x2 = (-p.k * (p.xbar0 - p.x_eq) + 0.5 * p.rho * p.g * (zeta**2 + 2 * p.h0 * zeta)) / p.m
    x3 = (-p.k * x1 + p.rho * p.g * (p.h0 + zeta) * zeta1) / p.m
    return {"u": u, "x1": x1, "x2": x2, "x3": x3, "residuals": [v - x1, v1 - x2, v2 - x3]}


def initial_front_velocity(problem) -> tuple[float, float]:
    """``(xbar_1^in, xbar_2^in)`` for kinematic, contact and piston problems."""
    if isinstance(problem, KinematicData):
        _, _, _, X, dXt = _kinematic_boundary(problem)
        return X, dXt
    if isinstance(problem, ContactData):
        c = _contact_boundary(problem)
        return c["x1"], c["x2"]
    if isinstance(problem, PistonData):
        c = _piston_boundary(problem)
        return c["x1"], c["x2"]
    raise TypeError(f"no front velocity for {type(problem).__name__}")


def check_compatibility(problem, order: int = 1) -> CompatReport:
    """Left-minus-right defects of the corner identities up to ``order`` (at most 2)."""
    if order > 2 or order < 0:
        raise ValueError("order must be 0, 1 or 2")
    if isinstance(problem, IBVPData):
        u0, u1, u2 = _ibvp_boundary_derivatives(problem.sys, problem.x, problem.u_in, problem.t0, problem.side)
        res = _path_residuals(problem.closure, problem.t0, u0, u1, u2, order)
        fields = initial_time_derivatives(problem.sys, problem.x, problem.u_in, order, problem.t0)
        derived = {f"u{k}": f for k, f in enumerate(fields) if k > 0}
        return CompatReport(order, res, derived)
    if isinstance(problem, KinematicData):
        u0, u1, u2, X, dXt = _kinematic_boundary(problem)
        res = _path_residuals(problem.closure, problem.t0, u0, u1, u2, order)
        return CompatReport(order, res, {"u1_boundary": u1, "u2_boundary": u2, "x1": X, "x2": dXt})
    if isinstance(problem, ContactData):
        c = _contact_boundary(problem)
        return CompatReport(order, c["residuals"][: order + 1],
                            {"u1_boundary": c["u1"], "u2_boundary": c["u2"], "x1": c["x1"], "x2": c["x2"]})
    if isinstance(problem, PistonData):
        c = _piston_boundary(problem)
        return CompatReport(order, c["residuals"][: order + 1], {"x1": c["x1"], "x2": c["x2"], "x3": c["x3"]})
    raise TypeError(f"unknown problem type {type(problem).__name__}")


def piston_compatible_profile(g: float, h0: float, rho: float, m: float, k: float, x_eq: float,
                              xbar0: float = 0.0, zeta_b: float = 0.0, xdot0: float = 0.0,
                              length: float = 1.0) -> Callable:
    """Initial ``(zeta, v)`` meeting the two piston corner identities.

    ``v`` is constant (``= xdot0``) and ``zeta`` is linear near the wall with
    the slope dictated by the wall acceleration, tapered to zero over ``length``.
    """
    accel = (-k * (xbar0 - x_eq) + 0.5 * rho * g * (zeta_b**2 + 2 * h0 * zeta_b)) / m
    slope = -accel / g

    def profile(x):
        x = np.asarray(x, dtype=float)
        s = np.clip(x / length, 0.0, 1.0)
        bump = (1 - s) ** 3 * (1 + 3 * s)   # value 1, slope 0 at s=0; C1 at s=1
        z = (zeta_b + slope * x) * bump
        return np.stack([z, np.full_like(x, xdot0)], axis=-1)

    return profile
