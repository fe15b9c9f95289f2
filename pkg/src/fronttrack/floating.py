"""Shallow water with a floating body: fixed, prescribed motion or free.

The water under the body (the wetted interval ``(x_-, x_+)``) is solved in
closed form: the surface follows the lid and the flux is

    Q_i = (U_G, omega) . T(r_G) + qbar,   T(r) = (-r_perp, |r|^2 / 2)

with one scalar ODE for ``qbar`` that makes the interior pressure return to
``p_atm`` at both contacts.  The two exterior canals are ordinary
``(zeta, q)`` shallow water domains on cutoff grids whose contact faces move
with the first-component contact law.

Angles: ``theta`` is counter-clockwise (it is the angle in the lid relation
solved by :func:`psi_lid_solve`), while ``omega`` is the angular velocity in
the orientation used by ``T`` and the torque balance, so ``theta' = -omega``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .errors import (
    ContactCollision,
    DegenerateContact,
    DryInterior,
    FrontExcursionTooLarge,
    LidOverrun,
    NewtonDivergence,
    RotationOutOfRange,
    ValidationError,
)
from .frontdrive import DEFAULT_C0, FrontState, _d1, _d2, check_subsonic
from .grid import MovingGrid, cutoff_profile, max_cutoff_excursion
from .solver import Simulation, SolverState, StageOutput, Transparent, boundary_state, cell_averages
from .systems import perp, shallow_water_zq

PSI_TOL = 1e-12
PSI_MAXIT = 200
SLOPE_SAMPLES = 4001
MASS_NODES = 128
MIN_CONTACT_CELLS = 4


# ---------------------------------------------------------------------------
# lid profiles


@dataclass(frozen=True)
class Lid:
    """Underside of the body at rest, ``z = Z_lid(x)`` on ``interval``.

    Outside the interval the profile is continued by its end values, so the
    slope there is zero.
    """

    profile: Callable
    slope_fn: Callable
    interval: tuple[float, float]
    name: str = "custom"

    def __call__(self, x):
        a, b = self.interval
        return self.profile(np.clip(np.asarray(x, dtype=float), a, b))

    def slope(self, x):
        a, b = self.interval
        x = np.asarray(x, dtype=float)
        inside = (x >= a) & (x <= b)
        return np.where(inside, self.slope_fn(np.clip(x, a, b)), 0.0)

    @cached_property
    def _samples(self):
        a, b = self.interval
        xs = np.linspace(a, b, SLOPE_SAMPLES)
        return xs, np.asarray(self.profile(xs), dtype=float), np.asarray(self.slope_fn(xs), dtype=float)

    @property
    def sup_slope(self) -> float:
        return float(np.max(np.abs(self._samples[2])))

    @property
    def z_range(self) -> tuple[float, float]:
        z = self._samples[1]
        return float(z.min()), float(z.max())

    @property
    def theta_max(self) -> float:
        """Largest admissible ``|theta|``: ``sup|Z_lid'| tan(theta) < 1``."""
        s = self.sup_slope
        return np.pi / 2 if s == 0 else float(np.arctan(1.0 / s))

    def crossings(self, level: float = 0.0) -> list[float]:
        """Points of the interval where the profile equals ``level``."""
        from scipy.optimize import brentq

        xs, zs, _ = self._samples
        d = zs - level
        roots = [float(x) for x, v in zip(xs, d) if v == 0.0]
        for k in np.nonzero(d[:-1] * d[1:] < 0)[0]:
            roots.append(brentq(lambda x: float(self.profile(x)) - level, xs[k], xs[k + 1], xtol=1e-15))
        return sorted(roots)

    @classmethod
    def flat(cls, level: float, interval) -> "Lid":
        return cls(lambda x: np.full_like(np.asarray(x, dtype=float), level),
                   lambda x: np.zeros_like(np.asarray(x, dtype=float)), tuple(interval), "flat")

    @classmethod
    def parabolic(cls, center: float, draft: float, curvature: float, interval) -> "Lid":
        """``Z = -draft + curvature (x - center)^2``."""
        return cls(lambda x: -draft + curvature * (np.asarray(x, dtype=float) - center) ** 2,
                   lambda x: 2.0 * curvature * (np.asarray(x, dtype=float) - center),
                   tuple(interval), "parabolic")

    @classmethod
    def cosine(cls, center: float, draft: float, half_width: float, interval) -> "Lid":
        """``Z = -draft cos(pi (x - center) / (2 half_width))``; zero at ``center +- half_width``."""
        k = np.pi / (2.0 * half_width)
        return cls(lambda x: -draft * np.cos(k * (np.asarray(x, dtype=float) - center)),
                   lambda x: draft * k * np.sin(k * (np.asarray(x, dtype=float) - center)),
                   tuple(interval), "cosine")

    @classmethod
    def tabulated(cls, x, z) -> "Lid":
        """Cubic spline through samples; the interval is the sample range."""
        from scipy.interpolate import CubicSpline

        x = np.asarray(x, dtype=float)
        spline = CubicSpline(x, np.asarray(z, dtype=float))
        deriv = spline.derivative()
        return cls(lambda s: spline(s), lambda s: deriv(s), (float(x[0]), float(x[-1])), "tabulated")


def psi_lid_solve(lid: Lid, x, x_G: float, z_G: float, theta: float, x_G0: float, z_G0: float,
                  tol: float = PSI_TOL, return_slope: bool = False):
    """Surface ``Z_i`` under the body displaced to ``(x_G, z_G, theta)`` from ``(x_G0, z_G0, 0)``.

    Solves ``z cos(th) - x' sin(th) + z_G0 = Z_lid(x' cos(th) + z sin(th) + x_G0)``
    for ``z`` with ``x' = x - x_G`` and returns ``z + z_G``.  The left side
    minus the right side is increasing in ``z`` when
    ``sup|Z_lid'| tan|theta| < 1``, so a bracketed Newton iteration always
    converges.  With ``return_slope`` the x-derivative is returned as well.
    """
    if lid.sup_slope * np.tan(abs(theta)) >= 1.0 or abs(theta) >= np.pi / 2:
        raise RotationOutOfRange(
            f"|theta| = {abs(theta):.6g} reaches the limit {lid.theta_max:.6g} of this lid")
    x = np.asarray(x, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    xp = x - x_G
    zmin, zmax = lid.z_range
    lo = (zmin - z_G0 + xp * s) / c - 1e-12
    hi = (zmax - z_G0 + xp * s) / c + 1e-12
    z = np.clip(lid(xp + x_G0) - z_G0, lo, hi)
    scale = 1.0 + abs(z_G0) + max(abs(zmin), abs(zmax))

    def residual(z):
        xi = xp * c + z * s + x_G0
        return z * c - xp * s + z_G0 - lid(xi), c - lid.slope(xi) * s

    # keep stepping until the update is at round-off: stopping on the
    # residual alone would ignore rotations below the tolerance
    step_tol = 8 * np.finfo(float).eps * scale
    for _ in range(PSI_MAXIT):
        r, dr = residual(z)
        lo = np.where(r < 0, np.maximum(lo, z), lo)
        hi = np.where(r > 0, np.minimum(hi, z), hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            zn = z - r / dr
        outside = ~np.isfinite(zn) | (zn < lo) | (zn > hi)
        zn = np.where(outside, 0.5 * (lo + hi), zn)
        done = np.all(np.abs(zn - z) <= step_tol) and np.all(np.abs(r) <= tol * scale)
        z = zn
        if done:
            break
    else:
        raise NewtonDivergence(f"lid relation not solved to {tol:g}")
    if not return_slope:
        return z + z_G
    xi = xp * c + z * s + x_G0
    zp = lid.slope(xi)
    return z + z_G, (s + zp * c) / (c - zp * s)


# ---------------------------------------------------------------------------
# body state and motion modes


@dataclass(frozen=True)
class RigidBodyState:
    """``W = (qbar, x_G, z_G, theta, u_G, w_G, omega)``."""

    q_bar: float = 0.0
    x_G: float = 0.0
    z_G: float = 0.0
    theta: float = 0.0
    u_G: float = 0.0
    w_G: float = 0.0
    omega: float = 0.0

    def vector(self) -> np.ndarray:
        return np.array([self.q_bar, self.x_G, self.z_G, self.theta, self.u_G, self.w_G, self.omega])

    @classmethod
    def from_vector(cls, w) -> "RigidBodyState":
        return cls(*(float(v) for v in np.asarray(w, dtype=float)[:7]))

    @property
    def pose(self) -> np.ndarray:
        return np.array([self.x_G, self.z_G, self.theta])

    @property
    def velocity(self) -> np.ndarray:
        return np.array([self.u_G, self.w_G, self.omega])


@dataclass(frozen=True)
class FixedBody:
    """The body does not move; ``qbar`` is the (constant in x) interior flux."""


@dataclass(frozen=True)
class PrescribedMotion:
    """Given ``x_G(t), z_G(t), theta(t)``.

    Derivatives default to fourth-order central differences; pass the
    ``d*`` callables (first and second derivatives) for exact values.
    """

    x_G: Callable
    z_G: Callable
    theta: Callable
    derivatives: Optional[Callable] = None
    step: float = 1e-3

    def kinematics(self, t: float):
        """``(pose, velocity, acceleration)`` with velocity ``(u_G, w_G, omega)``."""
        pose = np.array([self.x_G(t), self.z_G(t), self.theta(t)], dtype=float)
        if self.derivatives is not None:
            d1, d2 = (np.asarray(v, dtype=float) for v in self.derivatives(t))
        else:
            fns = (self.x_G, self.z_G, self.theta)
            d1 = np.array([_d1(lambda s, f=f: f(t + s), self.step) for f in fns])
            d2 = np.array([_d2(lambda s, f=f: f(t + s), self.step) for f in fns])
        sign = np.array([1.0, 1.0, -1.0])
        return pose, sign * d1, sign * d2

    @classmethod
    def heave(cls, x_G: float, z_G0: float, amplitude: float, frequency: float) -> "PrescribedMotion":
        """``z_G = z_G0 + amplitude sin(frequency t)``, no surge, no rotation."""
        a, w = amplitude, frequency

        def derivs(t):
            return ([0.0, a * w * np.cos(w * t), 0.0], [0.0, -a * w * w * np.sin(w * t), 0.0])

        return cls(lambda t: x_G, lambda t: z_G0 + a * np.sin(w * t), lambda t: 0.0, derivs)


@dataclass(frozen=True)
class FreeMotion:
    """Newton's laws with mass, moment of inertia and an optional extra force.

    ``applied_force(t, state)`` returns ``(F_x, F_z, torque)`` in the same
    orientation as ``omega``.
    """

    mass: float
    inertia: float
    applied_force: Optional[Callable] = None

    def __post_init__(self):
        if not (self.mass > 0 and self.inertia > 0):
            raise ValidationError("mass and inertia must be positive")

    @property
    def M0(self) -> np.ndarray:
        return np.diag([self.mass, self.mass, self.inertia])


BodyMode = FixedBody | PrescribedMotion | FreeMotion


@dataclass
class FloatingBodyScenario:
    """Lid, initial contacts, motion mode, fluid constants and the initial body state.

    The reference pose (where the lid profile is given) is the initial
    ``(x_G, z_G)`` with ``theta = 0``.
    """

    lid: Lid
    x_minus: float
    x_plus: float
    mode: BodyMode = field(default_factory=FixedBody)
    g: float = 9.81
    h0: float = 1.0
    rho: float = 1000.0
    p_atm: float = 0.0
    body: RigidBodyState = field(default_factory=RigidBodyState)
    n_interior: int = 200
    c0: float = DEFAULT_C0

    def __post_init__(self):
        a, b = self.lid.interval
        if not self.x_minus < self.x_plus:
            raise ValidationError("contacts must satisfy x_minus < x_plus")
        if not (a <= self.x_minus and self.x_plus <= b):
            raise ValidationError(f"contacts must lie in the lid interval [{a}, {b}]")
        if not self.h0 + self.lid.z_range[0] > 0:
            raise ValidationError("h0 + Z_lid must be positive on the lid interval")
        if self.n_interior < 2:
            raise ValidationError("n_interior must be at least 2")
        if isinstance(self.mode, PrescribedMotion):
            pose, _, _ = self.mode.kinematics(0.0)
            if abs(pose[2]) > 1e-14:
                raise ValidationError("prescribed theta must vanish at t = 0")
            self.body = replace(self.body, x_G=float(pose[0]), z_G=float(pose[1]), theta=0.0)
        elif self.body.theta != 0.0:
            raise ValidationError("the initial angle must be zero")

    @property
    def reference(self) -> tuple[float, float]:
        return self.body.x_G, self.body.z_G

    def kinematics(self, t: float, W: np.ndarray):
        """``(pose, velocity, acceleration or None)`` at time ``t``."""
        if isinstance(self.mode, FixedBody):
            return np.array([self.body.x_G, self.body.z_G, 0.0]), np.zeros(3), np.zeros(3)
        if isinstance(self.mode, PrescribedMotion):
            return self.mode.kinematics(t)
        return np.asarray(W[1:4], dtype=float), np.asarray(W[4:7], dtype=float), None


# ---------------------------------------------------------------------------
# interior solution


@dataclass
class Surface:
    """Lid geometry and transport vectors at a set of abscissas."""

    x: np.ndarray
    Z: np.ndarray
    Z_x: np.ndarray
    r: np.ndarray
    N: np.ndarray
    T: np.ndarray
    T_x: np.ndarray


def surface(lid: Lid, x, pose, reference) -> Surface:
    x = np.asarray(x, dtype=float)
    x_G, z_G, theta = pose
    Z, Z_x = psi_lid_solve(lid, x, x_G, z_G, theta, *reference, return_slope=True)
    r = np.stack([x - x_G, Z - z_G], axis=-1)
    N = np.stack([-Z_x, np.ones_like(Z_x)], axis=-1)
    rp = perp(r)
    T = np.stack([-rp[:, 0], -rp[:, 1], 0.5 * np.sum(r * r, axis=-1)], axis=-1)
    T_x = np.stack([-N[:, 0], -N[:, 1], np.sum(rp * N, axis=-1)], axis=-1)
    return Surface(x, Z, Z_x, r, N, T, T_x)


def transport_rate(s: Surface, vel) -> np.ndarray:
    """``vel . d_t T(r_G)`` at fixed x, through the matrix ``M(r_G, N)``."""
    u, w, om = vel
    rpN = np.sum(perp(s.r) * s.N, axis=-1)
    row1 = s.N[:, 0] * u - rpN * om
    row2 = u
    row3 = -rpN * u - s.r[:, 1] * rpN * om
    return u * row1 + w * row2 + om * row3


@dataclass
class InteriorField:
    """Interior quantities on the wetted interval.

    Midpoint quantities (``H, Q, T, ...``) live on ``mids`` with weights
    ``widths``; the pressure lives on ``edges``; ``contacts`` holds the values
    at ``x_-`` (index 0) and ``x_+`` (index 1).
    """

    edges: np.ndarray
    mids: np.ndarray
    widths: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    Q_x: np.ndarray
    T: np.ndarray
    F_I: np.ndarray
    F_III: np.ndarray
    P: np.ndarray
    contacts: dict
    averages: dict
    q_bar_dot: float
    body_acc: np.ndarray
    rho: float
    p_atm: float
    surface_mid: Surface = field(repr=False)

    @property
    def p_residual(self) -> float:
        return float(self.P[-1] - self.p_atm)

    @property
    def inv_depth_integral(self) -> float:
        return float(np.sum(self.widths / self.H))

    def centered_T(self) -> np.ndarray:
        if self.widths.size == 0 or self.inv_depth_integral == 0.0:
            return np.zeros((0, 3))
        return self.T - self.averages["T"]


def weighted_average(values, widths, H) -> np.ndarray:
    """``<F> = int F/H / int 1/H`` by the midpoint rule."""
    values = np.asarray(values, dtype=float)
    w = widths / H
    return np.tensordot(w, values, axes=(0, 0)) / np.sum(w)


def added_mass(field_: InteriorField) -> np.ndarray:
    """``rho int T* (x) T* / H_i``; zero for an empty wetted interval."""
    if field_.widths.size == 0 or np.sum(field_.widths) == 0.0:
        return np.zeros((3, 3))
    Ts = field_.centered_T()
    w = field_.widths / field_.H
    # no symmetrization here so that callers can measure the asymmetry
    return field_.rho * np.einsum("n,ni,nj->ij", w, Ts, Ts)


def _hydro_flux_potential(Q, H, g):
    return 0.5 * Q * Q / (H * H) + g * H


def interior_solve(sc: FloatingBodyScenario, t: float, x_minus: float, x_plus: float, W) -> InteriorField:
    """Interior surface, flux, pressure and the ``qbar`` (and body) accelerations.

    The ``qbar`` rate makes ``P(x_+) = p_atm``.  The gradient part
    ``d_x(Q^2/(2H^2) + gH)`` of ``F^I / H`` is integrated exactly and the rest
    by the midpoint rule; the pressure uses the same split, so the
    solvability residual is at round-off level.
    """
    W = np.asarray(W, dtype=float)
    pose, vel, acc = sc.kinematics(t, W)
    q_bar = float(W[0])
    n = sc.n_interior
    edges = np.linspace(x_minus, x_plus, n + 1)
    mids = 0.5 * (edges[1:] + edges[:-1])
    widths = np.diff(edges)
    sm = surface(sc.lid, mids, pose, sc.reference)
    se = surface(sc.lid, edges, pose, sc.reference)
    H, He = sc.h0 + sm.Z, sc.h0 + se.Z
    if np.any(H <= 0) or np.any(He <= 0):
        raise DryInterior(f"interior depth {min(H.min(), He.min()):.4g} is not positive", time=t)
    g, rho = sc.g, sc.rho
    Q = sm.T @ vel + q_bar
    Q_x = sm.T_x @ vel
    Qe = se.T @ vel + q_bar
    F_I = 2 * Q * Q_x / H - Q * Q * sm.Z_x / H**2 + g * H * sm.Z_x
    F_III = transport_rate(sm, vel)
    wH = widths / H
    S1 = float(np.sum(wH))
    T_avg = (wH @ sm.T) / S1
    if isinstance(sc.mode, FreeMotion):
        Ts = sm.T - T_avg
        Ma = rho * np.einsum("n,ni,nj->ij", wH, Ts, Ts)
        force = np.array([0.0, -sc.mode.mass * g, 0.0])
        if sc.mode.applied_force is not None:
            force = force + np.asarray(sc.mode.applied_force(t, RigidBodyState.from_vector(W)), dtype=float)
        force -= rho * ((wH * (F_I + F_III)) @ Ts)
        acc = np.linalg.solve(sc.mode.M0 + 0.5 * (Ma + Ma.T), force)
    F_II = sm.T @ acc
    G = _hydro_flux_potential(Qe, He, g)
    remainder = Q * Q_x / H**2
    avg_FI = (G[-1] - G[0] + float(np.sum(widths * remainder))) / S1
    avg_FII = float(acc @ T_avg)
    avg_FIII = float(wH @ F_III) / S1
    q_bar_dot = -(avg_FI + avg_FII + avg_FIII)
    dP = widths * (remainder + (q_bar_dot + F_II + F_III) / H)
    P = sc.p_atm - rho * (G - G[0] + np.concatenate([[0.0], np.cumsum(dP)]))
    idx = [0, -1]
    contacts = {
        "x": edges[idx],
        "Z": se.Z[idx],
        "Z_x": se.Z_x[idx],
        "Z_t": -(se.T_x[idx] @ vel),
        "Q": Qe[idx],
    }
    averages = {"T": T_avg, "F_I": avg_FI, "F_II": avg_FII, "F_III": avg_FIII}
    return InteriorField(edges, mids, widths, H, Q, Q_x, sm.T, F_I, F_III, P, contacts, averages,
                         float(q_bar_dot), np.asarray(acc, dtype=float), rho, sc.p_atm, sm)


def body_rates(sc: FloatingBodyScenario, t: float, x_minus: float, x_plus: float, W):
    """``dW/dt`` for the 7-vector ``W`` and the interior field it came from."""
    f = interior_solve(sc, t, x_minus, x_plus, W)
    dW = np.zeros(7)
    dW[0] = f.q_bar_dot
    if isinstance(sc.mode, FreeMotion):
        u, w, om = np.asarray(W, dtype=float)[4:7]
        dW[1:4] = [u, w, -om]
        dW[4:7] = f.body_acc
    elif isinstance(sc.mode, PrescribedMotion):
        _, vel, acc = sc.mode.kinematics(t)
        dW[1:4] = [vel[0], vel[1], -vel[2]]
        dW[4:7] = acc
    return dW, f


def body_step(sc: FloatingBodyScenario, t: float, W, x_minus: float, x_plus: float, dt: float) -> RigidBodyState:
    """Heun step of the body and ``qbar`` with the contacts held fixed."""
    W = np.asarray(W, dtype=float)
    k1, _ = body_rates(sc, t, x_minus, x_plus, W)
    W1 = W + dt * k1
    k2, _ = body_rates(sc, t + dt, x_minus, x_plus, W1)
    return RigidBodyState.from_vector(W + 0.5 * dt * (k1 + k2))


def archimedean_mass(sc: FloatingBodyScenario) -> float:
    """Body mass balancing the hydrostatic lift of the initial configuration at rest.

    Uses the interior quadrature of the solver, so the discrete rest state is
    balanced to round-off.
    """
    W = RigidBodyState(x_G=sc.body.x_G, z_G=sc.body.z_G).vector()
    probe = replace(sc, mode=FixedBody(), body=RigidBodyState.from_vector(W))
    f = interior_solve(probe, 0.0, sc.x_minus, sc.x_plus, W)
    wH = f.widths / f.H
    lift = -sc.rho * float((wH * f.F_I) @ f.centered_T()[:, 1])
    return lift / sc.g


def interior_mass(sc: FloatingBodyScenario, t: float, x_minus: float, x_plus: float, W) -> float:
    """``int Z_i`` over the wetted interval by Gauss-Legendre quadrature."""
    pose, _, _ = sc.kinematics(t, np.asarray(W, dtype=float))
    nodes, weights = np.polynomial.legendre.leggauss(MASS_NODES)
    half = 0.5 * (x_plus - x_minus)
    x = x_minus + half * (nodes + 1.0)
    Z = psi_lid_solve(sc.lid, x, pose[0], pose[1], pose[2], *sc.reference)
    return float(half * np.sum(weights * Z))


# ---------------------------------------------------------------------------
# contact points


def contact_speed_first_component(Z_t: float, Z_x: float, zeta_x: float, q_x: float,
                                  c0: float = DEFAULT_C0, time=None) -> float:
    """``(d_t Z_i + d_x q_e) / (d_x zeta_e - d_x Z_i)`` at one contact."""
    den = zeta_x - Z_x
    if abs(den) < c0:
        raise DegenerateContact(f"|d_x zeta_e - d_x Z_i| = {abs(den):.3e} below {c0:.3e}", time=time)
    return (Z_t + q_x) / den


def contact_dynamics(field_: InteriorField, ext_minus, ext_plus, c0: float = DEFAULT_C0,
                     time=None) -> tuple[FrontState, FrontState]:
    """Contact velocities from exterior space derivatives ``(zeta_x, q_x)`` at each contact."""
    fronts = []
    for k, ext in enumerate((ext_minus, ext_plus)):
        c = field_.contacts
        xdot = contact_speed_first_component(c["Z_t"][k], c["Z_x"][k], ext[0], ext[1], c0, time)
        ub = np.array([c["Z"][k], c["Q"][k]])
        fronts.append(FrontState(float(c["x"][k]), float(xdot), "contact", "subsonic",
                                 mu=np.array([1.0, 0.0]), traces={"u_b": ub, "u_x": np.asarray(ext)}))
    return fronts[0], fronts[1]


def initial_contact_speeds(sc: FloatingBodyScenario, zeta_in: Callable, q_in: Callable,
                           h: float = 1e-4) -> tuple[float, float]:
    """Contact velocities at ``t = 0`` from analytic initial data."""
    W = sc.body.vector()
    f = interior_solve(sc, 0.0, sc.x_minus, sc.x_plus, W)
    out = []
    for k, x in enumerate((sc.x_minus, sc.x_plus)):
        zx = _d1(lambda s: float(zeta_in(x + s)), h)
        qx = _d1(lambda s: float(q_in(x + s)), h)
        out.append(contact_speed_first_component(f.contacts["Z_t"][k], f.contacts["Z_x"][k], zx, qx, sc.c0))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# coupled problem


class FloatingProblem:
    """Two exterior canals and the body; ``y = (x_-, x_+, W)``.

    Domain 0 is ``(a, x_-)`` and domain 1 is ``(x_+, b)``; both use cutoff
    grids anchored at the initial contacts.
    """

    def __init__(self, scenario: FloatingBodyScenario, far_left=None, far_right=None):
        self.sc = scenario
        self.far_left = Transparent() if far_left is None else far_left
        self.far_right = Transparent() if far_right is None else far_right
        self.weights = [None, None]
        self.anchors = [scenario.x_minus, scenario.x_plus]
        self.epsilons = [np.inf, np.inf]
        self.min_width = 0.0
        self.diagnostics: list[dict] = []
        self.mass0: float | None = None

    def attach(self, left: SolverState, right: SolverState):
        for k, st in enumerate((left, right)):
            g = st.grid
            self.epsilons[k] = g.epsilon
            self.anchors[k] = g.front_anchor
            self.weights[k], _ = cutoff_profile((g.reference_nodes - g.front_anchor) / g.epsilon)
        self.min_width = MIN_CONTACT_CELLS * min(left.grid.spacing, right.grid.spacing)
        return self

    def _check_contacts(self, t, x_minus, x_plus):
        a, b = self.sc.lid.interval
        if x_plus - x_minus < self.min_width:
            raise ContactCollision(f"wetted interval {x_plus - x_minus:.4g} below {self.min_width:.4g}", time=t)
        if x_minus < a or x_plus > b:
            raise LidOverrun(f"contacts ({x_minus:.6g}, {x_plus:.6g}) left the lid interval [{a}, {b}]", time=t)
        for k, x in enumerate((x_minus, x_plus)):
            if abs(x - self.anchors[k]) >= max_cutoff_excursion(self.epsilons[k]):
                raise FrontExcursionTooLarge(f"contact {k} moved {x - self.anchors[k]:.4g}", time=t)

    def evaluate(self, t, views, y):
        x_minus, x_plus = float(y[0]), float(y[1])
        W = y[2:]
        self._check_contacts(t, x_minus, x_plus)
        dW, f = body_rates(self.sc, t, x_minus, x_plus, W)
        vl, vr = views
        c = f.contacts
        ub = [np.array([c["Z"][0], c["Q"][0]]), np.array([c["Z"][1], c["Q"][1]])]
        ext = [vl.boundary_derivative("right", ub[0]), vr.boundary_derivative("left", ub[1])]
        m, p = contact_dynamics(f, ext[0], ext[1], self.sc.c0, time=t)
        for fr in (m, p):
            check_subsonic(vl.sys, fr.traces["u_b"], fr.xbar_dot, time=t)
        far_l = boundary_state(vl, self.far_left, "left", t)
        far_r = boundary_state(vr, self.far_right, "right", t)
        speeds = [self.weights[0] * m.xbar_dot, self.weights[1] * p.xbar_dot]
        dydt = np.concatenate([[m.xbar_dot, p.xbar_dot], dW])
        info = {"field": f, "xdot": (m.xbar_dot, p.xbar_dot), "u_b": ub, "ext": ext}
        return StageOutput([(far_l, ub[0]), (ub[1], far_r)], speeds, dydt, info)

    def mass(self, sim) -> float:
        ext = sum(float(np.sum(st.conserved()[:, 0])) for st in sim.states)
        return ext + interior_mass(self.sc, sim.t, float(sim.y[0]), float(sim.y[1]), sim.y[2:])

    def far_inflow(self, sim) -> float:
        """Mass that entered through the two far faces so far."""
        return float(sim.flux_integrals[0][0][0] - sim.flux_integrals[-1][1][0])

    def after_step(self, sim):
        x_minus, x_plus = float(sim.y[0]), float(sim.y[1])
        W = sim.y[2:]
        f = interior_solve(self.sc, sim.t, x_minus, x_plus, W)
        pose, vel, _ = self.sc.kinematics(sim.t, W)
        Ma = added_mass(f)
        xdot = sim.last_stages[-1].info["xdot"]
        mass = self.mass(sim)
        if self.mass0 is None:
            self.mass0 = mass
        self.diagnostics.append({
            "t": sim.t, "x_minus": x_minus, "x_plus": x_plus,
            "xdot_minus": float(xdot[0]), "xdot_plus": float(xdot[1]),
            "q_bar": float(W[0]), "x_G": float(pose[0]), "z_G": float(pose[1]), "theta": float(pose[2]),
            "u_G": float(vel[0]), "w_G": float(vel[1]), "omega": float(vel[2]),
            "p_residual": f.p_residual,
            "q_spread": float(np.ptp(f.Q)),
            "added_mass_min_eig": float(np.linalg.eigvalsh(0.5 * (Ma + Ma.T))[0]),
            "added_mass_asym": float(np.max(np.abs(Ma - Ma.T))),
            "mass": mass,
            "mass_defect": mass - self.mass0 - self.far_inflow(sim),
        })


def floating_simulation(sc: FloatingBodyScenario, a: float, b: float, n_left: int, n_right: int,
                        u_init: Callable | None = None, epsilon: float | None = None,
                        far_left=None, far_right=None, cfl: float = 0.45) -> tuple[Simulation, FloatingProblem]:
    """Canals ``(a, x_-)`` and ``(x_+, b)`` with ``u_init(x) -> (zeta, q)`` (rest by default)."""
    if not a < sc.x_minus < sc.x_plus < b:
        raise ValidationError("need a < x_minus < x_plus < b")
    if epsilon is None:
        epsilon = 0.45 * min(sc.x_minus - a, b - sc.x_plus)
    sys = shallow_water_zq(sc.g, sc.h0)
    grids = [MovingGrid.uniform(a, sc.x_minus, n_left, kind="cutoff", epsilon=epsilon, front_anchor=sc.x_minus),
             MovingGrid.uniform(sc.x_plus, b, n_right, kind="cutoff", epsilon=epsilon, front_anchor=sc.x_plus)]
    states = []
    for name, g in zip(("left", "right"), grids):
        u = np.zeros((len(g.phi) - 1, 2)) if u_init is None else cell_averages(u_init, g.phi)
        states.append(SolverState(sys, g, u, cfl=cfl, name=name))
    prob = FloatingProblem(sc, far_left, far_right).attach(*states)
    y = np.concatenate([[sc.x_minus, sc.x_plus], sc.body.vector()])
    sim = Simulation(prob, states, y=y, cfl=cfl)
    prob.mass0 = prob.mass(sim)
    return sim, prob


def floating_step(sim: Simulation, dt: float | None = None):
    """One coupled step; returns both contact fronts and the body state."""
    sim.step(dt)
    info = sim.last_stages[-1].info
    f = info["field"]
    m, p = contact_dynamics(f, info["ext"][0], info["ext"][1], sim.problem.sc.c0, time=sim.t)
    m.xbar, p.xbar = float(sim.y[0]), float(sim.y[1])
    return m, p, RigidBodyState.from_vector(sim.y[2:])
