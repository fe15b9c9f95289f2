"""Lateral wall on a spring, pushed by shallow water waves.

The fluid ``(zeta, v)`` lives on ``(xbar(t), L)`` with a Lagrangian grid, so
every face moves with the local velocity and the wall face moves with
``xdot``.  The wall obeys

    m xddot = -k (xbar - x_eq) + rho g (zeta_b^2 + 2 h0 zeta_b) / 2

with ``zeta_b`` the elevation at the wall.  The boundary condition is
``v = xdot`` there.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ValidationError
from .frontdrive import FrontState, check_subsonic
from .grid import MovingGrid
from .solver import (
    LinearNu,
    Simulation,
    SolverState,
    StageOutput,
    boundary_state,
    cell_averages,
    solve_closure,
)
from .systems import shallow_water_zv


@dataclass(frozen=True)
class PistonScenario:
    """Physical constants of the wall and the canal.

    ``x_eq`` is derived from the spring reference ``x0``; ``xbar0`` and
    ``xdot0`` are the initial wall position and velocity.  The default
    ``hydrostatic_sign=+1`` adds the pressure force with a plus sign; for a
    canal on the right of the wall ``-1`` gives the force pointing away from
    the water, which turns wave radiation into damping.
    """

    m_mass: float
    k_spring: float
    rho: float = 1000.0
    g_grav: float = 9.81
    h0: float = 1.0
    x0: float = 0.0
    xbar0: float | None = None
    xdot0: float = 0.0
    hydrostatic_sign: float = 1.0
    x_eq: float = field(init=False)

    def __post_init__(self):
        for name in ("m_mass", "k_spring", "rho", "g_grav", "h0"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if self.hydrostatic_sign not in (1.0, -1.0):
            raise ValidationError("hydrostatic_sign must be +1 or -1")
        offset = equilibrium_offset(self.rho, self.g_grav, self.h0, self.k_spring)
        object.__setattr__(self, "x_eq", self.x0 + self.hydrostatic_sign * offset)
        if self.xbar0 is None:
            object.__setattr__(self, "xbar0", self.x_eq)

    @property
    def omega(self) -> float:
        return float(np.sqrt(self.k_spring / self.m_mass))

    @property
    def period(self) -> float:
        return 2 * np.pi / self.omega

    def acceleration(self, xbar: float, zeta_b: float) -> float:
        force = self.hydrostatic_sign * 0.5 * self.rho * self.g_grav * (zeta_b**2 + 2 * self.h0 * zeta_b)
        return (-self.k_spring * (xbar - self.x_eq) + force) / self.m_mass


def equilibrium_offset(rho: float, g: float, h0: float, k: float) -> float:
    """``x_eq - x0`` balancing the hydrostatic force of still water."""
    return 0.5 * rho * g * h0**2 / k


class PistonProblem:
    """Coupled wall and fluid; ``y = (xbar, xdot)``.

    ``zeta_b_override`` replaces the measured wall elevation in the wall
    equation (a constant or a function of time); the fluid still sees the
    moving wall.  Each stage's ``zeta_b`` is recorded in ``stage_log`` so the
    wall equation can be re-integrated on its own.
    """

    def __init__(self, scenario: PistonScenario, far=None,
                 zeta_b_override: Optional[float | Callable] = None):
        self.sc = scenario
        self.far = far
        self.zeta_b_override = zeta_b_override
        self.stage_log: list[tuple[float, float]] = []
        self.diagnostics: list[dict] = []

    def closure(self, xdot: float) -> LinearNu:
        return LinearNu((0.0, 1.0), xdot)

    def _forcing(self, t: float, zeta_b: float) -> float:
        if self.zeta_b_override is None:
            return zeta_b
        z = self.zeta_b_override
        return float(z(t)) if callable(z) else float(z)

    def evaluate(self, t, views, y):
        v = views[0]
        xbar, xdot = float(y[0]), float(y[1])
        ub = solve_closure(v.sys, self.closure(xdot), t, v.extrapolate("left"), "left", xdot, check=False)
        check_subsonic(v.sys, ub, xdot, time=t)
        ur = boundary_state(v, self.far, "right", t)
        zeta_used = self._forcing(t, float(ub[0]))
        self.stage_log.append((t, zeta_used))
        s = np.empty(len(v.faces))
        s[0] = xdot
        s[1:-1] = 0.5 * (v.u[1:, 1] + v.u[:-1, 1])
        s[-1] = ur[1]
        acc = self.sc.acceleration(xbar, zeta_used)
        info = {"u_b": ub, "zeta_b": float(ub[0]), "zeta_forcing": zeta_used, "xdot": xdot}
        return StageOutput([(ub, ur)], [s], np.array([xdot, acc]), info)

    def after_step(self, sim):
        info = sim.last_stages[-1].info
        st = sim.states[0]
        volume = float(np.sum(st.widths * (self.sc.h0 + st.u[:, 0])))
        self.diagnostics.append({"t": sim.t, "xbar": float(sim.y[0]), "xdot": float(sim.y[1]),
                                 "zeta_b": info["zeta_b"], "volume": volume})


def piston_simulation(scenario: PistonScenario, length: float, n_cells: int,
                      u_init: Callable | None = None, far=None, cfl: float = 0.45,
                      zeta_b_override=None) -> tuple[Simulation, PistonProblem]:
    """Canal ``(xbar0, xbar0 + length)`` at rest unless ``u_init(x)`` is given."""
    sys = shallow_water_zv(scenario.g_grav, scenario.h0)
    a = scenario.xbar0
    grid = MovingGrid.uniform(a, a + length, n_cells, kind="lagrangian", front_anchor=a)
    if u_init is None:
        u = np.zeros((n_cells, 2))
    else:
        u = cell_averages(u_init, grid.phi)
    state = SolverState(sys, grid, u, cfl=cfl, name="canal")
    prob = PistonProblem(scenario, far=far, zeta_b_override=zeta_b_override)
    sim = Simulation(prob, [state], y=np.array([scenario.xbar0, scenario.xdot0]), cfl=cfl)
    return sim, prob


def piston_step(sim: Simulation, dt: float | None = None) -> tuple[FrontState, LinearNu]:
    """One coupled step; returns the wall state and the closure ``v = xdot``."""
    sim.step(dt)
    xbar, xdot = float(sim.y[0]), float(sim.y[1])
    info = sim.last_stages[-1].info
    front = FrontState(xbar, xdot, "piston", "subsonic", nu2=np.array([0.0, 1.0]),
                       traces={"u_b": info["u_b"]})
    return front, sim.problem.closure(xdot)


def oscillator_exact(scenario: PistonScenario, t, amplitude: float):
    """Wall position when ``zeta_b = 0`` and the wall starts at rest at ``x_eq + amplitude``."""
    return scenario.x_eq + amplitude * np.cos(scenario.omega * np.asarray(t, dtype=float))


def reintegrate_wall(scenario: PistonScenario, stage_log, dts, xbar0: float, xdot0: float):
    """Wall ODE driven by recorded stage values of ``zeta_b`` (two per Heun step).

    Returns the arrays of positions and velocities after each step.
    """
    xs, vs = [xbar0], [xdot0]
    x, v = xbar0, xdot0
    for n, dt in enumerate(dts):
        z1 = stage_log[2 * n][1]
        z2 = stage_log[2 * n + 1][1]
        a1 = scenario.acceleration(x, z1)
        x1 = x + dt * v
        v1 = v + dt * a1
        a2 = scenario.acceleration(x1, z2)
        x = 0.5 * (x + x1 + dt * v1)
        v = 0.5 * (v + v1 + dt * a2)
        xs.append(x)
        vs.append(v)
    return np.array(xs), np.array(vs)
