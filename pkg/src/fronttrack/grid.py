"""Moving-domain machinery on a fixed reference grid.

A :class:`MovingGrid` stores the reference node coordinates together with the
physical positions ``phi(t, x)`` and the node velocities ``d_t phi``.  Two
families of maps are supported: Lagrangian (nodes advected by a speed field)
and cutoff (a rigid shift near the front, tapered to zero by a bump).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from .errors import FrontExcursionTooLarge, JacobianDegeneracy

PSI_SLOPE_MAX = 30.0 / 16.0  # max |psi'| of the quintic taper
JACOBIAN_BOUNDS = (0.5, 2.0)


def _smootherstep(tau):
    return tau**3 * (10.0 - 15.0 * tau + 6.0 * tau**2)


def cutoff_profile(s):
    """Values and first derivatives of the C^2 quintic bump.

    psi = 1 on [-1, 1], 0 outside (-2, 2), quintic Hermite in between.
    """
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    tau = np.clip(a - 1.0, 0.0, 1.0)
    psi = 1.0 - _smootherstep(tau)
    dpsi = -np.sign(s) * 30.0 * tau**2 * (1.0 - tau) ** 2
    return psi, dpsi


def cutoff_second_derivative(s):
    s = np.asarray(s, dtype=float)
    tau = np.clip(np.abs(s) - 1.0, 0.0, 1.0)
    return -60.0 * tau * (1.0 - tau) * (1.0 - 2.0 * tau)


@dataclass(frozen=True)
class MovingGrid:
    """Discrete diffeomorphism sampled at reference nodes.

    ``front_anchor`` is the reference coordinate mapped to the tracked front.
    For cutoff grids ``epsilon`` is the taper scale in reference units.
    """

    reference_nodes: np.ndarray
    phi: np.ndarray
    phi_x: np.ndarray
    phi_t: np.ndarray
    kind: Literal["lagrangian", "cutoff", "fixed"] = "fixed"
    epsilon: float = 0.0
    front_anchor: float = 0.0

    @classmethod
    def uniform(cls, a: float, b: float, n_cells: int, kind="fixed", epsilon=0.0,
                front_anchor: float | None = None) -> "MovingGrid":
        x = np.linspace(a, b, n_cells + 1)
        anchor = a if front_anchor is None else front_anchor
        return cls(x, x.copy(), np.ones_like(x), np.zeros_like(x), kind, epsilon, anchor)

    @property
    def spacing(self) -> float:
        return float(self.reference_nodes[1] - self.reference_nodes[0])

    def cell_jacobian(self) -> np.ndarray:
        return np.diff(self.phi) / np.diff(self.reference_nodes)

    def front_position(self) -> float:
        return float(np.interp(self.front_anchor, self.reference_nodes, self.phi))

    def check_jacobian(self, time: float | None = None) -> None:
        jac = self.cell_jacobian()
        lo, hi = JACOBIAN_BOUNDS
        if np.any(jac < lo) or np.any(jac > hi):
            raise JacobianDegeneracy(
                f"d_x phi left [{lo}, {hi}]: range [{jac.min():.4f}, {jac.max():.4f}]", time=time)


def advance_lagrangian(grid: MovingGrid, speed, dt: float, speed_prev=None) -> MovingGrid:
    """Move nodes with the speed field; trapezoidal in time when ``speed_prev`` is given."""
    speed = np.asarray(speed, dtype=float)
    if speed_prev is None:
        incr = dt * speed
    else:
        incr = 0.5 * dt * (np.asarray(speed_prev, dtype=float) + speed)
    phi = grid.phi + incr
    phi_x = np.gradient(phi, grid.reference_nodes, edge_order=2)
    new = replace(grid, phi=phi, phi_x=phi_x, phi_t=speed, kind="lagrangian")
    new.check_jacobian()
    return new


def max_cutoff_excursion(epsilon: float) -> float:
    """Largest shift for which the cutoff map keeps d_x phi inside [1/2, 2]."""
    return 0.5 * epsilon / PSI_SLOPE_MAX


def set_cutoff(grid: MovingGrid, xbar: float, xbar_dot: float) -> MovingGrid:
    """Cutoff map ``phi = x + psi((x - anchor)/eps) (xbar - anchor)``."""
    eps = grid.epsilon
    if eps <= 0:
        raise ValueError("cutoff grid needs a positive epsilon")
    shift = xbar - grid.front_anchor
    if abs(shift) >= max_cutoff_excursion(eps):
        raise FrontExcursionTooLarge(
            f"front shift {shift:.4g} exceeds {max_cutoff_excursion(eps):.4g} for epsilon={eps:.4g}")
    x = grid.reference_nodes
    psi, dpsi = cutoff_profile((x - grid.front_anchor) / eps)
    phi = x + psi * shift
    # keep far nodes bit-identical
    phi = np.where(psi == 0.0, x, phi)
    return replace(grid, phi=phi, phi_x=1.0 + dpsi * shift / eps, phi_t=psi * xbar_dot, kind="cutoff")


def cutoff_weights(grid: MovingGrid) -> np.ndarray:
    psi, _ = cutoff_profile((grid.reference_nodes - grid.front_anchor) / grid.epsilon)
    return psi


def chain_derivatives(grid: MovingGrid, field, field_t=None):
    """Return ``(d_t^phi field, d_x^phi field)`` at the nodes.

    ``field_t`` is the time derivative at fixed reference coordinate; when it is
    omitted the first entry of the result is ``None``.
    """
    u = np.asarray(field, dtype=float)
    if u.shape[0] < 3:
        raise ValueError("need at least 3 nodes")
    du = np.gradient(u, grid.reference_nodes, axis=0, edge_order=2)
    px = grid.phi_x.reshape((-1,) + (1,) * (u.ndim - 1))
    dx_phi = du / px
    if field_t is None:
        return None, dx_phi
    pt = grid.phi_t.reshape(px.shape)
    return np.asarray(field_t, dtype=float) - pt * dx_phi, dx_phi
