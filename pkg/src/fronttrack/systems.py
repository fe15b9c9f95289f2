"""Descriptors of 2x2 quasilinear hyperbolic systems.

Every callable on a :class:`System2x2` must broadcast over leading axes:
states have shape ``(..., 2)`` and matrices ``(..., 2, 2)``.  The shallow
water factories below are the systems used throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NotAdmissible

Array = np.ndarray
StateFn = Callable[[Array], Array]

_FD_STEP = 1e-6


def perp(v: Array) -> Array:
    """Rotate by +90 degrees: (a, b) -> (-b, a)."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


@dataclass(frozen=True)
class System2x2:
    """A 2x2 system ``d_t f0(u) + d_x f(u) = 0`` or ``d_t u + A(u) d_x u + B u = s``.

    Only ``A`` is mandatory.  When ``f`` is given the system is treated as
    conservative (with ``f0`` defaulting to the identity) and the solver
    uses flux differencing; otherwise it uses a fluctuation form.
    """

    A: StateFn
    f0: Optional[StateFn] = None
    f: Optional[StateFn] = None
    B: Optional[Callable[[float, Array], Array]] = None
    source: Optional[Callable[[float, Array], Array]] = None
    phase_box: tuple = ((-np.inf, np.inf), (-np.inf, np.inf))
    admissible: Optional[Callable[[Array], Array]] = None
    dA: Optional[Callable[[Array, Array], Array]] = None
    invariants: Optional[StateFn] = None
    invariants_grad: Optional[StateFn] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def conservative(self) -> bool:
        return self.f is not None

    def in_phase_box(self, u: Array) -> Array:
        u = np.asarray(u, dtype=float)
        ok = np.ones(u.shape[:-1], dtype=bool)
        for k, (lo, hi) in enumerate(self.phase_box):
            ok &= (u[..., k] > lo) & (u[..., k] < hi)
        if self.admissible is not None:
            ok &= np.asarray(self.admissible(u), dtype=bool)
        return ok

    def require_admissible(self, u: Array) -> None:
        ok = self.in_phase_box(u)
        if not np.all(ok):
            bad = np.asarray(u)[~ok] if np.ndim(ok) else np.asarray(u)
            raise NotAdmissible(f"state outside the admissible set of {self.name}: {bad[:3]}")

    def eval_f0(self, u: Array) -> Array:
        u = np.asarray(u, dtype=float)
        return u.copy() if self.f0 is None else self.f0(u)

    def f0_jacobian(self, u: Array) -> Array:
        u = np.asarray(u, dtype=float)
        if self.f0 is None:
            return np.broadcast_to(np.eye(2), u.shape[:-1] + (2, 2)).copy()
        return jacobian_fd(self.f0, u)

    def f0_inverse(self, m: Array, guess: Array) -> Array:
        """Solve ``f0(u) = m`` by Newton iteration from ``guess``."""
        if self.f0 is None:
            return np.array(m, dtype=float, copy=True)
        u = np.array(guess, dtype=float, copy=True)
        for _ in range(50):
            r = self.f0(u) - m
            if np.max(np.abs(r)) < 1e-14 * (1.0 + np.max(np.abs(m))):
                break
            u = u - np.linalg.solve(self.f0_jacobian(u), r[..., None])[..., 0]
        return u

    def dir_A(self, u: Array, v: Array) -> Array:
        """Directional derivative ``A'(u)[v]``."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.dA is not None:
            return self.dA(u, v)
        scale = _FD_STEP * (1.0 + np.max(np.abs(u)))
        nv = np.linalg.norm(v, axis=-1)[..., None, None]
        nv = np.where(nv == 0.0, 1.0, nv)
        vh = v / nv[..., 0]
        return (self.A(u + scale * vh) - self.A(u - scale * vh)) / (2 * scale) * nv


def jacobian_fd(fn: StateFn, u: Array, h: float = _FD_STEP) -> Array:
    """Central-difference Jacobian of a broadcasting map R^2 -> R^2."""
    u = np.asarray(u, dtype=float)
    cols = []
    for k in range(2):
        e = np.zeros(2)
        step = h * (1.0 + np.abs(u[..., k]))[..., None]
        e[k] = 1.0
        cols.append((fn(u + step * e) - fn(u - step * e)) / (2 * step))
    return np.stack(cols, axis=-1)


def shallow_water_zq(g: float = 9.81, h0: float = 1.0, subcritical_only: bool = True) -> System2x2:
    """Shallow water in (surface elevation, discharge) variables.

    With ``subcritical_only=False`` only positive depth is required, which is
    what a Lax shock with a supercritical side needs.
    """

    def depth(u):
        return h0 + u[..., 0]

    def A(u):
        u = np.asarray(u, dtype=float)
        h = depth(u)
        q = u[..., 1]
        out = np.zeros(u.shape[:-1] + (2, 2))
        out[..., 0, 1] = 1.0
        out[..., 1, 0] = g * h - q**2 / h**2
        out[..., 1, 1] = 2 * q / h
        return out

    def dA(u, v):
        h = depth(u)
        q = u[..., 1]
        out = np.zeros(np.broadcast_shapes(u.shape, v.shape)[:-1] + (2, 2))
        out[..., 1, 0] = (g + 2 * q**2 / h**3) * v[..., 0] - 2 * q / h**2 * v[..., 1]
        out[..., 1, 1] = -2 * q / h**2 * v[..., 0] + 2 / h * v[..., 1]
        return out

    def f(u):
        u = np.asarray(u, dtype=float)
        h = depth(u)
        q = u[..., 1]
        return np.stack([q, q**2 / h + 0.5 * g * h**2], axis=-1)

    def invariants(u):
        u = np.asarray(u, dtype=float)
        h = depth(u)
        c = 2 * (np.sqrt(g * h) - np.sqrt(g * h0))
        vel = u[..., 1] / h
        return np.stack([c + vel, c - vel], axis=-1)

    def invariants_grad(u):
        u = np.asarray(u, dtype=float)
        h = depth(u)
        q = u[..., 1]
        out = np.empty(u.shape[:-1] + (2, 2))
        out[..., 0, 0] = np.sqrt(g / h) - q / h**2
        out[..., 0, 1] = 1 / h
        out[..., 1, 0] = np.sqrt(g / h) + q / h**2
        out[..., 1, 1] = -1 / h
        return out

    def subcritical(u):
        h = depth(u)
        return (h > 0) & (np.abs(u[..., 1]) < np.sqrt(g * np.maximum(h, 0.0)) * np.maximum(h, 0.0))

    return System2x2(
        A=A, f=f, dA=dA, invariants=invariants, invariants_grad=invariants_grad,
        phase_box=((-h0, np.inf), (-np.inf, np.inf)), admissible=subcritical if subcritical_only else None,
        name="shallow_water_zq", params={"g": g, "h0": h0, "subcritical_only": subcritical_only},
    )


def shallow_water_zv(g: float = 9.81, h0: float = 1.0, subcritical_only: bool = True) -> System2x2:
    """Shallow water in (surface elevation, depth-averaged velocity) variables."""

    def A(u):
        u = np.asarray(u, dtype=float)
        h = h0 + u[..., 0]
        v = u[..., 1]
        out = np.empty(u.shape[:-1] + (2, 2))
        out[..., 0, 0] = v
        out[..., 0, 1] = h
        out[..., 1, 0] = g
        out[..., 1, 1] = v
        return out

    def dA(u, w):
        out = np.zeros(np.broadcast_shapes(u.shape, w.shape)[:-1] + (2, 2))
        out[..., 0, 0] = w[..., 1]
        out[..., 0, 1] = w[..., 0]
        out[..., 1, 1] = w[..., 1]
        return out

    def f(u):
        u = np.asarray(u, dtype=float)
        h = h0 + u[..., 0]
        v = u[..., 1]
        return np.stack([h * v, 0.5 * v**2 + g * u[..., 0]], axis=-1)

    def invariants(u):
        u = np.asarray(u, dtype=float)
        c = 2 * (np.sqrt(g * (h0 + u[..., 0])) - np.sqrt(g * h0))
        return np.stack([c + u[..., 1], c - u[..., 1]], axis=-1)

    def invariants_grad(u):
        u = np.asarray(u, dtype=float)
        s = np.sqrt(g / (h0 + u[..., 0]))
        out = np.empty(u.shape[:-1] + (2, 2))
        out[..., 0, 0] = s
        out[..., 0, 1] = 1.0
        out[..., 1, 0] = s
        out[..., 1, 1] = -1.0
        return out

    def subcritical(u):
        h = h0 + u[..., 0]
        return (h > 0) & (np.abs(u[..., 1]) < np.sqrt(g * np.maximum(h, 0.0)))

    return System2x2(
        A=A, f=f, dA=dA, invariants=invariants, invariants_grad=invariants_grad,
        phase_box=((-h0, np.inf), (-np.inf, np.inf)), admissible=subcritical if subcritical_only else None,
        name="shallow_water_zv", params={"g": g, "h0": h0, "subcritical_only": subcritical_only},
    )


def linear_system(matrix) -> System2x2:
    """Constant-coefficient system ``d_t u + A0 d_x u = 0`` in conservative form."""
    A0 = np.array(matrix, dtype=float)
    evals, right = np.linalg.eig(A0)
    if np.iscomplexobj(evals) and np.any(np.abs(evals.imag) > 0):
        raise ValueError("matrix is not hyperbolic")
    order = np.argsort(-evals.real)
    left = np.linalg.inv(right.real[:, order])

    def A(u):
        u = np.asarray(u, dtype=float)
        return np.broadcast_to(A0, u.shape[:-1] + (2, 2)).copy()

    def f(u):
        return np.asarray(u, dtype=float) @ A0.T

    def invariants(u):
        return np.asarray(u, dtype=float) @ left.T

    def invariants_grad(u):
        u = np.asarray(u, dtype=float)
        return np.broadcast_to(left, u.shape[:-1] + (2, 2)).copy()

    return System2x2(
        A=A, f=f, dA=lambda u, v: np.zeros(np.broadcast_shapes(u.shape, v.shape)[:-1] + (2, 2)),
        invariants=invariants, invariants_grad=invariants_grad,
        name="linear", params={"matrix": A0.tolist()},
    )


def linearized_shallow_water(g: float = 9.81, h0: float = 1.0) -> System2x2:
    """Shallow water linearized about rest, in (elevation, discharge)."""
    sys = linear_system([[0.0, 1.0], [g * h0, 0.0]])
    return System2x2(**{**sys.__dict__, "name": "linearized_shallow_water",
                        "params": {"g": g, "h0": h0}})
