"""Two-sided problems: interfaces between two 2x2 systems and tracked shocks.

The left domain ``(a, xbar)`` and the right domain ``(xbar, b)`` are kept as
two :class:`~fronttrack.solver.SolverState` objects.  The pointwise pieces
(regime classification, Rankine-Hugoniot split, Lopatinskii matrix and the
4x4 block symmetrizer) work on the two traces; the drivers at the bottom
couple them through :class:`~fronttrack.solver.Simulation`.

Conventions: the block coefficient is ``diag(-(A_l - chi), A_r - chi)`` on the
folded half line, and a mode *leaves* the interface when its block speed is
positive.  Those modes need interface conditions; the others carry one
invariant each from the interior to the interface.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import (
    FrontExcursionTooLarge,
    NewtonDivergence,
    NotStrictlyHyperbolic,
    RegimeChange,
    SingularLopatinski,
    ValidationError,
    WrongCharacteristicCount,
    ZeroJump,
)
from .grid import cutoff_profile, max_cutoff_excursion
from .hypcore import eigen_arrays, eigen_from_matrix
from .solver import NEWTON_MAXIT, StageOutput, boundary_state
from .systems import System2x2, perp, shallow_water_zq

ZERO_JUMP_TOL = 1e-10
PHI_TOL = 1e-10
DEFAULT_C0 = 1e-8


class Regime(str, Enum):
    SUBSONIC = "subsonic"
    LAX_RIGHT = "lax_right"
    LAX_LEFT = "lax_left"
    UNCLASSIFIED = "unclassified"


REGIME_P = {Regime.SUBSONIC: 2, Regime.LAX_RIGHT: 1, Regime.LAX_LEFT: 1}

# modes (0 = plus family, 1 = minus family) that reach the interface from each side
_ARRIVING = {
    Regime.SUBSONIC: ((0,), (1,)),
    Regime.LAX_RIGHT: ((0,), (0, 1)),
    Regime.LAX_LEFT: ((0, 1), (1,)),
}


# ---------------------------------------------------------------------------
# regime classification


def classify_speeds(lp_l: float, lm_l: float, lp_r: float, lm_r: float, chi: float,
                    c0: float = 0.0) -> Regime:
    """Regime from the speeds; eigenvalues are ``lp`` and ``-lm`` on each side.

    Every inequality is strict with margin ``c0``.  Each side must satisfy
    ``lp > -lm`` (ordered eigenvalues of a strictly hyperbolic system).
    """
    if not (lp_l + lm_l > 0 and lp_r + lm_r > 0):
        raise NotStrictlyHyperbolic("speed tuple is not an ordered pair of distinct eigenvalues")
    sub_l = lp_l - chi > c0 and lm_l + chi > c0
    sub_r = lp_r - chi > c0 and lm_r + chi > c0
    if sub_l and sub_r:
        return Regime.SUBSONIC
    if sub_l and chi - lp_r > c0:
        return Regime.LAX_RIGHT
    if -lm_l - chi > c0 and sub_r:
        return Regime.LAX_LEFT
    return Regime.UNCLASSIFIED


def trace_speeds(left_sys: System2x2, u_l, u_r, right_sys: System2x2 | None = None):
    right_sys = left_sys if right_sys is None else right_sys
    lp_l, lm_l, *_ = eigen_arrays(left_sys.A(np.asarray(u_l, dtype=float)))
    lp_r, lm_r, *_ = eigen_arrays(right_sys.A(np.asarray(u_r, dtype=float)))
    return float(lp_l), float(lm_l), float(lp_r), float(lm_r)


def classify_regime(sys: System2x2, u_l, u_r, chi: float, c0: float = 0.0,
                    right_sys: System2x2 | None = None) -> Regime:
    return classify_speeds(*trace_speeds(sys, u_l, u_r, right_sys), chi, c0)


# ---------------------------------------------------------------------------
# Rankine-Hugoniot split


def _eval_f0(f0, u):
    u = np.asarray(u, dtype=float)
    return u.copy() if f0 is None else np.asarray(f0(u), dtype=float)


def rh_speed_and_residual(f0: Optional[Callable], f: Callable, u_l, u_r) -> tuple[float, float]:
    """``(chi, Phi)`` with ``chi = [f].[f0] / |[f0]|^2`` and ``Phi = [f].[f0]_perp``.

    ``f0=None`` stands for the identity.  Raises ZeroJump when ``|[f0]|`` is
    below 1e-10.
    """
    j0 = _eval_f0(f0, u_r) - _eval_f0(f0, u_l)
    n2 = float(j0 @ j0)
    if np.sqrt(n2) < ZERO_JUMP_TOL:
        raise ZeroJump(f"|[f0]| = {np.sqrt(n2):.3e}: the two states coincide")
    jf = np.asarray(f(np.asarray(u_r, dtype=float)), dtype=float) - np.asarray(
        f(np.asarray(u_l, dtype=float)), dtype=float)
    return float(jf @ j0) / n2, float(jf @ perp(j0))


def flux_jacobian(sys: System2x2, u) -> np.ndarray:
    """``f'(u) = f0'(u) A(u)``."""
    u = np.asarray(u, dtype=float)
    return sys.f0_jacobian(u) @ sys.A(u)


def rh_gradients(sys: System2x2, u_l, u_r) -> dict:
    """Gradients of ``Phi`` and ``chi`` with respect to each trace."""
    u_l = np.asarray(u_l, dtype=float)
    u_r = np.asarray(u_r, dtype=float)
    j0 = sys.eval_f0(u_r) - sys.eval_f0(u_l)
    jf = sys.f(u_r) - sys.f(u_l)
    n2 = float(j0 @ j0)
    if np.sqrt(n2) < ZERO_JUMP_TOL:
        raise ZeroJump(f"|[f0]| = {np.sqrt(n2):.3e}")
    out = {}
    for key, u, sign in (("l", u_l, -1.0), ("r", u_r, 1.0)):
        B0 = sys.f0_jacobian(u)
        Bf = B0 @ sys.A(u)
        # d(a . b_perp) = da . b_perp - a_perp . db
        out["Phi_" + key] = sign * (Bf.T @ perp(j0) - B0.T @ perp(jf))
        dot = float(jf @ j0)
        out["chi_" + key] = sign * ((Bf.T @ j0 + B0.T @ jf) / n2 - 2 * dot * (B0.T @ j0) / n2**2)
    return out


@dataclass(frozen=True)
class ShockClosure:
    """Rankine-Hugoniot interface condition ``Phi = 0``, speed ``chi``, optional ``Psi = 0``.

    ``Psi(u_l, u_r)`` is a kinetic relation for subsonic (undercompressive)
    fronts; ``Psi_grad`` returns its two gradients and is differenced when
    omitted.
    """

    sys: System2x2
    Psi: Optional[Callable] = None
    Psi_grad: Optional[Callable] = None

    @property
    def p(self) -> int:
        return 1 if self.Psi is None else 2

    def Phi(self, u_l, u_r) -> float:
        return rh_speed_and_residual(self.sys.f0, self.sys.f, u_l, u_r)[1]

    def chi(self, u_l, u_r) -> float:
        return rh_speed_and_residual(self.sys.f0, self.sys.f, u_l, u_r)[0]

    def _psi_grad(self, u_l, u_r):
        if self.Psi_grad is not None:
            gl, gr = self.Psi_grad(u_l, u_r)
            return np.asarray(gl, dtype=float), np.asarray(gr, dtype=float)
        w = np.concatenate([u_l, u_r])
        g = np.empty(4)
        for k in range(4):
            h = 1e-7 * (1.0 + abs(w[k]))
            e = np.zeros(4)
            e[k] = h
            g[k] = (self.Psi((w + e)[:2], (w + e)[2:]) - self.Psi((w - e)[:2], (w - e)[2:])) / (2 * h)
        return g[:2], g[2:]

    def residual(self, t: float, u_l, u_r):
        """Constraint values and their ``p x 4`` Jacobian in ``(u_l, u_r)``."""
        grads = rh_gradients(self.sys, u_l, u_r)
        res = [self.Phi(u_l, u_r)]
        rows = [np.concatenate([grads["Phi_l"], grads["Phi_r"]])]
        if self.Psi is not None:
            res.append(float(self.Psi(u_l, u_r)))
            gl, gr = self._psi_grad(np.asarray(u_l, float), np.asarray(u_r, float))
            rows.append(np.concatenate([gl, gr]))
        return np.asarray(res), np.vstack(rows)


def linear_kinetic_relation(coef_l, coef_r, value: float = 0.0):
    """``Psi = coef_l . u_l + coef_r . u_r - value`` with its gradients (illustrative default)."""
    cl = np.asarray(coef_l, dtype=float)
    cr = np.asarray(coef_r, dtype=float)

    def Psi(u_l, u_r):
        return float(cl @ np.asarray(u_l) + cr @ np.asarray(u_r) - value)

    def grad(u_l, u_r):
        return cl, cr

    return Psi, grad


# ---------------------------------------------------------------------------
# Hugoniot states for tests and scenarios


def hugoniot_partner(sys: System2x2, u_given, value: float, bracket: tuple[float, float], *,
                     given: str = "left", component: int = 0, branch: str = "lower",
                     samples: int = 400) -> np.ndarray:
    """State on the Hugoniot locus ``Phi = 0`` of ``u_given``.

    Component ``component`` of the partner is fixed to ``value``; the other one
    is found inside ``bracket`` by scanning for sign changes of ``Phi`` and
    refining with Brent's method.  ``branch`` picks the lowest or highest root.
    """
    u_given = np.asarray(u_given, dtype=float)
    other = 1 - component

    def partner(s):
        u = np.empty(2)
        u[component] = value
        u[other] = s
        return u

    def phi(s):
        u = partner(s)
        pair = (u_given, u) if given == "left" else (u, u_given)
        return rh_speed_and_residual(sys.f0, sys.f, *pair)[1]

    grid = np.linspace(bracket[0], bracket[1], samples + 1)
    vals = np.array([phi(s) for s in grid])
    idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    if idx.size == 0:
        raise ValidationError("no Hugoniot state inside the bracket")
    k = idx[0] if branch == "lower" else idx[-1]
    root = brentq(phi, grid[k], grid[k + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return partner(root)


def stationary_partner(sys: System2x2, u_l, guess, tol: float = 1e-14, maxit: int = 60) -> np.ndarray:
    """State ``u_r`` with ``f(u_r) = f(u_l)`` (a front at rest), Newton from ``guess``."""
    u_l = np.asarray(u_l, dtype=float)
    target = sys.f(u_l)
    u = np.array(guess, dtype=float)
    for _ in range(maxit):
        r = sys.f(u) - target
        if np.max(np.abs(r)) <= tol * (1.0 + np.max(np.abs(target))):
            return u
        u = u - np.linalg.solve(flux_jacobian(sys, u), r)
    raise NewtonDivergence("stationary partner did not converge")


# ---------------------------------------------------------------------------
# transmission problems, Lopatinskii matrix and block assembly


def _value(v, t):
    return v(t) if callable(v) else v


@dataclass
class TransmissionProblem:
    """Interface conditions ``Np_right u_r - Np_left u_l = g(t)``.

    ``front_speed(u_l, u_r)`` makes the interface move; ``None`` keeps it fixed.
    """

    left_sys: System2x2
    right_sys: System2x2
    Np_left: np.ndarray
    Np_right: np.ndarray
    g: object = 0.0
    p: int | None = None
    front_speed: Optional[Callable] = None
    c0: float = DEFAULT_C0

    def __post_init__(self):
        self.Np_left = np.atleast_2d(np.asarray(self.Np_left, dtype=float))
        self.Np_right = np.atleast_2d(np.asarray(self.Np_right, dtype=float))
        if self.Np_left.shape != self.Np_right.shape or self.Np_left.shape[1] != 2:
            raise ValidationError("Np_left and Np_right must both be p x 2")
        rows = self.Np_left.shape[0]
        if self.p is None:
            self.p = rows
        if self.p != rows or self.p not in (1, 2, 3):
            raise ValidationError(f"p={self.p} with {rows} condition rows; p must be 1, 2 or 3")

    @property
    def N(self) -> np.ndarray:
        return np.hstack([-self.Np_left, self.Np_right])

    def rank_defect(self) -> float:
        N = self.N
        return float(np.linalg.det(N @ N.T))

    def g_at(self, t: float) -> np.ndarray:
        return np.broadcast_to(np.asarray(_value(self.g, t), dtype=float), (self.p,)).copy()

    def residual(self, t: float, u_l, u_r):
        res = self.Np_right @ np.asarray(u_r) - self.Np_left @ np.asarray(u_l) - self.g_at(t)
        return res, self.N


def step_topography(g: float = 9.81, h0_left: float = 1.0, h0_right: float = 0.5) -> TransmissionProblem:
    """Shallow water over a depth jump with continuity of elevation and discharge."""
    return TransmissionProblem(
        shallow_water_zq(g, h0_left, subcritical_only=False),
        shallow_water_zq(g, h0_right, subcritical_only=False),
        np.eye(2), np.eye(2), 0.0, p=2)


def shock_transmission(closure: ShockClosure, u_l, u_r) -> TransmissionProblem:
    """Linearized interface conditions of a shock at the traces ``(u_l, u_r)``."""
    _, jac = closure.residual(0.0, u_l, u_r)
    return TransmissionProblem(closure.sys, closure.sys, -jac[:, :2], jac[:, 2:], 0.0, p=closure.p)


@dataclass(frozen=True)
class BlockModes:
    """Eigen data of the folded 4x4 operator at one pair of traces.

    Modes are ordered (left +, left -, right +, right -).  ``vectors`` are
    the unit eigenvectors embedded in R^4, ``projectors`` the 4x4 embedded
    spectral projectors and ``speeds`` the block speeds.
    """

    vectors: np.ndarray
    projectors: np.ndarray
    speeds: np.ndarray

    @property
    def leaving(self) -> np.ndarray:
        return np.nonzero(self.speeds > 0)[0]

    @property
    def arriving(self) -> np.ndarray:
        return np.nonzero(self.speeds < 0)[0]


def block_modes(left_sys: System2x2, right_sys: System2x2, u_l, u_r, chi: float = 0.0) -> BlockModes:
    vecs = np.zeros((4, 4))
    projs = np.zeros((4, 4, 4))
    speeds = np.zeros(4)
    for b, (sys, u) in enumerate(((left_sys, u_l), (right_sys, u_r))):
        es = eigen_from_matrix(sys.A(np.asarray(u, dtype=float)))
        sl = slice(2 * b, 2 * b + 2)
        for m, (lam, e, pi) in enumerate(((es.lambda_plus, es.e_plus, es.pi_plus),
                                         (-es.lambda_minus, es.e_minus, es.pi_minus))):
            k = 2 * b + m
            vecs[sl, k] = e
            projs[k][sl, sl] = pi
            speeds[k] = -(lam - chi) if b == 0 else lam - chi
    return BlockModes(vecs, projs, speeds)


@dataclass(frozen=True)
class LopatinskiiReport:
    L: np.ndarray
    E: np.ndarray
    N: np.ndarray
    cond: float
    inv_norm: float
    p: int
    regime: Regime


def _check_rank(N: np.ndarray, c0: float) -> None:
    det = float(np.linalg.det(N @ N.T))
    if det < c0:
        raise SingularLopatinski(f"det(N N^T) = {det:.3e} below {c0:.3e}: condition rows not independent")


def lopatinskii_matrix(tp: TransmissionProblem, u_l, u_r, chi: float = 0.0, t: float = 0.0,
                       c0: float | None = None) -> LopatinskiiReport:
    """``L_p = N_p E_p`` with ``E_p`` the eigenvectors leaving the interface.

    Raises WrongCharacteristicCount if ``tp.p`` does not match the number of
    leaving modes (and for any two-mode case other than the subsonic one), and
    SingularLopatinski when ``||L_p^-1|| > 1/c0`` or ``N_p`` is rank deficient.
    """
    c0 = tp.c0 if c0 is None else c0
    N = tp.N
    _check_rank(N, c0)
    modes = block_modes(tp.left_sys, tp.right_sys, u_l, u_r, chi)
    out = modes.leaving
    regime = classify_speeds(*trace_speeds(tp.left_sys, u_l, u_r, tp.right_sys), chi)
    if len(out) != tp.p:
        raise WrongCharacteristicCount(f"{len(out)} modes leave the interface but p={tp.p}")
    if tp.p == 2 and regime is not Regime.SUBSONIC:
        raise WrongCharacteristicCount("only the subsonic two-condition case is supported")
    E = modes.vectors[:, out]
    L = N @ E
    sv = np.linalg.svd(L, compute_uv=False)
    inv_norm = np.inf if sv[-1] == 0 else 1.0 / sv[-1]
    cond = np.inf if sv[-1] == 0 else sv[0] / sv[-1]
    if inv_norm > 1.0 / c0:
        raise SingularLopatinski(f"||L_p^-1|| = {inv_norm:.3e} exceeds 1/c0")
    return LopatinskiiReport(L, E, N, float(cond), float(inv_norm), tp.p, regime)


def shock_lopatinskii_closed_form(sys: System2x2, u_l, u_r, regime: Regime) -> float:
    """Scalar Lopatinskii quantity of a Lax shock written through the jump of ``f0``."""
    chi, _ = rh_speed_and_residual(sys.f0, sys.f, u_l, u_r)
    j0p = perp(sys.eval_f0(np.asarray(u_r, float)) - sys.eval_f0(np.asarray(u_l, float)))
    if regime is Regime.LAX_RIGHT:
        es = eigen_from_matrix(sys.A(np.asarray(u_l, float)))
        return (chi + es.lambda_minus) * float(j0p @ (sys.f0_jacobian(u_l) @ es.e_minus))
    if regime is Regime.LAX_LEFT:
        es = eigen_from_matrix(sys.A(np.asarray(u_r, float)))
        return -(chi - es.lambda_plus) * float(j0p @ (sys.f0_jacobian(u_r) @ es.e_plus))
    raise ValueError("closed form only for Lax shocks")


@dataclass(frozen=True)
class BlockAssembly:
    """Folded 4x4 view of a transmission problem at frozen traces."""

    A: np.ndarray
    N: np.ndarray
    E: np.ndarray
    S: np.ndarray
    SA: np.ndarray
    M: float
    kernel: np.ndarray
    alpha1: float
    beta1: float
    symmetry_defect: float

    def dissipation_margin(self, v) -> float:
        """``-alpha1 |v|^2 + beta1 |N v|^2 - v.SA v``; nonnegative when dissipative."""
        v = np.asarray(v, dtype=float)
        Nv = self.N @ v
        return float(-self.alpha1 * (v @ v) + self.beta1 * (Nv @ Nv) - v @ self.SA @ v)


def block_weight(L: np.ndarray, N: np.ndarray, modes: BlockModes) -> float:
    """Weight ``M`` making ``v.SA v`` negative on ``ker N``.

    On the kernel the leaving amplitudes satisfy
    ``c_out = -L^-1 N E_in c_in``, so ``M = 2 + 2 s_out C / s_in`` with
    ``C = ||L^-1 N E_in||^2`` dominates the positive part.
    """
    out, inn = modes.leaving, modes.arriving
    T = np.linalg.solve(L, N @ modes.vectors[:, inn])
    C = float(np.linalg.norm(T, 2) ** 2)
    s_out = float(np.max(modes.speeds[out]))
    s_in = float(np.min(np.abs(modes.speeds[inn])))
    return 2.0 + 2.0 * s_out * C / s_in


def assemble_block(tp: TransmissionProblem, u_l, u_r, chi: float = 0.0, M: float | None = None,
                   t: float = 0.0) -> BlockAssembly:
    """Block coefficient, boundary matrices and the block symmetrizer.

    ``S`` puts weight 1 on the leaving modes and ``M`` on the arriving ones,
    so ``S A = sum_k w_k s_k pi_k^T pi_k`` is symmetric.  ``alpha1`` is half
    the dissipation on the kernel of ``N`` and ``beta1`` the smallest power of
    two giving ``v.SA v <= -alpha1 |v|^2 + beta1 |N v|^2`` for all ``v``.
    """
    rep = lopatinskii_matrix(tp, u_l, u_r, chi, t)
    modes = block_modes(tp.left_sys, tp.right_sys, u_l, u_r, chi)
    Al = tp.left_sys.A(np.asarray(u_l, float))
    Ar = tp.right_sys.A(np.asarray(u_r, float))
    A4 = np.zeros((4, 4))
    A4[:2, :2] = -(Al - chi * np.eye(2))
    A4[2:, 2:] = Ar - chi * np.eye(2)
    if M is None:
        M = block_weight(rep.L, rep.N, modes)
    w = np.where(modes.speeds > 0, 1.0, M)
    S = sum(w[k] * modes.projectors[k].T @ modes.projectors[k] for k in range(4))
    SA_spectral = sum(w[k] * modes.speeds[k] * modes.projectors[k].T @ modes.projectors[k] for k in range(4))
    SA_direct = S @ A4
    defect = float(np.max(np.abs(SA_direct - SA_direct.T)))
    inn = modes.arriving
    K = modes.vectors[:, inn] - rep.E @ np.linalg.solve(rep.L, rep.N @ modes.vectors[:, inn])
    Q, _ = np.linalg.qr(K)
    qform = Q.T @ SA_spectral @ Q
    alpha1 = 0.5 * float(np.min(np.linalg.eigvalsh(-0.5 * (qform + qform.T))))
    beta1 = 1.0
    NtN = rep.N.T @ rep.N
    for _ in range(200):
        if np.max(np.linalg.eigvalsh(SA_spectral + alpha1 * np.eye(4) - beta1 * NtN)) <= 0:
            break
        beta1 *= 2.0
    else:
        raise SingularLopatinski("no finite beta1 controls the boundary form")
    return BlockAssembly(A4, rep.N, rep.E, S, SA_spectral, float(M), K, alpha1, beta1, defect)


# ---------------------------------------------------------------------------
# interface closure by Newton iteration


def mode_invariant(sys: System2x2, mode: int, u_ref):
    """Scalar constant along characteristics of family ``mode`` (0 plus, 1 minus)."""
    if sys.invariants is not None and sys.invariants_grad is not None:
        return (lambda u: float(sys.invariants(u)[mode])), (lambda u: sys.invariants_grad(u)[mode])
    es = eigen_from_matrix(sys.A(np.asarray(u_ref, dtype=float)))
    ell = perp(es.e_minus if mode == 0 else es.e_plus)
    return (lambda u: float(ell @ u)), (lambda u: ell)


@dataclass
class InterfaceSolution:
    u_l: np.ndarray
    u_r: np.ndarray
    iterations: int
    residual: np.ndarray


def interface_traces(left_sys: System2x2, right_sys: System2x2, constraint: Callable,
                     ext_l, ext_r, arriving_l, arriving_r, t: float = 0.0,
                     tol: float = 1e-13, maxit: int = NEWTON_MAXIT) -> InterfaceSolution:
    """Newton solve of the interface conditions plus the arriving invariants.

    ``constraint(t, u_l, u_r)`` returns ``(residual, jacobian p x 4)``.  The
    invariants of the ``arriving_l`` modes are taken from ``ext_l`` and those
    of ``arriving_r`` from ``ext_r``; the count must add up to four.
    """
    ext_l = np.asarray(ext_l, dtype=float)
    ext_r = np.asarray(ext_r, dtype=float)
    inv = []
    for b, (sys, ext, modes) in enumerate(((left_sys, ext_l, arriving_l), (right_sys, ext_r, arriving_r))):
        for m in modes:
            fn, gr = mode_invariant(sys, m, ext)
            inv.append((b, fn, gr, fn(ext)))
    w = np.concatenate([ext_l, ext_r])
    scale = 1.0 + np.max(np.abs(w))
    for it in range(maxit + 1):
        ul, ur = w[:2], w[2:]
        res_c, jac_c = constraint(t, ul, ur)
        res_c = np.atleast_1d(res_c)
        if len(res_c) + len(inv) != 4:
            raise WrongCharacteristicCount(
                f"{len(res_c)} interface conditions with {len(inv)} arriving invariants", time=t)
        rows = list(np.atleast_2d(jac_c))
        res = list(res_c)
        for b, fn, gr, target in inv:
            u = w[2 * b:2 * b + 2]
            res.append(fn(u) - target)
            row = np.zeros(4)
            row[2 * b:2 * b + 2] = gr(u)
            rows.append(row)
        res = np.asarray(res)
        if np.max(np.abs(res)) <= tol * scale:
            return InterfaceSolution(w[:2].copy(), w[2:].copy(), it, res)
        J = np.vstack(rows)
        if abs(np.linalg.det(J)) < 1e-14 * (1.0 + np.abs(J).max() ** 4):
            raise SingularLopatinski("interface Newton Jacobian is singular", time=t)
        w = w - np.linalg.solve(J, res)
        if not np.all(np.isfinite(w)):
            raise NewtonDivergence("interface Newton produced non-finite traces", time=t)
        if not (left_sys.in_phase_box(w[:2]) and right_sys.in_phase_box(w[2:])):
            raise NewtonDivergence("interface Newton left the admissible set; no nearby interface state",
                                   time=t)
    raise NewtonDivergence(f"interface Newton did not converge in {maxit} iterations", time=t)


def arriving_from_speeds(modes: BlockModes) -> tuple[tuple, tuple]:
    arr = modes.arriving
    return tuple(int(k) for k in arr if k < 2), tuple(int(k) - 2 for k in arr if k >= 2)


# ---------------------------------------------------------------------------
# coupled two-domain drivers


class _TwoSidedDriver:
    """Shared machinery: traces at the interface, cutoff face speeds, far ends.

    ``y = [xbar]``.  Both domains use cutoff grids anchored at the initial
    interface position; call :meth:`attach` before building the simulation.
    """

    moving = True

    def __init__(self, far_left=None, far_right=None, c0: float = 0.0):
        self.far_left = far_left
        self.far_right = far_right
        self.c0 = c0
        self.weights = (None, None)
        self.anchor = 0.0
        self.epsilon = np.inf
        self.diagnostics: list[dict] = []
        self._stage_residuals: list[float] = []

    def attach(self, left_state, right_state):
        ws = []
        for st in (left_state, right_state):
            gr = st.grid
            if self.moving:
                psi, _ = cutoff_profile((gr.reference_nodes - gr.front_anchor) / gr.epsilon)
                ws.append(psi)
            else:
                ws.append(np.zeros(len(gr.reference_nodes)))
        self.weights = tuple(ws)
        self.anchor = left_state.grid.front_anchor
        self.epsilon = min(left_state.grid.epsilon, right_state.grid.epsilon) if self.moving else np.inf
        return self

    # subclasses provide these
    def constraint(self, t, u_l, u_r):
        raise NotImplementedError

    def speed(self, u_l, u_r) -> float:
        raise NotImplementedError

    def arriving(self, vl, vr, ext_l, ext_r):
        raise NotImplementedError

    def check_regime(self, t, u_l, u_r, chi, sys_l, sys_r) -> Regime:
        return classify_regime(sys_l, u_l, u_r, chi, self.c0, sys_r)

    def evaluate(self, t, views, y):
        vl, vr = views
        xbar = float(y[0])
        if self.moving and abs(xbar - self.anchor) >= max_cutoff_excursion(self.epsilon):
            raise FrontExcursionTooLarge(f"interface moved {xbar - self.anchor:.4g} from its anchor", time=t)
        ext_l = vl.extrapolate("right")
        ext_r = vr.extrapolate("left")
        arr_l, arr_r = self.arriving(vl, vr, ext_l, ext_r)
        sol = interface_traces(vl.sys, vr.sys, self.constraint, ext_l, ext_r, arr_l, arr_r, t)
        chi = self.speed(sol.u_l, sol.u_r) if self.moving else 0.0
        regime = self.check_regime(t, sol.u_l, sol.u_r, chi, vl.sys, vr.sys)
        far_l = boundary_state(vl, self.far_left, "left", t)
        far_r = boundary_state(vr, self.far_right, "right", t)
        speeds = [self.weights[0] * chi, self.weights[1] * chi]
        res_c, _ = self.constraint(t, sol.u_l, sol.u_r)
        self._stage_residuals.append(float(np.max(np.abs(np.atleast_1d(res_c)))))
        info = {"u_l": sol.u_l, "u_r": sol.u_r, "chi": chi, "regime": regime,
                "iterations": sol.iterations, "constraint_residual": float(np.max(np.abs(res_c)))}
        return StageOutput([(far_l, sol.u_l), (sol.u_r, far_r)], speeds, np.array([chi]), info)

    def after_step(self, sim):
        info = sim.last_stages[-1].info
        rec = {"t": sim.t, "xbar": float(sim.y[0]), "chi": info["chi"], "regime": info["regime"].value,
               "phi_residual": max(self._stage_residuals[-2:]), "iterations": info["iterations"]}
        rec.update({f"u_l{k}": float(info["u_l"][k]) for k in range(2)})
        rec.update({f"u_r{k}": float(info["u_r"][k]) for k in range(2)})
        self._stage_residuals.clear()
        self.diagnostics.append(rec)


class ShockProblem(_TwoSidedDriver):
    """Tracked shock: ``Phi = 0`` (and ``Psi = 0`` when subsonic), speed ``chi``.

    ``regime`` is fixed at construction or taken from the first evaluation;
    any later change raises RegimeChange.  After Newton the ``Phi`` residual
    must be below ``phi_tol``.
    """

    def __init__(self, closure: ShockClosure, regime: Regime | None = None, far_left=None,
                 far_right=None, c0: float = 0.0, phi_tol: float = PHI_TOL):
        super().__init__(far_left, far_right, c0)
        self.closure = closure
        self.regime = regime
        self.phi_tol = phi_tol
        if regime is not None:
            self._validate_regime(regime)

    def _validate_regime(self, regime: Regime):
        if regime is Regime.UNCLASSIFIED:
            raise RegimeChange("shock states are in no supported regime")
        if REGIME_P[regime] != self.closure.p:
            kind = "a kinetic relation Psi" if regime is Regime.SUBSONIC else "no kinetic relation"
            raise WrongCharacteristicCount(f"{regime.value} front needs {kind}")

    def constraint(self, t, u_l, u_r):
        return self.closure.residual(t, u_l, u_r)

    def speed(self, u_l, u_r) -> float:
        return self.closure.chi(u_l, u_r)

    def arriving(self, vl, vr, ext_l, ext_r):
        if self.regime is None:
            chi = self.closure.chi(ext_l, ext_r)
            self.regime = classify_regime(vl.sys, ext_l, ext_r, chi, self.c0, vr.sys)
            self._validate_regime(self.regime)
        return _ARRIVING[self.regime]

    def check_regime(self, t, u_l, u_r, chi, sys_l, sys_r) -> Regime:
        phi = abs(self.closure.Phi(u_l, u_r))
        if phi > self.phi_tol:
            raise NewtonDivergence(f"Phi residual {phi:.3e} above {self.phi_tol:.1e}", time=t)
        regime = classify_regime(sys_l, u_l, u_r, chi, self.c0, sys_r)
        if regime is not self.regime:
            raise RegimeChange(f"front regime changed from {self.regime.value} to {regime.value}", time=t)
        return regime


class InterfaceProblem(_TwoSidedDriver):
    """Linear interface conditions of a :class:`TransmissionProblem`.

    Fixed when ``tp.front_speed`` is ``None``; otherwise the interface moves
    with ``front_speed(u_l, u_r)`` on two-sided cutoff grids.
    """

    def __init__(self, tp: TransmissionProblem, far_left=None, far_right=None, c0: float = 0.0):
        super().__init__(far_left, far_right, c0)
        self.tp = tp
        self.moving = tp.front_speed is not None
        self._chi = 0.0

    def constraint(self, t, u_l, u_r):
        return self.tp.residual(t, u_l, u_r)

    def speed(self, u_l, u_r) -> float:
        self._chi = float(self.tp.front_speed(u_l, u_r))
        return self._chi

    def arriving(self, vl, vr, ext_l, ext_r):
        modes = block_modes(vl.sys, vr.sys, ext_l, ext_r, self._chi)
        if len(modes.leaving) != self.tp.p:
            raise WrongCharacteristicCount(
                f"{len(modes.leaving)} modes leave the interface but p={self.tp.p}")
        return arriving_from_speeds(modes)


def shock_advance(sim, dt: float | None = None):
    """One coupled step of a two-sided simulation; returns the tracked front."""
    from .frontdrive import FrontState

    sim.step(dt)
    info = sim.last_stages[-1].info
    return FrontState(float(sim.y[0]), info["chi"], "shock", info["regime"].value,
                      traces={"u_l": info["u_l"], "u_r": info["u_r"]})


def conserved_total(sim) -> np.ndarray:
    """``int f0(u) dx`` summed over every domain of a simulation."""
    return sum(st.conserved().sum(axis=0) for st in sim.states)


def far_flux_balance(sim) -> np.ndarray:
    """Time-integrated flux entering through the far ends of a two-sided run."""
    return sim.flux_integrals[0][0] - sim.flux_integrals[-1][1]


@dataclass
class TwoSidedSetup:
    """Convenience bundle returned by :func:`two_sided_simulation`."""

    sim: object
    problem: _TwoSidedDriver
    left: object
    right: object
    extra: dict = field(default_factory=dict)


def two_sided_simulation(problem: _TwoSidedDriver, left_sys: System2x2, right_sys: System2x2,
                         a: float, xbar0: float, b: float, n_left: int, n_right: int,
                         u_left: Callable, u_right: Callable, epsilon: float | None = None,
                         cfl: float = 0.45) -> TwoSidedSetup:
    """Build both domains with cutoff grids anchored at ``xbar0`` and the simulation."""
    from .grid import MovingGrid
    from .solver import SolverState, Simulation, cell_averages

    if epsilon is None:
        epsilon = 0.45 * min(xbar0 - a, b - xbar0)
    gl = MovingGrid.uniform(a, xbar0, n_left, kind="cutoff", epsilon=epsilon, front_anchor=xbar0)
    gr = MovingGrid.uniform(xbar0, b, n_right, kind="cutoff", epsilon=epsilon, front_anchor=xbar0)
    left = SolverState(left_sys, gl, cell_averages(u_left, gl.phi), cfl=cfl, name="left")
    right = SolverState(right_sys, gr, cell_averages(u_right, gr.phi), cfl=cfl, name="right")
    problem.attach(left, right)
    sim = Simulation(problem, [left, right], y=np.array([xbar0]), cfl=cfl)
    return TwoSidedSetup(sim, problem, left, right)
