"""Pointwise algebra of 2x2 strictly hyperbolic systems.

Eigenstructure with the explicit projector formulas, the Kreiss symmetrizer
with its pointwise weight, the scalar Lopatinskii quantity and a few
discrete norm monitors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateJacobian, LopatinskiFailure, NotStrictlyHyperbolic
from .systems import System2x2, perp

HYPERBOLICITY_GAP = 1e-10
LOPATINSKI_TOL = 1e-10

_I2 = np.eye(2)


@dataclass(frozen=True)
class EigenStructure:
    """Eigen data at one state; both speeds stored positive on the admissible set.

    ``A e_plus = lambda_plus e_plus`` and ``A e_minus = -lambda_minus e_minus``.
    """

    lambda_plus: float
    lambda_minus: float
    e_plus: np.ndarray
    e_minus: np.ndarray
    pi_plus: np.ndarray
    pi_minus: np.ndarray
    A: np.ndarray


def _fix_sign(vec: np.ndarray) -> np.ndarray:
    # first component that is not negligible is made positive
    first = vec[..., 0]
    lead = np.where(np.abs(first) > 1e-14 * np.linalg.norm(vec, axis=-1), first, vec[..., 1])
    return np.where((lead < 0)[..., None], -vec, vec)


def eigen_arrays(A: np.ndarray):
    """Vectorized eigen decomposition of matrices of shape ``(..., 2, 2)``.

    Returns ``(lam_plus, lam_minus, e_plus, e_minus, pi_plus, pi_minus)`` where the
    eigenvalues of ``A`` are ``lam_plus`` and ``-lam_minus`` (larger first).
    Raises NotStrictlyHyperbolic if any matrix has a gap below the threshold.
    """
    A = np.asarray(A, dtype=float)
    tr = A[..., 0, 0] + A[..., 1, 1]
    det = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    half = 0.5 * tr
    disc = half * half - det
    scale = np.maximum(1.0, np.abs(A).max(axis=(-1, -2)))
    if np.any(disc <= (0.5 * HYPERBOLICITY_GAP * scale) ** 2):
        raise NotStrictlyHyperbolic("eigenvalues coincide or are complex")
    root = np.sqrt(disc)
    mu_plus = half + root
    mu_minus = half - root
    gap = (mu_plus - mu_minus)[..., None, None]
    pi_plus = (A - mu_minus[..., None, None] * _I2) / gap
    pi_minus = -(A - mu_plus[..., None, None] * _I2) / gap
    e_plus = _dominant_column(pi_plus)
    e_minus = _dominant_column(pi_minus)
    return mu_plus, -mu_minus, e_plus, e_minus, pi_plus, pi_minus


def _dominant_column(P: np.ndarray) -> np.ndarray:
    c0 = P[..., :, 0]
    c1 = P[..., :, 1]
    n0 = np.linalg.norm(c0, axis=-1)
    n1 = np.linalg.norm(c1, axis=-1)
    col = np.where((n0 >= n1)[..., None], c0, c1)
    col = col / np.maximum(n0, n1)[..., None]
    return _fix_sign(col)


def eigen_decompose(sys: System2x2, u) -> EigenStructure:
    u = np.asarray(u, dtype=float)
    sys.require_admissible(u)
    A = sys.A(u)
    lp, lm, ep, em, pp, pm = eigen_arrays(A)
    return EigenStructure(float(lp), float(lm), ep, em, pp, pm, A)


def eigen_from_matrix(A) -> EigenStructure:
    lp, lm, ep, em, pp, pm = eigen_arrays(np.asarray(A, dtype=float))
    return EigenStructure(float(lp), float(lm), ep, em, pp, pm, np.asarray(A, dtype=float))


@dataclass(frozen=True)
class Symmetrizer:
    S: np.ndarray
    M: float
    alpha0: float
    beta0: float

    def SA(self, A: np.ndarray) -> np.ndarray:
        return self.S @ A


def symmetrizer_weight(es: EigenStructure, nu) -> float:
    """Smallest admissible weight ``2 + 8 (lam+/lam-) |pi+ nu_perp|^2 / |pi- nu_perp|^2``."""
    nperp = perp(nu)
    num = np.linalg.norm(es.pi_plus @ nperp)
    den = np.linalg.norm(es.pi_minus @ nperp)
    if den < LOPATINSKI_TOL:
        raise LopatinskiFailure(f"|pi_minus nu_perp| = {den:.3e} below tolerance")
    return 2.0 + 8.0 * (es.lambda_plus / es.lambda_minus) * num**2 / den**2


def build_symmetrizer(es: EigenStructure, nu, M: float | None = None) -> Symmetrizer:
    """``S = pi+^T pi+ + M pi-^T pi-``; M defaults to the pointwise weight for ``nu``."""
    if M is None:
        M = symmetrizer_weight(es, nu)
    pp, pm = es.pi_plus, es.pi_minus
    S = pp.T @ pp + M * (pm.T @ pm)
    S = 0.5 * (S + S.T)
    w = np.linalg.eigvalsh(S)
    return Symmetrizer(S=S, M=float(M), alpha0=float(w[0]), beta0=float(w[1]))


def symmetrized_operator(es: EigenStructure, sym: Symmetrizer) -> np.ndarray:
    """``S A`` written through the spectral identity, symmetric by construction."""
    pp, pm = es.pi_plus, es.pi_minus
    return es.lambda_plus * (pp.T @ pp) - sym.M * es.lambda_minus * (pm.T @ pm)


def lopatinskii_scalar(es: EigenStructure, nu) -> float:
    return float(abs(np.dot(np.asarray(nu, dtype=float), es.e_plus)))


def alinhac_good_unknown(u_t, u_x, phi_t: float, phi_x: float) -> np.ndarray:
    """``d_t^phi u = d_t u - (d_t phi / d_x phi) d_x u``."""
    if phi_x < 1e-8:
        raise DegenerateJacobian(f"d_x phi = {phi_x:.3e}")
    return np.asarray(u_t, dtype=float) - (phi_t / phi_x) * np.asarray(u_x, dtype=float)


# ---------------------------------------------------------------------------
# weighted norm monitors

@dataclass
class WeightedNormReport:
    gamma: float
    sup_norm: float
    integral_norm: float
    trace_norm: float
    dual_norm: float
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    running_sup: np.ndarray = field(default_factory=lambda: np.zeros(0))
    running_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    running_dual: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dual_l1_bound: float = 0.0
    dual_l2_bound: float = 0.0


def _trapezoid_weights(n: int, dt: float) -> np.ndarray:
    w = np.full(n, dt)
    if n:
        w[0] = w[-1] = 0.5 * dt
    if n == 1:
        w[0] = 0.0
    return w


def _sobolev_norm(field_: np.ndarray, dx: float, order: int) -> float:
    total = 0.0
    d = field_
    for k in range(order + 1):
        total += float(np.sum(d**2) * dx)
        if k < order:
            d = np.gradient(d, dx, axis=0, edge_order=2)
    return np.sqrt(total)


def _time_derivatives(series: np.ndarray, dt: float, m: int) -> list[np.ndarray]:
    out = [series]
    for _ in range(m):
        out.append(np.gradient(out[-1], dt, axis=0, edge_order=2))
    return out


def dual_norm_dictionary(t: np.ndarray, gamma: float, size: int = 64) -> np.ndarray:
    """Piecewise-linear test functions (rows), normalized in the mixed weighted norm."""
    T = t[-1] - t[0] if len(t) > 1 else 1.0
    half = size // 2
    nodes = t[0] + T * np.linspace(0.0, 1.0, half)
    width = T / max(half - 1, 1)
    hats = np.clip(1.0 - np.abs(t[None, :] - nodes[:, None]) / width, 0.0, None)
    # plateaus that switch off linearly at successive nodes
    ends = t[0] + T * np.linspace(1.0 / half, 1.0, half)
    ramps = np.clip((ends[:, None] - t[None, :]) / width + 1.0, 0.0, 1.0)
    dic = np.vstack([hats, ramps])[:size]
    dt = t[1] - t[0] if len(t) > 1 else 1.0
    w = _trapezoid_weights(len(t), dt)
    ew = np.exp(-gamma * t)
    norms = np.max(ew * np.abs(dic), axis=1) + np.sqrt(gamma * (dic**2 * ew**2) @ w)
    norms = np.where(norms > 0, norms, 1.0)
    return dic / norms[:, None]


def dual_norm(f: np.ndarray, t: np.ndarray, gamma: float, size: int = 64) -> float:
    """Lower bound of the dual norm of ``f`` by maximizing over a fixed dictionary."""
    f = np.asarray(f, dtype=float)
    if len(t) < 2:
        return 0.0
    w = _trapezoid_weights(len(t), t[1] - t[0])
    dic = dual_norm_dictionary(t, gamma, size)
    vals = dic @ (np.exp(-2 * gamma * t) * f * w)
    return float(np.max(np.abs(vals)))


def dual_norm_bounds(f: np.ndarray, t: np.ndarray, gamma: float) -> tuple[float, float]:
    if len(t) < 2:
        return 0.0, 0.0
    w = _trapezoid_weights(len(t), t[1] - t[0])
    l1 = float(np.sum(w * np.exp(-gamma * t) * np.abs(f)))
    # scale before squaring so tiny data does not underflow to a zero bound
    scale = float(np.max(np.abs(f))) if np.size(f) else 0.0
    if scale == 0.0:
        return l1, 0.0
    g = f / scale
    l2 = scale * float(np.sqrt(np.sum(w * np.exp(-2 * gamma * t) * g**2) / gamma))
    return l1, l2


def weighted_norms(times, fields, dx: float, gamma: float, m: int = 0,
                   trace=None, source=None) -> WeightedNormReport:
    """Discrete weighted norms of a trajectory sampled on a uniform time grid.

    ``fields`` has shape ``(nt, nx, 2)``; ``trace`` (``(nt, 2)``) defaults to the
    first node of each sample; ``source`` is a scalar time series whose dual
    norm is reported (zero when omitted).
    """
    if m > 2 or m < 0:
        raise ValueError("m must be 0, 1 or 2")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    t = np.asarray(times, dtype=float)
    U = np.asarray(fields, dtype=float)
    nt = len(t)
    dt = t[1] - t[0] if nt > 1 else 1.0
    m_eff = min(m, max(nt - 1, 0) // 2) if nt > 2 else 0
    derivs = _time_derivatives(U, dt, m_eff) if nt > 2 else [U]
    per_time = np.zeros(nt)
    for n in range(nt):
        per_time[n] = sum(_sobolev_norm(derivs[j][n], dx, m - j) for j in range(len(derivs)))
    weighted = np.exp(-gamma * t) * per_time
    running_sup = np.maximum.accumulate(weighted) if nt else weighted
    w = _trapezoid_weights(nt, dt)
    integral = float(np.sqrt(gamma * np.sum(w * weighted**2)))

    tr = U[:, 0, :] if trace is None else np.asarray(trace, dtype=float)
    # x-derivatives of the trace from one-sided differences of the fields
    trace_terms = [tr]
    if m >= 1 and U.shape[1] >= 3:
        trace_terms.append((-3 * U[:, 0] + 4 * U[:, 1] - U[:, 2]) / (2 * dx))
    running_trace = np.zeros(nt)
    acc = np.zeros(nt)
    for j, g in enumerate(trace_terms):
        gd = _time_derivatives(g, dt, m - j) if nt > 2 else [g]
        for d in gd:
            sq = np.sum(d**2, axis=-1) * np.exp(-2 * gamma * t)
            acc += sq
    if nt > 1:
        inc = 0.5 * (acc[1:] + acc[:-1]) * dt
        running_trace[1:] = np.sqrt(np.cumsum(inc))

    if source is None:
        src = np.zeros(nt)
    else:
        src = np.asarray(source, dtype=float)
    running_dual = np.array([dual_norm(src[: n + 1], t[: n + 1], gamma) for n in range(nt)]) if nt else np.zeros(0)
    running_dual = np.maximum.accumulate(running_dual) if nt else running_dual
    l1, l2 = dual_norm_bounds(src, t, gamma)
    return WeightedNormReport(
        gamma=gamma,
        sup_norm=float(running_sup[-1]) if nt else 0.0,
        integral_norm=integral,
        trace_norm=float(running_trace[-1]) if nt else 0.0,
        dual_norm=float(running_dual[-1]) if nt else 0.0,
        times=t, running_sup=running_sup, running_trace=running_trace,
        running_dual=running_dual, dual_l1_bound=l1, dual_l2_bound=l2,
    )
