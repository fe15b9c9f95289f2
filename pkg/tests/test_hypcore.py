import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import G, subcritical_state
from fronttrack.errors import DegenerateJacobian, LopatinskiFailure, NotAdmissible, NotStrictlyHyperbolic
from fronttrack.hypcore import (
    alinhac_good_unknown,
    build_symmetrizer,
    dual_norm,
    dual_norm_bounds,
    eigen_arrays,
    eigen_decompose,
    eigen_from_matrix,
    lopatinskii_scalar,
    symmetrized_operator,
    symmetrizer_weight,
    weighted_norms,
)
from fronttrack.systems import (
    jacobian_fd,
    linear_system,
    linearized_shallow_water,
    perp,
    shallow_water_zq,
    shallow_water_zv,
)

depths = st.floats(0.5, 2.0)
froudes = st.floats(-0.8, 0.8)
angles = st.floats(0.0, 2 * np.pi)


@pytest.mark.parametrize("h,v", [(1.0, 0.0), (2.0, 0.5), (0.5, -1.0)])
def test_shallow_water_speeds(h, v):
    zq = shallow_water_zq(G, 1.0)
    zv = shallow_water_zv(G, 1.0)
    c = np.sqrt(G * h)
    for sys, u in ((zq, [h - 1.0, h * v]), (zv, [h - 1.0, v])):
        es = eigen_decompose(sys, u)
        assert es.lambda_plus == pytest.approx(v + c, rel=1e-13)
        assert es.lambda_minus == pytest.approx(c - v, rel=1e-13)


def test_flux_jacobian_matches_A():
    sys = shallow_water_zq(G, 1.0)
    u = np.array([0.3, 0.7])
    assert np.allclose(jacobian_fd(sys.f, u), sys.A(u), atol=1e-7)


def test_supercritical_state_rejected():
    sys = shallow_water_zq(G, 1.0)
    with pytest.raises(NotAdmissible):
        eigen_decompose(sys, subcritical_state(1.0, 1.5))


def test_coincident_eigenvalues_raise():
    with pytest.raises(NotStrictlyHyperbolic):
        eigen_from_matrix(np.eye(2))
    with pytest.raises(NotStrictlyHyperbolic):
        eigen_from_matrix([[0.0, -1.0], [1.0, 0.0]])
    with pytest.raises(ValueError):
        linear_system([[0.0, -1.0], [1.0, 0.0]])


@given(depths, froudes)
def test_eigen_data(h, fr):
    sys = shallow_water_zq(G, 1.0)
    es = eigen_decompose(sys, subcritical_state(h, fr))
    A = es.A
    assert np.allclose(A @ es.e_plus, es.lambda_plus * es.e_plus, atol=1e-12)
    assert np.allclose(A @ es.e_minus, -es.lambda_minus * es.e_minus, atol=1e-12)
    assert np.allclose(es.pi_plus + es.pi_minus, np.eye(2), atol=1e-13)
    assert np.allclose(es.pi_plus @ es.pi_plus, es.pi_plus, atol=1e-12)
    assert np.allclose(es.pi_plus @ es.pi_minus, 0.0, atol=1e-12)
    assert np.linalg.norm(es.e_plus) == pytest.approx(1.0)


@given(depths, froudes)
def test_vectorized_eigen_matches_pointwise(h, fr):
    sys = shallow_water_zq(G, 1.0)
    u = np.stack([subcritical_state(h, fr), subcritical_state(1.0, 0.1)])
    lp, lm, ep, *_ = eigen_arrays(sys.A(u))
    es = eigen_decompose(sys, u[0])
    assert lp[0] == pytest.approx(es.lambda_plus)
    assert np.allclose(ep[0], es.e_plus)


@given(depths, froudes)
def test_riemann_invariants_are_left_eigenvectors(h, fr):
    sys = shallow_water_zq(G, 1.0)
    u = subcritical_state(h, fr)
    es = eigen_decompose(sys, u)
    grad = sys.invariants_grad(u)
    assert np.allclose(grad[0] @ es.A, es.lambda_plus * grad[0], atol=1e-12)
    assert np.allclose(grad[1] @ es.A, -es.lambda_minus * grad[1], atol=1e-12)


@given(depths, froudes, angles)
def test_symmetrizer_properties(h, fr, th):
    sys = shallow_water_zq(G, 1.0)
    es = eigen_decompose(sys, subcritical_state(h, fr))
    nu = np.array([np.cos(th), np.sin(th)])
    if abs(nu @ es.e_plus) < 1e-3:
        return
    sym = build_symmetrizer(es, nu)
    assert sym.alpha0 > 0 and sym.beta0 >= sym.alpha0
    assert sym.M >= 2.0
    SA = symmetrized_operator(es, sym)
    scale = np.linalg.norm(sym.S, 2) * np.linalg.norm(es.A, 2)
    assert np.max(np.abs(SA - sym.S @ es.A)) <= 1e-12 * scale
    assert np.array_equal(SA, SA.T) or np.max(np.abs(SA - SA.T)) <= 1e-14 * scale
    npp = perp(nu)
    assert npp @ SA @ npp <= 1e-12 * scale


def test_symmetrizer_weight_needs_lopatinskii():
    sys = shallow_water_zq(G, 1.0)
    es = eigen_decompose(sys, [0.0, 0.0])
    bad = perp(es.e_plus)
    assert lopatinskii_scalar(es, bad) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(LopatinskiFailure):
        symmetrizer_weight(es, bad)


def test_symmetrizer_at_rest_closed_form():
    # at rest pi+ and pi- are mirror images, so |pi+ nu_perp| = |pi- nu_perp| for nu = (0, 1)
    es = eigen_decompose(shallow_water_zq(G, 1.0), [0.0, 0.0])
    assert symmetrizer_weight(es, [0.0, 1.0]) == pytest.approx(10.0)


def test_alinhac_good_unknown():
    assert np.allclose(alinhac_good_unknown([1.0, 2.0], [3.0, 4.0], 0.0, 1.0), [1.0, 2.0])
    assert np.allclose(alinhac_good_unknown([1.0, 2.0], [3.0, 4.0], 2.0, 2.0), [-2.0, -2.0])
    with pytest.raises(DegenerateJacobian):
        alinhac_good_unknown([1.0, 2.0], [3.0, 4.0], 1.0, 0.0)


def test_linearized_system_is_constant():
    sys = linearized_shallow_water(G, 2.0)
    assert np.allclose(sys.A(np.array([0.3, -1.0])), [[0.0, 1.0], [2 * G, 0.0]])


def test_weighted_norms_zero_and_constant():
    t = np.linspace(0.0, 1.0, 11)
    zero = weighted_norms(t, np.zeros((11, 8, 2)), 0.1, gamma=1.0)
    assert zero.sup_norm == zero.integral_norm == zero.trace_norm == zero.dual_norm == 0.0
    ones = weighted_norms(t, np.ones((11, 8, 2)), 0.1, gamma=0.5)
    assert np.all(np.diff(ones.running_sup) >= 0)
    assert ones.sup_norm > 0
    with pytest.raises(ValueError):
        weighted_norms(t, np.zeros((11, 8, 2)), 0.1, gamma=1.0, m=3)
    with pytest.raises(ValueError):
        weighted_norms(t, np.zeros((11, 8, 2)), 0.1, gamma=0.0)


def test_dual_norm_scales_linearly():
    t = np.linspace(0.0, 1.0, 41)
    f = np.sin(3 * t)
    assert dual_norm(2 * f, t, 1.0) == pytest.approx(2 * dual_norm(f, t, 1.0))
    assert dual_norm(np.zeros_like(t), t, 1.0) == 0.0


@given(st.lists(st.floats(-5.0, 5.0), min_size=21, max_size=21), st.floats(0.1, 5.0))
def test_dual_norm_below_upper_bounds(values, gamma):
    t = np.linspace(0.0, 2.0, 21)
    f = np.asarray(values)
    lower = dual_norm(f, t, gamma)
    l1, l2 = dual_norm_bounds(f, t, gamma)
    assert lower <= min(l1, l2) * (1 + 1e-12) + 1e-300
