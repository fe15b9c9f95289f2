import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import G
from fronttrack.compat import (
    ContactData,
    IBVPData,
    KinematicData,
    PistonData,
    boundary_jet,
    check_compatibility,
    initial_front_velocity,
    initial_time_derivatives,
    piston_compatible_profile,
)
from fronttrack.errors import DegenerateContact, InsufficientStencil
from fronttrack.solver import LinearNu, Simulation, IBVPProblem, Transparent, make_state
from fronttrack.systems import linearized_shallow_water, shallow_water_zq

X = np.linspace(0.0, 1.0, 41)
LIN = linearized_shallow_water(G, 1.0)


def _linear_data(a, b):
    return np.asarray(a)[None, :] + X[:, None] * np.asarray(b)[None, :]


@pytest.mark.parametrize("side", ["left", "right"])
def test_boundary_jet_exact_for_quartics(side):
    p = np.polynomial.Polynomial([0.3, -1.0, 2.0, 0.5, -0.7])
    u = np.stack([p(X), -2 * p(X)], axis=-1)
    val, dx, dxx = boundary_jet(X, u, side)
    xb = X[0] if side == "left" else X[-1]
    assert np.allclose(val, [p(xb), -2 * p(xb)], atol=1e-12)
    assert np.allclose(dx, [p.deriv()(xb), -2 * p.deriv()(xb)], atol=1e-9)
    assert np.allclose(dxx, [p.deriv(2)(xb), -2 * p.deriv(2)(xb)], atol=1e-6)


def test_short_stencil_raises():
    with pytest.raises(InsufficientStencil):
        boundary_jet(X[:4], np.zeros((4, 2)))
    with pytest.raises(InsufficientStencil):
        initial_time_derivatives(LIN, X[:3], np.zeros((3, 2)))


def test_time_derivatives_of_linear_data():
    u = _linear_data([0.1, 0.2], [0.5, -0.3])
    u0, u1, u2 = initial_time_derivatives(LIN, X, u)
    A = LIN.A(u[0])
    assert np.allclose(u1, -A @ np.array([0.5, -0.3]), atol=1e-13)
    # two gradient passes amplify roundoff by 1/dx^2
    assert np.allclose(u2, 0.0, atol=1e-10)


def test_first_time_derivative_matches_short_solver_run():
    sys = shallow_water_zq(G, 1.0)

    def init(x):
        z = 0.02 * np.exp(-((x - 0.5) / 0.1) ** 2)
        return np.stack([z, 0.5 * z], axis=-1)

    st_ = make_state(sys, 0.0, 1.0, 400, init)
    u_start = st_.u.copy()
    sim = Simulation(IBVPProblem([(Transparent(), Transparent())]), [st_])
    dt = 1e-5
    sim.step(dt)
    rate = (st_.u - u_start) / dt
    _, u1 = initial_time_derivatives(sys, st_.centers, u_start, order=1)
    inner = slice(20, -20)
    scale = np.max(np.abs(u1))
    assert np.max(np.abs(rate[inner] - u1[inner])) <= 2e-2 * scale


@given(st.floats(-0.1, 0.1), st.floats(1e-3, 0.1))
def test_order0_residual_equals_data_shift(base, delta):
    u = _linear_data([base, 0.0], [0.3, 0.1])
    report = check_compatibility(IBVPData(LIN, X, u, LinearNu([1.0, 0.0], base + delta)), order=0)
    assert abs(report.residuals[0]) == pytest.approx(delta, abs=1e-12)


@pytest.mark.parametrize("delta", [0.0, 0.05, -0.2])
def test_order1_residual_detects_slope_mismatch(delta):
    beta = 0.4
    u = _linear_data([0.0, 0.0], [0.0, beta])
    # zeta_t = -q_x = -beta at the corner
    closure = LinearNu([1.0, 0.0], lambda t: (-beta + delta) * t)
    report = check_compatibility(IBVPData(LIN, X, u, closure), order=1)
    assert report.residuals[0] == pytest.approx(0.0, abs=1e-12)
    assert report.residuals[1] == pytest.approx(-delta, abs=1e-8)
    assert report.max_residual(0) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("c", [0.0, 0.7, -1.3])
def test_kinematic_constant_law(c):
    u = _linear_data([0.0, 0.0], [0.1, 0.0])
    prob = KinematicData(LIN, X, u, LinearNu([0.0, 1.0], 0.0), law=lambda v: c)
    x1, x2 = initial_front_velocity(prob)
    assert x1 == c and x2 == 0.0


@given(st.floats(-1.0, 1.0))
def test_contact_speed_from_constructed_data(sigma):
    a = np.array([0.2, -0.1])
    b = np.array([-0.3, 0.4])
    u = _linear_data([0.05, 0.1], a)
    A = LIN.A(u[0])
    m = -A @ a + sigma * (a - b)

    def U_i(t, x):
        return np.array([0.05, 0.1]) + x * b + t * m

    report = check_compatibility(ContactData(LIN, X, u, U_i=U_i), order=2)
    assert report.derived_initials["x1"] == pytest.approx(sigma, abs=1e-8)
    assert report.derived_initials["x2"] == pytest.approx(0.0, abs=1e-5)
    assert report.max_residual(1) <= 1e-8


def test_contact_degenerate_slopes_raise():
    a = np.array([0.2, -0.1])
    u = _linear_data([0.05, 0.1], a)
    with pytest.raises(DegenerateContact):
        check_compatibility(ContactData(LIN, X, u, U_i=lambda t, x: np.array([0.05, 0.1]) + x * a))


def test_piston_compatible_profile_meets_both_orders():
    kw = dict(g=G, h0=1.0, rho=1000.0, m=800.0, k=2000.0, x_eq=0.3)
    prof = piston_compatible_profile(**kw, xbar0=0.0, xdot0=0.0)
    # the profile is quintic at the wall, so sample finely for the 5-node jet
    x = np.linspace(0.0, 2.0, 2001)
    data = PistonData(x, prof(x), **kw)
    report = check_compatibility(data, order=1)
    assert report.max_residual() <= 1e-9
    x1, x2 = initial_front_velocity(data)
    assert x1 == 0.0
    assert x2 == pytest.approx(2000.0 * 0.3 / 800.0)
    bad = PistonData(x, prof(x), **{**kw, "x_eq": 0.0})
    assert check_compatibility(bad, order=1).residuals[1] == pytest.approx(2000.0 * 0.3 / 800.0, rel=1e-6)


def test_order_limits():
    u = _linear_data([0.0, 0.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        check_compatibility(IBVPData(LIN, X, u, LinearNu([1.0, 0.0])), order=3)
    with pytest.raises(TypeError):
        initial_front_velocity(object())
