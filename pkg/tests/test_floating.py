from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import G
from fronttrack.errors import DegenerateContact, RotationOutOfRange, ValidationError
from fronttrack.floating import (
    FixedBody,
    FloatingBodyScenario,
    FreeMotion,
    Lid,
    PrescribedMotion,
    RigidBodyState,
    added_mass,
    archimedean_mass,
    body_step,
    contact_speed_first_component,
    floating_simulation,
    floating_step,
    interior_solve,
    psi_lid_solve,
    surface,
    weighted_average,
)

PARA = Lid.parabolic(0.0, 0.25, 1.0, (-0.9, 0.9))


def _free_scenario(n=200, force=None):
    base = FloatingBodyScenario(PARA, -0.5, 0.5, FixedBody(), n_interior=n)
    m = archimedean_mass(base)
    return FloatingBodyScenario(PARA, -0.5, 0.5, FreeMotion(m, 0.05 * m, force), n_interior=n)


def test_lid_crossings_and_tabulated_lid():
    assert PARA.crossings(0.0) == pytest.approx([-0.5, 0.5], abs=1e-14)
    xs = np.linspace(-0.9, 0.9, 37)
    tab = Lid.tabulated(xs, PARA(xs))
    x = np.linspace(-0.85, 0.85, 11)
    # not-a-knot cubic splines reproduce quadratics
    assert np.allclose(tab(x), PARA(x), atol=1e-12)
    assert np.allclose(tab.slope(x), PARA.slope(x), atol=1e-11)
    assert PARA.theta_max == pytest.approx(np.arctan(1 / 1.8))
    assert PARA.slope(2.0) == 0.0


@given(st.floats(-0.3, 0.3), st.floats(-0.2, 0.2))
def test_psi_translation(dx, dz):
    x = np.linspace(-0.5, 0.5, 21)
    Z = psi_lid_solve(PARA, x, dx, dz, 0.0, 0.0, 0.0)
    assert np.allclose(Z, PARA(x - dx) + dz, atol=1e-13)


@given(st.floats(-0.5, 0.5), st.floats(-0.3, 0.3))
def test_psi_rotated_flat_lid_closed_form(theta, level):
    flat = Lid.flat(level, (-5.0, 5.0))
    x = np.linspace(-1.0, 1.0, 9)
    Z, Zx = psi_lid_solve(flat, x, 0.1, 0.05, theta, 0.0, 0.0, return_slope=True)
    exact = 0.05 + (level + (x - 0.1) * np.sin(theta)) / np.cos(theta)
    assert np.allclose(Z, exact, atol=1e-13)
    assert np.allclose(Zx, np.tan(theta), atol=1e-13)


@given(st.floats(-0.4, 0.4), st.floats(-0.1, 0.1), st.floats(-0.1, 0.1))
def test_psi_matches_parametric_rigid_motion(theta, x_G, z_G):
    # rotate body points (xi, Z_lid(xi)) rigidly and compare with the implicit solve
    xi = np.linspace(-0.4, 0.4, 9)
    eta = PARA(xi)
    c, s = np.cos(theta), np.sin(theta)
    x = x_G + c * xi - s * eta
    z = z_G + s * xi + c * eta
    assert np.allclose(psi_lid_solve(PARA, x, x_G, z_G, theta, 0.0, 0.0), z, atol=1e-12)


def test_rotation_limit_enforced():
    limit = PARA.theta_max
    psi_lid_solve(PARA, [0.0], 0.0, 0.0, 0.99 * limit, 0.0, 0.0)
    with pytest.raises(RotationOutOfRange):
        psi_lid_solve(PARA, [0.0], 0.0, 0.0, 1.01 * limit, 0.0, 0.0)


def test_flat_lid_fixed_body_keeps_flux():
    sc = FloatingBodyScenario(Lid.flat(-0.2, (-1.0, 1.0)), -0.5, 0.5, FixedBody(), n_interior=50)
    W = RigidBodyState(q_bar=0.3).vector()
    f = interior_solve(sc, 0.0, -0.5, 0.5, W)
    assert f.q_bar_dot == 0.0
    assert np.allclose(f.Q, 0.3) and np.allclose(f.P, sc.p_atm, atol=1e-9)


def test_rest_pressure_is_hydrostatic():
    sc = FloatingBodyScenario(PARA, -0.5, 0.5, FixedBody(), n_interior=100)
    f = interior_solve(sc, 0.0, -0.5, 0.5, np.zeros(7))
    Z = PARA(f.edges)
    assert np.allclose(f.P, sc.p_atm - sc.rho * G * Z, atol=1e-9)
    assert abs(f.p_residual) <= 1e-9
    assert f.q_bar_dot == pytest.approx(0.0, abs=1e-12)


def _moving_state():
    return RigidBodyState(q_bar=0.05, x_G=0.02, z_G=-0.01, theta=0.1, u_G=0.2, w_G=-0.15, omega=0.3)


def test_flux_force_is_a_gradient():
    sc = _free_scenario(n=50)
    W = _moving_state()
    f = interior_solve(sc, 0.0, -0.45, 0.45, W.vector())
    h = 1e-6
    pose = (W.x_G, W.z_G, W.theta)

    def potential(x):
        s = surface(PARA, np.atleast_1d(x), pose, sc.reference)
        H = sc.h0 + s.Z
        Q = s.T @ W.velocity + W.q_bar
        return Q * Q / H + 0.5 * G * H * H

    fd = (potential(f.mids + h) - potential(f.mids - h)) / (2 * h)
    assert np.allclose(f.F_I, fd, rtol=1e-6, atol=1e-7)


def test_transport_rate_matches_time_derivative_of_T():
    sc = _free_scenario(n=40)
    W = _moving_state()
    f = interior_solve(sc, 0.0, -0.45, 0.45, W.vector())
    h = 1e-6
    vel = W.velocity
    # theta' = -omega
    rate = np.array([vel[0], vel[1], -vel[2]])
    pose = np.array([W.x_G, W.z_G, W.theta])
    Tp = surface(PARA, f.mids, pose + h * rate, sc.reference).T
    Tm = surface(PARA, f.mids, pose - h * rate, sc.reference).T
    assert np.allclose(f.F_III, ((Tp - Tm) / (2 * h)) @ vel, rtol=1e-6, atol=1e-8)
    Zp = surface(PARA, f.contacts["x"], pose + h * rate, sc.reference).Z
    Zm = surface(PARA, f.contacts["x"], pose - h * rate, sc.reference).Z
    assert np.allclose(f.contacts["Z_t"], (Zp - Zm) / (2 * h), atol=1e-7)


def test_interior_quadrature_converges_at_second_order():
    W = _moving_state().vector()
    vals = [interior_solve(_free_scenario(n=n), 0.0, -0.45, 0.45, W).q_bar_dot for n in (50, 100, 200, 400)]
    d = np.abs(np.diff(vals))
    orders = np.log2(d[:-1] / d[1:])
    assert np.all((orders > 1.8) & (orders < 2.2)), orders


def test_added_mass_symmetric_and_nonnegative():
    f = interior_solve(_free_scenario(n=80), 0.0, -0.45, 0.45, _moving_state().vector())
    Ma = added_mass(f)
    assert np.max(np.abs(Ma - Ma.T)) <= 1e-12 * np.abs(Ma).max()
    assert np.linalg.eigvalsh(0.5 * (Ma + Ma.T))[0] >= -1e-12 * np.abs(Ma).max()


def test_added_mass_degenerate_cases():
    f = interior_solve(_free_scenario(n=40), 0.0, -0.45, 0.45, np.zeros(7))
    assert np.array_equal(added_mass(replace(f, widths=np.zeros_like(f.widths))), np.zeros((3, 3)))
    v = np.array([1.0, -2.0, 0.5])
    T = np.outer(np.sin(f.mids), v)
    rank1 = replace(f, T=T, averages={**f.averages, "T": weighted_average(T, f.widths, f.H)})
    eig = np.linalg.eigvalsh(added_mass(rank1))
    assert np.sum(eig > 1e-10 * eig.max()) == 1
    flat = FloatingBodyScenario(Lid.flat(-0.2, (-1.0, 1.0)), -0.5, 0.5,
                                FreeMotion(100.0, 10.0), n_interior=40)
    eig = np.linalg.eigvalsh(added_mass(interior_solve(flat, 0.0, -0.5, 0.5, np.zeros(7))))
    assert abs(eig[0]) <= 1e-10 * eig[-1] and eig[1] > 1e-6 * eig[-1]


def test_archimedean_mass_balances_rest_state():
    sc = _free_scenario(n=100)
    f = interior_solve(sc, 0.0, -0.5, 0.5, np.zeros(7))
    assert np.max(np.abs(f.body_acc)) <= 1e-12


def test_applied_force_enters_through_total_mass():
    push = np.array([0.0, 50.0, 1.0])
    sc0 = _free_scenario(n=60)
    sc1 = _free_scenario(n=60, force=lambda t, s: push)
    W = _moving_state().vector()
    f0 = interior_solve(sc0, 0.0, -0.45, 0.45, W)
    f1 = interior_solve(sc1, 0.0, -0.45, 0.45, W)
    Ma = added_mass(f0)
    expected = np.linalg.solve(sc0.mode.M0 + 0.5 * (Ma + Ma.T), push)
    assert np.allclose(f1.body_acc - f0.body_acc, expected, rtol=1e-10, atol=1e-14)


def test_contact_speed_first_component():
    assert contact_speed_first_component(0.1, 0.2, 0.7, 0.3) == pytest.approx(0.4 / 0.5)
    with pytest.raises(DegenerateContact):
        contact_speed_first_component(0.1, 0.2, 0.2, 0.3)


def test_body_step_at_rest_is_still():
    sc = _free_scenario(n=60)
    W1 = body_step(sc, 0.0, np.zeros(7), -0.5, 0.5, 1e-3)
    assert np.max(np.abs(W1.vector())) <= 1e-13


def test_fixed_body_rest_run_stays_at_rest():
    sc = FloatingBodyScenario(PARA, -0.5, 0.5, FixedBody(), n_interior=50)
    sim, prob = floating_simulation(sc, -3.0, 3.0, 60, 60)
    for _ in range(20):
        m, p, body = floating_step(sim)
    assert m.xbar == -0.5 and p.xbar == 0.5
    assert np.max(np.abs(sim.states[0].u)) == 0.0
    assert abs(prob.diagnostics[-1]["mass_defect"]) <= 1e-12


def test_prescribed_heave_is_mirror_symmetric():
    motion = PrescribedMotion.heave(0.0, 0.0, 0.01, 3.0)
    sc = FloatingBodyScenario(PARA, -0.5, 0.5, motion, n_interior=60)
    sim, prob = floating_simulation(sc, -3.0, 3.0, 80, 80)
    sim.run(0.3)
    assert sim.y[0] == pytest.approx(-sim.y[1], abs=1e-12)
    assert abs(sim.y[0] + 0.5) > 1e-5
    left, right = sim.states
    assert np.allclose(left.u[::-1, 0], right.u[:, 0], atol=1e-12)
    assert np.allclose(left.u[::-1, 1], -right.u[:, 1], atol=1e-12)


@pytest.mark.parametrize("kw", [
    {"x_minus": 0.5, "x_plus": -0.5},
    {"x_minus": -1.0, "x_plus": 0.5},
    {"h0": 0.1},
    {"n_interior": 1},
    {"body": RigidBodyState(theta=0.1)},
])
def test_scenario_validation(kw):
    args = {"lid": PARA, "x_minus": -0.5, "x_plus": 0.5}
    args.update(kw)
    with pytest.raises(ValidationError):
        FloatingBodyScenario(**args)


@pytest.mark.parametrize("mass,inertia", [(0.0, 1.0), (1.0, -1.0)])
def test_free_motion_needs_positive_inertia(mass, inertia):
    with pytest.raises(ValidationError):
        FreeMotion(mass, inertia)
