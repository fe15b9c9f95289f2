import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import G
from fronttrack.compat import ContactData, initial_front_velocity
from fronttrack.errors import DegenerateContact, SingularA, SubsonicityLoss
from fronttrack.frontdrive import (
    ContactProblem,
    FrontState,
    KinematicProblem,
    check_subsonic,
    contact_advance,
    contact_mu,
    contact_speed,
    kinematic_advance,
    rel1_residual,
    second_order_data,
    space_time_jet,
)
from fronttrack.grid import MovingGrid
from fronttrack.solver import LinearNu, Simulation, SolverState, cell_averages
from fronttrack.systems import System2x2, linearized_shallow_water, perp, shallow_water_zq, shallow_water_zv

vec = st.lists(st.floats(-2.0, 2.0), min_size=2, max_size=2).map(np.array)
speeds = st.floats(-3.0, 3.0)


@given(vec, vec, speeds)
def test_contact_speed_recovers_translation(u_x, ui_x, c):
    # both sides translate at c, so d_t = -c d_x on each side
    d = u_x - ui_x
    if d @ d < 1e-6:
        return
    chi = contact_speed(u_x, ui_x, -c * u_x, -c * ui_x)
    assert chi == pytest.approx(c, abs=1e-12 * (1 + abs(c)))


def test_contact_speed_trivial_and_degenerate():
    assert contact_speed([1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]) == 0.0
    with pytest.raises(DegenerateContact):
        contact_speed([1.0, 2.0], [1.0, 2.0], [0.0, 1.0], [0.0, 0.0])
    with pytest.raises(DegenerateContact):
        contact_speed([1e-9, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 0.0], c0=1e-8)
    clamped = contact_speed([1e-9, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 0.0], c0=1e-8, clamp=True)
    assert clamped == pytest.approx(-1e-9 / (0.25e-16))


@given(vec, vec)
def test_contact_mu_unit_and_orthogonal(ui_x, ui_t):
    sys = shallow_water_zq(G, 1.0)
    u = np.array([0.1, 0.2])
    v = ui_t + sys.A(u) @ ui_x
    if np.linalg.norm(v) < 1e-6:
        with pytest.raises(DegenerateContact):
            contact_mu(sys, u, ui_x, ui_t, tiny=1e-6)
        return
    mu = contact_mu(sys, u, ui_x, ui_t)
    assert np.linalg.norm(mu) == pytest.approx(1.0, abs=1e-14)
    assert abs(mu @ v) <= 1e-12 * np.linalg.norm(v)


def test_second_order_data_at_rest():
    sys = shallow_water_zq(G, 1.0)
    z = np.zeros(2)
    sod = second_order_data(sys, z, z, 0.0, [-0.3, 0.1], z, z, z, u_xx=z)
    assert np.allclose(sod.u2, 0.0) and np.allclose(sod.g1, 0.0)
    assert sod.chi2 == 0.0 and sod.g2 == 0.0
    assert np.allclose(sod.nu2, perp(np.array([0.3, -0.1])))


@given(vec, vec, vec)
def test_second_order_normal_reduces_to_perp_for_still_front(u_x, ui_x, u_xx):
    sys = shallow_water_zq(G, 1.0)
    d = u_x - ui_x
    if d @ d < 1e-6:
        return
    sod = second_order_data(sys, np.array([0.05, 0.1]), u_x, 0.0, ui_x, u_xx, u_xx, u_xx, u_xx=u_xx)
    assert np.allclose(sod.nu2, perp(d), atol=1e-14)


def test_second_order_data_needs_invertible_A_and_u2_source():
    sing = System2x2(A=lambda u: np.array([[1.0, 0.0], [0.0, 0.0]]))
    z = np.zeros(2)
    with pytest.raises(SingularA):
        second_order_data(sing, z, [1.0, 0.0], 0.0, z, z, z, z, u_xx=z)
    with pytest.raises(ValueError):
        second_order_data(shallow_water_zq(G, 1.0), z, [1.0, 0.0], 0.0, z, z, z, z)


@given(vec, vec, st.floats(-1.5, 1.5))
def test_rel1_vanishes_for_consistent_data(d, ui_x, xdot):
    sys = shallow_water_zq(G, 1.0)
    u = np.array([0.0, 0.3])
    A = sys.A(u)
    ui_t = (xdot * np.eye(2) - A) @ d - A @ ui_x
    assert rel1_residual(sys, u, d, xdot, ui_x, ui_t) <= 1e-12 * (1 + np.abs(ui_t).max())
    assert rel1_residual(sys, u, d, xdot, ui_x, ui_t + [1e-3, 0.0]) == pytest.approx(1e-3, rel=1e-6)


@pytest.mark.parametrize("speed,ok", [(0.0, True), (2.9, True), (3.2, False), (-3.2, False)])
def test_check_subsonic(speed, ok):
    sys = shallow_water_zq(G, 1.0)
    if ok:
        check_subsonic(sys, np.zeros(2), speed)
    else:
        with pytest.raises(SubsonicityLoss):
            check_subsonic(sys, np.zeros(2), speed)


def test_space_time_jet_of_quadratic():
    jet = space_time_jet(lambda t, x: np.array([t * t + 3 * t * x, x * x - t]), 0.5, 0.2)
    assert np.allclose(jet["ui"], [0.25 + 0.3, 0.04 - 0.5])
    assert np.allclose(jet["ui_t"], [1.0 + 0.6, -1.0], atol=1e-10)
    assert np.allclose(jet["ui_x"], [1.5, 0.4], atol=1e-10)
    assert np.allclose(jet["ui_tt"], [2.0, 0.0], atol=1e-8)
    assert np.allclose(jet["ui_xx"], [0.0, 2.0], atol=1e-8)
    assert np.allclose(jet["ui_tx"], [3.0, 0.0], atol=1e-8)


def test_kinematic_advance_is_trapezoidal():
    front = kinematic_advance(FrontState(1.0), lambda u: u[1], [0.0, 1.0], [0.0, 3.0], 0.1)
    assert front.xbar == pytest.approx(1.2)
    assert front.xbar_dot == 3.0


def _rest_canal(kind, n=60, eps=0.0):
    sys = shallow_water_zv(G, 1.0)
    grid = MovingGrid.uniform(0.0, 2.0, n, kind=kind, epsilon=eps, front_anchor=0.0)
    return SolverState(sys, grid, np.zeros((n, 2)))


def test_kinematic_front_at_rest_stays():
    st_ = _rest_canal("lagrangian")
    prob = KinematicProblem(lambda u: float(u[1]), LinearNu([0.0, 1.0], 0.0))
    sim = Simulation(prob, [st_], y=np.array([0.0]))
    sim.run(0.2)
    assert sim.y[0] == 0.0
    assert np.array_equal(st_.faces, st_.grid.reference_nodes)


@pytest.mark.parametrize("c", [0.05, -0.08])
def test_kinematic_constant_law_moves_linearly(c):
    eps = 0.9
    st_ = _rest_canal("cutoff", eps=eps)
    prob = KinematicProblem(lambda u: c, LinearNu([0.0, 1.0], c), grid="cutoff").attach(st_, eps)
    sim = Simulation(prob, [st_], y=np.array([0.0]))
    sim.run(0.4)
    assert sim.y[0] == pytest.approx(c * 0.4, abs=1e-14)
    assert st_.grid.front_position() == pytest.approx(c * 0.4, abs=1e-14)


def _contact_setup(second_order, n=200):
    sys = shallow_water_zq(G, 1.0)
    grid = MovingGrid.uniform(0.0, 2.0, n, kind="cutoff", epsilon=0.9, front_anchor=0.0)

    def init(x):
        return np.stack([0.05 * x, np.zeros_like(x)], axis=-1)

    def U_i(t, x):
        return np.array([0.0, -0.4905 * t])

    st_ = SolverState(sys, grid, cell_averages(init, grid.phi))
    prob = ContactProblem(U_i, side="right", second_order=second_order).attach(st_)
    xs = np.linspace(0.0, 2.0, 2001)
    x1, _ = initial_front_velocity(ContactData(sys, xs, init(xs), U_i=U_i))
    return Simulation(prob, [st_], y=prob.initial_y(0.0, x1)), x1


def test_contact_modes_agree_to_second_order_in_dt():
    gaps = []
    for n in (50, 100, 200):
        first, x1 = _contact_setup(False, n)
        second, _ = _contact_setup(True, n)
        assert x1 == pytest.approx(0.0, abs=1e-8)
        first.run(0.05)
        try:
            second.run(0.05)
            gap = abs(first.y[0] - second.y[0])
        except SubsonicityLoss:
            gap = np.inf
        gaps.append((n, 0.05 / first.steps, gap))
        assert first.problem.diagnostics[-1]["rel1"] <= 1e-10
    assert abs(first.y[0]) > 1e-4
    # unit-scale problem, so the O(dt^2) constant is taken as 1
    assert all(gap <= dt**2 for _, dt, gap in gaps), gaps


def test_second_order_data_on_exact_moving_front():
    # exact linear solution; U_i agrees with u on x = X(t) = 0.3 t + 0.5 t^2
    sys = linearized_shallow_water(G, 1.0)
    c = np.sqrt(G)
    rp, rm = np.array([1.0, c]), np.array([1.0, -c])

    def u(t, x):
        return (0.1 * np.sin(x - c * t) + 0.05 * (x - c * t) ** 2) * rp + 0.07 * np.cos(2 * (x + c * t)) * rm

    m = np.array([0.3, -0.2])

    def U_i(t, x):
        return u(t, x) + (x - 0.3 * t - 0.5 * t * t) * m

    uj, ij = space_time_jet(u, 0.0, 0.0), space_time_jet(U_i, 0.0, 0.0)
    chi = contact_speed(uj["ui_x"], ij["ui_x"], uj["ui_t"], ij["ui_t"])
    assert chi == pytest.approx(0.3, abs=1e-10)
    sod = second_order_data(sys, uj["ui"], uj["ui_x"], chi, ij["ui_x"], ij["ui_tt"], ij["ui_tx"], ij["ui_xx"],
                            u_xx=uj["ui_xx"])
    assert sod.chi2 == pytest.approx(1.0, abs=1e-4)


def test_contact_advance_reports_front():
    sim, _ = _contact_setup(False, n=100)
    front, trace = contact_advance(sim)
    assert front.mode == "contact"
    assert np.linalg.norm(front.mu) == pytest.approx(1.0)
    assert np.allclose(trace.u_i, front.traces["u_b"])
