import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import G, subcritical_state
from fronttrack.errors import (
    NewtonDivergence,
    NotStrictlyHyperbolic,
    SingularLopatinski,
    ValidationError,
    WrongCharacteristicCount,
    ZeroJump,
)
from fronttrack.transmission import (
    InterfaceProblem,
    Regime,
    ShockClosure,
    ShockProblem,
    TransmissionProblem,
    assemble_block,
    block_modes,
    arriving_from_speeds,
    classify_speeds,
    conserved_total,
    far_flux_balance,
    hugoniot_partner,
    interface_traces,
    linear_kinetic_relation,
    lopatinskii_matrix,
    rh_gradients,
    rh_speed_and_residual,
    shock_advance,
    shock_lopatinskii_closed_form,
    shock_transmission,
    stationary_partner,
    step_topography,
    two_sided_simulation,
)
from fronttrack.systems import perp, shallow_water_zq

SW = shallow_water_zq(G, 1.0, subcritical_only=False)
depths = st.floats(0.5, 2.0)
froudes = st.floats(-0.8, 0.8)


def _constant(u):
    u = np.asarray(u, dtype=float)
    return lambda x: np.broadcast_to(u, np.shape(x) + (2,)).copy()


def _bore():
    u_r = np.zeros(2)
    return hugoniot_partner(SW, u_r, 0.2, (0.0, 2.0), given="right"), u_r


@given(depths, froudes, depths, froudes)
def test_rh_split_reconstructs_flux_jump(h1, f1, h2, f2):
    u_l, u_r = subcritical_state(h1, f1), subcritical_state(h2, f2)
    j0 = u_r - u_l
    if np.linalg.norm(j0) < 1e-6:
        return
    chi, phi = rh_speed_and_residual(None, SW.f, u_l, u_r)
    jf = SW.f(u_r) - SW.f(u_l)
    rebuilt = (chi * j0 + phi * perp(j0) / (j0 @ j0))
    assert np.max(np.abs(rebuilt - jf)) <= 1e-14 * (1 + np.max(np.abs(jf)))


def test_zero_jump_raises():
    u = np.array([0.1, 0.2])
    with pytest.raises(ZeroJump):
        rh_speed_and_residual(None, SW.f, u, u)
    with pytest.raises(ZeroJump):
        rh_gradients(SW, u, u)


@pytest.mark.parametrize("w", [-1.0, 0.3, 2.0])
def test_hugoniot_pairs_are_galilean_invariant(w):
    u_l, u_r = _bore()
    chi = ShockClosure(SW).chi(u_l, u_r)

    def shift(u):
        return np.array([u[0], u[1] + w * (1.0 + u[0])])

    chi_w, phi_w = rh_speed_and_residual(None, SW.f, shift(u_l), shift(u_r))
    assert chi_w == pytest.approx(chi + w, abs=1e-12)
    assert abs(phi_w) <= 1e-11


def _count_oracle(lp_l, lm_l, lp_r, lm_r, chi):
    """Regime from the number of eigenvalues above the front speed on each side."""
    vals_l, vals_r = (lp_l, -lm_l), (lp_r, -lm_r)
    if chi in vals_l or chi in vals_r:
        return Regime.UNCLASSIFIED
    above = (sum(v > chi for v in vals_l), sum(v > chi for v in vals_r))
    return {(1, 1): Regime.SUBSONIC, (1, 0): Regime.LAX_RIGHT, (2, 1): Regime.LAX_LEFT}.get(
        above, Regime.UNCLASSIFIED)


ordered_pair = st.tuples(st.floats(-3, 3), st.floats(-3, 3)).filter(lambda p: p[0] != p[1]).map(
    lambda p: (max(p), -min(p)))


@given(ordered_pair, ordered_pair, st.floats(-4, 4))
def test_classifier_matches_counting_oracle(left, right, chi):
    assert classify_speeds(*left, *right, chi) is _count_oracle(*left, *right, chi)


@pytest.mark.parametrize("tup", [(1.0, -2.0, 1.0, 1.0), (1.0, 1.0, -0.5, 0.5), (0.0, 0.0, 1.0, 1.0)])
def test_unordered_speed_tuples_raise(tup):
    with pytest.raises(NotStrictlyHyperbolic):
        classify_speeds(*tup, 0.0)


@given(depths, froudes, depths, froudes)
def test_rh_gradients_match_finite_differences(h1, f1, h2, f2):
    u_l, u_r = subcritical_state(h1, f1), subcritical_state(h2, f2)
    if np.linalg.norm(u_r - u_l) < 1e-2:
        return
    grads = rh_gradients(SW, u_l, u_r)
    h = 1e-6
    for key, idx in (("l", 0), ("r", 1)):
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            pair_p = [u_l, u_r]
            pair_m = [u_l, u_r]
            pair_p[idx] = pair_p[idx] + e
            pair_m[idx] = pair_m[idx] - e
            cp, pp = rh_speed_and_residual(None, SW.f, *pair_p)
            cm, pm = rh_speed_and_residual(None, SW.f, *pair_m)
            scale = 1 + abs(pp) + abs(grads["Phi_" + key][k])
            assert grads["Phi_" + key][k] == pytest.approx((pp - pm) / (2 * h), abs=1e-6 * scale)
            scale = 1 + abs(grads["chi_" + key][k])
            assert grads["chi_" + key][k] == pytest.approx((cp - cm) / (2 * h), abs=1e-5 * scale)


def test_lax_shock_closed_form_equals_lopatinskii_matrix():
    u_l, u_r = _bore()
    closure = ShockClosure(SW)
    chi = closure.chi(u_l, u_r)
    rep = lopatinskii_matrix(shock_transmission(closure, u_l, u_r), u_l, u_r, chi)
    assert rep.regime is Regime.LAX_RIGHT and rep.p == 1
    closed = shock_lopatinskii_closed_form(SW, u_l, u_r, Regime.LAX_RIGHT)
    assert abs(rep.L[0, 0]) == pytest.approx(abs(closed), rel=1e-9)
    assert abs(closed) > 1e-3


@given(depths, froudes, depths, froudes, st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_block_symmetrizer_is_dissipative(h1, f1, h2, f2, v):
    tp = step_topography(G, 1.0, 0.5)
    u_l, u_r = subcritical_state(h1, f1, 1.0), subcritical_state(h2, f2, 0.5)
    blk = assemble_block(tp, u_l, u_r)
    assert blk.symmetry_defect <= 1e-10 * np.abs(blk.S).max() * np.abs(blk.A).max()
    assert blk.alpha1 > 0
    v = np.asarray(v)
    assert blk.dissipation_margin(v) >= -1e-10 * (1 + v @ v) * blk.beta1
    for k in blk.kernel.T:
        assert np.allclose(blk.N @ k, 0.0, atol=1e-10)


@given(st.floats(-0.25, 0.25), st.floats(-0.6, 0.6), st.lists(st.floats(-0.05, 0.05), min_size=4, max_size=4))
def test_interface_newton_converges_fast(zeta, fr, noise):
    tp = step_topography(G, 1.0, 0.5)
    # a consistent interface state, subcritical on the shallow side, plus trace noise
    star = subcritical_state(0.5 + zeta, fr, 0.5)
    ext_l, ext_r = star + noise[:2], star + noise[2:]
    arr_l, arr_r = arriving_from_speeds(block_modes(tp.left_sys, tp.right_sys, ext_l, ext_r))
    sol = interface_traces(tp.left_sys, tp.right_sys, tp.residual, ext_l, ext_r, arr_l, arr_r)
    assert sol.iterations <= 10
    assert np.allclose(sol.u_l, sol.u_r, atol=1e-12)


def test_interface_newton_reports_missing_state():
    import warnings

    tp = step_topography(G, 1.0, 0.5)
    ext_l, ext_r = subcritical_state(1.0, -0.75, 1.0), np.array([0.5, 0.0])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        with pytest.raises(NewtonDivergence, match="admissible"):
            interface_traces(tp.left_sys, tp.right_sys, tp.residual, ext_l, ext_r, (0,), (1,))


def test_partners_lie_on_the_hugoniot_locus():
    u_l, u_r = _bore()
    assert abs(ShockClosure(SW).Phi(u_l, u_r)) <= 1e-12
    ul = np.array([-0.5, 0.5 * 2.0 * np.sqrt(G * 0.5)])
    ur = stationary_partner(SW, ul, [0.2, ul[1]])
    assert np.allclose(SW.f(ur), SW.f(ul), atol=1e-13)
    assert not np.allclose(ur, ul)


def test_subsonic_front_needs_kinetic_relation():
    with pytest.raises(WrongCharacteristicCount):
        ShockProblem(ShockClosure(SW), Regime.SUBSONIC)
    Psi, grad = linear_kinetic_relation([1.0, 0.0], [-1.0, 0.0], 0.1)
    closure = ShockClosure(SW, Psi, grad)
    assert closure.p == 2
    ShockProblem(closure, Regime.SUBSONIC)
    with pytest.raises(WrongCharacteristicCount):
        ShockProblem(closure, Regime.LAX_RIGHT)


def test_transmission_problem_validation():
    with pytest.raises(ValidationError):
        TransmissionProblem(SW, SW, np.eye(2), np.ones((1, 2)))
    with pytest.raises(ValidationError):
        TransmissionProblem(SW, SW, np.eye(2), np.eye(2), p=1)
    tp = TransmissionProblem(SW, SW, [[1.0, 0.0], [2.0, 0.0]], [[1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(SingularLopatinski):
        lopatinskii_matrix(tp, np.zeros(2), np.zeros(2))
    one_row = TransmissionProblem(SW, SW, [[1.0, 0.0]], [[1.0, 0.0]])
    with pytest.raises(WrongCharacteristicCount):
        lopatinskii_matrix(one_row, np.zeros(2), np.zeros(2))


def test_step_topography_keeps_rest_and_conserves_mass():
    tp = step_topography(G, 1.0, 0.5)
    rest = two_sided_simulation(InterfaceProblem(tp), tp.left_sys, tp.right_sys, -1.0, 0.0, 1.0, 40, 40,
                                _constant([0.0, 0.0]), _constant([0.0, 0.0]))
    rest.sim.run(0.2)
    assert np.all(rest.left.u == 0.0) and np.all(rest.right.u == 0.0)

    def pulse(x):
        z = 0.02 * np.exp(-((x + 0.5) / 0.15) ** 2)
        return np.stack([z, np.sqrt(G) * z], axis=-1)

    setup = two_sided_simulation(InterfaceProblem(tp), tp.left_sys, tp.right_sys, -1.0, 0.0, 1.0, 80, 80,
                                 pulse, _constant([0.0, 0.0]))
    total0 = conserved_total(setup.sim)
    setup.sim.run(0.3)
    defect = conserved_total(setup.sim) - total0 - far_flux_balance(setup.sim)
    assert abs(defect[0]) <= 1e-13
    assert np.max(np.abs(setup.right.u[:, 0])) > 1e-4


def test_shock_advance_moves_bore_at_rh_speed():
    u_l, u_r = _bore()
    closure = ShockClosure(SW)
    chi = closure.chi(u_l, u_r)
    setup = two_sided_simulation(ShockProblem(closure), SW, SW, -4.0, 0.0, 4.0, 80, 80,
                                 _constant(u_l), _constant(u_r))
    front = shock_advance(setup.sim)
    assert front.regime == "lax_right"
    assert front.xbar_dot == pytest.approx(chi, rel=1e-10)
    assert front.xbar == pytest.approx(chi * setup.sim.t, rel=1e-10)


def test_kinetic_closure_newton_matches_generic_root_finder():
    from scipy.optimize import fsolve

    u_l0, u_r0 = _bore()
    Psi, grad = linear_kinetic_relation([1.0, 0.0], [-1.0, 0.0], u_l0[0] - u_r0[0])
    closure = ShockClosure(SW, Psi, grad)
    ext_l, ext_r = u_l0 + [0.01, -0.02], u_r0 + [-0.005, 0.01]
    sol = interface_traces(SW, SW, closure.residual, ext_l, ext_r, (0,), (1,))

    def w_plus(u):
        h = 1.0 + u[0]
        return 2 * np.sqrt(G * h) + u[1] / h

    def w_minus(u):
        h = 1.0 + u[0]
        return 2 * np.sqrt(G * h) - u[1] / h

    def equations(w):
        ul, ur = w[:2], w[2:]
        jf, j0 = SW.f(ur) - SW.f(ul), ur - ul
        return [jf[0] * j0[1] - jf[1] * j0[0], Psi(ul, ur),
                w_plus(ul) - w_plus(ext_l), w_minus(ur) - w_minus(ext_r)]

    ref = fsolve(equations, np.concatenate([ext_l, ext_r]), xtol=1e-14)
    assert np.max(np.abs(equations(ref))) <= 1e-11
    assert np.allclose(np.concatenate([sol.u_l, sol.u_r]), ref, atol=1e-10)
    assert sol.iterations <= 10
