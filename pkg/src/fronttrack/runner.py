"""Run orchestration: build a family simulation, sample it, write the series."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import FrontTrackError, ValidationError
from .scenario import Scenario

RECORD_FORMAT = 1


@dataclass
class RunRecord:
    """Sampled series plus flags; ``status`` is ``ok`` or the error class name."""

    columns: list[str]
    rows: list[list] = field(default_factory=list)
    flags: list[dict] = field(default_factory=list)
    status: str = "ok"
    exit_code: int = 0
    steps: int = 0
    final_time: float = 0.0
    scenario: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        k = self.columns.index(name)
        return [row[k] for row in self.rows]


# ---------------------------------------------------------------------------
# initial data


def _wave_factor(system: str, g: float, h0: float) -> float:
    """Second component per unit elevation of a right-going linear wave."""
    if system == "sw_zv":
        return math.sqrt(g / h0)
    return math.sqrt(g * h0)


def initial_profile(init: dict, system: str, g: float, h0: float) -> Callable:
    """Vectorized ``u(x) -> (..., 2)`` for the ``[initial]`` table."""
    kind = init["kind"]
    if kind == "rest":
        return lambda x: np.zeros(np.shape(x) + (2,))
    if kind == "constant":
        val = np.asarray(init["value"], dtype=float)
        return lambda x: np.broadcast_to(val, np.shape(x) + (2,)).copy()
    if kind == "gaussian":
        amp, c, w = float(init["amplitude"]), float(init["center"]), float(init["width"])
        sign = {"right": 1.0, "left": -1.0, "none": 0.0}[init["direction"]]
        k = sign * _wave_factor(system, g, h0)

        def gauss(x):
            z = amp * np.exp(-(((np.asarray(x, dtype=float) - c) / w) ** 2))
            return np.stack([z, k * z], axis=-1)

        return gauss
    if kind == "tabulated":
        xs = np.asarray(init["x"], dtype=float)
        u0 = np.asarray(init["u0"], dtype=float)
        u1 = np.asarray(init["u1"], dtype=float)
        return lambda x: np.stack([np.interp(x, xs, u0), np.interp(x, xs, u1)], axis=-1)
    raise ValidationError(f"initial kind {kind} is not available here")


def _nodes(a: float, b: float, cells: int, side: str = "left", n: int = 9) -> np.ndarray:
    h = (b - a) / cells
    return a + h * np.arange(n) if side == "left" else b - h * np.arange(n)[::-1]


# ---------------------------------------------------------------------------
# family builders; each returns (sim, sampler, finalize)


def _system(name: str, g: float, h0: float):
    from .systems import linearized_shallow_water, shallow_water_zq, shallow_water_zv

    return {"sw_zq": shallow_water_zq, "sw_zv": shallow_water_zv,
            "linear_sw": linearized_shallow_water}[name](g, h0)


def _closure(bc: dict):
    from .solver import LinearNu, Transparent

    if bc["type"] == "transparent":
        return Transparent()
    return LinearNu(tuple(bc["nu"]), float(bc["value"]))


def _ibvp(sc: Scenario):
    from .solver import IBVPProblem, make_state

    p = sc.physics
    sys = _system(p["system"], p["g"], p["h0"])
    a, b = p["domain"]
    fn = initial_profile(sc.initial, p["system"], p["g"], p["h0"])
    st = make_state(sys, a, b, sc.numerics.cells, fn, cfl=sc.numerics.cfl)
    from .solver import Simulation

    closures = (_closure(p["left"]), _closure(p["right"]))
    sim = Simulation(IBVPProblem([closures]), [st], cfl=sc.numerics.cfl)
    mass0 = float(st.conserved()[:, 0].sum())
    snapshots = {"t": [0.0], "u": [st.u.copy()]}

    def sample(sim):
        lb, rb = sim.last_stages[-1].boundary[0]
        s = sim.states[0]
        snapshots["t"].append(sim.t)
        snapshots["u"].append(s.u.copy())
        inflow = sim.flux_integrals[0][0][0] - sim.flux_integrals[0][1][0]
        return {"u_left0": lb[0], "u_left1": lb[1], "u_right0": rb[0], "u_right1": rb[1],
                "mass": float(s.conserved()[:, 0].sum()), "mass_defect": float(s.conserved()[:, 0].sum()) - mass0 - inflow}

    def finalize(record):
        if sc.numerics.dt is None or len(snapshots["t"]) < 2:
            return
        from .hypcore import weighted_norms

        rep = weighted_norms(snapshots["t"], np.asarray(snapshots["u"]), (b - a) / sc.numerics.cells, gamma=1.0)
        record.reports["weighted_norm"] = {"gamma": rep.gamma, "sup_norm": rep.sup_norm,
                                           "integral_norm": rep.integral_norm, "trace_norm": rep.trace_norm}

    return sim, sample, finalize


def _kinematic_law(p: dict):
    if p["law"] == "fluid_velocity":
        return lambda u: float(u[1])
    c = p["law_coefficients"]
    return lambda u: float(c[0] + c[1] * u[0] + c[2] * u[1])


def _kinematic(sc: Scenario):
    from .frontdrive import KinematicProblem
    from .grid import MovingGrid
    from .solver import LinearNu, Simulation, SolverState, cell_averages
    from .systems import shallow_water_zv

    p, nm = sc.physics, sc.numerics
    sys = shallow_water_zv(p["g"], p["h0"])
    a = p["xbar0"]
    b = a + p["length"]
    fn = initial_profile(sc.initial, "sw_zv", p["g"], p["h0"])
    law = _kinematic_law(p)
    if p["law"] == "fluid_velocity":
        grid = MovingGrid.uniform(a, b, nm.cells, kind="lagrangian", front_anchor=a)
        prob = KinematicProblem(law, LinearNu(tuple(p["nu"]), p["value"]), grid="lagrangian")
    else:
        eps = nm.cutoff_epsilon or 0.45 * p["length"]
        grid = MovingGrid.uniform(a, b, nm.cells, kind="cutoff", epsilon=eps, front_anchor=a)
        prob = KinematicProblem(law, LinearNu(tuple(p["nu"]), p["value"]), grid="cutoff")
    st = SolverState(sys, grid, cell_averages(fn, grid.phi), cfl=nm.cfl, name="canal")
    prob.attach(st, grid.epsilon)
    sim = Simulation(prob, [st], y=np.array([a]), cfl=nm.cfl)

    def sample(sim):
        info = sim.last_stages[-1].info
        return {"xbar": float(sim.y[0]), "xdot": info["xdot"], "u_b0": info["u_b"][0], "u_b1": info["u_b"][1]}

    return sim, sample, None


def _affine_interior(p: dict):
    base = np.asarray(p["ui_base"], dtype=float)
    dx = np.asarray(p["ui_dx"], dtype=float)
    dt = np.asarray(p["ui_dt"], dtype=float)

    def U_i(t, x):
        return base + dx * x + dt * t

    return U_i


def _contact(sc: Scenario):
    from .frontdrive import ContactProblem
    from .grid import MovingGrid
    from .solver import Simulation, SolverState, cell_averages
    from .systems import shallow_water_zq

    p, nm = sc.physics, sc.numerics
    sys = shallow_water_zq(p["g"], p["h0"])
    a = p["xbar0"]
    b = a + p["length"]
    eps = nm.cutoff_epsilon or 0.45 * p["length"]
    grid = MovingGrid.uniform(a, b, nm.cells, kind="cutoff", epsilon=eps, front_anchor=a)
    fn = initial_profile(sc.initial, "sw_zq", p["g"], p["h0"])
    st = SolverState(sys, grid, cell_averages(fn, grid.phi), cfl=nm.cfl, name="canal")
    prob = ContactProblem(_affine_interior(p), side="right").attach(st)
    sim = Simulation(prob, [st], y=prob.initial_y(a), cfl=nm.cfl)

    def sample(sim):
        d = dict(prob.diagnostics[-1])
        ub = sim.last_stages[-1].info["u_b"]
        d.update({"u_b0": ub[0], "u_b1": ub[1]})
        return d

    return sim, sample, None


def _transmission(sc: Scenario):
    from .transmission import InterfaceProblem, conserved_total, far_flux_balance, step_topography, two_sided_simulation

    p, nm = sc.physics, sc.numerics
    tp = step_topography(p["g"], p["h0_left"], p["h0_right"])
    a, x, b = p["domain"]
    fl = initial_profile(sc.initial, "sw_zq", p["g"], p["h0_left"])
    fr = initial_profile(sc.initial, "sw_zq", p["g"], p["h0_right"])
    n_l, n_r = _split_cells(nm.cells, x - a, b - x)
    setup = two_sided_simulation(InterfaceProblem(tp), tp.left_sys, tp.right_sys, a, x, b, n_l, n_r,
                                 fl, fr, epsilon=nm.cutoff_epsilon, cfl=nm.cfl)
    sim = setup.sim
    total0 = conserved_total(sim)

    def sample(sim):
        d = dict(sim.problem.diagnostics[-1])
        d["mass_defect"] = float((conserved_total(sim) - total0 - far_flux_balance(sim))[0])
        return d

    return sim, sample, None


def _split_cells(cells: int, left_len: float, right_len: float) -> tuple[int, int]:
    n_l = max(8, int(round(cells * left_len / (left_len + right_len))))
    return n_l, max(8, cells - n_l)


def shock_states(p: dict):
    """``(sys, u_left, u_right)`` for a Shock scenario, completing Hugoniot partners."""
    from .systems import shallow_water_zq
    from .transmission import hugoniot_partner, stationary_partner

    sys = shallow_water_zq(p["g"], p["h0"], subcritical_only=False)
    if p["partner"] == "stationary":
        u_l = np.asarray(p["u_left"], dtype=float)
        h_l = p["h0"] + u_l[0]
        # conjugate depth of a hydraulic jump as the Newton start
        fr2 = u_l[1] ** 2 / (p["g"] * h_l**3)
        h_r = 0.5 * h_l * (math.sqrt(1 + 8 * fr2) - 1)
        u_r = stationary_partner(sys, u_l, [h_r - p["h0"], u_l[1]])
    elif p["partner"] == "hugoniot":
        u_r = np.asarray(p["u_right"], dtype=float)
        u_l = hugoniot_partner(sys, u_r, p["zeta_left"], tuple(p["q_bracket"]), given="right")
    else:
        u_l = np.asarray(p["u_left"], dtype=float)
        u_r = np.asarray(p["u_right"], dtype=float)
    return sys, u_l, u_r


def _shock(sc: Scenario):
    from .transmission import Regime, ShockClosure, ShockProblem, two_sided_simulation

    p, nm = sc.physics, sc.numerics
    sys, u_l, u_r = shock_states(p)
    sc.derived.update({"u_left": u_l.tolist(), "u_right": u_r.tolist()})
    closure = ShockClosure(sys)
    sc.derived["chi0"] = closure.chi(u_l, u_r)
    regime = None if p["regime"] is None else Regime(p["regime"])
    a, x, b = p["domain"]
    n_l, n_r = _split_cells(nm.cells, x - a, b - x)
    prob = ShockProblem(closure, regime)
    setup = two_sided_simulation(prob, sys, sys, a, x, b, n_l, n_r,
                                 lambda s: np.broadcast_to(u_l, np.shape(s) + (2,)).copy(),
                                 lambda s: np.broadcast_to(u_r, np.shape(s) + (2,)).copy(),
                                 epsilon=nm.cutoff_epsilon, cfl=nm.cfl)

    def sample(sim):
        return dict(sim.problem.diagnostics[-1])

    return setup.sim, sample, None


def _piston_scenario(p: dict):
    from .piston import PistonScenario

    return PistonScenario(p["m_mass"], p["k_spring"], p["rho"], p["g"], p["h0"], p["x0"], p["xbar0"],
                          p["xdot0"], float(p["hydrostatic_sign"]))


def _piston_profile(sc: Scenario, ps) -> Callable:
    from .compat import piston_compatible_profile

    p = sc.physics
    if sc.initial["kind"] == "piston_compatible":
        prof = piston_compatible_profile(p["g"], p["h0"], p["rho"], p["m_mass"], p["k_spring"], ps.x_eq,
                                         ps.xbar0, float(sc.initial["amplitude"]), ps.xdot0,
                                         float(sc.initial["width"]))
        return lambda x: prof(np.asarray(x, dtype=float) - ps.xbar0)
    return initial_profile(sc.initial, "sw_zv", p["g"], p["h0"])


def _piston(sc: Scenario):
    from .piston import piston_simulation

    p, nm = sc.physics, sc.numerics
    ps = _piston_scenario(p)
    sim, prob = piston_simulation(ps, p["length"], nm.cells, _piston_profile(sc, ps), cfl=nm.cfl,
                                  zeta_b_override=p["zeta_b_override"])

    def sample(sim):
        return dict(prob.diagnostics[-1])

    return sim, sample, None


def floating_scenario(p: dict):
    """:class:`FloatingBodyScenario` from a physics table (contacts default to lid crossings of 0)."""
    from dataclasses import replace

    from .floating import FixedBody, FloatingBodyScenario, FreeMotion, Lid, PrescribedMotion, RigidBodyState, archimedean_mass

    lid_t = dict(p["lid"])
    fam = lid_t.pop("family")
    try:
        if fam == "flat":
            lid = Lid.flat(float(lid_t["level"]), tuple(lid_t["interval"]))
        elif fam == "parabolic":
            lid = Lid.parabolic(float(lid_t["center"]), float(lid_t["draft"]), float(lid_t["curvature"]),
                                tuple(lid_t["interval"]))
        elif fam == "cosine":
            lid = Lid.cosine(float(lid_t["center"]), float(lid_t["draft"]), float(lid_t["half_width"]),
                             tuple(lid_t["interval"]))
        else:
            lid = Lid.tabulated(lid_t["x"], lid_t["z"])
    except KeyError as exc:
        raise ValidationError(f"physics.lid is missing the key {exc.args[0]!r}") from None
    if p["contacts"] is not None:
        xm, xp = p["contacts"]
    else:
        cr = lid.crossings(0.0)
        if len(cr) != 2:
            raise ValidationError(f"lid crosses the still-water level {len(cr)} times; give physics.contacts")
        xm, xp = cr
    x_G = 0.5 * (xm + xp) if p["x_G"] is None else float(p["x_G"])
    body = RigidBodyState(q_bar=float(p["q_bar"]), x_G=x_G, z_G=float(p["z_G"]))
    sc = FloatingBodyScenario(lid, xm, xp, FixedBody(), p["g"], p["h0"], p["rho"], p["p_atm"], body,
                              int(p["n_interior"]))
    derived = {"x_minus0": xm, "x_plus0": xp}
    if p["mode"] == "prescribed":
        motion = PrescribedMotion.heave(x_G, body.z_G, float(p["heave_amplitude"]), float(p["heave_frequency"]))
        sc = replace(sc, mode=motion)
    elif p["mode"] == "free":
        mass = archimedean_mass(sc) if p["mass"] == "archimedean" else float(p["mass"])
        inertia = float(p["inertia"]) if p["inertia"] is not None else float(p["inertia_ratio"]) * mass
        sc = replace(sc, mode=FreeMotion(mass, inertia))
        derived.update({"mass": mass, "inertia": inertia})
    return sc, derived


def _floating(sc: Scenario):
    from .floating import floating_simulation

    p, nm = sc.physics, sc.numerics
    fsc, derived = floating_scenario(p)
    sc.derived.update(derived)
    a, b = p["domain"]
    n_l, n_r = _split_cells(nm.cells, fsc.x_minus - a, b - fsc.x_plus)
    fn = initial_profile(sc.initial, "sw_zq", p["g"], p["h0"])
    sim, prob = floating_simulation(fsc, a, b, n_l, n_r, fn, epsilon=nm.cutoff_epsilon, cfl=nm.cfl)

    def sample(sim):
        return dict(prob.diagnostics[-1])

    return sim, sample, None


BUILDERS = {"IBVP": _ibvp, "KinematicFB": _kinematic, "ContactFB": _contact, "Transmission": _transmission,
            "Shock": _shock, "Piston": _piston, "FloatingBody": _floating}


# ---------------------------------------------------------------------------
# compatibility


def compatibility_residuals(sc: Scenario) -> dict:
    """Corner residuals of the initial data, by order (empty when no corner condition applies)."""
    from .compat import ContactData, IBVPData, KinematicData, PistonData, check_compatibility

    p, nm = sc.physics, sc.numerics
    fam = sc.family
    res: list[float] = []
    if fam == "IBVP":
        sys = _system(p["system"], p["g"], p["h0"])
        a, b = p["domain"]
        fn = initial_profile(sc.initial, p["system"], p["g"], p["h0"])
        per_side = []
        for side in ("left", "right"):
            if p[side]["type"] == "linear":
                x = _nodes(a, b, nm.cells, side)
                rep = check_compatibility(IBVPData(sys, x, fn(x), _closure(p[side]), side=side), 1)
                per_side.append(rep.residuals)
        if per_side:
            res = [max(abs(r[k]) for r in per_side) for k in range(2)]
    elif fam == "KinematicFB":
        from .solver import LinearNu
        from .systems import shallow_water_zv

        sys = shallow_water_zv(p["g"], p["h0"])
        x = _nodes(p["xbar0"], p["xbar0"] + p["length"], nm.cells)
        fn = initial_profile(sc.initial, "sw_zv", p["g"], p["h0"])
        rep = check_compatibility(KinematicData(sys, x, fn(x), LinearNu(tuple(p["nu"]), p["value"]),
                                                _kinematic_law(p)), 1)
        res = list(rep.residuals)
    elif fam == "ContactFB":
        from .systems import shallow_water_zq

        sys = shallow_water_zq(p["g"], p["h0"])
        x = _nodes(p["xbar0"], p["xbar0"] + p["length"], nm.cells)
        fn = initial_profile(sc.initial, "sw_zq", p["g"], p["h0"])
        u = fn(x)
        order0 = float(np.linalg.norm(u[0] - _affine_interior(p)(0.0, x[0])))
        try:
            rep = check_compatibility(ContactData(sys, x, u, U_i=_affine_interior(p)), 1)
            res = list(rep.residuals)
        except FrontTrackError:
            # degenerate corner: only the trace identity can be evaluated
            res = [order0]
    elif fam == "Piston":
        ps = _piston_scenario(p)
        x = ps.xbar0 + _nodes(0.0, p["length"], nm.cells)
        u = _piston_profile(sc, ps)(x)
        if ps.hydrostatic_sign > 0:
            rep = check_compatibility(PistonData(x, u, p["g"], p["h0"], p["rho"], p["m_mass"], p["k_spring"],
                                                 ps.x_eq, ps.xbar0, ps.xdot0), 1)
            res = list(rep.residuals)
        else:
            res = [float(u[0, 1] - ps.xdot0)]
    elif fam == "Transmission":
        from .transmission import step_topography

        tp = step_topography(p["g"], p["h0_left"], p["h0_right"])
        x = p["domain"][1]
        fl = initial_profile(sc.initial, "sw_zq", p["g"], p["h0_left"])
        fr = initial_profile(sc.initial, "sw_zq", p["g"], p["h0_right"])
        r, _ = tp.residual(0.0, fl(np.array(x)), fr(np.array(x)))
        res = [float(np.max(np.abs(r)))]
    elif fam == "Shock":
        from .transmission import ShockClosure

        sys, u_l, u_r = shock_states(p)
        res = [abs(ShockClosure(sys).Phi(u_l, u_r))]
    elif fam == "FloatingBody":
        from .floating import interior_solve

        fsc, _ = floating_scenario(p)
        fn = initial_profile(sc.initial, "sw_zq", p["g"], p["h0"])
        field_ = interior_solve(fsc, 0.0, fsc.x_minus, fsc.x_plus, fsc.body.vector())
        u_m = fn(np.array(fsc.x_minus))
        u_p = fn(np.array(fsc.x_plus))
        Z, Q = field_.contacts["Z"], field_.contacts["Q"]
        res = [float(max(abs(u_m[0] - Z[0]), abs(u_p[0] - Z[1]), abs(u_m[1] - Q[0]), abs(u_p[1] - Q[1])))]
    return {"residuals": [float(abs(r)) for r in res], "orders": len(res)}


# ---------------------------------------------------------------------------
# running


def _flag(exc: FrontTrackError) -> dict:
    return {"t": exc.time, "flag": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}


def run(sc: Scenario) -> RunRecord:
    """Run a validated scenario to ``end_time``; errors end the run with a partial record."""
    record = RunRecord(columns=sc.columns, scenario=sc.resolved())
    nm = sc.numerics
    cadences = [(o.quantity, o.cadence) for o in sc.outputs]
    try:
        sim, sample, finalize = BUILDERS[sc.family](sc)
        while sim.t < nm.end_time - 1e-14 * max(1.0, nm.end_time):
            if sim.steps >= nm.max_steps:
                record.flags.append({"t": sim.t, "flag": "MaxSteps", "message": f"stopped after {sim.steps} steps",
                                     "exit_code": 0})
                break
            remaining = nm.end_time - sim.t
            if nm.dt is None:
                sim.step(dt_max=remaining)
            else:
                sim.step(min(nm.dt, remaining))
            due = [q for q, c in cadences if sim.steps % c == 0]
            if due:
                values = sample(sim)
                record.rows.append([sim.t] + [values[q] if q in due else "" for q, _ in cadences])
            record.steps = sim.steps
            record.final_time = sim.t
        if finalize is not None:
            finalize(record)
    except FrontTrackError as exc:
        record.flags.append(_flag(exc))
        record.status = type(exc).__name__
        record.exit_code = exc.exit_code
    record.scenario = sc.resolved()
    return record


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_timeseries(record: RunRecord, path, version: str | None = None) -> tuple[Path, Path]:
    """CSV of the record plus a ``.json`` sidecar with the scenario, flags and version."""
    from . import __version__

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(record.columns)
        for row in record.rows:
            w.writerow([_fmt(v) for v in row])
    meta = {"tool": "fronttrack", "version": version or __version__, "format": RECORD_FORMAT,
            "scenario": record.scenario, "columns": record.columns, "status": record.status,
            "exit_code": record.exit_code, "steps": record.steps, "final_time": record.final_time,
            "flags": record.flags, "reports": record.reports}
    side = path.with_suffix(".json")
    with open(side, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
    return path, side


def read_timeseries(path) -> tuple[list[str], list[list]]:
    """Header and rows of a written CSV; numeric cells parsed as float, blanks kept as ``None``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    out = []
    for row in body:
        parsed = []
        for v in row:
            if v == "":
                parsed.append(None)
                continue
            try:
                parsed.append(float(v))
            except ValueError:
                parsed.append(v)
        out.append(parsed)
    return header, out
