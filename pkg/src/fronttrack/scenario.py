"""Scenario files: TOML text to a validated :class:`Scenario`.

A scenario has a ``family`` key and the tables ``[numerics]``,
``[physics]`` (family specific), ``[initial]`` (initial data) and an
optional array ``[[outputs]]`` of ``{quantity, cadence}`` entries.
"""

from __future__ import annotations

import re
import sys
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .errors import ParseError, ValidationError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

FAMILIES = ("IBVP", "KinematicFB", "ContactFB", "Transmission", "Shock", "Piston", "FloatingBody")

QUANTITIES: dict[str, tuple[str, ...]] = {
    "IBVP": ("u_left0", "u_left1", "u_right0", "u_right1", "mass", "mass_defect"),
    "KinematicFB": ("xbar", "xdot", "u_b0", "u_b1"),
    "ContactFB": ("xbar", "xdot", "chi", "u_b0", "u_b1", "rel1", "trace_residual", "nu2_lopatinskii"),
    "Transmission": ("xbar", "chi", "phi_residual", "iterations", "u_l0", "u_l1", "u_r0", "u_r1",
                     "mass_defect"),
    "Shock": ("xbar", "chi", "phi_residual", "regime", "iterations", "u_l0", "u_l1", "u_r0", "u_r1"),
    "Piston": ("xbar", "xdot", "zeta_b", "volume"),
    "FloatingBody": ("x_minus", "x_plus", "xdot_minus", "xdot_plus", "q_bar", "x_G", "z_G", "theta",
                     "u_G", "w_G", "omega", "p_residual", "q_spread", "added_mass_min_eig",
                     "added_mass_asym", "mass", "mass_defect"),
}

MIN_CELLS = 16
COMPAT_TOL = 1e-6
REQUIRED = object()

NUMERICS = {"cells": 200, "cfl": 0.45, "end_time": REQUIRED, "cutoff_epsilon": None,
            "strict_compat": False, "dt": None, "max_steps": 10**6}

_BOUNDARY = {"type": "transparent", "nu": None, "value": 0.0}

PHYSICS: dict[str, dict[str, Any]] = {
    "IBVP": {"system": "sw_zq", "g": 9.81, "h0": 1.0, "domain": [0.0, 1.0],
             "left": None, "right": None},
    "KinematicFB": {"g": 9.81, "h0": 1.0, "xbar0": 0.0, "length": 1.0, "law": "fluid_velocity",
                    "law_coefficients": None, "nu": [0.0, 1.0], "value": 0.0},
    "ContactFB": {"g": 9.81, "h0": 1.0, "xbar0": 0.0, "length": 1.0, "ui_base": REQUIRED,
                  "ui_dx": [0.0, 0.0], "ui_dt": [0.0, 0.0]},
    "Transmission": {"g": 9.81, "h0_left": 1.0, "h0_right": 0.5, "domain": [-1.0, 0.0, 1.0]},
    "Shock": {"g": 9.81, "h0": 1.0, "domain": [-1.0, 0.0, 1.0], "u_left": None, "u_right": None,
              "partner": "none", "zeta_left": None, "q_bracket": [0.0, 5.0], "regime": None},
    "Piston": {"m_mass": REQUIRED, "k_spring": REQUIRED, "rho": 1000.0, "g": 9.81, "h0": 1.0, "x0": 0.0,
               "xbar0": None, "offset": 0.0, "xdot0": 0.0, "hydrostatic_sign": 1.0, "length": 10.0,
               "zeta_b_override": None},
    "FloatingBody": {"g": 9.81, "h0": 1.0, "rho": 1000.0, "p_atm": 0.0, "domain": REQUIRED,
                     "lid": REQUIRED, "contacts": None, "mode": "fixed", "mass": "archimedean",
                     "inertia": None, "inertia_ratio": 0.05, "heave_amplitude": 0.0,
                     "heave_frequency": 1.0, "x_G": None, "z_G": 0.0, "q_bar": 0.0, "n_interior": 200},
}

INITIAL = {"kind": "rest", "value": None, "amplitude": 0.0, "center": 0.0, "width": 1.0,
           "direction": "right", "x": None, "u0": None, "u1": None}
INITIAL_KINDS = ("rest", "constant", "gaussian", "tabulated", "piston_compatible")


@dataclass(frozen=True)
class OutputSpec:
    quantity: str
    cadence: int = 1


@dataclass(frozen=True)
class Numerics:
    cells: int
    cfl: float
    end_time: float
    cutoff_epsilon: float | None
    strict_compat: bool
    dt: float | None
    max_steps: int


@dataclass
class Scenario:
    family: str
    numerics: Numerics
    physics: dict
    initial: dict
    outputs: list[OutputSpec]
    derived: dict = field(default_factory=dict)
    compat: dict = field(default_factory=dict)

    @property
    def columns(self) -> list[str]:
        return ["t"] + [o.quantity for o in self.outputs]

    def resolved(self) -> dict:
        """Plain dictionary of every resolved setting, for metadata files."""
        out = {"family": self.family, "numerics": asdict(self.numerics), "physics": self.physics,
               "initial": self.initial, "outputs": [asdict(o) for o in self.outputs],
               "derived": self.derived, "compat": self.compat}
        return _jsonable(out)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


_POSITION = re.compile(r"at line (\d+), column (\d+)")


def parse_toml(text: str) -> dict:
    if not text.strip():
        raise ParseError("empty scenario", 1, 1)
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        col = getattr(exc, "colno", None)
        if line is None:
            m = _POSITION.search(str(exc))
            line, col = (int(m.group(1)), int(m.group(2))) if m else (1, 1)
        msg = getattr(exc, "msg", None) or _POSITION.sub("", str(exc)).strip(" ()")
        raise ParseError(msg, line, col) from exc


def _fill(section: str, given: dict, schema: dict) -> dict:
    if not isinstance(given, dict):
        raise ValidationError(f"[{section}] must be a table")
    unknown = sorted(set(given) - set(schema))
    if unknown:
        raise ValidationError(f"[{section}] has unknown keys: {', '.join(unknown)}")
    out = {}
    for key, default in schema.items():
        if key in given:
            out[key] = given[key]
        elif default is REQUIRED:
            raise ValidationError(f"[{section}] is missing the required key '{key}'")
        else:
            out[key] = default
    return out


def _number(section, key, v, positive=False, nonneg=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(f"{section}.{key} must be a number")
    if not np.isfinite(v):
        raise ValidationError(f"{section}.{key} must be finite")
    if positive and not v > 0:
        raise ValidationError(f"{section}.{key} must be positive")
    if nonneg and v < 0:
        raise ValidationError(f"{section}.{key} must be non-negative")
    return float(v)


def _vector(section, key, v, n=2):
    if not isinstance(v, list) or len(v) != n:
        raise ValidationError(f"{section}.{key} must be a list of {n} numbers")
    return [_number(section, key, x) for x in v]


def _numerics(raw: dict) -> Numerics:
    d = _fill("numerics", raw, NUMERICS)
    cells = d["cells"]
    if isinstance(cells, bool) or not isinstance(cells, int) or cells < MIN_CELLS:
        raise ValidationError(f"numerics.cells must be an integer >= {MIN_CELLS}")
    cfl = _number("numerics", "cfl", d["cfl"], positive=True)
    if cfl > 1:
        raise ValidationError("numerics.cfl must not exceed 1")
    end_time = _number("numerics", "end_time", d["end_time"], nonneg=True)
    eps = None if d["cutoff_epsilon"] is None else _number("numerics", "cutoff_epsilon", d["cutoff_epsilon"],
                                                             positive=True)
    dt = None if d["dt"] is None else _number("numerics", "dt", d["dt"], positive=True)
    if not isinstance(d["strict_compat"], bool):
        raise ValidationError("numerics.strict_compat must be true or false")
    max_steps = d["max_steps"]
    if isinstance(max_steps, bool) or not isinstance(max_steps, int) or max_steps < 1:
        raise ValidationError("numerics.max_steps must be a positive integer")
    return Numerics(cells, cfl, end_time, eps, d["strict_compat"], dt, max_steps)


def _outputs(family: str, raw) -> list[OutputSpec]:
    available = QUANTITIES[family]
    if raw is None:
        return [OutputSpec(q) for q in available]
    if not isinstance(raw, list):
        raise ValidationError("outputs must be an array of tables")
    out, seen = [], set()
    for k, item in enumerate(raw):
        d = _fill(f"outputs[{k}]", item, {"quantity": REQUIRED, "cadence": 1})
        q, cad = d["quantity"], d["cadence"]
        if q not in available:
            raise ValidationError(f"quantity '{q}' is not produced by family {family}; "
                                  f"available: {', '.join(available)}")
        if isinstance(cad, bool) or not isinstance(cad, int) or cad < 1:
            raise ValidationError(f"outputs[{k}].cadence must be a positive integer")
        if q in seen:
            raise ValidationError(f"quantity '{q}' is requested twice")
        seen.add(q)
        out.append(OutputSpec(q, cad))
    return out


def _initial(raw: dict) -> dict:
    d = _fill("initial", raw, INITIAL)
    kind = d["kind"]
    if kind not in INITIAL_KINDS:
        raise ValidationError(f"initial.kind must be one of {', '.join(INITIAL_KINDS)}")
    if kind == "constant":
        d["value"] = _vector("initial", "value", d["value"])
    if kind == "gaussian":
        _number("initial", "width", d["width"], positive=True)
        if d["direction"] not in ("right", "left", "none"):
            raise ValidationError("initial.direction must be right, left or none")
    if kind == "tabulated":
        for key in ("x", "u0", "u1"):
            if not isinstance(d[key], list) or len(d[key]) < 2:
                raise ValidationError(f"initial.{key} must be a list of at least 2 numbers")
        if not len(d["x"]) == len(d["u0"]) == len(d["u1"]):
            raise ValidationError("initial.x, initial.u0 and initial.u1 must have equal length")
        if np.any(np.diff(np.asarray(d["x"], dtype=float)) <= 0):
            raise ValidationError("initial.x must be strictly increasing")
    return d


def _physics(family: str, raw: dict) -> tuple[dict, dict]:
    d = _fill("physics", raw, PHYSICS[family])
    derived: dict = {}
    for key in ("g", "h0", "rho", "h0_left", "h0_right", "m_mass", "k_spring", "length"):
        if key in d and d[key] is not None:
            _number("physics", key, d[key], positive=True)
    if family == "IBVP":
        if d["system"] not in ("sw_zq", "sw_zv", "linear_sw"):
            raise ValidationError("physics.system must be sw_zq, sw_zv or linear_sw")
        a, b = _vector("physics", "domain", d["domain"])
        if not a < b:
            raise ValidationError("physics.domain must be increasing")
        for side in ("left", "right"):
            bc = _fill(f"physics.{side}", d[side] or {}, _BOUNDARY)
            if bc["type"] not in ("transparent", "linear"):
                raise ValidationError(f"physics.{side}.type must be transparent or linear")
            if bc["type"] == "linear":
                bc["nu"] = _vector(f"physics.{side}", "nu", bc["nu"])
                _number(f"physics.{side}", "value", bc["value"])
            d[side] = bc
    elif family == "KinematicFB":
        if d["law"] not in ("fluid_velocity", "affine"):
            raise ValidationError("physics.law must be fluid_velocity or affine")
        if d["law"] == "affine":
            d["law_coefficients"] = _vector("physics", "law_coefficients", d["law_coefficients"], 3)
        d["nu"] = _vector("physics", "nu", d["nu"])
    elif family == "ContactFB":
        for key in ("ui_base", "ui_dx", "ui_dt"):
            d[key] = _vector("physics", key, d[key])
    elif family == "Transmission":
        a, x, b = _vector("physics", "domain", d["domain"], 3)
        if not a < x < b:
            raise ValidationError("physics.domain must be [a, interface, b] increasing")
    elif family == "Shock":
        a, x, b = _vector("physics", "domain", d["domain"], 3)
        if not a < x < b:
            raise ValidationError("physics.domain must be [a, front, b] increasing")
        if d["partner"] not in ("none", "stationary", "hugoniot"):
            raise ValidationError("physics.partner must be none, stationary or hugoniot")
        if d["partner"] in ("none", "stationary"):
            d["u_left"] = _vector("physics", "u_left", d["u_left"])
        if d["partner"] in ("none", "hugoniot"):
            d["u_right"] = _vector("physics", "u_right", d["u_right"])
        if d["partner"] == "hugoniot":
            _number("physics", "zeta_left", d["zeta_left"])
            d["q_bracket"] = _vector("physics", "q_bracket", d["q_bracket"])
        if d["regime"] not in (None, "subsonic", "lax_right", "lax_left"):
            raise ValidationError("physics.regime must be subsonic, lax_right or lax_left")
    elif family == "Piston":
        from .piston import equilibrium_offset

        if d["hydrostatic_sign"] not in (1, -1, 1.0, -1.0):
            raise ValidationError("physics.hydrostatic_sign must be +1 or -1")
        offset = equilibrium_offset(d["rho"], d["g"], d["h0"], d["k_spring"])
        x_eq = d["x0"] + d["hydrostatic_sign"] * offset
        derived["x_eq"] = x_eq
        derived["x_eq_minus_x0"] = x_eq - d["x0"]
        if d["xbar0"] is None:
            d["xbar0"] = x_eq + d["offset"]
        derived["xbar0"] = d["xbar0"]
    elif family == "FloatingBody":
        a, b = _vector("physics", "domain", d["domain"])
        if d["mode"] not in ("fixed", "prescribed", "free"):
            raise ValidationError("physics.mode must be fixed, prescribed or free")
        lid = d["lid"]
        if not isinstance(lid, dict) or lid.get("family") not in ("flat", "parabolic", "cosine", "tabulated"):
            raise ValidationError("physics.lid.family must be flat, parabolic, cosine or tabulated")
        if d["contacts"] is not None:
            d["contacts"] = _vector("physics", "contacts", d["contacts"])
        if not a < b:
            raise ValidationError("physics.domain must be increasing")
    return d, derived


def load_scenario(text: str, strict_compat: bool | None = None) -> Scenario:
    """Parse and validate a scenario.

    ``strict_compat=True`` overrides the file setting; strict mode refuses
    initial data whose compatibility residuals exceed ``COMPAT_TOL``.
    """
    raw = parse_toml(text)
    if strict_compat:
        numerics = raw.setdefault("numerics", {})
        if isinstance(numerics, dict):
            numerics["strict_compat"] = True
    return scenario_from_dict(raw)


def scenario_from_dict(raw: dict) -> Scenario:
    unknown = sorted(set(raw) - {"family", "numerics", "physics", "initial", "outputs"})
    if unknown:
        raise ValidationError(f"unknown top-level keys: {', '.join(unknown)}")
    family = raw.get("family")
    if family not in FAMILIES:
        raise ValidationError(f"family must be one of {', '.join(FAMILIES)}")
    if "numerics" not in raw:
        raise ValidationError("missing [numerics] table")
    numerics = _numerics(raw["numerics"])
    physics, derived = _physics(family, raw.get("physics", {}))
    initial = _initial(raw.get("initial", {}))
    outputs = _outputs(family, raw.get("outputs"))
    sc = Scenario(family, numerics, physics, initial, outputs, derived)
    from .runner import compatibility_residuals

    sc.compat = compatibility_residuals(sc)
    if numerics.strict_compat:
        for order, value in enumerate(sc.compat["residuals"]):
            if abs(value) > COMPAT_TOL:
                raise ValidationError(
                    f"initial data not compatible: order-{order} residual {abs(value):.3e} "
                    f"exceeds {COMPAT_TOL:g}")
    return sc


def load_scenario_file(path, strict_compat: bool | None = None) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return load_scenario(fh.read(), strict_compat)
