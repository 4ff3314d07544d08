"""TOML scenario configuration: parsing and schema validation.

Every problem found is collected and reported together in one
:class:`SchemaError`. Unknown keys are rejected with a close-match suggestion
where one exists. The full schema is documented in ``docs/config.md``.
"""

from __future__ import annotations

import difflib
import math
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from ..errors import SchemaError

# -- field specs ---------------------------------------------------------------------
#
# A spec maps a key to (kind, required, default). Kinds:
#   "float+"  positive float        "float0+"  non-negative float
#   "float"   any finite float      "int+"     positive int      "int0+" int >= 0
#   "int"     any int               "bool"     boolean           "str"   string
#   "vec"     list of floats        "intvec"   list of ints      ("enum", {...}) choice
#   ("table", SPEC) nested table    ("array", SPEC) array of tables
#   "floatvec" list of floats, any length; "any" passes through


def _schema(**entries):
    return entries


CONTACT = _schema(
    law=(("enum", {"elastic", "viscoelastic", "none"}), True, None),
    kappa_n=("float0+", False, 0.0),
    kappa_s=("float0+", False, 0.0),
    mu=("float0+", False, 0.0),
    gamma_n=("float0+", False, 0.0),
    gamma_s=("float0+", False, 0.0),
)

BODY = _schema(
    id=("int0+", False, None),
    shape=(("enum", {"sphere", "box", "halfspace", "polygon", "prism", "polytope"}), True, None),
    radius=("float+", False, None),
    extents=("vec", False, None),
    normal=("vec", False, None),
    offset=("float", False, 0.0),
    sides=("int+", False, None),
    circumradius=("float+", False, None),
    phase=("float", False, 0.0),
    vertices=("any", False, None),
    height=("float+", False, None),
    heights=("vec", False, None),
    density=("float+", False, 1.0),
    position=("vec", False, None),
    velocity=("vec", False, None),
    orientation=("floatvec", False, None),
    angular_velocity=("floatvec", False, None),
    fixed=("bool", False, False),
    kinematic_velocity=("vec", False, None),
    group=("int", False, -1),
)

PACKING = _schema(
    rows=("int+", True, None),
    cols=("int+", True, None),
    layers=("int+", False, 1),
    radius=("float+", True, None),
    density=("float+", False, 1.0),
    origin=("vec", False, None),
    first_id=("int0+", False, 0),
)

RVE = _schema(
    spheres=("int+", True, None),
    box=("vec", False, [0.85, 0.85, 1.0]),
    plate_velocity=("vec", False, [0.0, 0.0, -0.35]),
    density=("float+", False, 1.0),
    radius=("float+", False, None),
    polydispersity=("float0+", False, 0.0),
)

TRACTION = _schema(
    amplitude=("float", False, 3.0),
    rate=("float0+", False, 10.0),
    x_low=("float", False, 0.05),
    x_high=("float", False, 0.95),
)

PERIDYNAMICS = _schema(
    lattice=("intvec", True, None),
    hole=("vec", False, [0.0, 0.0]),
    horizon_factor=("float+", False, 3.0),
    k=("float+", True, None),
    mu=("float+", True, None),
    s_c=("float+", False, 0.01),
    density=("float+", False, 1.0),
    size=("vec", False, [1.0, 1.0, 0.01]),
    handoff_kappa_n=("float+", False, None),
    traction=(("table", TRACTION), False, None),
)

BEAM = _schema(
    n_points=("int+", True, None),
    length=("float+", False, 1.0),
    E=("float+", True, None),
    section_radius=("float+", False, None),
    I=("float+", False, None),
    A=("float+", False, None),
    total_mass=("float+", False, 1.0),
    acceleration=("vec", False, None),
    mode=(("enum", {"adjacent", "radius"}), False, "adjacent"),
    bond_radius=("float+", False, None),
    clamp=(("enum", {"left", "both"}), False, "left"),
    point_radius=("float+", False, None),
    cross_section=("floatvec", False, None),
    damping=("float0+", False, 0.0),
)

GROWTH = _schema(
    body=("int0+", True, None),
    rate=("float", True, None),
)

OBSERVER = _schema(
    kind=(("enum", {"particles", "collection"}), True, None),
    ids=("intvec", False, None),
    tracked_id=("int0+", False, None),
    tracked=(("enum", {"plate", "tip"}), False, None),
    reference_length=("float+", False, None),
    axis=("int", False, -1),
    tangent=("bool", False, False),
    average=("bool", False, False),
)

OUTPUT = _schema(
    directory=("str", False, "out"),
    vtk=("bool", False, True),
)

TOP = _schema(
    dimension=(("enum", {2, 3}), False, 3),
    dt=("float+", True, None),
    t_end=("float0+", True, None),
    output_interval=("float+", False, None),
    gravity=("vec", False, None),
    damping=("float0+", False, 0.0),
    angular_damping=("float0+", False, 0.0),
    seed=("int0+", False, 0),
    threads=("int+", False, 1),
    skin_fraction=("float0+", False, 0.1),
    contact=(("table", CONTACT), False, None),
    bodies=(("array", BODY), False, []),
    packing=(("table", PACKING), False, None),
    rve=(("table", RVE), False, None),
    peridynamics=(("table", PERIDYNAMICS), False, None),
    beam=(("table", BEAM), False, None),
    growth=(("array", GROWTH), False, []),
    observers=(("array", OBSERVER), False, []),
    output=(("table", OUTPUT), False, {}),
)


# -- validation --------------------------------------------------------------------


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_value(kind, value, path, errors):
    """Validate one value; returns the normalized value."""
    if isinstance(kind, tuple):
        tag, arg = kind
        if tag == "enum":
            if value not in arg:
                errors.append(f"{path}: {value!r} is not one of {sorted(arg, key=str)}")
            return value
        if tag == "table":
            if not isinstance(value, dict):
                errors.append(f"{path}: expected a table")
                return None
            return _check_table(arg, value, path, errors)
        if tag == "array":
            if not isinstance(value, list) or not all(isinstance(v, dict) for v in value):
                errors.append(f"{path}: expected an array of tables")
                return []
            return [_check_table(arg, v, f"{path}[{k}]", errors) for k, v in enumerate(value)]
    if kind == "any":
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            errors.append(f"{path}: expected true or false, got {value!r}")
        return value
    if kind == "str":
        if not isinstance(value, str):
            errors.append(f"{path}: expected a string, got {value!r}")
        return value
    if kind.startswith("int") and kind != "intvec":
        if not isinstance(value, int) or isinstance(value, bool):
            errors.append(f"{path}: expected an integer, got {value!r}")
            return value
        if kind == "int+" and value <= 0:
            errors.append(f"{path}: must be positive, got {value}")
        if kind == "int0+" and value < 0:
            errors.append(f"{path}: must be non-negative, got {value}")
        return value
    if kind.startswith("float") and kind != "floatvec":
        if not _is_number(value) or not math.isfinite(value):
            errors.append(f"{path}: expected a finite number, got {value!r}")
            return value
        if kind == "float+" and not value > 0:
            errors.append(f"{path}: must be positive, got {value}")
        if kind == "float0+" and value < 0:
            errors.append(f"{path}: must be non-negative, got {value}")
        return float(value)
    if kind in ("vec", "floatvec"):
        if not isinstance(value, list) or not all(_is_number(v) and math.isfinite(v) for v in value):
            errors.append(f"{path}: expected a list of numbers, got {value!r}")
            return value
        return [float(v) for v in value]
    if kind == "intvec":
        if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            errors.append(f"{path}: expected a list of integers, got {value!r}")
        return value
    raise AssertionError(f"unknown schema kind {kind!r}")


def _check_table(spec, table, prefix, errors):
    out = {}
    for key in table:
        if key not in spec:
            where = f"{prefix}.{key}" if prefix else key
            close = difflib.get_close_matches(key, list(spec), n=1)
            hint = f" (did you mean '{close[0]}'?)" if close else ""
            errors.append(f"unknown key '{where}'{hint}")
    for key, (kind, required, default) in spec.items():
        path = f"{prefix}.{key}" if prefix else key
        if key in table:
            out[key] = _check_value(kind, table[key], path, errors)
        elif required:
            errors.append(f"{path}: required key is missing")
        else:
            out[key] = default if not isinstance(default, (list, dict)) else type(default)(default)
    return out


def _check_dimensions(cfg, errors):
    d = cfg["dimension"]
    if cfg.get("gravity") is not None and len(cfg["gravity"]) != d:
        errors.append(f"gravity: expected {d} components, got {len(cfg['gravity'])}")
    for k, body in enumerate(cfg["bodies"]):
        for key in ("position", "velocity", "kinematic_velocity", "normal"):
            v = body.get(key)
            if isinstance(v, list) and len(v) != d:
                errors.append(f"bodies[{k}].{key}: expected {d} components, got {len(v)}")
        shape = body.get("shape")
        needs = {
            "sphere": ["radius"],
            "box": ["extents"],
            "halfspace": ["normal"],
            "polytope": ["vertices"],
        }.get(shape, [])
        if shape in ("polygon", "prism") and body.get("vertices") is None:
            needs = ["sides", "circumradius"]
        for key in needs:
            if body.get(key) is None:
                errors.append(f"bodies[{k}].{key}: required for shape '{shape}'")
        if shape == "prism" and body.get("height") is None and not body.get("heights"):
            errors.append(f"bodies[{k}].height: prisms need 'height' or a 'heights' set")
        if shape in ("polygon",) and d != 2:
            errors.append(f"bodies[{k}].shape: polygons are 2-D; use 'prism' in 3-D")
        if shape in ("prism", "polytope") and d != 3:
            errors.append(f"bodies[{k}].shape: '{shape}' needs dimension = 3")
    ids = [b["id"] for b in cfg["bodies"] if b.get("id") is not None]
    if len(set(ids)) != len(ids):
        errors.append("bodies: body ids must be unique")
    beam = cfg.get("beam")
    if beam is not None:
        if beam.get("section_radius") is None and beam.get("I") is None:
            errors.append("beam.section_radius: give a section radius or I and A")
        if beam.get("mode") == "radius" and beam.get("bond_radius") is None:
            errors.append("beam.bond_radius: required when mode = 'radius'")
    if cfg.get("contact") is None and (cfg["bodies"] or cfg.get("packing") or cfg.get("rve")):
        cfg["contact"] = {"law": "none"}


@dataclass
class ScenarioConfig:
    dimension: int
    dt: float
    t_end: float
    output_interval: float
    gravity: list
    damping: float
    angular_damping: float
    seed: int
    threads: int
    skin_fraction: float
    contact: dict
    bodies: list
    packing: dict
    rve: dict
    peridynamics: dict
    beam: dict
    growth: list
    observers: list
    output: dict = field(default_factory=dict)
    source: str = None


def parse_config(text: str, source: str = None) -> ScenarioConfig:
    """Parse and validate TOML scenario text."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        where = f"{source}: " if source else ""
        raise SchemaError(f"{where}{exc}") from None
    errors = []
    cfg = _check_table(TOP, raw, "", errors)
    if not errors:
        _check_dimensions(cfg, errors)
    if errors:
        if source:
            errors = [f"{source}: {e}" for e in errors]
        raise SchemaError(errors)
    if cfg["output_interval"] is None:
        cfg["output_interval"] = cfg["dt"]
    if cfg["contact"] is None:
        cfg["contact"] = {"law": "none"}
    return ScenarioConfig(**cfg, source=source)


def load_config(path) -> ScenarioConfig:
    try:
        with open(path, "rb") as fh:
            text = fh.read().decode("utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read config '{path}': {exc.strerror or exc}") from None
    return parse_config(text, source=str(path))
