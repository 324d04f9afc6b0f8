"""Run configuration: JSON schema, strict validation, and built-in presets.

Field data (loads, contact coefficients, gap) is restricted to constants
and affine expressions in x or y, which covers the study problems without
an expression parser.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass

import numpy as np

from .afem import ProblemSetup
from .assembly import MethodVariant, ProblemData
from .dgspace import MaterialParams
from .mesh import side_labeler


class ConfigError(ValueError):
    pass


EXAMPLE1 = {
    "geometry": {
        "corner_lo": [0.0, 0.05], "corner_hi": [1.0, 1.05], "n0": 2,
        "boundary": {"left": "traction", "right": "dirichlet",
                     "bottom": "contact", "top": "traction"}},
    "material": {"E": 2000.0, "nu": 0.4},
    "loads": {
        "f": [0.0, 0.0],
        "g": [{"var": "y", "slope": -200.0, "intercept": 1000.0}, -190.0]},
    "contact": {"c_n": 1.0, "c_tau": 450.0, "m_n": 1, "g_a": 0.05},
    "method": {"kind": "sipg", "penalty_mu_multiple": 30.0},
    "solver": {"rho": None, "tol": 1e-8, "max_outer": 5000,
               "tol_inner": 1e-10},
    "study": {"kind": "uniform", "levels": 6, "theta": 0.3, "max_dof": None,
              "out": "runs/example1"},
}

EXAMPLE2 = {
    "geometry": {
        "corner_lo": [0.0, 0.0], "corner_hi": [1.0, 1.0], "n0": 2,
        "boundary": {"left": "traction", "right": "traction",
                     "bottom": "contact", "top": "dirichlet"}},
    "material": {"E": 2500.0, "nu": 0.2},
    "loads": {"f": [0.0, 0.0], "g": [880.0, 0.0]},
    "contact": {"c_n": 1.0, "c_tau": 250.0, "m_n": 1, "g_a": 0.0},
    "method": {"kind": "sipg", "penalty_mu_multiple": 30.0},
    "solver": {"rho": None, "tol": 1e-8, "max_outer": 5000,
               "tol_inner": 1e-10},
    "study": {"kind": "uniform", "levels": 6, "theta": 0.3, "max_dof": None,
              "out": "runs/example2"},
}

PRESETS = {"example1": EXAMPLE1, "example2": EXAMPLE2}

_SECTION_KEYS = {
    "geometry": {"corner_lo", "corner_hi", "n0", "boundary"},
    "material": {"E", "nu"},
    "loads": {"f", "g"},
    "contact": {"c_n", "c_tau", "m_n", "g_a"},
    "method": {"kind", "penalty", "penalty_mu_multiple"},
    "solver": {"rho", "tol", "max_outer", "tol_inner"},
    "study": {"kind", "levels", "theta", "max_dof", "out"},
}

_SIDES = ("left", "right", "bottom", "top")
_LABELS = ("dirichlet", "traction", "contact")


def _require_keys(section, mapping, where):
    if not isinstance(mapping, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(mapping) - _SECTION_KEYS[section]
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _check_scalar_expr(value, where):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, dict):
        unknown = set(value) - {"var", "slope", "intercept"}
        if unknown:
            raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
        if value.get("var") not in ("x", "y"):
            raise ConfigError(f"{where}: var must be 'x' or 'y'")
        return {"var": value["var"],
                "slope": float(value.get("slope", 0.0)),
                "intercept": float(value.get("intercept", 0.0))}
    raise ConfigError(f"{where} must be a number or an affine expression")


def _expr_to_callable(expr):
    if isinstance(expr, dict):
        slope, intercept = expr["slope"], expr["intercept"]
        if expr["var"] == "x":
            return lambda x, y: slope * x + intercept
        return lambda x, y: slope * y + intercept
    value = float(expr)
    return lambda x, y: np.full_like(np.asarray(x, dtype=float), value)


def _vector_expr_to_callable(exprs):
    fx = _expr_to_callable(exprs[0])
    fy = _expr_to_callable(exprs[1])
    return lambda x, y: np.stack([fx(x, y), fy(x, y)], axis=-1)


@dataclass
class RunConfig:
    """Validated configuration; ``raw`` is the normalized JSON document."""
    raw: dict

    @property
    def study_kind(self):
        return self.raw["study"]["kind"]

    @property
    def theta(self):
        return self.raw["study"]["theta"]

    @property
    def levels(self):
        return self.raw["study"]["levels"]

    @property
    def max_dof(self):
        return self.raw["study"]["max_dof"]

    @property
    def out_dir(self):
        return self.raw["study"]["out"]

    @property
    def method_kind(self):
        return self.raw["method"]["kind"]

    def material(self) -> MaterialParams:
        m = self.raw["material"]
        return MaterialParams.from_young_poisson(m["E"], m["nu"])

    def penalty(self) -> float:
        method = self.raw["method"]
        if "penalty" in method:
            return float(method["penalty"])
        return float(method["penalty_mu_multiple"]) * self.material().mu

    def variant(self) -> MethodVariant:
        return MethodVariant(self.method_kind, self.penalty())

    def problem_data(self) -> ProblemData:
        c = self.raw["contact"]
        return ProblemData(
            mat=self.material(),
            f=_vector_expr_to_callable(self.raw["loads"]["f"]),
            g=_vector_expr_to_callable(self.raw["loads"]["g"]),
            c_n=_expr_to_callable(c["c_n"]),
            c_tau=_expr_to_callable(c["c_tau"]),
            m_n=c["m_n"],
            g_a=_expr_to_callable(c["g_a"]))

    def setup(self) -> ProblemSetup:
        geo = self.raw["geometry"]
        sol = self.raw["solver"]
        lo = tuple(geo["corner_lo"])
        hi = tuple(geo["corner_hi"])
        sides = geo["boundary"]
        return ProblemSetup(
            corner_lo=lo, corner_hi=hi,
            labeler=side_labeler(sides["left"], sides["right"],
                                 sides["bottom"], sides["top"], lo, hi),
            data=self.problem_data(), variant=self.variant(),
            n0=geo["n0"], rho=sol["rho"], tol=sol["tol"],
            max_outer=sol["max_outer"], tol_inner=sol["tol_inner"])

    def serialize(self) -> dict:
        return copy.deepcopy(self.raw)

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=2)

    def traction_scale_warning(self):
        """The study tractions can be a large fraction of the stiffness;
        record that in run reports."""
        g = self.raw["loads"]["g"]
        mags = []
        for comp in g:
            if isinstance(comp, dict):
                lo = self.raw["geometry"]["corner_lo"]
                hi = self.raw["geometry"]["corner_hi"]
                for corner in (lo, hi):
                    val = comp["slope"] * (corner[0] if comp["var"] == "x"
                                           else corner[1]) + comp["intercept"]
                    mags.append(abs(val))
            else:
                mags.append(abs(float(comp)))
        gmax = max(mags) if mags else 0.0
        E = self.raw["material"]["E"]
        if gmax > 0.3 * E:
            return (f"traction magnitude {gmax:.6g} exceeds 30% of E = {E:.6g}; "
                    "displacements leave the small-strain regime")
        return None


def validate_config(doc) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(doc) - set(_SECTION_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    missing = set(_SECTION_KEYS) - set(doc)
    if missing:
        raise ConfigError(f"missing sections: {sorted(missing)}")

    norm = {}
    geo = doc["geometry"]
    _require_keys("geometry", geo, "geometry")
    lo = [float(v) for v in geo.get("corner_lo", ())]
    hi = [float(v) for v in geo.get("corner_hi", ())]
    if len(lo) != 2 or len(hi) != 2 or not (hi[0] > lo[0] and hi[1] > lo[1]):
        raise ConfigError("geometry corners must describe a nonempty rectangle")
    n0 = int(geo.get("n0", 2))
    if n0 < 1:
        raise ConfigError("geometry.n0 must be at least 1")
    boundary = geo.get("boundary")
    if not isinstance(boundary, dict) or set(boundary) != set(_SIDES):
        raise ConfigError("geometry.boundary must label exactly "
                          f"{list(_SIDES)}")
    for side, lab in boundary.items():
        if lab not in _LABELS:
            raise ConfigError(f"geometry.boundary.{side}: unknown label "
                              f"{lab!r}")
    if "dirichlet" not in boundary.values():
        raise ConfigError("at least one side must be dirichlet")
    norm["geometry"] = {"corner_lo": lo, "corner_hi": hi, "n0": n0,
                        "boundary": {s: boundary[s] for s in _SIDES}}

    mat = doc["material"]
    _require_keys("material", mat, "material")
    try:
        E, nu = float(mat["E"]), float(mat["nu"])
    except KeyError as missing_key:
        raise ConfigError(f"material requires {missing_key}") from None
    if not (E > 0 and 0 < nu < 0.5):
        raise ConfigError("material requires E > 0 and 0 < nu < 1/2")
    norm["material"] = {"E": E, "nu": nu}

    loads = doc["loads"]
    _require_keys("loads", loads, "loads")
    norm_loads = {}
    for name in ("f", "g"):
        vec = loads.get(name, [0.0, 0.0])
        if not isinstance(vec, (list, tuple)) or len(vec) != 2:
            raise ConfigError(f"loads.{name} must have two components")
        norm_loads[name] = [_check_scalar_expr(vec[i], f"loads.{name}[{i}]")
                            for i in range(2)]
    norm["loads"] = norm_loads

    contact = doc["contact"]
    _require_keys("contact", contact, "contact")
    nc = {}
    for name, default in (("c_n", 0.0), ("c_tau", 0.0), ("g_a", 0.0)):
        nc[name] = _check_scalar_expr(contact.get(name, default),
                                      f"contact.{name}")
        if isinstance(nc[name], float) and nc[name] < 0:
            raise ConfigError(f"contact.{name} must be nonnegative")
    m_n = int(contact.get("m_n", 1))
    if m_n < 1:
        raise ConfigError("contact.m_n must be >= 1")
    nc["m_n"] = m_n
    norm["contact"] = nc

    method = doc["method"]
    _require_keys("method", method, "method")
    kind = method.get("kind")
    if kind not in ("sipg", "nipg", "bassi", "brezzi", "ldg"):
        raise ConfigError(f"method.kind {kind!r} is not a DG variant")
    nm = {"kind": kind}
    if "penalty" in method and "penalty_mu_multiple" in method:
        raise ConfigError("give method.penalty or penalty_mu_multiple, "
                          "not both")
    if "penalty" in method:
        nm["penalty"] = float(method["penalty"])
    else:
        nm["penalty_mu_multiple"] = float(
            method.get("penalty_mu_multiple", 30.0))
    norm["method"] = nm

    solver = doc["solver"]
    _require_keys("solver", solver, "solver")
    rho = solver.get("rho")
    if rho is not None:
        rho = float(rho)
        if rho <= 0:
            raise ConfigError("solver.rho must be positive when given")
    tol = float(solver.get("tol", 1e-8))
    if tol <= 0:
        raise ConfigError("solver.tol must be positive")
    norm["solver"] = {"rho": rho, "tol": tol,
                      "max_outer": int(solver.get("max_outer", 5000)),
                      "tol_inner": float(solver.get("tol_inner", 1e-10))}

    study = doc["study"]
    _require_keys("study", study, "study")
    kind = study.get("kind")
    if kind not in ("uniform", "adaptive"):
        raise ConfigError("study.kind must be 'uniform' or 'adaptive'")
    theta = float(study.get("theta", 0.3))
    if not (0 < theta <= 1):
        raise ConfigError("study.theta must lie in (0, 1]")
    levels = int(study.get("levels", 6 if kind == "uniform" else 20))
    if kind == "uniform" and levels < 2:
        raise ConfigError("uniform studies need at least 2 levels")
    max_dof = study.get("max_dof")
    norm["study"] = {"kind": kind, "levels": levels, "theta": theta,
                     "max_dof": None if max_dof is None else int(max_dof),
                     "out": str(study.get("out", "runs/out"))}

    cfg = RunConfig(raw=norm)
    cfg.variant()  # penalty admissibility for the chosen variant
    return cfg


def load_preset(name) -> RunConfig:
    try:
        doc = PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None
    return validate_config(copy.deepcopy(doc))


def parse_config(path) -> RunConfig:
    """Load and validate a JSON configuration file."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"config file {path} is not valid JSON: {err}") \
            from None
    return validate_config(doc)
