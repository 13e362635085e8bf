"""JSON experiment configuration: schema, loading and problem construction.

A problem entry either names a registry model::

    {"model": "coupled-smooth", "params": {"coupling": 0.2},
     "overrides": {"h": ["tanh(x1) + 0.1"]}}

or spells every coefficient out inline::

    {"n": 1, "d": 1, "T": 1.0, "C": 1.0, "x0": [0.0],
     "b": ["0"], "sigma": [["1"]], "h": ["tanh(x1)"], "g": ["0.5*z1^2"]}

Coefficient values are DSL strings (scalar, vector or matrix of strings) or
``{"builtin": name, "params": {...}}``.  In the registry form ``C`` and
``x0`` may also be overridden at top level.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import dsl
from .backward import BackwardOpts, RegressionBasis
from .model import ORDER_TOL, RATIO_TOL, CoefficientFn, FBSDEProblem, ValidationError, require_valid
from .picard import IterationConfig
from .registry import build_problem, make_coefficient, problem_spec

__all__ = ["SCHEMA", "ConfigError", "ProbeConfig", "ExperimentConfig", "load_config", "parse_config", "build"]


class ConfigError(ValueError):
    """Any failure to turn a document into a runnable experiment."""


_NUM = {"type": "number"}
_COEF = {
    "oneOf": [
        {"type": "string"},
        {"type": "array", "items": {"oneOf": [{"type": "string"}, {"type": "array", "items": {"type": "string"}}]}},
        {
            "type": "object",
            "properties": {"builtin": {"type": "string"}, "params": {"type": "object"}},
            "required": ["builtin"],
            "additionalProperties": False,
        },
    ]
}
_ROLE_PROPS = {"b": _COEF, "sigma": _COEF, "h": _COEF, "g": {"anyOf": [_COEF, {"type": "array", "items": _COEF}]}}
_X0 = {"oneOf": [_NUM, {"type": "array", "items": _NUM, "minItems": 1}]}

_PROBLEM = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "model": {"type": "string"},
        "params": {"type": "object"},
        "overrides": {"type": "object", "properties": _ROLE_PROPS, "additionalProperties": False},
        "n": {"type": "integer", "minimum": 1},
        "d": {"type": "integer", "minimum": 1},
        "T": {"type": "number", "exclusiveMinimum": 0},
        "C": {"type": "number", "exclusiveMinimum": 0},
        "x0": _X0,
        **_ROLE_PROPS,
    },
    "additionalProperties": False,
    "oneOf": [
        {"required": ["model"], "not": {"anyOf": [{"required": [k]} for k in ("n", "d", "T", "b", "sigma", "h", "g")]}},
        {"required": ["n", "d", "T", "C", "x0", "b", "sigma", "h", "g"], "not": {"anyOf": [{"required": ["model"]}, {"required": ["params"]}, {"required": ["overrides"]}]}},
    ],
}

_NUMERICS = {
    "type": "object",
    "properties": {
        "paths": {"type": "integer", "minimum": 1},
        "steps": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "max_iter": {"type": "integer", "minimum": 1},
        "degree": {"type": "integer", "minimum": 0},
        "knots": {"type": "integer", "minimum": 0},
        "inner_max_iter": {"type": "integer", "minimum": 1},
        "inner_tol": {"type": "number", "exclusiveMinimum": 0},
        "z_truncation": {"type": "number", "minimum": 0},
        "ridge": {"type": ["number", "null"], "minimum": 0},
        "projection": {"type": "boolean"},
        "alarm": {"type": "number", "minimum": 0, "maximum": 1},
        "residual_budget": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "p_list": {"type": "array", "items": {"type": "number", "minimum": 1}, "minItems": 1},
        "phi_K": {"type": ["number", "null"], "minimum": 0},
    },
    "additionalProperties": False,
}

_PROBES = {
    "type": "object",
    "properties": {
        "num_probes": {"type": "integer", "minimum": 1},
        "radius": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "ratio_tol": {"type": "number", "minimum": 0},
        "order_tol": {"type": "number", "minimum": 0},
    },
    "additionalProperties": False,
}

SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "fbsde-picard experiment",
    "type": "object",
    "properties": {
        "problem": _PROBLEM,
        "problem_bar": _PROBLEM,
        "numerics": _NUMERICS,
        "probes": _PROBES,
        "output_dir": {"type": "string"},
        "dump_paths": {"type": "boolean"},
        "order_threshold": {"type": "number", "minimum": 0, "maximum": 1},
    },
    "required": ["problem"],
    "additionalProperties": False,
}


@dataclass(frozen=True)
class ProbeConfig:
    num_probes: int = 1000
    radius: float = 5.0
    seed: int = 0
    ratio_tol: float = RATIO_TOL
    order_tol: float = ORDER_TOL


@dataclass
class ExperimentConfig:
    problem: FBSDEProblem
    iteration: IterationConfig
    probes: ProbeConfig = ProbeConfig()
    p_list: tuple = (2.0, 4.0, 8.0)
    phi_K: float | None = None  # None: measured sup of |U|
    output_dir: str = "out"
    dump_paths: bool = False
    problem_bar: FBSDEProblem | None = None
    order_threshold: float = 0.01
    document: dict = field(default_factory=dict)  # normalized source, flag overrides applied


def _schema_message(err: jsonschema.ValidationError) -> str:
    where = "/".join(str(p) for p in err.absolute_path) or "<root>"
    if err.validator == "additionalProperties":
        allowed = set(err.schema.get("properties", {}))
        extra = sorted(set(err.instance) - allowed)
        return f"unknown key{'s' if len(extra) > 1 else ''} {', '.join(map(repr, extra))} at {where}"
    if err.validator == "oneOf" and err.context:
        context = err.context
        if err.schema is _PROBLEM and isinstance(err.instance, dict):
            # report against the form the entry was evidently meant to take
            branch = 0 if "model" in err.instance else 1
            context = [e for e in context if e.relative_schema_path[0] == branch] or context
        best = jsonschema.exceptions.best_match(context)
        return f"{where}: {best.message}"
    return f"{where}: {err.message}"


def _validate_document(doc: Any) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if not errors:
        return
    # unknown keys are the most useful complaint; report them before anything else
    for err in errors:
        for sub in [err, *(err.context or [])]:
            if sub.validator == "additionalProperties":
                raise ConfigError(_schema_message(sub))
    raise ConfigError(_schema_message(errors[0]))


def _coef(role: str, value, n: int, d: int, row: int | None = None, where: str = "") -> CoefficientFn:
    if isinstance(value, dict):
        try:
            return make_coefficient(role, value["builtin"], n, d, value.get("params", {}), row)
        except (KeyError, ValueError, TypeError) as err:
            raise ConfigError(f"{where}: {err}") from err
    expected = {"b": (n,), "sigma": (n, d), "h": (n,), "g": ()}[role]
    # a bare string stands for a 1-vector or 1x1 matrix
    if isinstance(value, str) and expected:
        value = np.full(expected, value, dtype=object).tolist() if all(k == 1 for k in expected) else value
    shape = np.array(value, dtype=object).shape
    if shape != expected:
        raise ConfigError(f"{where}: expected shape {expected} for {role}, got {shape}")
    try:
        return CoefficientFn.from_exprs(value, (n, d), role, row)
    except dsl.DSLError as err:
        raise ConfigError(f"{where}: {err}") from err


def _generator(value, n: int, d: int, where: str) -> list[CoefficientFn]:
    items = value if isinstance(value, list) else [value]
    if len(items) != n:
        raise ConfigError(f"{where}: expected {n} generator components, got {len(items)}")
    return [_coef("g", item, n, d, i, f"{where}[{i}]") for i, item in enumerate(items)]


def _x0(value, n: int, where: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n,)) if np.ndim(value) == 0 else np.asarray(value, dtype=float)
    if arr.shape != (n,):
        raise ConfigError(f"{where}: x0 must have {n} entries")
    return arr.copy()


def build(entry: dict, where: str = "problem") -> FBSDEProblem:
    """Construct (and structurally validate) one problem entry."""
    if "model" in entry:
        params = dict(entry.get("params", {}))
        try:
            spec = problem_spec(entry["model"], **params)
        except KeyError as err:
            raise ConfigError(f"{where}: {err.args[0]}") from err
        except TypeError as err:
            raise ConfigError(f"{where}: bad parameters for model {entry['model']!r}: {err}") from err
        n, d = spec["n"], spec["d"]
        if "T" in entry:
            spec["T"] = entry["T"]
        if "C" in entry:
            spec["C"] = entry["C"]
        if "x0" in entry:
            spec["x0"] = _x0(entry["x0"], n, where)
        for role, value in entry.get("overrides", {}).items():
            if role == "g":
                spec["g"] = _generator(value, n, d, f"{where}.overrides.g")
            else:
                spec[role] = _coef(role, value, n, d, None, f"{where}.overrides.{role}")
        name = entry.get("name", entry["model"])
        problem = build_problem(spec, name)
    else:
        n, d = entry["n"], entry["d"]
        problem = FBSDEProblem(
            n=n, d=d, T=float(entry["T"]), x0=_x0(entry["x0"], n, where),
            b=_coef("b", entry["b"], n, d, None, f"{where}.b"),
            sigma=_coef("sigma", entry["sigma"], n, d, None, f"{where}.sigma"),
            h=_coef("h", entry["h"], n, d, None, f"{where}.h"),
            g=_generator(entry["g"], n, d, f"{where}.g"),
            C=float(entry["C"]), name=entry.get("name", "inline"),
        )
    try:
        require_valid(problem)
    except ValidationError as err:
        raise ConfigError(f"{where}: {err}") from err
    return problem


def _iteration(num: dict) -> IterationConfig:
    backward = BackwardOpts(
        inner_max_iter=num.get("inner_max_iter", BackwardOpts.inner_max_iter),
        inner_tol=num.get("inner_tol", BackwardOpts.inner_tol),
        z_truncation=num.get("z_truncation", BackwardOpts.z_truncation),
        ridge=num.get("ridge", BackwardOpts.ridge),
    )
    base = IterationConfig()
    return IterationConfig(
        paths=num.get("paths", base.paths),
        steps=num.get("steps", base.steps),
        seed=num.get("seed", base.seed),
        tol=num.get("tol", base.tol),
        max_iter=num.get("max_iter", base.max_iter),
        basis=RegressionBasis(num.get("degree", base.basis.degree), num.get("knots", base.basis.knots)),
        backward=backward,
        projection=num.get("projection", base.projection),
        alarm=num.get("alarm", base.alarm),
        residual_budget=num.get("residual_budget", base.residual_budget),
    )


OVERRIDABLE = ("paths", "steps", "seed", "tol", "max_iter", "projection")


def parse_config(doc: Any, overrides: dict | None = None) -> ExperimentConfig:
    """Validate a decoded document, apply flag overrides and build the problems.

    ``overrides`` maps numerics keys (``paths``, ``steps``, ...) or
    ``output_dir`` to values; ``None`` entries are ignored.
    """
    _validate_document(doc)
    doc = copy.deepcopy(doc)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "output_dir":
            doc["output_dir"] = value
        elif key in OVERRIDABLE:
            doc.setdefault("numerics", {})[key] = value
        else:
            raise ConfigError(f"cannot override {key!r}")
    _validate_document(doc)
    num = doc.get("numerics", {})
    try:
        iteration = _iteration(num)
        probes = ProbeConfig(**doc.get("probes", {}))
    except ValueError as err:
        raise ConfigError(str(err)) from err
    problem = build(doc["problem"], "problem")
    bar = build(doc["problem_bar"], "problem_bar") if "problem_bar" in doc else None
    return ExperimentConfig(
        problem=problem,
        iteration=iteration,
        probes=probes,
        p_list=tuple(float(p) for p in num.get("p_list", (2, 4, 8))),
        phi_K=num.get("phi_K"),
        output_dir=doc.get("output_dir", "out"),
        dump_paths=doc.get("dump_paths", False),
        problem_bar=bar,
        order_threshold=doc.get("order_threshold", 0.01),
        document=doc,
    )


def load_config(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    """Read, validate and compile a JSON experiment file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err.strerror}") from err
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: JSON syntax error at line {err.lineno}, column {err.colno}: {err.msg}") from err
    return parse_config(doc, overrides)
