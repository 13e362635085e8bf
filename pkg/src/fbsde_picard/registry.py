"""Built-in coefficients and named problem instances.

Problems:

``trivial-zero``
    every coefficient zero; the solution is X = x0, Y = Z = 0.
``bounding-ode``
    zero data with a constant diffusion; exercises U, Y0 and S, whose
    deterministic parts have closed forms.
``decoupled-quadratic``
    Brownian forward process, h = tanh, g = (gamma/2)|z|^2; the Cole-Hopf
    transform gives Y_0 = log E[exp(gamma tanh(W_T))] / gamma.
``coupled-smooth``
    b^i = a tanh(mean y), sigma = I, h^i = tanh(x^i) + shift,
    g^i = a tanh(mean x) + (gamma/2)|z^i|^2.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .model import CoefficientFn, FBSDEProblem

__all__ = ["COEFFICIENTS", "PROBLEMS", "make_coefficient", "make_problem", "problem_names"]


def _freeze(v):
    if isinstance(v, (list, tuple, np.ndarray)):
        return tuple(_freeze(x) for x in v)
    if isinstance(v, dict):
        return tuple(sorted((k, _freeze(x)) for k, x in v.items()))
    return float(v) if isinstance(v, (int, float, np.floating, np.integer)) and not isinstance(v, bool) else v


def _size(x, y, z):
    for a in (x, y, z):
        if a is not None:
            return a.shape[0]
    return 1


def _zero(role, n, d, params, row):
    shape = _role_shape(role, n, d)
    return (lambda t, x, y, z: np.zeros((_size(x, y, z),) + shape)), frozenset()


def _constant(role, n, d, params, row):
    shape = _role_shape(role, n, d)
    value = np.broadcast_to(np.asarray(params.get("value", 0.0), dtype=float), shape).copy()
    return (lambda t, x, y, z: np.broadcast_to(value, (_size(x, y, z),) + shape).copy()), frozenset()


def _identity(role, n, d, params, row):
    if role != "sigma":
        raise ValueError("identity is a diffusion coefficient")
    scale = float(params.get("scale", 1.0))
    eye = scale * np.eye(n, d)
    return (lambda t, x, y, z: np.broadcast_to(eye, (_size(x, y, z), n, d)).copy()), frozenset()


def _tanh_mean(role, n, d, params, row):
    """scale * tanh(mean of x or y) + shift in every component."""
    var = params.get("var", "y")
    scale = float(params.get("scale", 1.0))
    shift = float(params.get("shift", 0.0))
    shape = _role_shape(role, n, d)

    def fn(t, x, y, z):
        v = x if var == "x" else y
        out = scale * np.tanh(v.mean(axis=1)) + shift
        return np.broadcast_to(out[:, None], (v.shape[0], n)).copy() if shape else out

    return fn, frozenset(var)


def _tanh(role, n, d, params, row):
    """Componentwise scale * tanh(x^i) + shift."""
    scale = float(params.get("scale", 1.0))
    shift = float(params.get("shift", 0.0))
    return (lambda t, x, y, z: scale * np.tanh(x) + shift), frozenset("x")


def _tanh_quadratic(role, n, d, params, row):
    """Generator component a * tanh(mean x) + (gamma/2) |z|^2 + c."""
    if role != "g":
        raise ValueError("tanh_quadratic is a generator")
    a = float(params.get("a", 0.0))
    gamma = float(params.get("gamma", 1.0))
    c = float(params.get("c", 0.0))

    def fn(t, x, y, z):
        out = 0.5 * gamma * np.sum(z * z, axis=1) + c
        if a:
            out = out + a * np.tanh(x.mean(axis=1))
        return out

    return fn, frozenset("xz" if a else "z")


COEFFICIENTS: dict[str, Callable] = {
    "zero": _zero,
    "constant": _constant,
    "identity": _identity,
    "tanh_mean": _tanh_mean,
    "tanh": _tanh,
    "tanh_quadratic": _tanh_quadratic,
}


def _role_shape(role, n, d):
    return {"b": (n,), "sigma": (n, d), "h": (n,), "g": ()}[role]


def make_coefficient(role: str, name: str, n: int, d: int, params: dict | None = None, row: int | None = None) -> CoefficientFn:
    if name not in COEFFICIENTS:
        raise KeyError(f"unknown built-in coefficient {name!r}; known: {sorted(COEFFICIENTS)}")
    params = dict(params or {})
    fn, reads = COEFFICIENTS[name](role, n, d, params, row)
    z_rows = (row,) if (role == "g" and "z" in reads) else ()
    key = ("builtin", role, name, n, d, _freeze(params))
    return CoefficientFn(fn, _role_shape(role, n, d), frozenset(reads), key, z_rows)


def _x0(value, n):
    return np.broadcast_to(np.asarray(value, dtype=float), (n,)).copy()


def _trivial_zero(n=1, d=1, T=1.0, C=1.0, x0=0.0):
    return dict(
        n=n, d=d, T=T, C=C, x0=_x0(x0, n),
        b=("zero", {}), sigma=("zero", {}), h=("zero", {}), g=[("zero", {})] * n,
    )


def _bounding_ode(n=1, d=1, T=1.0, C=1.0, x0=0.0, sigma=0.0):
    return dict(
        n=n, d=d, T=T, C=C, x0=_x0(x0, n),
        b=("zero", {}), sigma=("constant", {"value": sigma}), h=("zero", {}), g=[("zero", {})] * n,
    )


def _decoupled_quadratic(gamma=1.0, T=1.0, C=None, x0=0.0):
    C = max(1.0, gamma / 2.0) if C is None else C
    return dict(
        n=1, d=1, T=T, C=C, x0=_x0(x0, 1),
        b=("zero", {}), sigma=("identity", {"scale": 1.0}), h=("tanh", {}),
        g=[("tanh_quadratic", {"gamma": gamma})],
    )


def _coupled_smooth(n=1, T=1.0, C=None, x0=0.0, coupling=0.2, gamma=1.0, terminal_shift=0.0):
    # |I_n| = |tanh(x)|_max = sqrt(n) sets the smallest admissible C
    C = max(1.0, float(np.sqrt(n))) if C is None else C
    return dict(
        n=n, d=n, T=T, C=C, x0=_x0(x0, n),
        b=("tanh_mean", {"var": "y", "scale": coupling}),
        sigma=("identity", {"scale": 1.0}),
        h=("tanh", {"shift": terminal_shift}),
        g=[("tanh_quadratic", {"a": coupling, "gamma": gamma})] * n,
    )


PROBLEMS: dict[str, Callable] = {
    "trivial-zero": _trivial_zero,
    "bounding-ode": _bounding_ode,
    "decoupled-quadratic": _decoupled_quadratic,
    "coupled-smooth": _coupled_smooth,
}


def problem_names() -> list[str]:
    return sorted(PROBLEMS)


def problem_spec(name: str, **params) -> dict:
    """Raw specification: dimensions, constants and (builtin name, params) per role."""
    if name not in PROBLEMS:
        raise KeyError(f"unknown model {name!r}; known: {problem_names()}")
    return PROBLEMS[name](**params)


def build_problem(spec: dict, name: str = "") -> FBSDEProblem:
    """Turn a spec whose roles are (builtin, params) pairs or CoefficientFns into a problem."""
    n, d = int(spec["n"]), int(spec["d"])

    def coef(role, entry, row=None):
        if isinstance(entry, CoefficientFn):
            return entry
        kind, params = entry
        return make_coefficient(role, kind, n, d, params, row)

    return FBSDEProblem(
        n=n, d=d, T=float(spec["T"]), x0=spec["x0"],
        b=coef("b", spec["b"]), sigma=coef("sigma", spec["sigma"]), h=coef("h", spec["h"]),
        g=[coef("g", e, i) for i, e in enumerate(spec["g"])],
        C=float(spec["C"]), name=name,
    )


def make_problem(name: str, **params) -> FBSDEProblem:
    return build_problem(problem_spec(name, **params), name)
