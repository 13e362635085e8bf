"""Problem definition and sample-based assumption probes.

A problem couples a forward SDE for X with an n-component backward equation
for (Y, Z) whose i-th generator reads only the i-th row of Z.  The probes
sample a finite ball and test the growth, Lipschitz and quasi-monotonicity
conditions (A1)-(A7) under which the monotone Picard scheme is known to
converge to the minimal solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import dsl

__all__ = [
    "CoefficientFn",
    "CoefficientError",
    "FBSDEProblem",
    "Defect",
    "ValidationError",
    "validate_problem",
    "require_valid",
    "AssumptionEntry",
    "AssumptionReport",
    "probe_growth_lipschitz",
    "probe_quasi_monotonicity",
    "probe_all",
    "RATIO_TOL",
    "ORDER_TOL",
]

RATIO_TOL = 1e-6
ORDER_TOL = 1e-9

ROLES = {
    "b": frozenset("txy"),
    "sigma": frozenset("tx"),
    "h": frozenset("x"),
    "g": frozenset("txyz"),
}


class CoefficientError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class CoefficientFn:
    """A deterministic coefficient evaluated over a batch of M points.

    ``fn(t, x, y, z)`` receives ``t`` as a float, ``x``/``y`` as (M, n) and
    ``z`` as the (M, d) diagonal row, and returns an array of shape
    ``(M, *shape)``.  ``reads`` lists the argument kinds actually used and
    ``z_rows`` the rows of Z a generator component depends on.  ``key`` is a
    hashable structural identity (two coefficients with equal keys are the
    same function).
    """

    fn: Callable
    shape: tuple
    reads: frozenset
    key: tuple
    z_rows: tuple = ()

    def __call__(self, t, x=None, y=None, z=None) -> np.ndarray:
        out = np.asarray(self.fn(t, x, y, z), dtype=float)
        return out

    def same_as(self, other: "CoefficientFn") -> bool:
        return self.key == other.key and self.shape == other.shape

    @classmethod
    def from_exprs(cls, texts, dims: tuple[int, int], role: str, row: int | None = None):
        """Compile DSL strings: a scalar string, a list (vector) or list of lists (matrix)."""
        arr = np.array(texts, dtype=object)
        exprs = np.empty(arr.shape, dtype=object)
        for idx in np.ndindex(arr.shape):
            exprs[idx] = dsl.fold_constants(dsl.parse(str(arr[idx]), dims))
        reads = frozenset().union(*(e.variables for e in exprs.flat))
        shape = arr.shape
        flat = list(exprs.flat)

        def fn(t, x, y, z):
            m = _batch_size(x, y, z)
            cols = [dsl.evaluate_arrays(e, t, x, y, z, check=False) for e in flat]
            out = np.stack([np.broadcast_to(c, (m,)) for c in cols], axis=1) if cols else np.empty((m, 0))
            return out.reshape((m,) + shape)

        z_rows = (row,) if (row is not None and "z" in reads) else ()
        key = ("dsl", role, shape, tuple(dsl.to_text(e.root) for e in flat))
        return cls(fn, shape, reads, key, z_rows)


def _batch_size(*arrays) -> int:
    for a in arrays:
        if a is not None:
            return np.shape(a)[0]
    return 1


@dataclass(eq=False)
class FBSDEProblem:
    n: int
    d: int
    T: float
    x0: np.ndarray
    b: CoefficientFn
    sigma: CoefficientFn
    h: CoefficientFn
    g: Sequence[CoefficientFn]
    C: float
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        self.g = tuple(self.g)

    # batched role evaluators; shapes (M, n), (M, n, d), (M, n), (M, n)
    def drift(self, t, x, y):
        return self.b(t, x, y, None)

    def diffusion(self, t, x):
        return self.sigma(t, x, None, None)

    def terminal(self, x):
        return self.h(None, x, None, None)

    def generator(self, t, x, y, z):
        """All generator components; ``z`` has shape (M, n, d)."""
        return np.stack([gi(t, x, y, z[:, i, :]) for i, gi in enumerate(self.g)], axis=1)


# ---------------------------------------------------------------------------
# Structural validation


@dataclass(frozen=True)
class Defect:
    kind: str  # 'dimension', 'positivity', 'foreign_z_row', 'arity', 'evaluation'
    message: str


class ValidationError(ValueError):
    def __init__(self, defects: list[Defect]):
        self.defects = defects
        super().__init__("; ".join(f"{d.kind}: {d.message}" for d in defects))


def validate_problem(p: FBSDEProblem) -> list[Defect]:
    """Structural defects of ``p``; an empty list means the problem is well formed."""
    defects: list[Defect] = []
    if not (isinstance(p.n, (int, np.integer)) and p.n >= 1):
        defects.append(Defect("dimension", f"n must be a positive integer, got {p.n!r}"))
    if not (isinstance(p.d, (int, np.integer)) and p.d >= 1):
        defects.append(Defect("dimension", f"d must be a positive integer, got {p.d!r}"))
    if not p.T > 0:
        defects.append(Defect("positivity", f"T must be positive, got {p.T}"))
    if not p.C > 0:
        defects.append(Defect("positivity", f"C must be positive, got {p.C}"))
    if defects:
        return defects

    n, d = int(p.n), int(p.d)
    if p.x0.shape != (n,):
        defects.append(Defect("dimension", f"x0 has shape {p.x0.shape}, expected ({n},)"))
    expected = {"b": (n,), "sigma": (n, d), "h": (n,)}
    for role, want in expected.items():
        coef = getattr(p, role)
        if tuple(coef.shape) != want:
            defects.append(Defect("dimension", f"{role} declares output {coef.shape}, expected {want}"))
        extra = coef.reads - ROLES[role]
        if extra:
            defects.append(Defect("arity", f"{role} reads {sorted(extra)} outside {sorted(ROLES[role])}"))
    if len(p.g) != n:
        defects.append(Defect("dimension", f"g has {len(p.g)} components, expected {n}"))
    for i, gi in enumerate(p.g):
        if tuple(gi.shape) not in ((), (1,)):
            defects.append(Defect("dimension", f"g[{i}] declares output {gi.shape}, expected scalar"))
        foreign = [r for r in gi.z_rows if r != i]
        if foreign:
            defects.append(Defect("foreign_z_row", f"g[{i}] reads z rows {foreign}"))
    if defects:
        return defects

    # one evaluation at the origin to confirm the declared shapes
    zero_n = np.zeros((1, n))
    try:
        checks = {
            "b": (p.b(0.0, zero_n, zero_n, None), (1, n)),
            "sigma": (p.sigma(0.0, zero_n, None, None), (1, n, d)),
            "h": (p.h(None, zero_n, None, None), (1, n)),
        }
        for i, gi in enumerate(p.g):
            checks[f"g[{i}]"] = (gi(0.0, zero_n, zero_n, np.zeros((1, d))).reshape(-1), (1,))
    except Exception as err:  # noqa: BLE001 - any coefficient failure is a defect
        return [Defect("evaluation", f"coefficient evaluation failed: {err}")]
    for role, (val, want) in checks.items():
        if val.shape != want:
            defects.append(Defect("dimension", f"{role} returned shape {val.shape[1:]}, expected {want[1:]}"))
    return defects


def require_valid(p: FBSDEProblem) -> None:
    defects = validate_problem(p)
    if defects:
        raise ValidationError(defects)


# ---------------------------------------------------------------------------
# Assumption probes


@dataclass
class AssumptionEntry:
    name: str
    description: str
    probes: int
    worst: float
    tolerance: float
    passed: bool
    witness: dict | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "probes": self.probes,
            "worst": self.worst,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "witness": self.witness,
        }


@dataclass
class AssumptionReport:
    entries: dict[str, AssumptionEntry]
    radius: float
    num_probes: int
    seed: int

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries.values())

    def merged(self, other: "AssumptionReport") -> "AssumptionReport":
        return AssumptionReport({**self.entries, **other.entries}, self.radius, self.num_probes, self.seed)

    def failures(self) -> list[str]:
        return [k for k, e in self.entries.items() if not e.passed]

    def to_dict(self) -> dict:
        return {
            "region": {"shape": "ball", "radius": self.radius},
            "num_probes": self.num_probes,
            "seed": self.seed,
            "passed": self.passed,
            "entries": {k: e.to_dict() for k, e in self.entries.items()},
        }


class _Tracker:
    """Running worst value of a ratio (or violation) with its witness."""

    def __init__(self, name, description, tolerance, threshold):
        self.name = name
        self.description = description
        self.tolerance = tolerance
        self.threshold = threshold
        self.count = 0
        self.worst = 0.0
        self.witness = None

    def update(self, values: np.ndarray, witness_fn: Callable[[int], dict]):
        values = np.asarray(values, dtype=float)
        self.count += values.size
        if values.size == 0:
            return
        if np.isnan(values).any():
            k = int(np.argmax(np.isnan(values)))
            raise CoefficientError(f"{self.name}: non-finite coefficient value at {witness_fn(k)}")
        k = int(np.argmax(values))
        if self.witness is None or values[k] > self.worst:
            self.worst = float(values[k])
            self.witness = witness_fn(k)

    def entry(self) -> AssumptionEntry:
        passed = self.worst <= self.threshold + self.tolerance
        return AssumptionEntry(self.name, self.description, self.count, self.worst,
                               self.tolerance, passed, self.witness)


def _ball(rng: np.random.Generator, m: int, k: int, radius: float) -> np.ndarray:
    """Uniform samples in the k-dimensional ball of the given radius."""
    v = rng.standard_normal((m, k))
    v /= np.maximum(np.linalg.norm(v, axis=1, keepdims=True), 1e-300)
    r = radius * rng.random(m) ** (1.0 / k)
    return v * r[:, None]


def _norm(a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(a.reshape(a.shape[0], -1) ** 2, axis=1))


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.where(num > 0, np.inf, 0.0))
    return r


def _eval_checked(coef: CoefficientFn, *args) -> np.ndarray:
    try:
        with np.errstate(all="ignore"):
            out = coef(*args)
    except Exception as err:  # noqa: BLE001
        raise CoefficientError(f"coefficient evaluation failed: {err}") from err
    if not np.all(np.isfinite(out)):
        raise CoefficientError("coefficient returned non-finite values at a probe point")
    return out


def _w(**arrays) -> dict:
    return {k: (np.asarray(v).tolist() if np.ndim(v) else float(v)) for k, v in arrays.items()}


def probe_growth_lipschitz(
    p: FBSDEProblem,
    num_probes: int = 1000,
    radius: float = 5.0,
    seed: int = 0,
    tol: float = RATIO_TOL,
) -> AssumptionReport:
    """Worst-case growth and Lipschitz ratios for (A1)-(A4) over a ball.

    Each probe draws a base point and compares it with a jointly perturbed
    point and with points perturbed in one argument at a time, so that a
    ratio like |b(x) - b(x')| / (C|x - x'|) is seen without dilution by the
    other arguments.  (A4) is additionally scanned over several x values for
    each fixed (y, z) since its bound does not involve x.
    """
    require_valid(p)
    n, d, C = p.n, p.d, p.C
    rng = np.random.default_rng(seed)
    m = int(num_probes)

    t = rng.random(m) * p.T
    x, xb = _ball(rng, m, n, radius), _ball(rng, m, n, radius)
    y, yb = _ball(rng, m, n, radius), _ball(rng, m, n, radius)
    z, zb = _ball(rng, m, d, radius), _ball(rng, m, d, radius)
    # axis-aligned partner: unit steps along a random coordinate
    axis_x = np.zeros((m, n))
    axis_x[np.arange(m), rng.integers(0, n, m)] = 1.0
    axis_y = np.zeros((m, n))
    axis_y[np.arange(m), rng.integers(0, n, m)] = 1.0
    axis_z = np.zeros((m, d))
    axis_z[np.arange(m), rng.integers(0, d, m)] = 1.0

    trackers = {
        "A1_growth": _Tracker("A1_growth", "|b(t,x,y)| / (C(1+|x|+|y|))", tol, 1.0),
        "A1_lipschitz": _Tracker("A1_lipschitz", "|b(x,y)-b(x',y')| / (C(|x-x'|+|y-y'|))", tol, 1.0),
        "A2_growth": _Tracker("A2_growth", "|sigma(t,x)| / (C(1+|x|))", tol, 1.0),
        "A2_lipschitz": _Tracker("A2_lipschitz", "|sigma(x)-sigma(x')| / (C|x-x'|)", tol, 1.0),
        "A3_bound": _Tracker("A3_bound", "|h(x)| / C", tol, 1.0),
        "A3_lipschitz": _Tracker("A3_lipschitz", "|h(x)-h(x')| / (C|x-x'|)", tol, 1.0),
        "A4_growth": _Tracker("A4_growth", "|g^i(t,x,y,z^i)| / (C(1+|y|+|z^i|^2))", tol, 1.0),
        "A4_lipschitz": _Tracker(
            "A4_lipschitz",
            "|g^i - g^i'| / (C|x-x'| + C|y-y'| + C(1+|z|+|z'|)|z-z'|)",
            tol,
            1.0,
        ),
    }

    # (A1)
    bx = _eval_checked(p.b, t, x, y, None)
    tr = trackers["A1_growth"]
    tr.update(_norm(bx) / (C * (1 + _norm(x) + _norm(y))), lambda k: _w(t=t[k], x=x[k], y=y[k]))
    for x2, y2 in ((xb, yb), (x + axis_x, y), (x, y + axis_y)):
        b2 = _eval_checked(p.b, t, x2, y2, None)
        ratio = _safe_ratio(_norm(bx - b2), C * (_norm(x - x2) + _norm(y - y2)))
        trackers["A1_lipschitz"].update(
            ratio, lambda k, x2=x2, y2=y2: _w(t=t[k], x=x[k], y=y[k], x_bar=x2[k], y_bar=y2[k])
        )

    # (A2)
    sx = _eval_checked(p.sigma, t, x, None, None)
    trackers["A2_growth"].update(_norm(sx) / (C * (1 + _norm(x))), lambda k: _w(t=t[k], x=x[k]))
    for x2 in (xb, x + axis_x):
        s2 = _eval_checked(p.sigma, t, x2, None, None)
        trackers["A2_lipschitz"].update(
            _safe_ratio(_norm(sx - s2), C * _norm(x - x2)),
            lambda k, x2=x2: _w(t=t[k], x=x[k], x_bar=x2[k]),
        )

    # (A3)
    hx = _eval_checked(p.h, None, x, None, None)
    trackers["A3_bound"].update(_norm(hx) / C, lambda k: _w(x=x[k]))
    for x2 in (xb, x + axis_x):
        h2 = _eval_checked(p.h, None, x2, None, None)
        trackers["A3_lipschitz"].update(
            _safe_ratio(_norm(hx - h2), C * _norm(x - x2)), lambda k, x2=x2: _w(x=x[k], x_bar=x2[k])
        )

    # (A4): growth scanned over several x at fixed (t, y, z)
    for i, gi in enumerate(p.g):
        for _ in range(4):
            xs = _ball(rng, m, n, radius)
            gv = _eval_checked(gi, t, xs, y, z).reshape(m)
            trackers["A4_growth"].update(
                np.abs(gv) / (C * (1 + _norm(y) + _norm(z) ** 2)),
                lambda k, xs=xs: _w(component=i, t=t[k], x=xs[k], y=y[k], z=z[k]),
            )
        g0 = _eval_checked(gi, t, x, y, z).reshape(m)
        for x2, y2, z2 in ((xb, yb, zb), (x + axis_x, y, z), (x, y + axis_y, z), (x, y, zb), (x, y, z + axis_z)):
            g2 = _eval_checked(gi, t, x2, y2, z2).reshape(m)
            den = C * _norm(x - x2) + C * _norm(y - y2) + C * (1 + _norm(z) + _norm(z2)) * _norm(z - z2)
            trackers["A4_lipschitz"].update(
                _safe_ratio(np.abs(g0 - g2), den),
                lambda k, x2=x2, y2=y2, z2=z2: _w(
                    component=i, t=t[k], x=x[k], y=y[k], z=z[k], x_bar=x2[k], y_bar=y2[k], z_bar=z2[k]
                ),
            )

    return AssumptionReport({k: v.entry() for k, v in trackers.items()}, radius, m, seed)


def _ordered_offsets(rng: np.random.Generator, m: int, k: int, radius: float) -> np.ndarray:
    """Nonnegative offsets; about half the entries are exactly zero to hit cone faces."""
    off = rng.random((m, k)) * radius
    off[rng.random((m, k)) < 0.5] = 0.0
    return off


def probe_quasi_monotonicity(
    p: FBSDEProblem,
    num_probes: int = 1000,
    radius: float = 5.0,
    seed: int = 0,
    tol: float = ORDER_TOL,
) -> AssumptionReport:
    """Worst violation of the ordering conditions (A5)-(A7) on random ordered pairs."""
    require_valid(p)
    return _order_probe(p, p, num_probes, radius, seed, tol, prefix="A")


def _order_probe(pa, pb, num_probes, radius, seed, tol, prefix) -> AssumptionReport:
    n, d = pa.n, pa.d
    rng = np.random.default_rng(seed)
    m = int(num_probes)
    names = {
        "b": f"{prefix}5_drift_order",
        "h": f"{prefix}6_terminal_order",
        "g": f"{prefix}7_generator_order",
    }
    trackers = {
        "b": _Tracker(names["b"], "b^i(t,x,y) <= b_bar^i(t,x',y') for x^i=x'^i, x^j<=x'^j, y<=y'", tol, 0.0),
        "h": _Tracker(names["h"], "h(x) <= h_bar(x') for x<=x'", tol, 0.0),
        "g": _Tracker(names["g"], "g^i(t,x,y,z) <= g_bar^i(t,x',y',z) for y^i=y'^i, y^j<=y'^j, x<=x'", tol, 0.0),
    }
    t = rng.random(m) * pa.T

    for i in range(n):
        x = _ball(rng, m, n, radius)
        y = _ball(rng, m, n, radius)
        dx = _ordered_offsets(rng, m, n, radius)
        dx[:, i] = 0.0
        xb = x + dx
        yb = y + _ordered_offsets(rng, m, n, radius)
        lhs = _eval_checked(pa.b, t, x, y, None)[:, i]
        rhs = _eval_checked(pb.b, t, xb, yb, None)[:, i]
        trackers["b"].update(
            np.maximum(lhs - rhs, 0.0),
            lambda k, x=x, y=y, xb=xb, yb=yb, i=i: _w(component=i, t=t[k], x=x[k], y=y[k], x_bar=xb[k], y_bar=yb[k]),
        )

    x = _ball(rng, m, n, radius)
    xb = x + _ordered_offsets(rng, m, n, radius)
    viol = _eval_checked(pa.h, None, x, None, None) - _eval_checked(pb.h, None, xb, None, None)
    trackers["h"].update(np.maximum(viol.max(axis=1), 0.0), lambda k: _w(x=x[k], x_bar=xb[k]))

    for i in range(n):
        x = _ball(rng, m, n, radius)
        y = _ball(rng, m, n, radius)
        z = _ball(rng, m, d, radius)
        xb = x + _ordered_offsets(rng, m, n, radius)
        dy = _ordered_offsets(rng, m, n, radius)
        dy[:, i] = 0.0
        yb = y + dy
        lhs = _eval_checked(pa.g[i], t, x, y, z).reshape(m)
        rhs = _eval_checked(pb.g[i], t, xb, yb, z).reshape(m)
        trackers["g"].update(
            np.maximum(lhs - rhs, 0.0),
            lambda k, x=x, y=y, z=z, xb=xb, yb=yb, i=i: _w(
                component=i, t=t[k], x=x[k], y=y[k], z=z[k], x_bar=xb[k], y_bar=yb[k]
            ),
        )
    return AssumptionReport({t.name: t.entry() for t in trackers.values()}, radius, m, seed)


def probe_all(
    p: FBSDEProblem,
    num_probes: int = 1000,
    radius: float = 5.0,
    seed: int = 0,
    ratio_tol: float = RATIO_TOL,
    order_tol: float = ORDER_TOL,
) -> AssumptionReport:
    """(A1)-(A7) in one report."""
    return probe_growth_lipschitz(p, num_probes, radius, seed, ratio_tol).merged(
        probe_quasi_monotonicity(p, num_probes, radius, seed, order_tol)
    )
