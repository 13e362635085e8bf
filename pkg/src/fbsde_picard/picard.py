"""Monotone Picard iteration for the coupled system.

Starting from the seed pair (Y0, X0) built from the worst-case lower driver,
iterate k = 1, 2, ...::

    Y^(k) <- backward solve with generator g(., X^(k-1), ., .) and terminal h(X^(k-1)_T)
    X^(k) <- forward Euler with drift b(., ., Y^(k))

on a single Brownian bundle.  Under (A1)-(A7) the iterates increase pathwise
and stay below the bounding processes (U, S); the statistics recorded here
measure how closely the discrete scheme respects that.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .backward import BackwardOpts, BSDESolution, RegressionBasis, solve_bounding_U, solve_bsde, solve_seed_Y0
from .model import FBSDEProblem, require_valid
from .simulation import BrownianBundle, TimeGrid, euler_forward, make_grid, sample_brownian, simulate_bounding_S

__all__ = [
    "IterationConfig",
    "IterationState",
    "ConvergenceReport",
    "EnvelopeAlarm",
    "ConvergenceError",
    "initialize",
    "iterate_once",
    "run",
    "check_monotone_envelope",
    "violation_stats",
]

log = logging.getLogger(__name__)


class EnvelopeAlarm(ArithmeticError):
    pass


class ConvergenceError(ArithmeticError):
    def __init__(self, message: str, report: "ConvergenceReport"):
        self.report = report
        super().__init__(message)


@dataclass(frozen=True)
class IterationConfig:
    paths: int = 20000
    steps: int = 50
    seed: int = 0
    tol: float = 1e-3
    max_iter: int = 20
    basis: RegressionBasis = RegressionBasis()
    backward: BackwardOpts = BackwardOpts()
    projection: bool = True
    alarm: float = 0.01  # tolerated fraction of envelope violations
    residual_budget: float | None = None  # None: sqrt(dt)

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.paths < 1 or self.steps < 1:
            raise ValueError("paths and steps must be positive")


@dataclass(frozen=True, eq=False)
class IterationState:
    k: int
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    U: BSDESolution
    S: np.ndarray
    Y0: BSDESolution
    grid: TimeGrid
    bundle: BrownianBundle
    eps_mono: float
    last: BSDESolution | None = None  # most recent backward solve
    history: tuple = ()
    initial: dict = field(default_factory=dict)


@dataclass
class ConvergenceReport:
    converged: bool
    final_k: int
    converged_k: int | None  # first iterate reproduced by its successor within tol
    supdiff_X: float
    supdiff_Y: float
    eps_mono: float
    history: list
    initial: dict
    meta: dict
    residuals: dict | None = None
    residual_ok: bool | None = None

    def violation_fractions(self) -> list[dict]:
        keys = ("Y_mono", "X_mono", "Y_upper", "X_upper")
        return [{"k": h["k"], **{key: h[key]["fraction"] for key in keys}} for h in self.history]

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "final_k": self.final_k,
            "converged_k": self.converged_k,
            "supdiff_X": self.supdiff_X,
            "supdiff_Y": self.supdiff_Y,
            "eps_mono": self.eps_mono,
            "initial": self.initial,
            "history": [{k: v for k, v in h.items() if k != "runtime"} for h in self.history],
            "meta": self.meta,
            "residuals": self.residuals,
            "residual_ok": self.residual_ok,
        }


def violation_stats(lower: np.ndarray, upper: np.ndarray, eps: float) -> dict:
    """Share of entries with lower > upper + eps, and the worst excess with its location."""
    excess = lower - upper
    bad = excess > eps
    flat = int(np.argmax(excess))
    loc = [int(v) for v in np.unravel_index(flat, excess.shape)]
    return {
        "fraction": float(bad.mean()),
        "count": int(bad.sum()),
        "worst": float(max(excess.flat[flat], 0.0)),
        "where": {"path": loc[0], "node": loc[1], "component": loc[2]},
    }


def _sup(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)))


def initialize(p: FBSDEProblem, cfg: IterationConfig, bundle: BrownianBundle | None = None) -> IterationState:
    """Bounding processes (U, S), seed (Y0, Z0) and X0 on one bundle."""
    require_valid(p)
    grid = make_grid(p.T, cfg.steps)
    if bundle is None:
        bundle = sample_brownian(cfg.paths, grid, p.d, cfg.seed)
    elif bundle.grid.N != grid.N or bundle.d != p.d or bundle.grid.T != grid.T:
        raise ValueError("supplied bundle does not match the problem grid")
    U = solve_bounding_U(p, grid, bundle, cfg.basis, cfg.backward)
    S = simulate_bounding_S(p, U.Y, bundle, grid)
    Y0 = solve_seed_Y0(p, grid, bundle, cfg.basis, cfg.backward)
    X0 = euler_forward(p, Y0.Y, bundle, grid)
    eps = max(U.eps_mono, Y0.eps_mono)
    initial = {
        "Y0_below_U": violation_stats(Y0.Y, U.Y, eps),
        "X0_below_S": violation_stats(X0, S, eps),
        "U_sup": float(np.max(np.linalg.norm(U.Y, axis=2))),
        "Y0_sup": float(np.max(np.linalg.norm(Y0.Y, axis=2))),
    }
    for key in ("Y0_below_U", "X0_below_S"):
        if initial[key]["fraction"] > cfg.alarm:
            raise EnvelopeAlarm(f"{key} violated on {initial[key]['fraction']:.2%} of entries")
    return IterationState(0, X0, Y0.Y, Y0.Z, U, S, Y0, grid, bundle, eps, None, (), initial)


def iterate_once(state: IterationState, p: FBSDEProblem, cfg: IterationConfig) -> IterationState:
    started = time.perf_counter()
    grid, bundle = state.grid, state.bundle
    N = grid.N
    terminal = p.terminal(state.X[:, N, :])
    sol = solve_bsde(p.g, terminal, state.X, bundle, grid, cfg.basis, cfg.backward)
    Y = sol.Y
    X = euler_forward(p, Y, bundle, grid)
    clips = {"Y_lower": 0, "Y_upper": 0, "X_upper": 0}
    if cfg.projection:
        lo, hi = state.Y0.Y, state.U.Y
        clips["Y_lower"] = int((Y < lo).sum())
        clips["Y_upper"] = int((Y > hi).sum())
        Y = np.clip(Y, lo, hi)
        clips["X_upper"] = int((X > state.S).sum())
        X = np.minimum(X, state.S)
    eps = max(state.eps_mono, sol.eps_mono)
    record = {
        "k": state.k + 1,
        "supdiff_X": _sup(X, state.X),
        "supdiff_Y": _sup(Y, state.Y),
        "Y0_mean": float(Y[:, 0, :].mean()),
        "eps_mono": eps,
        "Y_mono": violation_stats(state.Y, Y, eps),
        "X_mono": violation_stats(state.X, X, eps),
        "Y_upper": violation_stats(Y, state.U.Y, eps),
        "Y_lower": violation_stats(state.Y0.Y, Y, eps),
        "X_upper": violation_stats(X, state.S, eps),
        "clips": clips,
        "truncations": int(sol.truncations.sum()),
        "max_inner_residual": float(sol.inner_residuals.max()),
        "runtime": time.perf_counter() - started,
    }
    log.debug("k=%d supdiff_X=%.3e supdiff_Y=%.3e", record["k"], record["supdiff_X"], record["supdiff_Y"])
    return replace(state, k=state.k + 1, X=X, Y=Y, Z=sol.Z, last=sol, eps_mono=eps, history=state.history + (record,))


def check_monotone_envelope(state: IterationState) -> dict:
    """Violation statistics of the latest step for the four envelope inequalities."""
    if state.k < 1:
        raise ValueError("no iterate to check yet")
    h = state.history[-1]
    return {key: h[key] for key in ("Y_mono", "X_mono", "Y_upper", "X_upper", "Y_lower")}


def run(p: FBSDEProblem, cfg: IterationConfig, bundle: BrownianBundle | None = None):
    """Iterate until both sup-differences are <= tol.

    Returns ``((X, Y, Z), report, state)``.  Raises :class:`ConvergenceError`
    (carrying the report) when ``max_iter`` is exhausted.
    """
    from .diagnostics import residual_check

    state = initialize(p, cfg, bundle)
    converged = False
    while state.k < cfg.max_iter:
        state = iterate_once(state, p, cfg)
        h = state.history[-1]
        if h["supdiff_X"] <= cfg.tol and h["supdiff_Y"] <= cfg.tol:
            converged = True
            break
    last = state.history[-1]
    res = residual_check(p, state.X, state.Y, state.Z, state.bundle, state.grid)
    budget = cfg.residual_budget if cfg.residual_budget is not None else float(np.sqrt(state.grid.dt))
    report = ConvergenceReport(
        converged=converged,
        final_k=state.k,
        converged_k=state.k - 1 if converged else None,
        supdiff_X=last["supdiff_X"],
        supdiff_Y=last["supdiff_Y"],
        eps_mono=state.eps_mono,
        history=list(state.history),
        initial=state.initial,
        meta={
            "seed": state.bundle.seed,
            "paths": state.bundle.M,
            "steps": state.grid.N,
            "T": state.grid.T,
            "degree": cfg.basis.degree,
            "knots": cfg.basis.knots,
            "tol": cfg.tol,
            "projection": cfg.projection,
            "problem": p.name,
        },
        residuals=res.to_dict(),
        residual_ok=res.backward_rms <= budget,
    )
    if not converged:
        raise ConvergenceError(f"no convergence within {cfg.max_iter} iterations", report)
    return (state.X, state.Y, state.Z), report, state
