"""Empirical norms, the BMO energy ceiling and discrete residuals.

Norm estimators on M paths and an N-step grid (|.| is the Euclidean norm
over components, Riemann sums use left endpoints)::

    S^inf = max_{m,j} |V_mj|
    S^p   = (mean_m max_j |V_mj|^p)^(1/p)
    H^p   = (mean_m (sum_{j<N} |V_mj|^2 dt)^(p/2))^(1/p)
    BMO_2 = max_j max_m sqrt(E_j[sum_{l>=j} |Z_ml|^2 dt])

The BMO supremum runs over grid nodes rather than all stopping times, and
E_j is the same regression basis the solver uses.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .backward import RegressionBasis, regress_conditional
from .model import FBSDEProblem
from .simulation import BrownianBundle, TimeGrid

__all__ = [
    "NormReport",
    "ResidualReport",
    "sup_norm",
    "s_norm",
    "h_norm",
    "bmo2",
    "estimate_norms",
    "phi",
    "phi_prime",
    "bmo_ceiling",
    "phi_bound_check",
    "residual_check",
]


def _pointwise(V: np.ndarray) -> np.ndarray:
    """|V| per (path, node); V has shape (M, J, ...)."""
    if V.size == 0:
        raise ValueError("empty process")
    return np.sqrt(np.sum(V.reshape(V.shape[0], V.shape[1], -1) ** 2, axis=2))


def sup_norm(V: np.ndarray) -> float:
    return float(_pointwise(V).max())


def s_norm(V: np.ndarray, p: float) -> float:
    running_max = _pointwise(V).max(axis=1)
    return float(np.mean(running_max**p) ** (1.0 / p))


def h_norm(V: np.ndarray, p: float, dt: float, steps: int) -> float:
    sq = _pointwise(V)[:, :steps] ** 2
    qv = sq.sum(axis=1) * dt
    return float(np.mean(qv ** (p / 2.0)) ** (1.0 / p))


def bmo2(Z: np.ndarray, dt: float, cond: np.ndarray | None = None, basis: RegressionBasis = RegressionBasis()) -> float:
    """Grid-node BMO_2 estimate of the stochastic integral of Z.

    ``Z`` is (M, N, ...).  ``cond`` (M, >=N, k) is the conditioning state;
    without it each node's conditional expectation is the plain cross-path
    mean.
    """
    zz = _pointwise(Z) ** 2 * dt  # (M, N)
    tail = np.cumsum(zz[:, ::-1], axis=1)[:, ::-1]  # sum_{l >= j}
    best = 0.0
    for j in range(zz.shape[1]):
        target = tail[:, j]
        mean = target.mean()
        if cond is None:
            fitted_max = mean
        else:
            _, fit = regress_conditional(target, basis.features(cond[:, j]))
            fitted_max = float(fit.max())
        best = max(best, fitted_max)
    return math.sqrt(max(best, 0.0))


@dataclass
class NormReport:
    sup: float
    S: dict
    H: dict
    bmo2: float | None = None
    phi_check: dict | None = None

    def to_dict(self) -> dict:
        return {
            "S_inf": self.sup,
            "S_p": {str(k): v for k, v in self.S.items()},
            "H_p": {str(k): v for k, v in self.H.items()},
            "BMO2": self.bmo2,
            "phi_check": self.phi_check,
        }


def estimate_norms(
    proc: np.ndarray,
    z_proc: np.ndarray | None,
    grid: TimeGrid,
    p_list: Sequence[float] = (2, 4, 8),
    cond: np.ndarray | None = None,
    basis: RegressionBasis = RegressionBasis(),
) -> NormReport:
    """S^inf, S^p and H^p of ``proc`` (M, N+1, ...) and BMO_2 of ``z_proc`` (M, N, ...)."""
    sup = sup_norm(proc)
    S = {p: s_norm(proc, p) for p in p_list}
    H = {p: h_norm(proc, p, grid.dt, grid.N) for p in p_list}
    b = bmo2(z_proc, grid.dt, cond, basis) if z_proc is not None else None
    return NormReport(sup, S, H, b)


def phi(x, C: float):
    """(exp(2C|x|) - 2C|x| - 1) / (4C^2), computed with expm1 near the origin."""
    a = 2.0 * C * np.abs(x)
    return (np.expm1(a) - a) / (4.0 * C * C)


def phi_prime(x, C: float):
    return np.expm1(2.0 * C * np.abs(x)) / (2.0 * C) * np.sign(x)


def bmo_ceiling(K: float, C: float, T: float) -> float:
    """phi(K) + C T phi'(K) (1 + K): a priori cap on half the BMO energy of each Z row."""
    return float(phi(K, C) + C * T * phi_prime(K, C) * (1.0 + K))


def phi_bound_check(
    y_norm_K: float,
    z_proc: np.ndarray,
    p: FBSDEProblem,
    grid: TimeGrid,
    cond: np.ndarray | None = None,
    basis: RegressionBasis = RegressionBasis(),
) -> dict:
    """Compare half the squared BMO_2 estimate of each Z row with the ceiling.

    The bound holds row by row, so the worst row is reported.
    """
    if y_norm_K < 0:
        raise ValueError("K must be nonnegative")
    ceiling = bmo_ceiling(y_norm_K, p.C, p.T)
    rows = [bmo2(z_proc[:, :, i], grid.dt, cond, basis) for i in range(z_proc.shape[2])]
    lhs = 0.5 * max(rows) ** 2 if rows else 0.0
    return {"K": float(y_norm_K), "C": p.C, "T": p.T, "lhs": lhs, "ceiling": ceiling,
            "row_bmo2": rows, "passed": bool(lhs <= ceiling)}


@dataclass
class ResidualReport:
    forward_max: float
    forward_rms: float
    backward_max: float
    backward_rms: float
    terminal_max: float
    backward_worst_at: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def residual_check(
    p: FBSDEProblem,
    X: np.ndarray,
    Y: np.ndarray,
    Z: np.ndarray,
    bundle: BrownianBundle,
    grid: TimeGrid,
) -> ResidualReport:
    """Discrete defects of a candidate solution on the bundle that produced it.

    forward:  X_{j+1} - X_j - b dt - sigma dW
    backward: Y_j - Y_{j+1} - g dt + Z_j dW
    terminal: Y_N - h(X_N)
    """
    M, N = bundle.M, grid.N
    n, d = p.n, p.d
    if X.shape != (M, N + 1, n) or Y.shape != (M, N + 1, n) or Z.shape != (M, N, n, d):
        raise ValueError(f"shape mismatch: X {X.shape}, Y {Y.shape}, Z {Z.shape} for M={M}, N={N}, n={n}, d={d}")
    dt = grid.dt
    dW = bundle.increments
    fwd = np.empty((M, N, n))
    bwd = np.empty((M, N, n))
    for j in range(N):
        t = grid.nodes[j]
        x, y = X[:, j, :], Y[:, j, :]
        euler = x + p.drift(t, x, y) * dt + np.einsum("mid,md->mi", p.diffusion(t, x), dW[:, j, :])
        fwd[:, j] = X[:, j + 1, :] - euler
        mart = np.einsum("mid,md->mi", Z[:, j], dW[:, j, :])
        bwd[:, j] = y - Y[:, j + 1, :] - p.generator(t, x, y, Z[:, j]) * dt + mart
    term = np.abs(Y[:, N, :] - p.terminal(X[:, N, :]))
    absb = np.abs(bwd)
    loc = [int(v) for v in np.unravel_index(int(np.argmax(absb)), absb.shape)]
    return ResidualReport(
        forward_max=float(np.abs(fwd).max()),
        forward_rms=float(np.sqrt(np.mean(fwd**2))),
        backward_max=float(absb.max()),
        backward_rms=float(np.sqrt(np.mean(bwd**2))),
        terminal_max=float(term.max()),
        backward_worst_at={"path": loc[0], "step": loc[1], "component": loc[2]},
    )
