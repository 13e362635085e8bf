"""Least-squares regression Monte Carlo for diagonally quadratic BSDEs.

One backward step on the grid, for every component i::

    Z^i_j = E_j[ (Y^i_{j+1} - E_j[Y^i_{j+1}]) dW_j ] / dt
    Y^i_j = E_j[Y^i_{j+1}] + g^i(t_j, X_j, Y_j, Z^i_j) dt

Conditional expectations E_j are least-squares projections on polynomials of
the conditioning state at t_j.  The second line is implicit in Y_j and is
solved by fixed-point iteration with Z frozen; the step is a contraction
when dt times the Lipschitz constant of g in y is below one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Callable, Sequence

import numpy as np

from .model import FBSDEProblem
from .simulation import BrownianBundle, TimeGrid

__all__ = [
    "RegressionBasis",
    "BackwardOpts",
    "BSDESolution",
    "RegressionError",
    "InnerFixedPointError",
    "BackwardError",
    "regress_conditional",
    "default_ridge",
    "solve_bsde",
    "solve_bounding_U",
    "solve_seed_Y0",
]


class BackwardError(ArithmeticError):
    pass


class RegressionError(BackwardError):
    pass


class InnerFixedPointError(BackwardError):
    def __init__(self, step: int, residual: float):
        self.step = step
        self.residual = residual
        super().__init__(f"inner fixed point did not converge at step {step} (residual {residual:.3e})")


@dataclass(frozen=True)
class RegressionBasis:
    """Polynomials of total degree <= ``degree`` in the standardized state,
    optionally augmented with ``knots`` hinge functions per coordinate.

    Each state coordinate is centred and scaled by its cross-path mean and
    standard deviation at the current step; coordinates with no spread (for
    example a deterministic initial state) are dropped, so the feature count
    can vary between steps.  With ``knots > 0`` every kept coordinate u also
    contributes max(u - q, 0) for ``knots`` interior quantiles q of u, which
    turns the fit into a piecewise-polynomial spline whose pieces follow the
    sample.  Global polynomials extrapolate badly into the tails of the
    state distribution; the hinge terms keep the fit local there.
    """

    degree: int = 3
    knots: int = 0

    def __post_init__(self):
        if self.degree < 0 or self.knots < 0:
            raise ValueError("degree and knots must be >= 0")

    @property
    def kind(self) -> str:
        return "spline" if self.knots else "polynomial"

    def features(self, state: np.ndarray) -> np.ndarray:
        state = np.asarray(state, dtype=float).reshape(state.shape[0], -1)
        M = state.shape[0]
        mu = state.mean(axis=0)
        sd = state.std(axis=0)
        keep = sd > 1e-12 * np.maximum(1.0, np.abs(mu))
        u = (state[:, keep] - mu[keep]) / sd[keep]
        cols = [np.ones(M)]
        k = u.shape[1]
        for deg in range(1, self.degree + 1):
            for combo in combinations_with_replacement(range(k), deg):
                col = u[:, combo[0]].copy()
                for c in combo[1:]:
                    col *= u[:, c]
                cols.append(col)
        if self.knots:
            levels = np.linspace(0.0, 1.0, self.knots + 2)[1:-1]
            for c in range(k):
                for q in np.quantile(u[:, c], levels):
                    cols.append(np.maximum(u[:, c] - q, 0.0))
        return np.stack(cols, axis=1)


@dataclass(frozen=True)
class BackwardOpts:
    inner_max_iter: int = 200
    inner_tol: float = 1e-10
    z_truncation: float = 0.0  # 0 disables
    ridge: float | None = None  # None: 1e-8 * largest Gram diagonal

    def __post_init__(self):
        if self.inner_max_iter < 1:
            raise ValueError("inner_max_iter must be positive")
        if not self.inner_tol > 0:
            raise ValueError("inner_tol must be positive")
        if self.z_truncation < 0:
            raise ValueError("z_truncation must be >= 0")
        if self.ridge is not None and self.ridge < 0:
            raise ValueError("ridge must be >= 0")


@dataclass(eq=False)
class BSDESolution:
    Y: np.ndarray  # (M, N+1, n)
    Z: np.ndarray  # (M, N, n, d)
    driver: np.ndarray  # (M, N, n), g evaluated at the returned (Y_j, Z_j)
    inner_residuals: np.ndarray  # (N,)
    inner_iterations: np.ndarray  # (N,)
    truncations: np.ndarray  # (N,) count of Z rows shortened
    fit_se: np.ndarray  # (N,) worst per-component standard error of E_j[Y_{j+1}]
    meta: dict = field(default_factory=dict)

    @property
    def eps_mono(self) -> float:
        """Three standard errors of the regression fit at the worst step."""
        return 3.0 * float(self.fit_se.max()) if self.fit_se.size else 0.0


def default_ridge(gram: np.ndarray) -> float:
    return 1e-8 * float(np.max(np.diag(gram)))


def regress_conditional(targets: np.ndarray, features: np.ndarray, ridge: float | None = None):
    """Ridge least squares ``(F'F + ridge I) beta = F'y``.

    ``targets`` is (M,) or (M, q).  Returns ``(beta, fitted)``.  With
    ``ridge=None`` the default 1e-8 * max diag(F'F) is used; ``ridge=0``
    demands full column rank.  When the first feature is a nonzero constant
    it acts as an unpenalized intercept: the ridge is applied to the centred
    targets and the mean is restored afterwards.
    """
    F = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if F.ndim != 2 or F.shape[0] != y.shape[0]:
        raise ValueError(f"features {F.shape} and targets {y.shape} disagree on path count")
    M, p = F.shape
    if p > M:
        raise RegressionError(f"{p} features exceed {M} paths")
    gram = F.T @ F
    lam = default_ridge(gram) if ridge is None else float(ridge)
    if lam == 0.0 and np.linalg.matrix_rank(F) < p:
        raise RegressionError("design matrix is rank deficient and ridge is 0")
    c = F[0, 0] if p else 0.0
    intercept = p > 0 and c != 0.0 and np.all(F[:, 0] == c)
    mean = y.mean(axis=0) if intercept else 0.0
    A = gram + lam * np.eye(p)
    try:
        beta = np.linalg.solve(A, F.T @ (y - mean))
    except np.linalg.LinAlgError as err:
        raise RegressionError(str(err)) from err
    if not np.all(np.isfinite(beta)):
        raise RegressionError("non-finite regression coefficients")
    fitted = F @ beta + mean
    if intercept:
        beta[0] = beta[0] + mean / c
    return beta, fitted


def _truncate_rows(Z: np.ndarray, radius: float) -> int:
    """Shrink rows Z[m, i, :] to norm ``radius`` in place; returns count."""
    norms = np.linalg.norm(Z, axis=2)
    over = norms > radius
    if over.any():
        Z[over] *= (radius / norms[over])[:, None]
    return int(over.sum())


def solve_bsde(
    generator: Sequence[Callable],
    terminal: np.ndarray,
    x_path: np.ndarray,
    bundle: BrownianBundle,
    grid: TimeGrid,
    basis: RegressionBasis = RegressionBasis(),
    opts: BackwardOpts = BackwardOpts(),
) -> BSDESolution:
    """Backward regression solve.

    ``generator[i](t, x, y, z_row)`` returns the i-th driver on a batch
    (z_row is the (M, d) i-th row of Z).  ``x_path`` (M, N+1, k) is both the
    generator's x argument and the conditioning state of the regressions.
    """
    terminal = np.asarray(terminal, dtype=float)
    M, n = terminal.shape
    N, dt = grid.N, grid.dt
    d = bundle.d
    dW = bundle.increments
    if len(generator) != n:
        raise ValueError(f"{len(generator)} generator components for {n} outputs")
    if x_path.shape[:2] != (M, N + 1) or bundle.M != M:
        raise ValueError("x_path, terminal and bundle disagree on paths or steps")
    if not np.all(np.isfinite(terminal)):
        raise BackwardError("terminal values are not finite")

    Y = np.empty((M, N + 1, n))
    Z = np.empty((M, N, n, d))
    driver = np.empty((M, N, n))
    inner_res = np.zeros(N)
    inner_its = np.zeros(N, dtype=int)
    truncs = np.zeros(N, dtype=int)
    fit_se = np.zeros(N)
    Y[:, N, :] = terminal

    def gen(t, x, y, z):
        return np.stack([np.reshape(gi(t, x, y, z[:, i, :]), (M,)) for i, gi in enumerate(generator)], axis=1)

    for j in range(N - 1, -1, -1):
        t = grid.nodes[j]
        x = x_path[:, j]
        F = basis.features(x)
        target = Y[:, j + 1, :]
        _, ey = regress_conditional(target, F, opts.ridge)
        resid = target - ey
        fit_se[j] = float(resid.std(axis=0).max()) * np.sqrt(F.shape[1] / M)

        zt = (resid[:, :, None] * dW[:, j, None, :] / dt).reshape(M, n * d)
        _, zfit = regress_conditional(zt, F, opts.ridge)
        Zj = zfit.reshape(M, n, d)
        if opts.z_truncation > 0:
            truncs[j] = _truncate_rows(Zj, opts.z_truncation)

        y = ey
        res = np.inf
        with np.errstate(all="ignore"):
            for it in range(1, opts.inner_max_iter + 1):
                y_new = ey + dt * gen(t, x, y, Zj)
                res = float(np.max(np.abs(y_new - y)))
                y = y_new
                if not np.isfinite(res):
                    raise BackwardError(f"non-finite value in the implicit step at step {j}")
                if res <= opts.inner_tol:
                    break
            else:
                raise InnerFixedPointError(j, res)
            gfinal = gen(t, x, y, Zj)
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(Zj)) and np.all(np.isfinite(gfinal))):
            raise BackwardError(f"non-finite solution values at step {j}")
        Y[:, j, :] = y
        Z[:, j] = Zj
        driver[:, j, :] = gfinal
        inner_res[j] = res
        inner_its[j] = it

    return BSDESolution(Y, Z, driver, inner_res, inner_its, truncs, fit_se)


def _bounding_generator(C: float, n: int, sign: float) -> list[Callable]:
    def make(i):
        def g(t, x, y, z):
            return sign * C * (1.0 + np.linalg.norm(y, axis=1) + np.sum(z * z, axis=1))

        return g

    return [make(i) for i in range(n)]


def solve_bounding_U(
    p: FBSDEProblem,
    grid: TimeGrid,
    bundle: BrownianBundle,
    basis: RegressionBasis = RegressionBasis(),
    opts: BackwardOpts = BackwardOpts(),
) -> BSDESolution:
    """Upper bounding BSDE: terminal C, driver C(1 + |U| + |V^i|^2).

    The data are deterministic, so conditioning is on the Brownian path.
    """
    terminal = np.full((bundle.M, p.n), float(p.C))
    sol = solve_bsde(_bounding_generator(p.C, p.n, 1.0), terminal, bundle.paths(), bundle, grid, basis, opts)
    sol.meta["role"] = "U"
    return sol


def solve_seed_Y0(
    p: FBSDEProblem,
    grid: TimeGrid,
    bundle: BrownianBundle,
    basis: RegressionBasis = RegressionBasis(),
    opts: BackwardOpts = BackwardOpts(),
) -> BSDESolution:
    """Seed of the iteration: terminal -C, driver -C(1 + |Y| + |Z^i|^2)."""
    terminal = np.full((bundle.M, p.n), -float(p.C))
    sol = solve_bsde(_bounding_generator(p.C, p.n, -1.0), terminal, bundle.paths(), bundle, grid, basis, opts)
    sol.meta["role"] = "Y0"
    return sol
