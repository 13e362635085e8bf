"""Time grid, Brownian increments and forward Euler-Maruyama solves.

Random-number layout: paths are grouped in consecutive blocks of
``BLOCK_PATHS``.  Block ``b`` draws from ``PCG64(SeedSequence(seed,
spawn_key=(b,)))`` a standard normal array of shape ``(block_size, N, d)``
in C order, scaled by sqrt(dt).  The increments of path m therefore depend
only on (seed, m, N, d): enlarging M appends paths without changing
existing ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import FBSDEProblem

__all__ = [
    "BLOCK_PATHS",
    "TimeGrid",
    "BrownianBundle",
    "SimulationError",
    "make_grid",
    "sample_brownian",
    "euler_forward",
    "simulate_bounding_S",
]

BLOCK_PATHS = 4096


class SimulationError(ArithmeticError):
    def __init__(self, message: str, path: int | None = None, step: int | None = None):
        self.path = path
        self.step = step
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class TimeGrid:
    T: float
    N: int
    nodes: np.ndarray

    @property
    def dt(self) -> float:
        return self.T / self.N


def make_grid(T: float, N: int) -> TimeGrid:
    if not T > 0:
        raise ValueError(f"horizon must be positive, got {T}")
    if int(N) != N or N < 1:
        raise ValueError(f"step count must be a positive integer, got {N}")
    N = int(N)
    nodes = np.linspace(0.0, T, N + 1)
    return TimeGrid(float(T), N, nodes)


@dataclass(frozen=True, eq=False)
class BrownianBundle:
    increments: np.ndarray  # (M, N, d)
    seed: int
    grid: TimeGrid

    @property
    def M(self) -> int:
        return self.increments.shape[0]

    @property
    def d(self) -> int:
        return self.increments.shape[2]

    def paths(self) -> np.ndarray:
        """Brownian paths W at the grid nodes, shape (M, N+1, d), W_0 = 0."""
        W = np.zeros((self.M, self.grid.N + 1, self.d))
        np.cumsum(self.increments, axis=1, out=W[:, 1:, :])
        return W


def sample_brownian(M: int, grid: TimeGrid, d: int, seed: int) -> BrownianBundle:
    if M < 1 or d < 1:
        raise ValueError(f"need M >= 1 and d >= 1, got M={M}, d={d}")
    N = grid.N
    out = np.empty((M, N, d))
    scale = np.sqrt(grid.dt)
    for b, start in enumerate(range(0, M, BLOCK_PATHS)):
        stop = min(start + BLOCK_PATHS, M)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(b,))))
        out[start:stop] = rng.standard_normal((stop - start, N, d))
    out *= scale
    return BrownianBundle(out, int(seed), grid)


def _check_finite(X_next: np.ndarray, j: int, what: str) -> None:
    bad = ~np.isfinite(X_next)
    if bad.any():
        m = int(np.argmax(bad.any(axis=1)))
        raise SimulationError(f"non-finite {what} at path {m}, step {j + 1}", m, j + 1)


def euler_forward(p: FBSDEProblem, y_path: np.ndarray, bundle: BrownianBundle, grid: TimeGrid) -> np.ndarray:
    """Euler-Maruyama for dX = b(t, X, Y) dt + sigma(t, X) dW, X_0 = x0.

    ``y_path`` has shape (M, N+1, n) and is read at the left endpoint of
    each step.  Returns X with shape (M, N+1, n).
    """
    M, N, n = bundle.M, grid.N, p.n
    if y_path.shape != (M, N + 1, n):
        raise ValueError(f"y_path has shape {y_path.shape}, expected {(M, N + 1, n)}")
    dW = bundle.increments
    dt = grid.dt
    X = np.empty((M, N + 1, n))
    X[:, 0, :] = p.x0
    for j in range(N):
        t = grid.nodes[j]
        x = X[:, j, :]
        drift = p.drift(t, x, y_path[:, j, :])
        diff = p.diffusion(t, x)
        X[:, j + 1, :] = x + drift * dt + np.einsum("mid,md->mi", diff, dW[:, j, :])
        _check_finite(X[:, j + 1, :], j, "forward state")
    return X


def simulate_bounding_S(p: FBSDEProblem, u_path: np.ndarray, bundle: BrownianBundle, grid: TimeGrid) -> np.ndarray:
    """Dominating forward process: every drift component is C(1 + |S| + |U|)."""
    M, N, n = bundle.M, grid.N, p.n
    if u_path.shape != (M, N + 1, n):
        raise ValueError(f"u_path has shape {u_path.shape}, expected {(M, N + 1, n)}")
    dW = bundle.increments
    dt = grid.dt
    C = p.C
    S = np.empty((M, N + 1, n))
    S[:, 0, :] = p.x0
    for j in range(N):
        s = S[:, j, :]
        rate = C * (1.0 + np.linalg.norm(s, axis=1) + np.linalg.norm(u_path[:, j, :], axis=1))
        diff = p.diffusion(grid.nodes[j], s)
        S[:, j + 1, :] = s + rate[:, None] * dt + np.einsum("mid,md->mi", diff, dW[:, j, :])
        _check_finite(S[:, j + 1, :], j, "bounding state")
    return S
