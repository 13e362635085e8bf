"""Reference values computed independently of the package.

Frozen numbers were produced by the functions below (and cross-checked
where noted); tests that need them import the constants so the slow
oracles only run when their own tests are selected.
"""

import math

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.linalg import solve_banded

# ln E[exp(tanh(W_1))] by adaptive quadrature (abs. error < 1e-12)
COLE_HOPF_EXACT = 0.18892605897056894
# plain Monte Carlo of the same quantity, 10^6 samples, PCG64 seed 12345
COLE_HOPF_MC = 0.18966062418200305
# u(0, 0) of the coupled-smooth PDE (n = 1, T = 1) by Crank-Nicolson on
# [-8, 8]; grid sequence 801/1000, 1601/2000, 3201/4000 gives
# 0.260654, 0.260661, 0.260662
COUPLED_SMOOTH_Y0 = 0.26066
# same with terminal tanh(x) + 0.1 and with x0 = 0.5
COUPLED_SMOOTH_Y0_SHIFT_TERMINAL = 0.37142
COUPLED_SMOOTH_Y0_SHIFT_INITIAL = 0.59277


def cole_hopf_quadrature(gamma: float = 1.0, T: float = 1.0) -> float:
    dens = lambda w: math.exp(gamma * math.tanh(w)) * math.exp(-w * w / (2 * T)) / math.sqrt(2 * math.pi * T)
    val, _ = quad(dens, -12 * math.sqrt(T), 12 * math.sqrt(T), epsabs=1e-14, limit=200)
    return math.log(val) / gamma


def cole_hopf_mc(samples: int = 10**6, seed: int = 12345, gamma: float = 1.0, T: float = 1.0) -> float:
    w = np.random.default_rng(seed).standard_normal(samples) * math.sqrt(T)
    return float(np.log(np.mean(np.exp(gamma * np.tanh(w)))) / gamma)


def bounding_odes(C: float = 1.0, T: float = 1.0) -> tuple[float, float]:
    """U' = -C(1+U), U(T) = C and Y' = C(1-Y), Y(T) = -C integrated backward to 0."""
    u = solve_ivp(lambda t, v: -C * (1 + v), (T, 0.0), [C], rtol=1e-12, atol=1e-12).y[0, -1]
    y = solve_ivp(lambda t, v: C * (1 - v), (T, 0.0), [-C], rtol=1e-12, atol=1e-12).y[0, -1]
    return float(u), float(y)


def coupled_smooth_pde(a=0.2, gamma=1.0, T=1.0, shift=0.0, L=8.0, nx=1601, nt=2000, save_every=None):
    """Semilinear PDE of the scalar coupled-smooth instance:

        u_t + a tanh(u) u_x + u_xx / 2 + (gamma / 2) u_x^2 + a tanh(x) = 0,
        u(T, x) = tanh(x) + shift.

    Crank-Nicolson for the diffusion, Heun for the nonlinear terms,
    reflecting boundaries far out.  Returns ``(x, u0)`` or, with
    ``save_every``, ``(x, stack)`` where ``stack[j]`` is u at time
    ``j * save_every * T / nt``.
    """
    x = np.linspace(-L, L, nx)
    dx, dt = x[1] - x[0], T / nt
    u = np.tanh(x) + shift
    r = 0.5 * dt / dx**2
    ab = np.zeros((3, nx))
    ab[0, 1:], ab[1, :], ab[2, :-1] = -0.5 * r, 1 + r, -0.5 * r
    ab[0, 1] = ab[2, -2] = -r

    def nonlinear(v):
        vx = np.gradient(v, dx)
        return a * np.tanh(v) * vx + 0.5 * gamma * vx**2 + a * np.tanh(x)

    def lap(v):
        out = np.empty_like(v)
        out[1:-1] = v[2:] - 2 * v[1:-1] + v[:-2]
        out[0], out[-1] = 2 * (v[1] - v[0]), 2 * (v[-2] - v[-1])
        return out

    saved = [u.copy()]
    for k in range(nt):
        base = u + 0.5 * r * lap(u)
        pred = solve_banded((1, 1), ab, base + dt * nonlinear(u))
        u = solve_banded((1, 1), ab, base + 0.5 * dt * (nonlinear(u) + nonlinear(pred)))
        if save_every and (k + 1) % save_every == 0:
            saved.append(u.copy())
    if save_every:
        return x, np.array(saved[::-1])
    return x, u


if __name__ == "__main__":
    print("quadrature", cole_hopf_quadrature())
    print("mc", cole_hopf_mc())
    print("odes", bounding_odes())
    for shift, x0 in ((0.0, 0.0), (0.1, 0.0), (0.0, 0.5)):
        xs, u0 = coupled_smooth_pde(shift=shift)
        print("pde", shift, x0, float(np.interp(x0, xs, u0)))
