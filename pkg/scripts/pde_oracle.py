"""Check the finite-difference oracle for the coupled-smooth instance.

1. With a = 0 the PDE is the Cole-Hopf equation, whose u(0, 0) is known by
   quadrature; the solver must reproduce it.
2. Grid refinement for the three frozen values (plain, terminal + 0.1,
   x0 = 0.5).

    python3 scripts/pde_oracle.py
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from oracles import COLE_HOPF_EXACT, coupled_smooth_pde  # noqa: E402


def at(x, u, x0):
    return float(np.interp(x0, x, u))


def main():
    x, u = coupled_smooth_pde(a=0.0)
    print(f"a=0: u(0,0) = {at(x, u, 0.0):.8f}, quadrature {COLE_HOPF_EXACT:.8f}, diff {at(x, u, 0.0) - COLE_HOPF_EXACT:.1e}")
    for shift, x0 in ((0.0, 0.0), (0.1, 0.0), (0.0, 0.5)):
        vals = []
        for nx, nt in ((801, 1000), (1601, 2000), (3201, 4000)):
            x, u = coupled_smooth_pde(shift=shift, nx=nx, nt=nt)
            vals.append(at(x, u, x0))
        print(f"shift={shift}, x0={x0}: " + ", ".join(f"{v:.6f}" for v in vals))


if __name__ == "__main__":
    main()
