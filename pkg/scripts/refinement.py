"""Two-level grid refinement on the coupled-smooth fixture.

Runs (N, M) = (50, 5e4) and (100, 2e5) with the fixture basis and prints the
residual RMS values, Y_0 and the iteration count at each level.

    python3 scripts/refinement.py [--degree 3] [--knots 8]
"""

import argparse
import json
import time

from fbsde_picard import IterationConfig, RegressionBasis, make_problem, run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--degree", type=int, default=3)
    ap.add_argument("--knots", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    p = make_problem("coupled-smooth")
    basis = RegressionBasis(args.degree, args.knots)
    for steps, paths in ((50, 50_000), (100, 200_000)):
        start = time.perf_counter()
        cfg = IterationConfig(paths=paths, steps=steps, seed=args.seed, tol=1e-3, basis=basis, projection=False)
        (_, Y, _), report, _ = run(p, cfg)
        row = {"steps": steps, "paths": paths, "final_k": report.final_k, "Y0": float(Y[0, 0, 0]),
               **{k: report.residuals[k] for k in ("backward_rms", "backward_max", "forward_max")},
               "seconds": round(time.perf_counter() - start, 1)}
        print(json.dumps(row), flush=True)


if __name__ == "__main__":
    main()
