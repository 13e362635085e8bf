"""The ten acceptance criteria, each at its stated tolerance.

Every test appends one ``criterion N: PASS|FAIL ...`` line to the terminal
summary before asserting, so a failing criterion is reported rather than
hidden.  Heavy runs are module fixtures that keep only summaries.
"""

import dataclasses
import json
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from fbsde_picard import (
    IterationConfig,
    RegressionBasis,
    bmo2,
    load_config,
    make_grid,
    make_problem,
    phi_bound_check,
    probe_all,
    run,
    run_comparison,
    sample_brownian,
    verify_ordering_hypotheses,
)
from fbsde_picard.backward import solve_bounding_U, solve_seed_Y0
from fbsde_picard.diagnostics import s_norm, sup_norm
from fbsde_picard.registry import problem_names

import conftest
from oracles import COLE_HOPF_EXACT, COLE_HOPF_MC, bounding_odes
from test_dsl import CORPUS
from test_dsl import test_batch_equals_scalar_bitwise as _batch_property
from test_dsl import test_corpus as _corpus_case

pytestmark = pytest.mark.slow

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
FIXTURE = json.loads((Path(__file__).parent / "data" / "coupled_smooth_fixture.json").read_text())


def record(n, ok, detail):
    conftest.ACCEPTANCE.append(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


def norm_summary(name, p, cfg, out, state):
    """What criterion 7 needs from a run, computed before its arrays are dropped."""
    X, Y, Z = out
    z_nodes = np.concatenate([Z, Z[:, -1:]], axis=1)
    chains = {}
    for label, V in (("X", X), ("Y", Y), ("Z", z_nodes)):
        vals = [sup_norm(V)] + [s_norm(V, q) for q in (8, 4, 2)]
        # power means are ordered exactly; allow rounding in the last bits
        chains[label] = (vals, all(a * (1 + 1e-12) >= b for a, b in zip(vals, vals[1:])))
    K = float(np.max(np.abs(state.U.Y)))
    phi = phi_bound_check(K, Z, p, state.grid, cond=X, basis=cfg.basis)
    return {"name": name, "chains": chains, "phi": phi}


def solve_summary(name, p, cfg):
    out, report, state = run(p, cfg)
    summary = {"report": report, "Y0": float(out[1][0, 0, 0]), "norms": norm_summary(name, p, cfg, out, state)}
    if name == "cole-hopf":
        sol = state.last
        pathwise = sol.Y[:, -1, 0] + sol.driver[:, :, 0].sum(axis=1) * state.grid.dt
        summary["se"] = float(pathwise.std(ddof=1) / math.sqrt(pathwise.size))
    return summary


@pytest.fixture(scope="module")
def trivial_run():
    cfg = load_config(CONFIGS / "trivial_zero.json")
    return solve_summary("trivial-zero", cfg.problem, cfg.iteration)


@pytest.fixture(scope="module")
def cole_hopf_run():
    p = make_problem("decoupled-quadratic", gamma=1.0)
    cfg = IterationConfig(paths=100_000, steps=50, seed=0, basis=RegressionBasis(3), projection=False)
    return solve_summary("cole-hopf", p, cfg)


@pytest.fixture(scope="module")
def fixture_run():
    cfg = load_config(CONFIGS / "coupled_smooth.json")
    return solve_summary("coupled-smooth", cfg.problem, cfg.iteration)


@pytest.fixture(scope="module")
def fine_run():
    cfg = load_config(CONFIGS / "coupled_smooth.json", {"steps": 100, "paths": 200_000})
    return solve_summary("coupled-smooth-fine", cfg.problem, cfg.iteration)


# ---------------------------------------------------------------------------


def test_criterion_1_bounding_processes():
    C, T, N = 1.0, 1.0, 1000
    u_closed, y_closed = (1 + C) * math.exp(C * T) - 1, 1 - (1 + C) * math.exp(C * T)
    u_ode, y_ode = bounding_odes(C, T)
    assert u_ode == pytest.approx(u_closed, rel=1e-9) and y_ode == pytest.approx(y_closed, rel=1e-9)
    p = make_problem("bounding-ode", C=C, T=T)
    grid = make_grid(T, N)
    bundle = sample_brownian(200, grid, 1, 0)
    U, Y0 = solve_bounding_U(p, grid, bundle), solve_seed_Y0(p, grid, bundle)
    err_u = float(np.max(np.abs(U.Y[:, 0, 0] / u_ode - 1)))
    err_y = float(np.max(np.abs(Y0.Y[:, 0, 0] / y_ode - 1)))
    record(1, max(err_u, err_y) <= 0.01,
           f"U_0 rel err {err_u:.2e}, Y0_0 rel err {err_y:.2e} (limit 1e-2; U_0={U.Y[0, 0, 0]:.6f} vs {u_ode:.6f})")


def test_criterion_2_cole_hopf(cole_hopf_run):
    y0 = cole_hopf_run["Y0"]
    rel = abs(y0 / COLE_HOPF_MC - 1)
    record(2, rel <= 0.02,
           f"Y_0={y0:.6f} vs MC oracle {COLE_HOPF_MC:.6f}: rel err {rel:.2e} (limit 2e-2; quadrature {COLE_HOPF_EXACT:.6f}, SE {cole_hopf_run['se']:.1e})")


def _worst_fraction(report):
    keys = ("Y_mono", "X_mono", "Y_upper", "X_upper")
    cells = [(row[key], row["k"], key) for row in report.violation_fractions() for key in keys]
    worst = max(cells, key=lambda c: c[0])
    return worst[0], worst[1:]


def test_criterion_3_monotone_envelope(fixture_run):
    report = fixture_run["report"]
    worst, where = _worst_fraction(report)
    meta = report.meta
    record(3, not report.meta["projection"] and worst <= 0.01,
           f"worst violation fraction {worst:.2e} at k={where[0]} ({where[1]}) over k=1..{report.final_k} "
           f"(limit 1e-2; M={meta['paths']}, N={meta['steps']}, degree {meta['degree']}, knots {meta['knots']}, projection off)")


def test_criterion_3_info_pure_polynomial_basis():
    # informational: the same fixture with the plain cubic basis, for the record
    cfg = load_config(CONFIGS / "coupled_smooth.json")
    _, report, _ = run(cfg.problem, dataclasses.replace(cfg.iteration, basis=RegressionBasis(3, 0)))
    worst, where = _worst_fraction(report)
    conftest.ACCEPTANCE.append(
        f"criterion 3 (info): cubic basis without knots gives worst fraction {worst:.2e} at k={where[0]} ({where[1]})"
    )


def test_criterion_4_fixed_point(cole_hopf_run):
    report = cole_hopf_run["report"]
    h = report.history
    ok = report.converged_k == 1 and len(h) == 2 and h[1]["supdiff_X"] == 0.0 and h[1]["supdiff_Y"] == 0.0
    record(4, ok, f"converged_k={report.converged_k}, k=2 sup-differences X={h[-1]['supdiff_X']!r}, Y={h[-1]['supdiff_Y']!r}")


@pytest.mark.parametrize("config", ["compare_shift_terminal.json", "compare_shift_initial.json"])
def test_criterion_5_comparison(config):
    cfg = load_config(CONFIGS / config)
    rep = run_comparison(cfg.problem, cfg.problem_bar, cfg.iteration, cfg.probes.num_probes, cfg.probes.seed)
    row = rep.gap_table[0]
    fx, fy = rep.X_order["fraction"], rep.Y_order["fraction"]
    ok = rep.hypotheses.passed and fx <= 0.01 and fy <= 0.01 and row["Y_gap_mean"] > 3 * row["Y_gap_se"] and row["Y_gap_mean"] > 0
    record(5, ok,
           f"{config}: X/Y violation fractions {fx:.2e}/{fy:.2e} (limit 1e-2); node-0 Y gap {row['Y_gap_mean']:.5f} "
           f"= {row['Y_gap_mean'] / max(row['Y_gap_se'], 1e-300):.0f} SE (need > 3)")


def test_criterion_6_refinement(fixture_run, fine_run):
    coarse, fine = fixture_run["report"].residuals, fine_run["report"].residuals
    ok = fine["backward_rms"] < coarse["backward_rms"] and max(coarse["forward_max"], fine["forward_max"]) <= 1e-12
    record(6, ok,
           f"backward RMS {coarse['backward_rms']:.5f} (N=50, M=5e4) -> {fine['backward_rms']:.5f} (N=100, M=2e5); "
           f"forward max {coarse['forward_max']:.1e}, {fine['forward_max']:.1e} (limit 1e-12)")


def test_criterion_7_norm_algebra(trivial_run, cole_hopf_run, fixture_run, fine_run):
    runs = [r["norms"] for r in (trivial_run, cole_hopf_run, fixture_run, fine_run)]
    chains_ok = all(ok for r in runs for _, ok in r["chains"].values())
    zero = np.zeros((100, 10, 1, 1))
    cond = np.random.default_rng(0).normal(size=(100, 11, 1))
    bmo_zero = max(bmo2(zero, 0.1), bmo2(zero, 0.1, cond, RegressionBasis(3, 8)))
    phis = [(r["name"], r["phi"]["lhs"], r["phi"]["ceiling"], r["phi"]["passed"]) for r in runs]
    ok = chains_ok and bmo_zero == 0.0 and all(p[3] for p in phis)
    worst = max(phis, key=lambda p: p[1] / p[2] if p[2] else 0.0)
    record(7, ok,
           f"S-norm chains ordered on {len(runs) * 3} processes: {chains_ok}; BMO2(0) = {bmo_zero!r}; "
           f"phi ceiling holds on {sum(p[3] for p in phis)}/{len(phis)} runs (tightest {worst[0]}: {worst[1]:.3g} <= {worst[2]:.3g})")


def test_criterion_8_assumption_probes():
    registry = {name: probe_all(make_problem(name)) for name in problem_names()}
    reg_ok = all(r.passed for r in registry.values())
    drift = probe_all(load_config(CONFIGS / "check_drift_2x.json").problem)
    term = probe_all(load_config(CONFIGS / "check_terminal_neg.json").problem)
    pair = load_config(CONFIGS / "compare_reversed_drift.json")
    hyp = verify_ordering_hypotheses(pair.problem, pair.problem_bar)
    rejected = {
        "b=2x": (drift, "A1_lipschitz"),
        "h=-x": (term, "A6_terminal_order"),
        "b_bar=b-1": (hyp, "H5_drift_order"),
    }
    caught = {k: (name in rep.failures() and bool(rep.entries[name].witness)) for k, (rep, name) in rejected.items()}
    record(8, reg_ok and all(caught.values()),
           f"{sum(r.passed for r in registry.values())}/{len(registry)} registry instances pass; "
           + ", ".join(f"{k} rejected with witness: {v}" for k, v in caught.items()))


@pytest.fixture(scope="module")
def cli_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    env = {**os.environ, "PYTHONHASHSEED": "0"}
    dirs = []
    for label in ("a", "b"):
        out = base / label
        cmd = [sys.executable, "-m", "fbsde_picard", "solve", str(CONFIGS / "coupled_smooth.json"), "--output-dir", str(out)]
        proc = subprocess.run(cmd, cwd=ROOT, env=env, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        dirs.append(out)
    return dirs


def test_criterion_9_determinism(cli_runs):
    a, b = cli_runs
    names = sorted(f.name for f in a.iterdir())
    same = names == sorted(f.name for f in b.iterdir()) and all((a / n).read_bytes() == (b / n).read_bytes() for n in names)
    record(9, same, f"two cmd_solve processes on configs/coupled_smooth.json: {len(names)} files, byte-identical: {same}")


def test_fixture_regression(cli_runs):
    conv = json.loads((cli_runs[0] / "convergence.json").read_text())
    assert conv["converged"] and conv["converged_k"] == FIXTURE["converged_k"]
    assert conv["Y_initial"][0] == pytest.approx(FIXTURE["Y_initial"], abs=FIXTURE["Y_initial_tol"])
    res = json.loads((cli_runs[0] / "residuals.json").read_text())
    assert res["backward_rms"] == pytest.approx(FIXTURE["backward_rms"], rel=FIXTURE["backward_rms_rtol"])


def test_criterion_10_dsl():
    failures = []
    for case in CORPUS:
        try:
            _corpus_case(case)
        except Exception as err:  # includes pytest's Failed for a missing rejection
            failures.append(f"{case['text']!r}: {err}")
    try:
        _batch_property()
        batch_ok = True
    except Exception:
        batch_ok = False
    record(10, len(CORPUS) >= 30 and not failures and batch_ok,
           f"corpus {len(CORPUS) - len(failures)}/{len(CORPUS)} cases exact; batch == scalar bitwise on generated expressions: {batch_ok}"
           + (f"; first mismatch {failures[0]}" if failures else ""))
