import dataclasses

import numpy as np
import pytest

from fbsde_picard import CoefficientFn, IterationConfig, make_problem, run_comparison, verify_ordering_hypotheses
from fbsde_picard.comparison import HypothesisFailure, SigmaMismatch


def reversed_drift(p):
    return dataclasses.replace(p, b=CoefficientFn.from_exprs(["0.2*tanh(y1) - 1"], (1, 1), "b"))


def test_identical_problems_pass():
    p = make_problem("coupled-smooth")
    rep = verify_ordering_hypotheses(p, make_problem("coupled-smooth"), num_probes=300)
    assert rep.passed
    assert all(e.worst <= 0.0 for e in rep.entries.values())


def test_shifted_terminal_passes():
    rep = verify_ordering_hypotheses(make_problem("coupled-smooth"), make_problem("coupled-smooth", terminal_shift=0.1), 300)
    assert rep.passed


def test_reversed_drift_fails_with_witness():
    p = make_problem("coupled-smooth")
    rep = verify_ordering_hypotheses(p, reversed_drift(p), 300)
    assert not rep.passed
    assert rep.failures() == ["H5_drift_order"]
    entry = rep.entries["H5_drift_order"]
    assert entry.worst == pytest.approx(1.0, abs=1e-12)
    assert entry.witness


def test_initial_order_is_checked():
    rep = verify_ordering_hypotheses(make_problem("coupled-smooth", x0=0.5), make_problem("coupled-smooth"), 100)
    assert rep.failures() == ["H0_initial_order"]
    assert rep.entries["H0_initial_order"].worst == 0.5


def test_sigma_mismatch():
    p = make_problem("coupled-smooth")
    q = dataclasses.replace(p, sigma=CoefficientFn.from_exprs([["2"]], (1, 1), "sigma"))
    with pytest.raises(SigmaMismatch):
        verify_ordering_hypotheses(p, q)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        verify_ordering_hypotheses(make_problem("trivial-zero"), make_problem("trivial-zero", T=2.0))


def test_identical_run_has_zero_gaps():
    p = make_problem("coupled-smooth")
    rep = run_comparison(p, make_problem("coupled-smooth"), IterationConfig(paths=1000, steps=10), num_probes=100)
    assert rep.X_order["count"] == 0 and rep.Y_order["count"] == 0
    assert all(r["Y_gap_mean"] == 0.0 and r["X_gap_mean"] == 0.0 for r in rep.gap_table)
    assert rep.report_a.to_dict() == rep.report_b.to_dict()
    assert rep.shared["seed"] == rep.report_a.meta["seed"] == rep.report_b.meta["seed"]


def test_run_refuses_failed_hypotheses():
    p = make_problem("coupled-smooth")
    with pytest.raises(HypothesisFailure):
        run_comparison(p, reversed_drift(p), IterationConfig(paths=100, steps=5), num_probes=100)


def test_shifted_terminal_gap_is_positive():
    cfg = IterationConfig(paths=5000, steps=20, projection=False)
    rep = run_comparison(make_problem("coupled-smooth", C=1.1), make_problem("coupled-smooth", C=1.1, terminal_shift=0.1), cfg, 200)
    assert rep.ordering_holds(0.01)
    row = rep.gap_table[0]
    assert row["Y_gap_mean"] > 3 * row["Y_gap_se"] > 0
    assert np.isfinite(rep.to_dict()["gap_node0"]["Y_gap_mean"])
