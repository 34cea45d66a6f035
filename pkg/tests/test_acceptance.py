"""Acceptance criteria 1-9, one test (and one summary line) each.

The default experiment is run once per noise level in serial timing mode and
shared by criteria 4, 5, 6 and 9.
"""

import time

import numpy as np
import pytest

from bilevel_aero import Region
from bilevel_aero import fem
from bilevel_aero.experiment import config_from_dict, read_history_csv, run_experiment, synthesize_data
from bilevel_aero.inversion import StopReason
from bilevel_aero.verification import adjoint_check, convergence_check, monotonicity_check

# counts from the first validated default run (k = 1, percent schedule, h_min = 0.06)
REFINEMENTS_1PCT = 3
REFINEMENTS_10PCT = 2


def _config(level, out):
    return config_from_dict({}, **{"inversion.noise_level": level, "experiment.output_directory": str(out),
                                   "experiment.serial": True})


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    out = {}
    for level in (0.01, 0.10):
        d = tmp_path_factory.mktemp(f"noise{level}")
        t0 = time.perf_counter()
        summary = run_experiment(_config(level, d))
        out[level] = (d, summary, time.perf_counter() - t0)
    return out


def test_criterion_1_adjoint_identity(criterion):
    t0 = time.perf_counter()
    res = adjoint_check(n_pairs=20, h=0.27, tol=1e-6)
    elapsed = time.perf_counter() - t0
    ok = criterion(1, res.passed and elapsed < 30,
                   f"max |<Fphi,v>-<phi,F*v>|/(|phi||v||F|) = {res.details['max_relative_gap']:.2e} "
                   f"(<= 1e-6), {elapsed:.1f}s (< 30s)")
    assert ok


def test_criterion_2_fem_convergence(criterion):
    t0 = time.perf_counter()
    res = convergence_check(h0=0.27, levels=3, expected=2.0, tol=0.3)
    elapsed = time.perf_counter() - t0
    orders = res.details["orders"]
    ok = criterion(2, res.passed and elapsed < 300,
                   f"observed orders {', '.join(f'{p:.3f}' for p in orders)} (2.0 +/- 0.3), {elapsed:.1f}s (< 300s)")
    assert ok


def test_criterion_3_landweber_monotonicity(criterion):
    res = monotonicity_check(steps=100, slack=1e-12)
    ok = criterion(3, res.passed, f"largest residual increase over 100 steps {res.details['max_increase']:.2e} "
                                  f"(<= 1e-12), mu = {res.details['mu']:.4g}")
    assert ok


def test_criterion_4_stopping_contract(runs, criterion):
    parts, ok = [], True
    for level, (_, summary, _) in runs.items():
        for method, hist in summary["histories"].items():
            res = hist.residuals
            bound = 1.3 * hist.delta
            good = (hist.stop_reason is StopReason.DISCREPANCY and res[-1] <= bound
                    and not np.any(res[:-1] <= bound))
            ok &= good
            parts.append(f"{method}@{level:.0%} {hist.stop_reason.value} j={hist.final.j} "
                         f"res/delta={res[-1] / hist.delta:.4f}")
    assert criterion(4, ok, "; ".join(parts))


def test_criterion_5_refinement_trend(runs, criterion):
    hist1 = runs[0.01][1]["histories"]["bilevel"]
    hist10 = runs[0.10][1]["histories"]["bilevel"]
    halving = all(abs(e.h_new - e.h_old / 2) <= 0.15 * e.h_old / 2
                  for h in (hist1, hist10) for e in h.refinement_events)
    seq = {lvl: [h.records[0].h] + [e.h_new for e in h.refinement_events] for lvl, h in ((1, hist1), (10, hist10))}
    counts = (hist1.n_refinements, hist10.n_refinements)
    ok = criterion(5, counts[0] > counts[1] and halving and counts == (REFINEMENTS_1PCT, REFINEMENTS_10PCT),
                   f"refinements 1%: {counts[0]} h={seq[1]}, 10%: {counts[1]} h={seq[10]}; "
                   f"fixtures ({REFINEMENTS_1PCT}, {REFINEMENTS_10PCT}); near-halving {halving}")
    assert ok


def test_criterion_6_comparative_trend(runs, criterion):
    parts, ok = [], True
    for level, (_, summary, _) in runs.items():
        b, d = summary["bilevel"], summary["direct"]
        faster = b["total_time"] < d["total_time"]
        smaller = b["final_residual"] <= d["final_residual"]
        ok &= faster and smaller
        parts.append(f"{level:.0%}: time {b['total_time']:.3f}s vs {d['total_time']:.3f}s "
                     f"({'ok' if faster else 'bi-level slower'}), residual {b['final_residual']:.6g} vs "
                     f"{d['final_residual']:.6g} ({'ok' if smaller else 'bi-level larger'})")
    assert criterion(6, ok, "; ".join(parts))


def test_criterion_7_noise_construction(criterion):
    cfg = _config(0.01, "unused")
    a, b = synthesize_data(cfg), synthesize_data(cfg)
    rel = fem.norm(a.y_delta - a.u, Region.MEASUREMENT) / fem.norm(a.u, Region.MEASUREMENT)
    c = synthesize_data(_config(0.10, "unused"))
    rel10 = fem.norm(c.y_delta - c.u, Region.MEASUREMENT) / fem.norm(c.u, Region.MEASUREMENT)
    identical = np.array_equal(a.y_delta.values, b.y_delta.values) and a.delta == b.delta
    ok = criterion(7, abs(rel - 0.01) <= 1e-12 and abs(rel10 - 0.10) <= 1e-12 and identical,
                   f"|measured - level| = {abs(rel - 0.01):.1e} (1%), {abs(rel10 - 0.10):.1e} (10%); "
                   f"bit-identical with same seed: {identical}")
    assert ok


def test_criterion_8_determinism(runs, tmp_path, criterion):
    first_dir = runs[0.01][0]
    run_experiment(_config(0.01, tmp_path))
    timing = {"t_total", "t_refine", "t_step", "t_residual"}
    same = True
    for name in ("bilevel.csv", "direct.csv"):
        a = (first_dir / name).read_text().splitlines()
        b = (tmp_path / name).read_text().splitlines()
        header = a[0].split(",")
        keep = [i for i, c in enumerate(header) if c not in timing]
        same &= len(a) == len(b) and all(
            [r1.split(",")[i] for i in keep] == [r2.split(",")[i] for i in keep] for r1, r2 in zip(a, b))
    assert criterion(8, same, "bilevel.csv and direct.csv identical outside timing columns across two runs")


def test_criterion_9_desk_budget(runs, criterion):
    _, summary, wall = runs[0.01]
    rows = read_history_csv(runs[0.01][0] / "bilevel.csv")
    hist = summary["histories"]["bilevel"]
    largest = max([summary["data_mesh_vertices"], summary["direct_mesh_vertices"]]
                  + [e.n_vertices for e in hist.refinement_events])
    ok = criterion(9, wall < 900 and largest <= 100_000 and len(rows) == hist.final.j + 1,
                   f"1% experiment wall time {wall:.1f}s (< 900s), largest mesh {largest} vertices (<= 1e5)")
    assert ok
