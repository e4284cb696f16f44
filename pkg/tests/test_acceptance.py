"""Acceptance criteria, one test each.

Every test prints a single ``[criterion k] PASS|FAIL`` line and asserts the
same verdict.  Suite reports (JSON + CSV) go to ``reports/acceptance``.
"""
import time
from pathlib import Path

import numpy as np
import pytest

from dnls_nfr import harness
from dnls_nfr.operators import TrilinearKernel, cubic_T_physical, eval_cubic_T, eval_trilinear
from dnls_nfr.spectral import FrequencyGrid, random_field, rng_stream
from oracles import naive_trilinear

REPORTS = Path(__file__).resolve().parent.parent / "reports" / "acceptance"
_cache = {}


def run(suite, params):
    key = (suite, repr(params))
    if key not in _cache:
        spec = harness.ExperimentSpec(suite, params, seed=0, output_dir=str(REPORTS))
        _cache[key] = harness.run_suite(spec)
    return _cache[key]


def verdict(capsys, k, title, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {k}] {'PASS' if ok else 'FAIL'} {title}: {detail}")
    assert ok, detail


def failed_cases(records):
    out = []
    for r in records:
        if not r["passed"]:
            m = r["measured"]
            msg = r["case"]
            if "slope" in m:
                msg += f" (slope {m['slope']:.3g} vs <= {r['tolerance']['slope_max']:.3g}"
                if r["tolerance"].get("residual_max") is not None:
                    msg += f", residual {m['residual']:.3g} vs <= {r['tolerance']['residual_max']}"
                msg += ")"
            if "note" in r:
                msg += f" [{r['note']}]"
            out.append(msg)
    return out


def test_criterion_01_tree_counts(capsys):
    rep = run("trees", {"J": [1, 2, 3, 4, 5, 6], "invariant_J": []})
    counts = [r["measured"]["count"] for r in rep.records]
    secs = sum(r["measured"]["seconds"] for r in rep.records)
    ok = counts == [1, 3, 15, 105, 945, 10395] and secs < 10
    verdict(capsys, 1, "tree counts", ok, f"counts {counts}, {secs:.2f}s")


def test_criterion_02_index_algebra(capsys):
    tic = time.perf_counter()
    rep = run("trees", {"J": [], "invariant_J": [1, 2, 3], "assignments": 10_000})
    wall = time.perf_counter() - tic
    worst = max(r["measured"]["mu_max_rel_diff"] for r in rep.records)
    ok = rep.passed and wall < 30
    verdict(capsys, 2, "index algebra", ok,
            f"max relative mu discrepancy {worst:.2e}, invariants "
            f"{'hold' if rep.passed else 'violated'}, {wall:.1f}s")


def _decay():
    return run("decay", {"s": [0.6, 0.8], "J": [1, 2], "N": [4, 16, 64, 256]})


def test_criterion_03_remainder_decay(capsys):
    recs = [r for r in _decay().records if r["inputs"]["family"] == "remainder"]
    bad = failed_cases(recs)
    slopes = ", ".join(f"{r['case']}: {r['measured']['slope']:.3g}" for r in recs)
    verdict(capsys, 3, "remainder decay", not bad, f"{slopes}; failing: {bad or 'none'}")


def test_criterion_04_term_family_decay(capsys):
    recs = [r for r in _decay().records if r["inputs"]["family"] != "remainder"]
    bad = failed_cases(recs)
    slopes = ", ".join(f"{r['case']}: {r['measured']['slope']:.3g}" for r in recs)
    verdict(capsys, 4, "term-family decay", not bad, f"{slopes}; failing: {bad or 'none'}")


def test_criterion_05_weak_trilinear(capsys):
    tic = time.perf_counter()
    rep = run("weak_bounds", {})
    wall = time.perf_counter() - tic
    bad = failed_cases(rep.records)
    worst = max(r["measured"]["slope"] - r["tolerance"]["slope_max"] for r in rep.records)
    ok = not bad and wall < 300
    verdict(capsys, 5, "weak trilinear bound", ok,
            f"{len(rep.records)} slopes, worst margin {worst:.3g}, {wall:.0f}s; failing: {bad or 'none'}")


def test_criterion_06_operator_stability(capsys):
    tic = time.perf_counter()
    rep = run("operator_bounds", {})
    wall = time.perf_counter() - tic
    changes = [r["measured"]["change"] for r in rep.records]
    bad = [r["case"] for r in rep.records if not r["passed"]]
    ok = not bad and wall < 600
    verdict(capsys, 6, "operator bound stability", ok,
            f"changes in [{min(changes):.3g}, {max(changes):.3g}], {wall:.0f}s; failing: {bad or 'none'}")


def _xval():
    return run("solver_xval", {"config": {"n": 32, "L": 8 * np.pi, "s": 0.6, "T": 0.1, "dt": 1e-3,
                                          "J": 2, "N": 4.0}})


def test_criterion_07_cross_validation(capsys):
    tic = time.perf_counter()
    rep = _xval()
    wall = time.perf_counter() - tic
    recs = [r for r in rep.records if not r["case"].startswith("Picard")]
    ok = all(r["passed"] for r in recs) and rep.wall_clock < 900
    rel = {r["case"]: r["measured"]["final_relative"] for r in recs if "final_relative" in r["measured"]}
    verdict(capsys, 7, "solver cross-validation", ok,
            ", ".join(f"{k}: {v:.2e}" for k, v in rel.items())
            + f", non-increasing: {recs[-1]['passed']}, {max(wall, rep.wall_clock):.0f}s")


def test_criterion_08_reference_physics(capsys):
    tic = time.perf_counter()
    rep = run("conservation", {})
    wall = time.perf_counter() - tic
    m = {r["case"]: r["measured"] for r in rep.records}
    ok = rep.passed and wall < 120
    verdict(capsys, 8, "reference solver physics", ok,
            f"L2 drift {m['L2 drift']['relative_drift']:.2e}, gauge sup error "
            f"{m['gauge roundtrip']['max_sup_error']:.2e}, halving ratio "
            f"{m['step halving']['ratio']:.2f}, {wall:.0f}s")


def test_criterion_09_picard(capsys):
    rep = _xval()
    recs = {r["case"]: r for r in rep.records if r["case"].startswith("Picard")}
    ok = all(r["passed"] for r in recs.values()) and rep.wall_clock < 600
    c, f = recs["Picard contraction"]["measured"], recs["Picard fixed point"]["measured"]
    verdict(capsys, 9, "Picard behaviour", ok,
            f"max contraction {c['max_factor']:.2e}, images in ball {c['images_in_ball']}, "
            f"fixed point |v| {f['sup_norm']:.3g} <= R {f['R']:.3g}, two starts differ by "
            f"{f['start_distance']:.1e}")


def test_criterion_10_oracle_equivalence(capsys):
    tic = time.perf_counter()
    worst_tri = worst_route = 0.0
    for i in range(5):
        rng = rng_stream(0, "acceptance/oracle", i)
        g = FrequencyGrid(16, rng.uniform(2.0, 12.0))
        vs = [random_field(g, 0.6, rng) for _ in range(3)]
        for kern in (TrilinearKernel("raw", t=rng.uniform(0, 1)), TrilinearKernel("phi"),
                     TrilinearKernel("weak", M=rng.uniform(1, 10))):
            fast = eval_trilinear(kern, *vs).coeffs
            ref = naive_trilinear(kern, *vs)
            worst_tri = max(worst_tri, np.abs(fast - ref).max() / np.abs(ref).max())
        t = rng.uniform(0, 1)
        a, b = eval_cubic_T(vs[0], t).coeffs, cubic_T_physical(vs[0], t).coeffs
        worst_route = max(worst_route, np.abs(a - b).max() / np.abs(a).max())
    wall = time.perf_counter() - tic
    ok = worst_tri <= 1e-12 and worst_route <= 1e-9 and wall < 60
    verdict(capsys, 10, "oracle equivalence", ok,
            f"trilinear vs loops {worst_tri:.1e}, frequency vs physical route {worst_route:.1e}, "
            f"{wall:.1f}s")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
