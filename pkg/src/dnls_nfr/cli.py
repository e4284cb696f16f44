"""Command line entry point.

Exit codes: 0 pass, 1 test failure, 2 budget or configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness
from .nfr import FAMILIES, BudgetExceeded
from .operators import TrilinearKernel, eval_trilinear
from .solvers import (ConfigError, SolverConfig, SolverDiverged, cross_validate,
                      solve_normal_form, solve_reference)
from .spectral import (FrequencyGrid, gauge_forward, hs_norm, random_field, read_field,
                       rng_stream, write_field)
from .trees import enumerate_trees

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _dump(obj, path=None):
    text = json.dumps(obj, indent=2, default=harness._jsonable)
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _fields(args, count, s):
    if args.inputs:
        if len(args.inputs) not in (1, count):
            raise ConfigError(f"give 1 or {count} input files")
        fs = [read_field(p) for p in args.inputs]
        return fs * count if len(fs) == 1 else fs
    g = FrequencyGrid(args.n, args.L)
    return [random_field(g, s, rng_stream(args.seed, "cli", i)) for i in range(count)]


def cmd_trees(args):
    trees = enumerate_trees(args.J)
    if args.json:
        _dump([{"index": i, "tree": t.to_string(), "chronicle": list(t.chronicle)}
               for i, t in enumerate(trees)])
    else:
        for i, t in enumerate(trees):
            print(f"{i}\t{t.to_string()}\t[{','.join(map(str, t.chronicle))}]")
    return EXIT_OK


def cmd_op(args):
    kern = TrilinearKernel(args.kernel, t=args.t, M=args.M)
    v1, v2, v3 = _fields(args, 3, args.s)
    out = eval_trilinear(kern, v1, v2, v3)
    if args.out:
        write_field(args.out, out)
    _dump({"kernel": args.kernel, "M": args.M, "t": args.t, "grid": out.grid.to_dict(),
           "norm_Hs": hs_norm(out, args.s), "norm_Hs-1": hs_norm(out, args.s - 1)})
    return EXIT_OK


def cmd_nfr(args):
    (v,) = _fields(args, 1, args.s)
    out = FAMILIES[args.family](args.J, args.N, args.s, v, args.t, budget=args.budget)
    if args.out:
        write_field(args.out, out)
    _dump({"family": args.family, "J": args.J, "N": args.N, "s": args.s, "t": args.t,
           "norm_Hs": hs_norm(out, args.s), "norm_Hs-1": hs_norm(out, args.s - 1)})
    return EXIT_OK


def cmd_solve(args):
    cfg = SolverConfig.from_file(args.config)
    u0 = cfg.initial_u()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "reference":
        traj = solve_reference(u0, cfg)
    else:
        traj = solve_normal_form(gauge_forward(u0), cfg)
    traj.write(out / f"{args.kind}-trajectory.csv")
    norms = traj.norms(cfg.s)
    report = {"config": cfg.to_dict(), "config_hash": cfg.hash(), "metadata": traj.metadata,
              "times": traj.times, "norms_Hs": norms}
    _dump(report, out / f"{args.kind}-report.json")
    print(f"wrote {out}/{args.kind}-trajectory.csv and {args.kind}-report.json")
    return EXIT_OK


def cmd_validate(args):
    cfg = SolverConfig.from_file(args.config)
    res = cross_validate(cfg.initial_u(), cfg)
    res.pop("reference")
    ok = all(d["final_relative"] <= args.tolerance and d["converged"] for d in res["per_J"].values())
    js = sorted(res["per_J"])
    if len(js) > 1:
        ok &= res["per_J"][js[-1]]["final"] <= res["per_J"][js[0]]["final"]
    res["passed"] = bool(ok)
    res["config_hash"] = cfg.hash()
    _dump(res, Path(args.out_dir) / "cross-validation.json" if args.out_dir else None)
    for J in js:
        print(f"J={J}: final discrepancy / |v0| = {res['per_J'][J]['final_relative']:.3e}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_suite_run(args):
    params = {}
    for kv in args.param or []:
        k, _, v = kv.partition("=")
        params[k] = json.loads(v)
    if args.spec:
        spec = harness.ExperimentSpec.from_file(args.spec)
        spec.params = {**spec.params, **params}
    else:
        spec = harness.ExperimentSpec(args.suite, params, args.seed)
    if args.out_dir:
        spec.output_dir = args.out_dir
    rep = harness.run_suite(spec)
    for r in rep.records:
        print(f"{'PASS' if r['passed'] else 'FAIL'}  {r['case']}")
    print(f"{spec.suite}: {'PASS' if rep.passed else 'FAIL'} ({rep.wall_clock:.1f}s, spec {rep.spec_hash[:12]})")
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_suite_replay(args):
    new, diffs = harness.replay(args.report, rtol=args.rtol)
    for d in diffs:
        print(f"DIFF  {d['case']}  {d['key']}: {d['old']} -> {d['new']}")
    print(f"replay: {len(diffs)} differing values")
    return EXIT_OK if not diffs else EXIT_FAIL


def build_parser():
    p = argparse.ArgumentParser(prog="dnls-nfr", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="group", required=True)

    t = sub.add_parser("trees", help="ordered trees").add_subparsers(dest="action", required=True)
    te = t.add_parser("enumerate", help="list generation-J trees in canonical order")
    te.add_argument("--J", type=int, required=True)
    te.add_argument("--json", action="store_true")
    te.set_defaults(func=cmd_trees)

    def field_args(q):
        q.add_argument("--inputs", nargs="+", help="field CSV files (default: random fields)")
        q.add_argument("--n", type=int, default=32)
        q.add_argument("--L", type=float, default=2 * np.pi)
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--t", type=float, default=0.0)
        q.add_argument("--out", help="write the result field as CSV")

    o = sub.add_parser("op", help="trilinear operators").add_subparsers(dest="action", required=True)
    oe = o.add_parser("eval")
    oe.add_argument("--kernel", choices=["raw", "phi", "weak"], required=True)
    oe.add_argument("--M", type=float, default=1.0)
    oe.add_argument("--s", type=float, default=0.6)
    field_args(oe)
    oe.set_defaults(func=cmd_op)

    n = sub.add_parser("nfr", help="normal-form terms").add_subparsers(dest="action", required=True)
    ne = n.add_parser("eval")
    ne.add_argument("--family", choices=sorted(FAMILIES), required=True)
    ne.add_argument("--J", type=int, required=True)
    ne.add_argument("--N", type=float, required=True)
    ne.add_argument("--s", type=float, required=True)
    ne.add_argument("--budget", type=float, default=5e9)
    field_args(ne)
    ne.set_defaults(func=cmd_nfr)

    s = sub.add_parser("solve", help="run a solver from a config file")
    s.add_argument("kind", choices=["reference", "nfr"])
    s.add_argument("--config", required=True)
    s.add_argument("--out-dir", default="out")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("validate", help="cross-validation").add_subparsers(dest="action", required=True)
    vc = v.add_parser("cross")
    vc.add_argument("--config", required=True)
    vc.add_argument("--tolerance", type=float, default=1e-2)
    vc.add_argument("--out-dir")
    vc.set_defaults(func=cmd_validate)

    su = sub.add_parser("suite", help="verification suites").add_subparsers(dest="action", required=True)
    sr = su.add_parser("run")
    sr.add_argument("--spec", help="TOML or JSON experiment spec")
    sr.add_argument("--suite", choices=sorted(harness.SUITES))
    sr.add_argument("--param", action="append", help="key=JSON value, repeatable; overrides values from --spec")
    sr.add_argument("--seed", type=int, default=0)
    sr.add_argument("--out-dir")
    sr.set_defaults(func=cmd_suite_run)
    sp = su.add_parser("replay")
    sp.add_argument("--report", required=True)
    sp.add_argument("--rtol", type=float, default=1e-9)
    sp.set_defaults(func=cmd_suite_replay)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.group == "suite" and args.action == "run" and not (args.spec or args.suite):
        parser.error("suite run needs --spec or --suite")
    try:
        return args.func(args)
    except (ConfigError, BudgetExceeded, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverDiverged as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
