"""Command line surface.

Subcommands: run, sweep, counterexample, report, gate.  Exit codes are
0 on success, 2 for validation problems (bad configs, bad exponents,
missing files), 3 for numerical failures (blow-up, budget exhaustion,
solver breakdown) including runs whose ledger rows came back failed.
"""

import argparse
import json
import sys

from .config import ExperimentConfig, parse_config
from .errors import HJLabError, NumericalFailure, ValidationError
from .estimates import exponent_gate, thm3_threshold
from .ledger import RunLedger
from .reporting import emit_report
from .runner import run_experiment


def _add_common(sub):
    sub.add_argument("config", help="experiment config file")
    sub.add_argument("--ledger", default=None, help="override the ledger path")
    sub.add_argument("--force", action="store_true",
                     help="rerun units already completed for this config hash")
    sub.add_argument("--jobs", type=int, default=None,
                     help="parallel sweep members (default HJLAB_JOBS or 4)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hjlab",
        description="forward value runs, backward density runs, duality checks",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    _add_common(subs.add_parser("run", help="execute one configured experiment"))
    _add_common(subs.add_parser("sweep", help="execute a configured sweep"))

    ce = subs.add_parser("counterexample", help="run a named counterexample study")
    ce.add_argument("--which", required=True, choices=("u1", "u2", "u3"))
    ce.add_argument("--gamma", type=float, default=None)
    ce.add_argument("--d", type=int, default=None)
    ce.add_argument("--n", type=int, nargs="+", default=None,
                    help="grid ladder (u1) or evaluation grid (u2)")
    ce.add_argument("--report", default=None, help="write the rows to this JSON file")
    ce.add_argument("--ledger", default=None)
    ce.add_argument("--force", action="store_true")

    rep = subs.add_parser("report", help="render CSV/JSON/figures from a ledger")
    rep.add_argument("ledger", help="ledger JSONL file")
    rep.add_argument("--out", default="report", help="output directory")
    rep.add_argument("--no-plots", action="store_true")

    gate = subs.add_parser("gate", help="print exponent-gate verdicts")
    gate.add_argument("--gamma", type=float, required=True)
    gate.add_argument("--d", type=int, required=True)
    gate.add_argument("--q", type=float, required=True)
    gate.add_argument("--P", type=float, default=3.0)
    gate.add_argument("--Q", type=float, default=4.0)
    return parser


def _print_rows(rows) -> int:
    n_failed = 0
    for row in rows:
        if row["status"] == "ok":
            keys = [
                k for k in row
                if k not in ("run_id", "config_hash", "kind", "label", "params",
                             "gate", "seed", "status")
            ]
            brief = ", ".join(f"{k}={_fmt(row[k])}" for k in sorted(keys)[:6])
            print(f"ok     {row['run_id']} {row['label']} {brief}")
        else:
            n_failed += 1
            print(f"failed {row['run_id']} {row['label']} "
                  f"{row['error']}: {row['message']}")
    return n_failed


def _fmt(val):
    if isinstance(val, float):
        return f"{val:.6g}"
    if isinstance(val, list):
        return f"[{len(val)} values]"
    return val


def _cmd_run(args, expect_kind=None) -> int:
    cfg = parse_config(args.config)
    if expect_kind and cfg.kind != expect_kind:
        raise ValidationError(
            f"config kind is {cfg.kind!r}; this subcommand runs {expect_kind!r}"
        )
    ledger = RunLedger(args.ledger) if args.ledger else None
    rows = run_experiment(cfg, ledger=ledger, force=args.force, jobs=args.jobs)
    if not rows:
        print("nothing to do: all units already in the ledger (use --force to rerun)")
        return 0
    return 3 if _print_rows(rows) else 0


def _cmd_counterexample(args) -> int:
    cfg = ExperimentConfig(kind="counterexample")
    cfg.ce_which = args.which
    cfg.ce_gamma = args.gamma
    cfg.ce_d = args.d
    if args.n:
        cfg.ce_n = tuple(args.n)
        cfg.n = args.n[0]
    if args.ledger:
        ledger = RunLedger(args.ledger)
    else:
        ledger = RunLedger("runs/counterexample.jsonl")
    rows = run_experiment(cfg, ledger=ledger, force=args.force)
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(rows, fh, indent=2, sort_keys=True)
        print(f"wrote {args.report}")
    if not rows:
        print("nothing to do: all units already in the ledger (use --force to rerun)")
        return 0
    return 3 if _print_rows(rows) else 0


def _cmd_report(args) -> int:
    written = emit_report(
        RunLedger(args.ledger), args.out,
        make_plots=not args.no_plots,
    )
    for key in ("csv", "json"):
        if key in written:
            print(f"wrote {written[key]}")
    print(f"wrote {len(written['ladders'])} ladder files, "
          f"{len(written['figures'])} figures")
    return 0


def _cmd_gate(args) -> int:
    g = exponent_gate(args.gamma, args.d, args.q, args.P, args.Q)
    print(f"gamma={g.gamma} gamma'={g.gamma_prime:.6g} d={g.d}")
    print(f"q={g.q} P={g.P} Q={g.Q}")
    print(f"thm1_f_condition      {'PASS' if g.thm1_f_condition else 'FAIL'} "
          f"(q > {g.d + 2} and q >= {(g.d + 2) / (g.gamma_prime - 1):.6g})")
    print(f"aronson_serrin        {'PASS' if g.aronson_serrin else 'FAIL'} "
          f"(d/(2P) + 1/Q = {g.d / (2 * g.P) + 1 / g.Q:.6g} <= 1/2)")
    print(f"thm3_apriori          {'PASS' if g.thm3_apriori_condition else 'FAIL'} "
          f"(q > {thm3_threshold(g.gamma, g.d):.6g})")
    print(f"m_exponent={g.m_exponent:.6g} r_prime={g.r_prime:.6g}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_run(args, expect_kind="sweep")
        if args.command == "counterexample":
            return _cmd_counterexample(args)
        if args.command == "report":
            return _cmd_report(args)
        return _cmd_gate(args)
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ValidationError, HJLabError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
