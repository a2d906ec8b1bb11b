"""Command-line entry point.

    gpumux run      --scenario two_llms.scn --out report.json
    gpumux compare  --scenario code_completion.scn --policies nixie,uvm_rr_4,uvm_rr_30
    gpumux sweep    --scenario three_apps_pinned.scn --sweep policy.planner.pinned_budget=16GiB,24GiB
    gpumux validate --scenario my.scn

Exit codes: 0 success, 1 scenario error, 2 internal invariant violation.
"""
from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from importlib import resources
from pathlib import Path

from . import sim
from .errors import AppTooLarge, GpuMuxError, InvalidSpec, ScenarioError
from .report import FORMATS, LOG_HEADERS, emit_report, write_log
from .scenario import dump_scenario, load_scenario, policy_from_token, with_param


def shipped_scenarios():
    root = resources.files("gpumux") / "scenarios"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".scn"))


def resolve_scenario(path: str) -> Path:
    """A path on disk, or the name of a scenario shipped with the package."""
    p = Path(path)
    if p.exists():
        return p
    name = p.name if p.name.endswith(".scn") else p.name + ".scn"
    shipped = resources.files("gpumux") / "scenarios" / name
    if shipped.is_file():
        return Path(str(shipped))
    return p


def _load(args):
    scn = load_scenario(resolve_scenario(args.scenario))
    if args.seed is not None:
        scn = replace(scn, seed=args.seed)
    return scn


def _run_one(job):
    scn, check = job
    return sim.run(scn, check_invariants=check)


def _run_many(jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


def _output(report, args):
    text = emit_report(report, args.format, args.out)
    if args.out is None:
        sys.stdout.write(text)


def cmd_run(args):
    scn = _load(args)
    if args.policy:
        scn = replace(scn, policy=policy_from_token(args.policy, scn))
    kinds = []
    if args.log:
        kinds = [k.strip() for k in args.log.split(",") if k.strip()]
        bad = [k for k in kinds if k not in LOG_HEADERS]
        if bad:
            raise ScenarioError(f"--log: unknown log kind {bad[0]!r} (choose from {', '.join(LOG_HEADERS)})")
    logs = {k: [] for k in kinds}
    report = sim.run(scn, check_invariants=args.check, logs=logs)
    _output(report, args)
    base = Path(args.out).with_suffix("") if args.out else Path(scn.name)
    for k in kinds:
        write_log(k, logs[k], f"{base}.{k}.csv")
    return 0


def cmd_compare(args):
    scn = _load(args)
    tokens = [t.strip() for t in args.policies.split(",") if t.strip()]
    if not tokens:
        raise ScenarioError("--policies: need at least one policy")
    jobs = [(replace(scn, policy=policy_from_token(t, scn)), args.check) for t in tokens]
    reports = _run_many(jobs, args.jobs)
    _output({"scenario": scn.name, "runs": dict(zip(tokens, reports))}, args)
    return 0


def cmd_sweep(args):
    scn = _load(args)
    if args.policy:
        scn = replace(scn, policy=policy_from_token(args.policy, scn))
    if "=" not in args.sweep:
        raise ScenarioError("--sweep expects <param>=<v1,v2,...>")
    param, values = args.sweep.split("=", 1)
    vals = [v.strip() for v in values.split(",") if v.strip()]
    if not vals:
        raise ScenarioError("--sweep: no values given")
    jobs = [(with_param(scn, param.strip(), v), args.check) for v in vals]
    reports = _run_many(jobs, args.jobs)
    runs = {f"{param}={v}": r for v, r in zip(vals, reports)}
    _output({"scenario": scn.name, "parameter": param, "runs": runs}, args)
    return 0


def cmd_validate(args):
    scn = _load(args)
    sys.stdout.write(dump_scenario(scn))
    return 0


def cmd_list(args):
    for name in shipped_scenarios():
        print(name)
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="gpumux", description="Temporal GPU multiplexing simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--scenario", required=True, help="scenario file, or a shipped scenario name")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        if out:
            p.add_argument("--out", default=None, help="output path (default: stdout)")
            p.add_argument("--format", choices=FORMATS, default="json")
            p.add_argument("--check", action="store_true", help="check invariants while running")

    p = sub.add_parser("run", help="simulate one scenario")
    common(p)
    p.add_argument("--policy", default=None, help="override the policy: nixie, nixie_noprefetch, uvm_rr_<W>")
    p.add_argument("--log", default=None, help="comma list of logs to write: transfers,faults,sched")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run several policies on one scenario")
    common(p)
    p.add_argument("--policies", required=True)
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="vary one parameter")
    common(p)
    p.add_argument("--sweep", required=True, help="<dotted.param>=<v1,v2,...>")
    p.add_argument("--policy", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="load a scenario and print it with defaults filled in")
    common(p, out=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("list", help="list shipped scenarios")
    p.set_defaults(func=cmd_list)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, InvalidSpec, AppTooLarge) as e:
        print(f"gpumux: error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"gpumux: error: {e}", file=sys.stderr)
        return 1
    except GpuMuxError as e:
        print(f"gpumux: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
