"""
Command-line entry point: python -m backend.cli <command> ...

Exit codes: 0 success, 1 a safety check failed, 2 usage or scenario error.
"""
import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from backend.config import Config
from backend.errors import DKGError, ScenarioError

EXIT_OK, EXIT_UNSAFE, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        print(f"❌ {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _print_report(report: dict) -> None:
    for check in report["checks"]:
        mark = {"pass": "✅", "fail": "❌", "skipped": "·", "info": "ℹ️"}[check["status"]]
        tag = " [safety]" if check["safety"] else ""
        print(f"{mark} {check['name']}{tag}: {check['detail']}")
    counts = report["counts"]
    print(f"--- {counts['pass']} passed, {counts['fail']} failed, {counts['skipped']} skipped, {counts['info']} info")


# -----------------------------
# Commands
# -----------------------------
def cmd_run(args) -> int:
    from backend.services.simulation_service import run_and_store
    from backend.sim.scenario import load_scenario
    from backend.sim.theorems import exit_code

    scenario = load_scenario(Path(args.scenario), seed=args.seed)
    result = run_and_store(scenario, Path(args.out) if args.out else None)
    print(f"✅ Run written to {result['out_dir']}")
    _print_report(result["report"])
    return exit_code(result["report"])


def cmd_check(args) -> int:
    from backend.services.simulation_service import check_run
    from backend.sim.theorems import exit_code

    try:
        report = check_run(Path(args.metrics))
    except FileNotFoundError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_USAGE
    _print_report(report)
    return exit_code(report)


def cmd_groupsize(args) -> int:
    from backend.services.groupsize_service import both_tables, solve

    if args.table:
        for kind, df in both_tables().items():
            print(f"\n📌 {kind} (rows: -log2 rho)")
            print(df.to_string())
        return EXIT_OK
    if args.beta is None or args.rho_log2 is None:
        print("❌ --beta and --rho-log2 are required without --table", file=sys.stderr)
        return EXIT_USAGE
    result = solve(args.beta, args.rho_log2, args.population)
    print(json.dumps(result, indent=2))
    return EXIT_OK


def cmd_dkg_demo(args) -> int:
    from backend.services.dkg_service import demo

    result = demo(args.n, args.t, args.preset, seed=args.seed, cheater=args.cheater)
    print(json.dumps(result, indent=2))
    ok = result["unique_signature"] and result["verified"]
    print("✅ group signature unique and valid" if ok else "❌ group signature check failed")
    return EXIT_OK if ok else EXIT_UNSAFE


def cmd_matrix(args) -> int:
    from backend.services.simulation_service import run_matrix

    frame = run_matrix(Path(args.out), rounds=args.rounds, jobs=args.jobs, seed=args.seed)
    unsafe = int((~frame["safety_passed"]).sum())
    print(f"{'✅' if unsafe == 0 else '❌'} {len(frame)} cells, {unsafe} with safety failures; table in {args.out}/matrix.csv")
    return EXIT_OK if unsafe == 0 else EXIT_UNSAFE


# -----------------------------
# Parser
# -----------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="backend.cli", description="Threshold-relay consensus simulator")
    parser.add_argument("--show-config", action="store_true", help="print the configuration summary and exit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    run = sub.add_parser("run", help="simulate a scenario and check it")
    run.add_argument("--scenario", required=True)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", default=None)
    run.set_defaults(func=cmd_run)

    check = sub.add_parser("check", help="re-evaluate the theorem report of a stored run")
    check.add_argument("--metrics", required=True)
    check.set_defaults(func=cmd_check)

    gs = sub.add_parser("groupsize", help="minimal group size for beta and rho")
    gs.add_argument("--beta", default=None)
    gs.add_argument("--rho-log2", dest="rho_log2", type=int, default=None)
    gs.add_argument("--population", type=int, default=None)
    gs.add_argument("--table", action="store_true")
    gs.set_defaults(func=cmd_groupsize)

    dk = sub.add_parser("dkg-demo", help="run a key generation and threshold signing demo")
    dk.add_argument("--n", type=int, required=True)
    dk.add_argument("--t", type=int, default=None)
    dk.add_argument("--preset", choices=("toy", "standard"), default=Config.PARAM_PRESET)
    dk.add_argument("--seed", type=int, default=0)
    dk.add_argument("--cheater", type=int, default=None, help="dealer index that sends one corrupt share")
    dk.set_defaults(func=cmd_dkg_demo)

    mx = sub.add_parser("matrix", help="run the adversary scenario matrix")
    mx.add_argument("--out", required=True)
    mx.add_argument("--rounds", type=int, default=100)
    mx.add_argument("--jobs", type=int, default=None)
    mx.add_argument("--seed", type=int, default=0)
    mx.set_defaults(func=cmd_matrix)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.show_config:
        Config.print_summary()
        return EXIT_OK
    if not args.command:
        parser.print_help()
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ScenarioError, DKGError, ValueError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
