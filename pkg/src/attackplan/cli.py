"""Command-line entry point: ``attackplan <command> ...``.

Results are JSON (CSV for experiments).  On failure a single JSON object
``{"error": <category>, "message": ..., "field": ...}`` goes to stderr and
the exit code is the error's ``exit_code``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

from . import __version__
from .baseline import DEFAULT_NODE_CAP, solve_global
from .errors import AttackPlanError, InvalidInputError
from .experiments import (
    quality_summary,
    run_quality_experiment,
    run_scaling_experiment,
    scaling_exponent,
    write_csv,
)
from .fixtures import running_example_scenario
from .planner import Level4Cache, level1, report
from .pomdp import _HEADER as POMDP_HEADER
from .pomdp import PolicyNode, evaluate_policy, load_model, solve_exact
from .scenario import ScenarioParams, generate_scenario, load_scenario, save_scenario, scenario_to_dict
from .simulate import paired_simulation, simulate_attack_policy, simulate_global_policy, simulate_policy_mc

DEFAULT_RUNS = 2000
DEFAULT_DAYS = 50


def _int_list(text):
    """``"1-6"`` or ``"40,80,120"`` -> list of ints."""
    out = []
    try:
        for part in text.split(","):
            if "-" in part.strip()[1:]:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers like '1-6' or '40,80', got {text!r}") from None
    return out


def _emit(obj, out):
    text = json.dumps(obj, indent=2, sort_keys=False, default=float)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _scenario(args):
    return load_scenario(args.scenario, days=args.days)


def cmd_plan(args):
    sc = _scenario(args)
    cache = Level4Cache(sc, args.cap_states)
    t0 = time.perf_counter()
    _, pol = level1(sc, cache)
    _emit(report(pol, time.perf_counter() - t0), args.out)


def cmd_solve_global(args):
    sc = _scenario(args)
    t0 = time.perf_counter()
    value, solver = solve_global(sc, args.cap_states)
    _emit({
        "value": value,
        "machines": list(solver.p.machines),
        "product_states": solver.p.state_count(),
        "belief_nodes": len(solver.memo),
        "seconds": time.perf_counter() - t0,
    }, args.out)


def _is_flat_model(path):
    try:
        with open(path) as fh:
            return fh.readline().rstrip("\n") == POMDP_HEADER
    except OSError as exc:
        raise InvalidInputError(f"cannot read input: {exc.strerror}", str(path)) from None


def cmd_simulate(args):
    if _is_flat_model(args.scenario):
        with open(args.scenario) as fh:
            model = load_model(fh)
        if args.policy_file:
            with open(args.policy_file) as fh:
                policy = PolicyNode.from_dict(json.load(fh))
        else:
            policy = solve_exact(model, args.cap_states)[1]
        rep = simulate_policy_mc(model, policy, args.runs, args.seed)
        _emit({"policy": "file" if args.policy_file else "optimal", "exact": evaluate_policy(model, policy),
               "simulation": rep.to_dict()}, args.out)
        return
    sc = _scenario(args)
    out = {}
    if args.policy in ("4al", "both"):
        value, pol = level1(sc, Level4Cache(sc, args.cap_states))
        out["4al"] = {"value": value}
    if args.policy in ("global", "both"):
        gv, solver = solve_global(sc, args.cap_states)
        out["global"] = {"value": gv}
    if args.policy == "both":
        a, g, diff = paired_simulation(sc, pol, solver, args.runs, args.seed)
        out["4al"]["simulation"] = a.to_dict()
        out["global"]["simulation"] = g.to_dict()
        out["mean_difference"] = float(diff.mean())
    elif args.policy == "4al":
        out["4al"]["simulation"] = simulate_attack_policy(sc, pol, args.runs, args.seed).to_dict()
    else:
        out["global"]["simulation"] = simulate_global_policy(sc, solver, args.runs, args.seed).to_dict()
    _emit(out, args.out)


def cmd_gen_scenario(args):
    if args.running_example:
        sc = running_example_scenario()
    else:
        if args.machines is None or args.exploits is None:
            raise InvalidInputError("--machines and --exploits are required", "arguments")
        sc = generate_scenario(ScenarioParams(
            args.machines, args.exploits, days=args.days, seed=args.seed,
            fanout=args.fanout, per_subnet=args.per_subnet, triangle=not args.no_triangle,
        ))
    if args.out:
        save_scenario(sc, args.out)
    else:
        print(json.dumps(scenario_to_dict(sc), indent=1))


def _progress(args):
    if args.quiet:
        return None
    return lambda row: print(json.dumps(row.__dict__, default=float), file=sys.stderr, flush=True)


def cmd_experiment(args):
    if args.kind == "quality":
        cells = run_quality_experiment(
            args.machines or range(1, 7), args.exploits or range(1, 8), days=args.days, runs=args.runs,
            seed=args.seed, max_nodes=args.cap_states, progress=_progress(args),
        )
        summary = quality_summary(cells)
        rows = cells
    else:
        exploits = args.exploits or [20]
        if len(exploits) != 1:
            raise InvalidInputError("scaling runs at a single exploit count", "exploits")
        rows = run_scaling_experiment(
            args.machines or (40, 80, 120, 160), exploits[0], days=args.days, seed=args.seed,
            repeats=args.repeats, time_cap=args.time_cap, progress=_progress(args),
        )
        summary = {"points": len(rows), "skipped": sum(p.status != "ok" for p in rows)}
        if summary["points"] - summary["skipped"] >= 2:
            summary["exponent"] = scaling_exponent(rows)
    if args.out:
        write_csv(rows, args.out)
        summary["csv"] = args.out
        print(json.dumps(summary))
    else:
        write_csv(rows, sys.stdout)
        print(json.dumps(summary), file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="attackplan", description="Attack planning on logical networks.")
    p.add_argument("--version", action="version", version=f"attackplan {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, runs=False):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--days", type=int, default=None,
                        help="elapsed days since the snapshot (scenario value if omitted)")
        sp.add_argument("--cap-states", type=int, default=DEFAULT_NODE_CAP,
                        help="cap on belief nodes searched by the exact solvers")
        sp.add_argument("--out", default=None, help="output file (stdout if omitted)")
        if runs:
            sp.add_argument("--runs", type=int, default=DEFAULT_RUNS)

    sp = sub.add_parser("plan", help="run 4AL on a scenario file")
    sp.add_argument("scenario")
    common(sp)
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("solve-global", help="exact optimum of the whole network")
    sp.add_argument("scenario")
    common(sp)
    sp.set_defaults(func=cmd_solve_global)

    sp = sub.add_parser("simulate", help="Monte Carlo evaluation of a policy")
    sp.add_argument("scenario", help="scenario JSON or flat POMDP dump")
    sp.add_argument("--policy", choices=("4al", "global", "both"), default="4al")
    sp.add_argument("--policy-file", default=None, help="policy JSON for a flat POMDP input")
    common(sp, runs=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("gen-scenario", help="generate a three-zone scenario")
    sp.add_argument("--machines", type=int)
    sp.add_argument("--exploits", type=int)
    sp.add_argument("--fanout", type=int, default=4)
    sp.add_argument("--per-subnet", type=int, default=10)
    sp.add_argument("--no-triangle", action="store_true")
    sp.add_argument("--running-example", action="store_true", help="emit the single-machine example")
    common(sp)
    sp.set_defaults(func=cmd_gen_scenario)

    sp = sub.add_parser("experiment", help="quality or scaling experiment, CSV output")
    sp.add_argument("kind", choices=("quality", "scaling"))
    sp.add_argument("--machines", type=_int_list, default=None)
    sp.add_argument("--exploits", type=_int_list, default=None)
    sp.add_argument("--repeats", type=int, default=1)
    sp.add_argument("--time-cap", type=float, default=600.0)
    sp.add_argument("--quiet", action="store_true")
    common(sp, runs=True)
    sp.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command in ("gen-scenario", "experiment") and args.days is None:
        args.days = DEFAULT_DAYS
    try:
        if getattr(args, "runs", 1) < 1:
            raise InvalidInputError("must be >= 1", "runs")
        if args.days is not None and args.days < 0:
            raise InvalidInputError("must be >= 0", "days")
        args.func(args)
    except AttackPlanError as exc:
        err = {"error": exc.category, "message": str(exc)}
        if getattr(exc, "field", None):
            err["field"] = exc.field
        print(json.dumps(err), file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
