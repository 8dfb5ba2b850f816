"""Command-line front end: ``localspin {generate,solve,tune,oracle,bench,stats}``.

Results go to stdout (or ``-o``) as JSON, or CSV with ``--format csv``;
logs go to stderr. Exit codes: 0 ok, 1 usage error, 2 runtime error,
3 instance too large for the exact oracle.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from typing import List, Optional

from . import bench, instance, oracle, solver, tuner

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_CAP = 0, 1, 2, 3

log = logging.getLogger("localspin")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _add_common(p, formats=("json", "csv")):
    p.add_argument("--config", help="JSON file of flag defaults; command-line flags win")
    p.add_argument("--seed", type=int, default=None, help="master seed (default: $LOCALSPIN_SEED or 0)")
    p.add_argument("--format", choices=formats, default=formats[0])
    p.add_argument("-o", "--output", help="write results here instead of stdout")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--no-timing", action="store_true", help="omit wall-time fields")


def _add_solver_flags(p):
    p.add_argument("--algo", choices=solver.VARIANTS, default="lt")
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--max-rounds", type=int, default=solver.DEFAULT_MAX_ROUNDS)
    p.add_argument("--threshold", type=float, default=solver.DEFAULT_THRESHOLD)
    p.add_argument("--dtau", type=float, default=None)


def _add_family_flags(p, required=False):
    p.add_argument("--family", choices=instance.FAMILIES, required=required)
    p.add_argument("--n", type=int)
    p.add_argument("--density", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--side", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="localspin", description="Local-spin MAXCUT heuristic")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("generate", help="draw a random instance (Biq Mac text by default)")
    _add_common(p, formats=("biqmac", "json"))
    _add_family_flags(p, required=True)

    p = sub.add_parser("solve", help="run the solver with restarts")
    _add_common(p)
    p.add_argument("instance")
    _add_solver_flags(p)
    p.add_argument("--restarts", type=int, default=30)
    p.add_argument("--trace", action="store_true", help="include displacement traces")
    p.add_argument("--target-from", help="oracle JSON whose max_cut is the time-to-solution target")
    p.add_argument("--timeout", type=float, default=1000.0)

    p = sub.add_parser("tune", help="grid search over (eta, beta)")
    _add_common(p)
    p.add_argument("instance")
    _add_solver_flags(p)
    p.add_argument("--restarts", type=int, default=30, help="runs per grid point")
    p.add_argument("--etas", type=float, nargs="+", default=list(tuner.DEFAULT_ETA_GRID))
    p.add_argument("--betas", type=float, nargs="+", default=list(tuner.DEFAULT_BETA_GRID))

    p = sub.add_parser("oracle", help="exact maximum cut by enumeration")
    _add_common(p)
    p.add_argument("instance")

    p = sub.add_parser("stats", help="instance statistics")
    _add_common(p)
    p.add_argument("instance")

    p = sub.add_parser("bench", help="benchmark a suite of instances")
    _add_common(p)
    p.add_argument("instances", nargs="*", help="instance files; default is a generated suite")
    _add_family_flags(p)
    p.add_argument("--count", type=int, default=None, help="instances per family (generated suite)")
    p.add_argument("--restarts", type=int, default=30)
    p.add_argument("--timeout", type=float, default=1000.0)
    p.add_argument("--tuning-budget", type=float, default=20.0)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--max-restarts", type=int, default=None)
    p.add_argument("--no-tune", action="store_true")
    _add_solver_flags(p)
    return parser


def _apply_config(parser, args, argv):
    if not args.config:
        return args
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    known = vars(args)
    defaults = {}
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("command", "config"):
            raise UsageError(f"unknown config key {key!r}")
        defaults[dest] = value
    sub = parser._subparsers._group_actions[0].choices[args.command]
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _seed(args) -> int:
    if args.seed is not None:
        seed = args.seed
    else:
        env = os.environ.get("LOCALSPIN_SEED")
        try:
            seed = int(env) if env else 0
        except ValueError:
            raise UsageError(f"LOCALSPIN_SEED must be an integer, got {env!r}") from None
    if not 0 <= seed < 2**64:
        raise UsageError("seed must be an unsigned 64-bit integer")
    return seed


def _family_spec(args) -> instance.FamilySpec:
    fam = args.family
    try:
        if fam == "torus":
            return instance.torus(args.dim, args.side)
        if args.n is None:
            raise UsageError(f"--n is required for family {fam}")
        return instance.FamilySpec(fam, n=args.n, density=args.density, sigma=args.sigma)
    except instance.InstanceError as exc:
        raise UsageError(f"bad family parameters: {exc}") from None


def _hyperparams(args, inst) -> solver.Hyperparams:
    base = solver.Hyperparams(max_rounds=args.max_rounds, threshold=args.threshold, variant=args.algo,
                              dtau=args.dtau)
    if args.eta is None and args.beta is None:
        return tuner.default_hyperparams(inst, base=base)
    if args.beta is None:
        return tuner.default_hyperparams(inst, eta=args.eta, base=base)
    return base.replace(eta=1.0 if args.eta is None else args.eta, beta=args.beta)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False, default=_json_default) + "\n"


def _json_default(o):
    if hasattr(o, "item"):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _clean(obj):
    """Replace non-finite floats by None so stdout stays strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_clean(v) for v in obj]
    return obj


def _csv(header: List[str], rows) -> str:
    import csv
    import io
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else ("" if v is None else v) for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------


def cmd_generate(args) -> str:
    spec = _family_spec(args)
    inst = instance.generate(spec, _seed(args))
    if args.format == "json":
        return _dump(inst.to_json())
    return instance.serialize_biqmac(inst)


def cmd_stats(args) -> str:
    st = instance.stats(instance.read_instance(args.instance))
    data = st.to_json()
    if args.format == "csv":
        return _csv(list(data), [list(data.values())])
    return _dump(data)


def cmd_oracle(args) -> str:
    inst = instance.read_instance(args.instance)
    sol = oracle.brute_force(inst, workers=args.threads)
    if args.format == "csv":
        return _csv(["max_cut", "num_optima", "spins"],
                    [[sol.max_cut, sol.num_optima, " ".join(str(int(s)) for s in sol.argmax_spins)]])
    return _dump(sol.to_json())


def cmd_solve(args) -> str:
    inst = instance.read_instance(args.instance)
    hp = _hyperparams(args, inst)
    seed = _seed(args)
    if args.restarts < 1:
        raise UsageError("--restarts must be >= 1")
    timing = not args.no_timing
    results = solver.run_restarts(inst, hp, seed, args.restarts, args.threads, record_trace=args.trace)
    best = solver.best_result(results)
    out = {"hyperparams": hp.to_json(), "restarts": args.restarts, "seed": seed,
           "best_cut": best.cut,
           "median_energy": tuner.median([r.energy for r in results]),
           "best": best.to_json(trace=args.trace, timing=timing)}
    if args.target_from:
        with open(args.target_from) as fh:
            target = float(json.load(fh)["max_cut"])
        tts = bench.time_to_solution_trials(inst, hp, target, args.timeout, solver.derive_seed(seed, 1))
        out["target"] = target
        if timing:
            secs = tuner.median([o.seconds for o in tts])
            out["time_to_solution"] = "TIMEOUT" if math.isinf(secs) else secs
        counts = [math.inf if o.restarts is None else o.restarts for o in tts]
        med = tuner.median(counts)
        out["restarts_to_solution"] = None if math.isinf(med) else med
    if args.format == "csv":
        rows = [[k, r.cut, r.energy, r.rounds_used, r.converged] + ([r.wall_time] if timing else [])
                for k, r in enumerate(results)]
        return _csv(["restart", "cut", "energy", "rounds", "converged"] + (["wall_time_s"] if timing else []), rows)
    return _dump(_clean(out))


def cmd_tune(args) -> str:
    inst = instance.read_instance(args.instance)
    base = solver.Hyperparams(max_rounds=args.max_rounds, threshold=args.threshold, variant=args.algo,
                              dtau=args.dtau)
    res = tuner.grid_search(inst, args.etas, args.betas, args.restarts, _seed(args), base, args.threads)
    locus = res.locus()
    if args.format == "csv":
        return tuner.locus_csv(locus)
    out = res.to_json()
    out["locus"] = [list(t) for t in locus]
    if len({t[0] for t in locus}) >= 3:
        out["fit"] = tuner.fit_beta_eta(locus).to_json()
    return _dump(_clean(out))


def _default_suite(seed: int, count: int):
    specs = [instance.g05(16), instance.pm1s(16), instance.pm1d(16), instance.w(16, 0.5),
             instance.pw(16, 0.5), instance.ising(16, 2.5), instance.torus(2, 4)]
    return [(s, seed + k) for s in specs for k in range(count)]


def cmd_bench(args) -> str:
    seed = _seed(args)
    if args.instances:
        if args.family:
            raise UsageError("give instance files or --family, not both")
        suite = [instance.read_instance(p) for p in args.instances]
        suite = [inst if inst.family else instance.Instance(inst.n, inst.edges, path, None)
                 for inst, path in zip(suite, args.instances)]
    elif args.family:
        suite = [(_family_spec(args), seed + k) for k in range(args.count or 10)]
    else:
        suite = _default_suite(seed, args.count or 3)
    base = solver.Hyperparams(max_rounds=args.max_rounds, threshold=args.threshold, variant=args.algo,
                              dtau=args.dtau)
    cfg = bench.BenchConfig(restarts_for_median=args.restarts, timeout=args.timeout,
                            tuning_budget=args.tuning_budget, tts_trials=args.trials,
                            max_restarts=args.max_restarts, tune=not args.no_tune, base=base)
    report = bench.run_benchmark(suite, cfg, seed, args.threads)
    timing = not args.no_timing
    if args.format == "csv":
        return report.to_csv(timing)
    return _dump(_clean(report.to_json(timing)))


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "tune": cmd_tune, "oracle": cmd_oracle,
            "bench": cmd_bench, "stats": cmd_stats}


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _apply_config(parser, args, argv)
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        text = COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except oracle.OracleCapError as exc:
        print(f"localspin: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (ValueError, OSError, KeyError) as exc:
        print(f"localspin: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
