"""
Command-line entry point.

Exit codes: 0 success, 1 usage or config error, 2 a statistical check
failed, 3 I/O error. Every subcommand prints one JSON document to stdout.
"""
import argparse
import json
import math
import os
import sys

import numpy as np

from . import attractor, campaign, drift, dynamics, volterra
from .simplex import barycenter, lattice_points

EXIT_OK, EXIT_USAGE, EXIT_CHECK, EXIT_IO = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(obj):
    print(json.dumps(obj, indent=2, default=_jsonable))


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def _clean(value):
    # JSON has no infinities or NaN
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_clean(v) for v in value]
    return value


def cmd_validate(args):
    try:
        cfg = campaign.load_config(args.config, seed=args.seed)
    except campaign.ConfigError as exc:
        _emit({"valid": False, "errors": exc.errors})
        return EXIT_USAGE
    const = dynamics.derive_constants(cfg.ensemble, cfg.epsilon, d=cfg.d)
    _emit({"valid": True, "errors": [], "m": cfg.m, "operators": len(cfg.ensemble),
           "constants": {"r": const.r, "N": const.N, "q": const.q, "d": const.d, "D": const.D}})
    return EXIT_OK


def cmd_simulate(args):
    cfg = campaign.load_config(args.config, seed=args.seed)
    result = campaign.run_campaign(cfg, threads=args.threads, record=args.series)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "summary.csv")
    written = []
    try:
        campaign.write_summary_csv(result, csv_path)
        written.append(csv_path)
        if args.series:
            path = os.path.join(args.out, "series.jsonl")
            campaign.write_series_jsonl(result, path)
            written.append(path)
    except OSError:
        for path in written:
            os.unlink(path)
        raise
    _emit(result.aggregate())
    return EXIT_OK


def cmd_deterministic(args):
    cfg = campaign.load_config(args.config, seed=args.seed)
    block = cfg.raw.get("deterministic", {})
    op = volterra.operator_from_spec(block.get("operator", "extremal:" + "1" * (cfg.m * (cfg.m - 1) // 2)),
                                     m=cfg.m)
    x0 = campaign.parse_point(block.get("x0", "barycenter"), cfg.m, "deterministic.x0")
    level = block.get("boundary_level", 1e-6)
    run = dynamics.run_deterministic_trajectory(op, x0, block.get("horizon", 100_000),
                                                delta=cfg.delta, K=cfg.K)
    _emit(_clean({
        "operator": op.to_dict(),
        "horizon": len(run.states) - 1,
        "min_coord": float(run.min_coord.min()),
        "boundary_level": level,
        "first_below_boundary_level": run.first_below(level),
        "leaders": [j + 1 for j in run.leaders],
        "verdict_vertex": 0 if run.verdict_vertex is None else run.verdict_vertex + 1,
        "absorption_step": run.absorption_step,
        "final_state": run.states[-1].tolist(),
    }))
    return EXIT_OK


def cmd_drift(args):
    cfg = campaign.load_config(args.config, seed=args.seed)
    result = campaign.run_campaign(cfg, threads=args.threads)
    report = campaign.drift_report(result)
    _emit(_clean(report))
    return EXIT_OK if report["passed"] else EXIT_CHECK


def _pullback_points(spec, m):
    if spec == "barycenter":
        return barycenter(m)[None, :]
    if spec == "vertices":
        return np.eye(m)
    if isinstance(spec, dict):
        return lattice_points(m, spec["lattice"])
    return np.asarray(spec, dtype=np.float64)


def cmd_pullback(args):
    cfg = campaign.load_config(args.config, seed=args.seed)
    block = cfg.raw.get("pullback", {})
    points = _pullback_points(block.get("points", "barycenter"), cfg.m)
    rep = attractor.check_point_attractor(
        cfg.ensemble, points, n_max=block.get("n_max", 200), envs=block.get("envs", 200),
        seed=cfg.seed, tolerance=block.get("tolerance", 1e-6), ks_n=block.get("ks_n", 50))
    out = rep.to_dict()
    min_fraction = block.get("min_fraction", 0.99)
    out["passed"] = bool(rep.fraction_converged >= min_fraction and rep.all_vertices_reached
                         and rep.invariance_exact and rep.ks_pvalue >= 0.01)
    _emit(out)
    return EXIT_OK if out["passed"] else EXIT_CHECK


def cmd_enumerate(args):
    if args.m is None:
        if args.config is None:
            raise campaign.ConfigError(["enumerate needs --m or --config"])
        args.m = campaign.load_config(args.config).m
    ops = volterra.enumerate_extremal(args.m)
    _emit({"m": args.m, "count": len(ops),
           "operators": [{"id": op.label, **op.to_dict()} for op in ops]})
    return EXIT_OK


def cmd_appendix(args):
    block = {}
    seed = 0
    if args.config is not None:
        cfg = campaign.load_config(args.config, seed=args.seed)
        block = cfg.raw.get("appendix", {})
        seed = cfg.seed
    elif args.seed is not None:
        seed = args.seed
    report = drift.appendix_report(seed=seed, **block)
    bound = report["f"] + report["g"] + 3 * report["escape_se"]
    report["escape_bound"] = bound
    report["passed"] = report["escape_freq"] <= bound
    _emit(_clean(report))
    return EXIT_OK if report["passed"] else EXIT_CHECK


def build_parser():
    parser = _Parser(prog="rqso", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, metavar="PATH")
        p.add_argument("--seed", type=int, default=None, metavar="OVERRIDE")
        return p

    common(sub.add_parser("validate", help="check a config file")).set_defaults(func=cmd_validate)
    p = common(sub.add_parser("simulate", help="run a convergence campaign"))
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--threads", type=int, default=None, metavar="N")
    p.add_argument("--series", action="store_true", help="also dump series.jsonl")
    p.set_defaults(func=cmd_simulate)
    common(sub.add_parser("deterministic", help="single-operator orbit diagnostics")).set_defaults(
        func=cmd_deterministic)
    p = common(sub.add_parser("drift", help="conditional log-drift below -d"))
    p.add_argument("--threads", type=int, default=None, metavar="N")
    p.set_defaults(func=cmd_drift)
    common(sub.add_parser("pullback", help="pullback point-attractor report")).set_defaults(
        func=cmd_pullback)
    p = common(sub.add_parser("enumerate", help="list extremal operators"), config_required=False)
    p.add_argument("--m", type=int, default=None)
    p.set_defaults(func=cmd_enumerate)
    common(sub.add_parser("appendix-check", help="escape-bound check for drift processes"),
           config_required=False).set_defaults(func=cmd_appendix)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", None) is not None and args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except campaign.ConfigError as exc:
        _emit({"valid": False, "errors": exc.errors})
        return EXIT_USAGE
    except (volterra.VolterraError, dynamics.EnsembleError, ValueError) as exc:
        print(f"rqso: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"rqso: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
