"""Command line interface: ``sinkscale <subcommand> ...``.

Global flags (``--config``, ``--seed``, ``--out``, ``--threads``) go before
the subcommand.  Exit codes: 0 success, 2 invalid input, 3 when a benchmark
finished but some of its cells failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import EXPERIMENTS, ExperimentConfig, load_grids, run_experiment, write_result
from .core import Marginals, ScalingInstance, sk_run
from .diagnostics import diagnose
from .eot import EotProblem, solve_eot, solve_scaling
from .errors import SinkscaleError
from .instances import FAMILIES, InstanceSpec, generate
from .matrix_io import read_matrix, read_vector, to_jsonable, write_json, write_matrix, write_vector
from .permanent import log_permanent
from .reduction import auto_L, discretize, expand, verify_equivalence

log = logging.getLogger("sinkscale")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_CELL_FAILURES = 3


class InputError(Exception):
    """Bad command line input (maps to exit code 2)."""


def parse_params(text):
    """``"k=v,k2=v2"`` into a dict; numbers are converted when possible."""
    out = {}
    if not text:
        return out
    for part in text.split(","):
        if not part.strip():
            continue
        if "=" not in part:
            raise InputError(f"parameter {part!r} is not of the form key=value")
        k, v = part.split("=", 1)
        v = v.strip()
        try:
            num = float(v)
            out[k.strip()] = int(num) if num.is_integer() and "." not in v and "e" not in v.lower() else num
        except ValueError:
            out[k.strip()] = v
    return out


def _targets(args, shape):
    m, n = shape
    if args.u or args.v:
        if not (args.u and args.v):
            raise InputError("--u and --v must be given together")
        return Marginals(read_vector(args.u), read_vector(args.v))
    if args.targets == "ones":
        return Marginals(np.ones(m), np.full(n, m / n))
    return Marginals.uniform(m, n)


def _instance(args):
    """Matrix plus targets; files named ``*.log.txt`` hold natural logs of the entries."""
    a = read_matrix(args.matrix)
    t = _targets(args, a.shape)
    if str(args.matrix).endswith(".log.txt"):
        return ScalingInstance(None, t, log_matrix=a)
    return ScalingInstance(a, t)


def _out_path(args, name):
    base = Path(args.out_dir) if args.out_dir else Path(".")
    base.mkdir(parents=True, exist_ok=True)
    return base / name


def _print_json(obj):
    print(json.dumps(to_jsonable(obj), indent=2, sort_keys=True))


# ---------------------------------------------------------------- commands


def cmd_scale(args):
    inst = _instance(args)
    if args.permanent:
        if args.domain == "log":
            raise InputError("--permanent is only available in the direct domain")
        res, used = sk_run(inst, args.eps, args.max_iter, permanent=True), "direct"
    else:
        res, used = solve_scaling(inst, args.eps, args.max_iter, args.domain)
    if args.trace:
        res.trace.to_csv(args.trace)
    if args.result:
        write_matrix(args.result, res.state.current)
    _print_json({
        "converged": res.converged, "iterations": res.iterations,
        "final_err": res.trace[-1].total_err, "domain": used,
    })
    return EXIT_OK


def cmd_eot(args):
    cost = read_matrix(args.cost)
    t = _targets(args, cost.shape)
    prob = EotProblem(cost, args.eta, t, prescale=(args.prescale == "on"))
    res = solve_eot(prob, args.eps, args.max_iter, args.domain)
    if args.trace:
        res.trace.to_csv(args.trace)
    if args.plan:
        write_matrix(args.plan, res.plan)
    if args.potentials:
        write_json(args.potentials, {"f": res.potentials.f, "g": res.potentials.g})
    _print_json({
        "converged": res.converged, "iterations": res.iterations,
        "final_err": res.trace[-1].total_err, "domain": res.domain,
        "transport_cost": float((res.plan * np.where(np.isfinite(cost), cost, 0.0)).sum()),
    })
    return EXIT_OK


def _table(rep):
    d = rep.density
    lines = [
        f"{'nu':<22}{rep.nu:.6g}  (log10 {rep.log10_nu:.4f})",
        f"{'density rho':<22}{d.rho:.6g}",
        f"{'gamma':<22}{d.gamma:.6g}",
        f"{'gamma_prime':<22}{d.gamma_prime:.6g}",
        f"{'dense (sum > 1)':<22}{d.is_dense}",
        f"{'scalability':<22}{'Feasible' if rep.scalability.feasible else 'Infeasible'}"
        f" (flow {rep.scalability.flow_value:.6g} of {rep.scalability.total:.6g})",
    ]
    if not rep.scalability.feasible:
        lines.append(f"{'  cut':<22}rows {list(rep.scalability.rows)} / cols {list(rep.scalability.cols)}")
    if rep.well_boundedness is not None:
        w = rep.well_boundedness
        lines += [
            f"{'well-bounded rho':<22}{w.rho:.6g}",
            f"{'r_rho / c_rho':<22}{w.r_rho:.6g} / {w.c_rho:.6g}",
            f"{'kappa margin':<22}{w.kappa_margin:.6g}",
        ]
    return "\n".join(lines)


def cmd_diagnose(args):
    inst = _instance(args)
    rep = diagnose(inst, rho=args.rho, wb_rho=args.wb_rho)
    print(_table(rep))
    path = Path(args.json) if args.json else _out_path(args, "diagnostics.json")
    write_json(path, rep.as_dict())
    return EXIT_OK


def cmd_reduce(args):
    inst = _instance(args)
    L = args.L if args.L is not None else auto_L(inst.targets)
    if L is None:
        raise InputError("targets have no small common denominator; pass --L explicitly")
    tint = discretize(inst.targets, L)
    red = expand(inst, tint, max_size=args.max_size)
    out = Path(args.output) if args.output else _out_path(args, "reduced.txt")
    write_matrix(out, red.G)
    side = {
        "L": tint.L, "R": tint.R, "t_shift": tint.t_shift,
        "u_prime": list(tint.u_prime), "v_prime": list(tint.v_prime),
        "block_offsets": {"rows": red.row_offsets.tolist(), "cols": red.col_offsets.tolist()},
    }
    if args.verify:
        side["equivalence"] = verify_equivalence(inst, L, args.verify, max_size=args.max_size).as_dict()
    sidecar = out.with_name(out.stem + ".sidecar.json")
    write_json(sidecar, side)
    _print_json({"N": red.G.shape[0], "matrix": str(out), "sidecar": str(sidecar), **side})
    return EXIT_OK


def cmd_permanent(args):
    a = read_matrix(args.matrix)
    lp = log_permanent(a)
    _print_json({
        "n": a.shape[0], "permanent": math.exp(lp) if lp > -math.inf else 0.0, "log_permanent": lp,
    })
    return EXIT_OK


def cmd_gen(args):
    params = parse_params(args.params)
    spec = InstanceSpec(args.family, params, args.seed)
    inst = generate(spec)
    prefix = Path(args.prefix)
    if args.out_dir and not prefix.is_absolute():
        prefix = Path(args.out_dir) / prefix
    prefix.parent.mkdir(parents=True, exist_ok=True)
    mpath = prefix.with_name(prefix.name + ".txt")
    if inst.log_matrix is not None:
        # entries underflow; store logs so nothing is lost
        mpath = prefix.with_name(prefix.name + ".log.txt")
        write_matrix(mpath, inst.log_matrix)
    else:
        write_matrix(mpath, inst.matrix)
    write_vector(prefix.with_name(prefix.name + ".u.txt"), inst.targets.u)
    write_vector(prefix.with_name(prefix.name + ".v.txt"), inst.targets.v)
    side = {"family": spec.family, "params": params, "seed": spec.seed, "matrix": mpath.name,
            "log_matrix": inst.log_matrix is not None, "audit": inst.meta}
    write_json(prefix.with_name(prefix.name + ".json"), side)
    _print_json(side)
    return EXIT_OK


def cmd_bench(args):
    cfg_obj = args.config_obj or {}
    names = EXPERIMENTS if args.experiment == "all" else (args.experiment,)
    status = EXIT_OK
    for name in names:
        cfg = ExperimentConfig(
            name, load_grids(cfg_obj, name), seed=args.seed, max_iter=args.max_iter,
            budget=args.budget, threads=args.threads, out_dir=args.out_dir or "results", plot=args.plot,
        )
        result = run_experiment(cfg)
        paths = write_result(result, cfg.out_dir, cfg.plot)
        print(f"{name}: {len(result.rows)} cells, {len(result.failures)} failed -> "
              + ", ".join(str(p) for p in paths))
        if result.failures:
            status = EXIT_CELL_FAILURES
    return status


# ---------------------------------------------------------------- parser


def _add_targets(p):
    p.add_argument("--u", help="row targets (whitespace separated or JSON list)")
    p.add_argument("--v", help="column targets")
    p.add_argument("--targets", choices=("uniform", "ones"), default="uniform",
                   help="targets to use when --u/--v are absent (default: uniform, total mass 1)")


def build_parser(config=None):
    """Argument parser; sections of ``config`` named after a subcommand become its defaults."""
    ap = argparse.ArgumentParser(prog="sinkscale", description="Sinkhorn-Knopp matrix scaling toolkit",
                                 allow_abbrev=False)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--config", help="JSON config file with default flag values and sweep grids")
    ap.add_argument("--seed", type=int, default=None, help="seed for random families (default 0)")
    ap.add_argument("--out", dest="out_dir", default=None, help="output directory")
    ap.add_argument("--threads", type=int, default=None, help="worker threads for sweeps")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scale", help="run SK on a matrix")
    p.add_argument("--matrix", required=True)
    _add_targets(p)
    p.add_argument("--eps", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=10**6)
    p.add_argument("--domain", choices=("auto", "direct", "log"), default="auto")
    p.add_argument("--trace", help="write the per-step trace CSV here")
    p.add_argument("--result", help="write the scaled matrix here")
    p.add_argument("--permanent", action="store_true", help="record permanents in the trace (n <= 12)")
    p.set_defaults(func=cmd_scale)

    p = sub.add_parser("eot", help="entropic optimal transport")
    p.add_argument("--cost", required=True)
    p.add_argument("--eta", type=float, required=True)
    _add_targets(p)
    p.add_argument("--eps", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=10**6)
    p.add_argument("--prescale", choices=("on", "off"), default="off")
    p.add_argument("--domain", choices=("auto", "direct", "log"), default="auto")
    p.add_argument("--trace")
    p.add_argument("--plan")
    p.add_argument("--potentials", help="write the dual potentials as JSON")
    p.set_defaults(func=cmd_eot)

    p = sub.add_parser("diagnose", help="density, well-boundedness, scalability")
    p.add_argument("--matrix", required=True)
    _add_targets(p)
    p.add_argument("--rho", type=float, default=None, help="density threshold (default: best)")
    p.add_argument("--wb-rho", type=float, default=None,
                   help="well-boundedness threshold on the implied cost -log(A/max A)")
    p.add_argument("--json", help="where to write the JSON report (default OUT/diagnostics.json)")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("reduce", help="expand to a (1,1) instance")
    p.add_argument("--matrix", required=True)
    _add_targets(p)
    p.add_argument("--L", type=int, default=None, help="resolution (default: common denominator)")
    p.add_argument("--output", help="reduced matrix file (default OUT/reduced.txt)")
    p.add_argument("--max-size", type=int, default=20000)
    p.add_argument("--verify", type=int, default=0, metavar="STEPS",
                   help="also run the equivalence check for this many steps")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("permanent", help="exact permanent of a square matrix")
    p.add_argument("--matrix", required=True)
    p.set_defaults(func=cmd_permanent)

    p = sub.add_parser("gen", help="generate an instance")
    p.add_argument("--family", required=True, choices=FAMILIES)
    p.add_argument("--params", default="", help="comma separated key=value pairs")
    p.add_argument("--out", dest="prefix", required=True, help="output prefix")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="run an experiment sweep")
    p.add_argument("experiment", choices=EXPERIMENTS + ("all",))
    p.add_argument("--max-iter", type=int, default=10**6)
    p.add_argument("--budget", type=float, default=None, help="wall-clock seconds per cell")
    p.add_argument("--plot", choices=("png", "svg", "none"), default="png")
    p.set_defaults(func=cmd_bench)
    # bench sections are sweep grids and are handled by the harness
    for name, sp in sub.choices.items():
        section = (config or {}).get(name) if name != "bench" else None
        if isinstance(section, dict):
            known = {a.dest for a in sp._actions}
            sp.set_defaults(**{k.replace("-", "_"): v for k, v in section.items()
                               if k.replace("-", "_") in known})
    return ap


def _load_config(argv):
    pre = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return None
    try:
        cfg = json.loads(Path(known.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {known.config}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise InputError("config must be a JSON object")
    return cfg


def _apply_config(args, cfg):
    args.config_obj = cfg
    cfg = cfg or {}
    if args.seed is None:
        args.seed = int(cfg.get("seed", 0))
    if args.threads is None:
        args.threads = int(cfg.get("threads", 1))
    if args.out_dir is None:
        args.out_dir = cfg.get("out")


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = _load_config(argv)
    except InputError as exc:
        print(f"sinkscale: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    args = build_parser(cfg).parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _apply_config(args, cfg)
        return args.func(args)
    except (InputError, SinkscaleError, ValueError, OSError, KeyError) as exc:
        print(f"sinkscale: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
