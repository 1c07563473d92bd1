"""Experiment sweeps and the structural stability audit.

Each experiment expands its grids into independent cells.  A cell builds one
instance, runs SK and returns a flat row.  Rows are sorted by their cell key
before they are written, so the CSV does not depend on scheduling; wall-clock
times go to a separate ``*_timing.csv`` file for the same reason.

"Iterations" always means SK half-steps: the index ``k`` of the first
normalization after which the l1 marginal error is at most ``eps``.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Marginals, ScalingInstance, marginal_error_l1, nu
from .diagnostics import density, well_bounded
from .eot import EotProblem, solve_eot, solve_scaling
from .instances import (
    critical_sequence, critical_step_bound, gen_critical2x2, gen_random_dense, gen_thm61,
    gen_thm71, gen_tight2x2, _rng,
)

log = logging.getLogger(__name__)

EXPERIMENTS = (
    "outlier_independence", "prescale_acceleration", "phase_transition",
    "critical_boundary", "nu_dependence",
)

DEFAULTS = {
    "outlier_independence": {"n": [20], "outliers": [1e2, 1e4, 1e6], "eps": [1e-6], "eta": 1.0,
                             "cost_max": 2.0, "repeats": 3},
    "prescale_acceleration": {"n": [20, 100, 500], "eps": [1e-6]},
    "phase_transition": {"n": [20], "nu": [1e-3, 1e-6, 1e-9], "eps": [1e-4], "t": 8, "s": 12,
                         "gamma": 0.7, "rho": 0.5},
    "critical_boundary": {"p": 0.5, "q": 0.1, "eps": [1e-1, 1e-2, 1e-3]},
    "nu_dependence": {"delta": [1e-2, 1e-4, 1e-8], "eps": [1e-8]},
}


@dataclass
class ExperimentConfig:
    experiment: str
    grids: dict = field(default_factory=dict)
    seed: int = 0
    max_iter: int = 10**6
    budget: float = None
    threads: int = 1
    out_dir: str = "."
    plot: str = "png"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        merged = dict(DEFAULTS[self.experiment])
        merged.update(self.grids)
        for k, val in merged.items():
            if isinstance(val, list) and not val:
                raise ValueError(f"grid {k!r} is empty")
        self.grids = merged


@dataclass
class ExperimentResult:
    experiment: str
    rows: list
    timings: list
    columns: list

    @property
    def failures(self):
        return [r for r in self.rows if r.get("status") != "ok"]

    def column(self, name):
        return [r.get(name) for r in self.rows]


def _run_cell(cfg, inst, eps, domain="auto"):
    res, used = solve_scaling(inst, eps, cfg.max_iter, domain, budget=cfg.budget)
    last = res.trace[-1]
    status = "ok" if res.converged else ("budget" if len(res.trace) < cfg.max_iter else "max_iter")
    return {
        "iterations": res.iterations if res.converged else "",
        "final_err": last.total_err,
        "steps_run": len(res.trace),
        "converged": res.converged,
        "domain": used,
        "status": status,
    }


def _diag_summary(matrix, targets, rho):
    rep = density(matrix, targets, rho)
    return {"measured_nu": nu(matrix), "gamma": rep.gamma, "gamma_prime": rep.gamma_prime,
            "rho": rep.rho}


# ---------------------------------------------------------------- cells


def _outlier_cost(n, seed, cost_max):
    rng = _rng(seed)
    return rng.uniform(0.0, cost_max, size=(n, n))


def _cells_outlier(cfg):
    g = cfg.grids
    for n in g["n"]:
        for rep in range(int(g["repeats"])):
            for eps in g["eps"]:
                for big in g["outliers"]:
                    yield (n, rep, eps, big)


def _cell_outlier(cfg, key):
    n, rep, eps, big = key
    g = cfg.grids
    eta = float(g["eta"])
    cost = _outlier_cost(n, cfg.seed + 1000 * rep + n, float(g["cost_max"]))
    cost[0, 0] = big / eta
    targets = Marginals.uniform(n, n)
    prob = EotProblem(cost, eta, targets)
    res = solve_eot(prob, eps, cfg.max_iter, domain="log", budget=cfg.budget)
    wb = well_bounded(eta * cost, targets, eta * float(g["cost_max"]))
    return {
        "n": n, "repeat": rep, "eps": eps, "outlier": big,
        "iterations": res.iterations if res.converged else "",
        "final_err": res.trace[-1].total_err, "converged": res.converged, "domain": res.domain,
        "kappa_margin": wb.kappa_margin, "status": "ok" if res.converged else "max_iter",
    }


def _cells_prescale(cfg):
    for n in cfg.grids["n"]:
        for eps in cfg.grids["eps"]:
            for mode in ("off", "on"):
                yield (n, eps, mode)


def _cell_prescale(cfg, key):
    n, eps, mode = key
    inst = gen_thm71(int(n))
    t = inst.targets
    a = inst.matrix
    if mode == "on":
        a = t.u[:, None] * a * t.v[None, :]
    row = {"n": n, "eps": eps, "prescale": mode}
    row.update(_run_cell(cfg, ScalingInstance(a, t), eps, "direct"))
    return row


def _dense_with_floor(n, gamma, rho, nu, seed):
    """Dense random instance whose light entries are pushed down to about ``nu``."""
    inst = gen_random_dense(n, n, gamma, gamma, rho, seed)
    a = np.array(inst.matrix)
    light = a <= rho * a.max()
    rng = _rng(seed + 1)
    a[light] = nu * rng.uniform(1.0, 2.0, size=int(light.sum()))
    return ScalingInstance(a, Marginals.ones(n))


def _cells_phase(cfg):
    for n in cfg.grids["n"]:
        for nu_val in cfg.grids["nu"]:
            for eps in cfg.grids["eps"]:
                for fam in ("dense", "subdense"):
                    yield (fam, n, nu_val, eps)


def _cell_phase(cfg, key):
    fam, n, nu_val, eps = key
    g = cfg.grids
    if fam == "dense":
        inst = _dense_with_floor(int(n), float(g["gamma"]), float(g["rho"]), nu_val, cfg.seed)
    else:
        n = int(n)
        t = int(g["t"]) if n == 20 else max(1, round(0.4 * n))
        s = int(g["s"]) if n == 20 else max(t + 1, round(0.6 * n))
        inst = gen_thm61(n, t, s, nu_val)
    row = {"family": fam, "n": n, "nu": nu_val, "eps": eps}
    row.update(_diag_summary(inst.matrix, inst.targets, float(g["rho"])))
    row.update(_run_cell(cfg, inst, eps))
    return row


def _cells_critical(cfg):
    for eps in cfg.grids["eps"]:
        yield (float(cfg.grids["p"]), float(cfg.grids["q"]), eps)


def _cell_critical(cfg, key):
    p, q, eps = key
    inst = gen_critical2x2(p, q)
    row = {"p": p, "q": q, "eps": eps, "bound": critical_step_bound(eps)}
    row.update(_run_cell(cfg, inst, eps, "direct"))
    seq = critical_sequence(p, q, critical_step_bound(eps) // 2)
    hits = np.flatnonzero(seq <= eps)
    row["recurrence_iterations"] = int(2 * hits[0]) if hits.size else ""
    return row


def _cells_nu(cfg):
    for d in cfg.grids["delta"]:
        for eps in cfg.grids["eps"]:
            yield (d, eps)


def _cell_nu(cfg, key):
    d, eps = key
    inst = gen_tight2x2(1.0, d, d, 1.0)
    row = {"delta": d, "eps": eps, "neg_log_delta": -math.log(d)}
    row.update(_run_cell(cfg, inst, eps, "direct"))
    if row["iterations"] != "":
        row["ratio"] = row["iterations"] / row["neg_log_delta"]
    return row


_TABLE = {
    "outlier_independence": (_cells_outlier, _cell_outlier,
                             ["n", "repeat", "eps", "outlier", "iterations", "final_err", "converged",
                              "domain", "kappa_margin", "status"]),
    "prescale_acceleration": (_cells_prescale, _cell_prescale,
                              ["n", "eps", "prescale", "iterations", "final_err", "steps_run",
                               "converged", "domain", "status"]),
    "phase_transition": (_cells_phase, _cell_phase,
                         ["family", "n", "nu", "eps", "measured_nu", "gamma", "gamma_prime", "rho", "iterations",
                          "final_err", "steps_run", "converged", "domain", "status"]),
    "critical_boundary": (_cells_critical, _cell_critical,
                          ["p", "q", "eps", "bound", "iterations", "recurrence_iterations",
                           "final_err", "steps_run", "converged", "domain", "status"]),
    "nu_dependence": (_cells_nu, _cell_nu,
                      ["delta", "eps", "neg_log_delta", "iterations", "ratio", "final_err",
                       "steps_run", "converged", "domain", "status"]),
}


def _safe_cell(cfg, fn, key):
    start = time.perf_counter()
    try:
        row = fn(cfg, key)
    except Exception as exc:  # recorded in the row, the sweep goes on
        log.warning("cell %r failed: %s", key, exc)
        row = {"status": f"error: {type(exc).__name__}: {exc}"}
    return key, row, time.perf_counter() - start


def _sort_key(key):
    return tuple((0, x) if isinstance(x, (int, float)) else (1, str(x)) for x in key)


def run_experiment(cfg):
    """Run every cell of ``cfg`` and return rows sorted by cell key."""
    cells_fn, cell_fn, columns = _TABLE[cfg.experiment]
    keys = list(cells_fn(cfg))
    if cfg.threads and cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            done = list(pool.map(lambda k: _safe_cell(cfg, cell_fn, k), keys))
    else:
        done = [_safe_cell(cfg, cell_fn, k) for k in keys]
    done.sort(key=lambda item: _sort_key(item[0]))
    rows, timings = [], []
    for key, row, wall in done:
        rows.append(row)
        timings.append({"cell": "|".join(map(str, key)), "wall_seconds": wall})
    for row in rows:
        if row.get("status") == "ok" and row["final_err"] > row["eps"]:
            row["status"] = "error: final error above eps"
    return ExperimentResult(cfg.experiment, rows, timings, columns)


def _fmt(x):
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, (np.floating,)):
        return repr(float(x))
    return str(x)


def write_table(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])


def write_result(result, out_dir, plot="png"):
    """Write ``<experiment>.csv``, ``<experiment>_timing.csv`` and optionally a figure."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    main = out / f"{result.experiment}.csv"
    write_table(main, result.rows, result.columns)
    write_table(out / f"{result.experiment}_timing.csv", result.timings, ["cell", "wall_seconds"])
    paths = [main]
    if plot and plot != "none":
        from .plotting import plot_experiment
        paths.append(plot_experiment(result, out / f"{result.experiment}.{plot}"))
    return paths


# ---------------------------------------------------------------- audits


@dataclass
class StabilityAudit:
    status: str
    bounds: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)

    @property
    def violations(self):
        return [r for r in self.rows if r["audited"] and not r["ok"]]

    @property
    def audited_steps(self):
        return sum(1 for r in self.rows if r["audited"])


def structural_stability_audit(states, report, n=None):
    """Check the sum and entry ranges on the non-exceptional steps.

    Args:
        states: SK states of a (1, 1) run on a square instance, in order,
            starting at step 0.
        report: :class:`DensityReport` of the input matrix.
        n: matrix order (read from the states when omitted).

    Returns:
        StabilityAudit; ``status`` is ``"precondition unmet"`` when
        ``gamma + gamma' <= 1``.
    """
    states = list(states)
    if n is None:
        n = states[0].current.shape[0]
    g = report.gamma + report.gamma_prime
    if g <= 1:
        return StabilityAudit("precondition unmet", {"gamma_sum": g})
    ones = Marginals.ones(n)
    rho = report.rho
    lo = rho * rho * (g - 1) / 10
    hi = 10 / (rho * rho * (g - 1))
    entry_hi = hi / n
    limit = 0.9 * n * (1 - 1 / g)
    bounds = {"sum_low": lo, "sum_high": hi, "entry_high": entry_hi, "exceptional_limit": limit}
    errs = []
    rows = []
    for st in states:
        a = st.current
        errs.append(sum(marginal_error_l1(a, ones)))
        k = st.k
        audited = k >= 2 and max(errs[-3:]) <= limit
        r, c = a.sum(axis=1), a.sum(axis=0)
        smin = float(min(r.min(), c.min()))
        smax = float(max(r.max(), c.max()))
        emax = float(a.max())
        ok = lo <= smin and smax <= hi and emax <= entry_hi
        rows.append({
            "k": k, "audited": audited, "ok": ok, "min_sum": smin, "max_sum": smax, "max_entry": emax,
            "low_margin": smin / lo, "high_margin": hi / smax, "entry_margin": entry_hi / emax,
        })
    return StabilityAudit("ok", bounds, rows)


def load_grids(obj, experiment):
    """Pick the grid overrides for ``experiment`` out of a parsed config dict."""
    if not obj:
        return {}
    section = obj.get(experiment, obj.get("grids", {}))
    return dict(section)


__all__ = [
    "EXPERIMENTS", "DEFAULTS", "ExperimentConfig", "ExperimentResult", "run_experiment",
    "write_result", "write_table", "structural_stability_audit", "StabilityAudit", "load_grids",
]
