"""Acceptance checks: one pass/fail line per criterion.

Run ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or ``python tests/test_acceptance.py`` for a plain listing.
"""

import math
import time
from decimal import Decimal, getcontext
from fractions import Fraction

import numpy as np
import pytest

from sinkscale.bench import ExperimentConfig, run_experiment
from sinkscale.core import Marginals, ScalingInstance, SkState, iterate_states, marginal_error_l1, sk_run, sk_step
from sinkscale.eot import iterate_log_states, log_kernel, build_kernel
from sinkscale.instances import (
    critical_delta, critical_sequence, critical_step_bound, gen_critical2x2, gen_thm61, gen_thm71,
    thm61_decay_floor, thm61_epsilon, thm71_theta_of, thm71_theta_sequence,
)
from sinkscale.permanent import permanent, permanent_trace
from sinkscale.reduction import block_closed_form, block_pattern, structured_block_matrix, verify_equivalence

RESULTS = {}


def _record(num, name, ok, detail, elapsed, limit):
    ok = bool(ok and elapsed < limit)
    RESULTS[num] = f"[{'PASS' if ok else 'FAIL'}] {num:>2}. {name}: {detail} ({elapsed:.2f}s, limit {limit}s)"
    return ok


def _composition(rng, total, parts):
    cuts = np.sort(rng.choice(np.arange(1, total), size=parts - 1, replace=False))
    return np.diff(np.concatenate([[0], cuts, [total]]))


def _reduction_corpus(count=50, seed=11):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        m, n = rng.integers(2, 6, size=2)
        L = int(rng.integers(max(m, n) + 1, 121))
        u = _composition(rng, L, m) / L
        v = _composition(rng, L, n) / L
        a = rng.uniform(0.05, 1.0, size=(m, n))
        a[rng.random((m, n)) < 0.15] = 0.0
        a[np.arange(m), np.arange(m) % n] = rng.uniform(0.5, 1.0, size=m)
        a[np.arange(n) % m, np.arange(n)] = rng.uniform(0.5, 1.0, size=n)
        out.append((ScalingInstance.from_arrays(a, u, v), L))
    return out


_REDUCTION = {}


def _reduction_reports():
    if not _REDUCTION:
        start = time.perf_counter()
        _REDUCTION["reports"] = [verify_equivalence(inst, L, 40) for inst, L in _reduction_corpus()]
        _REDUCTION["elapsed"] = time.perf_counter() - start
    return _REDUCTION["reports"], _REDUCTION["elapsed"]


def check_1():
    reps, elapsed = _reduction_reports()
    dev = max(r.max_deviation for r in reps)
    exact = all(r.exact for r in reps)
    return _record(1, "reduction exactness", exact and dev <= 1e-9,
                   f"50 instances x 40 steps, max |err_A - err_G/L| = {dev:.2e}", elapsed, 10)


def check_2():
    reps, elapsed = _reduction_reports()
    spread = max(r.max_spread for r in reps)
    return _record(2, "block constancy", spread <= 1e-12,
                   f"max relative within-block spread = {spread:.2e}", elapsed, 10)


def check_3():
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(4, 41))
        t = int(rng.integers(1, n - 1))
        s = int(rng.integers(t + 1, n))
        d = float(10 ** rng.uniform(-6, 0))
        u = rng.uniform(0.2, 3.0, n)
        v = rng.uniform(0.2, 3.0, n)
        state = SkState.initial(structured_block_matrix(n, t, s, d, u, v))
        ones = Marginals.ones(n)
        while state.k < 2:
            state = sk_step(state, ones)
        expect = block_pattern(n, t, s, *block_closed_form(n, t, s, d, v))
        worst = max(worst, float(np.max(np.abs(state.current - expect) / expect)))
    return _record(3, "two-step closed form", worst <= 1e-12,
                   f"20 draws, max relative entry deviation = {worst:.2e}", time.perf_counter() - start, 5)


def check_4():
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    floor = math.factorial(6) / 6**6
    worst_law, worst_prod, lowest = 0.0, 0.0, math.inf
    for _ in range(30):
        inst = ScalingInstance(rng.uniform(0.01, 1.0, (6, 6)), Marginals.ones(6))
        tr = permanent_trace(inst, 60)
        worst_law = max(worst_law, tr.max_rel_error)
        worst_prod = max(worst_prod, max(r.marginal_product for r in tr.records))
        res = sk_run(inst, 1e-12)
        lowest = min(lowest, permanent(res.state.current))
    ok = worst_law <= 1e-8 and worst_prod <= 1 + 1e-10 and lowest >= floor - 1e-9
    return _record(4, "permanent laws", ok,
                   f"update law rel err {worst_law:.2e}, max marginal product {worst_prod:.12f}, "
                   f"min converged per {lowest:.6f} >= {floor:.6f}", time.perf_counter() - start, 30)


def check_5():
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    violations = 0
    for _ in range(200):
        n = int(rng.integers(2, 13))
        a = rng.uniform(0, 1, (n, n)) ** 3 + 1e-9
        errs = [sum(marginal_error_l1(st.current, Marginals.ones(n)))
                for st in iterate_states(ScalingInstance(a, Marginals.ones(n)), 100)]
        violations += int(np.sum(np.diff(errs) > 1e-9))
    return _record(5, "marginal monotonicity", violations == 0,
                   f"200 instances x 100 steps, {violations} violations", time.perf_counter() - start, 20)


def check_6():
    start = time.perf_counter()
    worst = 0.0
    for n in (10, 50, 100):
        oracle = thm71_theta_sequence(n, 100)
        odd = [thm71_theta_of(st.current, n) for st in iterate_states(gen_thm71(n), 200) if st.k % 2]
        worst = max(worst, float(np.max(np.abs(np.array(odd) - oracle))))
    ns = np.arange(10, 101, 10)
    its = np.array([sk_run(gen_thm71(int(n)), 1e-6).iterations for n in ns], dtype=float)
    x = np.log(ns)
    slope, icept = np.polyfit(x, its, 1)
    r2 = 1 - np.sum((its - (slope * x + icept)) ** 2) / np.sum((its - its.mean()) ** 2)
    ok = worst <= 1e-10 and slope > 0 and r2 > 0.9
    return _record(6, "dense family scalar oracle", ok,
                   f"max |theta - recurrence| = {worst:.2e}, iterations vs ln n slope {slope:.2f}, "
                   f"R^2 {r2:.3f}", time.perf_counter() - start, 60)


def check_7():
    start = time.perf_counter()
    cfg = ExperimentConfig("prescale_acceleration", {"n": [20, 100, 500], "eps": [1e-6]}, plot="none")
    rows = [r for r in run_experiment(cfg).rows if r["prescale"] == "on"]
    its = [r["iterations"] for r in rows]
    ok = len(its) == 3 and "" not in its and max(its) - min(its) <= 2
    return _record(7, "pre-scaling dimension independence", ok,
                   f"iterations at n=20,100,500: {its}", time.perf_counter() - start, 60)


def check_8():
    start = time.perf_counter()
    cfg = ExperimentConfig("outlier_independence", {}, plot="none")
    res = run_experiment(cfg)
    by_rep = {}
    for r in res.rows:
        by_rep.setdefault(r["repeat"], []).append(r["iterations"])
    same = all(len(set(v)) == 1 and "" not in v for v in by_rep.values())
    kappa = min(r["kappa_margin"] for r in res.rows)
    ok = same and kappa >= 0.2 and all(r["domain"] == "log" for r in res.rows)
    detail = ", ".join(f"repeat {k}: {v}" for k, v in sorted(by_rep.items()))
    return _record(8, "outlier independence", ok, f"{detail}; min kappa margin {kappa:.2f} at rho=2",
                   time.perf_counter() - start, 30)


def check_9():
    start = time.perf_counter()
    p, q = 0.5, 0.1
    inst = gen_critical2x2(p, q)
    rec = critical_sequence(p, q, 600)
    sim = [critical_delta(st.current[0, 0], st.current[1, 0])
           for st in iterate_states(inst, 1201) if st.k % 2 == 0]
    dev = float(np.max(np.abs(np.array(sim) - rec)))
    its = {eps: sk_run(inst, eps).iterations for eps in (1e-1, 1e-2, 1e-3)}
    within = all(k is not None and k <= critical_step_bound(e) for e, k in its.items())
    exact = critical_sequence(Fraction(1, 2), Fraction(1, 10), 1)
    first = exact[0] == Fraction(1, 5) and exact[1] == Fraction(1, 7) and abs(sim[1] - 1 / 7) <= 1e-15
    ok = within and dev <= 1e-12 and first
    return _record(9, "critical boundary", ok,
                   f"iterations {list(its.values())} vs bounds {[critical_step_bound(e) for e in its]}, "
                   f"recurrence dev {dev:.1e}, exact Delta(0), Delta(2) = {exact[0]}, {exact[1]}", time.perf_counter() - start, 5)


def check_10():
    start = time.perf_counter()
    nus = [1e-3, 1e-6, 1e-9]
    its = [sk_run(gen_thm61(20, 8, 12, v), 1e-4).iterations for v in nus]
    decades = [-math.log10(v) for v in nus]
    steps = [(its[i + 1] - its[i]) / (decades[i + 1] - decades[i]) for i in range(2)]
    cfg = ExperimentConfig("nu_dependence", {}, plot="none")
    ratios = [r["ratio"] for r in run_experiment(cfg).rows]
    band = max(ratios) / min(ratios)
    ok = min(steps) >= 0.5 and band <= 4
    return _record(10, "nu dependence", ok,
                   f"block family iterations {its} (per decade {min(steps):.1f}+), "
                   f"2x2 iterations/(-ln delta) band {band:.2f}", time.perf_counter() - start, 30)


def _decimal_block_eps(n, t, s, nu, steps):
    """High precision block recurrence for the two-level family."""
    getcontext().prec = 300
    meta = gen_thm61(n, t, s, nu).meta
    t11, t12, t21, t22 = (Decimal(repr(meta[k])) for k in ("theta11", "theta12", "theta21", "theta22"))
    N, T, S = Decimal(n), Decimal(t), Decimal(s)
    out = []
    for k in range(steps):
        if k % 2 == 0:
            r1, r2 = S * t11 + (N - S) * t12, S * t21 + (N - S) * t22
            t11, t12, t21, t22 = t11 / r1, t12 / r1, t21 / r2, t22 / r2
            out.append(N / S * (T * t12 + (N - T) * t22 - 1))
        else:
            c1, c2 = T * t11 + (N - T) * t21, T * t12 + (N - T) * t22
            t11, t21, t12, t22 = t11 / c1, t21 / c1, t12 / c2, t22 / c2
            out.append(N / (N - T) * (S * t11 + (N - S) * t12 - 1))
    return out


def check_11():
    start = time.perf_counter()
    tol = 1e-10
    notes, ok = [], True
    for n, t, s in ((12, 5, 7), (20, 8, 12)):
        nu = 1e-6
        floor = thm61_decay_floor(n, t, s)
        sim = [thm61_epsilon(st.current, st.k, n, t, s) for st in iterate_states(gen_thm61(n, t, s, nu), 201)]
        float_bad = sum(1 for a, b in zip(sim, sim[1:]) if b < floor * a - tol)
        exact = _decimal_block_eps(n, t, s, nu, 201)
        ratios = [float(b / a) for a, b in zip(exact, exact[1:])]
        agree = max(abs(float(e) - x) for e, x in zip(exact, sim))
        ok = ok and float_bad == 0 and min(ratios) > floor and min(exact) > 0 and agree <= tol
        notes.append(f"n={n}: min ratio {min(ratios):.4f} > floor {floor:.4f}, float misses {float_bad}")
    return _record(11, "decay floor", ok, "; ".join(notes), time.perf_counter() - start, 10)


def check_12():
    start = time.perf_counter()
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(30):
        m, n = rng.integers(2, 30, size=2)
        eta = float(rng.uniform(0.5, 5.0))
        cost = rng.uniform(0, 25 / eta, (m, n))
        u = rng.uniform(0.1, 1.0, m)
        v = rng.uniform(0.1, 1.0, n)
        v *= u.sum() / v.sum()
        t = Marginals(u, v)
        direct = list(iterate_states(ScalingInstance(build_kernel(cost, eta), t), 50))[-1].current
        logd = np.exp(list(iterate_log_states(log_kernel(cost, eta), t, 50))[-1].log_current)
        worst = max(worst, float(np.max(np.abs(direct - logd))))
    return _record(12, "engine equivalence", worst <= 1e-9,
                   f"30 instances, max entrywise gap after 50 steps {worst:.2e}", time.perf_counter() - start, 10)


CHECKS = [check_1, check_2, check_3, check_4, check_5, check_6,
          check_7, check_8, check_9, check_10, check_11, check_12]


@pytest.mark.parametrize("check", CHECKS, ids=[f"criterion_{i}" for i in range(1, 13)])
def test_criterion(check):
    assert check(), RESULTS.get(CHECKS.index(check) + 1)


if __name__ == "__main__":
    for check in CHECKS:
        check()
    for k in sorted(RESULTS):
        print(RESULTS[k])
