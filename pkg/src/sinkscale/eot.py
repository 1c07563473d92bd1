"""Entropic optimal transport front end and the log-domain SK engine.

The Gibbs kernel ``K = exp(-eta * C)`` is scaled with the same SK iteration as
:mod:`sinkscale.core`.  When ``eta * C`` is large, entries of ``K`` underflow,
so a second engine keeps the iterate as ``log A^(k)`` and normalizes with a
two-pass log-sum-exp (row maximum first, then the shifted sum).  Both engines
apply the same parity convention and produce the same trace records.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import Marginals, ScalingInstance, SkResult, SkTrace, TraceRecord, sk_run
from .errors import AllZeroKernel, EmptySupport, InvalidInstance, NonFinite

DIRECT_LIMIT = 30.0


def _check_cost(cost, eta):
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2:
        raise InvalidInstance("cost must be a 2-D matrix")
    if not eta > 0 or not math.isfinite(eta):
        raise InvalidInstance("eta must be a positive finite number")
    if np.any(np.isnan(c)) or np.any(c < 0):
        raise InvalidInstance("cost entries must be nonnegative (+inf allowed)")
    return c


def log_kernel(cost, eta):
    """``-eta * C`` with ``+inf`` costs mapped to ``-inf``."""
    c = _check_cost(cost, eta)
    with np.errstate(invalid="ignore"):
        return -eta * c


def build_kernel(cost, eta):
    """Entrywise ``exp(-eta * C)``.

    Raises:
        AllZeroKernel: every entry underflowed (or was forbidden).
    """
    k = np.exp(log_kernel(cost, eta))
    if not np.any(k > 0):
        raise AllZeroKernel("kernel underflowed to all zeros; use the log domain")
    return k


def prescale(kernel, targets):
    """Return ``diag(u) K diag(v)``."""
    k = np.asarray(kernel, dtype=float)
    return targets.u[:, None] * k * targets.v[None, :]


def prescale_log(log_k, targets):
    return log_k + np.log(targets.u)[:, None] + np.log(targets.v)[None, :]


def _lse(x, axis):
    mx = x.max(axis=axis)
    if np.any(mx == -np.inf):
        bad = np.flatnonzero(mx == -np.inf).tolist()
        what = "row" if axis == 1 else "column"
        raise EmptySupport(f"{what}s {bad} have no finite entries")
    shifted = x - (mx[:, None] if axis == 1 else mx[None, :])
    return mx + np.log(np.exp(shifted).sum(axis=axis))


def logsumexp_normalize(log_matrix, targets, axis):
    """Normalize rows (``axis=1``) or columns (``axis=0``) of a log matrix.

    ``targets`` is the vector the rows (or columns) should sum to after
    exponentiation.  Returns ``(new_log_matrix, log_factor)`` where
    ``log_factor`` is what was added to each row (or column).

    Raises:
        EmptySupport: a row or column is entirely ``-inf``.
    """
    x = np.asarray(log_matrix, dtype=float)
    f = np.log(np.asarray(targets, dtype=float)) - _lse(x, axis)
    return (x + f[:, None] if axis == 1 else x + f[None, :]), f


@dataclass(frozen=True)
class LogSkState:
    """Log-domain iterate; ``log_current = f[:, None] + log A0 + g[None, :]``."""

    log_current: np.ndarray
    k: int
    f: np.ndarray
    g: np.ndarray

    @classmethod
    def initial(cls, log_matrix):
        x = np.asarray(log_matrix, dtype=float)
        m, n = x.shape
        return cls(x.copy(), -1, np.zeros(m), np.zeros(n))

    @property
    def current(self):
        return np.exp(self.log_current)


def log_sk_step(state, targets):
    k = state.k + 1
    if k % 2 == 0:
        new, df = logsumexp_normalize(state.log_current, targets.u, axis=1)
        return LogSkState(new, k, state.f + df, state.g)
    new, dg = logsumexp_normalize(state.log_current, targets.v, axis=0)
    return LogSkState(new, k, state.f, state.g + dg)


def make_log_record(k, log_a, targets):
    r = np.exp(_lse(log_a, 1))
    c = np.exp(_lse(log_a, 0))
    row_err = float(np.abs(r - targets.u).sum())
    col_err = float(np.abs(c - targets.v).sum())
    finite = log_a[log_a > -np.inf]
    return TraceRecord(
        iter=k, row_err=row_err, col_err=col_err, total_err=row_err + col_err,
        min_rsum=float(r.min()), max_rsum=float(r.max()),
        min_csum=float(c.min()), max_csum=float(c.max()),
        min_entry=float(np.exp(finite.min())), max_entry=float(np.exp(finite.max())),
    )


def iterate_log_states(log_matrix, targets, steps):
    state = LogSkState.initial(log_matrix)
    for _ in range(steps):
        state = log_sk_step(state, targets)
        yield state


def sk_run_log(log_matrix, targets, eps, max_iter=10**6, *, budget=None):
    """Log-domain counterpart of :func:`sinkscale.core.sk_run`."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = np.asarray(log_matrix, dtype=float)
    if np.any(np.isnan(x)) or np.any(x == np.inf):
        raise InvalidInstance("log matrix entries must be finite or -inf")
    deadline = None if budget is None else time.perf_counter() + budget
    trace = SkTrace()
    state = LogSkState.initial(x)
    converged = False
    for _ in range(max_iter):
        state = log_sk_step(state, targets)
        rec = make_log_record(state.k, state.log_current, targets)
        trace.records.append(rec)
        if rec.total_err <= eps:
            converged = True
            break
        if deadline is not None and time.perf_counter() > deadline:
            break
    return SkResult(state, trace, converged)


def solve_scaling(instance, eps, max_iter=10**6, domain="auto", *, budget=None):
    """Run SK on a :class:`ScalingInstance` in the requested domain.

    ``auto`` uses the log engine for instances stored in log form and
    otherwise starts in the direct domain, switching to the log engine if the
    direct run hits :class:`NonFinite`.

    Returns:
        (SkResult, domain_used)
    """
    if domain not in ("auto", "direct", "log"):
        raise ValueError(f"unknown domain {domain!r}")
    logm = instance.log_matrix
    if domain == "log" or (domain == "auto" and logm is not None):
        if logm is None:
            with np.errstate(divide="ignore"):
                logm = np.log(instance.matrix)
        return sk_run_log(logm, instance.targets, eps, max_iter, budget=budget), "log"
    if domain == "direct" and instance.requires_log_domain:
        raise NonFinite("instance entries underflow in the direct domain")
    try:
        return sk_run(instance, eps, max_iter, budget=budget), "direct"
    except NonFinite:
        if domain == "direct":
            raise
        with np.errstate(divide="ignore"):
            logm = np.log(instance.matrix)
        return sk_run_log(logm, instance.targets, eps, max_iter, budget=budget), "log"


@dataclass(frozen=True)
class EotProblem:
    cost: np.ndarray
    eta: float
    targets: Marginals
    prescale: bool = False

    def __post_init__(self):
        c = _check_cost(self.cost, self.eta)
        if c.shape != (self.targets.u.size, self.targets.v.size):
            raise InvalidInstance("cost shape does not match the targets")
        object.__setattr__(self, "cost", c)

    @property
    def scaled_max_cost(self):
        finite = self.cost[np.isfinite(self.cost)]
        return float(self.eta * finite.max()) if finite.size else 0.0

    def auto_domain(self):
        return "direct" if self.scaled_max_cost <= DIRECT_LIMIT else "log"

    def input_log_matrix(self):
        lk = log_kernel(self.cost, self.eta)
        return prescale_log(lk, self.targets) if self.prescale else lk

    def input_matrix(self):
        k = build_kernel(self.cost, self.eta)
        return prescale(k, self.targets) if self.prescale else k


class DualPotentials(NamedTuple):
    f: np.ndarray
    g: np.ndarray


@dataclass
class EotResult:
    plan: np.ndarray
    potentials: DualPotentials
    trace: SkTrace
    converged: bool
    domain: str

    @property
    def iterations(self):
        return self.trace[-1].iter if len(self.trace) else -1


def plan_from_potentials(cost, eta, potentials):
    """``P_ij = exp(f_i - eta * C_ij + g_j)``."""
    return np.exp(potentials.f[:, None] + log_kernel(cost, eta) + potentials.g[None, :])


def solve_eot(problem, eps, max_iter=10**6, domain="auto", *, budget=None):
    """Scale the Gibbs kernel of ``problem`` to its marginals.

    Args:
        problem: an :class:`EotProblem`.
        eps: stopping tolerance on the l1 marginal error.
        max_iter: step limit (not reaching it is reported, not raised).
        domain: ``"auto"``, ``"direct"`` or ``"log"``.

    Returns:
        EotResult with the plan, dual potentials and the trace.
    """
    if domain == "auto":
        domain = problem.auto_domain()
    t = problem.targets
    if domain == "direct":
        inst = ScalingInstance(problem.input_matrix(), t)
        res = sk_run(inst, eps, max_iter, budget=budget)
        with np.errstate(divide="ignore"):
            f = np.log(res.state.row_scalers)
            g = np.log(res.state.col_scalers)
        plan = res.state.current
    elif domain == "log":
        res = sk_run_log(problem.input_log_matrix(), t, eps, max_iter, budget=budget)
        f, g = res.state.f, res.state.g
        plan = res.state.current
    else:
        raise ValueError(f"unknown domain {domain!r}")
    if problem.prescale:
        f = f + np.log(t.u)
        g = g + np.log(t.v)
    return EotResult(plan, DualPotentials(f, g), res.trace, res.converged, domain)


__all__ = [
    "EotProblem", "DualPotentials", "EotResult", "LogSkState", "build_kernel", "log_kernel",
    "prescale", "prescale_log", "logsumexp_normalize", "log_sk_step", "sk_run_log",
    "iterate_log_states", "solve_eot", "solve_scaling", "plan_from_potentials",
]
