"""Exact permanents and the permanent growth law along SK trajectories."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .core import SkState, sk_step
from .errors import TooLarge

PERMANENT_MAX = 20
PERMANENT_TRACE_MAX = 12


def _ryser(a):
    # Gray-code Ryser: visit all column subsets, flipping one column per step.
    n = a.shape[0]
    if n == 0:
        return 1.0
    row_sums = np.zeros(n)
    total = 0.0
    sign = -1.0 if n % 2 else 1.0
    in_set = [False] * n
    size = 0
    for g in range(1, 1 << n):
        j = (g & -g).bit_length() - 1
        if in_set[j]:
            row_sums -= a[:, j]
            size -= 1
        else:
            row_sums += a[:, j]
            size += 1
        in_set[j] = not in_set[j]
        term = float(np.prod(row_sums))
        total += -term if (size % 2) else term
    return sign * total


def log_permanent(matrix):
    """Natural log of the permanent (``-inf`` when the permanent is zero).

    Each row is divided by its largest entry before Ryser's formula runs, and
    the scales are added back in log space, so flat or tiny matrices do not
    underflow.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("permanent needs a square matrix")
    n = a.shape[0]
    if n > PERMANENT_MAX:
        raise TooLarge(f"permanent limited to order {PERMANENT_MAX}, got {n}")
    scale = a.max(axis=1)
    if np.any(scale <= 0):
        return -math.inf
    p = _ryser(a / scale[:, None])
    if p <= 0:
        return -math.inf
    return float(np.log(scale).sum() + math.log(p))


def permanent(matrix):
    """Exact permanent by Ryser inclusion-exclusion, ``O(2^n n)``.

    Raises:
        TooLarge: order above 20.
    """
    lp = log_permanent(matrix)
    return 0.0 if lp == -math.inf else math.exp(lp)


def permanent_naive(matrix):
    """Sum over all ``n!`` permutations; reference for small ``n``."""
    a = np.asarray(matrix, dtype=float)
    n = a.shape[0]
    return float(sum(
        math.prod(a[i, s[i]] for i in range(n)) for s in itertools.permutations(range(n))
    ))


@dataclass(frozen=True)
class PermanentRecord:
    k: int
    permanent: float
    log_permanent: float
    marginal_product: float
    predicted_next: float
    log_predicted_next: float


@dataclass
class PermanentTrace:
    records: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    max_rel_error: float = 0.0

    @property
    def ok(self):
        return not self.violations


def permanent_trace(instance, steps, rtol=1e-8):
    """Track ``per(A^(k))`` and the value predicted by the update law.

    For a (1, 1) instance the next step divides every row (or column) by its
    sum, so ``per(A^(k+1)) = per(A^(k)) / prod(sums)``.  Each record stores
    the product of the sums the *next* step divides by and the predicted
    permanent; steps where the observed permanent misses the prediction by
    more than ``rtol`` (relative) are listed in ``violations``.
    """
    m, n = instance.shape
    if m != n:
        raise ValueError("permanent trace needs a square matrix")
    if n > PERMANENT_TRACE_MAX:
        raise TooLarge(f"permanent trace limited to order {PERMANENT_TRACE_MAX}, got {n}")
    t = instance.targets
    if not (np.all(t.u == 1.0) and np.all(t.v == 1.0)):
        raise ValueError("permanent trace is defined for (1, 1) targets")
    out = PermanentTrace()
    state = sk_step(SkState.initial(instance), t)
    prev_pred = None
    for _ in range(steps):
        a = state.current
        lp = log_permanent(a)
        if prev_pred is not None:
            err = abs(math.expm1(lp - prev_pred))
            out.max_rel_error = max(out.max_rel_error, err)
            if err > rtol:
                out.violations.append(state.k)
        sums = a.sum(axis=0) if state.k % 2 == 0 else a.sum(axis=1)
        log_prod = float(np.log(sums).sum())
        pred = lp - log_prod
        out.records.append(PermanentRecord(
            k=state.k,
            permanent=math.exp(lp),
            log_permanent=lp,
            marginal_product=math.exp(log_prod),
            predicted_next=math.exp(pred),
            log_predicted_next=pred,
        ))
        prev_pred = pred
        state = sk_step(state, t)
    return out
