"""Dense Sinkhorn-Knopp engine for general (u, v)-scaling.

The iteration follows the usual parity convention: step 0 normalizes rows to
``u``, odd steps normalize columns to ``v`` and even steps after that
normalize rows again.  Each call to :func:`sk_step` is one half-step and every
trace record corresponds to exactly one of them.

Row and column sums are always taken with ``ndarray.sum`` along a fixed axis,
so two runs on identical inputs produce bit-identical traces.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, fields
from typing import NamedTuple, Optional

import numpy as np

from .errors import InvalidInstance, NonFinite, NotStandardized, ZeroMarginal

BALANCE_RTOL = 1e-12

TRACE_HEADER = (
    "iter", "row_err", "col_err", "total_err", "min_rsum", "max_rsum",
    "min_csum", "max_csum", "min_entry", "max_entry", "permanent",
)


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Marginals:
    """Target row sums ``u`` and column sums ``v``.

    Both vectors must be strictly positive and carry the same total mass up
    to a relative ``1e-12``.
    """

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = _frozen(np.ravel(self.u))
        v = _frozen(np.ravel(self.v))
        if u.size == 0 or v.size == 0:
            raise InvalidInstance("targets must be non-empty")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise InvalidInstance("targets must be finite")
        if np.any(u <= 0) or np.any(v <= 0):
            raise InvalidInstance("targets must be strictly positive")
        su, sv = float(u.sum()), float(v.sum())
        if abs(su - sv) > BALANCE_RTOL * su:
            raise InvalidInstance(f"unbalanced targets: |u|_1={su!r}, |v|_1={sv!r}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @classmethod
    def uniform(cls, m, n, total=1.0):
        return cls(np.full(m, total / m), np.full(n, total / n))

    @classmethod
    def ones(cls, n):
        return cls(np.ones(n), np.ones(n))

    @property
    def total(self):
        return float(self.u.sum())

    def normalized(self):
        """Return targets rescaled so both vectors sum to one."""
        return Marginals(self.u / self.u.sum(), self.v / self.v.sum())


@dataclass(frozen=True)
class ScalingInstance:
    """A nonnegative matrix together with its target marginals.

    When ``log_matrix`` is given it is the authoritative description of the
    entries and ``matrix`` is only its (possibly underflowed) exponential.
    Such instances must be solved in the log domain.
    """

    matrix: np.ndarray
    targets: Marginals
    log_matrix: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.log_matrix is not None:
            logm = _frozen(self.log_matrix)
            if logm.ndim != 2:
                raise InvalidInstance("log_matrix must be 2-D")
            if np.any(np.isnan(logm)) or np.any(logm == np.inf):
                raise InvalidInstance("log_matrix entries must be finite or -inf")
            object.__setattr__(self, "log_matrix", logm)
            a = _frozen(np.exp(logm))
            support = logm > -np.inf
        else:
            a = _frozen(self.matrix)
            if a.ndim != 2:
                raise InvalidInstance("matrix must be 2-D")
            if not np.all(np.isfinite(a)):
                raise InvalidInstance("matrix entries must be finite")
            if np.any(a < 0):
                raise InvalidInstance("matrix entries must be nonnegative")
            support = a > 0
        object.__setattr__(self, "matrix", a)
        m, n = a.shape
        if self.targets.u.size != m or self.targets.v.size != n:
            raise InvalidInstance(
                f"matrix is {m}x{n} but targets have lengths "
                f"{self.targets.u.size} and {self.targets.v.size}"
            )
        zero_rows = np.flatnonzero(~support.any(axis=1))
        zero_cols = np.flatnonzero(~support.any(axis=0))
        if zero_rows.size or zero_cols.size:
            raise InvalidInstance(
                "SK is undefined on matrices with an all-zero row or column "
                f"(zero rows {zero_rows.tolist()}, zero columns {zero_cols.tolist()})"
            )

    @classmethod
    def from_arrays(cls, matrix, u, v, **kwargs):
        return cls(np.asarray(matrix, dtype=float), Marginals(u, v), **kwargs)

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def requires_log_domain(self):
        return self.log_matrix is not None and bool(
            np.any((self.matrix == 0) & (self.log_matrix > -np.inf))
        )


@dataclass(frozen=True)
class SkState:
    """Iterate ``A^(k)`` together with its cumulative diagonal scalers.

    ``k`` is the index of the last applied step; the untouched input has
    ``k == -1``.  ``current == diag(row_scalers) @ A0 @ diag(col_scalers)``.
    """

    current: np.ndarray
    k: int
    row_scalers: np.ndarray
    col_scalers: np.ndarray

    @classmethod
    def initial(cls, instance_or_matrix):
        a = getattr(instance_or_matrix, "matrix", instance_or_matrix)
        a = np.asarray(a, dtype=float)
        m, n = a.shape
        return cls(a.copy(), -1, np.ones(m), np.ones(n))


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    row_err: float
    col_err: float
    total_err: float
    min_rsum: float
    max_rsum: float
    min_csum: float
    max_csum: float
    min_entry: float
    max_entry: float
    permanent: Optional[float] = None

    def as_row(self):
        return [getattr(self, f.name) for f in fields(self)]


@dataclass
class SkTrace:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def total_err(self):
        return self.column("total_err")

    def to_csv(self, path_or_file):
        """Write the trace with the fixed header ``TRACE_HEADER``."""
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh)
            w.writerow(TRACE_HEADER)
            for rec in self.records:
                w.writerow(["" if x is None else repr(x) if isinstance(x, float) else x
                            for x in rec.as_row()])
        finally:
            if own:
                fh.close()


class SkResult(NamedTuple):
    state: SkState
    trace: SkTrace
    converged: bool

    @property
    def iterations(self):
        """Index of the first step meeting the tolerance (or the last step run)."""
        return self.state.k


def marginal_error_l1(matrix, targets):
    """Return ``(||r(A) - u||_1, ||c(A) - v||_1)``."""
    a = np.asarray(matrix, dtype=float)
    row_err = float(np.abs(a.sum(axis=1) - targets.u).sum())
    col_err = float(np.abs(a.sum(axis=0) - targets.v).sum())
    return row_err, col_err


def sk_step(state, targets):
    """Apply the next SK half-step to ``state``.

    Raises:
        ZeroMarginal: a row (even step) or column (odd step) sum is zero.
        NonFinite: the update produced a non-finite value or an entry of the
            support underflowed to zero.
    """
    k = state.k + 1
    a = state.current
    x, y = state.row_scalers, state.col_scalers
    if k % 2 == 0:
        sums = a.sum(axis=1)
        if np.any(sums == 0):
            raise ZeroMarginal(f"step {k}: zero row sum at rows {np.flatnonzero(sums == 0).tolist()}")
        f = targets.u / sums
        new = a * f[:, None]
        x = x * f
    else:
        sums = a.sum(axis=0)
        if np.any(sums == 0):
            raise ZeroMarginal(f"step {k}: zero column sum at columns {np.flatnonzero(sums == 0).tolist()}")
        f = targets.v / sums
        new = a * f[None, :]
        y = y * f
    if not (np.all(np.isfinite(new)) and np.all(np.isfinite(f))):
        raise NonFinite(f"step {k}: non-finite entries; use the log-domain engine")
    if np.count_nonzero(new) != np.count_nonzero(a):
        raise NonFinite(f"step {k}: support entries underflowed to zero; use the log-domain engine")
    return SkState(new, k, x, y)


def make_record(k, a, targets, permanent=None):
    r = a.sum(axis=1)
    c = a.sum(axis=0)
    row_err = float(np.abs(r - targets.u).sum())
    col_err = float(np.abs(c - targets.v).sum())
    pos = a[a > 0]
    return TraceRecord(
        iter=k,
        row_err=row_err,
        col_err=col_err,
        total_err=row_err + col_err,
        min_rsum=float(r.min()),
        max_rsum=float(r.max()),
        min_csum=float(c.min()),
        max_csum=float(c.max()),
        min_entry=float(pos.min()) if pos.size else 0.0,
        max_entry=float(a.max()),
        permanent=permanent,
    )


def iterate_states(instance, steps):
    """Yield the SK states for steps ``0 .. steps-1``."""
    state = SkState.initial(instance)
    for _ in range(steps):
        state = sk_step(state, instance.targets)
        yield state


def sk_run(instance, eps, max_iter=10**6, *, permanent=False, budget=None):
    """Iterate SK until the total marginal error is at most ``eps``.

    The error is checked after every half-step, including step 0.  Reaching
    ``max_iter`` (or the optional wall-clock ``budget`` in seconds) is not an
    error; the result simply has ``converged=False``.

    Args:
        instance: the :class:`ScalingInstance` to scale.
        eps: target for ``||r - u||_1 + ||c - v||_1``.
        max_iter: maximum number of half-steps.
        permanent: record the permanent at every step (square, n <= 12).
        budget: optional wall-clock limit in seconds.

    Returns:
        SkResult ``(state, trace, converged)``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if permanent:
        from .permanent import PERMANENT_TRACE_MAX, permanent as per
        m, n = instance.shape
        if m != n or n > PERMANENT_TRACE_MAX:
            raise ValueError(f"permanent tracing needs a square matrix of order <= {PERMANENT_TRACE_MAX}")
    deadline = None if budget is None else time.perf_counter() + budget
    targets = instance.targets
    trace = SkTrace()
    state = SkState.initial(instance)
    converged = False
    for _ in range(max_iter):
        state = sk_step(state, targets)
        rec = make_record(state.k, state.current, targets,
                          per(state.current) if permanent else None)
        trace.records.append(rec)
        if rec.total_err <= eps:
            converged = True
            break
        if deadline is not None and time.perf_counter() > deadline:
            break
    return SkResult(state, trace, converged)


def nu(matrix):
    """Ratio of the smallest positive to the largest row-normalized entry.

    Rows are divided by their sums first, so the value is invariant under
    positive row rescaling.  Result lies in (0, 1].
    """
    a = np.asarray(matrix, dtype=float)
    r = a.sum(axis=1)
    keep = r > 0
    if not keep.any():
        raise InvalidInstance("nu is undefined for the zero matrix")
    b = a[keep] / r[keep][:, None]
    return float(b[b > 0].min() / b.max())


def accuracy_alpha(matrix, tol=1e-10):
    """Mean absolute deviation from one of the non-normalized marginal.

    Raises:
        NotStandardized: neither all row sums nor all column sums are one.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotStandardized("accuracy is defined for square matrices only")
    r = a.sum(axis=1)
    c = a.sum(axis=0)
    if np.all(np.abs(r - 1) <= tol):
        return float(np.abs(c - 1).mean())
    if np.all(np.abs(c - 1) <= tol):
        return float(np.abs(r - 1).mean())
    raise NotStandardized("matrix has neither unit row sums nor unit column sums")


__all__ = [
    "Marginals", "ScalingInstance", "SkState", "SkTrace", "TraceRecord", "SkResult",
    "TRACE_HEADER", "sk_step", "sk_run", "iterate_states", "marginal_error_l1",
    "nu", "accuracy_alpha", "make_record",
]
