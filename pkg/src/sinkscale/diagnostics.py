"""Structural diagnostics: density, well-boundedness and scalability.

Density looks at a nonnegative matrix relative to its largest entry ``t``:
a row is counted by the ``v``-weight of its entries strictly above
``rho * t``.  Well-boundedness looks at a (scaled) cost matrix and counts the
weight of entries *at most* ``rho``.  The two thresholds use different
inequalities on purpose; they meet through ``K = exp(-T)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import networkx as nx
import numpy as np

from .core import nu

# Relative amount a candidate threshold is moved below an observed entry ratio.
RHO_SHIFT = 1e-12
FLOW_TOL = 1e-9


@dataclass(frozen=True)
class DensityReport:
    rho: float
    gamma: float
    gamma_prime: float
    max_entry: float

    @property
    def is_dense(self):
        return self.gamma + self.gamma_prime > 1

    def as_dict(self):
        d = asdict(self)
        d["is_dense"] = self.is_dense
        return d


@dataclass(frozen=True)
class WellBoundednessReport:
    rho: float
    r_rho: float
    c_rho: float

    @property
    def kappa_margin(self):
        return self.r_rho + self.c_rho - 1

    def is_well_bounded(self, kappa):
        return self.kappa_margin >= kappa

    def as_dict(self):
        d = asdict(self)
        d["kappa_margin"] = self.kappa_margin
        return d


@dataclass(frozen=True)
class ScalabilityVerdict:
    """Outcome of the transportation feasibility test on the support.

    ``feasible`` certifies approximate scalability only.  When infeasible,
    ``rows`` and ``cols`` (0-based) form a cut: ``A[rows][:, cols]`` is all
    zero while ``u[rows].sum() + v[cols].sum()`` exceeds the total mass.
    """

    feasible: bool
    flow_value: float
    total: float
    rows: tuple = ()
    cols: tuple = ()
    note: str = "feasible (approximate sense)"

    def as_dict(self):
        return {
            "verdict": "Feasible" if self.feasible else "Infeasible",
            "flow_value": self.flow_value,
            "total": self.total,
            "witness": None if self.feasible else {"rows": list(self.rows), "cols": list(self.cols)},
            "note": self.note,
        }


def _targets_of(targets):
    return targets.u, targets.v


def density(matrix, targets, rho):
    """Weighted density of ``matrix`` at threshold ``rho``.

    Args:
        matrix: nonnegative, nonzero array.
        targets: :class:`Marginals` giving the weights.
        rho: threshold in (0, 1]; entries must exceed ``rho * max`` strictly.

    Returns:
        DensityReport
    """
    a = np.asarray(matrix, dtype=float)
    if not 0 < rho <= 1:
        raise ValueError("rho must lie in (0, 1]")
    t = float(a.max())
    if t <= 0:
        raise ValueError("density is undefined for the zero matrix")
    u, v = _targets_of(targets)
    big = a > rho * t
    # correctly rounded sums, so a fraction like 12/20 comes out as 0.6
    gamma = min(math.fsum(v[row]) for row in big) / math.fsum(v)
    gamma_prime = min(math.fsum(u[col]) for col in big.T) / math.fsum(u)
    return DensityReport(float(rho), gamma, gamma_prime, t)


def candidate_rhos(matrix):
    a = np.asarray(matrix, dtype=float)
    t = a.max()
    ratios = np.unique(a[a > 0] / t)
    return [float(x * (1 - RHO_SHIFT)) for x in ratios]


def best_rho(matrix, targets):
    """Scan thresholds just below each distinct entry ratio.

    The report with the largest ``gamma + gamma_prime`` wins; among equal
    sums the larger ``rho`` is kept.
    """
    best = None
    for rho in candidate_rhos(matrix):
        rep = density(matrix, targets, rho)
        score = rep.gamma + rep.gamma_prime
        if best is None or score > best[0] or (score == best[0] and rho > best[1].rho):
            best = (score, rep)
    return best[1]


def well_bounded(scaled_cost, targets, rho):
    """Bulk capacities ``r_rho`` and ``c_rho`` of a scaled cost matrix.

    Targets are normalized to unit mass first.  Entries may be ``+inf``.
    """
    c = np.asarray(scaled_cost, dtype=float)
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    u = targets.u / targets.u.sum()
    v = targets.v / targets.v.sum()
    low = c <= rho
    return WellBoundednessReport(float(rho), float((low @ v).min()), float((u @ low).min()))


def scalability_check(instance):
    """Max-flow test of the transportation problem on the support of ``A``."""
    if instance.log_matrix is not None:
        support = instance.log_matrix > -np.inf
    else:
        support = instance.matrix > 0
    u, v = instance.targets.u, instance.targets.v
    m, n = support.shape
    g = nx.DiGraph()
    for i in range(m):
        g.add_edge("s", ("r", i), capacity=float(u[i]))
    for j in range(n):
        g.add_edge(("c", j), "t", capacity=float(v[j]))
    for i, j in zip(*np.nonzero(support)):
        g.add_edge(("r", int(i)), ("c", int(j)))  # no capacity attribute: unbounded
    value, (src_side, _) = nx.minimum_cut(g, "s", "t", flow_func=nx.algorithms.flow.edmonds_karp)
    total = float(u.sum())
    if value >= total - FLOW_TOL * max(1.0, total):
        return ScalabilityVerdict(True, float(value), total)
    rows = tuple(i for i in range(m) if ("r", i) in src_side)
    cols = tuple(j for j in range(n) if ("c", j) not in src_side)
    return ScalabilityVerdict(False, float(value), total, rows, cols, note="infeasible support")


@dataclass
class DiagnosticsReport:
    nu: float
    log10_nu: float
    density: DensityReport
    scalability: ScalabilityVerdict
    well_boundedness: Optional[WellBoundednessReport] = None
    extra: dict = field(default_factory=dict)

    def as_dict(self):
        out = {
            "nu": self.nu,
            "log10_nu": self.log10_nu,
            "density": self.density.as_dict(),
            "scalability": self.scalability.as_dict(),
        }
        if self.well_boundedness is not None:
            out["well_boundedness"] = self.well_boundedness.as_dict()
        out.update(self.extra)
        return out


def diagnose(instance, rho=None, wb_rho=None):
    """Collect every diagnostic for ``instance``.

    ``rho=None`` picks the density threshold with :func:`best_rho`.  When
    ``wb_rho`` is given, well-boundedness is evaluated on the implied cost
    ``-log(A / max A)`` (zeros become ``+inf``).
    """
    a = instance.matrix
    if instance.log_matrix is not None:
        la = instance.log_matrix
        log_nu = _log_nu(la)
        # shift so the largest entry becomes 1 before looking at density
        a = np.exp(la - la.max())
    else:
        log_nu = math.log(nu(a))
    dens = best_rho(a, instance.targets) if rho is None else density(a, instance.targets, rho)
    wb = None
    if wb_rho is not None:
        with np.errstate(divide="ignore"):
            if instance.log_matrix is not None:
                cost = instance.log_matrix.max() - instance.log_matrix
            else:
                cost = -np.log(a / a.max())
        wb = well_bounded(cost, instance.targets, wb_rho)
    return DiagnosticsReport(math.exp(log_nu), log_nu / math.log(10), dens, scalability_check(instance), wb)


def _log_nu(log_matrix):
    la = np.asarray(log_matrix, dtype=float)
    mx = la.max(axis=1, keepdims=True)
    lr = mx[:, 0] + np.log(np.exp(la - mx).sum(axis=1))
    ln = la - lr[:, None]
    pos = ln[la > -np.inf]
    return float(pos.min() - pos.max())


__all__ = [
    "DensityReport", "WellBoundednessReport", "ScalabilityVerdict", "DiagnosticsReport",
    "density", "best_rho", "candidate_rhos", "well_bounded", "scalability_check", "diagnose",
]
