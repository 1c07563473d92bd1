"""Reduction from (u, v)-scaling to (1, 1)-scaling.

Targets are first discretized to integers ``u'`` and ``v'`` at resolution
``L``.  Each entry ``A_ij`` is then split into a ``u'_i x v'_j`` block of
equal entries ``A_ij / (u'_i v'_j)``, giving a square matrix ``G`` of order
``N = sum(u')``.  SK on ``(G, (1, 1))`` mirrors SK on ``(A, (u', v'))`` block
by block, which :func:`verify_equivalence` checks numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import Marginals, ScalingInstance, SkState, marginal_error_l1, sk_step
from .errors import LTooSmall, TooLarge

MAX_EXPANDED = 20000
AUTO_L_MAX = 10**6


def _floor(x):
    # treat values within a few ulps of an integer as that integer, so that
    # L * 0.3 == 2.9999999999999996 still floors to 3
    r = round(x)
    if abs(x - r) <= 1e-9 * max(1.0, abs(x)):
        return int(r)
    return math.floor(x)


@dataclass(frozen=True)
class IntegerTargets:
    u_prime: tuple
    v_prime: tuple
    L: int
    R: int
    t_shift: int

    @property
    def N(self):
        return sum(self.u_prime)

    def marginals(self):
        return Marginals(np.array(self.u_prime, dtype=float), np.array(self.v_prime, dtype=float))


def discretize(targets, L):
    """Round ``L * u`` and ``L * v`` down and rebalance.

    Targets are normalized to unit mass first.  If ``sum floor(L u)`` exceeds
    ``sum floor(L v)`` by ``t``, the first ``t`` entries of ``floor(L v)``
    get ``+1``; for negative ``t`` the first ``|t|`` entries of ``floor(L u)``
    do.

    Raises:
        LTooSmall: some ``floor(L u_i)`` or ``floor(L v_j)`` is zero.
    """
    L = int(L)
    if L < 1:
        raise LTooSmall("L must be a positive integer")
    t = targets.normalized()
    fu = [_floor(L * x) for x in t.u]
    fv = [_floor(L * x) for x in t.v]
    if min(fu) < 1 or min(fv) < 1:
        raise LTooSmall(f"L={L} leaves a zero target after flooring")
    R = min(fu + fv)
    shift = sum(fu) - sum(fv)
    up, vp = list(fu), list(fv)
    if shift >= 0:
        if shift > len(vp):
            raise LTooSmall(f"rounding imbalance {shift} exceeds the number of columns")
        for j in range(shift):
            vp[j] += 1
    else:
        if -shift > len(up):
            raise LTooSmall(f"rounding imbalance {shift} exceeds the number of rows")
        for i in range(-shift):
            up[i] += 1
    return IntegerTargets(tuple(up), tuple(vp), L, R, shift)


def auto_L(targets, max_den=AUTO_L_MAX):
    """Least common denominator of the normalized targets, or ``None``.

    Each normalized target is matched to a fraction with denominator at most
    ``max_den``; the result is only returned when every fraction reproduces
    its float to 1e-12 and the common denominator stays below ``max_den``.
    """
    t = targets.normalized()
    den = 1
    for x in np.concatenate([t.u, t.v]):
        fr = Fraction(float(x)).limit_denominator(max_den)
        if abs(float(fr) - x) > 1e-12:
            return None
        den = den * fr.denominator // math.gcd(den, fr.denominator)
        if den > max_den:
            return None
    return den


def block_offsets(sizes):
    return np.concatenate([[0], np.cumsum(sizes)]).astype(int)


@dataclass(frozen=True)
class ReducedInstance:
    G: np.ndarray
    row_offsets: np.ndarray
    col_offsets: np.ndarray
    origin: ScalingInstance
    targets_int: IntegerTargets

    def row_block(self, i):
        return range(self.row_offsets[i], self.row_offsets[i + 1])

    def col_block(self, j):
        return range(self.col_offsets[j], self.col_offsets[j + 1])

    @property
    def row_index(self):
        """Original row of every expanded row."""
        return np.repeat(np.arange(len(self.targets_int.u_prime)), self.targets_int.u_prime)

    @property
    def col_index(self):
        return np.repeat(np.arange(len(self.targets_int.v_prime)), self.targets_int.v_prime)

    def instance(self):
        return ScalingInstance(self.G, Marginals.ones(self.G.shape[0]))


def expand(instance, targets_int, max_size=MAX_EXPANDED):
    """Build ``G`` with block ``S_i x T_j`` equal to ``A_ij / (u'_i v'_j)``.

    Raises:
        TooLarge: ``N`` exceeds ``max_size`` (pass a larger value to override).
    """
    a = instance.matrix
    up = np.array(targets_int.u_prime)
    vp = np.array(targets_int.v_prime)
    if a.shape != (up.size, vp.size):
        raise ValueError("integer targets do not match the matrix shape")
    N = int(up.sum())
    if N > max_size:
        raise TooLarge(f"reduced order {N} exceeds the limit {max_size}")
    block_vals = a / up[:, None] / vp[None, :]
    G = np.repeat(np.repeat(block_vals, up, axis=0), vp, axis=1)
    return ReducedInstance(G, block_offsets(up), block_offsets(vp), instance, targets_int)


def expanded_weights(sizes):
    """Diagonal of the block scaling matrix: entry ``i'`` of block ``i`` is ``sizes[i]``."""
    s = np.asarray(sizes)
    return np.repeat(s, s).astype(float)


def recover_dense(reduced):
    """``D = diag(u'-blocks) G diag(v'-blocks)``; ``D`` equals ``A_ij`` on each block."""
    du = expanded_weights(reduced.targets_int.u_prime)
    dv = expanded_weights(reduced.targets_int.v_prime)
    return du[:, None] * reduced.G * dv[None, :]


def block_sums(matrix, row_offsets, col_offsets):
    rows = np.add.reduceat(matrix, row_offsets[:-1], axis=0)
    return np.add.reduceat(rows, col_offsets[:-1], axis=1)


def block_spread(matrix, row_offsets, col_offsets):
    """Largest relative spread ``(max - min) / max`` over all blocks."""
    worst = 0.0
    for i in range(len(row_offsets) - 1):
        for j in range(len(col_offsets) - 1):
            blk = matrix[row_offsets[i]:row_offsets[i + 1], col_offsets[j]:col_offsets[j + 1]]
            hi = blk.max()
            if hi > 0:
                worst = max(worst, float((hi - blk.min()) / hi))
    return worst


def theoretical_slack(n, L, R, t_shift):
    """``n / L + (R / (R - 1))^(3^(t+1)) - 1`` for the non-integer case."""
    if R < 2:
        return math.inf
    expo = 3.0 ** (abs(t_shift) + 1)
    try:
        return n / L + math.exp(expo * math.log(R / (R - 1))) - 1
    except OverflowError:
        return math.inf


@dataclass
class EquivalenceReport:
    L: int
    targets_int: IntegerTargets
    exact: bool
    steps: int
    err_original: list = field(default_factory=list)
    err_reduced: list = field(default_factory=list)
    deviations: list = field(default_factory=list)
    spreads: list = field(default_factory=list)
    block_sum_dev: list = field(default_factory=list)
    slack: float = 0.0

    @property
    def max_deviation(self):
        return max(self.deviations, default=0.0)

    @property
    def max_spread(self):
        return max(self.spreads, default=0.0)

    def as_dict(self):
        return {
            "L": self.L, "exact": self.exact, "steps": self.steps,
            "max_deviation": self.max_deviation, "max_block_spread": self.max_spread,
            "max_block_sum_deviation": max(self.block_sum_dev, default=0.0),
            "slack": self.slack, "R": self.targets_int.R, "t_shift": self.targets_int.t_shift,
        }


def verify_equivalence(instance, L, steps, max_size=MAX_EXPANDED):
    """Compare SK on ``(A, (u, v))`` with SK on the reduced ``(G, (1, 1))``.

    At every step the report stores ``err_A``, ``err_G``, the deviation
    ``|err_A - err_G / L|``, the within-block spread of the reduced iterate
    and how far its block sums are from the ``(u', v')`` iterate.  ``exact``
    is true when ``L u`` and ``L v`` are integer vectors, in which case the
    deviation should vanish up to rounding; otherwise ``slack`` carries the
    theoretical bound.
    """
    tint = discretize(instance.targets, L)
    norm = instance.targets.normalized()
    exact = bool(tint.t_shift == 0 and np.allclose(np.array(tint.u_prime), L * norm.u, rtol=0, atol=1e-9)
                 and np.allclose(np.array(tint.v_prime), L * norm.v, rtol=0, atol=1e-9))
    red = expand(instance, tint, max_size=max_size)
    ones = Marginals.ones(red.G.shape[0])
    int_t = tint.marginals()
    a_targets = norm
    sa = SkState.initial(instance.matrix)
    sg = SkState.initial(red.G)
    sb = SkState.initial(instance.matrix)
    rep = EquivalenceReport(L, tint, exact, steps)
    n = max(instance.shape)
    rep.slack = 0.0 if exact else theoretical_slack(n, L, tint.R, tint.t_shift)
    for _ in range(steps):
        sa = sk_step(sa, a_targets)
        sg = sk_step(sg, ones)
        sb = sk_step(sb, int_t)
        ea = sum(marginal_error_l1(sa.current, a_targets))
        eg = sum(marginal_error_l1(sg.current, ones))
        rep.err_original.append(ea)
        rep.err_reduced.append(eg)
        rep.deviations.append(abs(ea - eg / L))
        rep.spreads.append(block_spread(sg.current, red.row_offsets, red.col_offsets))
        bs = block_sums(sg.current, red.row_offsets, red.col_offsets)
        rep.block_sum_dev.append(float(np.max(np.abs(bs - sb.current) / np.maximum(sb.current, 1e-300))))
    return rep


def block_closed_form(n, t, s, d, v):
    """Block values ``(x, y, z, q)`` of ``A^(2)`` for the two-level block input.

    The input has ``A_ij = 1 / (u_i v_j)`` except on rows ``i > t`` and
    columns ``j <= s`` where it is ``d / (u_i v_j)``.  The iterate ``A^(2)``
    of SK with (1, 1) targets is block constant again, with values ``x``
    (``i <= t, j <= s``), ``y`` (``i <= t, j > s``), ``z`` (``i > t,
    j <= s``) and ``q`` (``i > t, j > s``).
    """
    if not 0 < t < s < n:
        raise ValueError("need 0 < t < s < n")
    v = np.asarray(v, dtype=float)
    s1 = float((1.0 / v[:s]).sum())
    s2 = float((1.0 / v[s:]).sum())
    lam = (s1 + s2) / (d * s1 + s2)
    den_top = n * t + lam * (n - t) * (s + d * (n - s))
    x = (t + lam * (n - t)) / den_top
    y = (t + d * lam * (n - t)) / den_top
    den_bot = t * (n - s + d * s) + d * lam * n * (n - t)
    z = d * (t + lam * (n - t)) / den_bot
    q = (t + d * lam * (n - t)) / den_bot
    return x, y, z, q


def structured_block_matrix(n, t, s, d, u, v):
    """The block input matrix used by :func:`block_closed_form`."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    a = 1.0 / np.outer(u, v)
    a[t:, :s] *= d
    return a


def block_pattern(n, t, s, x, y, z, q):
    """Full ``n x n`` matrix holding the four block values at their positions."""
    out = np.empty((n, n))
    out[:t, :s] = x
    out[:t, s:] = y
    out[t:, :s] = z
    out[t:, s:] = q
    return out


def discrepancy_ratio(instance, L, steps=1, max_size=MAX_EXPANDED):
    """Measured ``min r_i(C) B_ij / (r_i(B) C_ij)`` after one SK step.

    ``B`` is the recovered dense matrix and ``C`` the same matrix after a
    row normalization to ones; the ratio is taken over the positive entries.
    The caller compares it with the density bound ``alpha rho gamma / n``.
    """
    tint = discretize(instance.targets, L)
    red = expand(instance, tint, max_size=max_size)
    b = recover_dense(red)
    state = SkState.initial(b)
    ones = Marginals.ones(b.shape[0])
    for _ in range(steps):
        state = sk_step(state, ones)
    c = state.current
    rb = b.sum(axis=1)
    rc = c.sum(axis=1)
    mask = b > 0
    ratio = (rc[:, None] * b)[mask] / (rb[:, None] * c)[mask]
    return float(ratio.min())


def discrepancy_bound(gamma, gamma_prime, rho, n):
    alpha = (gamma + gamma_prime + 1) / (2 * (gamma + gamma_prime))
    return alpha * rho * gamma / n


__all__ = [
    "IntegerTargets", "ReducedInstance", "EquivalenceReport", "discretize", "auto_L", "expand",
    "recover_dense", "block_spread", "block_sums", "verify_equivalence", "theoretical_slack",
    "block_closed_form", "structured_block_matrix", "block_pattern", "discrepancy_ratio",
    "discrepancy_bound", "expanded_weights", "block_offsets",
]
