"""Generators for structured and random scaling instances.

Every generator returns a :class:`~sinkscale.core.ScalingInstance` whose
``meta`` dict records the parameters and the audited constants of the family.
The structured families come with scalar companions (closed recurrences or
error trackers) that serve as independent oracles for the SK engine.
"""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np

from .core import Marginals, ScalingInstance
from .diagnostics import density, scalability_check
from .errors import BadDim, InfeasibleGammaPair, InfeasibleWindow, InvalidInstance, NotScalable

LOG_FORM_BELOW = 1e-300


@dataclass(frozen=True)
class InstanceSpec:
    family: str
    params: dict = field(default_factory=dict)
    seed: int = 0


# --------------------------------------------------------------------------
# two-level block family with a tiny lower-left block


def thm61_window(n, t, s, nu):
    """Admissible range for ``w = t*theta12 + (n-t)*theta22 - 1``.

    Starts from the stated open window and intersects it with the range
    where ``theta12`` is positive and below its cap.  Returns
    ``(lo, hi, theta22, theta12_cap)``.
    """
    theta22 = (1 - s * nu) / (n - s)
    lo = s * t * (s - t) / (4 * n**3)
    hi = s * (n - t) / (n * (n - s))
    cap = 6 * n / (6 * n**2 + 5 * s * (n - t))
    base = (n - t) * theta22 - 1  # value of w at theta12 = 0
    return max(lo, base), min(hi, base + t * cap), theta22, cap


def thm61_audit(n, t, s, theta):
    """Check the defining inequalities; returns the first violated label or None."""
    t11, t12, t21, t22 = theta
    if min(theta) <= 0:
        return "positivity"
    if not t12 < 6 * n / (6 * n**2 + 5 * s * (n - t)):
        return "theta12 cap"
    for row in ((t11, t12), (t21, t22)):
        if abs(s * row[0] + (n - s) * row[1] - 1) > 1e-12:
            return "row sums"
    c4 = t * t11 + (n - t) * t21 - 1
    if not (t - n) / n < c4 < 0:
        return "left column window"
    c5 = t * t12 + (n - t) * t22 - 1
    if not s * t * (s - t) / (4 * n**3) < c5 < s * (n - t) / (n * (n - s)):
        return "right column window"
    return None


def block_matrix(n, t, s, t11, t12, t21, t22, m=None):
    m = n if m is None else m
    a = np.empty((m, n))
    a[:t, :s] = t11
    a[:t, s:] = t12
    a[t:, :s] = t21
    a[t:, s:] = t22
    return a


def gen_thm61(n, t, s, nu):
    """Block instance with ``theta21 = nu`` and unit row sums.

    ``theta12`` is chosen so that ``t*theta12 + (n-t)*theta22 - 1`` is the
    geometric mean of the admissible window's end points.  The equation is
    linear, so it is solved directly.

    Raises:
        InfeasibleWindow: the window is empty or the result breaks one of
            the audited inequalities (``.condition`` names which).
    """
    if not (0 < t < s < n):
        raise InvalidInstance("need 0 < t < s < n")
    if not 0 < nu < 1.0 / s:
        raise InfeasibleWindow("nu range", f"nu must lie in (0, 1/s), got {nu}")
    lo, hi, t22, cap = thm61_window(n, t, s, nu)
    if not 0 < lo < hi:
        raise InfeasibleWindow("right column window", f"empty window ({lo}, {hi})")
    w = math.sqrt(lo * hi)
    t12 = (w + 1 - (n - t) * t22) / t
    t11 = (1 - (n - s) * t12) / s
    theta = (t11, t12, nu, t22)
    bad = thm61_audit(n, t, s, theta)
    if bad is not None:
        raise InfeasibleWindow(bad, f"generated parameters violate the {bad} condition")
    a = block_matrix(n, t, s, *theta)
    meta = {
        "family": "thm61_block", "n": n, "t": t, "s": s, "nu": nu,
        "theta11": t11, "theta12": t12, "theta21": nu, "theta22": t22,
        "window": [lo, hi], "target_w": w, "decay_floor": thm61_decay_floor(n, t, s),
    }
    return ScalingInstance(a, Marginals.ones(n), meta=meta)


def thm61_thetas(a, t, s):
    """Block representatives ``(theta11, theta12, theta21, theta22)``."""
    return float(a[0, 0]), float(a[0, s]), float(a[t, 0]), float(a[t, s])


def thm61_epsilon(a, k, n, t, s):
    """Normalized error of the block iterate ``A^(k)``.

    Odd ``k``: ``n/(n-t) * (s*theta11 + (n-s)*theta12 - 1)``.
    Even ``k``: ``n/s * (t*theta12 + (n-t)*theta22 - 1)``.
    """
    t11, t12, _, t22 = thm61_thetas(a, t, s)
    if k % 2:
        return n / (n - t) * (s * t11 + (n - s) * t12 - 1)
    return n / s * (t * t12 + (n - t) * t22 - 1)


def thm61_decay_floor(n, t, s):
    return min(
        5 * n * (n - s) * min(s, n - s) / (6 * n**3 + 5 * n * s * (n - t)),
        5 * t * min(t, n - t) / (6 * n**2 + 5 * s * (n - t)),
    )


# --------------------------------------------------------------------------
# 0/1 pattern whose SK trajectory follows a scalar recurrence


def gen_thm71(n):
    """The ``n x (2 + 2n/5)`` zero/one instance with uniform ``u``.

    Raises:
        BadDim: ``n`` is not a positive multiple of 10.
    """
    if not isinstance(n, (int, np.integer)) or n < 10 or n % 10:
        raise BadDim(f"n must be a positive multiple of 10, got {n}")
    n = int(n)
    w = 2 * n // 5
    cols = w + 2
    a = np.ones((n, cols))
    a[: n // 2, :w] = 0.0
    a[n // 2:, cols - 1] = 0.0
    u = np.full(n, 1.0 / n)
    v = np.concatenate([np.full(w, 1.0 / n), [0.2, 0.4]])
    meta = {"family": "thm71_dense", "n": n, "gamma": 0.6, "gamma_prime": 0.5,
            "theta1": thm71_theta1(n), "omega1": (2 * n - 5) / 10}
    return ScalingInstance(a, Marginals(u, v), meta=meta)


def thm71_theta1(n):
    return (2 * n + 5) / (2 * n + 15)


def thm71_theta_next(theta):
    return theta * (3 - theta) / (2 * (1 + theta - theta * theta))


def thm71_omega_next(omega):
    return 2 * omega * (2 + omega) / (5 + 3 * omega)


def thm71_theta_sequence(n, count):
    """``theta`` at odd steps ``1, 3, 5, ...`` (``count`` values)."""
    out = [thm71_theta1(n)]
    while len(out) < count:
        out.append(thm71_theta_next(out[-1]))
    return np.array(out[:count])


def thm71_omega_sequence(n, count):
    out = [(2 * n - 5) / 10]
    while len(out) < count:
        out.append(thm71_omega_next(out[-1]))
    return np.array(out[:count])


def thm71_theta_of(a, n):
    """``theta = 5n/2 * a`` read off the entry in row 0, column ``2n/5``."""
    return 2.5 * n * float(a[0, 2 * n // 5])


def thm71_error_of_theta(theta):
    """Total marginal error at an odd step, ``|2 theta - 1| / 5``."""
    return abs(2 * theta - 1) / 5


def thm71_even_error(theta):
    """Total marginal error at the even step that follows ``theta``.

    After the row step only column sums are off: the ``2n/5`` light columns
    by ``|2 theta - 1| / (5 (3 - theta))`` together, the ``2/5`` column by
    ``|1 - 2 theta| / (5 (theta + 2))`` and the ``1/5`` column by whatever
    balances the mass.
    """
    light = (1 - 2 * theta) / (5 * (3 - theta))
    heavy = (2 * theta - 1) / (5 * (theta + 2))
    mid = 0.5 * (theta / (theta + 2) + (1 - theta) / (3 - theta)) - 0.2
    return abs(light) + abs(heavy) + abs(mid)


def thm71_iterations(n, eps, max_steps=10**6):
    """First step whose total error is at most ``eps``, from the recurrence alone."""
    theta = thm71_theta1(n)
    for k in range(1, max_steps, 2):
        if thm71_error_of_theta(theta) <= eps:
            return k
        if thm71_even_error(theta) <= eps:
            return k + 1
        theta = thm71_theta_next(theta)
    return None


# --------------------------------------------------------------------------
# 2 x 2 families


TIGHT_U = (5 / 6, 1 / 6)
TIGHT_V = (7 / 8, 1 / 8)


def gen_tight2x2(a11, a12, a21, a22):
    """2x2 instance with targets ``u = (5/6, 1/6)`` and ``v = (7/8, 1/8)``.

    Raises:
        NotScalable: the support cannot carry the targets.
    """
    a = np.array([[a11, a12], [a21, a22]], dtype=float)
    inst = ScalingInstance(a, Marginals(np.array(TIGHT_U), np.array(TIGHT_V)),
                           meta={"family": "tight2x2", "entries": a.ravel().tolist()})
    verdict = scalability_check(inst)
    if not verdict.feasible:
        raise NotScalable(
            f"support cannot carry the targets (flow {verdict.flow_value:.6g} < 1); "
            f"rows {list(verdict.rows)} vs columns {list(verdict.cols)}"
        )
    return inst


def gen_critical2x2(p, q):
    """``[[p, 1/2 - p], [q, 1/2 - q]]`` with ``u = v = (1/2, 1/2)``."""
    if not (0 <= p <= 0.5 and 0 <= q <= 0.5):
        raise InvalidInstance("p and q must lie in [0, 1/2]")
    if not 0 < p + q < 1:
        raise InvalidInstance("need 0 < p + q < 1")
    a = np.array([[p, 0.5 - p], [q, 0.5 - q]])
    meta = {"family": "critical2x2", "p": p, "q": q, "delta0": critical_delta(p, q)}
    return ScalingInstance(a, Marginals(np.array([0.5, 0.5]), np.array([0.5, 0.5])), meta=meta)


def critical_delta(p, q):
    return abs(2 * (p + q) - 1)


def critical_round_trip(p, q):
    """First-column entries after one column step and one row step.

    Only ring operations are used, so ``fractions.Fraction`` inputs give
    exact results.
    """
    sig = p + q
    c1p, c1q = p / (2 * sig), q / (2 * sig)
    c2p, c2q = (1 - 2 * p) / (4 * (1 - sig)), (1 - 2 * q) / (4 * (1 - sig))
    return c1p / (c1p + c2p) / 2, c1q / (c1q + c2q) / 2


def critical_delta_next(delta, s):
    """``Delta`` two steps later from ``Delta`` and ``s = p - q``."""
    s2 = 4 * s * s
    return s2 * delta / ((1 - delta * delta) ** 2 - s2 * delta * delta)


def critical_sequence(p, q, rounds):
    """``Delta`` at steps ``0, 2, 4, ...`` from the ``(p, q)`` recurrence."""
    out = [critical_delta(p, q)]
    for _ in range(rounds):
        p, q = critical_round_trip(p, q)
        out.append(critical_delta(p, q))
    return np.array(out, dtype=object if isinstance(p, Fraction) else float)


def critical_step_bound(eps):
    return 2 * math.ceil(1 / (2 * eps))


# --------------------------------------------------------------------------
# sub-critical (u, v) instance with a tiny block


def _match_prefix(w, target, tol=1e-12, from_end=False):
    vals = w[::-1] if from_end else w
    acc = 0.0
    for k, x in enumerate(vals, start=1):
        acc += x
        if abs(acc - target) <= tol:
            return k
    return None


def uv_hard_log_d(n, b, gamma, gamma_prime, eps):
    """Natural log of the block value ``d``."""
    big = n / eps * math.log(2) + math.log(n)  # log(n * 2^(n/eps))
    log_den = big + math.log1p(-b * math.exp(-big))
    return (
        math.log(n - b) - log_den
        + math.log(1 - gamma - gamma_prime) + math.log(n - b)
        - math.log(12 * n * (1 - gamma_prime + abs(gamma_prime - gamma)))
    )


def gen_uv_hard(u, v, gamma, gamma_prime, eps):
    """Ones everywhere except ``d`` on rows ``i > a`` and columns ``j <= b``.

    ``a`` and ``b`` are recovered from ``gamma' = u_1 + ... + u_a`` and
    ``gamma = v_{b+1} + ... + v_n`` (targets normalized to unit mass).  When
    ``d`` is below ``1e-300`` the instance is stored in log form.

    Raises:
        InfeasibleGammaPair: no prefix/suffix sum matches within 1e-12.
    """
    t = Marginals(u, v).normalized()
    if not gamma + gamma_prime < 1:
        raise InfeasibleGammaPair("need gamma + gamma' < 1")
    if not 3 * eps < 1 - gamma - gamma_prime:
        raise InvalidInstance("need 3 eps < 1 - gamma - gamma'")
    m, n = t.u.size, t.v.size
    a_rows = _match_prefix(t.u, gamma_prime)
    tail = _match_prefix(t.v, gamma, from_end=True)
    if a_rows is None or tail is None or a_rows >= m or tail >= n:
        raise InfeasibleGammaPair(f"no prefix of u sums to {gamma_prime} or no suffix of v sums to {gamma}")
    b = n - tail
    log_d = uv_hard_log_d(n, b, gamma, gamma_prime, eps)
    log_nu_formula = log_d + math.log(n) - math.log(math.exp(log_d) * b + n - b)
    meta = {
        "family": "uv_hard", "a": a_rows, "b": b, "gamma": gamma, "gamma_prime": gamma_prime,
        "eps": eps, "log2_d": log_d / math.log(2), "log10_d": log_d / math.log(10),
        "d": math.exp(log_d), "nu_formula": math.exp(log_nu_formula),
        "log10_nu_formula": log_nu_formula / math.log(10),
        # rows below a hold d and 1, so after row normalization the ratio is d itself
        "log10_nu_measured": min(log_d, 0.0) / math.log(10),
    }
    logm = np.zeros((m, n))
    logm[a_rows:, :b] = log_d
    if math.exp(log_d) < LOG_FORM_BELOW:
        meta["log_form"] = True
        return ScalingInstance(None, t, log_matrix=logm, meta=meta)
    meta["log_form"] = False
    return ScalingInstance(np.exp(logm), t, meta=meta)


def uv_hard_with_d(u, v, a_rows, b, d):
    """The same pattern with an explicit ``d`` (e.g. ``d = 1``)."""
    t = Marginals(u, v)
    a = np.ones((t.u.size, t.v.size))
    a[a_rows:, :b] = d
    return ScalingInstance(a, t, meta={"family": "uv_hard", "a": a_rows, "b": b, "d": d})


# --------------------------------------------------------------------------
# random families


def _rng(seed):
    return np.random.default_rng(np.random.SeedSequence(int(seed) & (2**64 - 1)))


def gen_random_dense(m, n, gamma, gamma_prime, rho, seed):
    """Random matrix with guaranteed dense structure.

    Entry ``(i, j)`` is "big" (uniform in ``((1 + rho)/2, 1]``) when it lies
    in a cyclic band of width ``ceil(gamma n)`` along row ``i``; columns that
    end up with fewer than ``ceil(gamma' m)`` big entries get a band of their
    own.  Everything else is uniform in
    ``[rho/100, rho/2]``.  With uniform targets every row has at least
    ``ceil(gamma n)`` entries above ``rho * max``, and likewise for columns.
    """
    if not 0 < rho < 1:
        raise InvalidInstance("rho must lie in (0, 1)")
    rng = _rng(seed)
    kr = math.ceil(gamma * n)
    kc = math.ceil(gamma_prime * m)
    i = np.arange(m)[:, None]
    j = np.arange(n)[None, :]
    row_band = (j - (i * n) // m) % n < kr
    col_band = (i - (j * m) // n) % m < kc
    big = row_band.copy()
    short = big.sum(axis=0) < kc
    big[:, short] |= col_band[:, short]
    a = rng.uniform(rho / 100, rho / 2, size=(m, n))
    a[big] = rng.uniform((1 + rho) / 2, 1.0, size=int(big.sum()))
    a[np.unravel_index(np.argmax(a), a.shape)] = 1.0
    inst = ScalingInstance(a, Marginals.uniform(m, n),
                           meta={"family": "random_dense", "m": m, "n": n, "gamma": gamma,
                                 "gamma_prime": gamma_prime, "rho": rho, "seed": int(seed)})
    rep = density(a, inst.targets, rho)
    if rep.gamma < gamma - 1e-12 or rep.gamma_prime < gamma_prime - 1e-12:
        raise RuntimeError("dense generator failed its own audit")
    inst.meta.update({"audit_gamma": rep.gamma, "audit_gamma_prime": rep.gamma_prime})
    return inst


def gen_random_sparse(m, n, p, seed, zero_row=False):
    """Bernoulli(p) support with uniform(0, 1] values.

    A diagonal band keeps every row and column nonzero.  ``zero_row=True``
    wipes row 0 afterwards, which the instance constructor rejects.
    """
    rng = _rng(seed)
    mask = rng.random((m, n)) < p
    idx = np.arange(max(m, n))
    mask[idx % m, idx % n] = True
    a = np.where(mask, 1.0 - rng.random((m, n)), 0.0)
    if zero_row:
        a[0, :] = 0.0
    return ScalingInstance(a, Marginals.uniform(m, n),
                           meta={"family": "random_sparse", "m": m, "n": n, "p": p, "seed": int(seed)})


def gen_random_block(n, blocks, seed, spread=6.0):
    """``blocks x blocks`` block-constant matrix with log-uniform values.

    Block values are ``10**U(-spread, 0)``; block sizes split ``n`` as evenly
    as possible.
    """
    rng = _rng(seed)
    vals = 10.0 ** rng.uniform(-spread, 0.0, size=(blocks, blocks))
    sizes = np.full(blocks, n // blocks)
    sizes[: n % blocks] += 1
    a = np.repeat(np.repeat(vals, sizes, axis=0), sizes, axis=1)
    return ScalingInstance(a, Marginals.ones(n),
                           meta={"family": "random_block", "n": n, "blocks": blocks,
                                 "seed": int(seed), "spread": spread})


def gen_random_uniform(m, n, seed, low=0.0, high=1.0):
    """Dense matrix with uniform entries in ``(low, high]`` and random positive targets."""
    rng = _rng(seed)
    a = high - (high - low) * rng.random((m, n))
    u = rng.uniform(0.5, 1.5, m)
    v = rng.uniform(0.5, 1.5, n)
    v *= u.sum() / v.sum()
    return ScalingInstance(a, Marginals(u, v),
                           meta={"family": "random_uniform", "m": m, "n": n, "seed": int(seed)})


# --------------------------------------------------------------------------
# dispatch


def _vec(x, size=None):
    if x is None or (isinstance(x, str) and x == "uniform"):
        return np.full(size, 1.0 / size)
    if isinstance(x, str):
        return np.array([float(p) for p in x.split(":")])
    return np.asarray(x, dtype=float)


def generate(spec):
    """Build the instance described by an :class:`InstanceSpec`."""
    p = dict(spec.params)
    fam = spec.family
    if fam == "thm61_block":
        return gen_thm61(int(p["n"]), int(p["t"]), int(p["s"]), float(p["nu"]))
    if fam == "thm71_dense":
        return gen_thm71(int(p["n"]))
    if fam == "tight2x2":
        vals = [float(p.get(k, 1.0)) for k in ("a11", "a12", "a21", "a22")]
        if "delta" in p:
            d = float(p["delta"])
            vals = [1.0, d, d, 1.0]
        return gen_tight2x2(*vals)
    if fam == "critical2x2":
        return gen_critical2x2(float(p["p"]), float(p["q"]))
    if fam == "uv_hard":
        m = int(p.get("m", p.get("n", 8)))
        n = int(p.get("n", m))
        return gen_uv_hard(_vec(p.get("u"), m), _vec(p.get("v"), n), float(p["gamma"]),
                           float(p["gamma_prime"]), float(p["eps"]))
    if fam == "random_dense":
        n = int(p.get("n", 16))
        return gen_random_dense(int(p.get("m", n)), n, float(p.get("gamma", 0.6)),
                                float(p.get("gamma_prime", p.get("gamma", 0.6))),
                                float(p.get("rho", 0.5)), spec.seed)
    if fam == "random_sparse":
        n = int(p.get("n", 16))
        return gen_random_sparse(int(p.get("m", n)), n, float(p.get("p", 0.3)), spec.seed,
                                 zero_row=str(p.get("zero_row", "false")).lower() in ("1", "true", "yes"))
    if fam == "random_block":
        return gen_random_block(int(p.get("n", 12)), int(p.get("blocks", 3)), spec.seed,
                                float(p.get("spread", 6.0)))
    if fam == "random_uniform":
        n = int(p.get("n", 8))
        return gen_random_uniform(int(p.get("m", n)), n, spec.seed)
    raise InvalidInstance(f"unknown family {fam!r}")


FAMILIES = (
    "thm61_block", "thm71_dense", "tight2x2", "critical2x2", "uv_hard",
    "random_dense", "random_sparse", "random_block", "random_uniform",
)
