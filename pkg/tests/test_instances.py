import math
from fractions import Fraction

import numpy as np
import pytest

from sinkscale.core import iterate_states, nu, sk_run
from sinkscale.diagnostics import density
from sinkscale.errors import BadDim, InfeasibleGammaPair, InfeasibleWindow, InvalidInstance, NotScalable
from sinkscale.instances import (
    FAMILIES, InstanceSpec, critical_delta, critical_delta_next, critical_round_trip, critical_sequence,
    critical_step_bound, gen_critical2x2, gen_random_block, gen_random_dense, gen_random_sparse,
    gen_random_uniform, gen_thm61, gen_thm71, gen_tight2x2, gen_uv_hard, generate, thm61_audit,
    thm61_decay_floor, thm61_epsilon, thm61_window, thm71_even_error, thm71_error_of_theta,
    thm71_iterations, thm71_omega_next, thm71_omega_sequence, thm71_theta1, thm71_theta_next,
    thm71_theta_of, thm71_theta_sequence, uv_hard_with_d,
)


# ---- two-level block family

@pytest.mark.parametrize("n,t,s", [(12, 5, 7), (12, 4, 8), (12, 3, 6), (20, 8, 12)])
def test_block_family_generates_audited_instance(n, t, s):
    inst = gen_thm61(n, t, s, 1e-6)
    m = inst.meta
    assert thm61_audit(n, t, s, (m["theta11"], m["theta12"], m["theta21"], m["theta22"])) is None
    np.testing.assert_allclose(inst.matrix.sum(axis=1), 1.0, rtol=1e-13)
    lo, hi = m["window"]
    assert lo < m["target_w"] < hi
    assert nu(inst.matrix) == pytest.approx(1e-6 / m["theta11"], rel=1e-9) or nu(inst.matrix) <= 1e-6 / m["theta22"]


def test_block_family_known_value():
    inst = gen_thm61(20, 8, 12, 1e-6)
    assert inst.meta["theta12"] == pytest.approx(0.016936, rel=1e-4)


def test_block_family_rejects_bad_parameters():
    with pytest.raises(InvalidInstance):
        gen_thm61(10, 6, 4, 1e-3)
    with pytest.raises(InfeasibleWindow) as exc:
        gen_thm61(10, 3, 6, 0.5)
    assert exc.value.condition == "nu range"
    lo, hi, _, _ = thm61_window(10, 3, 6, 1e-3)
    assert lo < hi


def test_block_family_audit_labels():
    assert thm61_audit(12, 5, 7, (0.1, -0.1, 0.1, 0.1)) == "positivity"
    assert thm61_audit(12, 5, 7, (0.1, 0.01, 0.1, 0.01)) == "row sums"


def test_block_family_epsilon_is_error_share():
    n, t, s = 12, 5, 7
    inst = gen_thm61(n, t, s, 1e-4)
    for st in iterate_states(inst, 6):
        e = thm61_epsilon(st.current, st.k, n, t, s)
        assert e > 0
    assert 0 < thm61_decay_floor(n, t, s) < 1


# ---- scalar recurrence family

def test_dense_family_shape_and_errors():
    inst = gen_thm71(20)
    assert inst.matrix.shape == (20, 10)
    assert inst.targets.v[-2:].tolist() == [0.2, 0.4]
    for bad in (0, 15, 7, 10.0):
        with pytest.raises(BadDim):
            gen_thm71(bad)


def test_dense_family_recurrences():
    assert thm71_theta1(10) == pytest.approx(25 / 35)
    th = thm71_theta_sequence(10, 5)
    assert th[1] == pytest.approx(thm71_theta_next(th[0]))
    assert np.all(np.diff(th) < 0) and th[-1] > 0.5
    om = thm71_omega_sequence(10, 3)
    assert om[1] == pytest.approx(thm71_omega_next(1.5))
    # omega and theta describe the same state
    for t_, o in zip(th, om):
        assert (2 * t_ - 1) / (1 - t_) == pytest.approx(o, rel=1e-12)


def test_dense_family_errors_match_engine():
    n = 20
    states = list(iterate_states(gen_thm71(n), 12))
    res = sk_run(gen_thm71(n), 1e-30, max_iter=12)
    for st, rec in zip(states, res.trace):
        if st.k % 2:
            theta = thm71_theta_of(st.current, n)
            assert rec.total_err == pytest.approx(thm71_error_of_theta(theta), rel=1e-10)
            prev_theta = theta
        elif st.k > 0:
            assert rec.total_err == pytest.approx(thm71_even_error(prev_theta), rel=1e-10)


@pytest.mark.parametrize("eps", [1e-2, 1e-4, 1e-8])
def test_dense_family_iterations_oracle(eps):
    assert sk_run(gen_thm71(30), eps).iterations == thm71_iterations(30, eps)


# ---- 2x2 families

def test_tight2x2():
    inst = gen_tight2x2(1.0, 0.01, 0.01, 1.0)
    assert inst.targets.u.tolist() == [5 / 6, 1 / 6]
    with pytest.raises(NotScalable):
        gen_tight2x2(1.0, 0.0, 0.0, 1.0)


def test_critical_recurrence_exact():
    seq = critical_sequence(Fraction(1, 2), Fraction(1, 10), 3)
    assert seq[0] == Fraction(1, 5) and seq[1] == Fraction(1, 7)
    s = Fraction(1, 2) - Fraction(1, 10)
    assert critical_delta_next(Fraction(1, 5), s) == Fraction(1, 7)
    p, q = critical_round_trip(Fraction(1, 2), Fraction(1, 10))
    assert critical_delta(p, q) == Fraction(1, 7)


def test_critical_engine_follows_recurrence():
    inst = gen_critical2x2(0.3, 0.05)
    seq = critical_sequence(0.3, 0.05, 20)
    sim = [critical_delta(st.current[0, 0], st.current[1, 0]) for st in iterate_states(inst, 41) if st.k % 2 == 0]
    np.testing.assert_allclose(sim, seq, atol=1e-13)
    with pytest.raises(InvalidInstance):
        gen_critical2x2(0.6, 0.1)
    assert critical_step_bound(0.1) == 10 and critical_step_bound(1e-3) == 1000


# ---- (u, v) hard family

def test_uv_hard_structure():
    u = np.array([0.25, 0.25, 0.25, 0.25])
    inst = gen_uv_hard(u, u, 0.25, 0.25, 0.1)
    m = inst.meta
    assert (m["a"], m["b"]) == (1, 3)
    assert m["log_form"] is False and inst.matrix[3, 0] == pytest.approx(m["d"])
    tiny = gen_uv_hard(u, u, 0.25, 0.25, 0.002)
    assert tiny.meta["log_form"] is True and tiny.requires_log_domain
    assert tiny.log_matrix[3, 0] == pytest.approx(tiny.meta["log10_d"] * math.log(10))
    with pytest.raises(InfeasibleGammaPair):
        gen_uv_hard(u, u, 0.3, 0.25, 0.05)
    with pytest.raises(InfeasibleGammaPair):
        gen_uv_hard(u, u, 0.5, 0.5, 0.01)
    plain = uv_hard_with_d(u, u, 1, 3, 1.0)
    assert np.all(plain.matrix == 1.0)


# ---- random families

def test_random_dense_density():
    inst = gen_random_dense(20, 20, 0.6, 0.6, 0.5, seed=1)
    rep = density(inst.matrix, inst.targets, 0.5)
    assert rep.gamma >= 0.6 and rep.gamma_prime >= 0.6 and rep.is_dense
    assert gen_random_dense(20, 20, 0.6, 0.6, 0.5, seed=1).matrix.tolist() == inst.matrix.tolist()


def test_random_sparse_zero_row_rejected():
    assert gen_random_sparse(6, 6, 0.2, 3).matrix.shape == (6, 6)
    with pytest.raises(InvalidInstance):
        gen_random_sparse(6, 6, 0.2, 3, zero_row=True)


def test_random_block_and_uniform():
    inst = gen_random_block(10, 3, 4)
    assert inst.matrix.shape == (10, 10) and len(np.unique(inst.matrix)) <= 9
    uni = gen_random_uniform(3, 5, 9)
    assert uni.targets.u.sum() == pytest.approx(uni.targets.v.sum())


@pytest.mark.parametrize("family,params", [
    ("thm61_block", {"n": 12, "t": 5, "s": 7, "nu": 1e-4}),
    ("thm71_dense", {"n": 10}),
    ("tight2x2", {"delta": 0.1}),
    ("critical2x2", {"p": 0.5, "q": 0.1}),
    ("uv_hard", {"n": 4, "gamma": 0.25, "gamma_prime": 0.25, "eps": 0.1}),
    ("random_dense", {"n": 10}),
    ("random_sparse", {"n": 10}),
    ("random_block", {"n": 9}),
    ("random_uniform", {"n": 4}),
])
def test_generate_dispatch(family, params):
    assert family in FAMILIES
    inst = generate(InstanceSpec(family, params, seed=5))
    assert inst.meta["family"] == family


def test_generate_unknown():
    with pytest.raises(InvalidInstance):
        generate(InstanceSpec("nope"))
