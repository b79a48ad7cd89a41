import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from metaad.cli import certified_eta
from metaad.discounting import DiscountSpec, varphi
from metaad.duals import (
    TraceMismatch,
    check_dual_feasibility,
    check_phi_condition,
    check_primal_dual_ratio,
    check_running_ratio,
    construct_duals,
)
from metaad.instances import validate
from metaad.offline import solve_exact
from metaad.online import run_greedy, run_metaad
from metaad.ratios import eta_flm_general, eta_general

from conftest import E_C, SPECS, tight_instance

EXP = DiscountSpec.exponential(E_C, 1.0)


def test_two_node_duals(two_node):
    d = construct_duals(two_node, EXP, run_metaad(two_node, EXP))
    np.testing.assert_allclose(d.alpha_final, [varphi(EXP, 0.4), varphi(EXP, 0.5)], rtol=1e-14)
    np.testing.assert_allclose(d.alpha_final, [0.28623, 0.37754], atol=1e-5)
    np.testing.assert_allclose(d.beta, [0.4, 0.5], rtol=1e-14)
    assert d.D == pytest.approx(0.4 + 0.5 + varphi(EXP, 0.4) + varphi(EXP, 0.5), rel=1e-14)
    assert d.D == pytest.approx(1.56377, abs=1e-5)
    rep = check_dual_feasibility(two_node, d)
    assert rep.passed
    # round 2, node 0: 0.5 >= 0.5 (1 - 0.28623)
    assert 0.5 - 0.5 * (1 - d.alpha_final[0]) == pytest.approx(0.5 - 0.35689, abs=1e-5)


def test_insufficient_budget_adjustment(one_node):
    one = DiscountSpec.constant_one()
    d = construct_duals(one_node, one, run_greedy(one_node))
    assert d.insufficient_nodes == (0,)
    assert d.alpha_final.tolist() == [1.0]
    assert d.D == pytest.approx(1.6)
    assert check_dual_feasibility(one_node, d).passed
    d.alpha_final[:] = 0.0
    rep = check_dual_feasibility(one_node, d)
    assert [(u, t) for u, t, *_ in rep.violations] == [(0, 1)]
    assert rep.violations[0][2:] == (0.0, 0.5)


def test_flm_final_adjustment(one_node):
    one = DiscountSpec.constant_one()
    tr = run_greedy(one_node, flm=True)
    d = construct_duals(one_node, one, tr)
    # round 2: b=0.4 < w=0.5, candidate 1 - (0.4/0.5) * 1
    assert d.alpha_final[0] == pytest.approx(0.2)
    assert d.insufficient_rounds == (1,)
    assert check_dual_feasibility(one_node, d).passed


def test_all_skip_instance():
    inst = validate([1.0, 2.0], [{}, {}])
    d = construct_duals(inst, EXP, run_metaad(inst, EXP))
    assert d.D == 0.0 and not d.alpha_final.any() and not d.beta.any()


def test_trace_mismatch(two_node, one_node):
    tr = run_metaad(two_node, EXP)
    with pytest.raises(TraceMismatch):
        construct_duals(one_node, EXP, tr)
    bad = run_metaad(two_node, EXP)
    bad.budgets_after[1, 1] = 0.9
    with pytest.raises(TraceMismatch):
        construct_duals(two_node, EXP, bad)


def test_ratio_check_examples():
    assert check_primal_dual_ratio(0.9, 1.56377, 0.5).passed
    assert check_primal_dual_ratio(0.0, 0.0, 0.7).passed
    r = check_primal_dual_ratio(0.4, 1.0, 0.5)
    assert not r.passed and r.gap == pytest.approx(0.1)


def test_phi_condition_examples():
    assert check_phi_condition(DiscountSpec.constant_one(), 0.6, 1.0, 1).passed
    eq = check_phi_condition(EXP, 0.0, math.e / (math.e - 1), 1)
    assert eq.passed and abs(eq.worst_violation) < 1e-12
    bad = check_phi_condition(EXP, 0.0, 1.0, 1)
    assert not bad.passed and bad.worst_y > 0


@pytest.mark.parametrize("kappa", [0.0, 0.2, 0.5, 0.8])
def test_phi_condition_holds_at_certified_gamma(kappa):
    for spec in SPECS:
        rep = eta_general(spec, kappa)
        assert check_phi_condition(spec, kappa, rep.gamma, rep.n, step=1e-4, R=rep.R).passed


@given(st.integers(0, 100_000), st.sampled_from(SPECS), st.booleans())
def test_certificate_properties(seed, spec, flm):
    inst = tight_instance(seed, max_U=6, max_V=14)
    kappa = inst.kappa
    tr = run_metaad(inst, spec, flm=flm)
    d = construct_duals(inst, spec, tr)
    assert check_dual_feasibility(inst, d).passed
    assert np.all(np.diff(d.alpha_t, axis=0) >= -1e-15)
    assert d.alpha_final.min() >= 0 and d.alpha_final.max() <= 1 + 1e-12 and d.beta.min() >= 0
    eta = certified_eta(spec, kappa, flm)
    assert check_primal_dual_ratio(tr.total_reward, d.D, eta).passed
    rep = eta_flm_general(spec, kappa) if flm else eta_general(spec, kappa)
    if kappa < 1 or flm:
        assert check_running_ratio(tr, d, rep.gamma).passed
    opt = solve_exact(inst, flm=flm)
    assert d.D >= opt.value - 1e-9
