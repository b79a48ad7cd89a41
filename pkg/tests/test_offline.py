import numpy as np
import pytest
from hypothesis import given, strategies as st

from metaad import kernels
from metaad.discounting import DiscountSpec
from metaad.duals import check_dual_feasibility, construct_duals
from metaad.instances import adversarial_pair, validate
from metaad.offline import (
    LengthMismatch,
    LimitExceeded,
    UncertifiedDuals,
    ZeroOpt,
    assignment_value,
    brute_force,
    dual_upper_bound,
    empirical_cr,
    solve_exact,
)
from metaad.online import SKIP, run_greedy, run_metaad

from conftest import E_C, SPECS, tight_instance


def test_small_examples(one_node):
    assert solve_exact(one_node).value == pytest.approx(0.6)
    assert solve_exact(one_node, flm=True).value == pytest.approx(1.0)


def test_adversarial_optimum():
    hi, zero = adversarial_pair(0.5, 50, 0.005)
    omega = 0.505 / 50
    r = solve_exact(hi)
    assert r.exact
    assert r.value == pytest.approx(1 + 0.005 - omega, abs=1e-12)
    assert r.value == pytest.approx(0.99490, abs=1e-5)
    assert r.assignment.count(SKIP) == 1 and r.assignment[-1] == 0
    assert solve_exact(zero).value == pytest.approx(0.505, abs=1e-12)


def test_large_adversarial_is_fast():
    hi, _ = adversarial_pair(0.3, 200, 1e-4)
    r = solve_exact(hi, time_limit=30)
    assert r.exact
    # exact value by hand: take the tail bid, then as many small bids as fit
    omega = (0.7 + 1e-4) / 200
    k = int(np.floor((1 - 0.3) / omega + 1e-12))
    assert r.value == pytest.approx(0.3 + k * omega, abs=1e-9)


def test_dual_bound_examples(two_node, one_node):
    spec = DiscountSpec.exponential(E_C, 1.0)
    d = construct_duals(two_node, spec, run_metaad(two_node, spec))
    with pytest.raises(UncertifiedDuals):
        dual_upper_bound(d)
    check_dual_feasibility(two_node, d)
    assert dual_upper_bound(d) == pytest.approx(1.56377, abs=1e-5)
    assert dual_upper_bound(d) >= solve_exact(two_node).value == pytest.approx(0.9)

    empty = validate([1.0], [])
    de = construct_duals(empty, spec, run_metaad(empty, spec))
    check_dual_feasibility(empty, de)
    assert dual_upper_bound(de) == 0.0 == solve_exact(empty).value

    one = DiscountSpec.constant_one()
    dg = construct_duals(one_node, one, run_greedy(one_node))
    check_dual_feasibility(one_node, dg)
    assert dual_upper_bound(dg) == pytest.approx(1.6)


def test_empirical_cr_examples():
    r = empirical_cr([0.5], [1.0])
    assert r["min_ratio"] == r["mean_ratio"] == 0.5
    r = empirical_cr([0.2, 0.7, 1.3], [0.2, 0.7, 1.3])
    assert r["min_ratio"] == 1.0 and set(r["percentiles"].values()) == {1.0}
    hi, zero = adversarial_pair(0.5, 50, 0.005)
    rewards = [run_greedy(i).total_reward for i in (hi, zero)]
    opts = [solve_exact(i).value for i in (hi, zero)]
    r = empirical_cr(rewards, opts)
    np.testing.assert_allclose(r["ratios"], [0.505 / 0.9949, 1.0], atol=1e-9)
    assert r["min_ratio"] == pytest.approx(0.50758, abs=1e-5)
    assert r["min_ratio"] <= 1 - 0.5 + 0.01
    with pytest.raises(LengthMismatch):
        empirical_cr([1.0], [1.0, 2.0])
    with pytest.raises(ZeroOpt):
        empirical_cr([0.0], [0.0])


def test_percentiles_nearest_rank():
    ratios = np.linspace(0.01, 1.0, 100)
    r = empirical_cr(ratios, np.ones(100))
    # descending order, so p100 is the worst case and p50 the median
    assert r["percentiles"][100] == pytest.approx(0.01)
    assert r["percentiles"][50] == pytest.approx(0.51)
    assert r["percentiles"][99] == pytest.approx(0.02)


def test_limits():
    inst = tight_instance(3, U=8, V=25)
    r = solve_exact(inst, max_nodes=50)
    assert not r.exact and r.bound_used >= r.value
    with pytest.raises(LimitExceeded) as exc:
        solve_exact(inst, max_nodes=50, raise_on_limit=True)
    assert exc.value.result.value == r.value
    assert solve_exact(inst).value <= r.bound_used + 1e-12


@given(st.integers(0, 100_000), st.booleans())
def test_bnb_equals_brute_force(seed, flm):
    inst = tight_instance(seed, max_U=4, max_V=8)
    a, b = solve_exact(inst, flm=flm), brute_force(inst, flm=flm)
    assert a.value == pytest.approx(b.value, abs=1e-12)
    assert assignment_value(inst, a.assignment, flm) == pytest.approx(a.value, abs=1e-12)
    assert assignment_value(inst, b.assignment, flm) == pytest.approx(b.value, abs=1e-12)


@given(st.integers(0, 100_000), st.booleans())
def test_repeated_rounds_lose_no_optimum(seed, flm):
    # identical consecutive rounds trigger the symmetry rule in the search
    rng = np.random.default_rng(seed)
    U = int(rng.integers(2, 4))
    budgets = rng.uniform(0.5, 2.0, U).round(2)
    arrivals = []
    for _ in range(int(rng.integers(2, 4))):
        bids = {u: min(round(rng.uniform(0.2, 1.0), 2), budgets[u]) for u in range(U) if rng.random() < 0.8}
        arrivals += [bids] * int(rng.integers(1, 4))
    inst = validate(budgets.tolist(), arrivals)
    assert solve_exact(inst, flm=flm).value == brute_force(inst, flm=flm).value


@given(st.integers(0, 100_000), st.sampled_from(SPECS))
def test_optimum_dominates(seed, spec):
    inst = tight_instance(seed, max_U=6, max_V=14)
    plain, flm = solve_exact(inst), solve_exact(inst, flm=True)
    assert flm.value >= plain.value - 1e-12
    for f, opt in ((False, plain), (True, flm)):
        assert run_metaad(inst, spec, flm=f).total_reward <= opt.value + 1e-12


@given(st.integers(0, 100_000), st.booleans())
def test_kernel_variants_agree(seed, flm):
    inst = tight_instance(seed, max_U=3, max_V=6)
    W, B = np.ascontiguousarray(inst.bids), inst.budget_array
    a = kernels._brute_nb(W, B, flm, 1e-12)[0]
    b = kernels._brute_np(W, B, flm, 1e-12)[0]
    assert a == pytest.approx(b, abs=1e-12)
    g = run_greedy(inst, flm=flm)
    st_ = kernels.BnBState(W, B, flm, 1e-12, g.total_reward, np.append(g.decisions, SKIP))
    while not st_.done:
        st_.step(10_000, kernel=kernels._bnb_py)
    assert st_.best == pytest.approx(a, abs=1e-12)
