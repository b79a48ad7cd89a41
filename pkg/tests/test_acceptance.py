"""Acceptance criteria, one test per criterion, each at its stated tolerance."""
import filecmp
import math
import time

import numpy as np
import pytest

from conftest import SPECS, tight_instance
from metaad.cli import certified_eta, main
from metaad.discounting import DiscountSpec
from metaad.duals import check_dual_feasibility, construct_duals
from metaad.instances import adversarial_pair, gen_random
from metaad.lobm import ReferencePolicy, parse_predictor, run_lobm
from metaad.offline import brute_force, solve_exact
from metaad.online import run_greedy, run_metaad
from metaad.ratios import (
    eta_exponential,
    eta_exponential_flm,
    eta_flm_general,
    eta_general,
    eta_lobm,
    eta_quadratic,
    optimize_eta,
)

pytestmark = pytest.mark.acceptance

N_RANDOM = 1000
KAPPAS_50 = np.linspace(0.0, 0.98, 50)


def _grid():
    for theta in np.linspace(0.1, 1.0, 10):
        for C in np.linspace(0.0, 1.0 / math.expm1(theta), 10):
            for kappa in np.linspace(0.0, 0.9, 10):
                yield float(C), float(theta), float(kappa)


@pytest.fixture(scope="module")
def random_suite():
    t0 = time.monotonic()
    insts = [tight_instance(s) for s in range(N_RANDOM)]
    opts = {flm: [solve_exact(i, flm=flm).value for i in insts] for flm in (False, True)}
    return insts, opts, time.monotonic() - t0


def test_c01_small_bid_optimum(criterion):
    t0 = time.monotonic()
    eta = optimize_eta("exponential", 1e-6, flm=False).eta
    dt = time.monotonic() - t0
    ok = 0.6311 <= eta <= 0.6322 and dt < 10
    assert criterion(1, ok, f"optimized eta={eta:.6f} in {dt:.2f}s")


def test_c02_closed_form_matches_general(criterion):
    worst, at = 0.0, None
    for C, theta, kappa in _grid():
        spec = DiscountSpec.exponential(C, theta)
        d = abs(eta_exponential(C, theta, kappa).eta - eta_general(spec, kappa, n=40).eta)
        if d > worst:
            worst, at = d, (C, theta, kappa)
    ok = worst < 1e-8
    assert criterion(2, ok, f"max |closed - general(n=40)| = {worst:.3e} at C,theta,kappa={at}")


def test_c03_quadratic_consistency(criterion):
    spec = DiscountSpec.quadratic()
    diffs = [abs(eta_quadratic(k).eta - eta_general(spec, k, n=2, R=0.0).eta) for k in KAPPAS_50]
    worst = max(diffs)
    at = float(KAPPAS_50[int(np.argmax(diffs))])
    e0, e5 = eta_quadratic(0.0).eta, eta_quadratic(0.5).eta
    spots = abs(e0 - 4 / 7) < 1e-9 and abs(e5 - 16 / 75) < 1e-9  # 16/75 = 0.21333...
    ok = worst < 1e-9 and spots
    assert criterion(3, ok, f"max diff {worst:.3e} at kappa={at:.3f}; eta(0)={e0:.10f} eta(0.5)={e5:.10f}")


def test_c04_dual_certification(criterion, random_suite):
    t0 = time.monotonic()
    insts, opts, setup = random_suite
    viol = ratio_d = ratio_opt = runs = 0
    for idx, inst in enumerate(insts):
        k = inst.kappa
        for flm in (False, True):
            p = optimize_eta("exponential", k, flm=flm).params
            for spec in (DiscountSpec.exponential(p["C"], p["theta"]), DiscountSpec.constant_one()):
                eta = certified_eta(spec, k, flm)
                tr = run_metaad(inst, spec, flm=flm)
                du = construct_duals(inst, spec, tr)
                viol += len(check_dual_feasibility(inst, du).violations)
                ratio_d += tr.total_reward < eta * du.D - 1e-9
                ratio_opt += tr.total_reward < eta * opts[flm][idx] - 1e-9
                runs += 1
    dt = time.monotonic() - t0 + setup
    ok = viol == 0 and ratio_d == 0 and ratio_opt == 0 and dt < 300
    assert criterion(4, ok, f"{runs} runs: {viol} dual violations, {ratio_d} P<eta*D, {ratio_opt} P<eta*OPT, {dt:.1f}s")


def test_c05_upper_bound_witness(criterion):
    worst, at = -np.inf, None
    for kappa in np.arange(1, 10) / 10:
        p = optimize_eta("exponential", kappa).params
        algs = [("greedy", None)] + [(s.label, s) for s in SPECS]
        algs.append(("optimal", DiscountSpec.exponential(p["C"], p["theta"])))
        pair = adversarial_pair(float(kappa), 200, 1e-4)
        opts = [solve_exact(i).value for i in pair]
        for name, spec in algs:
            runs = [run_greedy(i) if spec is None else run_metaad(i, spec) for i in pair]
            r = min(t.total_reward / o for t, o in zip(runs, opts))
            excess = r - (1 - kappa)
            if excess > worst:
                worst, at = excess, (float(kappa), name)
    ok = worst <= 0.01
    assert criterion(5, ok, f"max (min-ratio - (1-kappa)) = {worst:.5f} at {at}")


def test_c06_flm_floor(criterion, random_suite):
    exact = all(
        eta_exponential_flm(0.0, th, k).eta == 0.5 for th in np.linspace(0.1, 1.0, 10) for k in np.linspace(0, 1, 21)
    )
    insts, opts, _ = random_suite
    ratios = [run_greedy(i, flm=True).total_reward / o for i, o in zip(insts, opts[True])]
    worst = min(ratios)
    ok = exact and worst >= 0.5
    assert criterion(6, ok, f"C=0 closed form exactly 0.5: {exact}; greedy FLM min ratio {worst:.4f} on {len(insts)}")


def test_c07_flm_dominance(criterion):
    worst, at = np.inf, None
    for C, theta, kappa in _grid():
        spec = DiscountSpec.exponential(C, theta)
        d = eta_flm_general(spec, kappa).eta - eta_general(spec, kappa).eta
        if d < worst:
            worst, at = d, (C, theta, kappa)
    ok = worst >= -1e-12
    assert criterion(7, ok, f"min (flm - no flm) = {worst:.3e} at C,theta,kappa={at}")


def test_c08_monotone_curve(criterion):
    etas = np.array([optimize_eta("exponential", float(k)).eta for k in KAPPAS_50])
    rise = float(np.max(np.diff(etas)))
    over = float(np.max(etas - (1 - KAPPAS_50)))
    ok = rise <= 1e-6 and over <= 0
    assert criterion(8, ok, f"largest increase {rise:.3e}; max eta-(1-kappa) {over:.3e}")


def test_c09_lobm_guarantee(criterion):
    insts = [i for k in np.arange(1, 10) / 10 for i in adversarial_pair(float(k), 200, 1e-4)]
    insts += [tight_instance(50_000 + s) for s in range(200)]
    opts = [solve_exact(i).value for i in insts]
    worst, empty, clamped = np.inf, 0, 0
    for lam in (0.3, 0.5, 0.8, 1.0):
        bounds = [eta_lobm(lam, 1.0, i.kappa).eta for i in insts]
        for pred in ("adv0", "adv1", "const:0.5"):
            for inst, opt, eta in zip(insts, opts, bounds):
                tr, st = run_lobm(inst, 1.0, lam, parse_predictor(pred), raise_on_empty=False)
                empty += st.empty_intervals
                worst = min(worst, tr.total_reward / opt - eta)
        for lam1 in sorted({lam, 1.0}):
            for inst in insts:
                _, st = run_lobm(inst, 1.0, lam, ReferencePolicy(lam1), raise_on_empty=False)
                empty += st.empty_intervals
                clamped += st.clamped
    ok = worst >= -1e-6 and empty == 0 and clamped == 0
    assert criterion(9, ok, f"min (ratio - eta_lobm) {worst:.5f}; {empty} empty intervals; {clamped} reference clamps")


def test_c10_lobm_limits(criterion):
    zero = all(eta_lobm(0.0, th, k).eta == 0.0 for th in (0.5, 1.0, 2.0) for k in (0.0, 0.3, 0.9))
    top = eta_lobm(1.0, 1.0, 1e-6).eta
    ok = zero and abs(top - (1 - 1 / math.e)) < 1e-3
    assert criterion(10, ok, f"lambda=0 gives 0: {zero}; eta_lobm(1,1,1e-6)={top:.6f}")


def test_c11_bnb_equals_enumeration(criterion):
    rng = np.random.default_rng(11)
    mismatches = 0
    for s in range(200):
        U, V = int(rng.integers(1, 5)), int(rng.integers(1, 11))
        inst = gen_random(70_000 + s, U, V, degree=min(2.0, U), capacity=(0.5, 3.0), load=(1.0, 4.0))
        flm = bool(s % 2)
        mismatches += solve_exact(inst, flm=flm).value != brute_force(inst, flm=flm).value
    ok = mismatches == 0
    assert criterion(11, ok, f"{mismatches} mismatches out of 200")


def test_c12_percentile_report(criterion, tmp_path):
    inst = tmp_path / "inst"
    assert main(["gen", "--random", "--seed", "12", "--count", "20", "--U", "4", "--V", "15",
                 "--capacity", "2,6", "--out", str(inst)]) == 0
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["run", str(inst), "--alg", "greedy", "--alg", "metaad:optimal", "--flm", "both",
                     "--out", str(out)]) == 0
        outs.append(out)
    same = all(filecmp.cmp(outs[0] / f, outs[1] / f, shallow=False) for f in ("results.csv", "summary.csv"))
    header = (outs[0] / "summary.csv").read_text().splitlines()[0]
    ok = same and header == "algorithm,flm,count,min,mean,p50,p90,p95,p99,p100"
    assert criterion(12, ok, f"deterministic: {same}; header: {header}")
