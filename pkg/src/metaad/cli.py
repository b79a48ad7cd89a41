"""Command-line harness: gen, run, curve, lobm, verify."""
from __future__ import annotations

import argparse
import csv
import glob
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import instances as inst_mod
from .discounting import DiscountSpec
from .duals import check_dual_feasibility, check_primal_dual_ratio, construct_duals
from .lobm import check_lobm_duals, parse_predictor, run_lobm
from .offline import PERCENTILES, brute_force, dual_upper_bound, empirical_cr, solve_exact
from .online import run_metaad
from .ratios import (
    eta_exponential,
    eta_exponential_flm,
    eta_flm_general,
    eta_general,
    eta_lobm,
    eta_quadratic,
    optimize_eta,
)

log = logging.getLogger("metaad")

RATIO_TOL = 1e-9
LOBM_TOL = 1e-6


# algorithm specs ----------------------------------------------------------------


def parse_algorithm(text):
    """``greedy``, ``metaad:optimal``, ``metaad:classic``, ``metaad:quadratic[:C=c]``,
    ``metaad:exponential:C=c,theta=t`` or ``metaad:polynomial:c1,c2,...``.

    Returns a function of (kappa, flm) giving the DiscountSpec to run.
    """
    if text == "greedy":
        return lambda kappa, flm: DiscountSpec.constant_one()
    parts = text.split(":", 2)
    if parts[0] != "metaad" or len(parts) < 2:
        raise ValueError(f"unknown algorithm {text!r}")
    fam = parts[1]
    arg = parts[2] if len(parts) > 2 else ""
    kv = dict(p.split("=", 1) for p in arg.split(",") if "=" in p)
    if fam == "optimal":
        def pick(kappa, flm):
            rep = optimize_eta("exponential", kappa, flm=flm)
            return DiscountSpec.exponential(rep.params["C"], rep.params["theta"])
        return pick
    if fam == "classic":
        return lambda kappa, flm: DiscountSpec.classic_small_bid()
    if fam == "exponential":
        spec = DiscountSpec.exponential(float(kv["C"]), float(kv["theta"]))
    elif fam == "quadratic":
        spec = DiscountSpec.quadratic(float(kv.get("C", 1.0)))
    elif fam == "polynomial":
        spec = DiscountSpec.polynomial([float(c) for c in arg.split(",")])
    else:
        raise ValueError(f"unknown family in {text!r}")
    return lambda kappa, flm: spec


def certified_eta(spec, kappa, flm):
    """Guaranteed ratio for ``spec``: closed form for exponentials, general theorem otherwise."""
    if spec.family in ("exponential", "classic_small_bid"):
        C, th = (spec.C, spec.theta) if spec.family == "exponential" else (1.0 / math.expm1(1.0), 1.0)
        if C == 0.0 or kappa * th < 1.0:
            return (eta_exponential_flm if flm else eta_exponential)(C, th, kappa).eta
    return (eta_flm_general if flm else eta_general)(spec, kappa).eta


# io helpers ------------------------------------------------------------------------


def _write_csv(path, header, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x):
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return x


def _instance_files(paths):
    files = []
    for p in paths:
        if os.path.isdir(p):
            files.extend(sorted(glob.glob(os.path.join(p, "*.json"))))
        else:
            files.append(p)
    if not files:
        raise SystemExit("no instance files found")
    return files


def _instance_id(path):
    return os.path.splitext(os.path.basename(path))[0]


def _map(fn, items, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _opt(instance, flm, args):
    res = solve_exact(instance, flm=flm, max_nodes=args.max_nodes, time_limit=args.time_limit, strict=args.strict)
    return res


def _flm_values(text):
    return {"true": [True], "false": [False], "both": [False, True]}[text]


# gen -------------------------------------------------------------------------------


def cmd_gen(args):
    os.makedirs(args.out, exist_ok=True)
    rows = []
    if args.adversarial:
        for tail in (inst_mod.HIGH_TAIL, inst_mod.ZERO_TAIL):
            inst = inst_mod.gen_adversarial(inst_mod.AdversarialParams(args.kappa, args.m, args.eps, tail))
            iid = f"adv_k{args.kappa:g}_m{args.m}_{tail}"
            inst_mod.write_json(inst, os.path.join(args.out, iid + ".json"))
            rows.append((iid, inst.meta["generator"], _fmt(inst.kappa)))
    else:
        for k in range(args.count):
            seed = args.seed + k
            inst = inst_mod.gen_random(seed, args.U, args.V, degree=args.degree,
                                       capacity=tuple(args.capacity), load=tuple(args.load), utility=tuple(args.utility))
            iid = f"rand_s{seed:06d}"
            inst_mod.write_json(inst, os.path.join(args.out, iid + ".json"))
            rows.append((iid, inst.meta["generator"], _fmt(inst.kappa)))
    _write_csv(os.path.join(args.out, "manifest.csv"), ["id", "generator", "kappa"], rows)
    return 0


# run -------------------------------------------------------------------------------


def _run_one(job):
    path, algs, flms, certify, args = job
    inst = inst_mod.read_json(path)
    iid = _instance_id(path)
    kappa = inst.kappa
    rows = []
    for flm in flms:
        opt = _opt(inst, flm, args)
        for alg in algs:
            spec = parse_algorithm(alg)(kappa, flm)
            tr = run_metaad(inst, spec, flm=flm, strict=args.strict)
            P = tr.total_reward
            duals = construct_duals(inst, spec, tr)
            feas = check_dual_feasibility(inst, duals, tol=0.0 if args.strict else RATIO_TOL)
            if opt.exact:
                denom, kind = opt.value, "exact"
            else:
                denom, kind = (dual_upper_bound(duals) if feas.passed else opt.bound_used), "bound"
            ratio = P / denom if denom > 0 else 1.0
            row = {
                "instance_id": iid, "algorithm": alg, "spec": spec.label(), "flm": flm, "P": P,
                "opt": denom, "opt_kind": kind, "ratio": ratio, "cert_pass": True, "kappa": kappa,
            }
            if certify:
                eta = certified_eta(spec, kappa, flm)
                pd = check_primal_dual_ratio(P, duals.D, eta, tol=0.0 if args.strict else RATIO_TOL)
                weak = duals.D >= denom - RATIO_TOL if kind == "exact" else True
                row.update(
                    eta=eta, D=duals.D, dual_violations=len(feas.violations), pd_gap=pd.gap,
                    cert_pass=bool(feas.passed and pd.passed and weak),
                )
            rows.append(row)
    return rows


RUN_HEADER = ["instance_id", "algorithm", "spec", "flm", "P", "opt", "opt_kind", "ratio", "cert_pass"]
CERT_HEADER = ["kappa", "eta", "D", "dual_violations", "pd_gap"]


def summarize(rows, key=("algorithm", "flm")):
    groups = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in key), []).append(r)
    out = []
    for k in sorted(groups, key=lambda g: tuple(str(x) for x in g)):
        g = groups[k]
        rep = empirical_cr([r["P"] for r in g], [r["opt"] for r in g]) if all(r["opt"] > 0 for r in g) else None
        if rep is None:
            rats = np.array([r["ratio"] for r in g])
            desc = np.sort(rats)[::-1]
            rep = {"min_ratio": float(rats.min()), "mean_ratio": float(rats.mean()),
                   "percentiles": {p: float(desc[max(1, math.ceil(p / 100 * len(desc))) - 1]) for p in PERCENTILES}}
        out.append(list(k) + [len(g), rep["min_ratio"], rep["mean_ratio"]] + [rep["percentiles"][p] for p in PERCENTILES])
    return out


SUMMARY_TAIL = ["count", "min", "mean"] + [f"p{p}" for p in PERCENTILES]


def cmd_run(args):
    files = _instance_files(args.instances)
    algs = args.alg or ["greedy"]
    for a in algs:
        parse_algorithm(a)
    jobs = [(f, algs, _flm_values(args.flm), args.certify, args) for f in files]
    rows = [r for rs in _map(_run_one, jobs, args.workers) for r in rs]
    rows.sort(key=lambda r: (r["instance_id"], r["algorithm"], r["flm"]))
    header = RUN_HEADER + (CERT_HEADER if args.certify else [])
    _write_csv(os.path.join(args.out, "results.csv"), header, [[_fmt(r[h]) for h in header] for r in rows])
    summary = summarize(rows)
    _write_csv(os.path.join(args.out, "summary.csv"), ["algorithm", "flm"] + SUMMARY_TAIL,
               [[_fmt(x) for x in s] for s in summary])
    failed = [r for r in rows if not r["cert_pass"]]
    for r in failed:
        log.error("certificate failed: %s %s flm=%s", r["instance_id"], r["algorithm"], r["flm"])
    return 1 if failed else 0


# curve ---------------------------------------------------------------------------------


def parse_grid(text):
    lo, hi, n = text.split(":")
    return np.linspace(float(lo), float(hi), int(n))


def curve_rows(grid, flm):
    rows = []
    for k in grid:
        k = float(k)
        opt = optimize_eta("exponential", k, flm=flm)
        if flm:
            quad = eta_flm_general(DiscountSpec.quadratic(), k).eta
            greedy = 0.5
            ub = ""
        else:
            quad = eta_quadratic(k).eta if k < 1 else 0.0
            greedy = (1.0 - k) / (2.0 - k)
            ub = 1.0 - k
        rows.append([k, opt.eta, opt.params["theta"], opt.params["C"], quad, greedy, ub, flm])
    return rows


CURVE_HEADER = ["kappa", "eta_opt", "theta_opt", "C_opt", "eta_quadratic", "eta_greedy", "upper_bound", "flm"]


def cmd_curve(args):
    grid = parse_grid(args.grid)
    rows = []
    for flm in _flm_values(args.flm):
        rows.extend(curve_rows(grid, flm))
    _write_csv(os.path.join(args.out, "curve.csv"), CURVE_HEADER, [[_fmt(x) for x in r] for r in rows])
    lrows = []
    for lam in args.lambdas:
        for k in grid:
            lrows.append([float(k), lam, args.theta, eta_lobm(lam, args.theta, float(k)).eta])
    _write_csv(os.path.join(args.out, "lobm_curve.csv"), ["kappa", "lambda", "theta", "eta_lobm"],
               [[_fmt(x) for x in r] for r in lrows])
    return 0


# lobm ------------------------------------------------------------------------------------


def _lobm_one(job):
    path, lams, thetas, preds, args = job
    inst = inst_mod.read_json(path)
    iid = _instance_id(path)
    kappa = inst.kappa
    opt = _opt(inst, False, args)
    rows = []
    for lam in lams:
        for th in thetas:
            for ptext in preds:
                row = {"instance_id": iid, "lambda": lam, "theta": th, "predictor": ptext, "kappa": kappa}
                try:
                    pred = parse_predictor(ptext)
                    tr, st = run_lobm(inst, th, lam, pred, strict=args.strict, raise_on_empty=False)
                except KeyError as exc:
                    row.update(P="", opt=opt.value, opt_kind="exact" if opt.exact else "bound", ratio="",
                               eta_lobm="", clamp_rate="", empty_intervals="", dual_violations="",
                               error=str(exc), ok=False)
                    rows.append(row)
                    continue
                P = tr.total_reward
                denom = opt.value if opt.exact else opt.bound_used
                ratio = P / denom if denom > 0 else 1.0
                eta = eta_lobm(lam, th, kappa).eta
                viol = len(check_lobm_duals(inst, st)) if lam > 0 else ""
                ok = st.empty_intervals == 0 and (viol == "" or viol == 0)
                row.update(P=P, opt=denom, opt_kind="exact" if opt.exact else "bound", ratio=ratio, eta_lobm=eta,
                           clamp_rate=st.clamp_rate if lam > 0 else "", empty_intervals=st.empty_intervals,
                           dual_violations=viol, error="", ok=ok)
                rows.append(row)
    return rows


LOBM_HEADER = ["instance_id", "lambda", "theta", "predictor", "kappa", "P", "opt", "opt_kind", "ratio", "eta_lobm",
               "clamp_rate", "empty_intervals", "dual_violations", "error"]


def cmd_lobm(args):
    files = _instance_files(args.instances)
    jobs = [(f, args.lam, args.theta, args.predictor, args) for f in files]
    rows = [r for rs in _map(_lobm_one, jobs, args.workers) for r in rs]
    rows.sort(key=lambda r: (r["instance_id"], r["lambda"], r["theta"], r["predictor"]))
    _write_csv(os.path.join(args.out, "lobm.csv"), LOBM_HEADER, [[_fmt(r[h]) for h in LOBM_HEADER] for r in rows])
    bad = [r for r in rows if not r["ok"] and not r["error"]]
    return 1 if bad else 0


# verify -----------------------------------------------------------------------------------


def cmd_verify(args):
    """Quick invariant sweep on freshly generated random and adversarial instances."""
    rng = np.random.default_rng(args.seed)
    checks = {}

    def record(name, ok):
        c = checks.setdefault(name, [0, 0])
        c[0] += 1
        c[1] += 0 if ok else 1

    specs = {"greedy": parse_algorithm("greedy"), "optimal": parse_algorithm("metaad:optimal")}
    tol = 0.0 if args.strict else RATIO_TOL
    for k in range(args.count):
        U = int(rng.integers(2, 6))
        V = int(rng.integers(3, 9))
        inst = inst_mod.gen_random(args.seed + k, U, V, degree=min(3.0, U), capacity=(3.0, 8.0))
        kappa = inst.kappa
        for flm in (False, True):
            opt = solve_exact(inst, flm=flm)
            if (U + 1) ** V <= 2_000_000:
                record("bnb_equals_brute_force", abs(opt.value - brute_force(inst, flm).value) <= 1e-12)
            for name, pick in specs.items():
                spec = pick(kappa, flm)
                tr = run_metaad(inst, spec, flm=flm, strict=args.strict)
                d = construct_duals(inst, spec, tr)
                record("dual_feasibility", check_dual_feasibility(inst, d, tol=tol).passed)
                eta = certified_eta(spec, kappa, flm)
                record("primal_dual_ratio", check_primal_dual_ratio(tr.total_reward, d.D, eta, tol=tol).passed)
                record("ratio_vs_opt", tr.total_reward >= eta * opt.value - RATIO_TOL)
                record("weak_duality", d.D >= opt.value - RATIO_TOL)
            if flm:
                greedy = run_metaad(inst, DiscountSpec.constant_one(), flm=True).total_reward
                record("greedy_flm_half", greedy >= 0.5 * opt.value - RATIO_TOL)
        for lam in (0.5, 1.0):
            tr, st = run_lobm(inst, 1.0, lam, parse_predictor("adv1"), raise_on_empty=False, reference_check=[lam, 1.0])
            record("lobm_nonempty", st.empty_intervals == 0)
            record("lobm_reference_feasible", st.reference_misses == 0)
            record("lobm_dual_feasibility", not check_lobm_duals(inst, st))
    rows = [[name, n, bad, "pass" if bad == 0 else "fail"] for name, (n, bad) in sorted(checks.items())]
    _write_csv(os.path.join(args.out, "verify.csv"), ["check", "cases", "failures", "status"], rows)
    for r in rows:
        print(f"{r[3].upper():4}  {r[0]}  ({r[1]} cases, {r[2]} failures)")
    return 0 if all(r[2] == 0 for r in rows) else 1


# entry point ---------------------------------------------------------------------------------


def _floats(text):
    return [float(x) for x in text.split(",")]


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=0, help="base seed for gen and verify; instance i uses seed + i")
    common.add_argument("--workers", type=int, default=1, help="worker processes")
    common.add_argument("--strict", action="store_true", help="disable numeric tolerances in feasibility checks")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="metaad", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate instance files")
    mode = g.add_mutually_exclusive_group(required=True)
    mode.add_argument("--adversarial", action="store_true", help="HighTail/ZeroTail pair")
    mode.add_argument("--random", action="store_true", help="random bipartite instances")
    g.add_argument("--kappa", type=float, default=0.5, help="bid-budget ratio of the adversarial pair")
    g.add_argument("--m", type=int, default=50, help="adversarial stream length parameter")
    g.add_argument("--eps", type=float, default=1e-6)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--U", type=int, default=10)
    g.add_argument("--V", type=int, default=100)
    g.add_argument("--degree", type=float, default=4.0, help="mean arrival degree")
    g.add_argument("--capacity", type=_floats, default=[20.0, 40.0], help="budget range lo,hi")
    g.add_argument("--load", type=_floats, default=[1.0, 4.0])
    g.add_argument("--utility", type=_floats, default=[0.08, 0.12])
    g.set_defaults(func=cmd_gen)

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--max-nodes", type=int, default=20_000_000)
    solver.add_argument("--time-limit", type=float, default=60.0)

    r = sub.add_parser("run", parents=[common, solver], help="run algorithms and compare with the optimum")
    r.add_argument("instances", nargs="+")
    r.add_argument("--alg", action="append", help="greedy | metaad:optimal | metaad:classic | metaad:quadratic[:C=] | "
                   "metaad:exponential:C=,theta= | metaad:polynomial:c1,c2,...; repeatable")
    r.add_argument("--flm", choices=["true", "false", "both"], default="false")
    r.add_argument("--certify", action="store_true", help="build duals and check the guaranteed ratio")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("curve", parents=[common], help="ratio curves over a kappa grid")
    c.add_argument("--grid", default="0:0.98:50", help="lo:hi:count")
    c.add_argument("--flm", choices=["true", "false", "both"], default="both")
    c.add_argument("--lambdas", type=_floats, default=[0.3, 0.5, 0.8, 1.0], help="slackness values for lobm_curve.csv")
    c.add_argument("--theta", type=float, default=1.0)
    c.set_defaults(func=cmd_curve)

    lo = sub.add_parser("lobm", parents=[common, solver], help="learning-augmented runs")
    lo.add_argument("instances", nargs="+")
    lo.add_argument("--lambda", dest="lam", type=float, action="append")
    lo.add_argument("--theta", type=float, action="append")
    lo.add_argument("--predictor", action="append", help="adv0 | adv1 | const:<z> | ref:<lam1> | file:<csv>; repeatable")
    lo.set_defaults(func=cmd_lobm)

    v = sub.add_parser("verify", parents=[common], help="invariant sweep")
    v.add_argument("--count", type=int, default=50, help="random instances to check")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "lobm":
        args.lam = args.lam or [1.0]
        args.theta = args.theta or [1.0]
        args.predictor = args.predictor or ["adv1"]
    try:
        return args.func(args)
    except (OSError, inst_mod.ParseError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
