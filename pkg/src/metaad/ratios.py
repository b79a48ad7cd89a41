"""Competitive-ratio formulas and their numerical optimization."""
from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .discounting import (
    DiscountSpec,
    phi,
    varphi,
    varphi_antideriv,
    varphi_deriv,
    varphi_increment,
)

GRID_POINTS = 10_000
REFINE_XATOL = 1e-10
DEFAULT_SERIES_ORDER = 40

CLOSED_FORM = "ClosedForm"
GENERAL = "GeneralTheorem"
OPTIMIZED = "Optimized"


class KappaOutOfRange(ValueError):
    pass


class InvalidParams(ValueError):
    pass


@dataclass(frozen=True)
class RatioReport:
    kappa: float
    eta: float
    family: str
    params: dict = field(default_factory=dict)
    gamma: float | None = None
    flm: bool = False
    method: str = GENERAL
    n: int | None = None
    R: float | None = None
    tail_bound: float | None = None

    def __float__(self):
        return float(self.eta)


def _check_kappa(kappa, allow_one=True):
    if not (0.0 <= kappa <= 1.0) or (kappa == 1.0 and not allow_one):
        raise KappaOutOfRange(f"kappa={kappa}")


def default_order(spec, flm=False):
    if spec.family == "polynomial":
        d = max(spec.degree or 0, 1)
        return max(2, d + 1) if flm else d
    if spec.family == "constant_one":
        return 2 if flm else 1
    return DEFAULT_SERIES_ORDER


def _deriv_grid(spec, order, pts=2001):
    return np.asarray(varphi_deriv(spec, order, np.linspace(0.0, 1.0, pts)))


def lipschitz_R(spec, n, flm=False):
    """Constant multiplying the truncation term.

    Without FLM: Lipschitz constant of the n-th derivative of varphi when that
    derivative is not non-increasing, else 0.  With FLM: the maximum of the
    n-th derivative itself.
    """
    if flm:
        return float(max(0.0, _deriv_grid(spec, n).max()))
    nxt = _deriv_grid(spec, n + 1)
    if np.all(nxt <= 0.0):
        return 0.0
    return float(np.abs(nxt).max())


def delta_fn(spec, kappa, n, y):
    """Slack function Delta(y) for y in (0, 1], vectorized."""
    y = np.asarray(y, dtype=np.float64)
    num = np.asarray(varphi(spec, y)) - np.asarray(varphi_antideriv(spec, y))
    kp = 1.0
    for i in range(1, n + 1):
        kp *= kappa
        if kp == 0.0:
            break
        num = num + kp * np.asarray(varphi_increment(spec, i - 1, y))
    return num / y


def delta_limit(spec, kappa, n):
    """Delta(0+), from varphi(y)/y -> varphi'(0) and (1/y) int_0^y varphi -> varphi(0)."""
    val = varphi_deriv(spec, 1, 0.0) - varphi(spec, 0.0)
    kp = 1.0
    for i in range(1, n + 1):
        kp *= kappa
        if kp == 0.0:
            break
        val += kp * varphi_deriv(spec, i, 0.0)
    return float(val)


def delta_max(spec, kappa, n, grid_points=GRID_POINTS, return_argmax=False):
    """Maximum of Delta over [0, 1]: grid, bounded scalar refinement, y->0 limit."""
    y = np.arange(1, grid_points + 1, dtype=np.float64) / grid_points
    d = delta_fn(spec, kappa, n, y)
    k = int(np.argmax(d))
    best, arg = float(d[k]), float(y[k])
    lo = y[k - 1] if k > 0 else 0.5 / grid_points
    hi = y[min(k + 1, grid_points - 1)]
    if hi > lo:
        res = minimize_scalar(
            lambda s: -float(delta_fn(spec, kappa, n, s)),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": REFINE_XATOL},
        )
        if -res.fun > best:
            best, arg = float(-res.fun), float(res.x)
    lim = delta_limit(spec, kappa, n)
    if lim > best:
        best, arg = lim, 0.0
    return (best, arg) if return_argmax else best


def upper_bound(kappa):
    """Best ratio any deterministic algorithm can guarantee without FLM."""
    _check_kappa(kappa)
    return 1.0 - kappa


def _params(spec):
    d = spec.to_dict()
    d.pop("family")
    return d


def eta_general(spec, kappa, n=None, R=None):
    """Ratio of the discounted-score algorithm without FLM for any valid spec."""
    _check_kappa(kappa)
    n = default_order(spec) if n is None else int(n)
    if n < 1:
        raise InvalidParams("n must be >= 1")
    if kappa == 1.0:
        return RatioReport(kappa, 0.0, spec.family, _params(spec), math.inf, False, GENERAL, n, R)
    R = lipschitz_R(spec, n) if R is None else float(R)
    gamma = 1.0 + kappa ** (n + 1) * R + delta_max(spec, kappa, n)
    eta = 1.0 / (gamma + phi(spec, kappa) / (1.0 - kappa))
    return RatioReport(kappa, eta, spec.family, _params(spec), gamma, False, GENERAL, n, R, _tail_bound(spec, kappa, n))


def eta_flm_general(spec, kappa, n=None, R=None, proof_sum=False):
    """Ratio with FLM.  ``proof_sum`` stops the Delta sum at n-1 instead of n."""
    _check_kappa(kappa)
    n = default_order(spec, flm=True) if n is None else int(n)
    if n < 2:
        raise InvalidParams("the FLM ratio needs n >= 2")
    R = lipschitz_R(spec, n, flm=True) if R is None else float(R)
    gamma = 1.0 + kappa**n * R + delta_max(spec, kappa, n - 1 if proof_sum else n)
    eta = 1.0 / (gamma + phi(spec, kappa))
    return RatioReport(kappa, eta, spec.family, _params(spec), gamma, True, GENERAL, n, R)


def _tail_bound(spec, kappa, n):
    if spec.family != "exponential" or kappa * spec.theta >= 1.0:
        return None
    th = spec.theta
    return spec.C * th ** (n + 1) * math.exp(th) * kappa ** (n + 1) / (1.0 - kappa * th)


# exponential closed form ------------------------------------------------------


def _exp_check(C, theta, kappa):
    _check_kappa(kappa)
    if C < 0 or not (0.0 < theta <= 1.0):
        raise InvalidParams(f"need C >= 0 and theta in (0, 1], got C={C}, theta={theta}")
    if C * math.expm1(theta) > 1.0 + 1e-12:
        raise InvalidParams(f"C (e^theta - 1) = {C * math.expm1(theta):.6g} > 1")
    if C > 0 and kappa * theta >= 1.0:
        raise InvalidParams("kappa * theta must be < 1 for the series to converge")


def _exp_parts(C, theta, kappa):
    """(max Delta, phi(kappa)) for varphi(x) = C e^{theta x} - C with an infinite series."""
    if C == 0.0:
        return 0.0, 1.0
    a = 1.0 - 1.0 / theta + kappa / (1.0 - kappa * theta)
    dmax = C + C * a * (math.expm1(theta) if a >= 0 else theta)
    return dmax, 1.0 - C * math.expm1(theta * (1.0 - kappa))


def eta_exponential(C, theta, kappa):
    _exp_check(C, theta, kappa)
    params = {"C": C, "theta": theta}
    if kappa == 1.0:
        return RatioReport(kappa, 0.0, "exponential", params, None, False, CLOSED_FORM)
    dmax, ph = _exp_parts(C, theta, kappa)
    gamma = 1.0 + dmax
    return RatioReport(kappa, 1.0 / (gamma + ph / (1.0 - kappa)), "exponential", params, gamma, False, CLOSED_FORM)


def eta_exponential_flm(C, theta, kappa):
    _exp_check(C, theta, kappa)
    dmax, ph = _exp_parts(C, theta, kappa)
    gamma = 1.0 + dmax
    return RatioReport(kappa, 1.0 / (gamma + ph), "exponential", {"C": C, "theta": theta}, gamma, True, CLOSED_FORM)


def _exp_eta_grid(theta, s, kappa, flm):
    """Vectorized closed form over theta and s = C (e^theta - 1) in [0, 1]."""
    theta, s = np.broadcast_arrays(np.asarray(theta, float), np.asarray(s, float))
    C = s / np.expm1(theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = 1.0 - 1.0 / theta + kappa / (1.0 - kappa * theta)
        dmax = np.where(C > 0, C + C * a * np.where(a >= 0, np.expm1(theta), theta), 0.0)
        ph = 1.0 - C * np.expm1(theta * (1.0 - kappa))
        tail = ph if flm else ph / (1.0 - kappa)
        eta = 1.0 / (1.0 + dmax + tail)
    bad = (C > 0) & (kappa * theta >= 1.0)
    return np.where(bad | ~np.isfinite(eta), 0.0, eta)


# polynomials ---------------------------------------------------------------------


def quadratic_closed_form(kappa):
    return 1.0 / (11.0 / 4.0 * kappa**2 + 2.5 * kappa + 0.75 + 1.0 / (1.0 - kappa))


def eta_quadratic(kappa):
    """Published closed form for varphi(x) = x^2."""
    _check_kappa(kappa, allow_one=False)
    return RatioReport(kappa, quadratic_closed_form(kappa), "polynomial", {"coeffs": [0.0, 1.0]}, None, False, CLOSED_FORM)


def poly_delta_coeffs(coeffs, kappa, n=None):
    """Power-series coefficients of Delta(y) for varphi(x) = sum_j C_j x^j.

    Coefficient of y^k is (1+kappa) C_{k+1} - C_k/(k+1)
    + sum_{i=2}^{n} kappa^i C_{i+k} (i+k)!/(k+1)!.
    """
    c = [0.0] + [float(x) for x in coeffs]  # c[j] = C_j, c[0] = 0
    d = len(c) - 1
    n = d if n is None else n

    def C(j):
        return c[j] if 0 <= j <= d else 0.0

    out = []
    for k in range(0, d):
        a = (1.0 + kappa) * C(k + 1)
        if k >= 1:
            a -= C(k) / (k + 1)
        for i in range(2, n + 1):
            if i + k > d:
                break
            a += kappa**i * C(i + k) * math.factorial(i + k) / math.factorial(k + 1)
        out.append(a)
    # the -C_d/(d+1) y^d term
    if d >= 1:
        out.append(-C(d) / (d + 1))
    return np.array(out)


def _poly_max_on_unit(p):
    """Max of the polynomial with ascending coefficients ``p`` over [0, 1]."""
    P = np.polynomial.Polynomial(p)
    cands = [0.0, 1.0]
    dP = P.deriv()
    if dP.degree() >= 1:
        for r in dP.roots():
            if abs(r.imag) < 1e-12 and 0.0 < r.real < 1.0:
                cands.append(float(r.real))
    vals = [float(P(x)) for x in cands]
    k = int(np.argmax(vals))
    return vals[k], cands[k]


def eta_poly(coeffs, kappa, flm=False):
    """Ratio for a polynomial varphi from the coefficient expansion of Delta."""
    spec = DiscountSpec.polynomial(coeffs)
    _check_kappa(kappa, allow_one=flm)
    dmax, _ = _poly_max_on_unit(poly_delta_coeffs(spec.coeffs, kappa)) if spec.coeffs else (0.0, 0.0)
    ph = phi(spec, kappa)
    gamma = 1.0 + dmax
    eta = 1.0 / (gamma + (ph if flm else ph / (1.0 - kappa)))
    rep = RatioReport(kappa, eta, "polynomial", {"coeffs": list(spec.coeffs)}, gamma, flm, CLOSED_FORM, spec.degree, 0.0)
    if os.environ.get("METAAD_DEBUG"):
        ref = (eta_flm_general if flm else eta_general)(spec, kappa).eta
        if abs(ref - eta) > 1e-8:
            warnings.warn(f"polynomial expansion disagrees with direct evaluation: {eta} vs {ref}")
    return rep


# learning-augmented bound -------------------------------------------------------


def eta_lobm(lam, theta, kappa):
    if not 0.0 <= lam <= 1.0:
        raise InvalidParams(f"lambda={lam} not in [0, 1]")
    if theta <= 0:
        raise InvalidParams(f"theta={theta} must be > 0")
    _check_kappa(kappa)
    params = {"lambda": lam, "theta": theta}
    if lam == 0.0 or kappa == 1.0:
        return RatioReport(kappa, 0.0, "lobm", params, None, False, CLOSED_FORM)
    rho = -math.expm1(-theta)
    first = -math.expm1(-theta * kappa) / (1.0 - kappa)
    bracket = (math.expm1(theta * kappa) / kappa if kappa > 0 else theta) - 1.0
    den = 1.0 + lam * (first + rho / theta * max(bracket, 0.0))
    return RatioReport(kappa, lam * rho / den, "lobm", params, None, False, CLOSED_FORM)


# optimization ----------------------------------------------------------------------


def _refine_1d(f, lo, hi, x0):
    res = minimize_scalar(lambda x: -f(x), bounds=(lo, hi), method="bounded", options={"xatol": 1e-9})
    x, v = float(res.x), float(-res.fun)
    v0 = f(x0)
    return (x, v) if v > v0 else (x0, v0)


def optimize_eta(family, kappa, flm=False, grid=200, sweeps=6):
    """Best ratio over the parameter box of ``family`` ("exponential" or "quadratic")."""
    _check_kappa(kappa)
    if family == "exponential":
        if kappa == 1.0 and not flm:
            return RatioReport(kappa, 0.0, "exponential", {"C": 0.0, "theta": 1.0}, None, flm, OPTIMIZED)
        th = np.arange(1, grid + 1) / grid
        ss = np.linspace(0.0, 1.0, grid)
        E = _exp_eta_grid(th[:, None], ss[None, :], kappa, flm)
        i, j = np.unravel_index(int(np.argmax(E)), E.shape)
        t0, s0, best = float(th[i]), float(ss[j]), float(E[i, j])

        def f(t, s):
            return float(_exp_eta_grid(t, s, kappa, flm))

        for _ in range(sweeps):
            prev = best
            t0, best = _refine_1d(lambda t: f(t, s0), max(1e-6, t0 - 2.0 / grid), min(1.0, t0 + 2.0 / grid), t0)
            s0, best = _refine_1d(lambda s: f(t0, s), 0.0, 1.0, s0)
            for s_end in (0.0, 1.0):
                if f(t0, s_end) > best:
                    s0, best = s_end, f(t0, s_end)
            if best - prev < 1e-12:
                break
        C = s0 / math.expm1(t0)
        rep = (eta_exponential_flm if flm else eta_exponential)(C, t0, kappa)
        return RatioReport(kappa, rep.eta, "exponential", {"C": C, "theta": t0}, rep.gamma, flm, OPTIMIZED)
    if family in ("quadratic", "polynomial2"):
        if kappa == 1.0 and not flm:
            return RatioReport(kappa, 0.0, "polynomial", {"coeffs": [0.0, 0.0]}, None, flm, OPTIMIZED)

        def f(c):
            return eta_poly([0.0, c], kappa, flm=flm).eta if c > 0 else eta_poly([], kappa, flm=flm).eta

        cs = np.linspace(0.0, 1.0, grid)
        vals = [f(c) for c in cs]
        k = int(np.argmax(vals))
        c0, best = _refine_1d(f, float(cs[max(k - 1, 0)]), float(cs[min(k + 1, grid - 1)]), float(cs[k]))
        rep = eta_poly([0.0, c0], kappa, flm=flm)
        return RatioReport(kappa, rep.eta, "polynomial", {"coeffs": [0.0, c0]}, rep.gamma, flm, OPTIMIZED)
    raise InvalidParams(f"unknown family {family!r}")
