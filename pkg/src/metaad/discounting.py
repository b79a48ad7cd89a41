"""Discounting-function families.

A discounting function ``phi`` maps the normalized remaining budget of an
offline node to a factor in [0, 1].  The analysis works with the reflected
form ``varphi(x) = 1 - phi(1 - x)``, a function of the normalized *consumed*
budget.  Every family here has closed-form derivatives and antiderivatives of
``varphi``, so the competitive-ratio engine never differentiates numerically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MAX_ORDER = 60
DOMAIN_TOL = 1e-12

# Kernel codes, shared with metaad.kernels.
KIND_CONSTANT_ONE = 0
KIND_EXPONENTIAL = 1
KIND_POLYNOMIAL = 2
KIND_CLASSIC = 3

_E = math.e


class DomainError(ValueError):
    pass


class UnsupportedOrder(ValueError):
    pass


@dataclass(frozen=True)
class DiscountSpec:
    """One member of a discounting family.

    Use the constructors (:meth:`exponential`, :meth:`polynomial`,
    :meth:`constant_one`, :meth:`classic_small_bid`) rather than building the
    dataclass by hand.  For polynomials ``coeffs[j-1]`` is ``C_j``; the
    constant term is always zero.
    """

    family: str
    C: float = 0.0
    theta: float = 0.0
    coeffs: tuple = field(default=())

    @classmethod
    def exponential(cls, C, theta):
        return cls("exponential", C=float(C), theta=float(theta))

    @classmethod
    def polynomial(cls, coeffs):
        coeffs = tuple(float(c) for c in coeffs)
        # trailing zeros would inflate the degree used by the ratio formulas
        while coeffs and coeffs[-1] == 0.0:
            coeffs = coeffs[:-1]
        return cls("polynomial", coeffs=coeffs)

    @classmethod
    def quadratic(cls, C=1.0):
        return cls.polynomial([0.0, C])

    @classmethod
    def constant_one(cls):
        return cls("constant_one")

    @classmethod
    def classic_small_bid(cls):
        return cls("classic_small_bid")

    @classmethod
    def exponential_normalized(cls, theta):
        """``varphi(x) = (e^{theta x} - 1) / (e^theta - 1)``, the largest admissible C."""
        return cls.exponential(1.0 / math.expm1(theta), theta)

    @property
    def degree(self):
        return len(self.coeffs) if self.family == "polynomial" else None

    @property
    def kind(self):
        return {
            "constant_one": KIND_CONSTANT_ONE,
            "exponential": KIND_EXPONENTIAL,
            "polynomial": KIND_POLYNOMIAL,
            "classic_small_bid": KIND_CLASSIC,
        }[self.family]

    def kernel_params(self):
        """Flat float64 parameter vector understood by the jitted kernels."""
        if self.family == "exponential":
            return np.array([self.C, self.theta], dtype=np.float64)
        if self.family == "polynomial":
            return np.array(self.coeffs if self.coeffs else (0.0,), dtype=np.float64)
        return np.zeros(1, dtype=np.float64)

    def to_dict(self):
        if self.family == "exponential":
            return {"family": "exponential", "C": self.C, "theta": self.theta}
        if self.family == "polynomial":
            return {"family": "polynomial", "coeffs": list(self.coeffs)}
        return {"family": self.family}

    @classmethod
    def from_dict(cls, d):
        fam = d.get("family")
        if fam == "exponential":
            return cls.exponential(d["C"], d["theta"])
        if fam == "polynomial":
            return cls.polynomial(d["coeffs"])
        if fam == "constant_one":
            return cls.constant_one()
        if fam == "classic_small_bid":
            return cls.classic_small_bid()
        raise ValueError(f"unknown discounting family {fam!r}")

    def label(self):
        if self.family == "exponential":
            return f"exponential:C={self.C:.6g},theta={self.theta:.6g}"
        if self.family == "polynomial":
            return "polynomial:" + ",".join(f"{c:.6g}" for c in self.coeffs)
        return self.family


def _check_domain(x):
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < -DOMAIN_TOL) or np.any(x > 1.0 + DOMAIN_TOL):
        raise DomainError(f"argument outside [0, 1]: {x}")
    return np.clip(x, 0.0, 1.0)


def _scalar_or_array(x, out):
    return float(out) if np.ndim(x) == 0 else out


def _falling(j, i):
    # j * (j-1) * ... * (j-i+1)
    return math.perm(j, i) if i <= j else 0


def _varphi_raw(spec, x):
    fam = spec.family
    if fam == "constant_one":
        return np.zeros_like(x)
    if fam == "exponential":
        return spec.C * np.expm1(spec.theta * x)
    if fam == "polynomial":
        out = np.zeros_like(x)
        for j, c in enumerate(spec.coeffs, start=1):
            out = out + c * x**j
        return out
    if fam == "classic_small_bid":
        return np.expm1(x) / (_E - 1.0)
    raise ValueError(fam)


def varphi(spec, x):
    """Reflected discounting function ``1 - phi(1 - x)``."""
    x = _check_domain(x)
    return _scalar_or_array(x, _varphi_raw(spec, x))


def phi(spec, x):
    x = _check_domain(x)
    if spec.family == "classic_small_bid":
        out = (_E - np.exp(1.0 - x)) / (_E - 1.0)
    else:
        out = 1.0 - _varphi_raw(spec, 1.0 - x)
    return _scalar_or_array(x, out)


def varphi_deriv(spec, order, x):
    """``order``-th derivative of varphi (order >= 1)."""
    if order < 1:
        raise UnsupportedOrder("derivative order must be >= 1")
    if order > MAX_ORDER:
        raise UnsupportedOrder(f"order {order} exceeds cap {MAX_ORDER}")
    x = _check_domain(x)
    fam = spec.family
    if fam == "constant_one":
        out = np.zeros_like(x)
    elif fam == "exponential":
        out = spec.C * spec.theta**order * np.exp(spec.theta * x)
    elif fam == "polynomial":
        out = np.zeros_like(x)
        for j, c in enumerate(spec.coeffs, start=1):
            if j >= order:
                out = out + c * _falling(j, order) * x ** (j - order)
    elif fam == "classic_small_bid":
        out = np.exp(x) / (_E - 1.0)
    else:
        raise ValueError(fam)
    return _scalar_or_array(x, out)


def varphi_nth(spec, order, x):
    """varphi for order 0, its derivatives otherwise."""
    return varphi(spec, x) if order == 0 else varphi_deriv(spec, order, x)


def varphi_increment(spec, order, y):
    """``varphi^{(order)}(y) - varphi^{(order)}(0)`` without cancellation for small y."""
    if order > MAX_ORDER:
        raise UnsupportedOrder(f"order {order} exceeds cap {MAX_ORDER}")
    y = _check_domain(y)
    fam = spec.family
    if fam == "constant_one":
        out = np.zeros_like(y)
    elif fam == "exponential":
        out = spec.C * spec.theta**order * np.expm1(spec.theta * y)
    elif fam == "polynomial":
        out = np.zeros_like(y)
        for j, c in enumerate(spec.coeffs, start=1):
            if j > order:
                out = out + c * _falling(j, order) * y ** (j - order)
    elif fam == "classic_small_bid":
        out = np.expm1(y) / (_E - 1.0)
    else:
        raise ValueError(fam)
    return _scalar_or_array(y, out)


def varphi_antideriv(spec, y):
    """``int_0^y varphi(x) dx``."""
    y = _check_domain(y)
    fam = spec.family
    if fam == "constant_one":
        out = np.zeros_like(y)
    elif fam == "exponential":
        th = spec.theta
        if th == 0.0:
            out = np.zeros_like(y)
        else:
            # C (e^{th y} - 1 - th y) / th, written to keep precision near y=0
            out = spec.C * (np.expm1(th * y) - th * y) / th
    elif fam == "polynomial":
        out = np.zeros_like(y)
        for j, c in enumerate(spec.coeffs, start=1):
            out = out + c * y ** (j + 1) / (j + 1)
    elif fam == "classic_small_bid":
        out = (np.expm1(y) - y) / (_E - 1.0)
    else:
        raise ValueError(fam)
    return _scalar_or_array(y, out)


@dataclass(frozen=True)
class SpecViolation:
    code: str
    detail: str


def validate_spec(spec, grid_points=2001):
    """Check range, monotonicity and the family constraints.

    Returns a (possibly empty) list of :class:`SpecViolation`; never raises.
    """
    out = []
    fam = spec.family
    if fam == "exponential":
        if spec.C < 0:
            out.append(SpecViolation("NegativeC", f"C={spec.C}"))
        if not 0.0 < spec.theta <= 1.0:
            out.append(SpecViolation("ThetaOutOfRange", f"theta={spec.theta} not in (0, 1]"))
        top = spec.C * math.expm1(spec.theta)
        if top > 1.0 + 1e-12:
            out.append(SpecViolation("RangeExceeded", f"varphi(1)=C(e^theta-1)={top:.6g} > 1"))
    elif fam == "polynomial":
        total = sum(spec.coeffs)
        if total > 1.0 + 1e-12:
            out.append(SpecViolation("SumExceedsOne", f"sum C_j={total:.6g} > 1"))
        x = np.linspace(0.0, 1.0, grid_points)
        for i in range(0, (spec.degree or 0) + 1):
            vals = varphi_nth(spec, i, x)
            if np.min(vals) < -1e-12:
                out.append(SpecViolation("NegativeDerivative", f"varphi^({i}) < 0 on [0,1]"))
                break
    elif fam not in ("constant_one", "classic_small_bid"):
        out.append(SpecViolation("UnknownFamily", fam))
        return out

    x = np.linspace(0.0, 1.0, grid_points)
    try:
        p = phi(spec, x)
        v = varphi(spec, x)
    except (DomainError, ValueError) as exc:  # pragma: no cover
        out.append(SpecViolation("EvaluationError", str(exc)))
        return out
    if np.min(p) < -1e-12 or np.max(p) > 1.0 + 1e-12:
        if not any(o.code == "RangeExceeded" for o in out):
            out.append(SpecViolation("RangeExceeded", "phi leaves [0, 1] on the grid"))
    if np.any(np.diff(v) < -1e-12):
        out.append(SpecViolation("NotMonotone", "varphi decreases somewhere on [0, 1]"))
    return out
