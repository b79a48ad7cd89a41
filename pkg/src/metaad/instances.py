"""Online budgeted matching instances: validation, generators, JSON I/O."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Violation:
    kind: str
    u: int | None = None
    t: int | None = None
    detail: str = ""

    def __str__(self):
        loc = []
        if self.u is not None:
            loc.append(f"u={self.u}")
        if self.t is not None:
            loc.append(f"t={self.t}")
        return f"{self.kind}({','.join(loc)})" + (f": {self.detail}" if self.detail else "")


class InvalidInstance(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class KappaExceedsOne(ValueError):
    def __init__(self, u, t, ratio):
        self.u, self.t, self.ratio = u, t, ratio
        super().__init__(f"bid/budget ratio {ratio:.6g} > 1 at u={u}, t={t}")


class OmegaExceedsKappa(ValueError):
    pass


class InvalidDistributionParams(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, field_name, detail=""):
        self.field = field_name
        super().__init__(f"{field_name}: {detail}" if detail else field_name)


@dataclass(frozen=True, eq=False)
class Instance:
    """Budgets for U offline nodes and V arrivals with sparse positive bids.

    Build through :func:`validate` (or the generators) so the invariants hold.
    Arrival ``t`` is a dict mapping node index to bid.
    """

    budgets: tuple
    arrivals: tuple
    meta: dict = field(default_factory=dict)

    @property
    def U(self):
        return len(self.budgets)

    @property
    def V(self):
        return len(self.arrivals)

    @cached_property
    def budget_array(self):
        a = np.asarray(self.budgets, dtype=np.float64)
        a.flags.writeable = False
        return a

    @cached_property
    def bids(self):
        """Dense (V, U) bid matrix; absent edges are 0."""
        W = np.zeros((self.V, self.U), dtype=np.float64)
        for t, arr in enumerate(self.arrivals):
            for u, w in arr.items():
                W[t, u] = w
        W.flags.writeable = False
        return W

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            tuple(self.budgets) == tuple(other.budgets)
            and len(self.arrivals) == len(other.arrivals)
            and all(dict(a) == dict(b) for a, b in zip(self.arrivals, other.arrivals))
        )

    def __hash__(self):
        return hash((self.budgets, tuple(tuple(sorted(a.items())) for a in self.arrivals)))

    @property
    def kappa(self):
        return bid_budget_ratio(self)


def check(budgets, arrivals):
    """Return the list of violations for raw data (empty when valid)."""
    out = []
    U = len(budgets)
    for u, b in enumerate(budgets):
        if not (isinstance(b, (int, float, np.floating, np.integer)) and math.isfinite(b)):
            out.append(Violation("NonFiniteBudget", u=u, detail=repr(b)))
        elif b <= 0:
            # a zero budget can never be used and breaks every w/B ratio
            out.append(Violation("NegativeBudget", u=u, detail=f"B={b}"))
    for t, arr in enumerate(arrivals):
        for u, w in arr.items():
            if not isinstance(u, (int, np.integer)) or u < 0 or u >= U:
                out.append(Violation("OutOfRangeNodeIndex", u=u, t=t))
            if not math.isfinite(w) or w <= 0:
                out.append(Violation("NonPositiveBid", u=u, t=t, detail=f"w={w}"))
    return out


def validate(budgets, arrivals, meta=None, check_kappa=True):
    """Validate raw data and build an :class:`Instance`.

    Raises :class:`InvalidInstance` listing every violation.  With
    ``check_kappa`` a bid larger than its node's budget raises
    :class:`KappaExceedsOne`.
    """
    budgets = tuple(float(b) if isinstance(b, (int, float, np.number)) else b for b in budgets)
    arrivals = [dict(a) for a in arrivals]
    violations = check(budgets, arrivals)
    if violations:
        raise InvalidInstance(violations)
    arrivals = tuple({int(u): float(w) for u, w in sorted(a.items())} for a in arrivals)
    inst = Instance(budgets, arrivals, dict(meta or {}))
    if check_kappa:
        bid_budget_ratio(inst)
    return inst


def bid_budget_ratio(instance):
    """Largest bid relative to its node's budget; 0 when there are no bids."""
    k = 0.0
    B = instance.budgets
    for t, arr in enumerate(instance.arrivals):
        for u, w in arr.items():
            r = w / B[u]
            if r > 1.0:
                raise KappaExceedsOne(u, t, r)
            k = max(k, r)
    return k


HIGH_TAIL = "HighTail"
ZERO_TAIL = "ZeroTail"


@dataclass(frozen=True)
class AdversarialParams:
    kappa: float
    m: int
    epsilon: float = 1e-6
    tail: str = HIGH_TAIL

    @property
    def omega(self):
        return (1.0 - self.kappa + self.epsilon) / self.m


def gen_adversarial(params):
    """One node with unit budget: ``m`` small rounds of bid omega, then a tail round.

    The tail bids ``kappa`` (HighTail) or nothing (ZeroTail).  The two tails
    share their prefix, so no deterministic algorithm can tell them apart
    before the last round.
    """
    if not 0.0 < params.kappa <= 1.0:
        raise ValueError(f"kappa must lie in (0, 1], got {params.kappa}")
    if params.m < 1 or params.epsilon <= 0:
        raise ValueError("m must be >= 1 and epsilon > 0")
    if params.tail not in (HIGH_TAIL, ZERO_TAIL):
        raise ValueError(f"unknown tail {params.tail!r}")
    omega = params.omega
    if omega > params.kappa:
        raise OmegaExceedsKappa(f"omega={omega:.6g} > kappa={params.kappa}")
    arrivals = [{0: omega} for _ in range(params.m)]
    arrivals.append({0: params.kappa} if params.tail == HIGH_TAIL else {})
    meta = {
        "generator": f"adversarial:{params.tail}",
        "kappa": params.kappa,
        "m": params.m,
        "epsilon": params.epsilon,
    }
    return validate([1.0], arrivals, meta)


def adversarial_pair(kappa, m, epsilon=1e-6):
    return tuple(gen_adversarial(AdversarialParams(kappa, m, epsilon, tail)) for tail in (HIGH_TAIL, ZERO_TAIL))


def _check_range(name, lo_hi):
    lo, hi = lo_hi
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise InvalidDistributionParams(f"{name}: bad range {lo_hi}")
    return float(lo), float(hi)


def gen_random(seed, U, V, degree=4.0, capacity=(20.0, 40.0), load=(1.0, 4.0), utility=(0.08, 0.12)):
    """VM-placement style random instance.

    Each arrival (a VM with load z_t) connects to a Binomial(U, degree/U) number
    of distinct servers.  Server u has per-unit utility r_u and capacity
    B'_u, so its budget is ``r_u * B'_u`` and its bid is ``r_u * z_t``, clipped
    to the budget.
    """
    if U < 1 or V < 0:
        raise InvalidDistributionParams(f"need U >= 1 and V >= 0, got U={U}, V={V}")
    if not 0.0 <= degree <= U:
        raise InvalidDistributionParams(f"degree must lie in [0, U], got {degree}")
    cap = _check_range("capacity", capacity)
    ld = _check_range("load", load)
    ut = _check_range("utility", utility)
    if cap[0] <= 0 or ld[0] <= 0 or ut[0] <= 0:
        raise InvalidDistributionParams("capacity, load and utility must be positive")

    rng = np.random.default_rng(seed)
    r = rng.uniform(*ut, size=U)
    budgets = r * rng.uniform(*cap, size=U)
    arrivals = []
    for _ in range(V):
        z = rng.uniform(*ld)
        d = rng.binomial(U, degree / U)
        nodes = np.sort(rng.choice(U, size=d, replace=False))
        arrivals.append({int(u): float(min(r[u] * z, budgets[u])) for u in nodes})
    meta = {"seed": seed, "generator": "random:vm"}
    return validate(budgets.tolist(), arrivals, meta)


def to_dict(instance):
    meta = dict(instance.meta)
    meta["kappa"] = bid_budget_ratio(instance)
    return {
        "budgets": list(instance.budgets),
        "arrivals": [{str(u): w for u, w in a.items()} for a in instance.arrivals],
        "meta": meta,
    }


def from_dict(d):
    if not isinstance(d, dict):
        raise ParseError("<root>", "expected a JSON object")
    if "budgets" not in d:
        raise ParseError("budgets", "missing")
    if "arrivals" not in d:
        raise ParseError("arrivals", "missing")
    budgets = d["budgets"]
    if not isinstance(budgets, list) or not all(isinstance(b, (int, float)) for b in budgets):
        raise ParseError("budgets", "expected a list of numbers")
    arrivals = []
    if not isinstance(d["arrivals"], list):
        raise ParseError("arrivals", "expected a list")
    for t, a in enumerate(d["arrivals"]):
        if not isinstance(a, dict):
            raise ParseError(f"arrivals[{t}]", "expected an object")
        parsed = {}
        for k, w in a.items():
            try:
                u = int(k)
            except ValueError:
                raise ParseError(f"arrivals[{t}].{k}", "key is not a decimal index") from None
            if not isinstance(w, (int, float)):
                raise ParseError(f"arrivals[{t}].{k}", "bid is not a number")
            parsed[u] = float(w)
        arrivals.append(parsed)
    meta = d.get("meta") or {}
    meta = {k: v for k, v in meta.items() if k != "kappa"}
    return validate(budgets, arrivals, meta)


def dumps(instance):
    # json emits repr() floats, which round-trip exactly
    return json.dumps(to_dict(instance), indent=1, sort_keys=False) + "\n"


def write_json(instance, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(instance))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}", exc.msg) from None
    return from_dict(d)
