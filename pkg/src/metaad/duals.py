"""Dual certificates for online runs.

Along a run the per-node dual tracks ``varphi`` of the consumed budget
fraction and the per-round dual is the winning score.  A final adjustment
covers nodes that ran out of budget.  The checks here verify dual
feasibility (so the dual objective bounds the offline optimum) and the
primal-dual ratio.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .discounting import phi, varphi, varphi_increment, varphi_antideriv, varphi_nth
from .online import SKIP

FEAS_TOL = 1e-9


class TraceMismatch(ValueError):
    pass


@dataclass
class DualTrace:
    alpha_t: np.ndarray  # (V, U)
    beta: np.ndarray  # (V,)
    insufficient: np.ndarray  # (V, U) bool
    alpha_final: np.ndarray  # (U,)
    budgets: np.ndarray
    flm: bool
    certified: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def insufficient_nodes(self):
        return tuple(int(u) for u in np.flatnonzero(self.insufficient.any(axis=0)))

    @property
    def insufficient_rounds(self):
        return tuple(int(t) for t in np.flatnonzero(self.insufficient.any(axis=1)))

    @property
    def D(self):
        return float(self.budgets @ self.alpha_final + self.beta.sum())

    def running_D(self):
        """Dual objective after each round, before the final adjustment."""
        if len(self.beta) == 0:
            return np.zeros(0)
        return self.alpha_t @ self.budgets + np.cumsum(self.beta)


def _check_trace(instance, trace):
    V, U = instance.V, instance.U
    if trace.decisions.shape != (V,) or trace.budgets_after.shape != (V, U):
        raise TraceMismatch(f"trace shape does not match instance ({V} rounds, {U} nodes)")
    W = instance.bids
    before = trace.budgets_before(instance.budget_array)
    expected = before.copy()
    for t, u in enumerate(trace.decisions):
        if u == SKIP:
            continue
        if W[t, u] <= 0:
            raise TraceMismatch(f"round {t} selects node {u} which has no bid")
        charge = min(W[t, u], before[t, u]) if trace.flm else W[t, u]
        expected[t, u] = max(before[t, u] - charge, 0.0)
    bad = np.abs(expected - trace.budgets_after) > 1e-9
    if bad.any():
        t, u = np.argwhere(bad)[0]
        raise TraceMismatch(f"budget of node {u} after round {t} is inconsistent with the bids")


def construct_duals(instance, spec, trace, flm=None):
    flm = trace.flm if flm is None else bool(flm)
    if flm != trace.flm:
        raise TraceMismatch("flm flag differs from the one used for the run")
    _check_trace(instance, trace)
    B = instance.budget_array
    W = instance.bids
    V, U = W.shape
    frac = np.clip(trace.consumed / B[None, :], 0.0, 1.0) if V else np.zeros((0, U))
    alpha_t = np.asarray(varphi(spec, frac)).reshape(V, U)
    beta = np.where(trace.decisions == SKIP, 0.0, trace.scores)
    before = trace.budgets_before(B)
    insufficient = (W > 0) & (before < W - trace.tol)
    alpha_V = alpha_t[-1].copy() if V else np.zeros(U)
    if not flm:
        alpha_final = np.where(insufficient.any(axis=0), 1.0, alpha_V)
    else:
        alpha_final = alpha_V.copy()
        ts, us = np.nonzero(insufficient)
        for t, u in zip(ts, us):
            b = before[t, u]
            cand = 1.0 - b / W[t, u] * phi(spec, min(max(b / B[u], 0.0), 1.0))
            alpha_final[u] = max(alpha_final[u], cand)
    return DualTrace(alpha_t, beta, insufficient, alpha_final, B.copy(), flm)


@dataclass(frozen=True)
class FeasibilityReport:
    violations: list  # (u, t, lhs, rhs)
    min_slack: float
    tol: float

    @property
    def passed(self):
        return not self.violations

    def __bool__(self):
        return self.passed


def check_dual_feasibility(instance, duals, tol=FEAS_TOL):
    """Check beta_t >= w_{u,t} (1 - alpha_u) on every edge."""
    W = instance.bids
    rhs = W * (1.0 - duals.alpha_final[None, :])
    lhs = np.broadcast_to(duals.beta[:, None], W.shape)
    slack = np.where(W > 0, lhs - rhs, np.inf)
    bad = np.argwhere(slack < -tol)
    violations = [(int(u), int(t), float(lhs[t, u]), float(rhs[t, u])) for t, u in bad]
    min_slack = float(slack.min()) if slack.size and np.isfinite(slack.min()) else 0.0
    if not violations:
        duals.certified = True
    return FeasibilityReport(violations, min_slack, tol)


@dataclass(frozen=True)
class RatioCheck:
    passed: bool
    gap: float  # eta * D - P; positive means P falls short

    def __bool__(self):
        return self.passed


def check_primal_dual_ratio(P, D, eta, tol=FEAS_TOL):
    gap = eta * D - P
    return RatioCheck(gap <= tol, float(gap))


def check_running_ratio(trace, duals, gamma, tol=FEAS_TOL):
    """P_t >= D_t / gamma after every round; returns the worst gap."""
    if len(trace.rewards) == 0:
        return RatioCheck(True, 0.0)
    P_t = np.cumsum(trace.rewards)
    gap = duals.running_D() / gamma - P_t
    worst = float(gap.max())
    return RatioCheck(worst <= tol, worst)


@dataclass(frozen=True)
class PhiConditionResult:
    passed: bool
    worst_violation: float
    worst_y: float

    def __bool__(self):
        return self.passed


def check_phi_condition(spec, kappa, gamma, n, step=1e-6, R=None, tol=FEAS_TOL):
    """Evaluate the discounting-function condition on a grid of y in [0, 1].

    The condition reads, for every y,
    varphi(y) - int_0^y varphi + sum_i kappa^i (varphi^(i-1)(y) - varphi^(i-1)(0))
    + (kappa^(n+1) R - gamma + 1) y <= 0.
    It is also checked in its divided-by-y form as y -> 0.
    """
    from .ratios import lipschitz_R

    R = lipschitz_R(spec, n) if R is None else R
    lin = kappa ** (n + 1) * R - gamma + 1.0
    count = int(round(1.0 / step))
    worst, worst_y = -np.inf, 0.0
    for start in range(0, count + 1, 1 << 18):
        y = np.arange(start, min(count + 1, start + (1 << 18)), dtype=np.float64) * step
        y = np.minimum(y, 1.0)
        v = np.asarray(varphi(spec, y)) - np.asarray(varphi_antideriv(spec, y)) + lin * y
        kp = 1.0
        for i in range(1, n + 1):
            kp *= kappa
            if kp == 0.0:
                break
            v = v + kp * np.asarray(varphi_increment(spec, i - 1, y))
        k = int(np.argmax(v))
        if v[k] > worst:
            worst, worst_y = float(v[k]), float(y[k])
    # slope at the origin: varphi'(0) - varphi(0) + sum kappa^i varphi^(i)(0) + lin
    slope = varphi_nth(spec, 1, 0.0) - varphi(spec, 0.0) + lin
    kp = 1.0
    for i in range(1, n + 1):
        kp *= kappa
        slope += kp * varphi_nth(spec, i, 0.0)
    if slope > tol and worst <= tol:
        # violated only in the limit: report it at the first grid step
        worst, worst_y = float(slope) * step, 0.0
    return PhiConditionResult(worst <= tol and slope <= tol, worst, worst_y)
