"""Learning-augmented matching: predictions projected onto a competitive set.

Each round, a prediction ``z`` for every bidding node with enough budget is
clamped into an interval that keeps the exponential-discount dual certificate
valid, and the node scores ``w (1 - z)``.  The slackness ``lam`` in [0, 1]
sizes the interval: ``lam = 1`` pins it down hardest, ``lam = 0`` removes it
(predictions are used as is).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .online import BUDGET_TOL, SKIP, RunTrace

INTERVAL_TOL = 1e-12


class EmptyInterval(AssertionError):
    pass


class LambdaZero(ValueError):
    pass


class PredictionMissing(KeyError):
    def __init__(self, u, t):
        self.u, self.t = u, t
        super().__init__(f"no prediction for u={u}, t={t}")


def rho(theta):
    return -math.expm1(-theta)


def delta(theta, w, b, B):
    """Extra dual increment of the selected node, exact for the exponential discount."""
    x = w / B
    return math.exp(theta * (1.0 - b / B)) / math.expm1(theta) * (math.expm1(theta * x) - x)


def _target(theta, b, B):
    # normalized dual value the node must reach once its budget drops to b
    return math.expm1(theta * (1.0 - b / B)) / math.expm1(theta)


def feasible_interval(alpha_prev, w, b, B, theta, lam):
    """Interval of prediction values that keep the certificate valid."""
    if lam == 0:
        raise LambdaZero("lambda = 0 leaves predictions unconstrained")
    lr = lam * rho(theta)
    hi = 1.0 - lr * (1.0 - alpha_prev)
    need = _target(theta, b - w, B) - alpha_prev - delta(theta, w, b, B)
    lo = max(0.0, lr * B / w * need)
    if lo > hi + INTERVAL_TOL:
        raise EmptyInterval(f"[{lo}, {hi}] for alpha_prev={alpha_prev}, w={w}, b={b}, B={B}")
    return lo, max(lo, hi)


def project(z_tilde, interval):
    lo, hi = interval
    return min(max(z_tilde, lo), hi)


def reference_prediction(lam1, theta, b, B):
    return lam1 * rho(theta) * math.exp(theta * (1.0 - b / B)) / math.expm1(theta)


# predictors ------------------------------------------------------------------


class Predictor:
    name = "predictor"

    def __call__(self, t, u, w, b, B, theta):
        raise NotImplementedError

    def check(self, instance):
        """Raise PredictionMissing if a needed value is unavailable."""


@dataclass
class Constant(Predictor):
    z: float

    @property
    def name(self):
        return f"const:{self.z:g}"

    def __post_init__(self):
        if not self.z >= 0:
            raise ValueError("prediction must be non-negative")

    def __call__(self, t, u, w, b, B, theta):
        return self.z


class AdversarialZero(Constant):
    def __init__(self):
        super().__init__(0.0)

    name = "adv0"


class AdversarialOne(Constant):
    def __init__(self):
        super().__init__(1.0)

    name = "adv1"


@dataclass
class ReferencePolicy(Predictor):
    lam1: float

    @property
    def name(self):
        return f"ref:{self.lam1:g}"

    def __call__(self, t, u, w, b, B, theta):
        return reference_prediction(self.lam1, theta, b, B)


@dataclass
class FileStream(Predictor):
    """Predictions from a CSV file with header ``t,u,z``."""

    path: str
    values: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        with open(self.path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or set(reader.fieldnames) < {"t", "u", "z"}:
                raise ValueError(f"{self.path}: expected header t,u,z")
            for row in reader:
                z = float(row["z"])
                if z < 0:
                    raise ValueError(f"{self.path}: negative prediction at t={row['t']}, u={row['u']}")
                self.values[(int(row["t"]), int(row["u"]))] = z

    @property
    def name(self):
        return f"file:{self.path}"

    def check(self, instance):
        for t, arr in enumerate(instance.arrivals):
            for u in arr:
                if (t, u) not in self.values:
                    raise PredictionMissing(u, t)

    def __call__(self, t, u, w, b, B, theta):
        try:
            return self.values[(t, u)]
        except KeyError:
            raise PredictionMissing(u, t) from None


def parse_predictor(text):
    """Parse ``file:<path> | const:<v> | ref:<lam1> | adv0 | adv1``."""
    if text == "adv0":
        return AdversarialZero()
    if text == "adv1":
        return AdversarialOne()
    kind, _, arg = text.partition(":")
    if kind == "const":
        return Constant(float(arg))
    if kind == "ref":
        return ReferencePolicy(float(arg))
    if kind == "file":
        return FileStream(arg)
    raise ValueError(f"unknown predictor {text!r}")


# the run -------------------------------------------------------------------------


@dataclass
class LobmState:
    theta: float
    lam: float
    alpha: np.ndarray  # final, after the adjustment for exhausted nodes
    alpha_t: np.ndarray  # (V, U) before the adjustment
    beta: np.ndarray
    deltas: np.ndarray  # per round, B * delta of the selected node
    insufficient: np.ndarray  # (V, U) bool
    consulted: int = 0
    clamped: int = 0
    empty_intervals: int = 0
    reference_misses: int = 0

    @property
    def rho(self):
        return rho(self.theta)

    @property
    def insufficient_nodes(self):
        return tuple(int(u) for u in np.flatnonzero(self.insufficient.any(axis=0)))

    @property
    def clamp_rate(self):
        return self.clamped / self.consulted if self.consulted else 0.0

    @property
    def D(self):
        B = self.budgets
        return float(B @ self.alpha + self.beta.sum())

    budgets: np.ndarray = None


def run_lobm(instance, theta, lam, predictor, strict=False, raise_on_empty=True, reference_check=None):
    """Run the projected-prediction algorithm.

    ``reference_check`` may be a list of slackness values; at every consulted
    interval the reference prediction for each of them is tested for
    membership and misses are counted in ``state.reference_misses``.
    """
    if theta <= 0 or not 0.0 <= lam <= 1.0:
        raise ValueError(f"need theta > 0 and lambda in [0, 1], got {theta}, {lam}")
    predictor.check(instance)
    tol = 0.0 if strict else BUDGET_TOL
    W = instance.bids
    B = instance.budget_array
    V, U = W.shape
    b = B.copy()
    alpha = np.zeros(U)
    dual = lam > 0
    lr = lam * rho(theta)

    decisions = np.full(V, SKIP, dtype=np.int64)
    rewards = np.zeros(V)
    scores = np.zeros(V)
    budgets_after = np.empty((V, U))
    alpha_t = np.zeros((V, U))
    beta = np.zeros(V)
    deltas = np.zeros(V)
    insufficient = np.zeros((V, U), dtype=bool)
    st = LobmState(theta, lam, alpha, alpha_t, beta, deltas, insufficient, budgets=B.copy())

    z_sel = np.zeros(U)
    for t in range(V):
        best, arg = 0.0, SKIP
        for u in np.flatnonzero(W[t] > 0):
            w = W[t, u]
            if b[u] < w - tol:
                insufficient[t, u] = True
                continue
            zt = predictor(t, int(u), w, b[u], B[u], theta)
            if dual:
                st.consulted += 1
                try:
                    iv = feasible_interval(alpha[u], w, b[u], B[u], theta, lam)
                except EmptyInterval:
                    if raise_on_empty:
                        raise
                    st.empty_intervals += 1
                    lo = lr * B[u] / w * (_target(theta, b[u] - w, B[u]) - alpha[u] - delta(theta, w, b[u], B[u]))
                    iv = (lo, lo)
                z = project(zt, iv)
                if abs(z - zt) > INTERVAL_TOL:
                    st.clamped += 1
                for lam1 in reference_check or ():
                    zr = reference_prediction(lam1, theta, b[u], B[u])
                    if not iv[0] - 1e-9 <= zr <= iv[1] + 1e-9:
                        st.reference_misses += 1
            else:
                z = zt
            s = w * (1.0 - z)
            z_sel[u] = z
            if s > best:
                best, arg = s, int(u)
        if arg != SKIP:
            w = W[t, arg]
            decisions[t] = arg
            rewards[t] = w
            scores[t] = best
            if dual:
                beta[t] = best / lr
                d = delta(theta, w, b[arg], B[arg])
                deltas[t] = B[arg] * d
                alpha[arg] += w * z_sel[arg] / (lr * B[arg]) + d
            b[arg] = max(b[arg] - w, 0.0)
        budgets_after[t] = b
        alpha_t[t] = alpha

    if dual:
        st.alpha = np.where(insufficient.any(axis=0), 1.0, alpha)
    else:
        st.alpha = np.zeros(U)
    trace = RunTrace(decisions, rewards, budgets_after, B[None, :] - budgets_after, scores, False, tol, None)
    return trace, st


def check_lobm_duals(instance, state, tol=1e-9):
    """Edges where beta_t < w (1 - alpha_u) beyond ``tol``."""
    W = instance.bids
    slack = state.beta[:, None] - W * (1.0 - state.alpha[None, :])
    bad = np.argwhere((W > 0) & (slack < -tol))
    return [(int(u), int(t), float(state.beta[t]), float(W[t, u] * (1.0 - state.alpha[u]))) for t, u in bad]


def accounting_gap(trace, state):
    """Largest |D_t - P_t/(lam rho) - sum B delta| over rounds."""
    if not len(trace.rewards) or state.lam == 0:
        return 0.0
    D_t = state.alpha_t @ state.budgets + np.cumsum(state.beta)
    rhs = np.cumsum(trace.rewards) / (state.lam * state.rho) + np.cumsum(state.deltas)
    return float(np.abs(D_t - rhs).max())
