"""The online matching loop: discounted-score selection, with or without
fractional last matching (FLM)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .discounting import DiscountSpec, phi

SKIP = -1
BUDGET_TOL = 1e-12


@dataclass(frozen=True)
class RunTrace:
    """Round-by-round record of one online run.

    ``decisions[t]`` is the selected node or ``SKIP`` (-1).  ``budgets_after``
    and ``consumed`` are (V, U) arrays.  ``scores`` holds the winning score of
    each round (0 on skips).
    """

    decisions: np.ndarray
    rewards: np.ndarray
    budgets_after: np.ndarray
    consumed: np.ndarray
    scores: np.ndarray
    flm: bool
    tol: float
    spec: DiscountSpec | None = None

    @property
    def total_reward(self):
        return float(self.rewards.sum())

    P = total_reward

    def budgets_before(self, budgets):
        """(V, U) remaining budgets at the start of each round."""
        B = np.asarray(budgets, dtype=np.float64)
        if len(self.decisions) == 0:
            return np.empty((0, B.size))
        return np.vstack([B[None, :], self.budgets_after[:-1]])


def score(spec, w, b, B, flm=False, tol=BUDGET_TOL):
    """Discounted score of one node for one bid."""
    if w <= 0:
        return 0.0
    f = phi(spec, min(max(b / B, 0.0), 1.0))
    if b >= w - tol:
        return w * f
    return b * f if flm else 0.0


def _trace_from_kernel(instance, out, flm, tol, spec):
    decisions, rewards, scores, budgets_after = out
    B = instance.budget_array
    return RunTrace(
        decisions=decisions,
        rewards=rewards,
        budgets_after=budgets_after,
        consumed=B[None, :] - budgets_after,
        scores=scores,
        flm=bool(flm),
        tol=tol,
        spec=spec,
    )


def run_metaad(instance, spec, flm=False, strict=False, loop=None):
    """Run the discounted-score algorithm on ``instance``.

    Each round scores every bidding node by ``w * phi(b / B)`` (under FLM an
    insufficient node scores ``b * phi(b / B)`` instead), picks the lowest-index
    argmax, and skips when the best score is not positive.  ``strict`` turns
    off the budget tolerance.
    """
    tol = 0.0 if strict else BUDGET_TOL
    loop = loop or kernels.online_loop
    W = np.ascontiguousarray(instance.bids)
    B = np.ascontiguousarray(instance.budget_array)
    out = loop(W, B, spec.kind, spec.kernel_params(), bool(flm), tol)
    return _trace_from_kernel(instance, out, flm, tol, spec)


def run_greedy(instance, flm=False, strict=False):
    return run_metaad(instance, DiscountSpec.constant_one(), flm=flm, strict=strict)
