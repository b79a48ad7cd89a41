"""Hot loops: the online scoring loop, exact branch-and-bound, brute force.

Each loop has a numba version and a numpy version.  The public names
(``online_loop``, ``bnb_search``, ``brute_force_search``) point at the numba
versions unless ``METAAD_DISABLE_NUMBA=1`` is set.  Both versions are always
importable so tests and the benchmark can compare them.
"""
import math

import numpy as np

from ._accel import USING_NUMBA, njit
from .discounting import KIND_CONSTANT_ONE, KIND_EXPONENTIAL, KIND_POLYNOMIAL

_E = math.e


# discounting, scalar -----------------------------------------------------


@njit
def phi_scalar(kind, params, x):
    if kind == KIND_CONSTANT_ONE:
        return 1.0
    if kind == KIND_EXPONENTIAL:
        return 1.0 - params[0] * math.expm1(params[1] * (1.0 - x))
    if kind == KIND_POLYNOMIAL:
        y = 1.0 - x
        acc = 0.0
        p = 1.0
        for j in range(params.shape[0]):
            p *= y
            acc += params[j] * p
        return 1.0 - acc
    # classic small-bid
    return (_E - math.exp(1.0 - x)) / (_E - 1.0)


def phi_vec(kind, params, x):
    x = np.asarray(x, dtype=np.float64)
    if kind == KIND_CONSTANT_ONE:
        return np.ones_like(x)
    if kind == KIND_EXPONENTIAL:
        return 1.0 - params[0] * np.expm1(params[1] * (1.0 - x))
    if kind == KIND_POLYNOMIAL:
        y = 1.0 - x
        acc = np.zeros_like(x)
        p = np.ones_like(x)
        for c in params:
            p = p * y
            acc = acc + c * p
        return 1.0 - acc
    return (_E - np.exp(1.0 - x)) / (_E - 1.0)


# online loop ---------------------------------------------------------------


@njit
def _online_nb(W, B, kind, params, flm, tol):
    V, U = W.shape
    b = B.copy()
    decisions = np.full(V, -1, dtype=np.int64)
    rewards = np.zeros(V)
    best_scores = np.zeros(V)
    budgets_after = np.empty((V, U))
    for t in range(V):
        best = 0.0
        arg = -1
        for u in range(U):
            w = W[t, u]
            if w <= 0.0:
                continue
            if b[u] >= w - tol:
                s = w * phi_scalar(kind, params, b[u] / B[u])
            elif flm:
                s = b[u] * phi_scalar(kind, params, b[u] / B[u])
            else:
                s = 0.0
            if s > best:
                best = s
                arg = u
        if arg >= 0:
            w = W[t, arg]
            r = min(w, b[arg]) if flm else w
            decisions[t] = arg
            rewards[t] = r
            best_scores[t] = best
            b[arg] = max(b[arg] - r, 0.0)
        for u in range(U):
            budgets_after[t, u] = b[u]
    return decisions, rewards, best_scores, budgets_after


def _online_np(W, B, kind, params, flm, tol):
    V, U = W.shape
    b = np.array(B, dtype=np.float64)
    decisions = np.full(V, -1, dtype=np.int64)
    rewards = np.zeros(V)
    best_scores = np.zeros(V)
    budgets_after = np.empty((V, U))
    for t in range(V):
        w = W[t]
        f = phi_vec(kind, params, b / B)
        suff = b >= w - tol
        s = np.where(suff, w * f, b * f if flm else 0.0)
        s = np.where(w > 0.0, s, 0.0)
        u = int(np.argmax(s))  # first maximum, i.e. lowest index
        if s[u] > 0.0:
            r = min(w[u], b[u]) if flm else w[u]
            decisions[t] = u
            rewards[t] = r
            best_scores[t] = s[u]
            b[u] = max(b[u] - r, 0.0)
        budgets_after[t] = b
    return decisions, rewards, best_scores, budgets_after


# exact search ---------------------------------------------------------------


@njit
def _bnb_nb(W, cand, ncand, same, flm, tol, b, node, amt, bprev, vstack, nxt, ch, istate, fstate, best_node, max_nodes):
    """Resumable depth-first branch-and-bound.

    ``istate = [t, done]``, ``fstate = [value, best]``.  Children of round t
    are its candidate nodes in descending bid order, then skip.  Within a run
    of identical consecutive rounds the child index is forced non-decreasing.
    Returns the number of search nodes visited in this call.
    """
    V, U = W.shape
    t = istate[0]
    value = fstate[0]
    best = fstate[1]
    S = np.zeros(U)
    explored = 0
    while explored < max_nodes:
        if nxt[t] == -1:
            explored += 1
            prune = False
            if t == V:
                if value > best:
                    best = value
                    for k in range(V):
                        best_node[k] = node[k]
                prune = True
            else:
                ub1 = 0.0
                for k in range(U):
                    S[k] = 0.0
                for tau in range(t, V):
                    m = 0.0
                    for k in range(ncand[tau]):
                        u = cand[tau, k]
                        w = W[tau, u]
                        if flm:
                            if b[u] <= tol:
                                continue
                            g = min(w, b[u])
                        else:
                            if w > b[u] + tol:
                                continue
                            g = w
                        S[u] += g
                        if g > m:
                            m = g
                    ub1 += m
                ub2 = 0.0
                for u in range(U):
                    ub2 += min(b[u], S[u])
                ub = min(ub1, ub2)
                prune = value + ub <= best + 1e-12
            if prune:
                nxt[t] = -1
                if t == 0:
                    istate[1] = 1
                    break
                t -= 1
                if node[t] >= 0:
                    b[node[t]] = bprev[t]
                value = vstack[t]
                continue
            if t > 0 and same[t]:
                nxt[t] = ch[t - 1]
            else:
                nxt[t] = 0
        c = nxt[t]
        if c > ncand[t]:
            nxt[t] = -1
            if t == 0:
                istate[1] = 1
                break
            t -= 1
            if node[t] >= 0:
                b[node[t]] = bprev[t]
            value = vstack[t]
            continue
        nxt[t] = c + 1
        vstack[t] = value
        if c < ncand[t]:
            u = cand[t, c]
            w = W[t, u]
            if flm:
                if b[u] <= tol:
                    continue
                a = min(w, b[u])
            else:
                if w > b[u] + tol:
                    continue
                a = w
            bprev[t] = b[u]
            b[u] = max(b[u] - a, 0.0)
            value += a
            node[t] = u
            amt[t] = a
        else:
            node[t] = -1
            amt[t] = 0.0
        ch[t] = c
        t += 1
        nxt[t] = -1
    istate[0] = t
    fstate[0] = value
    fstate[1] = best
    return explored


_bnb_py = getattr(_bnb_nb, "py_func", _bnb_nb)


class BnBState:
    """Mutable search state so the kernel can run in node-count chunks."""

    def __init__(self, W, B, flm, tol, incumbent_value, incumbent_nodes):
        V, U = W.shape
        self.W = np.ascontiguousarray(W, dtype=np.float64)
        self.flm = bool(flm)
        self.tol = float(tol)
        order = np.argsort(-self.W, axis=1, kind="stable")
        self.ncand = (self.W > 0).sum(axis=1).astype(np.int64)
        self.cand = np.ascontiguousarray(order, dtype=np.int64) if U else np.zeros((V, 1), dtype=np.int64)
        same = np.zeros(V, dtype=np.bool_)
        if V > 1:
            same[1:] = np.all(self.W[1:] == self.W[:-1], axis=1)
        self.same = same
        self._B0 = np.array(B, dtype=np.float64)
        self.b = self._B0.copy()
        self.node = np.full(V + 1, -1, dtype=np.int64)
        self.amt = np.zeros(V + 1)
        self.bprev = np.zeros(V + 1)
        self.vstack = np.zeros(V + 1)
        self.nxt = np.full(V + 1, -1, dtype=np.int64)
        self.ch = np.zeros(V + 1, dtype=np.int64)
        self.istate = np.zeros(2, dtype=np.int64)
        self.fstate = np.array([0.0, incumbent_value])
        self.best_node = np.array(incumbent_nodes, dtype=np.int64)
        self.explored = 0

    @property
    def done(self):
        return bool(self.istate[1])

    @property
    def best(self):
        return float(self.fstate[1])

    def step(self, max_nodes, kernel=None):
        kernel = kernel or bnb_search
        n = kernel(
            self.W, self.cand, self.ncand, self.same, self.flm, self.tol, self.b, self.node, self.amt,
            self.bprev, self.vstack, self.nxt, self.ch, self.istate, self.fstate, self.best_node, int(max_nodes),
        )
        self.explored += int(n)
        return n

    def root_bound(self):
        """Bound on the optimum from the initial budgets; valid whatever the search state."""
        B = self._B0
        W = self.W
        if self.flm:
            g = np.minimum(W, B[None, :])
        else:
            g = np.where(W <= B[None, :] + self.tol, W, 0.0)
        return float(min(g.max(axis=1, initial=0).sum(), np.minimum(B, g.sum(axis=0)).sum()))


# brute force ------------------------------------------------------------------


@njit
def _brute_nb(W, B, flm, tol):
    V, U = W.shape
    K = U + 1
    total = 1
    for _ in range(V):
        total *= K
    digits = np.zeros(V, dtype=np.int64)
    load = np.zeros(U)
    best = 0.0
    best_digits = np.full(V, U, dtype=np.int64)
    for idx in range(total):
        r = idx
        for t in range(V):
            digits[t] = r % K
            r //= K
        for u in range(U):
            load[u] = 0.0
        ok = True
        for t in range(V):
            u = digits[t]
            if u < U:
                w = W[t, u]
                if w <= 0.0:
                    ok = False
                    break
                load[u] += w
        if not ok:
            continue
        val = 0.0
        for u in range(U):
            if flm:
                val += min(load[u], B[u])
            else:
                if load[u] > B[u] + tol:
                    ok = False
                    break
                val += load[u]
        if ok and val > best:
            best = val
            for t in range(V):
                best_digits[t] = digits[t]
    return best, best_digits


def _brute_np(W, B, flm, tol, block=1 << 16):
    V, U = W.shape
    K = U + 1
    total = K**V
    Wpad = np.concatenate([W, np.zeros((V, 1))], axis=1)
    valid = np.concatenate([W > 0, np.ones((V, 1), dtype=bool)], axis=1)
    powers = K ** np.arange(V, dtype=np.int64)
    best = 0.0
    best_digits = np.full(V, U, dtype=np.int64)
    rows = np.arange(V)
    for start in range(0, total, block):
        idx = np.arange(start, min(total, start + block), dtype=np.int64)
        digits = (idx[:, None] // powers[None, :]) % K
        ok = valid[rows[None, :], digits].all(axis=1)
        bids = Wpad[rows[None, :], digits]
        load = np.zeros((idx.size, K))
        np.add.at(load, (np.repeat(np.arange(idx.size), V), digits.ravel()), bids.ravel())
        load = load[:, :U]
        if flm:
            val = np.minimum(load, B[None, :]).sum(axis=1)
        else:
            ok &= (load <= B[None, :] + tol).all(axis=1)
            val = load.sum(axis=1)
        val = np.where(ok, val, -1.0)
        k = int(np.argmax(val))
        if val[k] > best:
            best = float(val[k])
            best_digits = digits[k].copy()
    return best, best_digits


if USING_NUMBA:
    online_loop = _online_nb
    bnb_search = _bnb_nb
    brute_force_search = _brute_nb
else:
    online_loop = _online_np
    bnb_search = _bnb_py
    brute_force_search = _brute_np
