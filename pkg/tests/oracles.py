"""Independent reference computations used as test oracles.

Nothing here imports solver or learner code from ``whittleq``; the
package is only used for model construction in the callers.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.sparse.csgraph import connected_components


# ----------------------------------------------------------------------------
# exhaustive stationary-policy enumeration


def _closed_classes(p: np.ndarray) -> list:
    adj = p > 0
    n, labels = connected_components(adj, directed=True, connection="strong")
    out = []
    for c in range(n):
        members = labels == c
        if not adj[np.ix_(members, ~members)].any():
            out.append(np.flatnonzero(members))
    return out


def stationary(p: np.ndarray) -> np.ndarray:
    """Stationary distribution of an irreducible stochastic matrix."""
    d = p.shape[0]
    a = np.vstack([p.T - np.eye(d), np.ones(d)])
    b = np.zeros(d + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    return pi


def policy_gain(p: np.ndarray, r: np.ndarray) -> float:
    """Best long-run average reward of a fixed-policy chain over its closed classes."""
    best = -np.inf
    for cls in _closed_classes(p):
        sub = p[np.ix_(cls, cls)]
        best = max(best, float(stationary(sub) @ r[cls]))
    return best


def brute_force_gain(p0, p1, r0, r1, lam: float) -> float:
    """Optimal average reward at subsidy ``lam`` by trying every stationary policy.

    For a weakly communicating chain the optimal gain is constant and
    equals the best gain of any closed class under any policy.
    """
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    r0, r1 = np.asarray(r0, float) + lam, np.asarray(r1, float)
    d = p0.shape[0]
    best = -np.inf
    for phi in itertools.product((0, 1), repeat=d):
        phi = np.array(phi)
        p = np.where(phi[:, None] == 1, p1, p0)
        r = np.where(phi == 1, r1, r0)
        best = max(best, policy_gain(p, r))
    return best


def priority_index(p0, p1, r0, r1, priority, k: int, lo=-5.0, hi=5.0) -> float:
    """Index of state ``k`` for an arm whose indices follow ``priority``.

    ``priority`` lists 0-based states from lowest to highest index. The
    index of ``k`` is the subsidy at which the threshold policy that
    activates ``k`` and every higher-priority state earns the same
    average reward as the one that leaves ``k`` passive. Root found by
    brentq on exact stationary-distribution gains. Needs a unichain arm.
    """
    from scipy.optimize import brentq

    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    r0, r1 = np.asarray(r0, float), np.asarray(r1, float)
    rank = list(priority).index(k)
    above = list(priority)[rank + 1:]

    def gain(lam, active):
        phi = np.zeros(p0.shape[0], dtype=int)
        phi[list(active)] = 1
        p = np.where(phi[:, None] == 1, p1, p0)
        return float(stationary(p) @ np.where(phi == 1, r1, r0 + lam))

    return brentq(lambda lam: gain(lam, above + [k]) - gain(lam, above), lo, hi, xtol=1e-14)


def random_model(rng: np.random.Generator, d: int):
    """Dense random kernels and rewards as plain arrays."""
    p0 = rng.dirichlet(np.ones(d), size=d)
    p1 = rng.dirichlet(np.ones(d), size=d)
    r0 = rng.uniform(-1, 1, d)
    r1 = rng.uniform(-1, 1, d)
    return p0, p1, r0, r1


# ----------------------------------------------------------------------------
# straight-line simulation of the coupled learner


def reference_trace(p0, p1, r0, r1, n_arms, budget, epsilon, C, C_prime, gate, seed, steps):
    """Plain-Python replay of a homogeneous learning run.

    Consumes the generator exactly as documented for the harness: ``N``
    uniforms for the initial states, then one row of ``2N + 1`` uniforms
    per step holding the exploration coin, ``N`` subset keys and ``N``
    transition draws. Returns per-step totals, per-step index estimates
    and the final Q-table as nested lists ``Q[i][u][k]``.
    """
    d = len(r0)
    rng = np.random.default_rng(seed)
    init = rng.random(n_arms)
    x = [int(math.floor(v * d)) for v in init]
    cdf = {}
    for u, p in ((0, p0), (1, p1)):
        for i in range(d):
            acc, row = 0.0, []
            for v in p[i]:
                acc = acc + float(v)
                row.append(acc)
            cdf[u, i] = row
    rew = [[float(r0[i]), float(r1[i])] for i in range(d)]
    Q = [[[rew[i][u] for _k in range(d)] for u in range(2)] for i in range(d)]
    lam = [0.0] * d
    nu = [[0, 0] for _ in range(d)]
    totals, lam_hist = [], []

    for n in range(steps):
        row = rng.random(2 * n_arms + 1).tolist()
        coin, keys, draws = row[0], row[1:1 + n_arms], row[1 + n_arms:]
        if coin < epsilon:
            order = sorted(range(n_arms), key=lambda a: (keys[a], a))
        else:
            order = sorted(range(n_arms), key=lambda a: (-lam[x[a]], a))
        act = [0] * n_arms
        for a in order[:budget]:
            act[a] = 1

        total = 0.0
        nxt = []
        for a in range(n_arms):
            total = total + rew[x[a]][act[a]]
            c = cdf[act[a], x[a]]
            j = sum(1 for v in c if v <= draws[a])
            nxt.append(min(j, d - 1))
        totals.append(total)

        for a in range(n_arms):
            i, u, j = x[a], act[a], nxt[a]
            step = C / math.ceil(max(nu[i][u], 1) / 500)
            for k in range(d):
                s = 0.0
                for ii in range(d):
                    s = s + (Q[ii][0][k] + Q[ii][1][k])
                f = s / (2 * d)
                best = max(Q[j][0][k], Q[j][1][k])
                target = (1 - u) * (rew[i][0] + lam[k]) + u * rew[i][1] + best - f - Q[i][u][k]
                Q[i][u][k] = Q[i][u][k] + step * target
            nu[i][u] += 1

        if n % gate == 0:
            nlogn = n * math.log(n) if n > 1 else 0.0
            b = C_prime / (1 + math.ceil(nlogn / 500))
            for k in range(d):
                lam[k] = lam[k] + b * (Q[k][1][k] - Q[k][0][k])
        lam_hist.append(list(lam))
        x = nxt
    return totals, lam_hist, Q
