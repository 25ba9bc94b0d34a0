"""Compiled inner loops.

Arrays are padded to the largest state count across classes:

    q      (n_classes, dmax, 2, dmax)   Q(i, u; k)
    lam    (n_classes, dmax)
    nu     (n_classes, dmax, 2)
    dims   (n_classes,)
    rew    (n_classes, dmax, 2)
    cdf    (n_classes, 2, dmax, dmax)

Arithmetic order of one asynchronous update (shared with the pure Python
path and relied on by the step-equivalence tests):

    f      = (sum over i ascending of (Q(i,0) + Q(i,1))) / (2 d)
    target = (1 - u) * (r(i,0) + lam) + u * r(i,1) + max(Q(j,0), Q(j,1)) - f - Q(i,u)
    Q(i,u) = Q(i,u) + a * target
"""

import math

import numpy as np
from numba import njit

KIND_DECREASING = 0
KIND_CONSTANT = 1


@njit(cache=True)
def a_step(kind, C, a_const, n):
    if kind == KIND_CONSTANT:
        return a_const
    m = max(n, 1)
    return C / ((m + 499) // 500)


@njit(cache=True)
def b_step(kind, C_prime, N, b_const, n):
    if kind == KIND_CONSTANT:
        return b_const
    if n % N != 0:
        return 0.0
    nlogn = n * math.log(n) if n > 1 else 0.0
    return C_prime / (1 + math.ceil(nlogn / 500))


@njit(cache=True)
def slice_mean(q, d, k):
    s = 0.0
    for ii in range(d):
        s += q[ii, 0, k] + q[ii, 1, k]
    return s / (2 * d)


@njit(cache=True)
def async_update(q, lam, rew, d, i, u, j, a):
    """Update component (i, u) of every k-slice of one class table in place."""
    for k in range(d):
        f = slice_mean(q, d, k)
        best = max(q[j, 0, k], q[j, 1, k])
        target = (1 - u) * (rew[i, 0] + lam[k]) + u * rew[i, 1] + best - f - q[i, u, k]
        q[i, u, k] = q[i, u, k] + a * target


@njit(cache=True)
def lambda_update(q, lam, d, b):
    for k in range(d):
        lam[k] = lam[k] + b * (q[k, 1, k] - q[k, 0, k])


@njit(cache=True)
def sync_sweep(q, lam, rew, d, nxt, a):
    """One synchronous sweep; ``nxt[i, u]`` is the simulated next state."""
    old = q.copy()
    for k in range(d):
        f = slice_mean(old, d, k)
        for i in range(d):
            for u in range(2):
                j = nxt[i, u]
                best = max(old[j, 0, k], old[j, 1, k])
                target = (1 - u) * (rew[i, 0] + lam[k]) + u * rew[i, 1] + best - f - old[i, u, k]
                q[i, u, k] = old[i, u, k] + a * target


@njit(cache=True)
def draw_next(cdf_row, d, x):
    j = 0
    for jj in range(d):
        if cdf_row[jj] <= x:
            j += 1
    return min(j, d - 1)


@njit(cache=True)
def all_finite(q, lam):
    for v in q.ravel():
        if not np.isfinite(v):
            return False
    for v in lam.ravel():
        if not np.isfinite(v):
            return False
    return True


@njit(cache=True)
def run_chunk(
    states, arm_class, dims, rew, cdf, q, lam, nu, exact_idx,
    budget, epsilon, mode, learn, n0, uniforms,
    kind, C, C_prime, N_gate, a_const, b_const,
    totals, active_counts, rec_flag, lam_trace, nu_trace, q_sup_trace,
):
    """Simulate ``uniforms.shape[0]`` coupled steps starting at global step ``n0``.

    ``mode``: 0 learned indices, 1 exact indices, 2 uniform random.
    Each uniforms row holds [exploration draw, N subset keys, N transition draws].
    After every step with ``rec_flag[t]`` set, ``lam`` and ``nu`` are copied
    into the next free slot of ``lam_trace`` and ``nu_trace``, and the
    largest ``|Q|`` goes to ``q_sup_trace``.
    Returns the number of steps completed; fewer than requested means a
    non-finite iterate appeared at that step.
    """
    n_arms = states.shape[0]
    n_steps = uniforms.shape[0]
    idx = np.empty(n_arms)
    actions = np.zeros(n_arms, dtype=np.int64)
    nxt = np.empty(n_arms, dtype=np.int64)
    n_classes = dims.shape[0]
    r = 0
    for t in range(n_steps):
        n = n0 + t
        row = uniforms[t]
        explore = mode == 2 or row[0] < epsilon
        if explore:
            order = np.argsort(row[1:1 + n_arms], kind="mergesort")
        else:
            for alpha in range(n_arms):
                c = arm_class[alpha]
                if mode == 1:
                    idx[alpha] = -exact_idx[c, states[alpha]]
                else:
                    idx[alpha] = -lam[c, states[alpha]]
            order = np.argsort(idx, kind="mergesort")
        actions[:] = 0
        for m in range(budget):
            actions[order[m]] = 1
        active_counts[t] = actions.sum()
        total = 0.0
        for alpha in range(n_arms):
            c = arm_class[alpha]
            x = states[alpha]
            u = actions[alpha]
            total += rew[c, x, u]
            nxt[alpha] = draw_next(cdf[c, u, x], dims[c], row[1 + n_arms + alpha])
        totals[t] = total
        if learn:
            for alpha in range(n_arms):
                c = arm_class[alpha]
                x = states[alpha]
                u = actions[alpha]
                a = a_step(kind, C, a_const, nu[c, x, u])
                async_update(q[c], lam[c], rew[c], dims[c], x, u, nxt[alpha], a)
                nu[c, x, u] += 1
            b = b_step(kind, C_prime, N_gate, b_const, n)
            if b != 0.0:
                for c in range(n_classes):
                    lambda_update(q[c], lam[c], dims[c], b)
        for alpha in range(n_arms):
            states[alpha] = nxt[alpha]
        if rec_flag[t]:
            lam_trace[r] = lam
            nu_trace[r] = nu
            q_sup_trace[r] = np.abs(q).max()
            r += 1
        if learn and not all_finite(q, lam):
            return t + 1
    return n_steps


@njit(cache=True)
def sync_run(q, lam, rew, cdf, d, draws, n0, frozen, kind, C, C_prime, N_gate, a_const, b_const):
    """``draws.shape[0]`` synchronous sweeps; ``draws[t, i, u]`` picks the next state.

    Returns the number of sweeps completed before a non-finite iterate.
    """
    nxt = np.empty((d, 2), dtype=np.int64)
    for t in range(draws.shape[0]):
        n = n0 + t
        for i in range(d):
            for u in range(2):
                nxt[i, u] = draw_next(cdf[u, i], d, draws[t, i, u])
        sync_sweep(q, lam, rew, d, nxt, a_step(kind, C, a_const, n))
        if not frozen:
            b = b_step(kind, C_prime, N_gate, b_const, n)
            if b != 0.0:
                lambda_update(q, lam, d, b)
        if not all_finite(q, lam):
            return t + 1
    return draws.shape[0]
