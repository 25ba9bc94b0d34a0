"""Exact single-arm solutions by relative value iteration and Whittle indices.

The relative value iteration works directly on Q-tables and uses the same
normalisation ``f(Q) = mean(Q)`` as the learner, so oracle tables and
learned tables live in the same gauge and can be compared entrywise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_state
from .exceptions import ContractError, ConvergenceError, NonIndexableError
from .model import ArmModel

RVI_TOL = 1e-10
INDEX_TOL = 1e-8
MAX_ITER = 10**6
DAMPING = 0.5
MAX_DOUBLINGS = 60


@dataclass
class OracleSolution:
    lam: float
    q: np.ndarray  # (d, 2)
    v: np.ndarray  # relative values, v[ref_state] == 0
    beta: float
    policy: np.ndarray  # argmax_u q with ties to passive
    n_iter: int

    @property
    def passive_set(self) -> frozenset:
        """1-based labels of states where the passive action is optimal."""
        return frozenset((np.flatnonzero(self.policy == 0) + 1).tolist())

    @property
    def advantage(self) -> np.ndarray:
        """``Q(i, 1) - Q(i, 0)`` for every state."""
        return self.q[:, 1] - self.q[:, 0]


@dataclass
class IndexTable:
    lambda_star: np.ndarray
    residuals: np.ndarray
    bracket: np.ndarray

    def rows(self):
        for k, (lam, res, width) in enumerate(zip(self.lambda_star, self.residuals, self.bracket)):
            yield k + 1, float(lam), float(res), float(width)


def greedy(q: np.ndarray) -> np.ndarray:
    """Greedy action per state; exact ties go to the passive action."""
    return (q[:, 1] > q[:, 0]).astype(np.int64)


def subsidized_rewards(model: ArmModel, lam: float) -> np.ndarray:
    r = model.rewards.copy()
    r[:, 0] += lam
    return r


def bellman(q: np.ndarray, r_lam: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    """Undamped operator ``T(Q) = r_lam + P max_v Q - f(Q)``."""
    vmax = q.max(axis=1)
    return r_lam + (kernels @ vmax).T - q.mean()


def rvi_solve(
    model: ArmModel,
    lam: float,
    tol: float = RVI_TOL,
    max_iter: int = MAX_ITER,
    q0: np.ndarray | None = None,
    ref_state: int = 1,
    damping: float = DAMPING,
) -> OracleSolution:
    """Solve the subsidised average-reward problem at subsidy ``lam``.

    Iterates ``Q <- (1 - damping) Q + damping T(Q)`` until the sup norm of
    the change between successive iterates drops to ``tol``. The damping
    makes the iteration converge on periodic chains without moving the
    fixed point. At the fixed point ``f(Q)`` equals the optimal gain.

    Raises
    ------
    ConvergenceError
        If ``max_iter`` iterations pass without meeting ``tol``.
    """
    if tol <= 0:
        raise ContractError("tol must be positive")
    ref = check_state(ref_state, model.d)
    r_lam = subsidized_rewards(model, lam)
    kernels = model.kernels
    q = r_lam.copy() if q0 is None else np.array(q0, dtype=float)
    span = np.inf
    for it in range(1, max_iter + 1):
        q_new = (1.0 - damping) * q + damping * bellman(q, r_lam, kernels)
        diff = q_new - q
        q = q_new
        span = float(np.abs(diff).max())
        if span <= tol:
            break
    else:
        raise ConvergenceError(
            f"relative value iteration did not converge in {max_iter} iterations (last change {span:.3e})",
            last_span=span,
        )
    v = q.max(axis=1)
    return OracleSolution(
        lam=float(lam),
        q=q,
        v=v - v[ref],
        beta=float(q.mean()),
        policy=greedy(q),
        n_iter=it,
    )


def residual(solution: OracleSolution, model: ArmModel) -> float:
    """Sup norm of the average-reward optimality equation residual."""
    r_lam = subsidized_rewards(model, solution.lam)
    rhs = r_lam - solution.beta + (model.kernels @ solution.q.max(axis=1)).T
    return float(np.abs(solution.q - rhs).max())


def advantage(model: ArmModel, lam: float, k_hat: int, tol: float = RVI_TOL, **kwargs) -> float:
    """``Q*_lam(k, 1) - Q*_lam(k, 0)`` for 1-based state ``k_hat``."""
    k = check_state(k_hat, model.d)
    return float(rvi_solve(model, lam, tol=tol, **kwargs).advantage[k])


def default_radius(model: ArmModel) -> float:
    return float(np.abs(model.rewards).max()) + 1.0


def whittle_index(
    model: ArmModel,
    k_hat: int,
    bracket: tuple | None = None,
    tol: float = INDEX_TOL,
    rvi_tol: float = RVI_TOL,
    max_iter: int = MAX_ITER,
    ref_state: int = 1,
    return_details: bool = False,
):
    """Whittle index of state ``k_hat`` by bisection on the subsidy.

    The advantage ``g(lam) = Q*_lam(k,1) - Q*_lam(k,0)`` is non-increasing
    for indexable arms. Starting from ``bracket`` (default ``[-R, R]``
    with ``R = max|r| + 1``) the interval is doubled until ``g`` changes
    sign, then bisected until ``|g| <= tol``.

    Returns the index, or ``(index, |g|, final bracket width)`` when
    ``return_details`` is set.
    """
    k = check_state(k_hat, model.d)
    if bracket is None:
        radius = default_radius(model)
        lo, hi = -radius, radius
    else:
        lo, hi = map(float, bracket)
        if not lo < hi:
            raise ContractError("bracket must satisfy lo < hi")

    cache = {}

    def g(lam):
        warm = cache.get("q")
        sol = rvi_solve(model, lam, tol=rvi_tol, max_iter=max_iter, q0=warm, ref_state=ref_state)
        cache["q"] = sol.q
        return float(sol.advantage[k])

    g_lo, g_hi = g(lo), g(hi)
    doublings = 0
    while not (g_lo >= 0.0 >= g_hi):
        if doublings >= MAX_DOUBLINGS:
            raise NonIndexableError(
                f"no sign change of the advantage for state {k_hat} on [{lo:.3g}, {hi:.3g}]"
            )
        centre, half = 0.5 * (lo + hi), hi - lo
        lo, hi = centre - half, centre + half
        g_lo, g_hi = g(lo), g(hi)
        doublings += 1

    lam, g_mid = lo, g_lo
    if abs(g_hi) < abs(g_lo):
        lam, g_mid = hi, g_hi
    while abs(g_mid) > tol:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break  # interval exhausted at double precision
        g_val = g(mid)
        if g_val > 0.0:
            lo = mid
        else:
            hi = mid
        lam, g_mid = mid, g_val
    if return_details:
        return lam, abs(g_mid), hi - lo
    return lam


def whittle_indices(model: ArmModel, tol: float = INDEX_TOL, **kwargs) -> IndexTable:
    """Index table for every state of ``model``."""
    results = [whittle_index(model, k, tol=tol, return_details=True, **kwargs) for k in range(1, model.d + 1)]
    lam, res, width = (np.array(col) for col in zip(*results))
    return IndexTable(lambda_star=lam, residuals=res, bracket=width)


@dataclass
class IndexabilityReport:
    passed: bool
    grid: np.ndarray
    passive_sets: list
    first_violation: tuple | None  # (lambda_before, lambda_after) where a state left the passive set

    @property
    def summary(self) -> str:
        if self.passed:
            return "passive sets nested along the grid"
        a, b = self.first_violation
        return f"passive set shrank between lambda={a:.6g} and lambda={b:.6g}"


def scan_indexability(model: ArmModel, grid, tol: float = RVI_TOL) -> IndexabilityReport:
    """Check that passive sets grow monotonically along an ascending grid."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or np.any(np.diff(grid) <= 0):
        raise ContractError("grid must be a strictly ascending 1-d sequence")
    sets, q, violation = [], None, None
    for lam in grid:
        sol = rvi_solve(model, lam, tol=tol, q0=q)
        q = sol.q
        sets.append(sol.passive_set)
    for a, b, lam_a, lam_b in zip(sets, sets[1:], grid, grid[1:]):
        if not a <= b:
            violation = (float(lam_a), float(lam_b))
            break
    return IndexabilityReport(violation is None, grid, sets, violation)


def scaling_check(model: ArmModel, lam: float, c: float, tol: float = RVI_TOL) -> float:
    """Advantage at subsidy ``c * lam`` divided by ``c``, averaged over states.

    Tends to ``-lam`` as ``c`` grows.
    """
    if c < 1:
        raise ContractError("scale factor c must be >= 1")
    # the iterates scale with c, so the absolute stopping tolerance does too
    sol = rvi_solve(model, c * lam, tol=tol * c)
    return float(sol.advantage.mean() / c)


class WhittleIndexSolver(BaseEstimator):
    """Estimator front end for the exact index computation.

    Parameters
    ----------
    tol : float
        Target ``|Q(k,1) - Q(k,0)|`` at the returned subsidy.
    rvi_tol : float
        Stopping tolerance of each inner relative value iteration.
    ref_state : int
        1-based state pinned to zero in the reported relative values.

    Attributes
    ----------
    indices_ : ndarray of shape (d,)
    residuals_ : ndarray of shape (d,)
    bracket_widths_ : ndarray of shape (d,)
    """

    def __init__(self, tol=INDEX_TOL, rvi_tol=RVI_TOL, ref_state=1):
        self.tol = tol
        self.rvi_tol = rvi_tol
        self.ref_state = ref_state

    def fit(self, model: ArmModel, y=None):
        table = whittle_indices(model, tol=self.tol, rvi_tol=self.rvi_tol, ref_state=self.ref_state)
        self.table_ = table
        self.indices_ = table.lambda_star
        self.residuals_ = table.residuals
        self.bracket_widths_ = table.bracket
        self.n_states_ = model.d
        return self

    def predict(self, states):
        """Index of each 1-based state label in ``states``."""
        if not hasattr(self, "indices_"):
            from sklearn.exceptions import NotFittedError

            raise NotFittedError("WhittleIndexSolver is not fitted yet")
        states = np.asarray(states, dtype=np.int64)
        if np.any(states < 1) or np.any(states > self.n_states_):
            raise ContractError(f"state labels must lie in 1..{self.n_states_}")
        return self.indices_[states - 1]
