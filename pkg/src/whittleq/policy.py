"""Top-M index policy with whole-step uniform exploration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_random_state
from .exceptions import ContractError

MODES = ("learned-indices", "exact-indices", "uniform-random")


@dataclass(frozen=True)
class PolicyConfig:
    epsilon: float = 0.1
    mode: str = "learned-indices"

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if self.mode not in MODES:
            raise ValueError(f"unknown policy mode {self.mode!r}")

    @property
    def mode_code(self) -> int:
        return MODES.index(self.mode)


def top_m(indices, m: int) -> np.ndarray:
    """Positions of the ``m`` largest values; ties go to the lower position."""
    return np.argsort(-np.asarray(indices, dtype=float), kind="stable")[:m]


def select_actions(config: PolicyConfig, indices, budget: int, rng) -> np.ndarray:
    """Binary action vector with exactly ``budget`` ones.

    Draws one uniform for the exploration coin and then ``N`` uniform
    keys; the keys pick the random subset when exploring and are
    otherwise discarded, so the random stream advances by ``N + 1`` draws
    per call regardless of the outcome.
    """
    rng = check_random_state(rng)
    indices = np.asarray(indices, dtype=float)
    n = indices.shape[0]
    if not 1 <= budget < n:
        raise ContractError(f"budget must satisfy 1 <= M < N, got M={budget}, N={n}")
    coin = rng.random()
    keys = rng.random(n)
    if config.mode == "uniform-random" or coin < config.epsilon:
        chosen = np.argsort(keys, kind="stable")[:budget]
    else:
        chosen = top_m(indices, budget)
    actions = np.zeros(n, dtype=np.int64)
    actions[chosen] = 1
    return actions


def exploration_stats(clocks, n: int) -> np.ndarray:
    """Visit frequencies ``nu(i, u) / (n + 1)``."""
    if n < 0:
        raise ContractError("step count must be non-negative")
    return np.asarray(clocks, dtype=float) / (n + 1)


def exploration_floor_ok(clocks, n: int, floor: float) -> tuple:
    """Return ``(min frequency, min frequency >= floor)`` without raising."""
    low = float(exploration_stats(clocks, n).min())
    return low, low >= floor


class WhittleIndexPolicy(BaseEstimator):
    """Estimator wrapper: ``predict(indices)`` returns an action vector."""

    def __init__(self, budget=1, epsilon=0.0, mode="learned-indices", random_state=None):
        self.budget = budget
        self.epsilon = epsilon
        self.mode = mode
        self.random_state = random_state

    def fit(self, X=None, y=None):
        self.config_ = PolicyConfig(epsilon=self.epsilon, mode=self.mode)
        self.rng_ = check_random_state(self.random_state)
        return self

    def predict(self, indices):
        if not hasattr(self, "config_"):
            self.fit()
        return select_actions(self.config_, indices, self.budget, self.rng_)
