"""Two-timescale Q-learning of Whittle indices.

For every arm class the learner keeps one Q-table per candidate state
``k`` (the state whose index is being tuned), a vector of index estimates
``lam[k]`` and local visit clocks ``nu[i, u]``. The fast iterate is
average-reward (relative value) Q-learning at subsidy ``lam[k]``; the
slow iterate nudges ``lam[k]`` towards the subsidy at which active and
passive are equally good in state ``k``.

Within one global step the order is fixed: every arm's observation is
applied to its class table in ascending arm order (each using the clock
value current at that sub-update, then incrementing it), and afterwards a
single index update uses the freshly updated tables.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import _kernels
from ._validation import check_random_state
from .exceptions import ContractError, DivergenceError
from .model import ArmModel, BanditInstance
from .oracle import bellman, subsidized_rewards
from .schedules import StepSchedule, a_of, b_of

CHECKPOINT_FORMAT = "whittleq-checkpoint"
CHECKPOINT_VERSION = 1
SYNC_CHUNK = 8192


class Observation(NamedTuple):
    """One arm transition with 1-based state labels and its reward pair."""

    cls: int
    i: int
    u: int
    j: int
    r0: float
    r1: float


@dataclass
class LearnerState:
    q: np.ndarray  # (n_classes, dmax, 2, dmax), Q(i, u; k)
    lam: np.ndarray  # (n_classes, dmax)
    nu: np.ndarray  # (n_classes, dmax, 2), int64
    dims: np.ndarray  # (n_classes,)
    n: int = 0

    @classmethod
    def initial(cls, models) -> "LearnerState":
        """``lam = 0`` and ``Q(i, u; k) = r(i, u)`` for every ``k``."""
        dims = np.array([m.d for m in models], dtype=np.int64)
        dmax = int(dims.max())
        q = np.zeros((len(models), dmax, 2, dmax))
        for c, m in enumerate(models):
            q[c, : m.d, :, : m.d] = m.rewards[:, :, None]
        return cls(
            q=q,
            lam=np.zeros((len(models), dmax)),
            nu=np.zeros((len(models), dmax, 2), dtype=np.int64),
            dims=dims,
        )

    def table(self, cls: int = 0) -> np.ndarray:
        """View of one class's ``(d, 2, d)`` Q-table."""
        d = self.dims[cls]
        return self.q[cls, :d, :, :d]

    def indices(self, cls: int = 0) -> np.ndarray:
        return self.lam[cls, : self.dims[cls]]

    def clocks(self, cls: int = 0) -> np.ndarray:
        return self.nu[cls, : self.dims[cls]]

    def copy(self) -> "LearnerState":
        return LearnerState(self.q.copy(), self.lam.copy(), self.nu.copy(), self.dims.copy(), self.n)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.q).all() and np.isfinite(self.lam).all())


def f_norm(q_slice) -> float:
    """Mean of a ``(d, 2)`` Q-table, accumulated state by state."""
    q_slice = np.asarray(q_slice, dtype=float)
    s = 0.0
    for q0, q1 in q_slice:
        s += q0 + q1
    return s / (2 * q_slice.shape[0])


def async_update(state: LearnerState, obs: Observation, schedule: StepSchedule) -> LearnerState:
    """Apply one observed transition to every k-slice of its class table.

    Only component ``(i, u)`` changes. The step size is taken at the
    current visit count of ``(i, u)``, which is then incremented.
    """
    c = obs.cls
    d = int(state.dims[c])
    if not (1 <= obs.i <= d and 1 <= obs.j <= d and obs.u in (0, 1)):
        raise ContractError(f"observation {obs} does not fit a {d}-state class")
    i, j, u = obs.i - 1, obs.j - 1, int(obs.u)
    rew = np.zeros((state.q.shape[1], 2))
    rew[i] = obs.r0, obs.r1
    a = a_of(schedule, state.nu[c, i, u])
    _kernels.async_update(state.q[c], state.lam[c], rew, d, i, u, j, a)
    state.nu[c, i, u] += 1
    if not state.is_finite():
        raise DivergenceError("non-finite Q value after update", snapshot=state.copy())
    return state


def lambda_update(state: LearnerState, n: int, schedule: StepSchedule) -> LearnerState:
    """Move each index estimate by ``b(n) * (Q(k,1;k) - Q(k,0;k))``."""
    b = b_of(schedule, n)
    if b != 0.0:
        for c, d in enumerate(state.dims):
            _kernels.lambda_update(state.q[c], state.lam[c], int(d), b)
    return state


def sync_sweep(
    state: LearnerState,
    model: ArmModel,
    schedule: StepSchedule,
    rng,
    lambda_frozen: float | None = None,
    cls: int = 0,
) -> LearnerState:
    """One off-policy synchronous sweep over all ``(i, u, k)``.

    Each ``(i, u)`` gets an independently simulated next state, shared by
    all k-slices, and the global sweep count drives the step size. With
    ``lambda_frozen`` the index estimates are pinned to that value.
    """
    rng = check_random_state(rng)
    d = model.d
    cdf = np.cumsum(model.kernels, axis=2)
    draws = rng.random((d, 2))
    nxt = np.empty((d, 2), dtype=np.int64)
    for i in range(d):
        for u in range(2):
            nxt[i, u] = _kernels.draw_next(cdf[u, i], d, draws[i, u])
    if lambda_frozen is not None:
        state.lam[cls, :d] = lambda_frozen
    a = a_of(schedule, state.n)
    rew = np.zeros((state.q.shape[1], 2))
    rew[:d] = model.rewards
    _kernels.sync_sweep(state.q[cls], state.lam[cls], rew, d, nxt, a)
    state.nu[cls, :d] += 1
    if lambda_frozen is None:
        b = b_of(schedule, state.n)
        if b != 0.0:
            _kernels.lambda_update(state.q[cls], state.lam[cls], d, b)
    state.n += 1
    if not state.is_finite():
        raise DivergenceError("non-finite iterate in synchronous sweep", snapshot=state.copy())
    return state


def bellman_residual(q_slice, lam: float, model: ArmModel) -> np.ndarray:
    """``h(Q, lam) - Q`` evaluated with the true kernels, shape ``(d, 2)``."""
    q_slice = np.asarray(q_slice, dtype=float)
    return bellman(q_slice, subsidized_rewards(model, lam), model.kernels) - q_slice


# ----------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, state: LearnerState, schedule: StepSchedule, rng=None) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "n": state.n,
        "dims": state.dims.tolist(),
        "q": state.q.tolist(),
        "lam": state.lam.tolist(),
        "nu": state.nu.tolist(),
        "schedule": schedule.to_dict(),
        "rng": None if rng is None else rng.bit_generator.state,
    }
    Path(path).write_text(json.dumps(payload))


def load_checkpoint(path):
    """Inverse of ``save_checkpoint``; returns ``(state, schedule, rng)``."""
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a learner checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    state = LearnerState(
        q=np.array(payload["q"], dtype=float),
        lam=np.array(payload["lam"], dtype=float),
        nu=np.array(payload["nu"], dtype=np.int64),
        dims=np.array(payload["dims"], dtype=np.int64),
        n=int(payload["n"]),
    )
    rng = None
    if payload["rng"] is not None:
        rng = np.random.default_rng()
        rng.bit_generator.state = payload["rng"]
    return state, StepSchedule(**payload["schedule"]), rng


# ----------------------------------------------------------------------------
# estimator


class QWhittleLearner(BaseEstimator):
    """Learns Whittle indices from transitions.

    ``partial_fit`` consumes one global step of on-policy observations
    from a ``BanditInstance``; ``fit`` runs the synchronous off-policy
    variant against a known ``ArmModel`` simulator. ``predict`` maps state
    labels to the current index estimates.

    Parameters
    ----------
    schedule : {"decreasing", "constant"}
    C, C_prime : float
        Fast and slow gains of the decreasing schedule.
    a_const, b_const : float
        Step sizes of the constant schedule.
    gate : int or None
        Index updates happen only when ``n % gate == 0``. Defaults to the
        number of arms online and to 1 in synchronous mode.
    """

    def __init__(self, schedule="decreasing", C=0.3, C_prime=1.0, a_const=0.02, b_const=0.005, gate=None):
        self.schedule = schedule
        self.C = C
        self.C_prime = C_prime
        self.a_const = a_const
        self.b_const = b_const
        self.gate = gate

    def _make_schedule(self, default_gate: int) -> StepSchedule:
        return StepSchedule(
            kind=self.schedule,
            C=self.C,
            C_prime=self.C_prime,
            N=self.gate or default_gate,
            a_const=self.a_const,
            b_const=self.b_const,
        )

    def initialize(self, instance: BanditInstance):
        self.instance_ = instance
        self.schedule_ = self._make_schedule(instance.n_arms)
        self.state_ = LearnerState.initial(instance.classes)
        return self

    def partial_fit(self, states, actions, next_states):
        """One global step: per-arm 1-based states, actions and next states."""
        if not hasattr(self, "instance_"):
            raise NotFittedError("call initialize(instance) before partial_fit")
        inst = self.instance_
        states, actions, next_states = (np.asarray(v, dtype=np.int64) for v in (states, actions, next_states))
        if not states.shape == actions.shape == next_states.shape == (inst.n_arms,):
            raise ContractError("states, actions and next_states need one entry per arm")
        for alpha in range(inst.n_arms):
            c = int(inst.arms[alpha])
            i = int(states[alpha])
            u = int(actions[alpha])
            r = inst.classes[c].rewards[i - 1]
            async_update(self.state_, Observation(c, i, u, int(next_states[alpha]), r[0], r[1]), self.schedule_)
        lambda_update(self.state_, self.state_.n, self.schedule_)
        self.state_.n += 1
        return self

    def fit(self, model, n_sweeps: int = 10_000, lambda_frozen=None, random_state=None):
        """Synchronous off-policy training on a simulator of ``model``.

        For a single class this matches ``n_sweeps`` calls of ``sync_sweep``
        on the same generator draw for draw.
        """
        if isinstance(model, BanditInstance):
            models = model.classes
        else:
            models = (model,)
        rng = check_random_state(random_state)
        self.instance_ = model if isinstance(model, BanditInstance) else None
        sched = self.schedule_ = self._make_schedule(1)
        state = self.state_ = LearnerState.initial(models)
        dmax = state.q.shape[1]
        setups = []
        for c, m in enumerate(models):
            rew = np.zeros((dmax, 2))
            rew[: m.d] = m.rewards
            if lambda_frozen is not None:
                state.lam[c, : m.d] = lambda_frozen
            setups.append((c, m.d, rew, np.cumsum(m.kernels, axis=2)))
        done = 0
        while done < n_sweeps:
            k = min(SYNC_CHUNK, int(n_sweeps) - done)
            for c, d, rew, cdf in setups:
                # draws per sweep match what sync_sweep would consume
                draws = rng.random((k, d, 2))
                ok = _kernels.sync_run(
                    state.q[c], state.lam[c], rew, cdf, d, draws, state.n, lambda_frozen is not None,
                    sched.kind_code, sched.C, sched.C_prime, sched.N, sched.a_const, sched.b_const,
                )
                if ok < k:
                    raise DivergenceError("non-finite iterate in synchronous training", snapshot=state.copy())
                state.nu[c, :d] += k
            state.n += k
            done += k
        return self

    @property
    def indices_(self) -> np.ndarray:
        """Index estimates of class 0; see ``state_.indices(c)`` for others."""
        return self.state_.indices(0)

    def predict(self, states, arm_classes=None):
        """Current index estimate for each 1-based state in ``states``."""
        if not hasattr(self, "state_"):
            raise NotFittedError("QWhittleLearner is not fitted yet")
        states = np.asarray(states, dtype=np.int64)
        classes = np.zeros_like(states) if arm_classes is None else np.asarray(arm_classes, dtype=np.int64)
        if np.any(states < 1) or np.any(states > self.state_.dims[classes]):
            raise ContractError("state label outside its class's range")
        return self.state_.lam[classes, states - 1]

    def save(self, path, rng=None):
        save_checkpoint(path, self.state_, self.schedule_, rng)

    @classmethod
    def load(cls, path):
        state, schedule, _ = load_checkpoint(path)
        est = cls(
            schedule=schedule.kind,
            C=schedule.C,
            C_prime=schedule.C_prime,
            a_const=schedule.a_const,
            b_const=schedule.b_const,
            gate=schedule.N,
        )
        est.state_ = state
        est.schedule_ = schedule
        return est
