"""Arm and bandit models, reachability validation and exact simulation.

States are labelled ``1..d`` at every external boundary (config files,
CSV output, the ``k_hat`` arguments of the oracle) and stored 0-based in
arrays.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from ._validation import (
    as_matrix,
    as_vector,
    check_random_state,
    check_stochastic,
    parse_number,
)
from .exceptions import ContractError, ValidationError

MAX_ENUMERATED_STATES = 12
N_SAMPLED_POLICIES = 1000


@dataclass(frozen=True, eq=False)
class ArmModel:
    """One arm: passive/active kernels and reward vectors.

    ``p0[i, j]`` is the probability of moving from state ``i`` to ``j``
    when passive, ``p1`` the same when active; ``r0[i]`` and ``r1[i]`` are
    the rewards collected in state ``i`` under each action.
    """

    p0: np.ndarray
    p1: np.ndarray
    r0: np.ndarray
    r1: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ("p0", "p1", "r0", "r1"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            arrays[name] = arr
            object.__setattr__(self, name, arr)
        d = arrays["r0"].shape[0] if arrays["r0"].ndim == 1 else 0
        if d < 1:
            raise ValidationError("an arm needs at least one state")
        for name in ("p0", "p1"):
            if arrays[name].shape != (d, d):
                raise ValidationError(f"{name}: expected shape {(d, d)}, got {arrays[name].shape}")
            check_stochastic(arrays[name], name)
        for name in ("r0", "r1"):
            if arrays[name].shape != (d,):
                raise ValidationError(f"{name}: expected length {d}")
            if not np.all(np.isfinite(arrays[name])):
                raise ValidationError(f"{name}: rewards must be finite")

    @property
    def d(self) -> int:
        return self.r0.shape[0]

    @property
    def kernels(self) -> np.ndarray:
        """Kernels stacked by action, shape ``(2, d, d)``."""
        return np.stack([self.p0, self.p1])

    @property
    def rewards(self) -> np.ndarray:
        """Reward table indexed ``(state, action)``, shape ``(d, 2)``."""
        return np.column_stack([self.r0, self.r1])

    @classmethod
    def from_dict(cls, data: dict) -> "ArmModel":
        try:
            d = int(data["d"])
            return cls(
                p0=as_matrix(data["p0"], d, "p0"),
                p1=as_matrix(data["p1"], d, "p1"),
                r0=as_vector(data["r0"], d, "r0"),
                r1=as_vector(data["r1"], d, "r1"),
            )
        except KeyError as exc:
            raise ValidationError(f"arm definition is missing field {exc.args[0]!r}") from None

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "p0": self.p0.tolist(),
            "p1": self.p1.tolist(),
            "r0": self.r0.tolist(),
            "r1": self.r1.tolist(),
        }


def circulant_arm() -> ArmModel:
    """Four-state arm whose passive kernel drifts down and active kernel up."""
    p0 = np.array(
        [
            [0.5, 0.0, 0.0, 0.5],
            [0.5, 0.5, 0.0, 0.0],
            [0.0, 0.5, 0.5, 0.0],
            [0.0, 0.0, 0.5, 0.5],
        ]
    )
    r = np.array([-1.0, 0.0, 0.0, 1.0])
    return ArmModel(p0=p0, p1=p0.T.copy(), r0=r, r1=r.copy())


def restart_arm(a: float = 0.9, d: int = 5) -> ArmModel:
    """Arm that climbs when passive and resets to state 1 when active.

    Passive reward in state ``k`` is ``a**k``; active reward is zero.
    """
    p0 = np.zeros((d, d))
    p0[:, 0] = 1.0 - a
    for i in range(d):
        p0[i, min(i + 1, d - 1)] += a
    p1 = np.zeros((d, d))
    p1[:, 0] = 1.0
    return ArmModel(p0=p0, p1=p1, r0=a ** np.arange(1, d + 1), r1=np.zeros(d))


@dataclass(frozen=True, eq=False)
class BanditInstance:
    """N arms drawn from a list of statistical classes, M active per step.

    ``arms[alpha]`` is the class id of arm ``alpha``. Arms that share a
    class id share the very same ``ArmModel`` object, which is what lets
    the learner pool their observations.
    """

    classes: tuple
    arms: np.ndarray
    budget: int

    def __post_init__(self):
        classes = tuple(self.classes)
        object.__setattr__(self, "classes", classes)
        arms = np.asarray(self.arms, dtype=np.int64)
        arms.setflags(write=False)
        object.__setattr__(self, "arms", arms)
        if not classes:
            raise ValidationError("at least one arm class is required")
        if arms.ndim != 1 or arms.size < 2:
            raise ValidationError("need at least two arms")
        if np.any(arms < 0) or np.any(arms >= len(classes)):
            raise ValidationError("arm class ids must index into classes")
        if not 1 <= self.budget < arms.size:
            raise ValidationError(f"budget must satisfy 1 <= M < N, got M={self.budget}, N={arms.size}")

    @property
    def n_arms(self) -> int:
        return self.arms.size

    @classmethod
    def homogeneous(cls, model: ArmModel, n_arms: int, budget: int) -> "BanditInstance":
        return cls(classes=(model,), arms=np.zeros(n_arms, dtype=np.int64), budget=budget)

    @classmethod
    def from_dict(cls, data: dict) -> "BanditInstance":
        """Parse the instance schema.

        Either a single arm class given inline (``d``, ``p0``, ``p1``,
        ``r0``, ``r1``) plus ``n_arms`` and ``budget``, or a ``classes``
        list whose entries carry their own arm definition and a ``count``.
        """
        if "budget" not in data:
            raise ValidationError("instance definition is missing field 'budget'")
        budget = int(data["budget"])
        if "classes" in data:
            models, arms = [], []
            for cid, entry in enumerate(data["classes"]):
                models.append(ArmModel.from_dict(entry))
                arms.extend([cid] * int(entry["count"]))
            if "n_arms" in data and int(data["n_arms"]) != len(arms):
                raise ValidationError("n_arms disagrees with the sum of class counts")
            return cls(classes=tuple(models), arms=np.array(arms), budget=budget)
        if "n_arms" not in data:
            raise ValidationError("instance definition is missing field 'n_arms'")
        return cls.homogeneous(ArmModel.from_dict(data), int(data["n_arms"]), budget)

    def to_dict(self) -> dict:
        if len(self.classes) == 1:
            out = self.classes[0].to_dict()
            out.update(n_arms=self.n_arms, budget=self.budget)
            return out
        counts = np.bincount(self.arms, minlength=len(self.classes))
        return {
            "n_arms": self.n_arms,
            "budget": self.budget,
            "classes": [dict(m.to_dict(), count=int(c)) for m, c in zip(self.classes, counts)],
        }


@dataclass
class SimState:
    """Joint state of all N arms (0-based labels), step counter and RNG."""

    states: np.ndarray
    step: int = 0
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    @classmethod
    def initial(cls, instance: BanditInstance, seed=None, states=None) -> "SimState":
        """Start every arm uniformly at random, or at the given 1-based states."""
        rng = check_random_state(seed)
        if states is None:
            d = np.array([instance.classes[c].d for c in instance.arms])
            x = np.floor(rng.random(instance.n_arms) * d).astype(np.int64)
        else:
            x = np.asarray(states, dtype=np.int64) - 1
        return cls(states=x, step=0, rng=rng)


# ----------------------------------------------------------------------------
# reachability validation


@dataclass
class ValidationReport:
    stochastic: bool
    status: str  # "unichain", "weakly-communicating" or "fail"
    n_policies: int
    exhaustive: bool
    failing_policies: list
    reference_states: list  # 1-based states reachable from everywhere under every checked policy
    messages: list

    @property
    def ok(self) -> bool:
        return self.status != "fail"


def _reachable_from_all(adj: np.ndarray) -> np.ndarray:
    """Boolean mask of states reachable from every state in graph ``adj``."""
    d = adj.shape[0]
    reach = adj | np.eye(d, dtype=bool)
    # transitive closure by repeated squaring
    for _ in range(max(1, int(np.ceil(np.log2(d))) + 1)):
        reach = reach | ((reach.astype(np.int64) @ reach.astype(np.int64)) > 0)
    return reach.all(axis=0)


def _closed_classes(adj: np.ndarray) -> list:
    n, labels = connected_components(adj, directed=True, connection="strong")
    out = []
    for c in range(n):
        members = labels == c
        if not adj[members][:, ~members].any():
            out.append(np.flatnonzero(members))
    return out


def _policies(d: int, rng) -> tuple:
    if d <= MAX_ENUMERATED_STATES:
        return itertools.product((0, 1), repeat=d), 2**d, True
    sampled = (tuple(row) for row in rng.integers(0, 2, size=(N_SAMPLED_POLICIES, d)))
    return sampled, N_SAMPLED_POLICIES, False


def validate(model: ArmModel, seed=0) -> ValidationReport:
    """Check stochasticity and the unichain / weak-communication structure.

    Every stationary policy is enumerated when ``d <= 12``, otherwise 1000
    random stationary policies are sampled. A chain that is not unichain
    but in which any state can be reached from any other under some
    control is reported as weakly communicating with a warning.
    """
    # ArmModel construction already enforces stochasticity; re-check defensively
    for name in ("p0", "p1"):
        check_stochastic(getattr(model, name), name)

    d = model.d
    adj = model.kernels > 0.0
    union = adj[0] | adj[1]
    closed_union = _closed_classes(union)
    rng = np.random.default_rng(seed)
    policies, n_policies, exhaustive = _policies(d, rng)

    common = np.ones(d, dtype=bool)
    failing, weak_ok = [], len(closed_union) == 1
    for phi in policies:
        phi = np.asarray(phi)
        graph = adj[phi, np.arange(d)]
        hits = _reachable_from_all(graph)
        if not hits.any():
            failing.append(tuple(int(v) for v in phi))
        common &= hits
        if weak_ok:
            target = set(closed_union[0].tolist())
            weak_ok = all(set(c.tolist()) <= target for c in _closed_classes(graph))

    messages = []
    if not failing:
        status = "unichain"
        if not common.any():
            messages.append("every policy is unichain but no single reference state is shared")
    elif weak_ok:
        status = "weakly-communicating"
        msg = (
            f"{len(failing)} stationary policies split the chain into several recurrent classes; "
            "every state is still reachable from every other under some control"
        )
        messages.append(msg)
        warnings.warn(msg, stacklevel=2)
    else:
        status = "fail"
        messages.append(f"{len(failing)} stationary policies have no state reachable from all states")
    return ValidationReport(
        stochastic=True,
        status=status,
        n_policies=n_policies,
        exhaustive=exhaustive,
        failing_policies=failing,
        reference_states=(np.flatnonzero(common) + 1).tolist(),
        messages=messages,
    )


# ----------------------------------------------------------------------------
# simulation


def _cdfs(instance: BanditInstance) -> list:
    return [np.cumsum(m.kernels, axis=2) for m in instance.classes]


def sample_transitions(cdf: np.ndarray, states: np.ndarray, actions: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw of next states for arms of one class.

    ``cdf`` has shape ``(2, d, d)``; all other arrays are per-arm.
    """
    rows = cdf[actions, states]
    nxt = (rows <= uniforms[:, None]).sum(axis=1)
    return np.minimum(nxt, cdf.shape[-1] - 1)


def step(instance: BanditInstance, state: SimState, actions) -> tuple:
    """Advance all arms one step.

    Returns the new ``SimState`` and the per-arm rewards, which are
    evaluated at the pre-transition states.
    """
    actions = np.asarray(actions, dtype=np.int64)
    if actions.shape != (instance.n_arms,) or not np.isin(actions, (0, 1)).all():
        raise ContractError("actions must be a binary vector with one entry per arm")
    if int(actions.sum()) != instance.budget:
        raise ContractError(f"exactly {instance.budget} arms must be active, got {int(actions.sum())}")

    uniforms = state.rng.random(instance.n_arms)
    rewards = np.empty(instance.n_arms)
    nxt = np.empty_like(state.states)
    for cid, (model, cdf) in enumerate(zip(instance.classes, _cdfs(instance))):
        members = instance.arms == cid
        x, u = state.states[members], actions[members]
        rewards[members] = model.rewards[x, u]
        nxt[members] = sample_transitions(cdf, x, u, uniforms[members])
    return SimState(states=nxt, step=state.step + 1, rng=state.rng), rewards


__all__ = [
    "ArmModel",
    "BanditInstance",
    "SimState",
    "ValidationReport",
    "circulant_arm",
    "restart_arm",
    "parse_number",
    "sample_transitions",
    "step",
    "validate",
]
