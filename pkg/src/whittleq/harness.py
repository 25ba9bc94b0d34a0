"""Experiment orchestration: couple simulator, learner and policy over seeds.

One iteration is one global environment step (all N arms move once).
Per-seed output directory layout written by ``write_run``::

    <out>/seed_<seed>/run.csv        step, avg_reward, total_reward, lambda_*, min_visit_freq
    <out>/seed_<seed>/totals.csv     per-step raw reward totals
    <out>/seed_<seed>/learner.json   final learner checkpoint
    <out>/seed_<seed>/manifest.json  config, config hash, seed, versions
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .exceptions import ContractError, DivergenceError, NonIndexableError, ValidationError
from .learner import LearnerState, save_checkpoint
from .model import BanditInstance
from .oracle import whittle_indices
from .policy import PolicyConfig
from .schedules import StepSchedule

CHUNK = 4096
BURN_IN = 0.1


@dataclass
class ExperimentConfig:
    instance: BanditInstance
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    schedule: dict = field(default_factory=dict)
    horizon: int = 10_000
    seeds: list = field(default_factory=lambda: [0])
    cadence: int = 1
    baselines: list = field(default_factory=list)
    name: str = "experiment"

    def __post_init__(self):
        if self.horizon < 1:
            raise ValidationError("horizon must be at least 1")
        if not self.seeds:
            raise ValidationError("at least one seed is required")
        if self.cadence < 1:
            raise ValidationError("cadence must be at least 1")

    def make_schedule(self) -> StepSchedule:
        params = dict(self.schedule)
        gate = params.pop("gate", None)
        return StepSchedule(N=gate or self.instance.n_arms, **params)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "model": self.instance.to_dict(),
            "policy": {"epsilon": self.policy.epsilon, "mode": self.policy.mode},
            "schedule": self.make_schedule().to_dict(),
            "horizon": self.horizon,
            "seeds": list(self.seeds),
            "cadence": self.cadence,
            "baselines": list(self.baselines),
        }

    def config_hash(self) -> str:
        """SHA-256 of the canonical config, seeds excluded."""
        body = self.to_dict()
        body.pop("seeds")
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()

    def with_policy(self, **changes) -> "ExperimentConfig":
        return replace(self, policy=replace(self.policy, **changes))


@dataclass
class RunRecord:
    seed: int
    config_hash: str
    policy_mode: str
    n_arms: int
    totals: np.ndarray  # raw reward summed over arms, every step
    active_counts: np.ndarray  # active arms, every step
    steps: np.ndarray  # recorded step counts (1-based: steps completed)
    lambdas: np.ndarray  # (n_rec, n_classes, dmax)
    visit_freq: np.ndarray  # (n_rec, n_classes, dmax, 2)
    dims: np.ndarray
    exact_indices: np.ndarray  # (n_classes, dmax), nan when unavailable
    q_sup: np.ndarray  # max |Q| over all tables at each recorded step
    final_state: LearnerState | None = None

    @property
    def avg_reward(self) -> np.ndarray:
        """Running average reward per arm at the recorded steps."""
        cum = np.cumsum(self.totals)
        return cum[self.steps - 1] / self.steps / self.n_arms

    @property
    def horizon(self) -> int:
        return self.totals.shape[0]

    def min_visit_freq(self) -> np.ndarray:
        out = np.full(self.steps.shape[0], np.inf)
        for c, d in enumerate(self.dims):
            out = np.minimum(out, self.visit_freq[:, c, :d].reshape(len(out), -1).min(axis=1))
        return out

    def index_error(self, cls: int = 0) -> np.ndarray:
        """Max over states of ``|lam_n(k) - lam(k)|`` at each recorded step."""
        d = self.dims[cls]
        return np.abs(self.lambdas[:, cls, :d] - self.exact_indices[cls, :d]).max(axis=1)

    def after_burn_in(self, fraction: float = BURN_IN) -> np.ndarray:
        return self.steps > fraction * self.horizon


def exact_index_table(instance: BanditInstance) -> np.ndarray:
    dmax = max(m.d for m in instance.classes)
    out = np.full((len(instance.classes), dmax), np.nan)
    for c, m in enumerate(instance.classes):
        try:
            out[c, : m.d] = whittle_indices(m).lambda_star
        except NonIndexableError:
            pass
    return out


def _record_flags(n0: int, k: int, cadence: int, horizon: int) -> np.ndarray:
    done = np.arange(n0, n0 + k) + 1
    return (done % cadence == 0) | (done == horizon)


def run_single(config: ExperimentConfig, seed: int, exact: np.ndarray | None = None) -> RunRecord:
    """One replication. Deterministic in ``(config, seed)``."""
    inst = config.instance
    mode = config.policy.mode_code
    learn = config.policy.mode == "learned-indices"
    if exact is None:
        exact = exact_index_table(inst)
    if config.policy.mode == "exact-indices" and np.isnan(exact[inst.arms, 0]).any():
        raise ContractError("exact-index baseline needs indices for every class")
    schedule = config.make_schedule()

    rng = np.random.default_rng(seed)
    dims = np.array([m.d for m in inst.classes], dtype=np.int64)
    dmax = int(dims.max())
    states = np.floor(rng.random(inst.n_arms) * dims[inst.arms]).astype(np.int64)
    rew = np.zeros((len(dims), dmax, 2))
    cdf = np.ones((len(dims), 2, dmax, dmax))
    for c, m in enumerate(inst.classes):
        rew[c, : m.d] = m.rewards
        cdf[c, :, : m.d, : m.d] = np.cumsum(m.kernels, axis=2)
    learner = LearnerState.initial(inst.classes)

    T, N = config.horizon, inst.n_arms
    n_rec = int(_record_flags(0, T, config.cadence, T).sum())
    totals = np.empty(T)
    active = np.empty(T, dtype=np.int64)
    lam_trace = np.empty((n_rec, len(dims), dmax))
    nu_trace = np.empty((n_rec, len(dims), dmax, 2), dtype=np.int64)
    q_sup = np.empty(n_rec)
    steps = np.flatnonzero(_record_flags(0, T, config.cadence, T)) + 1

    n, r = 0, 0
    exact_arr = np.nan_to_num(exact, nan=0.0)
    while n < T:
        k = min(CHUNK, T - n)
        uniforms = rng.random((k, 2 * N + 1))
        flags = _record_flags(n, k, config.cadence, T)
        n_flag = int(flags.sum())
        done = _kernels.run_chunk(
            states, inst.arms, dims, rew, cdf,
            learner.q, learner.lam, learner.nu, exact_arr,
            inst.budget, config.policy.epsilon, mode, learn, n, uniforms,
            schedule.kind_code, schedule.C, schedule.C_prime, schedule.N,
            schedule.a_const, schedule.b_const,
            totals[n:n + k], active[n:n + k], flags,
            lam_trace[r:r + n_flag], nu_trace[r:r + n_flag], q_sup[r:r + n_flag],
        )
        if done < k:
            learner.n = n + done
            raise DivergenceError(
                f"non-finite learner iterate at step {n + done - 1} (seed {seed})",
                snapshot=learner.copy(),
            )
        n += k
        r += n_flag
    learner.n = T

    return RunRecord(
        seed=int(seed),
        config_hash=config.config_hash(),
        policy_mode=config.policy.mode,
        n_arms=N,
        totals=totals,
        active_counts=active,
        steps=steps,
        lambdas=lam_trace,
        visit_freq=nu_trace / steps[:, None, None, None],
        dims=dims,
        exact_indices=exact,
        q_sup=q_sup,
        final_state=learner if learn else None,
    )


def run_experiment(config: ExperimentConfig, n_jobs: int = 1) -> list:
    """Run every seed; records come back in seed order."""
    exact = exact_index_table(config.instance)
    if n_jobs == 1:
        return [run_single(config, s, exact) for s in config.seeds]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=n_jobs)(delayed(run_single)(config, s, exact) for s in config.seeds)


def run_with_baselines(config: ExperimentConfig, n_jobs: int = 1) -> dict:
    """Records for the configured policy and each listed baseline.

    Baselines run without exploration under the same seeds, so the
    comparison uses common random numbers.
    """
    out = {config.policy.mode: run_experiment(config, n_jobs)}
    for mode in config.baselines:
        if mode not in out:
            out[mode] = run_experiment(config.with_policy(mode=mode, epsilon=0.0), n_jobs)
    return out


@dataclass
class RewardComparison:
    steps: np.ndarray
    median_a: np.ndarray
    iqr_a: np.ndarray
    median_b: np.ndarray
    iqr_b: np.ndarray
    ratios: np.ndarray  # per seed, final avg reward a / b

    @property
    def final_ratio(self) -> float:
        return float(np.median(self.ratios))


def _iqr(x: np.ndarray) -> np.ndarray:
    q75, q25 = np.percentile(x, [75, 25], axis=0)
    return q75 - q25


def compare_rewards(records_a: list, records_b: list) -> RewardComparison:
    """Median and IQR across seeds of running average reward, plus final ratio."""
    if not records_a or len(records_a) != len(records_b):
        raise ContractError("need two non-empty record lists of equal length")
    steps = records_a[0].steps
    for rec in (*records_a, *records_b):
        if rec.steps.shape != steps.shape or not np.array_equal(rec.steps, steps):
            raise ContractError("records disagree on horizon or cadence")
    a = np.array([rec.avg_reward for rec in records_a])
    b = np.array([rec.avg_reward for rec in records_b])
    return RewardComparison(
        steps=steps,
        median_a=np.median(a, axis=0),
        iqr_a=_iqr(a),
        median_b=np.median(b, axis=0),
        iqr_b=_iqr(b),
        ratios=a[:, -1] / b[:, -1],
    )


# ----------------------------------------------------------------------------
# persistence


def lambda_columns(rec: RunRecord) -> list:
    if len(rec.dims) == 1:
        return [f"lambda_{k + 1}" for k in range(rec.dims[0])]
    return [f"lambda_c{c}_{k + 1}" for c, d in enumerate(rec.dims) for k in range(d)]


def _lambda_rows(rec: RunRecord) -> np.ndarray:
    return np.concatenate([rec.lambdas[:, c, :d] for c, d in enumerate(rec.dims)], axis=1)


def versions() -> dict:
    import numba
    import scipy

    from . import __version__

    return {
        "whittleq": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def write_run(rec: RunRecord, config: ExperimentConfig, out_dir, extra: dict | None = None) -> Path:
    out = Path(out_dir) / f"seed_{rec.seed}"
    out.mkdir(parents=True, exist_ok=True)
    avg = rec.avg_reward
    cum = np.cumsum(rec.totals)[rec.steps - 1]
    lam = _lambda_rows(rec)
    mvf = rec.min_visit_freq()
    with open(out / "run.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "avg_reward", "total_reward", *lambda_columns(rec), "min_visit_freq"])
        for i, step in enumerate(rec.steps):
            w.writerow([int(step), repr(float(avg[i])), repr(float(cum[i])), *map(repr, lam[i].tolist()), repr(float(mvf[i]))])
    with open(out / "totals.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "total", "active"])
        for n, (tot, act) in enumerate(zip(rec.totals, rec.active_counts)):
            w.writerow([n, repr(float(tot)), int(act)])
    if rec.final_state is not None:
        save_checkpoint(out / "learner.json", rec.final_state, config.make_schedule())
    manifest = {
        "config": config.to_dict(),
        "config_hash": rec.config_hash,
        "seed": rec.seed,
        "policy_mode": rec.policy_mode,
        "versions": versions(),
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return out


def read_totals(run_dir) -> np.ndarray:
    with open(Path(run_dir) / "totals.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["total"]) for r in rows])
