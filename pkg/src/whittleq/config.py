"""YAML config files for models and experiments.

Model file schema (single class)::

    d: 4
    p0: [[1/2, 0, 0, 1/2], ...]   # nested rows or flat row-major list
    p1: ...
    r0: [-1, 0, 0, 1]
    r1: [-1, 0, 0, 1]
    n_arms: 100                  # optional for validate/oracle
    budget: 20                   # optional for validate/oracle

Several classes go under ``classes:`` as a list of arm definitions, each
with a ``count``. Probabilities may be decimals or fraction strings.

Experiment file schema::

    name: circulant_eps01
    model: circulant.yaml        # path relative to this file, or an inline mapping
    policy: {epsilon: 0.1, mode: learned-indices}
    schedule: {kind: decreasing, C: 0.3, C_prime: 1.0}
    horizon: 10000
    seeds: [0, 1, 2, 3, 4]
    cadence: 10
    baselines: [exact-indices]
"""

from __future__ import annotations

import copy
from importlib import resources
from pathlib import Path

import yaml

from .exceptions import ValidationError
from .harness import ExperimentConfig
from .model import ArmModel, BanditInstance
from .policy import PolicyConfig

PRESETS = ("circulant_eps01", "circulant_eps001", "restart_decreasing", "restart_constant")
_SCHEDULE_KEYS = {"kind", "C", "C_prime", "a_const", "b_const", "gate"}


def preset_path(name: str) -> Path:
    """Path of a shipped config; ``name`` may omit the ``.yaml`` suffix."""
    fname = name if name.endswith(".yaml") else f"{name}.yaml"
    return Path(str(resources.files("whittleq") / "presets" / fname))


def resolve(path) -> Path:
    """Return ``path`` if it exists, else the shipped preset of that name."""
    p = Path(path)
    if p.exists():
        return p
    candidate = preset_path(str(path))
    if candidate.exists():
        return candidate
    raise ValidationError(f"no such config file or preset: {path}")


def read_yaml(path) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: expected a mapping at top level")
    return data


def parse_value(text: str):
    return yaml.safe_load(text)


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``key.sub=value`` strings; values are parsed as YAML scalars."""
    data = copy.deepcopy(data)
    for item in overrides or ():
        if "=" not in item:
            raise ValidationError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        target = data
        parts = key.strip().split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise ValidationError(f"override {item!r} descends into a non-mapping")
        target[parts[-1]] = parse_value(value)
    return data


def load_model_dict(path) -> dict:
    return read_yaml(resolve(path))


def arm_models(data: dict) -> list:
    if "classes" in data:
        return [ArmModel.from_dict(entry) for entry in data["classes"]]
    return [ArmModel.from_dict(data)]


def load_experiment_dict(path, overrides=None) -> dict:
    path = resolve(path)
    data = read_yaml(path)
    model = data.get("model")
    if isinstance(model, str):
        model_path = path.parent / model
        data["model"] = read_yaml(model_path if model_path.exists() else resolve(model))
    data.setdefault("name", path.stem)
    return apply_overrides(data, overrides)


def experiment_from_dict(data: dict) -> ExperimentConfig:
    unknown = set(data) - {"name", "model", "policy", "schedule", "horizon", "seeds", "cadence", "baselines"}
    if unknown:
        raise ValidationError(f"unknown experiment fields: {sorted(unknown)}")
    if "model" not in data:
        raise ValidationError("experiment config needs a 'model'")
    schedule = dict(data.get("schedule") or {})
    bad = set(schedule) - _SCHEDULE_KEYS
    if bad:
        raise ValidationError(f"unknown schedule fields: {sorted(bad)}")
    try:
        policy = PolicyConfig(**(data.get("policy") or {}))
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad policy section: {exc}") from exc
    seeds = data.get("seeds", [0])
    if isinstance(seeds, int):
        seeds = [seeds]
    try:
        cfg = ExperimentConfig(
            instance=BanditInstance.from_dict(data["model"]),
            policy=policy,
            schedule=schedule,
            horizon=int(data.get("horizon", 10_000)),
            seeds=[int(s) for s in seeds],
            cadence=int(data.get("cadence", 1)),
            baselines=list(data.get("baselines") or []),
            name=str(data.get("name", "experiment")),
        )
        cfg.make_schedule()
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(str(exc)) from exc
    return cfg


def load_experiment(path, overrides=None) -> ExperimentConfig:
    return experiment_from_dict(load_experiment_dict(path, overrides))
