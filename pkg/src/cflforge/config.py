"""Experiment configuration: strict flat-JSON parsing with documented defaults.

Unknown keys are rejected by name, every value is type- and range-checked,
and defaults are filled so a parsed config is always complete. Defaults:
buffer_capacity=200, dirichlet_alpha=0.3, rounds_per_task=5, local_epochs=1,
partition digit_pairs for domain scenarios and dirichlet otherwise.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import List, Optional

from .federation import Schedule
from .projection import CONDITIONS, MODES, RefineConfig
from .strategies import BASES, StrategyConfig
from .buffer import POLICIES

SCENARIOS = ("domain_rotate", "domain_permute", "class_il", "task_il")
PARTITIONS = ("dirichlet", "digit_pairs")
DATASETS = ("synth", "idx")


class ConfigError(ValueError):
    """The configuration file is missing, malformed, or violates a constraint."""


@dataclass
class ExperimentConfig:
    scenario: str
    dataset: str
    name: str
    tasks: int
    clients: int
    local_epochs: int
    buffer_capacity: int
    dirichlet_alpha: float
    partition: str
    hidden_sizes: List[int]
    activation: str
    client_sampling_rate: float
    seeds: List[int]
    output_dir: str
    strategy: StrategyConfig
    schedule: Schedule
    synth_n_per_class: int = 100
    synth_test_per_class: int = 25
    synth_classes: int = 10
    synth_input_dim: int = 16
    synth_spread: float = 0.1
    idx_train_images: Optional[str] = None
    idx_train_labels: Optional[str] = None
    idx_test_images: Optional[str] = None
    idx_test_labels: Optional[str] = None
    downsample: int = 1
    fgt_seen_only: bool = False
    weighted_aggregation: bool = False
    raw: dict = field(default_factory=dict)

    @property
    def eval_mode(self) -> str:
        if self.scenario == "task_il":
            return "task_il"
        if self.scenario == "class_il":
            return "class_il"
        return "domain_il"


def _expect(raw, key, kind, check=None, why=""):
    value = raw[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is not None and (not isinstance(value, kind) or isinstance(value, bool) and kind is not bool):
        raise ConfigError(f"{key}: expected {kind.__name__}, got {type(value).__name__}")
    if check is not None and not check(value):
        raise ConfigError(f"{key}: {why} (got {value!r})")
    return value


_SCHEMA_KEYS = {
    "scenario", "dataset", "name", "tasks", "clients", "rounds_per_task",
    "local_epochs", "batch_size", "lr", "buffer_capacity", "dirichlet_alpha",
    "partition", "hidden_sizes", "activation", "client_sampling_rate", "seeds",
    "output_dir", "base", "fed_a_gem", "refine_mode", "refine_condition",
    "refine_rate_percent", "fedprox_mu", "der_lambda", "insert_policy",
    "insert_first_epoch_only", "schedule", "samples_per_comm",
    "comm_period_multiplier", "synth_n_per_class", "synth_test_per_class",
    "synth_classes", "synth_input_dim", "synth_spread", "idx_train_images",
    "idx_train_labels", "idx_test_images", "idx_test_labels", "downsample",
    "fgt_seen_only", "weighted_aggregation",
}


def parse_config_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = sorted(set(raw) - _SCHEMA_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    for required in ("scenario", "dataset"):
        if required not in raw:
            raise ConfigError(f"missing required key: {required}")

    scenario = _expect(raw, "scenario", str, lambda v: v in SCENARIOS,
                       f"must be one of {SCENARIOS}")
    dataset = _expect(raw, "dataset", str, lambda v: v in DATASETS,
                      f"must be one of {DATASETS}")

    defaults = {
        "name": None,
        "tasks": 5,
        "clients": 5,
        "rounds_per_task": 5,
        "local_epochs": 1,
        "batch_size": 10,
        "lr": 0.1,
        "buffer_capacity": 200,
        "dirichlet_alpha": 0.3,
        "partition": "digit_pairs" if scenario.startswith("domain") else "dirichlet",
        "hidden_sizes": [32],
        "activation": "relu",
        "client_sampling_rate": 1.0,
        "seeds": [0],
        "output_dir": "runs",
        "base": "plain",
        "fed_a_gem": False,
        "refine_mode": "project",
        "refine_condition": "conflict_only",
        "refine_rate_percent": 100.0,
        "fedprox_mu": 0.0,
        "der_lambda": 0.0,
        "insert_policy": "reservoir",
        "insert_first_epoch_only": False,
        "schedule": "sync",
        "samples_per_comm": None,
        "comm_period_multiplier": 1.0,
        "synth_n_per_class": 100,
        "synth_test_per_class": 25,
        "synth_classes": 10,
        "synth_input_dim": 16,
        "synth_spread": 0.1,
        "idx_train_images": None,
        "idx_train_labels": None,
        "idx_test_images": None,
        "idx_test_labels": None,
        "downsample": 1,
        "fgt_seen_only": False,
        "weighted_aggregation": False,
    }
    merged = {**defaults, **raw}

    tasks = _expect(merged, "tasks", int, lambda v: v >= 1, "must be >= 1")
    clients = _expect(merged, "clients", int, lambda v: v >= 1, "must be >= 1")
    rounds = _expect(merged, "rounds_per_task", int, lambda v: v >= 1, "must be >= 1")
    epochs = _expect(merged, "local_epochs", int, lambda v: v >= 1, "must be >= 1")
    batch_size = _expect(merged, "batch_size", int, lambda v: v >= 1, "must be >= 1")
    lr = _expect(merged, "lr", float, lambda v: v > 0, "must be positive")
    capacity = _expect(merged, "buffer_capacity", int, lambda v: v >= 1, "must be >= 1")
    alpha = _expect(merged, "dirichlet_alpha", float, lambda v: v > 0, "must be positive")
    partition = _expect(merged, "partition", str, lambda v: v in PARTITIONS,
                        f"must be one of {PARTITIONS}")
    hidden = _expect(merged, "hidden_sizes", list,
                     lambda v: all(isinstance(s, int) and not isinstance(s, bool) and s >= 1 for s in v),
                     "must be a list of positive ints")
    activation = _expect(merged, "activation", str, lambda v: v in ("relu", "tanh"),
                         "must be relu or tanh")
    rate = _expect(merged, "client_sampling_rate", float, lambda v: 0 < v <= 1,
                   "must lie in (0, 1]")
    seeds = _expect(merged, "seeds", list,
                    lambda v: len(v) >= 1 and all(isinstance(s, int) and not isinstance(s, bool) for s in v),
                    "must be a nonempty list of ints")
    output_dir = _expect(merged, "output_dir", str, lambda v: len(v) > 0, "must be nonempty")

    base = _expect(merged, "base", str, lambda v: v in BASES, f"must be one of {BASES}")
    fed_a_gem = _expect(merged, "fed_a_gem", bool)
    refine_mode = _expect(merged, "refine_mode", str, lambda v: v in MODES,
                          f"must be one of {MODES}")
    refine_condition = _expect(merged, "refine_condition", str, lambda v: v in CONDITIONS,
                               f"must be one of {CONDITIONS}")
    rate_percent = _expect(merged, "refine_rate_percent", float,
                           lambda v: 0 <= v <= 100, "must lie in [0, 100]")
    mu = _expect(merged, "fedprox_mu", float, lambda v: v >= 0, "must be nonnegative")
    lam = _expect(merged, "der_lambda", float, lambda v: v >= 0, "must be nonnegative")
    if lam > 0 and base != "der":
        raise ConfigError("der_lambda: only applies when base is 'der'")
    policy = _expect(merged, "insert_policy", str, lambda v: v in POLICIES,
                     f"must be one of {POLICIES}")
    first_only = _expect(merged, "insert_first_epoch_only", bool)
    sched_kind = _expect(merged, "schedule", str, lambda v: v in ("sync", "async"),
                         "must be sync or async")
    spc = merged["samples_per_comm"]
    if spc is not None:
        spc = _expect(merged, "samples_per_comm", int, lambda v: v >= 1, "must be >= 1")
    if sched_kind == "async" and spc is None:
        raise ConfigError("samples_per_comm: required for the async schedule")
    mult = _expect(merged, "comm_period_multiplier", float, lambda v: v > 0,
                   "must be positive")

    n_per = _expect(merged, "synth_n_per_class", int, lambda v: v >= 1, "must be >= 1")
    n_test = _expect(merged, "synth_test_per_class", int, lambda v: v >= 1, "must be >= 1")
    n_classes = _expect(merged, "synth_classes", int, lambda v: v >= 2, "must be >= 2")
    input_dim = _expect(merged, "synth_input_dim", int, lambda v: v >= 1, "must be >= 1")
    spread = _expect(merged, "synth_spread", float, lambda v: v >= 0, "must be nonnegative")
    downsample = _expect(merged, "downsample", int, lambda v: v >= 1, "must be >= 1")
    fgt_seen_only = _expect(merged, "fgt_seen_only", bool)
    weighted = _expect(merged, "weighted_aggregation", bool)

    if dataset == "idx":
        for key in ("idx_train_images", "idx_train_labels", "idx_test_images", "idx_test_labels"):
            if not isinstance(merged[key], str) or not merged[key]:
                raise ConfigError(f"{key}: required path for dataset 'idx'")
    if scenario in ("class_il", "task_il"):
        n_cls = n_classes if dataset == "synth" else None
        if n_cls is not None and n_cls % tasks != 0:
            raise ConfigError(f"tasks: {n_cls} classes not divisible into {tasks} tasks")
        if partition == "digit_pairs":
            raise ConfigError("partition: digit_pairs requires a domain scenario")

    name = merged["name"]
    if name is None:
        parts = [base]
        if mu > 0:
            parts.append("fedprox")
        if fed_a_gem:
            parts.append("fedagem")
        name = "+".join(parts)
    elif not isinstance(name, str) or not name:
        raise ConfigError("name: must be a nonempty string")

    strategy = StrategyConfig(
        lr=lr,
        batch_size=batch_size,
        base=base,
        fed_a_gem=fed_a_gem,
        refine=RefineConfig(
            mode=refine_mode, condition=refine_condition, rate_percent=rate_percent
        ),
        fedprox_mu=mu,
        der_lambda=lam,
        local_epochs=epochs,
        insert_policy=policy,
        insert_first_epoch_only=first_only,
    )
    schedule = Schedule(
        kind=sched_kind,
        rounds_per_task=rounds,
        samples_per_comm=spc,
        comm_period_multiplier=mult,
    )
    echo = dict(merged)
    echo["name"] = name
    return ExperimentConfig(
        scenario=scenario,
        dataset=dataset,
        name=name,
        tasks=tasks,
        clients=clients,
        local_epochs=epochs,
        buffer_capacity=capacity,
        dirichlet_alpha=alpha,
        partition=partition,
        hidden_sizes=list(hidden),
        activation=activation,
        client_sampling_rate=rate,
        seeds=list(seeds),
        output_dir=output_dir,
        strategy=strategy,
        schedule=schedule,
        synth_n_per_class=n_per,
        synth_test_per_class=n_test,
        synth_classes=n_classes,
        synth_input_dim=input_dim,
        synth_spread=spread,
        idx_train_images=merged["idx_train_images"],
        idx_train_labels=merged["idx_train_labels"],
        idx_test_images=merged["idx_test_images"],
        idx_test_labels=merged["idx_test_labels"],
        downsample=downsample,
        fgt_seen_only=fgt_seen_only,
        weighted_aggregation=weighted,
        raw=echo,
    )


def parse_config(path: str) -> ExperimentConfig:
    """Load and validate a flat JSON experiment configuration."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config_dict(raw)
