"""Config-driven experiment execution.

One experiment = one stream construction + client partition + the federated
training loop, repeated per seed. After every task (or, for async schedules,
at evenly spaced communication checkpoints) the global model is evaluated on
every task's test set to fill one accuracy-matrix row. Everything is keyed
off the seed through named rng streams, so a (config, seed) pair fully
determines every output.
"""

from __future__ import annotations

import time
from typing import List, Optional

import numpy as np

from . import metrics as metrics_mod
from .buffer import ReplayBuffer
from .config import ExperimentConfig
from .data import (
    Dataset,
    TaskStream,
    assign_digit_pairs,
    dirichlet_partition,
    downsample,
    load_idx,
    make_domain_tasks,
    make_split_tasks,
    synth_dataset,
)
from .federation import ClientState, ServerState, run_round, secure_aggregate
from .model import ModelSpec, init_params
from .rng import seed_for


def build_model_spec(cfg: ExperimentConfig, stream: TaskStream) -> ModelSpec:
    ds = stream.tasks[0].train
    return ModelSpec(
        layer_sizes=(ds.images.shape[1], *cfg.hidden_sizes, ds.n_classes),
        activation=cfg.activation,
    )


def _split_synth(full: Dataset, n_train: int, n_test: int):
    """Per-class head/tail split so train and test share the class means."""
    tr_idx, te_idx = [], []
    for c in range(full.n_classes):
        idx = np.flatnonzero(full.labels == c)
        tr_idx.append(idx[:n_train])
        te_idx.append(idx[n_train : n_train + n_test])
    tr = np.concatenate(tr_idx)
    te = np.concatenate(te_idx)
    mk = lambda sel: Dataset(
        images=full.images[sel],
        labels=full.labels[sel],
        height=full.height,
        width=full.width,
        n_classes=full.n_classes,
    )
    return mk(tr), mk(te)


def build_stream(cfg: ExperimentConfig, seed: int) -> TaskStream:
    if cfg.dataset == "synth":
        full = synth_dataset(
            cfg.synth_n_per_class + cfg.synth_test_per_class,
            cfg.synth_classes,
            cfg.synth_input_dim,
            cfg.synth_spread,
            seed_for(seed, "synth"),
        )
        train, test = _split_synth(full, cfg.synth_n_per_class, cfg.synth_test_per_class)
    else:
        train = load_idx(cfg.idx_train_images, cfg.idx_train_labels)
        test = load_idx(cfg.idx_test_images, cfg.idx_test_labels)
        train = downsample(train, cfg.downsample)
        test = downsample(test, cfg.downsample)
    if cfg.scenario == "domain_rotate":
        return make_domain_tasks(train, cfg.tasks, "rotate", seed_for(seed, "stream"), test=test)
    if cfg.scenario == "domain_permute":
        return make_domain_tasks(train, cfg.tasks, "permute", seed_for(seed, "stream"), test=test)
    return make_split_tasks(train, cfg.tasks, test=test)


def build_shards(cfg: ExperimentConfig, stream: TaskStream, seed: int) -> List[List[np.ndarray]]:
    """Per-client, per-task training indices."""
    if cfg.partition == "digit_pairs":
        shards = assign_digit_pairs(stream, cfg.clients, seed_for(seed, "pairs"))
        return [s.task_indices for s in shards]
    out = [[] for _ in range(cfg.clients)]
    for task in stream.tasks:
        present = np.unique(task.train.labels)
        prior = np.full(len(present), 1.0 / len(present))
        parts = dirichlet_partition(
            task,
            cfg.clients,
            cfg.dirichlet_alpha,
            prior,
            seed_for(seed, "dirichlet", task.task_id),
        )
        for k in range(cfg.clients):
            out[k].append(parts[k])
    return out


def run_single_seed(
    cfg: ExperimentConfig, seed: int, aggregator=secure_aggregate
) -> dict:
    """Train through the stream for one seed and return the run report."""
    started = time.perf_counter()
    stream = build_stream(cfg, seed)
    shards = build_shards(cfg, stream, seed)
    spec = build_model_spec(cfg, stream)
    if stream.n_classes % cfg.tasks != 0 and stream.kind == "split":
        raise ValueError(
            f"{stream.n_classes} classes not divisible into {cfg.tasks} tasks"
        )
    w0 = init_params(spec, seed_for(seed, "init"))
    matrix = metrics_mod.AccuracyMatrix(n_tasks=cfg.tasks)
    matrix.baseline = metrics_mod.evaluate_row(spec, w0, stream, cfg.eval_mode)

    server = ServerState(model=w0)
    clients = [
        ClientState(client_id=k, buffer=ReplayBuffer(capacity=cfg.buffer_capacity))
        for k in range(cfg.clients)
    ]
    rounds_per_task = cfg.schedule.effective_rounds_per_task

    def _round():
        return run_round(
            server,
            clients,
            stream,
            spec,
            shards,
            cfg.schedule,
            cfg.strategy,
            master_seed=seed,
            client_sampling_rate=cfg.client_sampling_rate,
            weighted=cfg.weighted_aggregation,
            aggregator=aggregator,
        )

    # the same loop drives both schedules: sync grants follow task_index, async
    # grants follow per-client cursors, and each block of rounds ends with one
    # matrix row (a task boundary in sync, an evaluation checkpoint in async)
    for t in range(cfg.tasks):
        server.task_index = t
        for _ in range(rounds_per_task):
            server = _round()
        matrix.set_row(t, metrics_mod.evaluate_row(spec, server.model, stream, cfg.eval_mode))

    acc_series = [metrics_mod.avg_accuracy(matrix, t) for t in range(cfg.tasks)]
    fgt_series = [None] + [
        metrics_mod.avg_forgetting(matrix, t, seen_only=cfg.fgt_seen_only)
        for t in range(1, cfg.tasks)
    ]
    report = {
        "name": cfg.name,
        "scenario": cfg.scenario,
        "seed": seed,
        "config": cfg.raw,
        "baseline_accuracy": [float(b) for b in matrix.baseline],
        "accuracy_matrix": [[float(v) for v in row] for row in matrix.values],
        "avg_accuracy": acc_series,
        "avg_forgetting": fgt_series,
        "bwt": metrics_mod.bwt(matrix) if cfg.tasks >= 2 else None,
        "fwt": metrics_mod.fwt(matrix) if cfg.tasks >= 2 else None,
        "final_acc": acc_series[-1],
        "final_fgt": fgt_series[-1],
        "comm": {
            "uplink_total": server.ledger.uplink_total,
            "downlink_total": server.ledger.downlink_total,
            "per_round_uplink": server.ledger.per_round_uplink,
            "per_round_downlink": server.ledger.per_round_downlink,
            "rounds": server.round_index,
        },
        "n_params": spec.n_params,
        "wall_clock_seconds": time.perf_counter() - started,
        "final_model": None,
    }
    report["_final_params"] = server.model  # stripped before serialization
    report["_model_spec"] = spec
    return report


def run_seeds(
    cfg: ExperimentConfig,
    seeds: Optional[List[int]] = None,
    aggregator=secure_aggregate,
) -> List[dict]:
    return [run_single_seed(cfg, s, aggregator=aggregator) for s in (seeds or cfg.seeds)]
