"""Server-side orchestration of one federated round.

Each round broadcasts the global model (and, when the projection hook is on,
the previous buffer gradient), runs every participating client's local update,
averages the returned models behind the secure-aggregation boundary, and then
has clients compute buffer gradients of the fresh model for the next round's
reference. The ledger counts every float that crosses the wire.

The aggregation boundary is an interface contract, not cryptography: nothing
past ``secure_aggregate`` may look at an individual client's vector, and the
test suite enforces that with a poisoning aggregator double.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .buffer import ReplayBuffer, items_to_batch, sample
from .model import Batch, ModelSpec, loss_and_grad
from .rng import rng_for, seed_for
from .strategies import StrategyConfig, client_update
from .data import TaskStream


@dataclass
class CommLedger:
    uplink_total: int = 0
    downlink_total: int = 0
    per_round_uplink: List[int] = field(default_factory=list)
    per_round_downlink: List[int] = field(default_factory=list)

    def add_round(self, uplink: int, downlink: int) -> None:
        if uplink < 0 or downlink < 0:
            raise ValueError("ledger counters are monotone")
        self.uplink_total += uplink
        self.downlink_total += downlink
        self.per_round_uplink.append(uplink)
        self.per_round_downlink.append(downlink)


@dataclass(frozen=True)
class Schedule:
    kind: str = "sync"  # "sync" | "async"
    rounds_per_task: int = 5
    samples_per_comm: Optional[int] = None
    comm_period_multiplier: float = 1.0

    def __post_init__(self):
        if self.kind not in ("sync", "async"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.rounds_per_task < 1:
            raise ValueError("rounds_per_task must be >= 1")
        if self.kind == "async" and (self.samples_per_comm or 0) < 1:
            raise ValueError("async schedule needs samples_per_comm >= 1")
        if self.comm_period_multiplier <= 0:
            raise ValueError("comm_period_multiplier must be positive")

    @property
    def effective_rounds_per_task(self) -> int:
        return max(1, round(self.rounds_per_task * self.comm_period_multiplier))


@dataclass
class ClientState:
    client_id: int
    buffer: ReplayBuffer
    task_cursor: int = 0
    offset: int = 0  # consumed samples within the current task's shard


@dataclass
class ServerState:
    model: np.ndarray
    buffer_grad: Optional[np.ndarray] = None
    round_index: int = 0
    task_index: int = 0
    ledger: CommLedger = field(default_factory=CommLedger)


def secure_aggregate(contributions: Dict[int, np.ndarray], weights=None) -> np.ndarray:
    """(Weighted) mean of per-client vectors, summed in client-id order.

    The fixed summation order makes the result bit-identical under any
    permutation of the input dict. This is the privacy boundary: callers get
    only the aggregate back.
    """
    if not contributions:
        raise ValueError("nothing to aggregate")
    ids = sorted(contributions)
    stacked = np.stack([np.asarray(contributions[i], dtype=np.float64) for i in ids])
    if stacked.ndim != 2:
        raise ValueError("contributions must be flat vectors")
    if weights is None:
        return stacked.mean(axis=0)
    wv = np.array([float(weights[i]) for i in ids], dtype=np.float64)
    if np.any(wv < 0) or wv.sum() == 0:
        raise ValueError("weights must be nonnegative and not all zero")
    return (stacked * wv[:, None]).sum(axis=0) / wv.sum()


def compute_buffer_grad(
    spec: ModelSpec,
    w: np.ndarray,
    buffer: ReplayBuffer,
    m: int,
    rng: np.random.Generator,
) -> Optional[np.ndarray]:
    """Mean gradient of the global model over sampled buffer items, or None."""
    if m < 1:
        raise ValueError("sample count must be >= 1")
    if len(buffer) == 0:
        return None
    replay = items_to_batch(sample(buffer, m, rng))
    _, grad = loss_and_grad(spec, w, replay)
    return grad


def advance_schedule(
    schedule: Schedule,
    clients: List[ClientState],
    shards: List[List[np.ndarray]],
    server: ServerState,
) -> Dict[int, List[Tuple[int, np.ndarray]]]:
    """Per-client sample grants for the next communication.

    sync: every client gets its full shard for the server's current task.
    async: every client gets exactly samples_per_comm samples in stream order,
    advancing its own cursor and crossing task boundaries mid-grant when a
    shard runs out; clients may sit on different tasks.
    """
    grants: Dict[int, List[Tuple[int, np.ndarray]]] = {}
    n_tasks = len(shards[0]) if shards else 0
    for client in clients:
        k = client.client_id
        if schedule.kind == "sync":
            idx = shards[k][server.task_index]
            grants[k] = [(server.task_index, idx)] if len(idx) else []
            continue
        budget = schedule.samples_per_comm
        segs: List[Tuple[int, np.ndarray]] = []
        while budget > 0 and client.task_cursor < n_tasks:
            shard = shards[k][client.task_cursor]
            remaining = len(shard) - client.offset
            if remaining <= 0:
                client.task_cursor += 1
                client.offset = 0
                continue
            take = min(budget, remaining)
            segs.append(
                (client.task_cursor, shard[client.offset : client.offset + take])
            )
            client.offset += take
            budget -= take
            if client.offset >= len(shard):
                client.task_cursor += 1
                client.offset = 0
        grants[k] = segs
    return grants


def _materialize(stream: TaskStream, segments) -> List[Batch]:
    out = []
    for task_id, idx in segments:
        ds = stream.tasks[task_id].train
        out.append(Batch(inputs=ds.images[idx], labels=ds.labels[idx]))
    return out


def _worker_count() -> int:
    raw = os.environ.get("CFL_FORGE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_round(
    server: ServerState,
    clients: List[ClientState],
    stream: TaskStream,
    spec: ModelSpec,
    shards: List[List[np.ndarray]],
    schedule: Schedule,
    cfg: StrategyConfig,
    master_seed: int,
    client_sampling_rate: float = 1.0,
    weighted: bool = False,
    aggregator=secure_aggregate,
) -> ServerState:
    """One communication: local updates, model aggregation, buffer-gradient aggregation.

    Client work in steps (2) and (4) is independent; with CFL_FORGE_THREADS > 1
    it runs on a thread pool, and results are identical to serial execution
    because every client owns its rng streams and aggregation order is fixed.
    """
    r = server.round_index
    pool_clients = clients
    if client_sampling_rate < 1.0:
        # subset is sampled before grants so skipped clients keep their cursors
        take = max(1, round(client_sampling_rate * len(clients)))
        part_rng = rng_for(master_seed, "participation", r)
        chosen = part_rng.choice(len(clients), size=take, replace=False)
        pool_clients = [clients[i] for i in sorted(chosen)]
    grants = advance_schedule(schedule, pool_clients, shards, server)
    participating = [c for c in pool_clients if grants.get(c.client_id)]
    if not participating:
        return server
    p = server.model.size
    uplink = 0
    downlink = 0

    # (1) broadcast the model (first round) or the buffer gradient produced at
    # the end of the previous round; either way one vector per client goes down
    downlink += len(participating) * p

    def _update(client: ClientState):
        segs = _materialize(stream, grants[client.client_id])
        return client_update(
            cfg,
            spec,
            server.model,
            segs,
            client.buffer,
            server.buffer_grad,
            server.model,
            seed_for(master_seed, "round", r, "client", client.client_id),
        )

    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_update, participating))
    else:
        results = [_update(c) for c in participating]
    local_models = {}
    for client, (w_k, buf_k) in zip(participating, results):
        client.buffer = buf_k
        local_models[client.client_id] = w_k

    # (3) models go up and are averaged behind the aggregation boundary;
    # weighted mode uses this round's granted sample counts, FedAvg style
    uplink += len(local_models) * p
    weights = None
    if weighted:
        weights = {
            c.client_id: float(sum(len(idx) for _t, idx in grants[c.client_id]))
            for c in participating
        }
    new_model = aggregator(local_models, weights)
    del local_models, results

    new_grad = server.buffer_grad
    if cfg.fed_a_gem:
        # (4) fresh model goes down again so clients can differentiate it
        # against their buffers (empty buffers are skipped, not zero-filled)
        def _buffer_grad(client: ClientState):
            return compute_buffer_grad(
                spec,
                new_model,
                client.buffer,
                cfg.batch_size,
                rng_for(master_seed, "round", r, "bufgrad", client.client_id),
            )

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                grads = list(pool.map(_buffer_grad, participating))
        else:
            grads = [_buffer_grad(c) for c in participating]
        contributions = {
            c.client_id: g for c, g in zip(participating, grads) if g is not None
        }
        downlink += len(contributions) * p
        if contributions:
            uplink += len(contributions) * p
            new_grad = aggregator(contributions)
        del contributions, grads

    ledger = server.ledger
    ledger.add_round(uplink, downlink)
    return replace(
        server,
        model=new_model,
        buffer_grad=new_grad,
        round_index=r + 1,
        ledger=ledger,
    )


def comm_cost(cfg: StrategyConfig, schedule: Schedule, p: int, k: int) -> dict:
    """Predicted per-round float counts and rounds per task.

    The projection hook doubles traffic: buffer gradients go up next to the
    models, and the freshly aggregated model goes down a second time for the
    buffer-gradient computation (the next reference rides that exchange).
    """
    if p < 1 or k < 1:
        raise ValueError("p and k must be >= 1")
    factor = 2 if cfg.fed_a_gem else 1
    return {
        "per_round_uplink": factor * k * p,
        "per_round_downlink": factor * k * p,
        "rounds_per_task": schedule.effective_rounds_per_task,
    }
