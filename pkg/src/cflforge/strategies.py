"""Client-side local update rules.

A strategy is a composition: a base gradient (plain cross-entropy, locally
projected A-GEM, or DER with logit replay), an optional proximal pull toward
the round-start global model, and an optional refinement against the
server-aggregated buffer gradient. Replay-buffer insertion rides along with
every buffer-owning strategy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .buffer import ReplayBuffer, insert_batch, items_to_batch, sample
from .model import Batch, ModelSpec, backward, forward, loss_and_grad
from .projection import (
    DegenerateReferenceError,
    DegenerateRotationError,
    RefineConfig,
    project_conflict,
    refine,
)

BASES = ("plain", "agem_local", "der")


@dataclass(frozen=True)
class StrategyConfig:
    lr: float
    batch_size: int
    base: str = "plain"
    fed_a_gem: bool = False
    refine: RefineConfig = field(default_factory=RefineConfig)
    fedprox_mu: float = 0.0
    der_lambda: float = 0.0
    local_epochs: int = 1
    insert_policy: str = "reservoir"
    insert_first_epoch_only: bool = False

    def __post_init__(self):
        if self.base not in BASES:
            raise ValueError(f"unknown base strategy {self.base!r}")
        if self.lr <= 0 or self.batch_size < 1 or self.local_epochs < 1:
            raise ValueError("lr, batch_size and local_epochs must be positive")
        if self.fedprox_mu < 0 or self.der_lambda < 0:
            raise ValueError("fedprox_mu and der_lambda must be nonnegative")
        if self.der_lambda > 0 and self.base != "der":
            raise ValueError("der_lambda only applies to the der base strategy")

    @property
    def owns_buffer(self) -> bool:
        return self.fed_a_gem or self.base in ("agem_local", "der")


def base_gradient_plain(spec: ModelSpec, w: np.ndarray, batch: Batch) -> np.ndarray:
    """Mean cross-entropy gradient on the batch."""
    _, grad = loss_and_grad(spec, w, batch)
    return grad


def base_gradient_agem(
    spec: ModelSpec,
    w: np.ndarray,
    batch: Batch,
    buffer: ReplayBuffer,
    m: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Batch gradient locally projected against a buffer-batch gradient.

    With an empty buffer there is nothing to protect and the plain gradient
    is returned. The federation-level refinement is applied afterwards by
    client_update, giving the two-stage projection order.
    """
    g_c = base_gradient_plain(spec, w, batch)
    if len(buffer) == 0:
        return g_c
    replay = items_to_batch(sample(buffer, m, rng))
    _, g_b = loss_and_grad(spec, w, replay)
    try:
        return project_conflict(g_c, g_b)
    except DegenerateReferenceError:
        return g_c


def base_gradient_der(
    spec: ModelSpec,
    w: np.ndarray,
    batch: Batch,
    buffer: ReplayBuffer,
    lam: float,
    m: int,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """Cross-entropy plus logit-distillation gradient, and the batch logits.

    The regularizer is lam * ||Z' - h(X'; w)||^2 over replayed items with their
    stored logits Z'. The returned logits Z are the pre-update responses on the
    current batch, to be stored alongside it.
    """
    z_current = forward(spec, w, batch.inputs)
    _, grad = loss_and_grad(spec, w, batch)
    if len(buffer) > 0:
        # the replay draw happens whenever the buffer is nonempty, so the
        # sampling stream stays aligned across lambda settings
        replay = items_to_batch(sample(buffer, m, rng), require_logits=True)
        if lam > 0:
            z_now = forward(spec, w, replay.inputs)
            # d/dw of lam * sum((Z' - h)^2) backpropagates 2*lam*(h - Z')
            grad = grad + backward(
                spec, w, replay.inputs, 2.0 * lam * (z_now - replay.logits)
            )
    return grad, z_current


def client_update(
    cfg: StrategyConfig,
    spec: ModelSpec,
    w: np.ndarray,
    segments: List[Batch],
    buffer: ReplayBuffer,
    g_ref: Optional[np.ndarray],
    w_global: np.ndarray,
    seed: np.random.SeedSequence,
) -> Tuple[np.ndarray, ReplayBuffer]:
    """Run the local epochs over the granted samples and return (w', buffer).

    ``segments`` holds the samples granted for this communication, one batch
    object per contiguous task segment (more than one only when an async grant
    crosses a task boundary). Each epoch reshuffles samples within a segment
    and walks minibatches of cfg.batch_size. Four dedicated rng streams
    (shuffle, buffer sampling, buffer insertion, refine rate) keep the
    composition switches from perturbing one another.
    """
    if not segments or all(len(s) == 0 for s in segments):
        return w, buffer
    shuffle_ss, sample_ss, insert_ss, rate_ss = seed.spawn(4)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    sample_rng = np.random.default_rng(sample_ss)
    insert_rng = np.random.default_rng(insert_ss)
    rate_rng = np.random.default_rng(rate_ss)
    w = np.asarray(w, dtype=np.float64).copy()
    for epoch in range(cfg.local_epochs):
        for segment in segments:
            if len(segment) == 0:
                continue
            order = shuffle_rng.permutation(len(segment))
            for start in range(0, len(segment), cfg.batch_size):
                take = order[start : start + cfg.batch_size]
                batch = Batch(inputs=segment.inputs[take], labels=segment.labels[take])
                z_store = None
                if cfg.base == "plain":
                    g = base_gradient_plain(spec, w, batch)
                elif cfg.base == "agem_local":
                    g = base_gradient_agem(
                        spec, w, batch, buffer, cfg.batch_size, sample_rng
                    )
                else:
                    g, z_store = base_gradient_der(
                        spec, w, batch, buffer, cfg.der_lambda, cfg.batch_size, sample_rng
                    )
                if cfg.fedprox_mu > 0:
                    g = g + cfg.fedprox_mu * (w - w_global)
                if cfg.fed_a_gem and g_ref is not None:
                    try:
                        g = refine(g, g_ref, cfg.refine, rate_rng)
                    except DegenerateRotationError:
                        pass
                w = w - cfg.lr * g
                if cfg.owns_buffer and (epoch == 0 or not cfg.insert_first_epoch_only):
                    stored = batch if z_store is None else replace_logits(batch, z_store)
                    insert_batch(buffer, stored, cfg.insert_policy, insert_rng)
    return w, buffer


def replace_logits(batch: Batch, logits: np.ndarray) -> Batch:
    return Batch(inputs=batch.inputs, labels=batch.labels, logits=logits)
