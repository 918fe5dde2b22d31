"""Bounded per-client replay memory.

Default insertion is streaming reservoir sampling, which keeps every observed
item in the buffer with equal probability capacity/observed. Two ablation
policies are provided: sliding_window (FIFO overwrite of the oldest slot) and
random_replace (always overwrite a uniform slot once full).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .model import Batch

POLICIES = ("reservoir", "sliding_window", "random_replace")


class BufferEmptyError(RuntimeError):
    """Sampling was requested from a buffer with no stored items."""


class MalformedBufferError(RuntimeError):
    """Stored items lack a field the caller requires (e.g. replay logits)."""


@dataclass
class BufferItem:
    x: np.ndarray
    y: int
    z: Optional[np.ndarray] = None  # teacher logits, present only for DER streams


@dataclass
class ReplayBuffer:
    capacity: int
    items: List[BufferItem] = field(default_factory=list)
    observed: int = 0

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("buffer capacity must be >= 1")

    def __len__(self) -> int:
        return len(self.items)


def insert_batch(
    buffer: ReplayBuffer, batch: Batch, policy: str, rng: np.random.Generator
) -> ReplayBuffer:
    """Stream the batch items into the buffer under the given policy.

    The observed counter advances by one per item for every policy; only the
    overwrite rule differs. The buffer is mutated in place and returned.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown insert policy {policy!r}")
    size = len(batch)
    if size == 0:
        raise ValueError("insert_batch requires a nonempty batch")
    cap = buffer.capacity
    # stream positions are known upfront, so overflow draws can be vectorized
    n_values = buffer.observed + 1 + np.arange(size)
    overflow = n_values > cap
    if policy == "reservoir":
        draws = rng.random(int(overflow.sum()))
    elif policy == "random_replace":
        draws = rng.integers(0, cap, size=int(overflow.sum()))
    else:
        draws = None
    d = 0
    for i in range(size):
        item = BufferItem(
            x=batch.inputs[i].copy(),
            y=int(batch.labels[i]),
            z=None if batch.logits is None else batch.logits[i].copy(),
        )
        if not overflow[i]:
            buffer.items.append(item)
            continue
        n = int(n_values[i])
        if policy == "reservoir":
            j = int(draws[d] * n)  # uniform slot in {0..n-1}; keep iff j < capacity
            d += 1
            if j < cap:
                buffer.items[j] = item
        elif policy == "sliding_window":
            buffer.items[(n - 1) % cap] = item
        else:
            buffer.items[int(draws[d])] = item
            d += 1
    buffer.observed += size
    return buffer


def sample(
    buffer: ReplayBuffer, m: int, rng: np.random.Generator
) -> List[BufferItem]:
    """Uniform sample without replacement of min(m, stored) items."""
    if m < 1:
        raise ValueError("sample size must be >= 1")
    if not buffer.items:
        raise BufferEmptyError("cannot sample from an empty buffer")
    k = min(m, len(buffer.items))
    idx = rng.choice(len(buffer.items), size=k, replace=False)
    return [buffer.items[int(i)] for i in idx]


def items_to_batch(items: List[BufferItem], require_logits: bool = False) -> Batch:
    """Stack stored items back into a batch for gradient computation."""
    if not items:
        raise BufferEmptyError("no items to batch")
    if require_logits and any(it.z is None for it in items):
        raise MalformedBufferError("stored items lack replay logits")
    logits = None
    if all(it.z is not None for it in items):
        logits = np.stack([it.z for it in items])
    return Batch(
        inputs=np.stack([it.x for it in items]),
        labels=np.array([it.y for it in items], dtype=np.int64),
        logits=logits,
    )
