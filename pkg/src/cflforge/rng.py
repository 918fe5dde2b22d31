"""Deterministic seed fan-out for experiment components.

Every randomness consumer derives its own stream from the master seed plus a
tuple of labels (e.g. round index, client id, purpose string). Labels are
hashed with SHA-256 into extra entropy words for ``numpy.random.SeedSequence``,
so streams are independent and adding a new consumer (say, one more client)
never perturbs the draws of existing ones.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_word(part) -> int:
    # repr() is stable for ints and strs; hash() is salted per process and must not be used
    digest = hashlib.sha256(repr(part).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def seed_for(master: int, *key) -> np.random.SeedSequence:
    """SeedSequence for the stream named by ``key`` under ``master``."""
    return np.random.SeedSequence([int(master)] + [_key_word(p) for p in key])


def rng_for(master: int, *key) -> np.random.Generator:
    """Generator for the stream named by ``key`` under ``master``."""
    return np.random.default_rng(seed_for(master, *key))
