"""Conflict-aware gradient refinement.

The canonical rule removes from a gradient its component along a reference
direction whenever the two conflict (non-positive inner product), leaving the
result orthogonal to the reference. The ablation variants (average, rotate,
project_scale), the always-fire condition and the probabilistic firing rate
are configurable through RefineConfig.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MODES = ("project", "average", "rotate", "project_scale")
CONDITIONS = ("conflict_only", "always")


class DegenerateReferenceError(ValueError):
    """The reference direction has zero norm."""


class DegenerateRotationError(ValueError):
    """Rotation target g + g_ref has zero norm (exactly anti-parallel inputs)."""


@dataclass(frozen=True)
class RefineConfig:
    mode: str = "project"
    condition: str = "conflict_only"
    rate_percent: float = 100.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown refine mode {self.mode!r}")
        if self.condition not in CONDITIONS:
            raise ValueError(f"unknown refine condition {self.condition!r}")
        if not 0.0 <= self.rate_percent <= 100.0:
            raise ValueError("rate_percent must lie in [0, 100]")


def project_conflict(g: np.ndarray, g_ref: np.ndarray) -> np.ndarray:
    """Remove the g_ref component from g iff the two conflict.

    Returns g unchanged when the inner product is positive; otherwise returns
    g - (g.g_ref / g_ref.g_ref) g_ref, which is orthogonal to g_ref.
    """
    g = np.asarray(g, dtype=np.float64)
    g_ref = np.asarray(g_ref, dtype=np.float64)
    if g.shape != g_ref.shape:
        raise ValueError("gradient and reference must have the same length")
    ref_sq = float(g_ref @ g_ref)
    if ref_sq == 0.0:
        raise DegenerateReferenceError("reference gradient has zero norm")
    dot = float(g @ g_ref)
    if dot > 0.0:
        return g.copy()
    return g - (dot / ref_sq) * g_ref


def refine(
    g: np.ndarray,
    g_ref,
    cfg: RefineConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Apply the configured refinement when the firing condition and rate allow.

    A missing or zero reference makes this the identity (no reference exists
    before the first aggregation round). The rate draw always comes from the
    caller-supplied rng, which is expected to be a dedicated stream.
    """
    g = np.asarray(g, dtype=np.float64)
    if g_ref is None:
        return g.copy()
    g_ref = np.asarray(g_ref, dtype=np.float64)
    if g.shape != g_ref.shape:
        raise ValueError("gradient and reference must have the same length")
    ref_sq = float(g_ref @ g_ref)
    if ref_sq == 0.0:
        return g.copy()
    dot = float(g @ g_ref)
    # the indicator treats an exact right angle as conflict; projection is a no-op there
    fires = cfg.condition == "always" or dot <= 0.0
    if not fires:
        return g.copy()
    if not rng.random() < cfg.rate_percent / 100.0:
        return g.copy()
    if cfg.mode == "average":
        return 0.5 * (g + g_ref)
    if cfg.mode == "rotate":
        s = g + g_ref
        s_norm = float(np.linalg.norm(s))
        if s_norm == 0.0:
            raise DegenerateRotationError("g and g_ref are exactly anti-parallel")
        return float(np.linalg.norm(g)) * s / s_norm
    projected = g - (dot / ref_sq) * g_ref
    if cfg.mode == "project":
        return projected
    # project_scale: restore the original magnitude; a zero residual stays zero
    p_norm = float(np.linalg.norm(projected))
    if p_norm == 0.0:
        return projected
    return projected * (float(np.linalg.norm(g)) / p_norm)
