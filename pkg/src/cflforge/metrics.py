"""Accuracy matrix and the derived retention metrics.

The matrix holds a[t][i]: percent accuracy on task i's test set after training
through task t. Rows are filled in training order and include future tasks,
which the forward-transfer metric needs. Average accuracy, average forgetting,
backward transfer and forward transfer are literal evaluations of their
defining formulas over this matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import TaskStream
from .model import ModelSpec, predict

MODES = ("class_il", "task_il", "domain_il")


@dataclass
class AccuracyMatrix:
    n_tasks: int
    values: np.ndarray = None
    baseline: np.ndarray = None  # accuracy per task at random initialization
    rows_filled: int = 0

    def __post_init__(self):
        if self.values is None:
            self.values = np.full((self.n_tasks, self.n_tasks), np.nan)
        if self.baseline is None:
            self.baseline = np.full(self.n_tasks, np.nan)

    def set_row(self, t: int, row: np.ndarray) -> None:
        if t != self.rows_filled:
            raise ValueError("rows must be filled in training order")
        row = np.asarray(row, dtype=np.float64)
        if row.shape != (self.n_tasks,):
            raise ValueError("row length must equal the task count")
        if np.any(row < 0) or np.any(row > 100):
            raise ValueError("accuracies are percentages in [0, 100]")
        self.values[t] = row
        self.rows_filled = t + 1


def evaluate_row(
    spec: ModelSpec, w: np.ndarray, stream: TaskStream, mode: str
) -> np.ndarray:
    """Percent accuracy of w on every task's test set.

    task_il restricts the argmax to the task's class set (task identity given
    at inference); class_il and domain_il use the unrestricted argmax.
    """
    if mode not in MODES:
        raise ValueError(f"unknown evaluation mode {mode!r}")
    out = np.empty(len(stream))
    for i, task in enumerate(stream.tasks):
        mask = task.class_set if mode == "task_il" else None
        pred = predict(spec, w, task.test.images, class_mask=mask)
        out[i] = 100.0 * float(np.mean(pred == task.test.labels))
    return out


def _require_rows(m: AccuracyMatrix, upto: int) -> None:
    if m.rows_filled <= upto:
        raise ValueError(f"row {upto} not filled yet")


def avg_accuracy(m: AccuracyMatrix, t: int) -> float:
    """Mean accuracy over tasks 0..t after training through task t (0-based)."""
    _require_rows(m, t)
    return float(np.mean(m.values[t, : t + 1]))


def avg_forgetting(m: AccuracyMatrix, t: int, seen_only: bool = False) -> float:
    """Mean over earlier tasks of (best earlier accuracy - current accuracy).

    The inner best ranges over all rows 0..t-1, including rows recorded before
    a task was trained; seen_only=True restricts it to rows >= the task index.
    """
    if t < 1:
        raise ValueError("forgetting needs at least two trained tasks")
    _require_rows(m, t)
    drops = []
    for i in range(t):
        j_from = i if seen_only else 0
        best = float(np.max(m.values[j_from:t, i]))
        drops.append(best - float(m.values[t, i]))
    return float(np.mean(drops))


def bwt(m: AccuracyMatrix) -> float:
    """Mean over earlier tasks of (final accuracy - accuracy when trained)."""
    T = m.n_tasks
    if T < 2:
        raise ValueError("backward transfer needs at least two tasks")
    _require_rows(m, T - 1)
    return float(np.mean([m.values[T - 1, i] - m.values[i, i] for i in range(T - 1)]))


def fwt(m: AccuracyMatrix) -> float:
    """Mean over later tasks of (accuracy just before training it - baseline)."""
    T = m.n_tasks
    if T < 2:
        raise ValueError("forward transfer needs at least two tasks")
    _require_rows(m, T - 1)
    if np.any(np.isnan(m.baseline[1:])):
        raise ValueError("baseline accuracies not recorded")
    return float(
        np.mean([m.values[i - 1, i] - m.baseline[i] for i in range(1, T)])
    )
