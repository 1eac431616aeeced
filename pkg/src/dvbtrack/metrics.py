"""OSPA distance on position sets and its aggregation over sensors and steps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class OspaParams:
    p: float = 1.0
    c: float = 50.0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError(f"OSPA order p must be >= 1, got {self.p}")
        if not self.c > 0:
            raise ValueError(f"OSPA cut-off c must be positive, got {self.c}")


def ospa(est, truth, params: OspaParams = OspaParams()) -> float:
    X = np.asarray(est, dtype=float).reshape(-1, 2)
    Y = np.asarray(truth, dtype=float).reshape(-1, 2)
    if len(X) > len(Y):
        X, Y = Y, X
    m, n = len(X), len(Y)
    if n == 0:
        return 0.0
    p, c = params.p, params.c
    if m == 0:
        return float(c)
    d = np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=-1)
    cost = np.minimum(d, c) ** p
    rows, cols = linear_sum_assignment(cost)
    total = cost[rows, cols].sum() + c**p * (n - m)
    return float((total / n) ** (1.0 / p))


def ospa_per_sensor(positions: np.ndarray, truth: np.ndarray, params: OspaParams = OspaParams()) -> np.ndarray:
    """OSPA for every step and belief set.

    ``positions`` is ``(steps, n_sets, K, 2)`` and ``truth`` is ``(steps, K, 2)``.
    """
    positions = np.asarray(positions)
    truth = np.asarray(truth)
    if positions.shape[0] != truth.shape[0]:
        raise ValueError(f"{positions.shape[0]} estimated steps vs {truth.shape[0]} true steps")
    out = np.empty(positions.shape[:2])
    for n in range(positions.shape[0]):
        for s in range(positions.shape[1]):
            out[n, s] = ospa(positions[n, s], truth[n], params)
    return out


def aggregate(values: np.ndarray) -> tuple[np.ndarray, float]:
    """Mean over sensors (and runs, when given as a leading axis) per step, plus the grand mean.

    ``values`` is ``(steps, sensors)`` or ``(runs, steps, sensors)``.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim == 2:
        v = v[None]
    if v.ndim != 3:
        raise ValueError(f"expected (steps, sensors) or (runs, steps, sensors), got {v.shape}")
    per_step = v.mean(axis=(0, 2))
    return per_step, float(per_step.mean())
