"""Synchronous distributed average consensus with Metropolis weights."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .scenario import SensorGraph


@dataclass(frozen=True)
class WeightAssignment:
    """Metropolis weights for one round; ``matrix[s, j]`` is W_sj (diagonal is W_ss)."""

    matrix: np.ndarray
    round: int = 0

    @property
    def n_sensors(self) -> int:
        return self.matrix.shape[0]

    def self_weight(self, s: int) -> float:
        return float(self.matrix[s, s])

    def neighbor_weights(self, s: int) -> dict[int, float]:
        row = self.matrix[s]
        return {int(j): float(row[j]) for j in np.flatnonzero(row) if j != s}


def metropolis_weights(graph: SensorGraph, round: int = 0) -> WeightAssignment:
    A = graph.adjacency(round)
    deg = A.sum(axis=1)
    W = np.where(A, 1.0 / (1.0 + np.maximum(deg[:, None], deg[None, :])), 0.0)
    W[np.diag_indices_from(W)] = 1.0 - W.sum(axis=1)
    return WeightAssignment(W, round)


def consensus_round(values: np.ndarray, weights: WeightAssignment) -> np.ndarray:
    """One synchronous mixing step; ``values`` has one row per sensor."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] != weights.n_sensors:
        raise ValueError(
            f"got {values.shape[0]} node states for a {weights.n_sensors}-node graph"
        )
    flat = values.reshape(values.shape[0], -1)
    return (weights.matrix @ flat).reshape(values.shape)


def disagreement(values: np.ndarray) -> float:
    """Largest spread ``max_s x - min_s x`` over all scalar components."""
    flat = np.asarray(values).reshape(len(values), -1)
    if flat.size == 0:
        return 0.0
    return float(np.max(flat.max(axis=0) - flat.min(axis=0)))


class ConsensusRunner:
    """Caches per-round weights of a graph for repeated consensus calls."""

    def __init__(self, graph: SensorGraph):
        self.graph = graph
        self._weights = [metropolis_weights(graph, m) for m in range(graph.n_rounds)]

    def weights(self, m: int) -> WeightAssignment:
        return self._weights[m % len(self._weights)]

    def run(
        self,
        values: np.ndarray,
        iterations: int,
        tol: float | None = None,
        trace: Callable[[int, np.ndarray], None] | None = None,
    ) -> np.ndarray:
        if iterations < 0:
            raise ValueError("iterations must be >= 0")
        x = np.asarray(values, dtype=float)
        scale = float(np.max(np.abs(x))) if x.size else 0.0
        for m in range(iterations):
            if tol is not None and disagreement(x) <= tol * max(scale, 1e-300):
                break
            x = consensus_round(x, self.weights(m))
            if trace is not None:
                trace(m + 1, x)
        return x


def run_consensus(
    values: np.ndarray,
    graph: SensorGraph,
    iterations: int,
    tol: float | None = None,
    trace: Callable[[int, np.ndarray], None] | None = None,
) -> np.ndarray:
    """Apply ``iterations`` Metropolis rounds (round ``m`` uses the graph's ``m``-th edge set).

    With ``tol`` set, stops early once the disagreement falls below ``tol``
    relative to the largest initial magnitude; ``iterations`` is then a cap.
    """
    return ConsensusRunner(graph).run(values, iterations, tol=tol, trace=trace)
