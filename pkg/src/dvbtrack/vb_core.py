"""Coordinate-ascent variational updates for NHPP multi-object tracking.

Association weights for one sensor are a plain ``(M, K+1)`` array whose
column 0 is the clutter hypothesis and column ``k`` is target ``k``. Beliefs
for the ``K`` targets are one batched :class:`GaussianBelief`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .models import (
    MEAS_DIM,
    GaussianBelief,
    NumericalError,
    SensorModel,
    log_gaussian,
    symmetrize,
)
from .scenario import MeasurementBatch

# Summed precision below this trace is treated as "no evidence" for a target.
ZERO_PRECISION = 1e-12
STAT_SIZE = 5
MEAN_TOL = 1e-6
ASSOC_TOL = 1e-8


@dataclass(frozen=True)
class ConsensusStat:
    """Per-target information contributions: ``omega1`` (K, 2, 2) and ``omega2`` (K, 2)."""

    omega1: np.ndarray
    omega2: np.ndarray

    @property
    def n_targets(self) -> int:
        return self.omega2.shape[0]

    def pack(self) -> np.ndarray:
        """Flatten to ``5K`` scalars: the 3 unique entries of omega1 then omega2, per target."""
        o1 = self.omega1
        return np.column_stack([o1[:, 0, 0], o1[:, 0, 1], o1[:, 1, 1], self.omega2]).ravel()

    @classmethod
    def unpack(cls, flat: np.ndarray) -> "ConsensusStat":
        v = np.asarray(flat, dtype=float).reshape(-1, STAT_SIZE)
        o1 = np.empty((len(v), 2, 2))
        o1[:, 0, 0] = v[:, 0]
        o1[:, 0, 1] = o1[:, 1, 0] = v[:, 1]
        o1[:, 1, 1] = v[:, 2]
        return cls(o1, v[:, 3:5].copy())

    def __add__(self, other: "ConsensusStat") -> "ConsensusStat":
        return ConsensusStat(self.omega1 + other.omega1, self.omega2 + other.omega2)

    def scaled(self, a: float) -> "ConsensusStat":
        return ConsensusStat(a * self.omega1, a * self.omega2)


@dataclass(frozen=True)
class PseudoMeasurement:
    """Per-target synthetic observation. ``valid[k]`` False means skip the update."""

    y_bar: np.ndarray
    r_bar: np.ndarray
    valid: np.ndarray


def normalize_log_weights(logw: np.ndarray) -> np.ndarray:
    top = np.max(logw, axis=1, keepdims=True) if logw.size else np.zeros((len(logw), 1))
    if not np.all(np.isfinite(top)):
        raise NumericalError("measurement has zero weight under every origin (all Poisson rates zero?)")
    w = np.exp(logw - top)
    return w / w.sum(axis=1, keepdims=True)


def _clutter_log_weight(sensor: SensorModel) -> float:
    with np.errstate(divide="ignore"):
        return float(np.log(sensor.clutter_rate) - np.log(sensor.volume))


def _log_rates(sensor: SensorModel) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(sensor.target_rates)


def init_associations(
    batch: MeasurementBatch, sensor: SensorModel, predicted: GaussianBelief
) -> np.ndarray:
    y = batch.measurements
    H = sensor.H
    logw = np.empty((len(y), sensor.n_targets + 1))
    logw[:, 0] = _clutter_log_weight(sensor)
    if sensor.n_targets:
        mean = predicted.mean @ H.T
        S = symmetrize(H @ predicted.cov @ H.T + sensor.noise)
        logw[:, 1:] = _log_rates(sensor) + log_gaussian(y[:, None, :], mean[None], S[None])
    return normalize_log_weights(logw)


def update_associations(
    batch: MeasurementBatch, sensor: SensorModel, posterior: GaussianBelief
) -> np.ndarray:
    y = batch.measurements
    H = sensor.H
    logw = np.empty((len(y), sensor.n_targets + 1))
    logw[:, 0] = _clutter_log_weight(sensor)
    if sensor.n_targets:
        mean = posterior.mean @ H.T
        # log of exp(-0.5 tr(R^-1 H Sigma H^T)), added to the Gaussian log-density
        spread = H @ posterior.cov @ H.T
        log_trace = -0.5 * np.einsum("kij,kji->k", sensor.noise_inv, spread)
        logw[:, 1:] = (
            _log_rates(sensor)
            + log_gaussian(y[:, None, :], mean[None], sensor.noise[None])
            + log_trace
        )
    return normalize_log_weights(logw)


def local_stats(batch: MeasurementBatch, sensor: SensorModel, assoc: np.ndarray) -> ConsensusStat:
    y = batch.measurements
    assoc = np.asarray(assoc, dtype=float)
    if assoc.shape != (len(y), sensor.n_targets + 1):
        raise ValueError(f"association shape {assoc.shape} does not match batch of {len(y)}")
    q = assoc[:, 1:]
    mass = q.sum(axis=0)
    weighted_sum = q.T @ y if len(y) else np.zeros((sensor.n_targets, MEAS_DIM))
    Rinv = sensor.noise_inv
    omega1 = Rinv * mass[:, None, None]
    omega2 = np.einsum("kij,kj->ki", Rinv, weighted_sum)
    return ConsensusStat(omega1, omega2)


def pseudo_measurements(omega1: np.ndarray, omega2: np.ndarray) -> PseudoMeasurement:
    omega1 = symmetrize(np.asarray(omega1, dtype=float))
    omega2 = np.asarray(omega2, dtype=float)
    K = omega2.shape[0]
    valid = np.trace(omega1, axis1=1, axis2=2) > ZERO_PRECISION
    safe = np.where(valid[:, None, None], omega1, np.eye(MEAS_DIM))
    r_bar = symmetrize(np.linalg.inv(safe))
    y_bar = np.einsum("kij,kj->ki", r_bar, omega2)
    r_bar = np.where(valid[:, None, None], r_bar, np.inf)
    y_bar = np.where(valid[:, None], y_bar, np.nan)
    return PseudoMeasurement(y_bar.reshape(K, MEAS_DIM), r_bar.reshape(K, MEAS_DIM, MEAS_DIM), valid)


def fuse_stats_centralised(stats: Sequence[ConsensusStat]) -> PseudoMeasurement:
    if not stats:
        raise ValueError("need statistics from at least one sensor")
    omega1 = np.sum([s.omega1 for s in stats], axis=0)
    omega2 = np.sum([s.omega2 for s in stats], axis=0)
    return pseudo_measurements(omega1, omega2)


def fuse_stats_distributed(avg: ConsensusStat, n_sensors: int) -> PseudoMeasurement:
    return pseudo_measurements(n_sensors * avg.omega1, n_sensors * avg.omega2)


def update_state(predicted: GaussianBelief, pm: PseudoMeasurement, H: np.ndarray) -> GaussianBelief:
    """Kalman update of each target with its pseudo-measurement (Joseph form)."""
    P = predicted.cov
    mu = predicted.mean
    valid = pm.valid
    R = np.where(valid[:, None, None], pm.r_bar, np.eye(MEAS_DIM))
    y = np.where(valid[:, None], pm.y_bar, 0.0)
    S = symmetrize(H @ P @ H.T + R)
    try:
        gain = np.swapaxes(np.linalg.solve(S, H @ P), -1, -2)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("innovation covariance is singular") from exc
    innov = y - mu @ H.T
    mean = mu + np.einsum("kij,kj->ki", gain, innov)
    IKH = np.eye(P.shape[-1]) - gain @ H
    cov = symmetrize(IKH @ P @ np.swapaxes(IKH, -1, -2) + gain @ R @ np.swapaxes(gain, -1, -2))
    mean = np.where(valid[:, None], mean, mu)
    cov = np.where(valid[:, None, None], cov, P)
    return GaussianBelief(mean, cov)


# CAVI driver --------------------------------------------------------------

FuseFn = Callable[[list[ConsensusStat]], list[PseudoMeasurement]]


@dataclass
class CaviResult:
    """Converged beliefs, one set per fusion node, plus per-sensor associations."""

    beliefs: list[GaussianBelief]
    assoc: list[np.ndarray]
    trace: list[dict] = field(default_factory=list)


def run_cavi(
    predicted: Sequence[GaussianBelief],
    batches: Sequence[MeasurementBatch],
    sensors: Sequence[SensorModel],
    fuse: FuseFn,
    i_max: int,
    until_converged: bool = False,
) -> CaviResult:
    """Alternate state and association updates.

    ``predicted`` holds either one shared belief set (centralised) or one per
    sensor; sensor ``s`` reads belief set ``s`` in the latter case. ``fuse``
    maps the sensors' local statistics to one pseudo-measurement per belief
    set. With ``until_converged`` the loop stops early once posterior means
    move less than ``MEAN_TOL`` and association rows less than ``ASSOC_TOL``
    (L1); ``i_max`` is then a cap.
    """
    n_sets = len(predicted)
    if n_sets not in (1, len(sensors)):
        raise ValueError("need one shared belief set or one per sensor")

    def view(s):
        return 0 if n_sets == 1 else s

    assoc = [
        init_associations(b, sen, predicted[view(s)])
        for s, (b, sen) in enumerate(zip(batches, sensors))
    ]
    beliefs = list(predicted)
    trace = []
    for it in range(i_max):
        stats = [local_stats(b, sen, q) for b, sen, q in zip(batches, sensors, assoc)]
        pms = fuse(stats)
        new_beliefs = [
            update_state(predicted[i], pms[i], sensors[0].H) for i in range(n_sets)
        ]
        new_assoc = [
            update_associations(b, sen, new_beliefs[view(s)])
            for s, (b, sen) in enumerate(zip(batches, sensors))
        ]
        mean_change = max(
            (float(np.max(np.abs(nb.mean - ob.mean), initial=0.0)) for nb, ob in zip(new_beliefs, beliefs)),
            default=0.0,
        )
        assoc_change = max(
            (float(np.max(np.abs(nq - oq).sum(axis=1), initial=0.0)) for nq, oq in zip(new_assoc, assoc)),
            default=0.0,
        )
        trace.append({"iteration": it + 1, "mean_change": mean_change, "assoc_change": assoc_change})
        beliefs, assoc = new_beliefs, new_assoc
        if until_converged and mean_change < MEAN_TOL and assoc_change < ASSOC_TOL:
            break
    return CaviResult(beliefs, assoc, trace)


def centralised_fuse(stats: list[ConsensusStat]) -> list[PseudoMeasurement]:
    return [fuse_stats_centralised(stats)]


def local_fuse(stats: list[ConsensusStat]) -> list[PseudoMeasurement]:
    return [fuse_stats_centralised([s]) for s in stats]


def cavi_fixed_point_check(
    batches: Sequence[MeasurementBatch],
    sensors: Sequence[SensorModel],
    predicted: GaussianBelief,
    i_max: int = 50,
) -> list[dict]:
    """Per-iteration max change of posterior means and association rows (centralised)."""
    return run_cavi([predicted], batches, sensors, centralised_fuse, i_max).trace
