"""Per-time-step tracker pipelines and the sequence driver.

Three modes share one CAVI kernel and differ only in how local statistics are
fused: summed at a hub (``centralised``), averaged by consensus inside every
CAVI iteration (``distributed``), or not fused at all with the local posteriors
averaged by consensus afterwards (``aa_fusion``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .consensus import ConsensusRunner, disagreement
from .models import GaussianBelief, MotionModel, SensorModel, build_cv_model, predict, symmetrize
from .scenario import MeasurementBatch, Scenario, SensorGraph
from .vb_core import (
    ConsensusStat,
    PseudoMeasurement,
    centralised_fuse,
    fuse_stats_distributed,
    local_fuse,
    run_cavi,
)

MODES = ("centralised", "distributed", "aa_fusion")

_UPPER = np.triu_indices(4)


@dataclass(frozen=True)
class TrackerConfig:
    mode: str
    motion: MotionModel
    sensors: tuple[SensorModel, ...]
    prior: GaussianBelief
    i_max: int = 5
    consensus_iters: int = 20
    consensus_tol: float | None = None
    until_converged: bool = False
    aa_every: int = 1
    diagnostic: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.i_max < 1:
            raise ValueError("i_max must be >= 1")
        if self.mode != "centralised" and self.consensus_iters < 1 and not self.diagnostic:
            raise ValueError("consensus_iters must be >= 1 for distributed modes")
        if self.aa_every < 1:
            raise ValueError("aa_every must be >= 1")
        object.__setattr__(self, "sensors", tuple(self.sensors))

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)

    @property
    def n_targets(self) -> int:
        return self.prior.mean.shape[0]


@dataclass
class TrackState:
    """Converged beliefs: one set (centralised) or one per sensor."""

    beliefs: list[GaussianBelief]
    assoc: list[np.ndarray] = field(default_factory=list)
    step: int = -1

    def positions(self) -> np.ndarray:
        """Posterior mean positions, shape ``(n_sets, K, 2)``."""
        return np.stack([b.position for b in self.beliefs])


def initial_state(cfg: TrackerConfig) -> TrackState:
    n_sets = 1 if cfg.mode == "centralised" else cfg.n_sensors
    return TrackState([cfg.prior] * n_sets)


def shared_prior(initial_states: np.ndarray, pos_std: float, vel_std: float) -> GaussianBelief:
    """Gaussian prior centred on the given states with diagonal covariance."""
    mean = np.asarray(initial_states, dtype=float)
    diag = np.array([pos_std**2, vel_std**2, pos_std**2, vel_std**2])
    cov = np.broadcast_to(np.diag(diag), mean.shape[:-1] + (4, 4)).copy()
    return GaussianBelief(mean, cov)


def _predicted(state: TrackState, cfg: TrackerConfig, do_predict: bool) -> list[GaussianBelief]:
    if not do_predict:
        return list(state.beliefs)
    return [predict(b, cfg.motion) for b in state.beliefs]


def _check_batches(batches: Sequence[MeasurementBatch], cfg: TrackerConfig) -> None:
    if len(batches) != cfg.n_sensors:
        raise ValueError(f"expected {cfg.n_sensors} batches, got {len(batches)}")


def centralised_step(
    state: TrackState, batches: Sequence[MeasurementBatch], cfg: TrackerConfig, do_predict: bool = True
) -> TrackState:
    _check_batches(batches, cfg)
    predicted = _predicted(state, cfg, do_predict)
    res = run_cavi(predicted, batches, cfg.sensors, centralised_fuse, cfg.i_max, cfg.until_converged)
    return TrackState(res.beliefs, res.assoc, state.step + 1)


def consensus_fuse(
    runner: ConsensusRunner,
    iterations: int,
    tol: float | None = None,
    trace: list | None = None,
    step: int = 0,
):
    """Fusion callback that averages packed statistics over the graph, then rescales by N_s.

    When ``trace`` is a list, one record per consensus round is appended.
    """
    calls = [0]

    def fuse(stats: list[ConsensusStat]) -> list[PseudoMeasurement]:
        n = len(stats)
        values = np.stack([s.pack() for s in stats])
        calls[0] += 1
        cavi_iter = calls[0]

        def hook(m, x):
            trace.append({"time_step": step, "cavi_iter": cavi_iter, "round": m, "disagreement": disagreement(x)})

        avg = runner.run(values, iterations, tol=tol, trace=hook if trace is not None else None)
        return [fuse_stats_distributed(ConsensusStat.unpack(avg[s]), n) for s in range(n)]

    return fuse


def distributed_step(
    state: TrackState,
    batches: Sequence[MeasurementBatch],
    graph: SensorGraph | ConsensusRunner,
    cfg: TrackerConfig,
    do_predict: bool = True,
    trace: list | None = None,
) -> TrackState:
    """One step of the consensus-based tracker; every consensus call starts at graph round 0."""
    _check_batches(batches, cfg)
    runner = graph if isinstance(graph, ConsensusRunner) else ConsensusRunner(graph)
    predicted = _predicted(state, cfg, do_predict)
    fuse = consensus_fuse(runner, cfg.consensus_iters, cfg.consensus_tol, trace, state.step + 1)
    res = run_cavi(predicted, batches, cfg.sensors, fuse, cfg.i_max, cfg.until_converged)
    return TrackState(res.beliefs, res.assoc, state.step + 1)


def pack_moments(belief: GaussianBelief) -> np.ndarray:
    """Per target: mean (4) and upper triangle of ``cov + mean mean^T`` (10)."""
    second = belief.cov + belief.mean[:, :, None] * belief.mean[:, None, :]
    return np.concatenate([belief.mean, second[:, _UPPER[0], _UPPER[1]]], axis=1).ravel()


def unpack_moments(flat: np.ndarray, n_targets: int) -> GaussianBelief:
    v = np.asarray(flat).reshape(n_targets, 14)
    mean = v[:, :4]
    second = np.empty((n_targets, 4, 4))
    second[:, _UPPER[0], _UPPER[1]] = v[:, 4:]
    second[:, _UPPER[1], _UPPER[0]] = v[:, 4:]
    cov = symmetrize(second - mean[:, :, None] * mean[:, None, :])
    return GaussianBelief(mean.copy(), cov)


def aa_fuse_beliefs(
    beliefs: Sequence[GaussianBelief], runner: ConsensusRunner, iterations: int
) -> list[GaussianBelief]:
    """Arithmetic-average fusion of per-sensor posteriors by moment consensus."""
    K = beliefs[0].mean.shape[0]
    values = np.stack([pack_moments(b) for b in beliefs])
    mixed = runner.run(values, iterations)
    return [unpack_moments(mixed[s], K) for s in range(len(beliefs))]


def aa_fusion_step(
    state: TrackState,
    batches: Sequence[MeasurementBatch],
    graph: SensorGraph | ConsensusRunner,
    cfg: TrackerConfig,
    do_predict: bool = True,
) -> TrackState:
    _check_batches(batches, cfg)
    runner = graph if isinstance(graph, ConsensusRunner) else ConsensusRunner(graph)
    predicted = _predicted(state, cfg, do_predict)
    res = run_cavi(predicted, batches, cfg.sensors, local_fuse, cfg.i_max, cfg.until_converged)
    beliefs = res.beliefs
    step = state.step + 1
    if step % cfg.aa_every == 0:
        beliefs = aa_fuse_beliefs(beliefs, runner, cfg.consensus_iters)
    return TrackState(beliefs, res.assoc, step)


@dataclass
class TrackHistory:
    """``states[0]`` holds the prior; ``states[n + 1]`` the posterior after scan ``n``."""

    mode: str
    consensus_iters: int
    states: list[TrackState]

    @property
    def n_steps(self) -> int:
        return len(self.states) - 1

    def positions(self) -> np.ndarray:
        """Posterior positions for every scan, shape ``(steps, n_sets, K, 2)``."""
        return np.stack([s.positions() for s in self.states[1:]])

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "consensus_iters": self.consensus_iters,
            "steps": [
                {
                    "step": st.step,
                    "sensors": [
                        {"mean": b.mean.tolist(), "cov": b.cov.tolist()} for b in st.beliefs
                    ],
                }
                for st in self.states
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrackHistory":
        states = [
            TrackState(
                [GaussianBelief(np.array(b["mean"]), np.array(b["cov"])) for b in st["sensors"]],
                step=st["step"],
            )
            for st in data["steps"]
        ]
        return cls(data["mode"], data["consensus_iters"], states)


def run_sequence(
    scenario: Scenario | tuple[Sequence[Sequence[MeasurementBatch]], SensorGraph],
    cfg: TrackerConfig,
    n_steps: int | None = None,
    consensus_trace: list | None = None,
) -> TrackHistory:
    """Fold the configured step over the scans; the first scan updates the prior directly.

    ``consensus_trace`` collects per-round disagreement records (distributed mode only).
    """
    if isinstance(scenario, Scenario):
        batches, graph = scenario.batches, scenario.graph
    else:
        batches, graph = scenario
    n_steps = len(batches) if n_steps is None else n_steps
    if n_steps > len(batches):
        raise ValueError(f"requested {n_steps} steps but scenario has {len(batches)}")
    if graph.n_sensors != cfg.n_sensors:
        raise ValueError(f"graph has {graph.n_sensors} sensors, config has {cfg.n_sensors}")
    runner = ConsensusRunner(graph)
    state = initial_state(cfg)
    states = [state]
    for n in range(n_steps):
        row = batches[n]
        if cfg.mode == "centralised":
            state = centralised_step(state, row, cfg, do_predict=n > 0)
        elif cfg.mode == "distributed":
            state = distributed_step(state, row, runner, cfg, do_predict=n > 0, trace=consensus_trace)
        else:
            state = aa_fusion_step(state, row, runner, cfg, do_predict=n > 0)
        states.append(state)
    iters = 0 if cfg.mode == "centralised" else cfg.consensus_iters
    return TrackHistory(cfg.mode, iters, states)


def tracker_config_for(
    scenario: Scenario,
    mode: str,
    i_max: int = 5,
    consensus_iters: int = 20,
    **kwargs,
) -> TrackerConfig:
    """Tracker config matching a scenario's models, with the shared prior on the true initial states."""
    sc = scenario.config
    prior = shared_prior(scenario.truth.states[0], sc.prior_pos_std, sc.prior_vel_std)
    return TrackerConfig(
        mode=mode,
        motion=build_cv_model(sc.tau, sc.sigma),
        sensors=tuple(sc.sensor_models()),
        prior=prior,
        i_max=i_max,
        consensus_iters=consensus_iters,
        **kwargs,
    )
