"""Reproducible simulation of ground truth, NHPP measurement scans and sensor graphs.

Every generator draws from a named Philox stream derived from one root seed,
so truth, each sensor's measurements and the communication graph can be
regenerated independently of each other.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .models import (
    MEAS_DIM,
    POSITION_H,
    GroundTruthState,
    ParameterError,
    SensorModel,
    build_cv_model,
)

STREAMS = {"truth": 0, "measurements": 1, "graph": 2, "runs": 3}


class GraphGenerationError(RuntimeError):
    """Raised when no connected graph is found within the retry budget."""


def stream(seed: int, name: str, *sub: int) -> np.random.Generator:
    """Independent counter-based generator for ``(seed, name, *sub)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(STREAMS[name], *sub))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(root_seed: int, run_id: int) -> int:
    ss = np.random.SeedSequence(int(root_seed), spawn_key=(STREAMS["runs"], int(run_id)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _per_sensor(value, n_sensors: int, name: str) -> list[float]:
    if isinstance(value, (int, float)):
        return [float(value)] * n_sensors
    values = [float(v) for v in value]
    if len(values) != n_sensors:
        raise ParameterError(f"{name}: expected {n_sensors} per-sensor values, got {len(values)}")
    return values


@dataclass(frozen=True)
class ScenarioConfig:
    """All scenario parameters. Scalars for per-sensor fields apply to every sensor."""

    n_targets: int = 8
    n_sensors: int = 6
    n_steps: int = 30
    tau: float = 1.0
    sigma: float = 5.0
    clutter_rate: float | tuple[float, ...] = 100.0
    target_rate: float | tuple[float, ...] = 1.0
    noise_var: float | tuple[float, ...] = 100.0
    region: tuple[float, float, float, float] = (0.0, 1000.0, 0.0, 1000.0)
    spawn_fraction: float = 0.8
    speed_range: tuple[float, float] = (0.0, 10.0)
    prior_pos_std: float = 10.0
    prior_vel_std: float = 5.0
    graph_radius: float = 450.0
    p_drop: float = 0.0
    graph_rounds: int = 1
    graph_edges: tuple[tuple[int, int], ...] | None = None
    graph_max_retries: int = 1000
    seed: int = 0

    def __post_init__(self):
        for name in ("n_targets", "n_sensors", "n_steps"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1, got {getattr(self, name)}")
        xmin, xmax, ymin, ymax = self.region
        if not (xmax > xmin and ymax > ymin):
            raise ParameterError(f"region is degenerate: {self.region}")
        if not 0.0 <= self.p_drop < 1.0:
            raise ParameterError(f"p_drop must lie in [0, 1), got {self.p_drop}")
        if self.graph_rounds < 1:
            raise ParameterError("graph_rounds must be >= 1")
        build_cv_model(self.tau, self.sigma)

    def sensor_models(self) -> list[SensorModel]:
        n = self.n_sensors
        clutter = _per_sensor(self.clutter_rate, n, "clutter_rate")
        target = _per_sensor(self.target_rate, n, "target_rate")
        noise = _per_sensor(self.noise_var, n, "noise_var")
        sensors = []
        for s in range(n):
            rates = np.concatenate([[clutter[s]], np.full(self.n_targets, target[s])])
            R = np.broadcast_to(noise[s] * np.eye(MEAS_DIM), (self.n_targets, MEAS_DIM, MEAS_DIM))
            sensors.append(SensorModel(s, rates, R.copy(), self.region, POSITION_H.copy()))
        return sensors

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        for key in ("clutter_rate", "target_rate", "noise_var"):
            if isinstance(data.get(key), list):
                data[key] = tuple(data[key])
        for key in ("region", "speed_range"):
            if key in data:
                data[key] = tuple(data[key])
        if data.get("graph_edges") is not None:
            data["graph_edges"] = tuple(tuple(e) for e in data["graph_edges"])
        return cls(**data)


@dataclass(frozen=True)
class MeasurementBatch:
    sensor_id: int
    step: int
    measurements: np.ndarray
    labels: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def count(self) -> int:
        return self.measurements.shape[0]


@dataclass(frozen=True)
class SensorGraph:
    """Undirected communication graph, one edge set per consensus round.

    Round ``m`` uses ``rounds[m % len(rounds)]``; a static graph has one round.
    Edges are stored as ``(i, j)`` with ``i < j``.
    """

    n_sensors: int
    rounds: tuple[np.ndarray, ...]
    positions: np.ndarray | None = None

    def __post_init__(self):
        cleaned = []
        for edges in self.rounds:
            e = np.asarray(edges, dtype=int).reshape(-1, 2)
            if np.any(e[:, 0] == e[:, 1]):
                raise ParameterError("self-loops are not allowed")
            e = np.sort(e, axis=1)
            e = np.unique(e, axis=0) if len(e) else e
            if len(e) and (e.min() < 0 or e.max() >= self.n_sensors):
                raise ParameterError("edge endpoint out of range")
            cleaned.append(e)
        if not cleaned:
            cleaned.append(np.zeros((0, 2), dtype=int))
        object.__setattr__(self, "rounds", tuple(cleaned))

    @property
    def n_rounds(self) -> int:
        return len(self.rounds)

    def edges(self, m: int = 0) -> np.ndarray:
        return self.rounds[m % len(self.rounds)]

    def adjacency(self, m: int = 0) -> np.ndarray:
        A = np.zeros((self.n_sensors, self.n_sensors), dtype=bool)
        e = self.edges(m)
        A[e[:, 0], e[:, 1]] = True
        A[e[:, 1], e[:, 0]] = True
        return A

    def degrees(self, m: int = 0) -> np.ndarray:
        return self.adjacency(m).sum(axis=1)

    def degree(self, i: int, m: int = 0) -> int:
        return int(self.degrees(m)[i])

    def neighbors(self, i: int, m: int = 0) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.adjacency(m)[i])]

    def is_connected(self, m: int = 0) -> bool:
        return is_connected(self.adjacency(m))


def is_connected(adjacency: np.ndarray) -> bool:
    n = adjacency.shape[0]
    if n <= 1:
        return True
    n_comp, _ = connected_components(csr_matrix(adjacency), directed=False)
    return n_comp == 1


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    truth: GroundTruthState
    batches: list[list[MeasurementBatch]]
    graph: SensorGraph

    @property
    def sensors(self) -> list[SensorModel]:
        return self.config.sensor_models()


def generate_ground_truth(
    cfg: ScenarioConfig,
    rng: np.random.Generator | None = None,
    initial: np.ndarray | None = None,
) -> GroundTruthState:
    rng = stream(cfg.seed, "truth") if rng is None else rng
    model = build_cv_model(cfg.tau, cfg.sigma)
    K = cfg.n_targets
    if initial is None:
        xmin, xmax, ymin, ymax = cfg.region
        margin = 0.5 * (1.0 - cfg.spawn_fraction)
        lo = np.array([xmin + margin * (xmax - xmin), ymin + margin * (ymax - ymin)])
        hi = np.array([xmax - margin * (xmax - xmin), ymax - margin * (ymax - ymin)])
        pos = rng.uniform(lo, hi, size=(K, 2))
        speed = rng.uniform(cfg.speed_range[0], cfg.speed_range[1], size=K)
        heading = rng.uniform(0.0, 2.0 * np.pi, size=K)
        initial = np.column_stack(
            [pos[:, 0], speed * np.cos(heading), pos[:, 1], speed * np.sin(heading)]
        )
    initial = np.asarray(initial, dtype=float).reshape(K, 4)
    # Q is PSD but may be singular (sigma = 0), so use a symmetric square root.
    w, V = np.linalg.eigh(model.Q)
    root = V * np.sqrt(np.clip(w, 0.0, None))
    states = np.empty((cfg.n_steps, K, 4))
    states[0] = initial
    for n in range(1, cfg.n_steps):
        noise = rng.standard_normal((K, 4)) @ root.T
        states[n] = states[n - 1] @ model.F.T + noise
    return GroundTruthState(states)


def _scan(x_k: np.ndarray, sensor: SensorModel, rng: np.random.Generator):
    counts = rng.poisson(sensor.target_rates)
    chol = np.linalg.cholesky(sensor.noise)
    pts, labels = [], []
    for k in np.flatnonzero(counts):
        centre = sensor.H @ x_k[k]
        z = rng.standard_normal((counts[k], MEAS_DIM))
        pts.append(centre + z @ chol[k].T)
        labels.append(np.full(counts[k], k + 1))
    n_clutter = rng.poisson(sensor.clutter_rate)
    xmin, xmax, ymin, ymax = sensor.region
    pts.append(rng.uniform((xmin, ymin), (xmax, ymax), size=(n_clutter, MEAS_DIM)))
    labels.append(np.zeros(n_clutter, dtype=int))
    y = np.concatenate(pts).reshape(-1, MEAS_DIM)
    lab = np.concatenate(labels).astype(int)
    order = rng.permutation(len(y))
    return y[order], lab[order]


def generate_measurements(
    truth: GroundTruthState,
    sensors: Sequence[SensorModel],
    rng: np.random.Generator | int,
) -> list[list[MeasurementBatch]]:
    """Measurement scans indexed ``[step][sensor]``.

    An integer seed gives each sensor its own stream; a generator is consumed
    sequentially in step-major order.
    """
    if isinstance(rng, np.random.Generator):
        gens = [rng] * len(sensors)
    else:
        gens = [stream(rng, "measurements", s) for s in range(len(sensors))]
    out = []
    for n in range(truth.n_steps):
        row = []
        for s, sensor in enumerate(sensors):
            y, lab = _scan(truth.states[n], sensor, gens[s])
            row.append(MeasurementBatch(sensor.sensor_id, n, y, lab))
        out.append(row)
    return out


def _geometric_edges(positions: np.ndarray, radius: float) -> np.ndarray:
    d = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=-1)
    i, j = np.nonzero(np.triu(d <= radius, k=1))
    return np.column_stack([i, j])


def _adjacency(n: int, edges: np.ndarray) -> np.ndarray:
    A = np.zeros((n, n), dtype=bool)
    A[edges[:, 0], edges[:, 1]] = True
    A[edges[:, 1], edges[:, 0]] = True
    return A


def generate_sensor_graph(
    cfg: ScenarioConfig,
    rounds: int | None = None,
    rng: np.random.Generator | None = None,
) -> SensorGraph:
    rng = stream(cfg.seed, "graph") if rng is None else rng
    rounds = cfg.graph_rounds if rounds is None else rounds
    n = cfg.n_sensors
    xmin, xmax, ymin, ymax = cfg.region
    positions = None
    if cfg.graph_edges is not None:
        base = np.asarray(cfg.graph_edges, dtype=int).reshape(-1, 2)
        if not is_connected(_adjacency(n, base)):
            raise GraphGenerationError("explicit edge list is not connected")
    else:
        for _ in range(cfg.graph_max_retries):
            positions = rng.uniform((xmin, ymin), (xmax, ymax), size=(n, 2))
            base = _geometric_edges(positions, cfg.graph_radius)
            if is_connected(_adjacency(n, base)):
                break
        else:
            raise GraphGenerationError(
                f"no connected geometric graph with radius {cfg.graph_radius} "
                f"after {cfg.graph_max_retries} draws"
            )
    if cfg.p_drop == 0.0:
        return SensorGraph(n, (base,) * rounds, positions)
    per_round = []
    for m in range(rounds):
        for _ in range(cfg.graph_max_retries):
            keep = rng.uniform(size=len(base)) >= cfg.p_drop
            edges = base[keep]
            if is_connected(_adjacency(n, edges)):
                per_round.append(edges)
                break
        else:
            raise GraphGenerationError(
                f"round {m}: no connected graph with p_drop={cfg.p_drop} "
                f"after {cfg.graph_max_retries} draws"
            )
    return SensorGraph(n, tuple(per_round), positions)


def make_scenario(cfg: ScenarioConfig) -> Scenario:
    truth = generate_ground_truth(cfg)
    batches = generate_measurements(truth, cfg.sensor_models(), cfg.seed)
    graph = generate_sensor_graph(cfg)
    return Scenario(cfg, truth, batches, graph)


# JSON interchange -----------------------------------------------------------

SCENARIO_FORMAT = "dvbtrack.scenario/1"


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "format": SCENARIO_FORMAT,
        "config": sc.config.to_dict(),
        "truth": sc.truth.states.tolist(),
        "measurements": [[b.measurements.tolist() for b in row] for row in sc.batches],
        "graph": {
            "n_sensors": sc.graph.n_sensors,
            "positions": None if sc.graph.positions is None else sc.graph.positions.tolist(),
            "rounds": [e.tolist() for e in sc.graph.rounds],
        },
    }


def scenario_from_dict(data: dict) -> Scenario:
    if data.get("format") != SCENARIO_FORMAT:
        raise ValueError(f"unsupported scenario format {data.get('format')!r}")
    cfg = ScenarioConfig.from_dict(data["config"])
    truth = GroundTruthState(np.asarray(data["truth"], dtype=float).reshape(cfg.n_steps, cfg.n_targets, 4))
    batches = [
        [
            MeasurementBatch(s, n, np.asarray(ys, dtype=float).reshape(-1, MEAS_DIM))
            for s, ys in enumerate(row)
        ]
        for n, row in enumerate(data["measurements"])
    ]
    g = data["graph"]
    positions = None if g["positions"] is None else np.asarray(g["positions"], dtype=float)
    graph = SensorGraph(
        int(g["n_sensors"]),
        tuple(np.asarray(e, dtype=int).reshape(-1, 2) for e in g["rounds"]),
        positions,
    )
    return Scenario(cfg, truth, batches, graph)


def save_scenario(sc: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc)), encoding="utf-8")


def load_scenario(path: str | Path) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
