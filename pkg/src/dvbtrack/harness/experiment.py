"""Monte-Carlo orchestration: scenario generation, tracker runs, CSV output."""

from __future__ import annotations

import csv
import io
import json
import logging
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..metrics import OspaParams, aggregate, ospa_per_sensor
from ..scenario import Scenario, derive_seed, load_scenario, make_scenario, save_scenario
from ..trackers import TrackHistory, run_sequence, tracker_config_for
from .config import ExperimentConfig, TrackerSpec

log = logging.getLogger(__name__)

CSV_HEADER = ("run_id", "time_step", "sensor_id", "tracker_mode", "consensus_iters", "ospa_value")
SWEEP_HEADER = ("consensus_iters", "grand_mean_ospa", "centralised_ospa")
TRACE_HEADER = ("run_id", "tracker", "time_step", "cavi_iter", "round", "disagreement")


class UsageError(ValueError):
    """Invalid command-line usage (e.g. nothing to run)."""


@dataclass(frozen=True)
class ResultRow:
    run_id: int
    time_step: int
    sensor_id: int
    tracker_mode: str
    consensus_iters: int
    ospa_value: float

    def as_tuple(self) -> tuple:
        return (
            self.run_id,
            self.time_step,
            self.sensor_id,
            self.tracker_mode,
            self.consensus_iters,
            repr(float(self.ospa_value)),
        )


def scenario_paths(directory: str | Path) -> list[Path]:
    paths = sorted(Path(directory).glob("run_*.json"))
    if not paths:
        raise FileNotFoundError(f"no run_*.json scenario files in {directory}")
    return paths


def run_id_of(path: Path, fallback: int) -> int:
    m = re.fullmatch(r"run_(\d+)", path.stem)
    return int(m.group(1)) if m else fallback


def truth_positions(sc: Scenario) -> np.ndarray:
    return sc.truth.states[:, :, [0, 2]]


def simulate(cfg: ExperimentConfig, out_dir: str | Path) -> list[Path]:
    """Write one scenario JSON per Monte-Carlo run plus the resolved config."""
    out = Path(out_dir)
    scen_dir = out / "scenarios"
    scen_dir.mkdir(parents=True, exist_ok=True)
    (out / "experiment.json").write_text(cfg.model_dump_json(indent=2) + "\n", encoding="utf-8")
    paths = []
    for r in range(cfg.mc_runs):
        sc = make_scenario(cfg.scenario.build(derive_seed(cfg.seed, r)))
        path = scen_dir / f"run_{r:03d}.json"
        save_scenario(sc, path)
        paths.append(path)
        log.info("wrote %s", path)
    return paths


def _history(sc: Scenario, spec: TrackerSpec, iters: int | None = None, trace=None) -> TrackHistory:
    tcfg = tracker_config_for(
        sc,
        spec.mode,
        i_max=spec.i_max,
        consensus_iters=spec.consensus_iters if iters is None else iters,
        aa_every=spec.aa_every,
    )
    return run_sequence(sc, tcfg, consensus_trace=trace)


def _ospa_matrix(sc: Scenario, hist: TrackHistory, params: OspaParams) -> np.ndarray:
    """OSPA per (step, sensor); a hub estimate is shared by every sensor."""
    values = ospa_per_sensor(hist.positions(), truth_positions(sc), params)
    if values.shape[1] == 1 and sc.config.n_sensors > 1:
        values = np.repeat(values, sc.config.n_sensors, axis=1)
    return values


def _track_job(args) -> tuple[list[ResultRow], dict[str, dict], list[tuple]]:
    path, run_id, specs, ospa_dict, keep_tracks, want_trace = args
    sc = load_scenario(path)
    params = OspaParams(**ospa_dict)
    rows, tracks, trace_rows = [], {}, []
    for spec in specs:
        trace = [] if want_trace and spec.mode == "distributed" else None
        hist = _history(sc, spec, trace=trace)
        values = _ospa_matrix(sc, hist, params)
        for n in range(values.shape[0]):
            for s in range(values.shape[1]):
                rows.append(ResultRow(run_id, n, s, spec.mode, spec.reported_iters, float(values[n, s])))
        if keep_tracks:
            tracks[spec.label] = hist.to_dict()
        for t in trace or ():
            trace_rows.append((run_id, spec.label, t["time_step"], t["cavi_iter"], t["round"], repr(t["disagreement"])))
    return rows, tracks, trace_rows


def _map(fn, jobs: list, threads: int) -> list:
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        # map preserves submission (run-id) order regardless of completion order
        return list(pool.map(fn, jobs))


def track(
    paths: Sequence[Path],
    specs: Sequence[TrackerSpec],
    ospa: OspaParams,
    threads: int = 1,
    tracks_dir: Path | None = None,
    trace_path: Path | None = None,
) -> list[ResultRow]:
    if not specs:
        raise UsageError("no tracker configurations given")
    jobs = [
        (str(p), run_id_of(p, i), list(specs), {"p": ospa.p, "c": ospa.c}, tracks_dir is not None, trace_path is not None)
        for i, p in enumerate(paths)
    ]
    results = _map(_track_job, jobs, threads)
    rows: list[ResultRow] = []
    trace_rows: list[tuple] = []
    for job, (job_rows, tracks, job_trace) in zip(jobs, results):
        rows.extend(job_rows)
        trace_rows.extend(job_trace)
        if tracks_dir is not None:
            tracks_dir.mkdir(parents=True, exist_ok=True)
            for label, data in tracks.items():
                (tracks_dir / f"run_{job[1]:03d}__{label}.json").write_text(json.dumps(data), encoding="utf-8")
    if trace_path is not None:
        write_csv(trace_path, TRACE_HEADER, trace_rows)
    return rows


def _sweep_job(args) -> tuple[np.ndarray, list[np.ndarray]]:
    path, iters, i_max, ospa_dict = args
    sc = load_scenario(path)
    params = OspaParams(**ospa_dict)
    cent = _ospa_matrix(sc, _history(sc, TrackerSpec(mode="centralised", i_max=i_max)), params)
    dist = [
        _ospa_matrix(sc, _history(sc, TrackerSpec(mode="distributed", i_max=i_max, consensus_iters=it)), params)
        for it in iters
    ]
    return cent, dist


def sweep_consensus(
    paths: Sequence[Path],
    iters: Sequence[int],
    ospa: OspaParams,
    i_max: int = 5,
    threads: int = 1,
) -> list[tuple[int, float, float]]:
    """Grand-mean OSPA of the distributed tracker per consensus count, with the centralised reference."""
    if not iters:
        raise UsageError("no consensus iteration counts given")
    jobs = [(str(p), list(iters), i_max, {"p": ospa.p, "c": ospa.c}) for p in paths]
    results = _map(_sweep_job, jobs, threads)
    cent = aggregate(np.stack([r[0] for r in results]))[1]
    out = []
    for j, it in enumerate(iters):
        g = aggregate(np.stack([r[1][j] for r in results]))[1]
        out.append((int(it), g, cent))
    return out


def write_csv(path: str | Path, header: Iterable[str], rows: Iterable[tuple]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_results(path: str | Path, rows: Sequence[ResultRow]) -> None:
    write_csv(path, CSV_HEADER, (r.as_tuple() for r in rows))


def write_sweep(path: str | Path, rows: Sequence[tuple[int, float, float]]) -> None:
    write_csv(path, SWEEP_HEADER, ((it, repr(g), repr(c)) for it, g, c in rows))


def read_results(path: str | Path) -> list[ResultRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}, got {header}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(CSV_HEADER):
                raise ValueError(f"{path} line {lineno}: expected {len(CSV_HEADER)} columns")
            rows.append(ResultRow(int(rec[0]), int(rec[1]), int(rec[2]), rec[3], int(rec[4]), float(rec[5])))
    return rows


def read_sweep(path: str | Path) -> list[tuple[int, float, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != SWEEP_HEADER:
            raise ValueError(f"{path}: expected header {','.join(SWEEP_HEADER)}, got {header}")
        return [(int(r[0]), float(r[1]), float(r[2])) for r in reader]


def tracker_key(row: ResultRow) -> str:
    if row.tracker_mode == "centralised":
        return "centralised"
    return f"{row.tracker_mode}_{row.consensus_iters}"


def per_step_means(rows: Sequence[ResultRow]) -> dict[str, np.ndarray]:
    """Mean OSPA per time step (over sensors and runs) for each tracker."""
    groups: dict[str, dict[int, list[float]]] = {}
    for r in rows:
        groups.setdefault(tracker_key(r), {}).setdefault(r.time_step, []).append(r.ospa_value)
    return {
        key: np.array([np.mean(steps[n]) for n in sorted(steps)]) for key, steps in groups.items()
    }


def grand_means(rows: Sequence[ResultRow]) -> dict[str, float]:
    return {key: float(v.mean()) for key, v in per_step_means(rows).items()}
