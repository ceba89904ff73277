"""Experiment harness: paired trials, scoring, and method comparison.

Each trial seeds both the rock field and the mission from the same integer,
so the three camera policies face identical worlds seed for seed.  The
simulated clock is decoupled from the wall clock: a 90-minute mission runs
in seconds to minutes of real time.

Per-trial outputs: ``trajectory.csv``, ``detections.jsonl``, ``metrics.json``
(deterministic; byte-identical across reruns of the same seed),
``scenario.json``, ``map_final.pgm``/``map_final.csv`` and ``timing.txt``
(wall-clock, deliberately kept out of metrics.json).  Comparisons add
``table.json`` and ``table.txt``.
"""

import hashlib
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import infomap as im
from . import world as ws
from .planner import BiLevelConfig, Mission

__all__ = [
    "METHODS",
    "ConfigError",
    "TrialMetrics",
    "ExperimentConfig",
    "build_scenario",
    "score",
    "run_trial",
    "run_baseline_fixed",
    "run_baseline_random",
    "compare",
    "metrics_json_dict",
]

METHODS = {
    "bl-eto": "optimized",
    "eto-fixed-camera": "fixed",
    "eto-random-camera": "random",
}


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exits with status 2)."""


@dataclass
class TrialMetrics:
    method: str
    seed: int
    rocks_total: int
    rocks_found: int
    fraction_found: float
    detections: int
    path_length: float
    final_ergodic_metric: Optional[float]
    sim_time: float
    body_steps: int
    images: int
    runtime_s: float = 0.0  # wall clock; excluded from metrics.json


@dataclass
class ExperimentConfig:
    mission: BiLevelConfig = field(default_factory=BiLevelConfig)
    camera: ws.CameraModel = field(default_factory=ws.CameraModel)
    method: str = "bl-eto"
    seeds: tuple = (1, 2, 3, 4, 5)
    rock_count: int = 21
    placement: str = "uniform"
    identification_radius: float = 5.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; "
                              f"choose from {sorted(METHODS)}")
        if not self.seeds:
            raise ConfigError("need at least one trial seed")
        if self.rock_count < 0:
            raise ConfigError("rock_count must be nonnegative")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        try:
            mission = BiLevelConfig.from_dict(d.pop("mission", {}))
            camera = ws.CameraModel(**d.pop("camera", {}))
            if "seeds" in d:
                d["seeds"] = tuple(int(s) for s in d["seeds"])
            return cls(mission=mission, camera=camera, **d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def for_method(self, method):
        if method not in METHODS:
            raise ConfigError(f"unknown method {method!r}")
        return replace(self, method=method,
                       mission=self.mission.replaced(camera_mode=METHODS[method]))


def build_scenario(config, seed):
    return ws.generate_scenario(
        seed, rock_count=config.rock_count, placement=config.placement,
        workspace=config.mission.coarse_workspace(),
        epicenters=config.mission.epicenters)


def score(log, scenario, identification_radius=5.0, method="bl-eto", seed=0):
    """Count a rock as found iff some detection's projected world point lies
    within the identification radius of its true position."""
    detections = log.detections()
    for ev in detections:
        if not scenario.workspace.contains(ev.world_point):
            raise ValueError("detection outside the scenario workspace: "
                             "log and ground truth do not match")
    points = np.array([ev.world_point for ev in detections]).reshape(-1, 2)
    found = 0
    for rock in scenario.rocks:
        if points.size and np.min(np.linalg.norm(
                points - np.array([rock.x, rock.y]), axis=1)) <= identification_radius:
            found += 1
    total = len(scenario.rocks)
    final_metric = log.metric_trace[-1][1] if log.metric_trace else None
    return TrialMetrics(
        method=method,
        seed=seed,
        rocks_total=total,
        rocks_found=found,
        fraction_found=(found / total) if total else 0.0,
        detections=len(detections),
        path_length=log.path_length,
        final_ergodic_metric=final_metric,
        sim_time=log.sim_time,
        body_steps=log.counters["body_steps"],
        images=log.counters["images"],
    )


def metrics_json_dict(metrics):
    """The documented, deterministic metrics schema (no wall-clock)."""
    return {
        "method": metrics.method,
        "seed": metrics.seed,
        "rocks_total": metrics.rocks_total,
        "rocks_found": metrics.rocks_found,
        "fraction_found": metrics.fraction_found,
        "detections": metrics.detections,
        "path_length_m": metrics.path_length,
        "final_ergodic_metric": metrics.final_ergodic_metric,
        "sim_time_s": metrics.sim_time,
        "body_steps": metrics.body_steps,
        "images": metrics.images,
    }


def _write_trajectory_csv(log, path):
    """One row per body step with the camera pose current at that time."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("t,x,y,heading,yaw,pitch\n")
        cam_idx = 0
        cam = log.camera_states[0] if log.camera_states else (0.0, 0.0, 0.0)
        for t, x, y, heading in log.body_states:
            while (cam_idx + 1 < len(log.camera_states)
                   and log.camera_states[cam_idx + 1][0] <= t):
                cam_idx += 1
                cam = log.camera_states[cam_idx]
            f.write(",".join(repr(v) for v in (t, x, y, heading, cam[1], cam[2])) + "\n")


def run_trial(config, seed, out_dir=None):
    """Run one mission with the configured method on the seeded scenario."""
    scenario = build_scenario(config, seed)
    mission_cfg = config.mission.replaced(
        camera_mode=METHODS[config.method],
        time_budget=config.mission.time_budget)
    started = time.perf_counter()
    mission = Mission(mission_cfg, scenario, seed, camera_model=config.camera)
    log = mission.run()
    runtime = time.perf_counter() - started
    metrics = score(log, scenario, config.identification_radius,
                    method=config.method, seed=seed)
    metrics.runtime_s = runtime

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_trajectory_csv(log, out / "trajectory.csv")
        im.save_detections_jsonl(log.events, out / "detections.jsonl")
        (out / "metrics.json").write_text(
            json.dumps(metrics_json_dict(metrics), sort_keys=True, indent=2) + "\n",
            encoding="utf-8")
        (out / "scenario.json").write_text(ws.scenario_to_json(scenario) + "\n",
                                           encoding="utf-8")
        im.save_pgm(mission.coarse_map, out / "map_final.pgm")
        im.save_csv(mission.coarse_map, out / "map_final.csv")
        (out / "timing.txt").write_text(f"wall_clock_s={runtime:.3f}\n",
                                        encoding="utf-8")
    return metrics


def run_baseline_fixed(config, seed, out_dir=None):
    return run_trial(config.for_method("eto-fixed-camera"), seed, out_dir)


def run_baseline_random(config, seed, out_dir=None):
    return run_trial(config.for_method("eto-random-camera"), seed, out_dir)


def _scenario_hash(config, seed):
    return hashlib.sha256(ws.scenario_to_json(build_scenario(config, seed))
                          .encode("utf-8")).hexdigest()


def compare(config, out_dir=None, methods=tuple(METHODS)):
    """Run every method over the same seeds and tabulate the results.

    The scenario hash is recorded per (method, seed) and must agree across
    methods — the comparison is meaningless unless the worlds are paired.
    """
    results = {}
    hashes = {}
    for method in methods:
        cfg = config.for_method(method)
        per_seed = []
        for seed in config.seeds:
            trial_dir = None
            if out_dir is not None:
                trial_dir = Path(out_dir) / method / f"seed_{seed}"
            per_seed.append(run_trial(cfg, seed, trial_dir))
            hashes.setdefault(seed, set()).add(_scenario_hash(cfg, seed))
        results[method] = per_seed
    for seed, digests in hashes.items():
        if len(digests) != 1:
            raise AssertionError(f"scenario for seed {seed} differs across methods")

    table = {"seeds": list(config.seeds), "methods": {}}
    for method, trials in results.items():
        fracs = np.array([t.fraction_found for t in trials])
        paths = np.array([t.path_length for t in trials])
        table["methods"][method] = {
            "fraction_found_mean": float(fracs.mean()),
            "fraction_found_std": float(fracs.std(ddof=1)) if len(fracs) > 1 else 0.0,
            "path_length_mean_m": float(paths.mean()),
            "detections_mean": float(np.mean([t.detections for t in trials])),
            "images_mean": float(np.mean([t.images for t in trials])),
            "trials": [metrics_json_dict(t) for t in trials],
        }

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "table.json").write_text(
            json.dumps(table, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        (out / "table.txt").write_text(format_table(table), encoding="utf-8")
    return table


def format_table(table):
    header = f"{'method':<22} {'found_mean':>10} {'found_std':>10} {'path_m':>10} {'images':>8}"
    lines = [header, "-" * len(header)]
    for method, row in table["methods"].items():
        lines.append(
            f"{method:<22} {row['fraction_found_mean']:>10.4f} "
            f"{row['fraction_found_std']:>10.4f} {row['path_length_mean_m']:>10.1f} "
            f"{row['images_mean']:>8.0f}")
    return "\n".join(lines) + "\n"
