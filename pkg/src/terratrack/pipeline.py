"""Per-frame loop: track, predict, map; plus output writers."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .geometry import CameraModel
from .mapping import BOX_MARGIN, Mapper, RemovalReport, ResidualParams, export_map
from .prediction import MemoryBank, OnlineMemoryWriter, PredictionResult, Predictor, PredictorConfig
from .sim.dataset import JsonlWriter
from .tracking import AdaptiveGateParams, Lifecycle, Tracker, TrackerConfig, TrackReport

TRACKS_KIND = "terratrack-tracks"
PREDICTIONS_KIND = "terratrack-predictions"
BASELINES = ("fixed-gate", "kf-only", "single-frame-removal")


@dataclass(frozen=True)
class RunConfig:
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    residual: ResidualParams = field(default_factory=ResidualParams)
    box_margin: float = BOX_MARGIN
    map_resolution: float = 0.1
    single_frame_removal: bool = False
    online_writes: bool = True

    def with_baseline(self, name: str | None) -> "RunConfig":
        if name is None:
            return self
        if name == "fixed-gate":
            return replace(self, tracker=replace(self.tracker, gate=replace(self.tracker.gate, a=0.0)))
        if name == "kf-only":
            return replace(self, predictor=replace(self.predictor, use_memory=False))
        if name == "single-frame-removal":
            return replace(self, single_frame_removal=True)
        raise ValueError(f"unknown baseline {name!r} (choose from {', '.join(BASELINES)})")

    def to_dict(self) -> dict:
        t, p, r = self.tracker, self.predictor, self.residual
        return {
            "tracker": {"gate_a": t.gate.a, "gate_b": t.gate.b, "pixel_gate": t.gate.pixel_gate,
                        "confirm_hits": t.confirm_hits, "max_misses": t.max_misses,
                        "process_noise": t.process_noise, "meas_sigma": t.meas_sigma,
                        "init_vel_sigma": t.init_vel_sigma},
            "predictor": {"history_len": p.history_len, "future_len": p.future_len, "top_k": p.top_k,
                          "frame_rate": p.frame_rate, "indicator_horizon": p.indicator_horizon,
                          "write_threshold": p.write_threshold, "capacity": p.capacity,
                          "smoothing": p.smoothing, "freeze_z": p.freeze_z, "use_memory": p.use_memory},
            "residual": {"k_neighbors": r.k_neighbors, "s_threshold": r.s_threshold,
                         "min_neighbors": r.min_neighbors, "search_radius": r.search_radius},
            "box_margin": self.box_margin,
            "map_resolution": self.map_resolution,
            "single_frame_removal": self.single_frame_removal,
            "online_writes": self.online_writes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        base = cls()
        unknown = set(d) - set(base.to_dict())
        if unknown:
            raise ValueError(f"unknown run config keys: {sorted(unknown)}")
        t = dict(d.get("tracker", {}))
        gate = AdaptiveGateParams(
            a=float(t.pop("gate_a", base.tracker.gate.a)),
            b=float(t.pop("gate_b", base.tracker.gate.b)),
            pixel_gate=float(t.pop("pixel_gate", base.tracker.gate.pixel_gate)),
        )
        tracker = replace(base.tracker, gate=gate, **_typed(base.tracker, t, "tracker"))
        predictor = replace(base.predictor, **_typed(base.predictor, d.get("predictor", {}), "predictor"))
        residual = replace(base.residual, **_typed(base.residual, d.get("residual", {}), "residual"))
        top = {k: v for k, v in d.items() if k not in ("tracker", "predictor", "residual")}
        return replace(cls(tracker, predictor, residual), **_typed(base, top, "run"))

    @classmethod
    def for_scenario(cls, frame_rate: float, sigma3d: float) -> "RunConfig":
        """Defaults matched to a scenario's frame rate and detection noise."""
        base = cls()
        return replace(
            base,
            tracker=replace(TrackerConfig.for_frame_rate(frame_rate), meas_sigma=max(sigma3d, 1e-4)),
            predictor=replace(base.predictor, frame_rate=frame_rate),
        )


def _typed(obj, values: dict, section: str) -> dict:
    out = {}
    for k, v in values.items():
        if not hasattr(obj, k):
            raise ValueError(f"unknown {section} option {k!r}")
        cur = getattr(obj, k)
        if isinstance(cur, bool):
            if not isinstance(v, bool):
                raise ValueError(f"{section}.{k} must be a boolean")
        elif isinstance(cur, int):
            if isinstance(v, bool) or not isinstance(v, int):
                raise ValueError(f"{section}.{k} must be an integer")
        elif isinstance(cur, float):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ValueError(f"{section}.{k} must be a number")
            v = float(v)
        out[k] = v
    return out


@dataclass
class FrameOutput:
    frame_index: int
    timestamp: float
    tracks: list[TrackReport]
    predictions: dict[int, PredictionResult]
    removal: RemovalReport
    timing_ms: dict[str, float]


class Pipeline:
    def __init__(self, camera: CameraModel, config: RunConfig | None = None, bank: MemoryBank | None = None):
        self.config = config or RunConfig()
        self.tracker = Tracker(camera, self.config.tracker)
        self.predictor = Predictor(self.config.predictor, bank)
        self.writer = OnlineMemoryWriter(self.predictor) if self.config.online_writes else None
        self.mapper = Mapper(self.config.residual, self.config.box_margin, self.config.map_resolution,
                             single_frame=self.config.single_frame_removal)

    @property
    def bank(self) -> MemoryBank:
        return self.predictor.bank

    def step(self, frame) -> FrameOutput:
        t0 = time.perf_counter()
        reports = self.tracker.step(frame)
        t1 = time.perf_counter()
        predictions: dict[int, PredictionResult] = {}
        for tr in self.tracker.tracks:
            if tr.lifecycle is Lifecycle.BIRTH:
                continue
            res = self.predictor.predict(tr.history_array(), tr.kf)
            predictions[tr.track_id] = res
            if self.writer is not None:
                self.writer.record(tr.track_id, frame.frame_index, res)
        if self.writer is not None:
            self.writer.resolve({tr.track_id: tr.history for tr in self.tracker.tracks})
        t2 = time.perf_counter()
        removal = self.mapper.step(frame, reports)
        t3 = time.perf_counter()
        timing = {"tracking": 1e3 * (t1 - t0), "prediction": 1e3 * (t2 - t1), "mapping": 1e3 * (t3 - t2)}
        timing["total"] = sum(timing.values())
        return FrameOutput(frame.frame_index, frame.timestamp, reports, predictions, removal, timing)


def tracks_record(out: FrameOutput) -> dict:
    return {"frame_index": out.frame_index, "timestamp": out.timestamp,
            "tracks": [r.to_dict() for r in out.tracks]}


def predictions_records(out: FrameOutput) -> list[dict]:
    return [{"frame_index": out.frame_index, "track_id": tid, **res.to_dict()}
            for tid, res in sorted(out.predictions.items())]


def timing_summary(per_frame: list[dict[str, float]]) -> dict:
    summary = {}
    for stage in ("tracking", "prediction", "mapping", "total"):
        v = np.array([t[stage] for t in per_frame]) if per_frame else np.zeros(0)
        if len(v) == 0:
            summary[stage] = {"mean": None, "p50": None, "p90": None, "p99": None, "max": None}
            continue
        summary[stage] = {
            "mean": float(v.mean()), "p50": float(np.percentile(v, 50)), "p90": float(np.percentile(v, 90)),
            "p99": float(np.percentile(v, 99)), "max": float(v.max()),
        }
    return summary


def run_pipeline(frames: Iterable, camera: CameraModel, config: RunConfig | None = None,
                 bank: MemoryBank | None = None, out_dir=None, max_frames: int | None = None):
    """Run the loop over ``frames``; write outputs when ``out_dir`` is given. Returns the pipeline."""
    pipe = Pipeline(camera, config, bank)
    out = Path(out_dir) if out_dir is not None else None
    tracks_w = preds_w = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        tracks_w = JsonlWriter(out / "tracks.jsonl", TRACKS_KIND)
        preds_w = JsonlWriter(out / "predictions.jsonl", PREDICTIONS_KIND)
    timings = []
    try:
        for n, item in enumerate(frames):
            if max_frames is not None and n >= max_frames:
                break
            frame = item[0] if isinstance(item, tuple) else item
            res = pipe.step(frame)
            timings.append(res.timing_ms)
            if tracks_w is not None:
                tracks_w.add(tracks_record(res))
                for rec in predictions_records(res):
                    preds_w.add(rec)
    finally:
        if tracks_w is not None:
            tracks_w.close()
            preds_w.close()
    pipe.timings = timings
    if out is not None:
        export_map(pipe.mapper.map, out / "map.xyz")
        reports = pipe.mapper.reports
        mapping = {
            "frames": [r.to_dict() for r in reports],
            "totals": {k: int(sum(getattr(r, k) for r in reports))
                       for k in ("input", "removed_box", "removed_residual", "inserted", "new_map_points")},
            "map_points": len(pipe.mapper.map),
            "memory_writes": pipe.writer.writes if pipe.writer is not None else 0,
            "bank_size": len(pipe.bank),
            "config": pipe.config.to_dict(),
        }
        (out / "mapping_report.json").write_text(json.dumps(mapping, indent=1) + "\n")
        (out / "timing.json").write_text(json.dumps(
            {"per_frame": timings, "summary": timing_summary(timings)}, indent=1) + "\n")
    return pipe


def track_histories(frames: Iterable, camera: CameraModel, tracker_config: TrackerConfig | None = None,
                    max_frames: int | None = None) -> list[np.ndarray]:
    """Replay the tracker and return each confirmed track's full position history."""
    tracker = Tracker(camera, tracker_config)
    seen = {}
    for n, item in enumerate(frames):
        if max_frames is not None and n >= max_frames:
            break
        tracker.step(item[0] if isinstance(item, tuple) else item)
        for tr in tracker.tracks:
            seen[tr.track_id] = tr
    return [tr.history_array() for _, tr in sorted(seen.items()) if tr.lifecycle is not Lifecycle.BIRTH]


def seed_memory(histories: Iterable[np.ndarray], predictor: Predictor, stride: int = 1) -> int:
    """Write every valid (history window, realized future) pair into the predictor's bank."""
    from .prediction import training_pairs

    added = 0
    for hist in histories:
        for feature, future in training_pairs(hist, predictor, stride):
            predictor.bank.add(feature, future)
            added += 1
    return added
