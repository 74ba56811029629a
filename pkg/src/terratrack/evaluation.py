"""Scoring of pipeline outputs against simulator ground truth."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .metrics import (
    MAP_GRID,
    RECALL_GATE,
    EmptyOriginal,
    FrameEvalCounts,
    MapEvalCounts,
    MetricError,
    PredictionEvalSet,
    Reported,
    Truth,
    ade,
    f1,
    fde,
    match_to_gt,
    mota,
    motp,
    oca,
    total_idsw,
    voxel_keys,
)
from .sim.dataset import DatasetFormatError, read_cloud, read_ground_truth, read_jsonl
from .sim.simulator import STATIC_LABEL, GroundTruthFrame

WARMUP_FRAMES = 2  # a track needs three frames to be reported, so the first two cannot be scored


class AlignmentError(ValueError):
    pass


def _reported(tracks) -> list[Reported]:
    out = []
    for t in tracks:
        if isinstance(t, dict):
            if t["lifecycle"] == "birth":
                continue
            out.append(Reported(int(t["track_id"]), np.asarray(t["position"], dtype=float), t["class"]))
        elif t.confirmed:
            out.append(Reported(t.track_id, t.position, t.class_label))
    return out


def _truth(gt: GroundTruthFrame) -> list[Truth]:
    return [Truth(a.agent_id, a.position, a.class_label) for a in gt.agents if a.visible]


@dataclass
class TrackingEval:
    counts: list[FrameEvalCounts] = field(default_factory=list)
    pairs: dict[int, dict[int, int]] = field(default_factory=dict)  # frame -> {track_id: gt_id}

    def summary(self) -> dict:
        out = {"frames": len(self.counts), "GT": sum(c.gt for c in self.counts),
               "FN": sum(c.fn for c in self.counts), "FP": sum(c.fp for c in self.counts),
               "IDsw": total_idsw(self.counts)}
        for name, fn in (("MOTA", mota), ("MOTP", motp), ("OCA", oca)):
            try:
                out[name] = fn(self.counts)
            except MetricError:
                out[name] = None
        return out


def evaluate_tracking(track_frames: Sequence[tuple[int, list]], gts: Sequence[GroundTruthFrame],
                      warmup: int = WARMUP_FRAMES, gate: float = RECALL_GATE) -> TrackingEval:
    """``track_frames``: (frame_index, tracks) pairs; tracks are reports or their dicts."""
    by_index = {g.frame_index: g for g in gts}
    ev = TrackingEval()
    corr: dict[int, int] = {}
    for n, (fi, tracks) in enumerate(track_frames):
        if fi not in by_index:
            raise AlignmentError(f"no ground truth for frame {fi}")
        counts = match_to_gt(_reported(tracks), _truth(by_index[fi]), gate, corr, fi)
        ev.pairs[fi] = dict(counts.pairs)
        if n >= warmup:
            ev.counts.append(counts)
    return ev


@dataclass
class PredictionEval:
    eval_set: PredictionEvalSet = field(default_factory=PredictionEvalSet)
    z_final: list[float] = field(default_factory=list)
    sources: dict[str, int] = field(default_factory=dict)

    def extend(self, other: "PredictionEval") -> None:
        """Pool another run's events into this one."""
        self.eval_set.predicted.extend(other.eval_set.predicted)
        self.eval_set.truth.extend(other.eval_set.truth)
        self.z_final.extend(other.z_final)
        for k, v in other.sources.items():
            self.sources[k] = self.sources.get(k, 0) + v

    def summary(self) -> dict:
        if len(self.eval_set) == 0:
            return {"n": 0, "ADE": None, "FDE": None, "FDE_z": None, "sources": self.sources}
        return {"n": len(self.eval_set), "ADE": ade(self.eval_set), "FDE": fde(self.eval_set),
                "FDE_z": float(np.mean(self.z_final)), "sources": self.sources}


def future_truth(gts_by_index: dict[int, GroundTruthFrame], gt_id: int, frame_index: int,
                 steps: int) -> np.ndarray | None:
    pts = []
    for k in range(1, steps + 1):
        g = gts_by_index.get(frame_index + k)
        if g is None:
            return None
        a = next((a for a in g.agents if a.agent_id == gt_id), None)
        if a is None:
            return None
        pts.append(a.position)
    return np.array(pts)


def evaluate_predictions(predictions: Iterable[tuple[int, int, np.ndarray, str]], pairs: dict[int, dict[int, int]],
                         gts: Sequence[GroundTruthFrame]) -> PredictionEval:
    """Score (frame, track_id, points, source) events whose track matched a GT agent that frame.

    Events without a fully known ground-truth future are skipped.
    """
    by_index = {g.frame_index: g for g in gts}
    ev = PredictionEval()
    for fi, tid, pts, source in predictions:
        gid = pairs.get(fi, {}).get(tid)
        if gid is None:
            continue
        pts = np.asarray(pts, dtype=float).reshape(-1, 3)
        fut = future_truth(by_index, gid, fi, len(pts))
        if fut is None:
            continue
        ev.eval_set.add(pts, fut)
        ev.z_final.append(abs(float(pts[-1, 2] - fut[-1, 2])))
        ev.sources[source] = ev.sources.get(source, 0) + 1
    return ev


class VoxelAccumulator:
    """Union of occupied voxels of the labeled original clouds, split static / dynamic."""

    def __init__(self, grid: float = MAP_GRID):
        self.grid = grid
        self.static = np.zeros(0, dtype=np.int64)
        self.dynamic = np.zeros(0, dtype=np.int64)

    def add(self, points_world: np.ndarray, labels: np.ndarray) -> None:
        labels = np.asarray(labels)
        st = labels == STATIC_LABEL
        self.static = np.union1d(self.static, voxel_keys(points_world[st], self.grid))
        self.dynamic = np.union1d(self.dynamic, voxel_keys(points_world[~st], self.grid))

    def counts(self, map_points: np.ndarray) -> MapEvalCounts:
        if len(self.static) == 0 or len(self.dynamic) == 0:
            raise EmptyOriginal("original cloud needs both static and dynamic points")
        out = voxel_keys(map_points, self.grid)
        return MapEvalCounts(int(np.isin(self.static, out).sum()), len(self.static),
                             int(np.isin(self.dynamic, out).sum()), len(self.dynamic))


def map_summary(counts: MapEvalCounts) -> dict:
    pr, rr = counts.pr, counts.rr
    try:
        score = f1(pr, rr)
    except MetricError:
        score = None
    return {"PR": pr, "RR": rr, "F1": score, "N_sp": counts.n_sp, "N_sa": counts.n_sa,
            "N_dp": counts.n_dp, "N_da": counts.n_da}


def evaluate_run_dir(run_dir, dataset_dir, warmup: int = WARMUP_FRAMES) -> dict:
    """Score the files written by ``run`` against a dataset directory."""
    from .geometry import Pose
    from .mapping import read_map_points

    run_dir, dataset_dir = Path(run_dir), Path(dataset_dir)
    if not (dataset_dir / "gt.jsonl").exists():
        raise DatasetFormatError(f"{dataset_dir}: missing gt.jsonl")
    gts = read_ground_truth(dataset_dir)
    track_recs = read_jsonl(run_dir / "tracks.jsonl", "terratrack-tracks")
    pred_recs = read_jsonl(run_dir / "predictions.jsonl", "terratrack-predictions")
    gt_idx = {g.frame_index for g in gts}
    missing = [r["frame_index"] for r in track_recs if r["frame_index"] not in gt_idx]
    if missing:
        raise AlignmentError(f"run frames {missing[:3]}... have no ground truth")
    tev = evaluate_tracking([(r["frame_index"], r["tracks"]) for r in track_recs], gts, warmup)
    pev = evaluate_predictions(((r["frame_index"], r["track_id"], r["points"], r["source"]) for r in pred_recs),
                               tev.pairs, gts)
    report = {"tracking": tev.summary(), "prediction": pev.summary(),
              "per_frame": [c.to_dict() for c in tev.counts]}
    map_path = run_dir / "map.xyz"
    frames = read_jsonl(dataset_dir / "frames.jsonl", "terratrack-frames")
    if map_path.exists():
        acc = VoxelAccumulator()
        for fd in frames[: len(track_recs)]:
            pts, labels = read_cloud(dataset_dir / fd["cloud"])
            acc.add(Pose.from_dict(fd["ego_pose"]).apply(pts), labels)
        try:
            report["mapping"] = map_summary(acc.counts(read_map_points(map_path)))
        except MetricError as exc:
            report["mapping"] = {"error": str(exc)}
    return report


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


TABLE_ROWS = (
    ("tracking", ("MOTA", "MOTP", "OCA", "IDsw")),
    ("prediction", ("ADE", "FDE", "FDE_z")),
    ("mapping", ("PR", "RR", "F1")),
)


def summary_table(reports: dict[str, dict]) -> str:
    """Plain-text table, one column per run plus deltas against the first run."""
    names = list(reports)
    header = ["metric"] + names + [f"{n}-{names[0]}" for n in names[1:]]
    rows = [header]
    for section, keys in TABLE_ROWS:
        for k in keys:
            vals = [reports[n].get(section, {}).get(k) for n in names]
            if all(v is None for v in vals):
                continue
            deltas = []
            for v in vals[1:]:
                deltas.append(v - vals[0] if isinstance(v, (int, float)) and isinstance(vals[0], (int, float)) else None)
            rows.append([f"{section}.{k}"] + [_fmt(v) for v in vals] + [_fmt(d) for d in deltas])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows)


def summary_csv(reports: dict[str, dict]) -> str:
    lines = ["run,section,metric,value"]
    for name, rep in reports.items():
        for section, keys in TABLE_ROWS:
            for k in keys:
                v = rep.get(section, {}).get(k)
                if v is not None:
                    lines.append(f"{name},{section},{k},{v!r}")
    return "\n".join(lines) + "\n"
