"""On-disk dataset layout.

One directory per run::

    dataset.json          scenario config + format version
    frames.jsonl          header line, one SensorFrame per line, footer line
    gt.jsonl              header line, one GroundTruthFrame per line, footer line
    cloud_XXXXXX.xyz      "x y z label" per point (label -1 = static, else agent id)

The footer carries the record count so truncation is detected on read.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from ..geometry import Detection2D, OrientedBox3, Pose
from .config import ScenarioConfig
from .simulator import AgentState, GroundTruthFrame, SensorFrame

FORMAT_VERSION = 1
FRAMES_KIND = "terratrack-frames"
GT_KIND = "terratrack-gt"
CLOUD_HEADER = f"# terratrack-cloud v{FORMAT_VERSION}: x y z label"


class DatasetFormatError(ValueError):
    pass


def cloud_name(index: int) -> str:
    return f"cloud_{index:06d}.xyz"


def write_cloud(path, points: np.ndarray, labels: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write(CLOUD_HEADER + "\n")
        for (x, y, z), lab in zip(points.tolist(), labels.tolist()):
            fh.write(f"{x!r} {y!r} {z!r} {lab}\n")


def read_cloud(path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise DatasetFormatError(f"missing cloud file {path.name}")
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
        if first != CLOUD_HEADER:
            raise DatasetFormatError(f"{path.name}: bad cloud header {first!r}")
        rows = [line.split() for line in fh if line.strip()]
    if any(len(r) != 4 for r in rows):
        raise DatasetFormatError(f"{path.name}: malformed row")
    if not rows:
        return np.zeros((0, 3)), np.zeros(0, dtype=np.int64)
    pts = np.array([[float(r[0]), float(r[1]), float(r[2])] for r in rows])
    labels = np.array([int(r[3]) for r in rows], dtype=np.int64)
    return pts, labels


def frame_to_dict(frame: SensorFrame) -> dict:
    return {
        "frame_index": frame.frame_index,
        "timestamp": frame.timestamp,
        "ego_pose": frame.ego_pose.to_dict(),
        "detections3d": [d.to_dict() for d in frame.detections3d],
        "detections2d": [d.to_dict() for d in frame.detections2d],
        "cloud": cloud_name(frame.frame_index),
        "n_points": int(len(frame.cloud)),
    }


def gt_to_dict(gt: GroundTruthFrame) -> dict:
    return {
        "frame_index": gt.frame_index,
        "timestamp": gt.timestamp,
        "agents": [a.to_dict() for a in gt.agents],
    }


def gt_from_dict(d: dict) -> GroundTruthFrame:
    return GroundTruthFrame(int(d["frame_index"]), float(d["timestamp"]),
                            [AgentState.from_dict(a) for a in d["agents"]])


class JsonlWriter:
    def __init__(self, path, kind: str):
        self.fh = open(path, "w")
        self.count = 0
        self._write({"format": kind, "version": FORMAT_VERSION})

    def _write(self, obj) -> None:
        self.fh.write(json.dumps(obj, separators=(",", ":")) + "\n")

    def add(self, obj) -> None:
        self._write(obj)
        self.count += 1

    def close(self) -> None:
        self._write({"end": True, "count": self.count})
        self.fh.close()


def read_jsonl(path, kind: str) -> list[dict]:
    """Read a versioned jsonl file written by this package (header + records + footer)."""
    path = Path(path)
    if not path.exists():
        raise DatasetFormatError(f"missing {path.name}")
    text = path.read_text()
    lines = text.split("\n")
    if not text.endswith("\n"):
        raise DatasetFormatError(f"{path.name}: truncated (no trailing newline)")
    lines = lines[:-1]
    try:
        records = [json.loads(line) for line in lines]
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{path.name}: truncated or corrupt ({exc})") from exc
    if not records:
        raise DatasetFormatError(f"{path.name}: empty file")
    head = records[0]
    if head.get("format") != kind:
        raise DatasetFormatError(f"{path.name}: expected format {kind!r}, got {head.get('format')!r}")
    if head.get("version") != FORMAT_VERSION:
        raise DatasetFormatError(f"{path.name}: format version {head.get('version')} != {FORMAT_VERSION}")
    foot = records[-1] if len(records) > 1 else {}
    if not foot.get("end"):
        raise DatasetFormatError(f"{path.name}: truncated (missing footer)")
    body = records[1:-1]
    if foot.get("count") != len(body):
        raise DatasetFormatError(f"{path.name}: footer count {foot.get('count')} != {len(body)} records")
    return body


def write_dataset(stream: Iterable[tuple[SensorFrame, GroundTruthFrame]], path,
                  config: ScenarioConfig | None = None) -> int:
    """Write a frame stream to ``path``; returns the number of frames written."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"format": "terratrack-dataset", "version": FORMAT_VERSION,
            "config": config.to_dict() if config is not None else None}
    (out / "dataset.json").write_text(json.dumps(meta, indent=2) + "\n")
    frames = JsonlWriter(out / "frames.jsonl", FRAMES_KIND)
    gts = JsonlWriter(out / "gt.jsonl", GT_KIND)
    try:
        for frame, gt in stream:
            frames.add(frame_to_dict(frame))
            gts.add(gt_to_dict(gt))
            write_cloud(out / cloud_name(frame.frame_index), frame.cloud, frame.cloud_labels)
    finally:
        frames.close()
        gts.close()
    return frames.count


def read_config(path) -> ScenarioConfig | None:
    meta_path = Path(path) / "dataset.json"
    if not meta_path.exists():
        raise DatasetFormatError(f"{path}: not a dataset (missing dataset.json)")
    meta = json.loads(meta_path.read_text())
    if meta.get("version") != FORMAT_VERSION:
        raise DatasetFormatError(f"{path}: dataset version {meta.get('version')} != {FORMAT_VERSION}")
    cfg = meta.get("config")
    return ScenarioConfig.from_dict(cfg) if cfg is not None else None


def read_ground_truth(path) -> list[GroundTruthFrame]:
    return [gt_from_dict(d) for d in read_jsonl(Path(path) / "gt.jsonl", GT_KIND)]


def read_dataset(path, with_clouds: bool = True) -> Iterator[tuple[SensorFrame, GroundTruthFrame]]:
    """Yield frames back from disk; raises :class:`DatasetFormatError` on any inconsistency."""
    root = Path(path)
    read_config(root)
    frames = read_jsonl(root / "frames.jsonl", FRAMES_KIND)
    gts = read_jsonl(root / "gt.jsonl", GT_KIND)
    if len(frames) != len(gts):
        raise DatasetFormatError(f"{root}: {len(frames)} frames but {len(gts)} ground-truth records")

    def gen():
        for fd, gd in zip(frames, gts):
            if fd["frame_index"] != gd["frame_index"]:
                raise DatasetFormatError("frame/ground-truth index mismatch")
            if with_clouds:
                pts, labels = read_cloud(root / fd["cloud"])
                if len(pts) != fd["n_points"]:
                    raise DatasetFormatError(f"{fd['cloud']}: expected {fd['n_points']} points, got {len(pts)}")
            else:
                pts, labels = np.zeros((0, 3)), np.zeros(0, dtype=np.int64)
            frame = SensorFrame(
                int(fd["frame_index"]), float(fd["timestamp"]), Pose.from_dict(fd["ego_pose"]),
                [OrientedBox3.from_dict(d) for d in fd["detections3d"]],
                [Detection2D.from_dict(d) for d in fd["detections2d"]],
                pts, labels,
            )
            yield frame, gt_from_dict(gd)

    return gen()
