"""Tracking, prediction and static-map evaluation metrics.

Tracking: MOTA, MOTP, OCA with a 0.5 m recall gate and optimal matching.
Prediction: ADE, FDE. Map quality: preservation rate (PR), rejection rate
(RR) and their F1 score on a voxel grid (0.2 m by default).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .assignment import hungarian_assign

RECALL_GATE = 0.5
MAP_GRID = 0.2


class MetricError(ValueError):
    pass


class EmptyGT(MetricError):
    pass


class NoMatches(MetricError):
    pass


class EmptySet(MetricError):
    pass


class EmptyOriginal(MetricError):
    pass


class BothZero(MetricError):
    pass


@dataclass
class FrameEvalCounts:
    frame_index: int = 0
    fn: int = 0
    fp: int = 0
    idsw: int = 0
    tp: int = 0
    gt: int = 0
    tl: int = 0
    errors: list[float] = field(default_factory=list)
    pairs: list[tuple[int, int]] = field(default_factory=list)  # (track_id, gt_id)

    def to_dict(self) -> dict:
        return {
            "frame_index": self.frame_index, "FN": self.fn, "FP": self.fp, "IDsw": self.idsw,
            "TP": self.tp, "GT": self.gt, "TL": self.tl, "err_sum": float(sum(self.errors)),
        }


@dataclass(frozen=True)
class Reported:
    track_id: int
    position: np.ndarray
    class_label: str = ""


@dataclass(frozen=True)
class Truth:
    gt_id: int
    position: np.ndarray
    class_label: str = ""


def match_to_gt(reported: Sequence[Reported], truth: Sequence[Truth], gate: float = RECALL_GATE,
                correspondence: dict[int, int] | None = None, frame_index: int = 0) -> FrameEvalCounts:
    """Score one frame. ``correspondence`` (gt_id -> track_id) is read and updated in place."""
    if correspondence is None:
        correspondence = {}
    n, m = len(reported), len(truth)
    counts = FrameEvalCounts(frame_index=frame_index, gt=m)
    if n and m:
        rp = np.array([r.position for r in reported], dtype=float)
        gp = np.array([g.position for g in truth], dtype=float)
        cost = np.linalg.norm(rp[:, None, :] - gp[None, :, :], axis=2)
        # recall requires distance strictly below the gate
        matches, _, _ = hungarian_assign(cost, np.nextafter(gate, 0.0))
    else:
        matches, cost = [], None
    for r, g in matches:
        rep, tru = reported[r], truth[g]
        counts.tp += 1
        counts.errors.append(float(cost[r, g]))
        counts.pairs.append((rep.track_id, tru.gt_id))
        if rep.class_label == tru.class_label:
            counts.tl += 1
        prev = correspondence.get(tru.gt_id)
        if prev is not None and prev != rep.track_id:
            counts.idsw += 1
        correspondence[tru.gt_id] = rep.track_id
    counts.fn = m - counts.tp
    counts.fp = n - counts.tp
    return counts


def mota(counts: Iterable[FrameEvalCounts]) -> float:
    counts = list(counts)
    total_gt = sum(c.gt for c in counts)
    if total_gt <= 0:
        raise EmptyGT("no ground-truth objects")
    errors = sum(c.fn + c.fp + c.idsw for c in counts)
    return 1.0 - errors / total_gt


def motp(counts: Iterable[FrameEvalCounts]) -> float:
    counts = list(counts)
    tp = sum(c.tp for c in counts)
    if tp <= 0:
        raise NoMatches("no matched pairs")
    return sum(sum(c.errors) for c in counts) / tp


def oca(counts: Iterable[FrameEvalCounts]) -> float:
    counts = list(counts)
    tp = sum(c.tp for c in counts)
    if tp <= 0:
        raise NoMatches("no matched pairs")
    return sum(c.tl for c in counts) / tp


def total_idsw(counts: Iterable[FrameEvalCounts]) -> int:
    return sum(c.idsw for c in counts)


@dataclass
class PredictionEvalSet:
    """Aligned predicted and ground-truth future trajectories, each (n_i, 3)."""

    predicted: list[np.ndarray] = field(default_factory=list)
    truth: list[np.ndarray] = field(default_factory=list)

    def add(self, predicted, truth) -> None:
        p = np.asarray(predicted, dtype=float).reshape(-1, 3)
        g = np.asarray(truth, dtype=float).reshape(-1, 3)
        if p.shape != g.shape or len(p) == 0:
            raise ValueError(f"prediction {p.shape} and truth {g.shape} not aligned")
        self.predicted.append(p)
        self.truth.append(g)

    def errors(self) -> list[np.ndarray]:
        return [np.linalg.norm(p - g, axis=1) for p, g in zip(self.predicted, self.truth)]

    def __len__(self) -> int:
        return len(self.predicted)


def ade(eval_set: PredictionEvalSet) -> float:
    errs = eval_set.errors()
    if not errs:
        raise EmptySet("no trajectories")
    return float(sum(e.sum() for e in errs) / sum(len(e) for e in errs))


def fde(eval_set: PredictionEvalSet) -> float:
    errs = eval_set.errors()
    if not errs:
        raise EmptySet("no trajectories")
    return float(np.mean([e[-1] for e in errs]))


def voxel_keys(points: np.ndarray, grid: float = MAP_GRID) -> np.ndarray:
    """Unique int64 keys of the floor-quantized cells occupied by ``points``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        return np.zeros(0, dtype=np.int64)
    idx = np.floor(pts / grid).astype(np.int64) + (1 << 20)
    keys = (idx[:, 0] << 42) | (idx[:, 1] << 21) | idx[:, 2]
    return np.unique(keys)


def voxel_cells(points: np.ndarray, grid: float = MAP_GRID) -> set[tuple[int, int, int]]:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    return {tuple(c) for c in np.floor(pts / grid).astype(np.int64).tolist()}


@dataclass
class MapEvalCounts:
    n_sp: int
    n_sa: int
    n_dp: int
    n_da: int

    @property
    def pr(self) -> float:
        return self.n_sp / self.n_sa

    @property
    def rr(self) -> float:
        return 1.0 - self.n_dp / self.n_da


def map_eval_counts(map_points: np.ndarray, static_points: np.ndarray, dynamic_points: np.ndarray,
                    grid: float = MAP_GRID) -> MapEvalCounts:
    out = voxel_keys(map_points, grid)
    sa = voxel_keys(static_points, grid)
    da = voxel_keys(dynamic_points, grid)
    if len(sa) == 0 or len(da) == 0:
        raise EmptyOriginal("original cloud needs both static and dynamic points")
    return MapEvalCounts(
        n_sp=int(np.isin(sa, out, assume_unique=True).sum()),
        n_sa=len(sa),
        n_dp=int(np.isin(da, out, assume_unique=True).sum()),
        n_da=len(da),
    )


def map_pr_rr(map_points: np.ndarray, static_points: np.ndarray, dynamic_points: np.ndarray,
              grid: float = MAP_GRID) -> tuple[float, float]:
    c = map_eval_counts(map_points, static_points, dynamic_points, grid)
    return c.pr, c.rr


def f1(pr: float, rr: float) -> float:
    if not (0.0 <= pr <= 1.0 and 0.0 <= rr <= 1.0):
        raise ValueError("pr and rr must lie in [0, 1]")
    if pr + rr == 0:
        raise BothZero("pr and rr are both zero")
    return 2.0 * pr * rr / (pr + rr)
