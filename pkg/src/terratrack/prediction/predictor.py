"""Hybrid memory-retrieval / Kalman trajectory predictor.

Histories are canonicalized (last point at the origin, recent heading along
+x, heights relative to the last point), encoded, and matched against the
memory bank by cosine distance. The top candidates are mapped back to the
world through the query's anchor and ranked against a one-second
constant-velocity rollout of the track's Kalman filter. Whenever the memory
path is not applicable the constant-velocity rollout is returned instead.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy.signal import savgol_filter

from ..tracking.kalman import KalmanCV, rollout
from .memory import EmptyBank, MemoryBank, memory_write, retrieve_topk

MIN_DISPLACEMENT = 1e-6


class DegenerateHeading(ValueError):
    pass


@dataclass(frozen=True)
class Anchor:
    position: np.ndarray
    yaw: float

    def _rot(self) -> np.ndarray:
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        return np.array([[c, -s], [s, c]])

    def to_canonical(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float).reshape(-1, 3) - self.position
        out = np.empty_like(p)
        out[:, :2] = p[:, :2] @ self._rot()  # R^T applied to row vectors
        out[:, 2] = p[:, 2]
        return out

    def to_world(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float).reshape(-1, 3)
        out = np.empty_like(p)
        out[:, :2] = p[:, :2] @ self._rot().T
        out[:, 2] = p[:, 2]
        return out + self.position


def normalize_trajectory(points, heading_steps: int = 3) -> tuple[np.ndarray, Anchor]:
    """Canonicalize a window of world points; returns (canonical points, anchor)."""
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(p) < 2:
        raise ValueError("need at least two points")
    steps = np.diff(p[:, :2], axis=0)
    heading = steps[-heading_steps:].sum(axis=0)
    if np.hypot(*heading) < MIN_DISPLACEMENT:
        heading = p[-1, :2] - p[0, :2]
        if np.hypot(*heading) < MIN_DISPLACEMENT:
            raise DegenerateHeading("horizontal displacement too small to define a heading")
    anchor = Anchor(p[-1].copy(), float(np.arctan2(heading[1], heading[0])))
    return anchor.to_canonical(p), anchor


class HistoryEncoder(Protocol):
    def feature_dim(self, history_len: int) -> int: ...

    def encode(self, canonical: np.ndarray) -> np.ndarray: ...


class DisplacementSlopeEncoder:
    """Per-step horizontal displacements followed by per-step vertical slopes."""

    def feature_dim(self, history_len: int) -> int:
        return 3 * (history_len - 1)

    def encode(self, canonical: np.ndarray) -> np.ndarray:
        return encode_history(canonical)


def encode_history(canonical) -> np.ndarray:
    p = np.asarray(canonical, dtype=float).reshape(-1, 3)
    d = np.diff(p, axis=0)
    step = np.hypot(d[:, 0], d[:, 1])
    slope = np.where(step >= 1e-9, d[:, 2] / np.where(step >= 1e-9, step, 1.0), 0.0)
    return np.concatenate([d[:, :2].ravel(), slope])


def smooth_window(points, window: int, order: int = 2) -> np.ndarray:
    """Local polynomial (Savitzky-Golay) smoothing of a point window; ``window`` < 3 disables."""
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    w = min(window, len(p) if len(p) % 2 else len(p) - 1)
    if w < 3 or w <= order:
        return p.copy()
    return savgol_filter(p, w, order, axis=0, mode="interp")


def kf_short_horizon(kf: KalmanCV, frame_rate: float, horizon: float = 1.0) -> np.ndarray:
    """Constant-velocity points over the next ``horizon`` seconds (one per frame)."""
    return rollout(kf, 1.0 / frame_rate, int(round(horizon * frame_rate)))


def candidate_errors(candidates, indicator) -> np.ndarray:
    ind = np.asarray(indicator, dtype=float).reshape(-1, 3)
    n = len(ind)
    return np.array([np.linalg.norm(np.asarray(c)[:n] - ind, axis=1).mean() for c in candidates])


def select_best(candidates, indicator) -> int:
    """Index of the candidate whose first points are closest (mean distance) to ``indicator``."""
    if len(candidates) == 0:
        raise ValueError("no candidates")
    return int(np.argmin(candidate_errors(candidates, indicator)))  # argmin keeps the first on ties


@dataclass(frozen=True)
class PredictorConfig:
    history_len: int = 20
    future_len: int = 30
    top_k: int = 5
    frame_rate: float = 10.0
    indicator_horizon: float = 1.0
    write_threshold: float = 0.5
    capacity: int = 5000
    smoothing: int = 19      # history smoother window in points (tracker noise); 0 = raw
    freeze_z: bool = False   # ablation: ignore terrain, keep the last height
    use_memory: bool = True  # False = Kalman-only baseline


@dataclass(eq=False)
class PredictionResult:
    points: np.ndarray              # (F, 3) world
    source: str                     # "memory" | "kalman"
    candidates: list[np.ndarray] = field(default_factory=list)
    candidate_errors: np.ndarray = field(default_factory=lambda: np.zeros(0))
    selected: int = -1
    feature: np.ndarray | None = None
    anchor: Anchor | None = None

    def to_dict(self) -> dict:
        return {"source": self.source, "points": self.points.tolist(), "candidates": len(self.candidates)}


class Predictor:
    def __init__(self, config: PredictorConfig | None = None, bank: MemoryBank | None = None,
                 encoder: HistoryEncoder | None = None):
        self.config = config or PredictorConfig()
        self.encoder = encoder or DisplacementSlopeEncoder()
        c = self.config
        self.feature_dim = self.encoder.feature_dim(c.history_len)
        self.bank = bank if bank is not None else self.new_bank()
        if (self.bank.feature_dim, self.bank.history_len, self.bank.future_len) != (
                self.feature_dim, c.history_len, c.future_len):
            raise ValueError("memory bank dimensions do not match the predictor configuration")

    def new_bank(self) -> MemoryBank:
        c = self.config
        return MemoryBank(self.feature_dim, c.history_len, c.future_len, c.capacity, c.write_threshold)

    def kalman_points(self, kf: KalmanCV) -> np.ndarray:
        return rollout(kf, 1.0 / self.config.frame_rate, self.config.future_len)

    def encode_window(self, window) -> tuple[np.ndarray, Anchor]:
        canonical, anchor = normalize_trajectory(smooth_window(window, self.config.smoothing))
        return self.encoder.encode(canonical), anchor

    def predict(self, history, kf: KalmanCV) -> PredictionResult:
        """Predict ``future_len`` world points from a track's history and Kalman state."""
        c = self.config
        hist = np.asarray(history, dtype=float).reshape(-1, 3)
        result = None
        if c.use_memory and len(hist) >= c.history_len and len(self.bank) > 0:
            try:
                feature, anchor = self.encode_window(hist[-c.history_len:])
                hits = retrieve_topk(self.bank, feature, c.top_k)
            except (DegenerateHeading, EmptyBank, ValueError):
                hits = None
            if hits:
                cands = [anchor.to_world(h.future) for h in hits]
                indicator = kf_short_horizon(kf, c.frame_rate, c.indicator_horizon)
                errs = candidate_errors(cands, indicator)
                best = int(np.argmin(errs))
                result = PredictionResult(cands[best].copy(), "memory", cands, errs, best, feature, anchor)
        if result is None:
            result = PredictionResult(self.kalman_points(kf), "kalman")
        if c.freeze_z and len(hist):
            result.points[:, 2] = hist[-1, 2]
        return result


def predict(history, kf: KalmanCV, bank: MemoryBank, config: PredictorConfig | None = None) -> PredictionResult:
    return Predictor(config, bank).predict(history, kf)


def training_pairs(track_history, predictor: Predictor, stride: int = 1):
    """Yield (feature, canonical future) pairs from one contiguous track history."""
    history_len, future_len = predictor.config.history_len, predictor.config.future_len
    p = np.asarray(track_history, dtype=float).reshape(-1, 3)
    for end in range(history_len, len(p) - future_len + 1, stride):
        try:
            feature, anchor = predictor.encode_window(p[end - history_len:end])
        except DegenerateHeading:
            continue
        if not np.any(feature):
            continue
        yield feature, anchor.to_canonical(p[end:end + future_len])


@dataclass
class _Pending:
    frame_index: int
    feature: np.ndarray
    anchor: Anchor
    points: np.ndarray


class OnlineMemoryWriter:
    """Writes realized futures into the bank once ``future_len`` frames have elapsed."""

    def __init__(self, predictor: Predictor):
        self.predictor = predictor
        self.pending: dict[int, list[_Pending]] = {}
        self.writes = 0

    def record(self, track_id: int, frame_index: int, result: PredictionResult) -> None:
        if result.feature is None:
            return
        self.pending.setdefault(track_id, []).append(
            _Pending(frame_index, result.feature, result.anchor, result.points.copy()))

    def resolve(self, track_histories: dict[int, list[tuple[int, float, np.ndarray]]]) -> int:
        """Check pending predictions against realized histories; returns writes made."""
        F = self.predictor.config.future_len
        written = 0
        for tid in list(self.pending):
            hist = track_histories.get(tid)
            if hist is None:
                del self.pending[tid]
                continue
            by_frame = {f: p for f, _, p in hist}
            last = hist[-1][0]
            keep = []
            for item in self.pending[tid]:
                if last < item.frame_index + F:
                    keep.append(item)
                    continue
                frames = range(item.frame_index + 1, item.frame_index + F + 1)
                if not all(f in by_frame for f in frames):
                    continue
                realized = np.array([by_frame[f] for f in frames])
                err = float(np.linalg.norm(item.points - realized, axis=1).mean())
                if memory_write(self.predictor.bank, item.feature, item.anchor.to_canonical(realized), err):
                    written += 1
            self.pending[tid] = keep
        self.writes += written
        return written
