"""Adaptive-threshold 3D multi-object tracker with a birth/tracking/death lifecycle.

Association runs three independent gated assignments per frame:

* 3D: predicted track position vs LiDAR detection center (world frame),
  gated per track by ``a * |v_xy| + b``;
* 2D: projected track prediction vs image detection, fixed pixel gate;
* 2D: projected LiDAR detection vs image detection, fixed pixel gate.

The pairwise outcomes are then combined per track into one of four
conditions (new object, full agreement, 3D-only agreement, no match).
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..assignment import hungarian_assign
from ..geometry import CameraModel, Detection2D, OrientedBox3, Pose, project_many
from ..sim.config import CLASS_NAMES, class_index
from .kalman import KalmanCV, kf_predict, kf_update

INFEASIBLE = 1e12


class Lifecycle(str, Enum):
    BIRTH = "birth"
    TRACKING = "tracking"
    DEATH_PENDING = "death_pending"


class Condition(str, Enum):
    NEW = "cond1"
    FULL = "cond2.1"
    PARTIAL = "cond2.2"
    MISS = "cond3"


class FrameOrderError(ValueError):
    pass


@dataclass(frozen=True)
class AdaptiveGateParams:
    a: float = 0.2          # s; velocity-to-distance coefficient
    b: float = 0.5          # m; base threshold
    pixel_gate: float = 50.0

    def __post_init__(self):
        if self.a < 0 or self.b <= 0 or self.pixel_gate <= 0:
            raise ValueError("gate params require a >= 0, b > 0, pixel_gate > 0")


def adaptive_threshold(vx: float, vy: float, params: AdaptiveGateParams) -> float:
    return params.a * float(np.hypot(vx, vy)) + params.b


@dataclass
class TrackerConfig:
    gate: AdaptiveGateParams = field(default_factory=AdaptiveGateParams)
    confirm_hits: int = 3
    max_misses: int = 5
    process_noise: float = 4.0
    meas_sigma: float = 0.1
    init_vel_sigma: float = 2.0

    @classmethod
    def for_frame_rate(cls, frame_rate: float, **kw) -> "TrackerConfig":
        gate = kw.pop("gate", None) or AdaptiveGateParams(a=2.0 / frame_rate)
        return cls(gate=gate, **kw)


@dataclass(eq=False)
class TrackInstance:
    track_id: int
    kf: KalmanCV
    lifecycle: Lifecycle = Lifecycle.BIRTH
    hit_count: int = 1
    miss_count: int = 0
    class_votes: Counter = field(default_factory=Counter)
    history: list[tuple[int, float, np.ndarray]] = field(default_factory=list)
    last_update_frame: int = -1
    box_size: np.ndarray = field(default_factory=lambda: np.array([0.6, 0.6, 1.7]))
    box_yaw: float = 0.0
    condition: Condition = Condition.NEW

    @property
    def position(self) -> np.ndarray:
        return self.kf.x[:3].copy()

    @property
    def velocity(self) -> np.ndarray:
        return self.kf.x[3:].copy()

    @property
    def class_label(self) -> str:
        if not self.class_votes:
            return CLASS_NAMES[0]
        return min(self.class_votes, key=lambda c: (-self.class_votes[c], class_index(c), c))

    @property
    def confirmed(self) -> bool:
        return self.lifecycle is not Lifecycle.BIRTH

    def history_array(self) -> np.ndarray:
        return np.array([p for _, _, p in self.history]).reshape(-1, 3)


@dataclass
class AssociationOutcome:
    matches_3d: list[tuple[int, int]]       # (track, det3d)
    matches_pre_img: list[tuple[int, int]]  # (track, det2d)
    matches_l_img: list[tuple[int, int]]    # (det3d, det2d)
    conditions: dict[int, Condition]        # per track index
    measurements: dict[int, int]            # track index -> det3d index
    new_candidates: list[tuple[int, int]]   # (det3d, det2d) pairs that spawn births
    unmatched_tracks: list[int]
    unmatched_det3d: list[int]
    unmatched_det2d: list[int]


def associate_frame(tracks: list[TrackInstance], det3d: list[OrientedBox3], det2d: list[Detection2D],
                    cam: CameraModel, ego_pose: Pose, gate: AdaptiveGateParams) -> AssociationOutcome:
    """Associate predicted tracks with the frame's detections.

    ``tracks`` must already be predicted to the frame time; their states are
    in the world frame while detections are in the LiDAR frame of ``ego_pose``.
    """
    nt, n3, n2 = len(tracks), len(det3d), len(det2d)
    P_pre = np.array([t.kf.x[:3] for t in tracks]).reshape(nt, 3)
    P_L = np.array([d.center for d in det3d]).reshape(n3, 3)
    P_L_world = ego_pose.apply(P_L) if n3 else P_L
    p_img = np.array([d.center_px for d in det2d], dtype=float).reshape(n2, 2)

    to_lidar = ego_pose.inverse()
    p_pre, pre_ok = project_many(to_lidar.apply(P_pre), cam) if nt else (np.zeros((0, 2)), np.zeros(0, bool))
    p_L, l_ok = project_many(P_L, cam) if n3 else (np.zeros((0, 2)), np.zeros(0, bool))

    # 3D pairing, adaptive gate per track row
    cost3 = np.linalg.norm(P_pre[:, None, :] - P_L_world[None, :, :], axis=2) if nt and n3 else np.zeros((nt, n3))
    gates = np.array([adaptive_threshold(t.kf.x[3], t.kf.x[4], gate) for t in tracks])
    m3, _, _ = hungarian_assign(cost3, gates) if nt and n3 else ([], [], [])

    def pix_cost(a, a_ok, b):
        c = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2) if len(a) and len(b) else np.zeros((len(a), len(b)))
        if c.size:
            c[~a_ok, :] = INFEASIBLE
        return c

    m_pre_img, _, _ = hungarian_assign(pix_cost(p_pre, pre_ok, p_img), gate.pixel_gate)
    m_l_img, _, _ = hungarian_assign(pix_cost(p_L, l_ok, p_img), gate.pixel_gate)

    track_to_det3 = dict(m3)
    track_to_img = dict(m_pre_img)
    det3_to_img = dict(m_l_img)
    img_to_track = {i: t for t, i in m_pre_img}

    conditions: dict[int, Condition] = {}
    measurements: dict[int, int] = {}
    for ti in range(nt):
        d = track_to_det3.get(ti)
        if d is None:
            conditions[ti] = Condition.MISS
            continue
        measurements[ti] = d
        img = det3_to_img.get(d)
        if img is not None and track_to_img.get(ti) == img:
            conditions[ti] = Condition.FULL
        else:
            conditions[ti] = Condition.PARTIAL

    used3 = set(measurements.values())
    # Births: LiDAR detections nobody used, paired with image detections no track has confirmed.
    # An image detection blocks a birth only when it agrees with its track's own 3D measurement;
    # a track whose own image detection was missed may grab a neighbour's in the image assignment.
    # Pairing only the leftovers keeps two objects that overlap in the image from blocking each other.
    claimed = {i for i, t in img_to_track.items() if conditions[t] is Condition.FULL}
    free3 = [d for d in range(n3) if d not in used3]
    free2 = [i for i in range(n2) if i not in claimed]
    new_candidates = []
    if free3 and free2:
        sub = pix_cost(p_L[free3], l_ok[free3], p_img[free2])
        pairs, _, _ = hungarian_assign(sub, gate.pixel_gate)
        new_candidates = [(free3[a], free2[b]) for a, b in pairs]

    used_img = set(track_to_img.values()) | {i for _, i in m_l_img}
    return AssociationOutcome(
        matches_3d=list(m3),
        matches_pre_img=list(m_pre_img),
        matches_l_img=list(m_l_img),
        conditions=conditions,
        measurements=measurements,
        new_candidates=new_candidates,
        unmatched_tracks=[t for t in range(nt) if conditions[t] is Condition.MISS],
        unmatched_det3d=[d for d in range(n3) if d not in used3],
        unmatched_det2d=[i for i in range(n2) if i not in used_img],
    )


def lifecycle_step(track: TrackInstance, condition: Condition, confirm_hits: int = 3,
                   max_misses: int = 5) -> bool:
    """Advance the lifecycle FSM in place. Returns True when the track must be deleted."""
    track.condition = condition
    if condition in (Condition.FULL, Condition.PARTIAL, Condition.NEW):
        track.miss_count = 0
        if track.lifecycle is Lifecycle.BIRTH:
            if condition is not Condition.NEW:
                track.hit_count = min(track.hit_count + 1, confirm_hits)
            if track.hit_count >= confirm_hits:
                track.lifecycle = Lifecycle.TRACKING
        else:
            track.lifecycle = Lifecycle.TRACKING
        return False
    track.miss_count = min(track.miss_count + 1, max_misses)
    if track.lifecycle is Lifecycle.BIRTH:
        track.hit_count = 0
    else:
        track.lifecycle = Lifecycle.DEATH_PENDING
    return track.miss_count >= max_misses


@dataclass(frozen=True, eq=False)
class TrackReport:
    frame_index: int
    track_id: int
    lifecycle: Lifecycle
    class_label: str
    position: np.ndarray
    velocity: np.ndarray
    cov_trace: float
    condition: Condition
    box_size: np.ndarray
    box_yaw: float

    @property
    def confirmed(self) -> bool:
        return self.lifecycle is not Lifecycle.BIRTH

    def to_dict(self) -> dict:
        return {
            "frame_index": self.frame_index,
            "track_id": self.track_id,
            "lifecycle": self.lifecycle.value,
            "class": self.class_label,
            "position": self.position.tolist(),
            "velocity": self.velocity.tolist(),
            "cov_trace": self.cov_trace,
            "condition": self.condition.value,
            "box_size": self.box_size.tolist(),
            "box_yaw": self.box_yaw,
        }


class Tracker:
    """Sequential tracker; feed frames in timestamp order via :meth:`step`."""

    def __init__(self, camera: CameraModel, config: TrackerConfig | None = None):
        self.camera = camera
        self.config = config or TrackerConfig()
        self.tracks: list[TrackInstance] = []
        self.next_id = 0
        self.last_timestamp: float | None = None
        self.last_outcome: AssociationOutcome | None = None

    def _spawn(self, frame_index: int, t: float, det: OrientedBox3, det_img: Detection2D | None,
               ego_pose: Pose) -> TrackInstance:
        c = self.config
        pos = ego_pose.apply(det.center[None])[0]
        track = TrackInstance(
            track_id=self.next_id,
            kf=KalmanCV.from_measurement(pos, c.process_noise, c.meas_sigma, c.init_vel_sigma),
            last_update_frame=frame_index,
            box_size=det.size.copy(),
            box_yaw=det.yaw + ego_pose.yaw,
        )
        track.class_votes[det.class_label] += 1
        if det_img is not None:
            track.class_votes[det_img.class_label] += 1
        self.next_id += 1
        lifecycle_step(track, Condition.NEW, c.confirm_hits, c.max_misses)
        return track

    def step(self, frame) -> list[TrackReport]:
        """Process one :class:`SensorFrame`; return reports for every live track."""
        t = frame.timestamp
        if self.last_timestamp is not None and t <= self.last_timestamp:
            raise FrameOrderError(f"frame {frame.frame_index} at t={t} is not after t={self.last_timestamp}")
        c = self.config
        if self.last_timestamp is not None:
            dt = t - self.last_timestamp
            for tr in self.tracks:
                tr.kf = kf_predict(tr.kf, dt)
        self.last_timestamp = t

        ego = frame.ego_pose
        outcome = associate_frame(self.tracks, frame.detections3d, frame.detections2d, self.camera, ego, c.gate)
        self.last_outcome = outcome
        img_of_track = dict(outcome.matches_pre_img)

        survivors: list[TrackInstance] = []
        for ti, tr in enumerate(self.tracks):
            cond = outcome.conditions[ti]
            d = outcome.measurements.get(ti)
            if d is not None:
                det = frame.detections3d[d]
                tr.kf = kf_update(tr.kf, ego.apply(det.center[None])[0])
                tr.class_votes[det.class_label] += 1
                if cond is Condition.FULL:
                    tr.class_votes[frame.detections2d[img_of_track[ti]].class_label] += 1
                tr.box_size = det.size.copy()
                tr.box_yaw = det.yaw + ego.yaw
                tr.last_update_frame = frame.frame_index
            if lifecycle_step(tr, cond, c.confirm_hits, c.max_misses):
                continue
            survivors.append(tr)

        for d, i in outcome.new_candidates:
            survivors.append(self._spawn(frame.frame_index, t, frame.detections3d[d], frame.detections2d[i], ego))

        reports = []
        for tr in survivors:
            tr.history.append((frame.frame_index, t, tr.position))
            reports.append(TrackReport(
                frame.frame_index, tr.track_id, tr.lifecycle, tr.class_label, tr.position,
                tr.velocity, float(np.trace(tr.kf.P)), tr.condition, tr.box_size.copy(), tr.box_yaw,
            ))
        self.tracks = survivors
        return reports


def track_step(tracker: Tracker, frame) -> list[TrackReport]:
    return tracker.step(frame)
