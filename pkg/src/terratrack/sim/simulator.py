"""Deterministic scenario simulation: agent motion, detections and labeled clouds."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from ..geometry import Detection2D, OrientedBox3, Pose, project_to_image, BehindCamera
from .config import CLASS_NAMES, CLASS_SIZES, AgentSpec, EgoSpec, ScenarioConfig
from .terrain import TerrainField, generate_terrain

STATIC_LABEL = -1


@dataclass(eq=False)
class SensorFrame:
    frame_index: int
    timestamp: float
    ego_pose: Pose
    detections3d: list[OrientedBox3] = field(default_factory=list)
    detections2d: list[Detection2D] = field(default_factory=list)
    cloud: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))      # LiDAR frame
    cloud_labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


@dataclass(eq=False)
class AgentState:
    agent_id: int
    class_label: str
    position: np.ndarray  # world box center
    velocity: np.ndarray
    yaw: float
    size: np.ndarray
    visible: bool = True

    def to_dict(self) -> dict:
        return {
            "id": self.agent_id,
            "class": self.class_label,
            "position": self.position.tolist(),
            "velocity": self.velocity.tolist(),
            "yaw": float(self.yaw),
            "size": self.size.tolist(),
            "visible": bool(self.visible),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AgentState":
        return cls(int(d["id"]), d["class"], np.array(d["position"], dtype=float),
                   np.array(d["velocity"], dtype=float), float(d["yaw"]),
                   np.array(d["size"], dtype=float), bool(d["visible"]))


@dataclass(eq=False)
class GroundTruthFrame:
    frame_index: int
    timestamp: float
    agents: list[AgentState] = field(default_factory=list)

    def visible_agents(self) -> list[AgentState]:
        return [a for a in self.agents if a.visible]


class Polyline:
    """Arc-length parametrized 2D polyline, optionally closed."""

    def __init__(self, waypoints, closed: bool):
        pts = np.asarray(waypoints, dtype=float).reshape(-1, 2)
        if closed and len(pts) > 1 and not np.allclose(pts[0], pts[-1]):
            pts = np.vstack([pts, pts[:1]])
        self.points = pts
        self.closed = closed and len(pts) > 2
        seg = np.diff(pts, axis=0)
        self.seg_len = np.hypot(seg[:, 0], seg[:, 1]) if len(pts) > 1 else np.zeros(0)
        self.cum = np.concatenate([[0.0], np.cumsum(self.seg_len)])
        self.length = float(self.cum[-1])

    def at(self, s: float) -> tuple[np.ndarray, np.ndarray, bool]:
        """Return (xy, unit tangent, moving) at arc length ``s``."""
        if self.length <= 0:
            return self.points[0].copy(), np.array([1.0, 0.0]), False
        moving = True
        if self.closed:
            s = s % self.length
        elif s >= self.length:
            s = self.length
            moving = False
        k = int(np.searchsorted(self.cum, s, side="right") - 1)
        k = min(max(k, 0), len(self.seg_len) - 1)
        while self.seg_len[k] <= 0 and k > 0:
            k -= 1
        t = (s - self.cum[k]) / self.seg_len[k] if self.seg_len[k] > 0 else 0.0
        a, b = self.points[k], self.points[k + 1]
        tangent = (b - a) / self.seg_len[k] if self.seg_len[k] > 0 else np.array([1.0, 0.0])
        return a + t * (b - a), tangent, moving


class SpeedProfile:
    """Piecewise-linear speed over time with its exact integral."""

    def __init__(self, knots, periodic: bool):
        k = np.asarray(knots, dtype=float).reshape(-1, 2)
        self.t = k[:, 0]
        self.v = k[:, 1]
        self.periodic = periodic and len(k) > 1 and self.t[-1] > self.t[0]
        seg = 0.5 * (self.v[1:] + self.v[:-1]) * np.diff(self.t)
        self.cum = np.concatenate([[0.0], np.cumsum(seg)])

    def _fold(self, t: float) -> tuple[float, int]:
        if not self.periodic:
            return t, 0
        period = self.t[-1] - self.t[0]
        n = int(np.floor((t - self.t[0]) / period))
        return t - n * period, n

    def speed(self, t: float) -> float:
        t, _ = self._fold(t)
        return float(np.interp(t, self.t, self.v))

    def distance(self, t: float) -> float:
        """Arc length travelled between time 0 and ``t``."""
        return self._distance_from_t0(t) - self._distance_from_t0(0.0)

    def _distance_from_t0(self, t: float) -> float:
        tf, n = self._fold(t)
        base = n * self.cum[-1]
        if tf <= self.t[0]:
            return base - self.v[0] * (self.t[0] - tf)
        if tf >= self.t[-1]:
            return base + self.cum[-1] + self.v[-1] * (tf - self.t[-1])
        k = int(np.searchsorted(self.t, tf, side="right") - 1)
        dt = tf - self.t[k]
        slope = (self.v[k + 1] - self.v[k]) / (self.t[k + 1] - self.t[k])
        return base + self.cum[k] + self.v[k] * dt + 0.5 * slope * dt * dt


class AgentMotion:
    def __init__(self, spec: AgentSpec, terrain: TerrainField, frame_rate: float):
        self.spec = spec
        self.terrain = terrain
        self.path = Polyline(spec.waypoints, spec.loop)
        self.profile = SpeedProfile(spec.speed_profile, spec.periodic_speed)
        self.size = np.array(CLASS_SIZES[spec.class_label], dtype=float)
        self.t0 = spec.spawn_frame / frame_rate

    def alive(self, frame_index: int) -> bool:
        s = self.spec
        return frame_index >= s.spawn_frame and (s.despawn_frame is None or frame_index < s.despawn_frame)

    def state(self, t: float) -> AgentState:
        local_t = t - self.t0
        s = self.profile.distance(local_t)
        xy, tangent, moving = self.path.at(s)
        speed = self.profile.speed(local_t) if moving else 0.0
        z = self.terrain.height_at(xy[0], xy[1]) + 0.5 * self.size[2]
        gx, gy = self.terrain.gradient_at(xy[0], xy[1]) if speed > 0 else (0.0, 0.0)
        vxy = speed * tangent
        vel = np.array([vxy[0], vxy[1], gx * vxy[0] + gy * vxy[1]])
        yaw = float(np.arctan2(tangent[1], tangent[0]))
        return AgentState(self.spec.agent_id, self.spec.class_label,
                          np.array([xy[0], xy[1], z]), vel, yaw, self.size.copy())


class EgoMotion:
    def __init__(self, spec: EgoSpec, terrain: TerrainField):
        self.spec = spec
        self.terrain = terrain
        self.path = Polyline(spec.waypoints, spec.loop)

    def pose(self, t: float) -> Pose:
        sp = self.spec
        if sp.speed > 0 and self.path.length > 0:
            xy, tangent, _ = self.path.at(sp.speed * t)
            yaw = float(np.arctan2(tangent[1], tangent[0]))
        else:
            xy = self.path.points[0]
            yaw = sp.yaw or 0.0
        z = self.terrain.height_at(xy[0], xy[1]) + sp.sensor_height
        return Pose.from_xyz_yaw(float(xy[0]), float(xy[1]), z, yaw)


def _sector_samples(rng: np.random.Generator, n: int, r0: float, r1: float, half_fov: float):
    r = np.sqrt(rng.uniform(r0 * r0, r1 * r1, n))
    th = rng.uniform(-half_fov, half_fov, n)
    return r * np.cos(th), r * np.sin(th)


class Simulator:
    """Stateful frame generator for one :class:`ScenarioConfig`."""

    def __init__(self, config: ScenarioConfig, terrain: TerrainField | None = None):
        self.config = config
        self.terrain = terrain if terrain is not None else generate_terrain(config.seed, config.terrain)
        config.validate(self.terrain)
        self.agents = [AgentMotion(a, self.terrain, config.frame_rate)
                       for a in sorted(config.agents, key=lambda a: a.agent_id)]
        self.ego = EgoMotion(config.ego, self.terrain)
        streams = np.random.SeedSequence([int(config.seed), 0x51]).spawn(4)
        self.rng_det3d, self.rng_det2d, self.rng_false, self.rng_cloud = (
            np.random.default_rng(s) for s in streams
        )
        self.half_fov = np.deg2rad(config.sensor.fov_deg) / 2

    def _visible(self, p_lidar: np.ndarray) -> bool:
        s = self.config.sensor
        rng_ = float(np.hypot(p_lidar[0], p_lidar[1]))
        bearing = float(np.arctan2(p_lidar[1], p_lidar[0]))
        return s.min_range <= rng_ <= s.max_range and abs(bearing) <= self.half_fov

    def _label(self, rng: np.random.Generator, true_label: str) -> str:
        if self.config.noise.class_confusion > 0 and rng.random() < self.config.noise.class_confusion:
            others = [c for c in CLASS_NAMES[:2] if c != true_label] or [CLASS_NAMES[0]]
            return others[int(rng.integers(len(others)))]
        return true_label

    def frame(self, index: int) -> tuple[SensorFrame, GroundTruthFrame]:
        cfg = self.config
        noise = cfg.noise
        t = index / cfg.frame_rate
        ego = self.ego.pose(t)
        to_lidar = ego.inverse()

        gt = GroundTruthFrame(index, t)
        det3d: list[OrientedBox3] = []
        det2d: list[Detection2D] = []
        dyn_pts, dyn_lab = [], []
        for motion in self.agents:
            if not motion.alive(index):
                continue
            st = motion.state(t)
            c_l = to_lidar.apply(st.position[None])[0]
            st.visible = self._visible(c_l)
            gt.agents.append(st)
            # Fixed number of draws per agent per frame keeps streams aligned.
            miss3 = self.rng_det3d.random() < noise.miss_prob
            n3 = self.rng_det3d.normal(0.0, 1.0, 3) * noise.sigma3d
            score = float(self.rng_det3d.uniform(0.6, 1.0))
            lab3 = self._label(self.rng_det3d, st.class_label)
            miss2 = self.rng_det2d.random() < noise.miss_2d
            n2 = self.rng_det2d.normal(0.0, 1.0, 2) * noise.sigma2d
            lab2 = self._label(self.rng_det2d, st.class_label)
            if not st.visible:
                continue
            if not miss3:
                det3d.append(OrientedBox3(c_l + n3, st.size, st.yaw - ego.yaw, lab3, score))
            if not miss2:
                try:
                    u, v = project_to_image(c_l, cfg.camera)
                except BehindCamera:
                    u = v = None
                if u is not None and cfg.camera.in_image((u, v)):
                    depth = cfg.camera.extrinsic.apply(c_l[None])[0, 2]
                    ext = (cfg.camera.fx * st.size[1] / depth, cfg.camera.fy * st.size[2] / depth)
                    det2d.append(Detection2D((u + n2[0], v + n2[1]), ext, lab2, score))
            n = cfg.sensor.points_per_agent
            if n > 0:
                lo = np.array([-st.size[0] / 2, -st.size[1] / 2, -st.size[2] / 2 + cfg.sensor.ground_clearance])
                hi = st.size / 2
                local = self.rng_cloud.uniform(lo, hi, size=(n, 3))
                pts_w = Pose.from_xyz_yaw(*st.position, st.yaw).apply(local)
                dyn_pts.append(to_lidar.apply(pts_w))
                dyn_lab.append(np.full(n, st.agent_id, dtype=np.int64))

        for _ in range(int(self.rng_false.poisson(noise.false_rate)) if noise.false_rate > 0 else 0):
            fx, fy = _sector_samples(self.rng_false, 1, cfg.sensor.min_range, cfg.sensor.max_range, self.half_fov)
            cls = CLASS_NAMES[int(self.rng_false.integers(2))]
            size = np.array(CLASS_SIZES[cls])
            w = ego.apply(np.array([[fx[0], fy[0], 0.0]]))[0]
            if not self.terrain.contains(w[0], w[1]):
                continue
            w[2] = self.terrain.height_at(w[0], w[1]) + size[2] / 2
            c_l = to_lidar.apply(w[None])[0]
            yaw = float(self.rng_false.uniform(-np.pi, np.pi))
            det3d.append(OrientedBox3(c_l, size, yaw, cls, float(self.rng_false.uniform(0.3, 0.7))))

        s = cfg.sensor
        sx, sy = _sector_samples(self.rng_cloud, s.static_points, s.min_range, s.max_range, self.half_fov)
        w = ego.apply(np.stack([sx, sy, np.zeros_like(sx)], axis=1))
        inside = self.terrain.contains(w[:, 0], w[:, 1])
        w = w[inside]
        w[:, 2] = self.terrain.heights_at(w[:, 0], w[:, 1])
        clouds = [to_lidar.apply(w)] + dyn_pts
        labels = [np.full(len(w), STATIC_LABEL, dtype=np.int64)] + dyn_lab
        cloud = np.vstack(clouds)
        if s.cloud_sigma > 0:
            cloud = cloud + self.rng_cloud.normal(0.0, s.cloud_sigma, cloud.shape)
        frame = SensorFrame(index, t, ego, det3d, det2d, cloud, np.concatenate(labels))
        return frame, gt

    def __iter__(self) -> Iterator[tuple[SensorFrame, GroundTruthFrame]]:
        for i in range(self.config.n_frames):
            yield self.frame(i)


def simulate(config: ScenarioConfig, terrain: TerrainField | None = None
             ) -> Iterator[tuple[SensorFrame, GroundTruthFrame]]:
    """Yield ``(SensorFrame, GroundTruthFrame)`` for every frame of the scenario."""
    return iter(Simulator(config, terrain))
