"""Scenario configuration schema (JSON-serializable).

Units: meters, seconds, m/s, degrees for the field of view, pixels for
image-space noise.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..geometry import CameraModel
from .terrain import TerrainParams

CLASS_NAMES = ("person", "trolley", "vehicle")

# (length, width, height) in meters
CLASS_SIZES = {
    "person": (0.6, 0.6, 1.7),
    "trolley": (1.0, 0.7, 1.0),
    "vehicle": (4.0, 1.8, 1.5),
}


class ConfigError(ValueError):
    pass


def class_index(label: str) -> int:
    try:
        return CLASS_NAMES.index(label)
    except ValueError:
        return len(CLASS_NAMES)


@dataclass(frozen=True)
class AgentSpec:
    agent_id: int
    class_label: str
    waypoints: tuple[tuple[float, float], ...]
    # (time s, speed m/s) knots, linearly interpolated; relative to spawn time
    speed_profile: tuple[tuple[float, float], ...] = ((0.0, 1.0),)
    loop: bool = True
    periodic_speed: bool = False
    spawn_frame: int = 0
    despawn_frame: int | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.agent_id,
            "class": self.class_label,
            "waypoints": [list(w) for w in self.waypoints],
            "speed_profile": [list(k) for k in self.speed_profile],
            "loop": self.loop,
            "periodic_speed": self.periodic_speed,
            "spawn_frame": self.spawn_frame,
            "despawn_frame": self.despawn_frame,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AgentSpec":
        return cls(
            agent_id=int(d["id"]),
            class_label=str(d.get("class", "person")),
            waypoints=tuple((float(x), float(y)) for x, y in d["waypoints"]),
            speed_profile=tuple((float(t), float(v)) for t, v in d.get("speed_profile", [[0.0, 1.0]])),
            loop=bool(d.get("loop", True)),
            periodic_speed=bool(d.get("periodic_speed", False)),
            spawn_frame=int(d.get("spawn_frame", 0)),
            despawn_frame=None if d.get("despawn_frame") is None else int(d["despawn_frame"]),
        )


@dataclass(frozen=True)
class EgoSpec:
    waypoints: tuple[tuple[float, float], ...] = ((0.0, 0.0),)
    speed: float = 0.0
    yaw: float | None = 0.0  # used when stationary; None = follow path heading
    loop: bool = False
    sensor_height: float = 1.2

    def to_dict(self) -> dict:
        return {
            "waypoints": [list(w) for w in self.waypoints],
            "speed": self.speed,
            "yaw": self.yaw,
            "loop": self.loop,
            "sensor_height": self.sensor_height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EgoSpec":
        return cls(
            waypoints=tuple((float(x), float(y)) for x, y in d.get("waypoints", [[0.0, 0.0]])),
            speed=float(d.get("speed", 0.0)),
            yaw=None if d.get("yaw", 0.0) is None else float(d.get("yaw", 0.0)),
            loop=bool(d.get("loop", False)),
            sensor_height=float(d.get("sensor_height", 1.2)),
        )


@dataclass(frozen=True)
class SensorParams:
    fov_deg: float = 90.0
    max_range: float = 30.0
    min_range: float = 2.0
    static_points: int = 4000
    points_per_agent: int = 150
    ground_clearance: float = 0.3  # dynamic samples start this far above the box bottom
    cloud_sigma: float = 0.0

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "SensorParams":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass(frozen=True)
class NoiseParams:
    sigma3d: float = 0.1
    sigma2d: float = 3.0
    miss_prob: float = 0.1
    miss_prob_2d: float | None = None  # None -> same as miss_prob
    false_rate: float = 0.2
    class_confusion: float = 0.0

    @property
    def miss_2d(self) -> float:
        return self.miss_prob if self.miss_prob_2d is None else self.miss_prob_2d

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseParams":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    frame_rate: float = 10.0
    duration: float = 30.0
    terrain: TerrainParams = field(default_factory=TerrainParams)
    agents: tuple[AgentSpec, ...] = ()
    ego: EgoSpec = field(default_factory=EgoSpec)
    sensor: SensorParams = field(default_factory=SensorParams)
    noise: NoiseParams = field(default_factory=NoiseParams)
    camera: CameraModel = field(default_factory=CameraModel)

    @property
    def n_frames(self) -> int:
        return int(round(self.duration * self.frame_rate))

    def with_overrides(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)

    def validate(self, terrain=None) -> None:
        if not self.frame_rate > 0:
            raise ConfigError("frame_rate must be > 0")
        if self.duration < 0:
            raise ConfigError("duration must be >= 0")
        n = self.noise
        for name in ("miss_prob", "class_confusion"):
            v = getattr(n, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"noise.{name}={v} outside [0, 1]")
        if not 0.0 <= n.miss_2d <= 1.0:
            raise ConfigError("noise.miss_prob_2d outside [0, 1]")
        if n.sigma3d < 0 or n.sigma2d < 0 or n.false_rate < 0:
            raise ConfigError("noise magnitudes must be >= 0")
        s = self.sensor
        if not (0 < s.fov_deg < 180):
            raise ConfigError("sensor.fov_deg must be in (0, 180)")
        if not (0 <= s.min_range < s.max_range):
            raise ConfigError("sensor ranges invalid")
        ids = [a.agent_id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate agent ids: {sorted(i for i in set(ids) if ids.count(i) > 1)}")
        for a in self.agents:
            if not a.waypoints:
                raise ConfigError(f"agent {a.agent_id} has no waypoints")
            if any(v < 0 for _, v in a.speed_profile):
                raise ConfigError(f"agent {a.agent_id} has a negative speed")
            times = [t for t, _ in a.speed_profile]
            if any(t1 < t0 for t0, t1 in zip(times, times[1:])):
                raise ConfigError(f"agent {a.agent_id} speed knots not sorted in time")
            if a.class_label not in CLASS_SIZES:
                raise ConfigError(f"agent {a.agent_id} has unknown class {a.class_label!r}")
            if terrain is not None:
                w = np.asarray(a.waypoints)
                if not np.all(terrain.contains(w[:, 0], w[:, 1])):
                    raise ConfigError(f"agent {a.agent_id} waypoints outside terrain extent")
        if terrain is not None:
            w = np.asarray(self.ego.waypoints)
            if not np.all(terrain.contains(w[:, 0], w[:, 1])):
                raise ConfigError("ego waypoints outside terrain extent")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "frame_rate": self.frame_rate,
            "duration": self.duration,
            "terrain": self.terrain.to_dict(),
            "agents": [a.to_dict() for a in self.agents],
            "ego": self.ego.to_dict(),
            "sensor": self.sensor.to_dict(),
            "noise": self.noise.to_dict(),
            "camera": self.camera.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        try:
            return cls(
                seed=int(d.get("seed", 0)),
                frame_rate=float(d.get("frame_rate", 10.0)),
                duration=float(d.get("duration", 30.0)),
                terrain=TerrainParams.from_dict(d["terrain"]) if "terrain" in d else TerrainParams(),
                agents=tuple(AgentSpec.from_dict(a) for a in d.get("agents", [])),
                ego=EgoSpec.from_dict(d.get("ego", {})),
                sensor=SensorParams.from_dict(d.get("sensor", {})),
                noise=NoiseParams.from_dict(d.get("noise", {})),
                camera=CameraModel.from_dict(d["camera"]) if "camera" in d else CameraModel(),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid scenario config: {exc}") from exc

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")
