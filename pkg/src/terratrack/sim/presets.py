"""Ready-made scenario families used by the experiments and the CLI."""
from __future__ import annotations

import numpy as np

from .config import AgentSpec, EgoSpec, NoiseParams, ScenarioConfig, SensorParams
from .terrain import Octave, TerrainParams

NOISELESS = NoiseParams(sigma3d=0.0, sigma2d=0.0, miss_prob=0.0, false_rate=0.0)
FLAT = TerrainParams(octaves=())


def rectangle(cx: float, cy: float, w: float, h: float) -> tuple[tuple[float, float], ...]:
    return ((cx - w / 2, cy - h / 2), (cx + w / 2, cy - h / 2), (cx + w / 2, cy + h / 2), (cx - w / 2, cy + h / 2))


def circle(cx: float, cy: float, r: float, n: int = 48, ccw: bool = True, phase: float = 0.0):
    th = phase + np.linspace(0.0, 2 * np.pi, n, endpoint=False) * (1 if ccw else -1)
    return tuple((float(cx + r * np.cos(t)), float(cy + r * np.sin(t))) for t in th)


def in_fov(points, fov_deg: float = 90.0, r0: float = 3.0, r1: float = 28.0, margin_deg: float = 4.0) -> bool:
    p = np.asarray(points, dtype=float)
    rng = np.hypot(p[:, 0], p[:, 1])
    bearing = np.degrees(np.abs(np.arctan2(p[:, 1], p[:, 0])))
    return bool(np.all((rng >= r0) & (rng <= r1) & (bearing <= fov_deg / 2 - margin_deg)))


def rotate_profile(knots, phase: float) -> tuple[tuple[float, float], ...]:
    """Shift a periodic speed profile so that it starts ``phase`` seconds into its cycle."""
    t = np.array([k[0] for k in knots])
    v = np.array([k[1] for k in knots])
    period = t[-1] - t[0]
    phase = phase % period
    shifted = [(0.0, float(np.interp(t[0] + phase, t, v)))]
    for tk, vk in zip(t, v):
        if tk - t[0] > phase:
            shifted.append((float(tk - t[0] - phase), float(vk)))
    for tk, vk in zip(t[1:], v[1:]):
        if tk - t[0] <= phase:
            shifted.append((float(tk - t[0] + period - phase), float(vk)))
    if shifted[-1][0] < period:
        shifted.append((float(period), shifted[0][1]))
    return tuple(shifted)


def identity_scenario(n_frames: int = 600, seed: int = 0) -> ScenarioConfig:
    """Three agents looping inside the field of view with perfect detections."""
    agents = (
        AgentSpec(0, "person", rectangle(11.0, -4.0, 6.0, 4.0), ((0.0, 1.0), (10.0, 1.6), (20.0, 1.0)), periodic_speed=True),
        AgentSpec(1, "trolley", circle(19.0, 3.0, 2.5, n=24), ((0.0, 1.5),)),
        AgentSpec(2, "person", ((9.0, 5.0), (14.0, 6.5), (11.0, 8.0)), ((0.0, 2.0), (5.0, 0.5), (10.0, 2.0)), periodic_speed=True),
    )
    return ScenarioConfig(
        seed=seed, frame_rate=10.0, duration=n_frames / 10.0,
        terrain=TerrainParams(octaves=(Octave(32.0, 0.8), Octave(10.0, 0.2))),
        agents=agents, noise=NOISELESS,
        sensor=SensorParams(static_points=1500, points_per_agent=60),
    )


def stop_and_sprint_scenario(seed: int, duration: float = 60.0, n_agents: int = 4,
                             sigma3d: float = 0.15, miss: float = 0.1) -> ScenarioConfig:
    """Agents alternating between standstill and 4 m/s sprints around square loops."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5A]))
    centers = [(11.0, -5.0), (11.0, 5.0), (21.0, -6.0), (21.0, 6.0), (16.0, 0.0)]
    agents = []
    for k in range(n_agents):
        cx, cy = centers[k % len(centers)]
        cx += rng.uniform(-0.5, 0.5)
        cy += rng.uniform(-0.5, 0.5)
        stop = rng.uniform(1.0, 2.0)
        run = rng.uniform(1.5, 2.5)
        ramp = 0.1
        knots = [(0.0, 0.0), (stop, 0.0), (stop + ramp, 4.0), (stop + ramp + run, 4.0), (stop + 2 * ramp + run, 0.0)]
        knots = rotate_profile(knots, rng.uniform(0.0, knots[-1][0]))
        agents.append(AgentSpec(k, "person" if k % 2 == 0 else "trolley",
                                rectangle(cx, cy, 5.0, 5.0), knots, loop=True, periodic_speed=True))
    return ScenarioConfig(
        seed=seed, frame_rate=10.0, duration=duration,
        terrain=TerrainParams(octaves=(Octave(30.0, 0.6), Octave(10.0, 0.15))),
        agents=tuple(agents),
        noise=NoiseParams(sigma3d=sigma3d, sigma2d=3.0, miss_prob=miss, false_rate=0.2),
        sensor=SensorParams(static_points=500, points_per_agent=20),
    )


def site_trails(site: int, n: int = 6) -> list[tuple[tuple[float, float], ...]]:
    """Closed curved trails (ellipses) laid out inside the sensor's field of view."""
    rng = np.random.default_rng(np.random.SeedSequence([site, 0x7A]))
    trails = []
    while len(trails) < n:
        cx, cy = rng.uniform(10.0, 22.0), rng.uniform(-5.0, 5.0)
        ax, ay = rng.uniform(2.5, 5.0), rng.uniform(2.5, 5.0)
        rot = rng.uniform(0.0, np.pi)
        th = np.linspace(0.0, 2 * np.pi, 48, endpoint=False)
        ex, ey = ax * np.cos(th), ay * np.sin(th)
        pts = np.stack([cx + ex * np.cos(rot) - ey * np.sin(rot), cy + ex * np.sin(rot) + ey * np.cos(rot)], axis=1)
        if in_fov(pts):
            trails.append(tuple(map(tuple, pts.tolist())))
    return trails


def curved_terrain_scenario(seed: int, duration: float = 40.0, n_agents: int = 3,
                            site: int = 7) -> ScenarioConfig:
    """Agents walking curved trails of a rugged site at varied speeds (prediction experiments).

    The site fixes the terrain and the trail layout; the seed picks which
    trails are used, direction, starting point and speed.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0]))
    trails = site_trails(site)
    agents = []
    for k, t in enumerate(rng.choice(len(trails), size=n_agents, replace=False)):
        pts = trails[int(t)]
        start = int(rng.integers(len(pts)))
        pts = pts[start:] + pts[:start]
        if rng.integers(2):
            pts = pts[::-1]
        v = rng.uniform(1.0, 2.2)
        profile = ((0.0, v), (8.0, v * rng.uniform(0.7, 1.3)), (16.0, v))
        agents.append(AgentSpec(k, "person" if k % 2 == 0 else "trolley", pts, profile, periodic_speed=True))
    terrain = TerrainParams(octaves=(Octave(16.0, 2.5), Octave(8.0, 0.8), Octave(4.0, 0.1)), seed=site)
    return ScenarioConfig(
        seed=seed, frame_rate=10.0, duration=duration, terrain=terrain, agents=tuple(agents),
        noise=NoiseParams(sigma3d=0.05, sigma2d=2.0, miss_prob=0.05, false_rate=0.1),
        sensor=SensorParams(static_points=300, points_per_agent=10),
    )


def mapping_scenario(seed: int, duration: float = 30.0, miss: float = 0.2,
                     static_points: int = 4000) -> ScenarioConfig:
    """Walkers crossing in front of a slowly advancing robot.

    Walkers appear one by one after the first second, once the robot has a
    ground map to judge them against.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x3A]))
    agents = []
    for k in range(3):
        x0 = rng.uniform(12.0, 22.0) + 4.0 * k
        y0 = rng.uniform(-6.0, -3.0)
        path = ((x0, y0), (x0 + rng.uniform(-2, 2), -y0 + rng.uniform(0, 2)), (x0 + 3.0, y0 + rng.uniform(-1, 1)))
        v = rng.uniform(0.8, 1.6)
        agents.append(AgentSpec(k, "person" if k != 1 else "trolley", path, ((0.0, v), (6.0, 1.3 * v), (12.0, v)),
                                periodic_speed=True, spawn_frame=10 + 15 * k))
    return ScenarioConfig(
        seed=seed, frame_rate=10.0, duration=duration,
        terrain=TerrainParams(octaves=(Octave(30.0, 1.0), Octave(10.0, 0.2))),
        agents=tuple(agents),
        ego=EgoSpec(waypoints=((0.0, 0.0), (20.0, 0.0)), speed=0.3, yaw=None),
        noise=NoiseParams(sigma3d=0.1, sigma2d=3.0, miss_prob=miss, false_rate=0.2),
        sensor=SensorParams(static_points=static_points, points_per_agent=150),
    )


def bench_scenario(seed: int = 0, n_agents: int = 10, points: int = 50_000, duration: float = 5.0) -> ScenarioConfig:
    """Dense scene for timing: many agents and a large cloud per frame."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xBE]))
    agents = []
    for k in range(n_agents):
        x = 8.0 + 2.0 * k
        y = rng.uniform(-0.4, 0.4) * x
        agents.append(AgentSpec(k, "person" if k % 2 == 0 else "trolley",
                                rectangle(x, y, 1.5, 3.0), ((0.0, rng.uniform(0.8, 2.0)),)))
    return ScenarioConfig(
        seed=seed, frame_rate=10.0, duration=duration,
        terrain=TerrainParams(octaves=(Octave(30.0, 1.0), Octave(10.0, 0.2))),
        agents=tuple(agents),
        sensor=SensorParams(static_points=points - 150 * n_agents, points_per_agent=150),
    )


PRESETS = {
    "identity": lambda seed: identity_scenario(seed=seed),
    "stop-and-sprint": lambda seed: stop_and_sprint_scenario(seed),
    "curved-terrain": lambda seed: curved_terrain_scenario(seed),
    "mapping": lambda seed: mapping_scenario(seed),
    "bench": lambda seed: bench_scenario(seed),
}
