from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from experiments import ghost_scene
from terratrack.geometry import CameraModel, Pose
from terratrack.mapping import (
    InsufficientNeighbors,
    Mapper,
    ResidualParams,
    StaticMap,
    TrackBox,
    ZeroRange,
    box_removal_mask,
    boxes_from_detections,
    boxes_from_tracks,
    export_map,
    filter_by_residual,
    import_map,
    integrate_frame,
    plane_residual,
    remove_tracked_dynamic,
    residual_score,
    residual_scores,
)
from terratrack.metrics import voxel_keys
from terratrack.sim import AgentSpec, ScenarioConfig, SensorParams, simulate
from terratrack.sim.presets import FLAT, NOISELESS
from terratrack.tracking import Tracker, TrackerConfig


def plane_map(normal=(0, 0, 1), offset=0.0, extent=3.0, step=0.2):
    n = np.asarray(normal, float) / np.linalg.norm(normal)
    u = np.cross(n, [1, 0, 0] if abs(n[0]) < 0.9 else [0, 1, 0])
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    a, b = np.meshgrid(np.arange(-extent, extent, step), np.arange(-extent, extent, step))
    pts = offset * n + a.ravel()[:, None] * u + b.ravel()[:, None] * v
    m = StaticMap()
    m.insert(pts)
    return m, n


# Box removal

def unit_box():
    return TrackBox(1, np.zeros(3), np.array([1.0, 1.0, 2.0]), 0.0)


def test_box_examples():
    pts = np.array([[0, 0, 0.5], [5, 5, 0]])
    kept, removed = remove_tracked_dynamic(pts, [unit_box()], Pose.identity())
    assert np.array_equal(removed, pts[:1]) and np.array_equal(kept, pts[1:])
    kept, removed = remove_tracked_dynamic(pts, [], Pose.identity())
    assert np.array_equal(kept, pts) and len(removed) == 0


def test_box_margin_and_yaw():
    box = TrackBox(1, np.zeros(3), np.array([2.0, 1.0, 2.0]), np.pi / 2)
    inside_rotated = np.array([[0.0, 0.9, 0.0]])  # length now runs along y
    assert box_removal_mask(inside_rotated, [box], 0.0)[0].all()
    edge = np.array([[0.75, 0.0, 0.0]])  # half width 0.5 plus margin 0.3
    assert box_removal_mask(edge, [box])[0].all()
    assert not box_removal_mask(edge, [box], 0.0)[0].any()


def walker_frames(n=60, drop=range(30, 34)):
    cfg = ScenarioConfig(
        seed=3, frame_rate=10.0, duration=n / 10.0, terrain=FLAT,
        agents=(AgentSpec(0, "person", ((10.0, -5.0), (10.0, 5.0)), ((0.0, 1.0),), loop=False),),
        noise=NOISELESS, sensor=SensorParams(static_points=800, points_per_agent=80),
    )
    for f, _ in simulate(cfg):
        if f.frame_index in drop:
            f = replace(f, detections3d=[], detections2d=[])
        yield f


def test_coasting_track_still_removes_agent_points():
    drop = range(30, 34)
    tracker = Tracker(CameraModel(), TrackerConfig(meas_sigma=1e-4))
    checked = 0
    for f in walker_frames(drop=drop):
        reports = tracker.step(f)
        if f.frame_index not in drop:
            continue
        world = f.ego_pose.apply(f.cloud)
        dyn = f.cloud_labels == 0
        tracked, _ = box_removal_mask(world, boxes_from_tracks(reports))
        single, _ = box_removal_mask(world, boxes_from_detections(f.detections3d, f.ego_pose))
        assert dyn.sum() > 0 and tracked[dyn].all()
        assert not single[dyn].any()
        checked += 1
    assert checked == len(drop)


# Plane residual and score

def test_plane_residual_examples():
    flat, _ = plane_map()
    assert plane_residual([0, 0, 0], flat) == pytest.approx(0, abs=1e-12)
    assert plane_residual([0, 0, 0.5], flat) == pytest.approx(0.5)
    tilted, n = plane_map(normal=(1, 0, 1), offset=1 / np.sqrt(2))
    p = np.array([0.5, 0.0, 0.5]) + 0.2 * n
    assert plane_residual(p, tilted) == pytest.approx(0.2, abs=1e-9)


def test_plane_residual_against_svd_oracle():
    rng = np.random.default_rng(0)
    m = StaticMap(resolution=1e-3)
    m.insert(rng.normal(0, [1, 1, 0.1], (300, 3)))
    params = ResidualParams()
    for q in rng.normal(0, 0.5, (20, 3)):
        nb = m.points[np.argsort(np.linalg.norm(m.points - q, axis=1))[: params.k_neighbors]]
        c = nb.mean(axis=0)
        normal = np.linalg.svd(nb - c)[2][-1]
        assert plane_residual(q, m, params) == pytest.approx(abs((q - c) @ normal), abs=1e-9)


def test_insufficient_neighbors():
    m = StaticMap()
    m.insert([[0, 0, 0], [0.5, 0, 0], [0, 0.5, 0]])
    with pytest.raises(InsufficientNeighbors):
        plane_residual([0, 0, 0.1], m)
    flat, _ = plane_map()
    with pytest.raises(InsufficientNeighbors):
        plane_residual([20, 0, 0], flat)


def test_residual_score_examples():
    assert residual_score([4, 0, 0], 0.0) == 0
    assert residual_score([4, 0, 0], 0.2) == pytest.approx(0.1)
    assert residual_score([0, 9, 0], 0.3) == pytest.approx(0.1)
    with pytest.raises(ZeroRange):
        residual_score([0, 0, 0], 0.1)
    assert np.isinf(residual_scores(np.zeros((1, 3)), np.array([0.1]))[0])


@given(st.floats(0, 10), st.floats(0.01, 100), st.floats(1e-3, 100))
def test_residual_score_homogeneity(r, c, rng):
    assert residual_score([rng, 0, 0], c * r) == pytest.approx(c * residual_score([rng, 0, 0], r), rel=1e-12)


# Residual filter

def test_filter_examples():
    pts = np.random.default_rng(0).normal(0, 3, (50, 3))
    assert filter_by_residual(pts, pts, StaticMap()).all()
    m, ego, cloud, ghost = ghost_scene()
    world = ego.apply(cloud)
    keep = filter_by_residual(cloud, world, m)
    assert keep[~ghost].all()
    assert not keep[ghost].any()


def test_floating_cluster_score_arithmetic():
    m, _ = plane_map(extent=30.0, step=0.25)
    p = np.array([[25.0, 0.0, 1.0]])
    r = plane_residual(p[0], m)
    assert r == pytest.approx(1.0)
    assert residual_score(p[0] - [0, 0, 1.0], r) == pytest.approx(0.2)
    assert not filter_by_residual(p - [0, 0, 1.0], p, m).any()


def test_ghost_scene_voxels():
    m, ego, cloud, ghost = ghost_scene(seed=1)
    world = ego.apply(cloud)
    integrate_frame(m, cloud, [], ego)
    out = voxel_keys(m.points)
    ghost_vox = voxel_keys(world[ghost])
    ground_vox = voxel_keys(world[~ghost])
    assert np.isin(ghost_vox, out).mean() <= 0.05
    assert np.isin(ground_vox, out).mean() >= 0.99


# Integration

def test_static_scene_map_grows_monotonically():
    cfg = ScenarioConfig(seed=0, frame_rate=10.0, duration=10.0, terrain=FLAT, agents=(), noise=NOISELESS,
                         sensor=SensorParams(static_points=400))
    mapper, sizes = Mapper(), []
    for f, _ in simulate(cfg):
        rep = mapper.step(f, [])
        assert rep.removed_box == 0
        assert rep.inserted == rep.input - rep.removed_box - rep.removed_residual
        sizes.append(len(mapper.map))
    assert len(sizes) == 100 and sizes == sorted(sizes)


def test_report_invariant_with_boxes():
    m, ego, cloud, _ = ghost_scene()
    box = TrackBox(4, np.array([10.0, 0.0, 0.5]), np.array([2.0, 2.0, 2.0]), 0.3)
    rep = integrate_frame(m, cloud, [box], ego)
    assert rep.removed_box > 0 and rep.per_track == {4: rep.removed_box}
    assert rep.inserted == rep.input - rep.removed_box - rep.removed_residual
    assert min(rep.removed_box, rep.removed_residual, rep.inserted, rep.new_map_points) >= 0


# Static map

def test_voxel_examples():
    m = StaticMap()
    m.insert([[0.05, 0.05, 0.05]])
    assert m.voxel_occupancy() == {(0, 0, 0)}
    m2 = StaticMap(resolution=0.01)
    m2.insert([[0.05, 0.05, 0.05], [0.15, 0.1, 0.1]])
    assert len(m2) == 2 and m2.voxel_occupancy() == {(0, 0, 0)}
    assert m.insert([[0.06, 0.06, 0.06]]).tolist() == [False]  # same 0.1 m cell, downsampled away


def test_export_import_round_trip(tmp_path):
    m = StaticMap()
    m.insert(np.random.default_rng(0).uniform(-20, 20, (5000, 3)))
    export_map(m, tmp_path / "map.xyz")
    back = import_map(tmp_path / "map.xyz")
    assert len(back) == len(m) and np.array_equal(back.points, m.points)


def test_rejects_non_finite_points():
    with pytest.raises(ValueError):
        StaticMap().insert([[0, np.nan, 0]])


@given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.integers(1, 4))
def test_knn_matches_brute_force(seed, k, batches):
    rng = np.random.default_rng(seed)
    m = StaticMap(resolution=1e-3, buffer_size=64)
    for _ in range(batches):
        m.insert(rng.uniform(-5, 5, (int(rng.integers(1, 150)), 3)))
    q = rng.uniform(-6, 6, (10, 3))
    dist, idx = m.knn(q, k)
    full = np.linalg.norm(q[:, None] - m.points[None], axis=2)
    for i in range(len(q)):
        order = np.lexsort((np.arange(len(m)), full[i]))[:k]
        n = len(order)
        assert np.array_equal(idx[i, :n], order)
        assert np.allclose(dist[i, :n], full[i, order])
        assert np.all(idx[i, n:] == -1) and np.all(np.isinf(dist[i, n:]))
        assert np.all(np.diff(dist[i, :n]) >= 0)


@given(st.integers(0, 2**32 - 1))
def test_insertion_order_insensitive_at_voxel_level(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-3, 3, (400, 3))
    a, b = StaticMap(), StaticMap()
    a.insert(pts)
    b.insert(pts[rng.permutation(len(pts))])
    assert np.array_equal(a.voxel_keys(), b.voxel_keys())
