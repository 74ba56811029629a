"""Dynamic point removal and static map integration.

Each frame: transform the LiDAR cloud to the world, drop points inside the
(inflated) boxes of every live track, then drop points whose range-normalized
point-to-plane residual against the map built from earlier frames is too
large. Survivors are inserted into the map.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ..geometry import OrientedBox3, Pose
from .static_map import StaticMap

BOX_MARGIN = 0.3


class InsufficientNeighbors(LookupError):
    pass


class ZeroRange(ValueError):
    pass


@dataclass(frozen=True)
class ResidualParams:
    k_neighbors: int = 5
    s_threshold: float = 0.05
    min_neighbors: int = 4
    search_radius: float = 1.5

    def __post_init__(self):
        if self.k_neighbors < 3:
            raise ValueError("k_neighbors must be >= 3")
        if not self.s_threshold > 0:
            raise ValueError("s_threshold must be positive")
        if not 3 <= self.min_neighbors <= self.k_neighbors:
            raise ValueError("min_neighbors must lie in [3, k_neighbors]")
        if not self.search_radius > 0:
            raise ValueError("search_radius must be positive")


@dataclass(frozen=True)
class TrackBox:
    track_id: int
    center: np.ndarray  # world
    size: np.ndarray
    yaw: float          # world


@dataclass
class RemovalReport:
    frame_index: int = 0
    input: int = 0
    removed_box: int = 0
    removed_residual: int = 0
    inserted: int = 0
    new_map_points: int = 0
    per_track: dict[int, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "frame_index": self.frame_index,
            "input": self.input,
            "removed_box": self.removed_box,
            "removed_residual": self.removed_residual,
            "inserted": self.inserted,
            "new_map_points": self.new_map_points,
            "per_track": {str(k): v for k, v in sorted(self.per_track.items())},
        }


def boxes_from_tracks(reports) -> list[TrackBox]:
    """Boxes at the current reported position of every live track, coasting included."""
    return [TrackBox(r.track_id, np.asarray(r.position, dtype=float), np.asarray(r.box_size, dtype=float),
                     float(r.box_yaw)) for r in reports]


def boxes_from_detections(detections: list[OrientedBox3], ego_pose: Pose) -> list[TrackBox]:
    """Single-frame baseline: boxes only where the current frame has a 3D detection."""
    out = []
    for i, d in enumerate(detections):
        out.append(TrackBox(-1 - i, ego_pose.apply(d.center[None])[0], d.size.copy(), d.yaw + ego_pose.yaw))
    return out


def points_in_box(points_world: np.ndarray, box: TrackBox, margin: float = BOX_MARGIN) -> np.ndarray:
    d = np.asarray(points_world, dtype=float).reshape(-1, 3) - box.center
    c, s = np.cos(box.yaw), np.sin(box.yaw)
    half = box.size / 2.0 + margin
    lx = c * d[:, 0] + s * d[:, 1]
    ly = -s * d[:, 0] + c * d[:, 1]
    return (np.abs(lx) <= half[0]) & (np.abs(ly) <= half[1]) & (np.abs(d[:, 2]) <= half[2])


def box_removal_mask(points_world: np.ndarray, boxes: list[TrackBox], margin: float = BOX_MARGIN
                     ) -> tuple[np.ndarray, Counter]:
    """Mask of points inside any box, and how many each box claimed (first box wins)."""
    pts = np.asarray(points_world, dtype=float).reshape(-1, 3)
    removed = np.zeros(len(pts), dtype=bool)
    tally: Counter = Counter()
    for b in boxes:
        reach = np.linalg.norm(b.size / 2.0 + margin)
        near = np.flatnonzero(~removed & (np.abs(pts[:, 0] - b.center[0]) <= reach)
                              & (np.abs(pts[:, 1] - b.center[1]) <= reach))
        if len(near) == 0:
            continue
        inside = near[points_in_box(pts[near], b, margin)]
        removed[inside] = True
        tally[b.track_id] += len(inside)
    return removed, tally


def remove_tracked_dynamic(points_lidar, boxes: list[TrackBox], ego_pose: Pose, margin: float = BOX_MARGIN
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Split LiDAR-frame points into (kept, removed) by the world-frame track boxes."""
    pts = np.asarray(points_lidar, dtype=float).reshape(-1, 3)
    mask, _ = box_removal_mask(ego_pose.apply(pts), boxes, margin)
    return pts[~mask], pts[mask]


def fit_planes(neighbors: np.ndarray, valid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares planes through masked neighbor sets; returns (centroids, unit normals)."""
    w = valid.astype(float)[..., None]
    cnt = w.sum(axis=1)
    centroid = (neighbors * w).sum(axis=1) / np.maximum(cnt, 1.0)
    d = (neighbors - centroid[:, None, :]) * w
    cov = np.einsum("nki,nkj->nij", d, d)
    _, vecs = np.linalg.eigh(cov)
    return centroid, vecs[:, :, 0]


def plane_residuals(points_world, static_map: StaticMap, params: ResidualParams = ResidualParams()) -> np.ndarray:
    """Point-to-plane distance per point; NaN where too few map neighbors lie within the search radius."""
    q = np.asarray(points_world, dtype=float).reshape(-1, 3)
    out = np.full(len(q), np.nan)
    if len(q) == 0 or len(static_map) == 0:
        return out
    dist, idx = static_map.knn(q, params.k_neighbors, params.search_radius)
    valid = np.isfinite(dist)
    ok = valid.sum(axis=1) >= params.min_neighbors
    if not ok.any():
        return out
    nb = static_map.points[np.where(valid[ok], idx[ok], 0)]
    centroid, normal = fit_planes(nb, valid[ok])
    out[ok] = np.abs(np.einsum("ni,ni->n", q[ok] - centroid, normal))
    return out


def plane_residual(p, static_map: StaticMap, params: ResidualParams = ResidualParams()) -> float:
    if len(static_map) == 0:
        raise ValueError("map is empty")
    r = plane_residuals(np.asarray(p, dtype=float)[None], static_map, params)[0]
    if np.isnan(r):
        raise InsufficientNeighbors("too few map neighbors within the search radius")
    return float(r)


def residual_score(p_lidar, r_plane: float) -> float:
    rng = float(np.linalg.norm(np.asarray(p_lidar, dtype=float)))
    if rng <= 1e-6:
        raise ZeroRange("point at the sensor origin")
    return float(r_plane) / np.sqrt(rng)


def residual_scores(points_lidar: np.ndarray, residuals: np.ndarray) -> np.ndarray:
    """Vectorized scores; zero-range points score inf, unjudgeable points NaN."""
    rng = np.linalg.norm(np.asarray(points_lidar, dtype=float).reshape(-1, 3), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = residuals / np.sqrt(rng)
    return np.where(rng <= 1e-6, np.inf, s)


def filter_by_residual(points_lidar, points_world, static_map: StaticMap,
                       params: ResidualParams = ResidualParams()) -> np.ndarray:
    """Mask of points to keep: score at or below threshold, or not judgeable."""
    r = plane_residuals(points_world, static_map, params)
    s = residual_scores(points_lidar, r)
    return ~(s > params.s_threshold)  # NaN compares False, so unjudgeable points are kept


class Mapper:
    """Sequential map builder; ``track_boxes`` selects between tracked and single-frame removal."""

    def __init__(self, params: ResidualParams | None = None, margin: float = BOX_MARGIN,
                 resolution: float = 0.1, single_frame: bool = False):
        self.params = params or ResidualParams()
        self.margin = margin
        self.single_frame = single_frame
        self.map = StaticMap(resolution)
        self.reports: list[RemovalReport] = []

    def step(self, frame, track_reports) -> RemovalReport:
        if self.single_frame:
            boxes = boxes_from_detections(frame.detections3d, frame.ego_pose)
        else:
            boxes = boxes_from_tracks(track_reports)
        rep = integrate_frame(self.map, frame.cloud, boxes, frame.ego_pose, self.params, self.margin)
        rep.frame_index = frame.frame_index
        self.reports.append(rep)
        return rep


def integrate_frame(static_map: StaticMap, cloud_lidar, boxes: list[TrackBox], ego_pose: Pose,
                    params: ResidualParams = ResidualParams(), margin: float = BOX_MARGIN) -> RemovalReport:
    pts = np.asarray(cloud_lidar, dtype=float).reshape(-1, 3)
    world = ego_pose.apply(pts)
    in_box, tally = box_removal_mask(world, boxes, margin)
    rest = np.flatnonzero(~in_box)
    # A point in an already mapped cell cannot change the map, so only the others are scored.
    keep = np.ones(len(rest), dtype=bool)
    fresh = np.flatnonzero(~static_map.occupied(world[rest]))
    keep[fresh] = filter_by_residual(pts[rest[fresh]], world[rest[fresh]], static_map, params)
    survivors = rest[keep]
    new = static_map.insert(world[survivors])
    return RemovalReport(
        input=len(pts),
        removed_box=int(in_box.sum()),
        removed_residual=int((~keep).sum()),
        inserted=len(survivors),
        new_map_points=int(new.sum()),
        per_track={int(k): int(v) for k, v in tally.items()},
    )
