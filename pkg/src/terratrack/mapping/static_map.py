"""Incrementally built static point map with exact k-nearest-neighbor queries.

Points are voxel-downsampled on insertion (the first point to land in a cell
is kept). The spatial index is a log-structured stack of KD-trees over
contiguous insertion ranges: new points fill a small buffer,
full buffers become trees, and trees of similar size are merged, so every
query is answered exactly by combining per-level results. The unmerged
tail gets its own small tree, rebuilt lazily after inserts.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from ..metrics import MAP_GRID, voxel_keys

_OFFSET = 1 << 20


def _pack(cells: np.ndarray) -> np.ndarray:
    idx = cells + _OFFSET
    return (idx[:, 0] << 42) | (idx[:, 1] << 21) | idx[:, 2]


class StaticMap:
    def __init__(self, resolution: float = 0.1, buffer_size: int = 4096):
        if resolution <= 0:
            raise ValueError("map resolution must be positive")
        self.resolution = float(resolution)
        self.buffer_size = int(buffer_size)
        self._pts = np.zeros((0, 3))
        self._n = 0
        self._cells = np.zeros(0, dtype=np.int64)  # sorted packed cell keys
        self._levels: list[tuple[int, int, cKDTree]] = []  # (start, end, tree) oldest first
        self._tree_end = 0  # points before this index live in trees
        self._tail: cKDTree | None = None

    def __len__(self) -> int:
        return self._n

    @property
    def points(self) -> np.ndarray:
        return self._pts[: self._n]

    def _append(self, pts: np.ndarray) -> None:
        need = self._n + len(pts)
        if need > len(self._pts):
            grown = np.zeros((max(need, 2 * len(self._pts), 1024), 3))
            grown[: self._n] = self._pts[: self._n]
            self._pts = grown
        self._pts[self._n:need] = pts
        self._n = need

    def _keys(self, pts: np.ndarray) -> np.ndarray:
        return _pack(np.floor(pts / self.resolution).astype(np.int64))

    def _known(self, keys: np.ndarray) -> np.ndarray:
        pos = np.searchsorted(self._cells, keys)
        hit = np.zeros(len(keys), dtype=bool)
        inside = pos < len(self._cells)
        hit[inside] = self._cells[pos[inside]] == keys[inside]
        return hit

    def occupied(self, points) -> np.ndarray:
        """Mask of points whose map cell already holds a point."""
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        return self._known(self._keys(pts))

    def insert(self, points) -> np.ndarray:
        """Insert world points; returns the mask of points that occupied a new cell."""
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("map points must be finite")
        new = np.zeros(len(pts), dtype=bool)
        if len(pts) == 0:
            return new
        keys = self._keys(pts)
        cells, first = np.unique(keys, return_index=True)
        fresh = ~self._known(cells)
        new[first[fresh]] = True
        if new.any():
            self._cells = np.sort(np.concatenate([self._cells, cells[fresh]]))
            self._append(pts[new])
            self._tail = None
            self._compact()
        return new

    def _compact(self) -> None:
        while self._n - self._tree_end >= self.buffer_size:
            start, end = self._tree_end, self._tree_end + self.buffer_size
            self._levels.append((start, end, cKDTree(self._pts[start:end])))
            self._tree_end = end
            while len(self._levels) >= 2:
                (s0, e0, _), (s1, e1, _) = self._levels[-2], self._levels[-1]
                if e0 - s0 > e1 - s1:
                    break
                self._levels[-2:] = [(s0, e1, cKDTree(self._pts[s0:e1]))]

    def knn(self, queries, k: int, max_distance: float = np.inf) -> tuple[np.ndarray, np.ndarray]:
        """Exact k nearest map points per query, ascending (ties by insertion order).

        Returns ``(dist, idx)`` of shape (n, k); missing neighbors have
        ``dist = inf`` and ``idx = -1``.
        """
        q = np.asarray(queries, dtype=float).reshape(-1, 3)
        n = len(q)
        parts_d, parts_i = [], []
        levels = list(self._levels)
        if self._n > self._tree_end:
            if self._tail is None:
                self._tail = cKDTree(self._pts[self._tree_end:self._n])
            levels.append((self._tree_end, self._n, self._tail))
        for start, end, tree in levels:
            kk = min(k, end - start)
            d, i = tree.query(q, k=kk, distance_upper_bound=max_distance)
            d = d.reshape(n, kk)
            i = i.reshape(n, kk)
            ok = np.isfinite(d)
            parts_d.append(d)
            parts_i.append(np.where(ok, i + start, -1))
        if not parts_d:
            return np.full((n, k), np.inf), np.full((n, k), -1, dtype=np.int64)
        d = np.concatenate(parts_d, axis=1)
        i = np.concatenate(parts_i, axis=1).astype(np.int64)
        # sort by distance, then index (missing entries carry inf and sort last)
        order = np.lexsort((np.where(i < 0, np.iinfo(np.int64).max, i), d), axis=1) if d.shape[1] else None
        if order is not None:
            d = np.take_along_axis(d, order, axis=1)
            i = np.take_along_axis(i, order, axis=1)
        if d.shape[1] < k:
            pad = k - d.shape[1]
            d = np.pad(d, ((0, 0), (0, pad)), constant_values=np.inf)
            i = np.pad(i, ((0, 0), (0, pad)), constant_values=-1)
        return d[:, :k], i[:, :k]

    def voxel_occupancy(self, grid: float = MAP_GRID) -> set[tuple[int, int, int]]:
        return {tuple(c) for c in np.floor(self.points / grid).astype(np.int64).tolist()}

    def voxel_keys(self, grid: float = MAP_GRID) -> np.ndarray:
        return voxel_keys(self.points, grid)


def export_map(static_map: StaticMap, path) -> None:
    with open(path, "w") as fh:
        for x, y, z in static_map.points.tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")


def read_map_points(path) -> np.ndarray:
    text = Path(path).read_text()
    rows = [line.split() for line in text.splitlines() if line.strip() and not line.startswith("#")]
    if any(len(r) != 3 for r in rows):
        raise ValueError(f"{path}: expected 'x y z' per line")
    return np.array(rows, dtype=float).reshape(-1, 3)


def import_map(path, resolution: float = 0.1) -> StaticMap:
    m = StaticMap(resolution)
    m.insert(read_map_points(path))
    return m
