"""Heightfield terrain built from a sum of smooth noise octaves."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator


class OutOfExtent(ValueError):
    pass


@dataclass(frozen=True)
class Octave:
    wavelength: float  # m, spacing of the random control lattice
    amplitude: float   # m, peak height contribution


@dataclass(frozen=True)
class TerrainParams:
    origin: tuple[float, float] = (-50.0, -50.0)
    size: tuple[float, float] = (100.0, 100.0)
    cell_size: float = 0.5
    octaves: tuple[Octave, ...] = field(
        default_factory=lambda: (Octave(32.0, 1.0), Octave(12.0, 0.4), Octave(5.0, 0.1))
    )
    seed: int | None = None  # fixed site; None = derive from the scenario seed

    def to_dict(self) -> dict:
        return {
            "origin": list(self.origin),
            "size": list(self.size),
            "cell_size": self.cell_size,
            "octaves": [{"wavelength": o.wavelength, "amplitude": o.amplitude} for o in self.octaves],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TerrainParams":
        octs = tuple(Octave(float(o["wavelength"]), float(o["amplitude"])) for o in d.get("octaves", []))
        return cls(
            origin=tuple(d.get("origin", (-50.0, -50.0))),
            size=tuple(d.get("size", (100.0, 100.0))),
            cell_size=float(d.get("cell_size", 0.5)),
            octaves=octs,
            seed=None if d.get("seed") is None else int(d["seed"]),
        )


@dataclass(eq=False)
class TerrainField:
    heights: np.ndarray          # (nx, ny); heights[i, j] at origin + (i, j) * cell_size
    origin: tuple[float, float]
    cell_size: float
    octave_amplitudes: tuple[float, ...] = ()

    @property
    def extent(self) -> tuple[float, float]:
        nx, ny = self.heights.shape
        return ((nx - 1) * self.cell_size, (ny - 1) * self.cell_size)

    def contains(self, x, y) -> np.ndarray:
        ex, ey = self.extent
        fx = np.asarray(x) - self.origin[0]
        fy = np.asarray(y) - self.origin[1]
        return (fx >= 0) & (fx <= ex) & (fy >= 0) & (fy <= ey)

    def height_at(self, x: float, y: float) -> float:
        return float(self.heights_at(np.array([x]), np.array([y]))[0])

    def heights_at(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Bilinear interpolation of the grid at arrays of (x, y)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if not np.all(self.contains(x, y)):
            raise OutOfExtent("query outside terrain extent")
        nx, ny = self.heights.shape
        gx = (x - self.origin[0]) / self.cell_size
        gy = (y - self.origin[1]) / self.cell_size
        i = np.clip(np.floor(gx).astype(int), 0, nx - 2)
        j = np.clip(np.floor(gy).astype(int), 0, ny - 2)
        tx = gx - i
        ty = gy - j
        h = self.heights
        return (
            h[i, j] * (1 - tx) * (1 - ty)
            + h[i + 1, j] * tx * (1 - ty)
            + h[i, j + 1] * (1 - tx) * ty
            + h[i + 1, j + 1] * tx * ty
        )

    def gradient_at(self, x: float, y: float, eps: float = 1e-3) -> tuple[float, float]:
        hx = (self.height_at(x + eps, y) - self.height_at(x - eps, y)) / (2 * eps)
        hy = (self.height_at(x, y + eps) - self.height_at(x, y - eps)) / (2 * eps)
        return hx, hy


def height_at(field_: TerrainField, x: float, y: float) -> float:
    return field_.height_at(x, y)


def _octave_layer(rng: np.random.Generator, octave: Octave, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    # Random lattice in [-1, 1] at the octave wavelength, cubic-interpolated onto the grid.
    span_x = xs[-1] - xs[0]
    span_y = ys[-1] - ys[0]
    nlx = max(int(np.ceil(span_x / octave.wavelength)) + 1, 4)
    nly = max(int(np.ceil(span_y / octave.wavelength)) + 1, 4)
    lattice = rng.uniform(-1.0, 1.0, size=(nlx, nly))
    lx = np.linspace(xs[0], xs[0] + (nlx - 1) * octave.wavelength, nlx)
    ly = np.linspace(ys[0], ys[0] + (nly - 1) * octave.wavelength, nly)
    interp = RegularGridInterpolator((lx, ly), lattice, method="cubic")
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    layer = interp(np.stack([gx.ravel(), gy.ravel()], axis=1)).reshape(gx.shape)
    peak = np.abs(layer).max()
    if peak > 0:
        layer = layer / peak
    return octave.amplitude * layer


def generate_terrain(seed: int, params: TerrainParams) -> TerrainField:
    if params.cell_size <= 0 or min(params.size) <= 0:
        raise ValueError("terrain cell size and extent must be positive")
    nx = int(round(params.size[0] / params.cell_size)) + 1
    ny = int(round(params.size[1] / params.cell_size)) + 1
    xs = params.origin[0] + params.cell_size * np.arange(nx)
    ys = params.origin[1] + params.cell_size * np.arange(ny)
    if params.seed is not None:
        seed = params.seed
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x7E22]))
    heights = np.zeros((nx, ny))
    for octave in params.octaves:
        if octave.amplitude != 0.0:
            heights += _octave_layer(rng, octave, xs, ys)
    return TerrainField(heights, tuple(params.origin), params.cell_size,
                        tuple(o.amplitude for o in params.octaves))
