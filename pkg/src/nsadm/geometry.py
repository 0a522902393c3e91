"""Beam-grid geometry: angle grids, steering vectors, distance matrices,
and the mapping between per-beam distances and 3D point clouds.

Conventions used throughout the package:

* Grids are azimuth-major: a W x H array indexed [i, j] has azimuth index i
  and elevation index j. Angles are radians.
* The array steering vector uses sin(elevation) for the planar phase terms,
  while the beam-to-point mapping treats elevation as the angle above the
  horizontal plane (cos(elevation) scales the horizontal components). Both
  are implemented exactly as their defining expressions; they are separate
  conventions and are deliberately not unified.
* Invalid beams carry the sentinel value 0.0 plus a False entry in the
  validity mask. NaN never appears in a distance matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AngleGrid:
    """Beam codebook: W azimuths by H elevations, radians.

    azimuths: shape (W,), any range. elevations: shape (H,), must lie in
    [-pi/2, pi/2]. Monotonically increasing spacing is expected but only the
    elevation bounds are enforced.
    """

    azimuths: np.ndarray
    elevations: np.ndarray

    def __post_init__(self):
        self.azimuths = np.asarray(self.azimuths, dtype=np.float64)
        self.elevations = np.asarray(self.elevations, dtype=np.float64)
        if self.azimuths.ndim != 1 or self.elevations.ndim != 1:
            raise ValueError("azimuths and elevations must be 1-D")
        if self.azimuths.size == 0 or self.elevations.size == 0:
            raise ValueError("empty angle grid")
        if not (np.isfinite(self.azimuths).all() and np.isfinite(self.elevations).all()):
            raise ValueError("angles must be finite")
        half_pi = np.pi / 2 + 1e-12
        if np.any(np.abs(self.elevations) > half_pi):
            raise ValueError("elevations must lie within [-pi/2, pi/2]")

    @property
    def shape(self):
        return (self.azimuths.size, self.elevations.size)

    def mesh(self):
        """Return broadcast (W, H) azimuth and elevation arrays."""
        az = self.azimuths[:, None]
        el = self.elevations[None, :]
        return np.broadcast_to(az, self.shape), np.broadcast_to(el, self.shape)

    @staticmethod
    def uniform(n_azimuth, n_elevation, elevation_span, azimuth_span=(-np.pi, np.pi)):
        """Uniform grid; azimuth endpoint excluded (full circle has no duplicate beam)."""
        az = np.linspace(azimuth_span[0], azimuth_span[1], n_azimuth, endpoint=False)
        el = np.linspace(elevation_span[0], elevation_span[1], n_elevation)
        return AngleGrid(az, el)


@dataclass
class DistanceMatrix:
    """Per-beam range map over an angle grid.

    values: (W, H) float64 meters, non-negative and finite, 0.0 wherever
    valid is False. valid: (W, H) bool.
    """

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.values.ndim != 2 or self.values.shape != self.valid.shape:
            raise ValueError("values and valid must be matching 2-D arrays")
        if not np.isfinite(self.values).all():
            raise ValueError("distances must be finite")
        if np.any(self.values < 0):
            raise ValueError("distances must be non-negative")
        # enforce the sentinel invariant rather than trusting callers
        self.values = np.where(self.valid, self.values, 0.0)

    @property
    def shape(self):
        return self.values.shape

    def copy(self):
        return DistanceMatrix(self.values.copy(), self.valid.copy())


def beam_directions(grid: AngleGrid) -> np.ndarray:
    """Unit direction for every beam, shape (W, H, 3).

    Components: (cos(el) cos(az), cos(el) sin(az), sin(el)). A beam pointing
    below the horizontal has negative elevation and a negative z component.
    """
    az, el = grid.mesh()
    ce = np.cos(el)
    return np.stack([ce * np.cos(az), ce * np.sin(az), np.sin(el)], axis=-1)


def steering_vector(azimuth, elevation, n_t):
    """Transmit steering vector of an n_t x n_t planar array, shape (n_t*n_t,).

    Entry for element (m, n), flattened row-major over m then n:
        (1/n_t) * exp(j*pi*(m*sin(el)*cos(az) + n*sin(el)*sin(az)))
    The vector always has unit Euclidean norm and per-entry magnitude 1/n_t.
    """
    if n_t < 1:
        raise ValueError("n_t must be >= 1")
    if not (np.isfinite(azimuth) and np.isfinite(elevation)):
        raise ValueError("angles must be finite")
    m = np.arange(n_t)[:, None]
    n = np.arange(n_t)[None, :]
    se = np.sin(elevation)
    phase = np.pi * (m * se * np.cos(azimuth) + n * se * np.sin(azimuth))
    return (np.exp(1j * phase) / n_t).reshape(-1)


def dm_to_pointcloud(dm: DistanceMatrix, grid: AngleGrid) -> np.ndarray:
    """Back-project valid beams to 3D points relative to the array, shape (N, 3).

    Point for beam (az, el, d): d * (cos(el) cos(az), cos(el) sin(az), sin(el)).
    Invalid beams contribute no point. Row order follows row-major grid order,
    so the mapping is deterministic.
    """
    if dm.shape != grid.shape:
        raise ValueError(f"distance matrix {dm.shape} does not match grid {grid.shape}")
    dirs = beam_directions(grid)
    pts = dm.values[..., None] * dirs
    return pts[dm.valid]


def pointcloud_to_ply(points, path):
    """Write an ASCII point cloud file (vertex-only)."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError("points must have shape (N, 3)")
    if not np.isfinite(points).all():
        raise ValueError("points must be finite")
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {points.shape[0]}",
        "property float x",
        "property float y",
        "property float z",
        "end_header",
    ]
    body = "\n".join("%.9g %.9g %.9g" % (x, y, z) for x, y, z in points)
    text = "\n".join(lines)
    if body:
        text += "\n" + body
    with open(path, "w", encoding="ascii") as fh:
        fh.write(text + "\n")


def ply_to_pointcloud(path) -> np.ndarray:
    """Parse a vertex-only ASCII point cloud file written by pointcloud_to_ply."""
    with open(path, "r", encoding="ascii") as fh:
        if fh.readline().strip() != "ply":
            raise ValueError(f"{path}: not an ascii ply file")
        n_vertices = None
        for line in fh:
            line = line.strip()
            if line.startswith("element vertex"):
                n_vertices = int(line.split()[-1])
            elif line == "end_header":
                break
        else:
            raise ValueError(f"{path}: missing end_header")
        if n_vertices is None:
            raise ValueError(f"{path}: missing vertex element")
        pts = np.loadtxt(fh, dtype=np.float64, max_rows=n_vertices) if n_vertices else np.empty((0, 3))
    pts = np.atleast_2d(pts)
    if pts.size and pts.shape != (n_vertices, 3):
        raise ValueError(f"{path}: expected {n_vertices} vertices, got {pts.shape}")
    if not pts.size:
        pts = pts.reshape(0, 3)
    return pts
