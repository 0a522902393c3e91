"""Synthetic 3D scenes and the analytic raycaster that produces ground-truth
distance matrices.

A scene is a base station mast at (0, 0, h) above an infinite ground plane at
z = 0, plus a handful of ground-standing primitives (spheres, axis-aligned
boxes, vertical cylinders) placed inside a circular sensing region of radius R
around the mast. Each surface carries a scalar reflectivity used later by the
per-beam link-budget statistics.

Rays are cast from the mast along the beam directions of an AngleGrid. The
distance for a beam is the nearest positive intersection with any surface; a
beam whose nearest hit falls outside the sensing radius (or that never hits
anything) is marked invalid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import AngleGrid, DistanceMatrix, beam_directions
from .rng import TAG_SCENE, as_stream

SHAPES = ("sphere", "box", "cylinder")


@dataclass
class SceneConfig:
    """Knobs for random scene synthesis. Distances in meters."""

    sensing_radius: float = 30.0
    bs_height_range: tuple = (20.0, 25.0)
    n_objects_range: tuple = (3, 8)          # inclusive bounds
    ground_rcs: float = 1.0
    object_rcs_range: tuple = (0.5, 2.0)
    placement_radius_range: tuple = (6.0, 24.0)
    bs_clearance: float = 3.0                # keep objects off the mast footprint
    sphere_radius_range: tuple = (0.8, 2.5)
    box_side_range: tuple = (1.0, 5.0)
    cylinder_radius_range: tuple = (0.6, 2.0)
    object_height_range: tuple = (1.5, 6.0)  # box/cylinder vertical extent
    max_placement_retries: int = 64

    @property
    def max_slant_range(self) -> float:
        """Upper bound on any in-region slant range: sqrt(R^2 + h_max^2)."""
        return float(np.hypot(self.sensing_radius, self.bs_height_range[1]))


@dataclass
class Primitive:
    shape: str
    center: np.ndarray     # (3,)
    size: tuple            # sphere: (r,), box: (sx, sy, sz), cylinder: (r, h)
    rcs: float

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown primitive shape {self.shape!r}")
        self.center = np.asarray(self.center, dtype=np.float64)

    def horizontal_extent(self) -> float:
        """Horizontal distance from center to the farthest surface point."""
        if self.shape == "sphere":
            return self.size[0]
        if self.shape == "box":
            return float(np.hypot(self.size[0] / 2, self.size[1] / 2))
        return self.size[0]

    def to_dict(self):
        return {
            "shape": self.shape,
            "center": [float(c) for c in self.center],
            "size": [float(s) for s in self.size],
            "rcs": float(self.rcs),
        }

    @staticmethod
    def from_dict(d):
        return Primitive(d["shape"], np.array(d["center"]), tuple(d["size"]), d["rcs"])


@dataclass
class Scene:
    bs_position: np.ndarray   # (3,), mast phase center
    sensing_radius: float
    ground_rcs: float
    primitives: list = field(default_factory=list)

    def __post_init__(self):
        self.bs_position = np.asarray(self.bs_position, dtype=np.float64)

    def to_json(self) -> str:
        return json.dumps(
            {
                "bs_position": [float(c) for c in self.bs_position],
                "sensing_radius": float(self.sensing_radius),
                "ground_rcs": float(self.ground_rcs),
                "primitives": [p.to_dict() for p in self.primitives],
            },
            indent=1,
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "Scene":
        d = json.loads(text)
        return Scene(
            np.array(d["bs_position"]),
            d["sensing_radius"],
            d["ground_rcs"],
            [Primitive.from_dict(p) for p in d["primitives"]],
        )


def generate_scene(cfg: SceneConfig, seed) -> Scene:
    """Draw a random admissible scene. Deterministic for a given seed.

    Objects rest on the ground, stay fully inside the sensing radius, and keep
    clear of the mast footprint. Placement uses bounded rejection; running out
    of retries raises (practically impossible with the default geometry).
    """
    rng = as_stream(seed if isinstance(seed, (tuple, list, np.random.Generator)) else (TAG_SCENE, int(seed)))
    h = rng.uniform(*cfg.bs_height_range)
    n_objects = int(rng.integers(cfg.n_objects_range[0], cfg.n_objects_range[1] + 1))
    prims = []
    for _ in range(n_objects):
        for attempt in range(cfg.max_placement_retries):
            shape = SHAPES[rng.integers(0, len(SHAPES))]
            r_place = rng.uniform(*cfg.placement_radius_range)
            angle = rng.uniform(-np.pi, np.pi)
            cx, cy = r_place * np.cos(angle), r_place * np.sin(angle)
            rcs = rng.uniform(*cfg.object_rcs_range)
            if shape == "sphere":
                radius = rng.uniform(*cfg.sphere_radius_range)
                prim = Primitive("sphere", (cx, cy, radius), (radius,), rcs)
            elif shape == "box":
                sx = rng.uniform(*cfg.box_side_range)
                sy = rng.uniform(*cfg.box_side_range)
                sz = rng.uniform(*cfg.object_height_range)
                prim = Primitive("box", (cx, cy, sz / 2), (sx, sy, sz), rcs)
            else:
                radius = rng.uniform(*cfg.cylinder_radius_range)
                height = rng.uniform(*cfg.object_height_range)
                prim = Primitive("cylinder", (cx, cy, height / 2), (radius, height), rcs)
            ext = prim.horizontal_extent()
            if r_place - ext > cfg.bs_clearance and r_place + ext < cfg.sensing_radius:
                prims.append(prim)
                break
        else:
            raise RuntimeError("scene placement retries exhausted")
    return Scene(np.array([0.0, 0.0, h]), cfg.sensing_radius, cfg.ground_rcs, prims)


# ---------------------------------------------------------------------------
# ray intersection kernels (vectorized over all beams at once)
# ---------------------------------------------------------------------------

_NO_HIT = np.inf


def _ray_ground(origin, dirs):
    """t of the ground-plane (z=0) hit for each ray, inf where none."""
    dz = dirs[..., 2]
    t = np.full(dirs.shape[:-1], _NO_HIT)
    going_down = dz < 0
    t[going_down] = -origin[2] / dz[going_down]
    return t


def _ray_sphere(origin, dirs, center, radius):
    oc = origin - center
    b = np.einsum("...k,k->...", dirs, oc)
    c = oc @ oc - radius * radius
    disc = b * b - c
    t = np.full(dirs.shape[:-1], _NO_HIT)
    ok = disc >= 0
    sq = np.sqrt(np.maximum(disc, 0.0))
    t0 = -b - sq
    t1 = -b + sq
    # nearest strictly positive root
    cand = np.where(t0 > 1e-9, t0, np.where(t1 > 1e-9, t1, _NO_HIT))
    t[ok] = cand[ok]
    return t


def _ray_box(origin, dirs, center, size):
    half = np.asarray(size, dtype=np.float64) / 2.0
    lo = center - half
    hi = center + half
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t1 = (lo - origin) * inv
        t2 = (hi - origin) * inv
    # axis-parallel rays: replace NaN/inf products per axis with +-inf slabs
    near = np.where(np.isnan(t1), -np.inf, np.minimum(t1, t2))
    far = np.where(np.isnan(t2), np.inf, np.maximum(t1, t2))
    # rays parallel to an axis but outside the slab never hit
    parallel = dirs == 0.0
    outside = parallel & ((origin < lo) | (origin > hi))
    near = np.where(outside, np.inf, near)
    tmin = near.max(axis=-1)
    tmax = far.min(axis=-1)
    hit = (tmax >= tmin) & (tmax > 1e-9)
    entry = np.where(tmin > 1e-9, tmin, tmax)
    return np.where(hit, entry, _NO_HIT)


def _ray_cylinder(origin, dirs, center, radius, height):
    """Finite vertical cylinder with caps; base at center_z - height/2."""
    z_lo = center[2] - height / 2.0
    z_hi = center[2] + height / 2.0
    dx, dy, dz = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    ox, oy = origin[0] - center[0], origin[1] - center[1]
    a = dx * dx + dy * dy
    b = ox * dx + oy * dy
    c = ox * ox + oy * oy - radius * radius
    disc = b * b - a * c
    t_side = np.full(dirs.shape[:-1], _NO_HIT)
    ok = (disc >= 0) & (a > 0)
    sq = np.sqrt(np.maximum(disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        r0 = (-b - sq) / a
        r1 = (-b + sq) / a
    for root in (r0, r1):
        z = origin[2] + root * dz
        good = ok & (root > 1e-9) & (z >= z_lo) & (z <= z_hi) & (root < t_side)
        t_side = np.where(good, root, t_side)
    # caps
    t_cap = np.full(dirs.shape[:-1], _NO_HIT)
    moving_z = dz != 0.0
    for z_plane in (z_hi, z_lo):
        with np.errstate(divide="ignore"):
            tc = (z_plane - origin[2]) / dz
        px = origin[0] + tc * dx - center[0]
        py = origin[1] + tc * dy - center[1]
        good = moving_z & (tc > 1e-9) & (px * px + py * py <= radius * radius) & (tc < t_cap)
        t_cap = np.where(good, tc, t_cap)
    return np.minimum(t_side, t_cap)


def _primitive_t(origin, dirs, prim: Primitive):
    if prim.shape == "sphere":
        return _ray_sphere(origin, dirs, prim.center, prim.size[0])
    if prim.shape == "box":
        return _ray_box(origin, dirs, prim.center, prim.size)
    return _ray_cylinder(origin, dirs, prim.center, prim.size[0], prim.size[1])


def raycast(scene: Scene, grid: AngleGrid):
    """Cast one ray per beam; return (DistanceMatrix, reflectivity map).

    The winning surface is the globally nearest positive intersection, so the
    result does not depend on primitive ordering. Hits whose horizontal range
    exceeds the sensing radius are discarded (the beam exits the region).
    The reflectivity map holds the winning surface's value, 0 where invalid.
    """
    origin = scene.bs_position
    dirs = beam_directions(grid)
    best_t = _ray_ground(origin, dirs)
    best_rcs = np.full(best_t.shape, scene.ground_rcs)
    for prim in scene.primitives:
        t = _primitive_t(origin, dirs, prim)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_rcs = np.where(closer, prim.rcs, best_rcs)
    hit = np.isfinite(best_t)
    px = origin[0] + best_t * dirs[..., 0]
    py = origin[1] + best_t * dirs[..., 1]
    horiz = np.hypot(np.where(hit, px, 0.0), np.where(hit, py, 0.0))
    valid = hit & (horiz <= scene.sensing_radius + 1e-9)
    values = np.where(valid, np.where(hit, best_t, 0.0), 0.0)
    rcs_map = np.where(valid, best_rcs, 0.0)
    return DistanceMatrix(values, valid), rcs_map
