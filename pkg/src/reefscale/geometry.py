"""Seabed footprints of underwater images and the planar polygon helpers
used to weight them against orthophoto tiles.

Frames: the camera looks along +z (down) with x to the right of the image
and y towards its top ("forward"). The world frame is x=east, y=north,
z=down, so with zero attitude the horizontal field of view spans east.
Yaw is a compass heading (clockwise from north), pitch tilts the optical
axis forward and roll tilts it to the right.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from reefscale.errors import DegeneratePolygon, NonPositiveDepth, RayAboveHorizon

# direction z-components at or below this count as horizontal
_MIN_DOWN = 1e-9
_AREA_EPS = 1e-12


class Bounds(NamedTuple):
    """Axis-aligned rectangle in projected meters."""

    min_e: float
    min_n: float
    max_e: float
    max_n: float

    @property
    def width(self) -> float:
        return self.max_e - self.min_e

    @property
    def height(self) -> float:
        return self.max_n - self.min_n

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.min_e + self.max_e), 0.5 * (self.min_n + self.max_n))

    def corners(self) -> np.ndarray:
        return np.array(
            [
                [self.min_e, self.min_n],
                [self.max_e, self.min_n],
                [self.max_e, self.max_n],
                [self.min_e, self.max_n],
            ]
        )


@dataclass(frozen=True)
class Attitude:
    """Camera attitude in degrees. Yaw is normalized into [0, 360)."""

    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        for name in ("roll", "pitch"):
            value = getattr(self, name)
            if not -90.0 < value < 90.0:
                raise ValueError(f"{name} must lie in (-90, 90) degrees, got {value}")
        object.__setattr__(self, "yaw", float(self.yaw) % 360.0)


@dataclass(frozen=True)
class CameraModel:
    fov_h: float
    fov_v: float

    def __post_init__(self):
        for name in ("fov_h", "fov_v"):
            value = getattr(self, name)
            if not 0.0 < value < 180.0:
                raise ValueError(f"{name} must lie in (0, 180) degrees, got {value}")


@dataclass(frozen=True)
class Footprint:
    """Convex seabed quadrilateral, corners counter-clockwise (east, north)."""

    corners: np.ndarray
    image_id: str = ""

    def __post_init__(self):
        corners = np.asarray(self.corners, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "corners", corners)

    @property
    def area(self) -> float:
        return polygon_area(self.corners)

    def bounds(self) -> Bounds:
        lo = self.corners.min(axis=0)
        hi = self.corners.max(axis=0)
        return Bounds(lo[0], lo[1], hi[0], hi[1])


@dataclass(frozen=True)
class ImageRecord:
    """Navigation metadata of one underwater image plus its teacher output."""

    image_id: str
    camera_position: tuple[float, float]
    depth: float
    attitude: Attitude = field(default_factory=Attitude)
    timestamp: float = 0.0
    teacher_probs: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.depth > 0:
            raise NonPositiveDepth(f"image {self.image_id}: depth must be > 0, got {self.depth}")
        for cls, p in self.teacher_probs.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"image {self.image_id}: probability of {cls} outside [0, 1]: {p}")


def rotation_matrix(att: Attitude) -> np.ndarray:
    """Camera-to-world rotation: yaw about the vertical, then pitch about
    the camera's right axis, then roll about its forward axis."""
    r, p, y = (math.radians(a) for a in (att.roll, att.pitch, att.yaw))
    cr, sr = math.cos(r), math.sin(r)
    cp, sp = math.cos(p), math.sin(p)
    cy, sy = math.cos(y), math.sin(y)
    yaw = np.array([[cy, sy, 0.0], [-sy, cy, 0.0], [0.0, 0.0, 1.0]])
    pitch = np.array([[1.0, 0.0, 0.0], [0.0, cp, sp], [0.0, -sp, cp]])
    roll = np.array([[cr, 0.0, sr], [0.0, 1.0, 0.0], [-sr, 0.0, cr]])
    return yaw @ pitch @ roll


def corner_rays(cam: CameraModel) -> np.ndarray:
    """Camera-frame corner ray directions, counter-clockwise from bottom-left."""
    tx = math.tan(math.radians(cam.fov_h) / 2.0)
    ty = math.tan(math.radians(cam.fov_v) / 2.0)
    return np.array(
        [
            [-tx, -ty, 1.0],
            [tx, -ty, 1.0],
            [tx, ty, 1.0],
            [-tx, ty, 1.0],
        ]
    )


def project_footprint(
    pos: Sequence[float],
    depth: float,
    att: Attitude,
    cam: CameraModel,
    image_id: str = "",
) -> Footprint:
    """Intersect the four corner rays of the camera with a flat seabed.

    Args:
        pos: Camera (easting, northing) in meters.
        depth: Vertical camera-to-seabed distance in meters.
        att: Camera attitude.
        cam: Field of view.
        image_id: Carried onto the returned footprint.

    Raises:
        NonPositiveDepth: if ``depth <= 0``.
        RayAboveHorizon: if a corner ray does not point down.
    """
    if not depth > 0:
        raise NonPositiveDepth(f"depth must be > 0, got {depth}")
    dirs = corner_rays(cam) @ rotation_matrix(att).T
    down = dirs[:, 2]
    if np.any(down <= _MIN_DOWN):
        worst = float(np.degrees(np.arccos(np.clip(down.min() / np.linalg.norm(dirs[down.argmin()]), -1, 1))))
        raise RayAboveHorizon(f"corner ray {worst:.1f} deg from nadir does not reach the seabed")
    scale = depth / down
    corners = np.asarray(pos, dtype=float)[None, :2] + dirs[:, :2] * scale[:, None]
    if signed_area(corners) < 0:
        corners = corners[::-1]
    return Footprint(corners, image_id)


def signed_area(poly) -> float:
    """Shoelace area, positive for counter-clockwise vertex order."""
    pts = np.asarray(poly, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        return 0.0
    x, y = pts[:, 0], pts[:, 1]
    # shift to the first vertex to limit cancellation for large coordinates
    x = x - x[0]
    y = y - y[0]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def polygon_area(poly) -> float:
    """Area of a simple polygon in square meters.

    Raises:
        DegeneratePolygon: fewer than three vertices or zero area.
    """
    pts = np.asarray(poly, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        raise DegeneratePolygon(f"polygon needs at least 3 vertices, got {len(pts)}")
    area = abs(signed_area(pts))
    if area <= _AREA_EPS:
        raise DegeneratePolygon("polygon has zero area")
    return area


def _clip_half_plane(pts: list, axis: int, value: float, keep_greater: bool) -> list:
    if not pts:
        return pts

    def inside(p):
        return p[axis] >= value if keep_greater else p[axis] <= value

    out = []
    prev = pts[-1]
    prev_in = inside(prev)
    for cur in pts:
        cur_in = inside(cur)
        if cur_in != prev_in:
            t = (value - prev[axis]) / (cur[axis] - prev[axis])
            cross = [prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])]
            cross[axis] = value
            out.append(tuple(cross))
        if cur_in:
            out.append(cur)
        prev, prev_in = cur, cur_in
    return out


def clip_polygon_to_bounds(poly, bounds: Bounds) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex polygon against a rectangle.

    Returns an (k, 2) array; k == 0 when the shapes do not overlap.
    """
    pts = [tuple(map(float, p)) for p in np.asarray(poly, dtype=float).reshape(-1, 2)]
    pts = _clip_half_plane(pts, 0, bounds.min_e, True)
    pts = _clip_half_plane(pts, 0, bounds.max_e, False)
    pts = _clip_half_plane(pts, 1, bounds.min_n, True)
    pts = _clip_half_plane(pts, 1, bounds.max_n, False)
    deduped = []
    for p in pts:
        if not deduped or abs(p[0] - deduped[-1][0]) > 1e-12 or abs(p[1] - deduped[-1][1]) > 1e-12:
            deduped.append(p)
    if len(deduped) > 1 and abs(deduped[0][0] - deduped[-1][0]) <= 1e-12 and abs(deduped[0][1] - deduped[-1][1]) <= 1e-12:
        deduped.pop()
    if len(deduped) < 3:
        return np.empty((0, 2))
    return np.array(deduped)


def clip_footprint_to_tile(fp: Footprint, tile_bounds: Bounds) -> np.ndarray:
    return clip_polygon_to_bounds(fp.corners, Bounds(*tile_bounds))


def overlap_ratio(fp: Footprint, tile_bounds: Bounds) -> float:
    """Share of the footprint's area that falls inside the tile."""
    total = polygon_area(fp.corners)
    clipped = clip_footprint_to_tile(fp, tile_bounds)
    inter = abs(signed_area(clipped)) if len(clipped) else 0.0
    return min(1.0, max(0.0, inter / total))


def cell_centers(bounds: Bounds, grid_n: int) -> np.ndarray:
    b = Bounds(*bounds)
    step_e = b.width / grid_n
    step_n = b.height / grid_n
    es = b.min_e + (np.arange(grid_n) + 0.5) * step_e
    ns = b.min_n + (np.arange(grid_n) + 0.5) * step_n
    ee, nn = np.meshgrid(es, ns)
    return np.column_stack([ee.ravel(), nn.ravel()])


def points_in_convex(points: np.ndarray, poly) -> np.ndarray:
    """Boolean mask of points inside (or on) a counter-clockwise convex polygon."""
    verts = np.asarray(poly, dtype=float).reshape(-1, 2)
    if signed_area(verts) < 0:
        verts = verts[::-1]
    mask = np.ones(len(points), dtype=bool)
    nxt = np.roll(verts, -1, axis=0)
    for a, b in zip(verts, nxt):
        edge = b - a
        rel = points - a
        mask &= edge[0] * rel[:, 1] - edge[1] * rel[:, 0] >= -1e-12
    return mask


def coverage_fraction(fps: Iterable[Footprint], tile_bounds: Bounds, grid_n: int = 64) -> float:
    """Fraction of a grid_n x grid_n lattice of cell centers inside the tile
    that falls within at least one footprint."""
    if grid_n < 8:
        raise ValueError(f"grid_n must be >= 8, got {grid_n}")
    b = Bounds(*tile_bounds)
    pts = cell_centers(b, grid_n)
    covered = np.zeros(len(pts), dtype=bool)
    for fp in fps:
        fb = fp.bounds()
        if fb.max_e < b.min_e or fb.min_e > b.max_e or fb.max_n < b.min_n or fb.min_n > b.max_n:
            continue
        todo = ~covered
        covered[todo] = points_in_convex(pts[todo], fp.corners)
        if covered.all():
            break
    return float(covered.mean())
