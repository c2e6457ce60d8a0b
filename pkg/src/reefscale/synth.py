"""Synthetic reef scenes, simulated surveys and exact ground truth.

The ground-truth oracle and the simulated teacher use shapely for their
polygon tests, so they share no intersection code with
:mod:`reefscale.geometry`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from shapely.geometry import Polygon, box

from reefscale.geometry import Attitude, Bounds, CameraModel, ImageRecord, project_footprint
from reefscale.tiling import Tile

DEFAULT_EXTENT = Bounds(340000.0, 7650000.0, 340030.0, 7650030.0)
DEFAULT_CAMERA = CameraModel(fov_h=60.0, fov_v=45.0)
BACKGROUND_RGB = (96, 128, 160)


@dataclass(frozen=True)
class Region:
    class_name: str
    vertices: np.ndarray  # (k, 2), counter-clockwise, convex

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=float).reshape(-1, 2))

    def shape(self) -> Polygon:
        return Polygon(self.vertices)


@dataclass(frozen=True)
class SyntheticScene:
    extent: Bounds
    regions: tuple[Region, ...] = ()
    seed: int = 0
    classes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "extent": list(self.extent),
            "seed": self.seed,
            "classes": list(self.classes),
            "regions": [{"class": r.class_name, "vertices": r.vertices.tolist()} for r in self.regions],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SyntheticScene":
        return cls(
            extent=Bounds(*doc["extent"]),
            regions=tuple(Region(r["class"], r["vertices"]) for r in doc["regions"]),
            seed=int(doc.get("seed", 0)),
            classes=tuple(doc.get("classes", ())),
        )


def _random_convex(rng: np.random.Generator, center, size_range) -> np.ndarray:
    k = int(rng.integers(4, 8))
    angles = np.sort(rng.uniform(0.0, 2 * math.pi, size=k))
    a, b = rng.uniform(size_range[0] / 2, size_range[1] / 2, size=2)
    rot = rng.uniform(0.0, math.pi)
    x = a * np.cos(angles)
    y = b * np.sin(angles)
    c, s = math.cos(rot), math.sin(rot)
    return np.column_stack([center[0] + c * x - s * y, center[1] + s * x + c * y])


def generate_scene(
    seed: int,
    extent: Bounds = DEFAULT_EXTENT,
    n_regions: int = 10,
    class_list: Sequence[str] = ("Sand", "Rock", "Acropore_tabular"),
    size_range: tuple[float, float] = (3.0, 9.0),
) -> SyntheticScene:
    """Scatter ``n_regions`` convex class patches over ``extent``.

    Vertices lie on a random ellipse, so every region is convex; regions
    are clipped to the extent. Same arguments give the same scene.
    """
    if n_regions < 0:
        raise ValueError(f"n_regions must be >= 0, got {n_regions}")
    extent = Bounds(*extent)
    rng = np.random.default_rng(seed)
    frame = box(*extent)
    regions = []
    while len(regions) < n_regions:
        cls = class_list[int(rng.integers(len(class_list)))]
        center = rng.uniform([extent.min_e, extent.min_n], [extent.max_e, extent.max_n])
        poly = Polygon(_random_convex(rng, center, size_range)).intersection(frame)
        if poly.is_empty or poly.area < 1e-6 or poly.geom_type != "Polygon":
            continue
        poly = poly.simplify(0.0)
        coords = np.asarray(poly.exterior.coords)[:-1]
        if not poly.exterior.is_ccw:
            coords = coords[::-1]
        regions.append(Region(cls, coords))
    return SyntheticScene(extent, tuple(regions), seed, tuple(class_list))


@dataclass(frozen=True)
class Lawnmower:
    """Back-and-forth east/west survey lines stepping north."""

    start: tuple[float, float]
    line_length: float
    line_spacing: float
    n_lines: int
    image_spacing: float
    depth: float = 1.0
    speed: float = 1.0  # m/s, sets timestamps
    t0: float = 0.0

    @classmethod
    def covering(cls, extent: Bounds, line_spacing=0.6, image_spacing=0.4, depth=1.0, margin=0.0) -> "Lawnmower":
        extent = Bounds(*extent)
        n_lines = int(math.floor((extent.height + 2 * margin) / line_spacing)) + 1
        return cls(
            start=(extent.min_e - margin, extent.min_n - margin),
            line_length=extent.width + 2 * margin,
            line_spacing=line_spacing,
            n_lines=n_lines,
            image_spacing=image_spacing,
            depth=depth,
        )

    def poses(self):
        """Yield (t, easting, northing, yaw) along the track."""
        per_line = int(math.floor(self.line_length / self.image_spacing)) + 1
        t = self.t0
        for line in range(self.n_lines):
            n = self.start[1] + line * self.line_spacing
            eastward = line % 2 == 0
            for k in range(per_line):
                offset = k * self.image_spacing
                e = self.start[0] + (offset if eastward else self.line_length - offset)
                yield t, e, n, 90.0 if eastward else 270.0
                t += self.image_spacing / self.speed
            t += self.line_spacing / self.speed


@dataclass(frozen=True)
class SurveyNoise:
    """Std-devs of the error between recorded and true navigation."""

    attitude_deg: float = 0.0
    position_m: float = 0.0
    teacher: float = 0.0  # blend weight towards uniform noise, in [0, 1]


def teacher_probabilities(scene: SyntheticScene, footprint_corners: np.ndarray) -> dict[str, float]:
    """Perfect teacher: 1 for every class whose region touches the footprint."""
    fp = Polygon(footprint_corners)
    probs = {c: 0.0 for c in scene.classes}
    for r in scene.regions:
        if probs.get(r.class_name) != 1.0 and fp.intersects(r.shape()):
            probs[r.class_name] = 1.0
    return probs


def simulate_survey(
    scene: SyntheticScene,
    track: Lawnmower,
    cam: CameraModel = DEFAULT_CAMERA,
    noise: SurveyNoise = SurveyNoise(),
    seed: int = 0,
) -> list[ImageRecord]:
    """Images along ``track`` with teacher output from the true footprint.

    The camera is held level; the returned records carry the recorded
    navigation, which differs from the truth by ``noise``.
    """
    rng = np.random.default_rng(seed)
    records = []
    for i, (t, e, n, yaw) in enumerate(track.poses()):
        true_att = Attitude(0.0, 0.0, yaw)
        fp = project_footprint((e, n), track.depth, true_att, cam)
        probs = teacher_probabilities(scene, fp.corners)
        if noise.teacher > 0:
            u = rng.uniform(0.0, 1.0, size=len(probs))
            probs = {c: float((1 - noise.teacher) * p + noise.teacher * v) for (c, p), v in zip(probs.items(), u)}
        att_err = rng.normal(0.0, noise.attitude_deg, size=3) if noise.attitude_deg > 0 else np.zeros(3)
        pos_err = rng.normal(0.0, noise.position_m, size=2) if noise.position_m > 0 else np.zeros(2)
        recorded = Attitude(
            float(np.clip(att_err[0], -89.0, 89.0)),
            float(np.clip(att_err[1], -89.0, 89.0)),
            yaw + float(att_err[2]),
        )
        records.append(
            ImageRecord(
                image_id=f"img_{i:06d}",
                camera_position=(float(e + pos_err[0]), float(n + pos_err[1])),
                depth=track.depth,
                attitude=recorded,
                timestamp=float(t),
                teacher_probs=probs,
            )
        )
    return records


def oracle_tile_labels(scene: SyntheticScene, tiles: Sequence[Tile]) -> dict[str, dict[str, int]]:
    """1 where a class region shares positive area with the tile, else 0."""
    by_class: dict[str, list[Polygon]] = {c: [] for c in scene.classes}
    for r in scene.regions:
        by_class.setdefault(r.class_name, []).append(r.shape())
    out = {}
    for tile in tiles:
        cell = box(*tile.bounds)
        out[tile.tile_id] = {
            cls: int(any(cell.intersection(p).area > 0.0 for p in polys)) for cls, polys in by_class.items()
        }
    return out


def class_color(index: int) -> tuple[int, int, int]:
    # never pure black, so class patches are not mistaken for SfM holes
    rng = np.random.default_rng(1000 + index)
    return tuple(int(v) for v in rng.integers(40, 256, size=3))


def render_orthophoto(
    scene: SyntheticScene,
    gsd: float,
    black_boxes: Sequence[Bounds] = (),
) -> np.ndarray:
    """Flat-colored RGB raster of the scene, origin at the extent's top-left.

    ``black_boxes`` are painted pure black to mimic reconstruction holes.
    """
    from PIL import Image, ImageDraw

    ext = Bounds(*scene.extent)
    width = int(round(ext.width / gsd))
    height = int(round(ext.height / gsd))
    img = Image.new("RGB", (width, height), BACKGROUND_RGB)
    draw = ImageDraw.Draw(img)
    index = {c: i for i, c in enumerate(scene.classes)}

    def to_px(pts):
        return [((e - ext.min_e) / gsd, (ext.max_n - n) / gsd) for e, n in pts]

    for r in scene.regions:
        draw.polygon(to_px(r.vertices), fill=class_color(index.get(r.class_name, len(index))))
    for b in black_boxes:
        b = Bounds(*b)
        draw.rectangle(to_px([(b.min_e, b.max_n), (b.max_e - gsd, b.min_n + gsd)]), fill=(0, 0, 0))
    return np.asarray(img)


@dataclass
class SurveyFixture:
    """Everything the pipeline needs, produced from one seed."""

    scene: SyntheticScene
    records: list[ImageRecord]
    ortho: np.ndarray
    gsd: float
    cam: CameraModel
    black_boxes: list[Bounds] = field(default_factory=list)


def build_fixture(
    seed: int = 42,
    extent: Bounds = DEFAULT_EXTENT,
    n_regions: int = 10,
    class_list: Sequence[str] = ("Sand", "Rock", "Acropore_tabular"),
    gsd: float = 0.05,
    cam: CameraModel = DEFAULT_CAMERA,
    noise: SurveyNoise = SurveyNoise(),
    black_boxes: Sequence[Bounds] = (),
    line_spacing: float = 0.6,
    image_spacing: float = 0.4,
    depth: float = 1.0,
) -> SurveyFixture:
    scene = generate_scene(seed, extent, n_regions, class_list)
    track = Lawnmower.covering(scene.extent, line_spacing, image_spacing, depth)
    records = simulate_survey(scene, track, cam, noise, seed + 1)
    ortho = render_orthophoto(scene, gsd, black_boxes)
    return SurveyFixture(scene, records, ortho, gsd, cam, list(black_boxes))
