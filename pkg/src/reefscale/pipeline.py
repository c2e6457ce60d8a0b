"""End-to-end label transfer: orthophoto + underwater predictions -> tile labels."""

from __future__ import annotations

import contextlib
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from reefscale import io
from reefscale.association import (
    DEFAULT_COVERAGE_THRESHOLD,
    DROP_BLACK,
    DROP_LOW_COVERAGE,
    DROP_NO_IMAGES,
    KEPT,
    assign_images_to_tiles,
    classify_tiles,
)
from reefscale.errors import ReefscaleError, StageError, UnknownClass
from reefscale.geometry import CameraModel, Footprint, ImageRecord, overlap_ratio, project_footprint
from reefscale.labeling import (
    DEFAULT_BINARIZE_THRESHOLD,
    DEFAULT_MIN_COUNT,
    DEFAULT_PRESENCE_THRESHOLD,
    DISTILLED,
    METHODS,
    ClassCatalog,
    SoftLabelSet,
    aggregate,
    default_catalog,
    prune_rare_classes,
    remap_classes,
)
from reefscale.split import DEFAULT_RATIOS
from reefscale.sync import DEFAULT_LEAP_OFFSET_S, VideoTiming, frame_timestamp, interpolate_track
from reefscale.tiling import DEFAULT_BLACK_THRESHOLD, DEFAULT_TILE_SIDE_M, TileGrid, build_tile_grid, extract_tile, is_black_tile

logger = logging.getLogger(__name__)

NODATA = 255
MAX_LEVEL = 254


@dataclass
class TimingConfig:
    fv: float = 23.976
    fc: float = 2.997
    anchor_frame: int = 0
    anchor_utc: float = 0.0
    leap_offset: float = DEFAULT_LEAP_OFFSET_S
    anchor_is_gps: bool = False

    def to_timing(self) -> VideoTiming:
        return VideoTiming(**dataclasses.asdict(self))


@dataclass
class PipelineConfig:
    orthophoto: str = ""
    world_file: str = ""
    crs_file: str = ""
    images_csv: str = ""
    predictions_csv: str = ""
    track_csv: str = ""
    frames_csv: str = ""
    out_dir: str = "out"
    tile_side_m: float = DEFAULT_TILE_SIDE_M
    coverage_threshold: float = DEFAULT_COVERAGE_THRESHOLD
    coverage_filter: bool = True
    coverage_neighbors: bool = False
    coverage_grid_n: int = 64
    black_threshold: float = DEFAULT_BLACK_THRESHOLD
    binarize_threshold: float = DEFAULT_BINARIZE_THRESHOLD
    method: str = DISTILLED
    min_count: int = DEFAULT_MIN_COUNT
    presence_threshold: float = DEFAULT_PRESENCE_THRESHOLD
    catalog: dict | None = None
    split_ratios: tuple[float, float, float] = DEFAULT_RATIOS
    seed: int = 0
    fov_h: float = 60.0
    fov_v: float = 45.0
    timing: TimingConfig = field(default_factory=TimingConfig)

    def __post_init__(self):
        if isinstance(self.timing, Mapping):
            self.timing = TimingConfig(**self.timing)
        self.split_ratios = tuple(float(r) for r in self.split_ratios)
        self.validate()

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0.0 < self.coverage_threshold <= 1.0:
            raise ValueError(f"coverage_threshold must be in (0, 1], got {self.coverage_threshold}")
        if not 0.0 <= self.black_threshold <= 1.0:
            raise ValueError(f"black_threshold must be in [0, 1], got {self.black_threshold}")
        if not 0.0 < self.binarize_threshold < 1.0:
            raise ValueError(f"binarize_threshold must be in (0, 1), got {self.binarize_threshold}")
        if not self.tile_side_m > 0:
            raise ValueError(f"tile_side_m must be > 0, got {self.tile_side_m}")
        if self.min_count < 0:
            raise ValueError(f"min_count must be >= 0, got {self.min_count}")
        if self.coverage_grid_n < 8:
            raise ValueError(f"coverage_grid_n must be >= 8, got {self.coverage_grid_n}")
        if len(self.split_ratios) != 3 or abs(sum(self.split_ratios) - 1.0) > 1e-9:
            raise ValueError(f"split_ratios must be three values summing to 1, got {self.split_ratios}")
        CameraModel(self.fov_h, self.fov_v)

    def require(self, *names: str) -> None:
        missing = [n for n in names if not getattr(self, n)]
        if missing:
            raise ValueError(f"config is missing required paths: {', '.join(missing)}")

    @property
    def camera(self) -> CameraModel:
        return CameraModel(self.fov_h, self.fov_v)

    def class_catalog(self) -> ClassCatalog:
        return ClassCatalog.from_dict(self.catalog) if self.catalog else default_catalog()

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], base_dir: Path | None = None) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        values = dict(doc)
        if base_dir is not None:
            for key in ("orthophoto", "world_file", "crs_file", "images_csv", "predictions_csv", "track_csv", "frames_csv", "out_dir"):
                if values.get(key) and not Path(values[key]).is_absolute():
                    values[key] = str(base_dir / values[key])
        return cls(**values)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path) as fh:
            doc = json.load(fh)
        return cls.from_dict(doc, Path(path).resolve().parent)

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["split_ratios"] = list(self.split_ratios)
        return doc


@dataclass
class PipelineResult:
    grid: TileGrid
    status: dict[str, str]
    labels: SoftLabelSet
    manifest: list[dict]
    summary: dict
    footprints: dict[str, Footprint]


@contextlib.contextmanager
def _stage(name: str):
    """Re-raise data errors from a stage with the stage name attached."""
    try:
        yield
    except StageError:
        raise
    except (ReefscaleError, ValueError, KeyError, OSError) as exc:
        raise StageError(name, exc) from exc


def records_from_frames(frames: Sequence[tuple[str, int]], timing: VideoTiming, track) -> list[ImageRecord]:
    """Image records for cut video frames, navigation interpolated at each frame time."""
    records = []
    for image_id, idx in frames:
        t = frame_timestamp(timing, idx)
        nav = interpolate_track(track, t)
        records.append(
            ImageRecord(image_id, (nav.easting, nav.northing), nav.depth, nav.attitude, t)
        )
    return records


def load_inputs(config: PipelineConfig):
    """Read orthophoto, image navigation and teacher predictions."""
    with _stage("load"):
        config.require("orthophoto", "predictions_csv")
        ortho, meta = io.load_orthophoto(config.orthophoto, config.world_file or None, config.crs_file or None)
        preds = io.read_predictions(config.predictions_csv)
        if config.images_csv:
            records = io.read_images(config.images_csv, preds)
        elif config.track_csv and config.frames_csv:
            track = io.read_track_csv(config.track_csv)
            frames = io.read_frames_csv(config.frames_csv)
            records = [
                dataclasses.replace(r, teacher_probs=dict(preds.get(r.image_id, {})))
                for r in records_from_frames(frames, config.timing.to_timing(), track)
            ]
        else:
            raise ValueError("config needs images_csv, or track_csv together with frames_csv")
    return ortho, meta, records


def label_classes(records: Sequence[ImageRecord], catalog: ClassCatalog) -> tuple[str, ...]:
    """Catalog classes that at least one image reports, in catalog order."""
    seen = set()
    for r in records:
        seen.update(remap_classes(r.teacher_probs, catalog))
    return tuple(c for c in catalog.aerial_classes if c in seen)


def run_pipeline(config: PipelineConfig, ortho=None, meta=None, records=None) -> PipelineResult:
    """Tile, filter, associate, aggregate and prune.

    Inputs are read from the paths in ``config`` unless passed in directly.
    Nothing is written; see :func:`write_outputs`.
    """
    if ortho is None or meta is None or records is None:
        ortho, meta, records = load_inputs(config)
    catalog = config.class_catalog()

    with _stage("tiling"):
        grid = build_tile_grid(meta, config.tile_side_m)
        black = {t.tile_id: is_black_tile(extract_tile(ortho, t), config.black_threshold) for t in grid.tiles}

    with _stage("footprints"):
        cam = config.camera
        footprints = {
            r.image_id: project_footprint(r.camera_position, r.depth, r.attitude, cam, r.image_id) for r in records
        }
        if len(footprints) != len(records):
            raise ValueError("duplicate image_id in image records")

    with _stage("association"):
        assoc = assign_images_to_tiles(records, grid.tiles)
        status = classify_tiles(
            grid.tiles,
            assoc,
            footprints,
            config.coverage_threshold,
            black,
            config.coverage_grid_n,
            require_coverage=config.coverage_filter,
            include_neighbors=config.coverage_neighbors,
        )

    with _stage("aggregation"):
        classes = label_classes(records, catalog)
        remapped = {r.image_id: remap_classes(r.teacher_probs, catalog) for r in records}
        labels: dict[str, dict[str, float]] = {}
        contributions: dict[str, list[tuple[str, float]]] = {}
        for tile in grid.tiles:
            if status[tile.tile_id] != KEPT:
                continue
            ids = assoc.images_for(tile.tile_id)
            ratios = [overlap_ratio(footprints[i], tile.bounds) for i in ids]
            contributions[tile.tile_id] = list(zip(ids, ratios))
            labels[tile.tile_id] = aggregate(
                config.method,
                [(remapped[i], r) for i, r in zip(ids, ratios)],
                classes,
                config.binarize_threshold,
            )
        soft = SoftLabelSet(classes, labels, config.method)

    with _stage("pruning"):
        pruned = prune_rare_classes(soft, config.min_count, config.presence_threshold)

    tiles_by_id = {t.tile_id: t for t in grid.tiles}
    manifest = []
    for tile_id in sorted(pruned.labels):
        t = tiles_by_id[tile_id]
        manifest.append(
            {
                "tile_id": tile_id,
                "bounds": list(map(float, t.bounds)),
                "pixel_window": list(t.pixel_window),
                "labels": {c: pruned.labels[tile_id][c] for c in pruned.classes},
                "images": [{"image_id": i, "overlap": r} for i, r in contributions[tile_id]],
            }
        )

    counts = {s: 0 for s in (KEPT, DROP_BLACK, DROP_NO_IMAGES, DROP_LOW_COVERAGE)}
    for s in status.values():
        counts[s] += 1
    summary = {
        "method": config.method,
        "tile_side_m": grid.cell_size,
        "tiles_total": grid.total,
        "kept": counts[KEPT],
        "dropped_black": counts[DROP_BLACK],
        "dropped_no_images": counts[DROP_NO_IMAGES],
        "dropped_low_coverage": counts[DROP_LOW_COVERAGE],
        "dropped_partial_edge": grid.partial_edge,
        "images_total": len(records),
        "images_unassigned": len(assoc.unassigned),
        "classes": list(pruned.classes),
        "pruned_classes": [c for c in soft.classes if c not in pruned.classes],
        "class_counts": {c: pruned.count_present(c, config.presence_threshold) for c in pruned.classes},
    }
    logger.info("kept %d of %d tiles", summary["kept"], summary["tiles_total"])
    return PipelineResult(grid, status, pruned, manifest, summary, footprints)


def write_outputs(result: PipelineResult, out_dir, crs_id: str = "") -> dict[str, Path]:
    """Write manifest, summary and footprints. Each file is replaced atomically."""
    out = Path(out_dir)
    texts = {
        "manifest.jsonl": io.manifest_text(result.manifest),
        "summary.json": io.dump_json(result.summary),
        "footprints.geojson": io.dump_json(io.footprints_geojson(result.footprints.values(), crs_id)),
    }
    paths = {}
    for name, text in texts.items():
        paths[name] = out / name
        io.atomic_write_text(paths[name], text)
    return paths


# --- prediction maps -----------------------------------------------------------


def emit_prediction_map(scores: Mapping[str, Mapping[str, float]], grid: TileGrid, cls: str) -> np.ndarray:
    """One cell per grid tile: probability scaled to 0..254, 255 where no score.

    Raises:
        UnknownClass: if no tile carries a score for ``cls``.
    """
    if not any(cls in row for row in scores.values()):
        raise UnknownClass(f"class {cls!r} has no scores")
    raster = np.full((grid.n_rows, grid.n_cols), NODATA, dtype=np.uint8)
    for tile in grid.tiles:
        row = scores.get(tile.tile_id)
        if row is None or cls not in row:
            continue
        p = float(row[cls])
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"score {p} for tile {tile.tile_id} outside [0, 1]")
        raster[tile.row, tile.col] = int(round(p * MAX_LEVEL))
    return raster


def write_prediction_map(path, raster: np.ndarray, grid: TileGrid) -> None:
    """PNG plus world file (.pgw) and, if known, CRS declaration (.crs)."""
    io.save_raster(path, raster)
    io.atomic_write_text(io.sidecar(path, ".pgw"), io.world_file_text(grid.cell_size, grid.meta.origin))
    if grid.meta.crs_id:
        io.atomic_write_text(io.sidecar(path, ".crs"), grid.meta.crs_id + "\n")


def read_prediction_map(path) -> tuple[np.ndarray, tuple]:
    """Scores in [0, 1] with NaN for nodata, plus the world-file parameters."""
    from PIL import Image

    with Image.open(path) as img:
        raw = np.asarray(img)
    values = raw.astype(float) / MAX_LEVEL
    values[raw == NODATA] = np.nan
    return values, io.read_world_file(io.sidecar(path, ".pgw"))
