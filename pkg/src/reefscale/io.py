"""Readers and writers for the pipeline's text and raster formats.

images CSV       image_id,timestamp_utc,easting,northing,depth_m,roll_deg,pitch_deg,yaw_deg
predictions CSV  image_id,class,prob            (long format, one row per class)
labels CSV       tile_id,class,value
track CSV        timestamp_utc,easting,northing,depth_m,roll_deg,pitch_deg,yaw_deg
frames CSV       image_id,frame_idx
samples CSV      sample_id,group_key,labels    (labels joined with ';')
footprints       GeoJSON FeatureCollection of Polygons, property image_id
manifest         JSON lines, one retained tile per line
orthophoto       any Pillow-readable raster + 6-line world file + 1-line CRS file
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from reefscale.geometry import Attitude, Footprint, ImageRecord
from reefscale.split import SampleLabels
from reefscale.sync import GpsTrack
from reefscale.tiling import OrthophotoMeta, Tile

IMAGE_FIELDS = ["image_id", "timestamp_utc", "easting", "northing", "depth_m", "roll_deg", "pitch_deg", "yaw_deg"]
PREDICTION_FIELDS = ["image_id", "class", "prob"]
LABEL_FIELDS = ["tile_id", "class", "value"]
TRACK_FIELDS = ["timestamp_utc", "easting", "northing", "depth_m", "roll_deg", "pitch_deg", "yaw_deg"]
WORLD_FILE_SUFFIXES = (".pgw", ".wld", ".tfw", ".jgw")


class FormatError(ValueError):
    """A file does not follow its declared format."""


def _fmt(x: float) -> str:
    return repr(float(x))


def _open_csv(path, fields: Sequence[str]):
    fh = open(path, newline="")
    reader = csv.DictReader(fh)
    missing = [f for f in fields if f not in (reader.fieldnames or [])]
    if missing:
        fh.close()
        raise FormatError(f"{path}: missing columns {missing}")
    return fh, reader


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(fields: Sequence[str], rows: Iterable[Sequence]) -> str:
    import io as _io

    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    w.writerows(rows)
    return buf.getvalue()


# --- images and predictions -------------------------------------------------


def read_predictions(path) -> dict[str, dict[str, float]]:
    fh, reader = _open_csv(path, PREDICTION_FIELDS)
    out: dict[str, dict[str, float]] = defaultdict(dict)
    with fh:
        for line, row in enumerate(reader, start=2):
            try:
                p = float(row["prob"])
            except ValueError:
                raise FormatError(f"{path}:{line}: bad probability {row['prob']!r}") from None
            if not 0.0 <= p <= 1.0:
                raise FormatError(f"{path}:{line}: probability {p} outside [0, 1]")
            out[row["image_id"]][row["class"]] = p
    return dict(out)


def read_images(path, predictions: Mapping[str, Mapping[str, float]] | None = None) -> list[ImageRecord]:
    """Load image navigation; attach teacher probabilities when given."""
    fh, reader = _open_csv(path, IMAGE_FIELDS)
    records = []
    with fh:
        for line, row in enumerate(reader, start=2):
            try:
                records.append(
                    ImageRecord(
                        image_id=row["image_id"],
                        camera_position=(float(row["easting"]), float(row["northing"])),
                        depth=float(row["depth_m"]),
                        attitude=Attitude(float(row["roll_deg"]), float(row["pitch_deg"]), float(row["yaw_deg"])),
                        timestamp=float(row["timestamp_utc"]),
                        teacher_probs=dict((predictions or {}).get(row["image_id"], {})),
                    )
                )
            except ValueError as exc:
                raise FormatError(f"{path}:{line}: {exc}") from None
    return records


def images_csv_text(records: Sequence[ImageRecord]) -> str:
    rows = (
        [
            r.image_id,
            _fmt(r.timestamp),
            _fmt(r.camera_position[0]),
            _fmt(r.camera_position[1]),
            _fmt(r.depth),
            _fmt(r.attitude.roll),
            _fmt(r.attitude.pitch),
            _fmt(r.attitude.yaw),
        ]
        for r in records
    )
    return csv_text(IMAGE_FIELDS, rows)


def predictions_csv_text(records: Sequence[ImageRecord]) -> str:
    rows = ([r.image_id, c, _fmt(p)] for r in records for c, p in r.teacher_probs.items())
    return csv_text(PREDICTION_FIELDS, rows)


# --- tile-level labels -------------------------------------------------------


def read_labels_csv(path) -> dict[str, dict[str, float]]:
    fh, reader = _open_csv(path, LABEL_FIELDS)
    out: dict[str, dict[str, float]] = defaultdict(dict)
    with fh:
        for line, row in enumerate(reader, start=2):
            try:
                out[row["tile_id"]][row["class"]] = float(row["value"])
            except ValueError:
                raise FormatError(f"{path}:{line}: bad value {row['value']!r}") from None
    return dict(out)


def labels_csv_text(labels: Mapping[str, Mapping[str, float]]) -> str:
    rows = ([t, c, _fmt(v)] for t in sorted(labels) for c, v in labels[t].items())
    return csv_text(LABEL_FIELDS, rows)


def read_tile_values(path) -> dict[str, dict[str, float]]:
    """Per-tile class values from a manifest (.jsonl) or a labels CSV."""
    if str(path).endswith((".jsonl", ".json")):
        return {rec["tile_id"]: dict(rec["labels"]) for rec in read_manifest(path)}
    return read_labels_csv(path)


# --- manifest ------------------------------------------------------------------


def manifest_text(records: Iterable[Mapping]) -> str:
    return "".join(json.dumps(rec, sort_keys=True, allow_nan=False) + "\n" for rec in records)


def read_manifest(path) -> list[dict]:
    out = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise FormatError(f"{path}:{line_no}: {exc.msg}") from None
    return out


# --- GeoJSON -------------------------------------------------------------------


def _ring(pts) -> list[list[float]]:
    ring = [[float(x), float(y)] for x, y in np.asarray(pts)]
    return ring + [ring[0]]


def footprints_geojson(footprints: Iterable[Footprint], crs_id: str = "") -> dict:
    doc = {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "properties": {"image_id": fp.image_id},
                "geometry": {"type": "Polygon", "coordinates": [_ring(fp.corners)]},
            }
            for fp in footprints
        ],
    }
    if crs_id:
        doc["crs"] = {"type": "name", "properties": {"name": crs_id}}
    return doc


def read_footprints_geojson(path) -> list[Footprint]:
    with open(path) as fh:
        doc = json.load(fh)
    out = []
    for feat in doc.get("features", []):
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Polygon":
            raise FormatError(f"{path}: expected Polygon features, got {geom.get('type')}")
        ring = np.asarray(geom["coordinates"][0], dtype=float)
        if len(ring) > 1 and np.array_equal(ring[0], ring[-1]):
            ring = ring[:-1]
        out.append(Footprint(ring, str(feat.get("properties", {}).get("image_id", ""))))
    return out


def tiles_geojson(tiles: Iterable[Tile], props: Mapping[str, Mapping] | None = None, crs_id: str = "") -> dict:
    props = props or {}
    doc = {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "properties": {
                    "tile_id": t.tile_id,
                    "row": t.row,
                    "col": t.col,
                    "pixel_window": list(t.pixel_window),
                    **props.get(t.tile_id, {}),
                },
                "geometry": {"type": "Polygon", "coordinates": [_ring(t.bounds.corners())]},
            }
            for t in tiles
        ],
    }
    if crs_id:
        doc["crs"] = {"type": "name", "properties": {"name": crs_id}}
    return doc


def dump_json(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n"


# --- world files and rasters ----------------------------------------------------


def world_file_text(cell: float, top_left: tuple[float, float]) -> str:
    """North-up world file for square cells; ``top_left`` is the outer corner."""
    e0, n0 = top_left
    values = [cell, 0.0, 0.0, -cell, e0 + cell / 2.0, n0 - cell / 2.0]
    return "".join(f"{_fmt(v)}\n" for v in values)


def read_world_file(path) -> tuple[float, float, float, float, float, float]:
    with open(path) as fh:
        parts = [ln.strip() for ln in fh if ln.strip()]
    if len(parts) != 6:
        raise FormatError(f"{path}: world file needs 6 values, found {len(parts)}")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def meta_from_world_file(world, width_px: int, height_px: int, crs_id: str = "") -> OrthophotoMeta:
    """Orthophoto geometry from world-file parameters (A, D, B, E, C, F).

    Only north-up rasters with square pixels are accepted.
    """
    a, d, b, e, c, f = world
    if d != 0.0 or b != 0.0:
        raise FormatError("rotated world files are not supported")
    if a <= 0 or e >= 0 or not math.isclose(a, -e, rel_tol=1e-9):
        raise FormatError(f"expected square north-up pixels, got A={a}, E={e}")
    return OrthophotoMeta(width_px, height_px, a, (c - a / 2.0, f - e / 2.0), crs_id)


def sidecar(path, suffix: str) -> Path:
    return Path(path).with_suffix(suffix)


def find_world_file(raster_path) -> Path:
    for suffix in WORLD_FILE_SUFFIXES:
        cand = sidecar(raster_path, suffix)
        if cand.exists():
            return cand
    raise FileNotFoundError(f"no world file next to {raster_path} (tried {', '.join(WORLD_FILE_SUFFIXES)})")


def read_crs(path) -> str:
    with open(path) as fh:
        line = fh.readline().strip()
    if not line:
        raise FormatError(f"{path}: empty CRS declaration")
    return line


def load_orthophoto(raster_path, world_path=None, crs_path=None) -> tuple[np.ndarray, OrthophotoMeta]:
    from PIL import Image

    Image.MAX_IMAGE_PIXELS = None
    with Image.open(raster_path) as img:
        pixels = np.asarray(img)
    world = read_world_file(world_path or find_world_file(raster_path))
    crs_file = Path(crs_path) if crs_path else sidecar(raster_path, ".crs")
    crs_id = read_crs(crs_file) if crs_file.exists() else ""
    height, width = pixels.shape[:2]
    return pixels, meta_from_world_file(world, width, height, crs_id)


def save_raster(path, pixels: np.ndarray) -> None:
    from PIL import Image

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=path.suffix)
    os.close(fd)
    try:
        Image.fromarray(pixels).save(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_orthophoto(raster_path, pixels: np.ndarray, meta: OrthophotoMeta) -> None:
    save_raster(raster_path, pixels)
    atomic_write_text(sidecar(raster_path, ".pgw"), world_file_text(meta.gsd, meta.origin))
    if meta.crs_id:
        atomic_write_text(sidecar(raster_path, ".crs"), meta.crs_id + "\n")


# --- navigation and split inputs ---------------------------------------------


def read_track_csv(path) -> GpsTrack:
    fh, reader = _open_csv(path, TRACK_FIELDS)
    with fh:
        rows = [[float(row[f]) for f in TRACK_FIELDS] for row in reader]
    return GpsTrack.from_rows(rows)


def read_frames_csv(path) -> list[tuple[str, int]]:
    fh, reader = _open_csv(path, ["image_id", "frame_idx"])
    with fh:
        return [(row["image_id"], int(row["frame_idx"])) for row in reader]


def read_samples_csv(path) -> list[SampleLabels]:
    fh, reader = _open_csv(path, ["sample_id", "group_key", "labels"])
    with fh:
        return [
            SampleLabels(
                row["sample_id"],
                row["group_key"],
                frozenset(lab.strip() for lab in (row["labels"] or "").split(";") if lab.strip()),
            )
            for row in reader
        ]


def samples_csv_text(samples: Sequence[SampleLabels]) -> str:
    return csv_text(
        ["sample_id", "group_key", "labels"],
        ([s.sample_id, s.group_key, ";".join(sorted(s.label_set))] for s in samples),
    )
