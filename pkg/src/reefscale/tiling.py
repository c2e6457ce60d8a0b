"""Partition an orthophoto into tiles of fixed ground size."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from reefscale.errors import EmptyRaster, TileTooSmall, WindowOutOfBounds
from reefscale.geometry import Bounds

DEFAULT_TILE_SIDE_M = 1.5
DEFAULT_BLACK_THRESHOLD = 0.5


@dataclass(frozen=True)
class OrthophotoMeta:
    """Size and north-up georeferencing of an orthophoto.

    ``origin`` is the (easting, northing) of the top-left corner of the
    top-left pixel.
    """

    width_px: int
    height_px: int
    gsd: float
    origin: tuple[float, float]
    crs_id: str = ""

    def __post_init__(self):
        if not self.gsd > 0:
            raise ValueError(f"gsd must be > 0, got {self.gsd}")
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError(f"raster size must be positive, got {self.width_px}x{self.height_px}")

    @property
    def extent(self) -> Bounds:
        e0, n0 = self.origin
        return Bounds(e0, n0 - self.height_px * self.gsd, e0 + self.width_px * self.gsd, n0)


@dataclass(frozen=True)
class Tile:
    tile_id: str
    row: int
    col: int
    pixel_window: tuple[int, int, int, int]  # col0, row0, w_px, h_px
    bounds: Bounds


@dataclass(frozen=True)
class TileGrid:
    """Full-size tiles of an orthophoto plus what was left over at the edges."""

    meta: OrthophotoMeta
    tile_px: int
    n_rows: int
    n_cols: int
    tiles: tuple[Tile, ...]
    partial_edge: int

    @property
    def cell_size(self) -> float:
        return self.tile_px * self.meta.gsd

    @property
    def total(self) -> int:
        return len(self.tiles) + self.partial_edge


def tile_id_for(row: int, col: int) -> str:
    return f"r{row:05d}_c{col:05d}"


def tile_pixel_size(gsd: float, tile_side_m: float) -> int:
    if tile_side_m < 2 * gsd:
        raise TileTooSmall(f"tile side {tile_side_m} m is under two pixels at gsd {gsd} m/px")
    return int(round(tile_side_m / gsd))


def build_tile_grid(meta: OrthophotoMeta, tile_side_m: float = DEFAULT_TILE_SIDE_M) -> TileGrid:
    size = tile_pixel_size(meta.gsd, tile_side_m)
    n_cols = meta.width_px // size
    n_rows = meta.height_px // size
    all_cols = math.ceil(meta.width_px / size)
    all_rows = math.ceil(meta.height_px / size)
    e0, n0 = meta.origin
    side = size * meta.gsd
    tiles = []
    for row in range(n_rows):
        for col in range(n_cols):
            min_e = e0 + col * side
            max_n = n0 - row * side
            tiles.append(
                Tile(
                    tile_id=tile_id_for(row, col),
                    row=row,
                    col=col,
                    pixel_window=(col * size, row * size, size, size),
                    bounds=Bounds(min_e, max_n - side, min_e + side, max_n),
                )
            )
    return TileGrid(
        meta=meta,
        tile_px=size,
        n_rows=n_rows,
        n_cols=n_cols,
        tiles=tuple(tiles),
        partial_edge=all_rows * all_cols - n_rows * n_cols,
    )


def compute_tile_grid(meta: OrthophotoMeta, tile_side_m: float = DEFAULT_TILE_SIDE_M) -> list[Tile]:
    """Row-major list of full tiles anchored at the orthophoto origin.

    Tile size in pixels is ``round(tile_side_m / gsd)``; trailing columns
    and rows that cannot hold a full tile are dropped.

    Raises:
        TileTooSmall: if a tile would be narrower than two pixels.
    """
    return list(build_tile_grid(meta, tile_side_m).tiles)


def is_black_tile(pixels: np.ndarray, black_threshold: float = DEFAULT_BLACK_THRESHOLD) -> bool:
    """True when the share of pure-black pixels exceeds ``black_threshold``.

    A pixel is black when every color channel is zero. A trailing alpha
    channel (4-band rasters) is ignored.
    """
    arr = np.asarray(pixels)
    if arr.size == 0:
        raise EmptyRaster("tile raster is empty")
    if arr.ndim == 3:
        if arr.shape[2] == 4:
            arr = arr[..., :3]
        black = np.all(arr == 0, axis=2)
    else:
        black = arr == 0
    return bool(black.mean() > black_threshold)


def extract_tile(ortho: np.ndarray, tile: Tile | tuple[int, int, int, int]) -> np.ndarray:
    """Return the pixel block under a tile's window (a view, not a copy)."""
    col0, row0, w, h = tile.pixel_window if isinstance(tile, Tile) else tile
    height, width = ortho.shape[:2]
    if col0 < 0 or row0 < 0 or w <= 0 or h <= 0 or col0 + w > width or row0 + h > height:
        raise WindowOutOfBounds(f"window {(col0, row0, w, h)} exceeds raster {width}x{height}")
    return ortho[row0 : row0 + h, col0 : col0 + w]
