"""Match underwater images to tiles and decide which tiles are usable."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from reefscale.geometry import Footprint, ImageRecord, coverage_fraction
from reefscale.tiling import Tile

DEFAULT_COVERAGE_THRESHOLD = 0.95

KEPT = "kept"
DROP_BLACK = "black"
DROP_NO_IMAGES = "no_images"
DROP_LOW_COVERAGE = "low_coverage"


@dataclass
class AssociationMap:
    by_tile: dict[str, list[str]] = field(default_factory=dict)
    unassigned: list[str] = field(default_factory=list)

    def images_for(self, tile_id: str) -> list[str]:
        return self.by_tile.get(tile_id, [])


def _edges(lo: Iterable[float], hi: Iterable[float]):
    pairs = sorted(set(zip(lo, hi)))
    return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])


def assign_images_to_tiles(images: Sequence[ImageRecord], tiles: Sequence[Tile]) -> AssociationMap:
    """Put each image in the tile that contains its camera position.

    Tiles are half-open, ``[min_e, max_e) x [min_n, max_n)``, so a point on
    a shared edge lands in exactly one tile. Images outside every tile are
    listed in ``unassigned``. Image order is preserved within a tile.
    """
    assoc = AssociationMap({t.tile_id: [] for t in tiles})
    if not tiles:
        assoc.unassigned = [im.image_id for im in images]
        return assoc
    e_lo, e_hi = _edges((t.bounds.min_e for t in tiles), (t.bounds.max_e for t in tiles))
    n_lo, n_hi = _edges((t.bounds.min_n for t in tiles), (t.bounds.max_n for t in tiles))
    lookup = {
        (t.bounds.min_e, t.bounds.min_n): t.tile_id for t in tiles
    }
    for im in images:
        e, n = im.camera_position
        i = int(np.searchsorted(e_lo, e, side="right")) - 1
        j = int(np.searchsorted(n_lo, n, side="right")) - 1
        tile_id = None
        if i >= 0 and j >= 0 and e < e_hi[i] and n < n_hi[j]:
            tile_id = lookup.get((e_lo[i], n_lo[j]))
        if tile_id is None:
            assoc.unassigned.append(im.image_id)
        else:
            assoc.by_tile[tile_id].append(im.image_id)
    return assoc


def classify_tiles(
    tiles: Sequence[Tile],
    assoc: AssociationMap,
    footprints: Mapping[str, Footprint],
    coverage_threshold: float = DEFAULT_COVERAGE_THRESHOLD,
    black_flags: Mapping[str, bool] | None = None,
    grid_n: int = 64,
    require_coverage: bool = True,
    include_neighbors: bool = False,
) -> dict[str, str]:
    """Decide for every tile whether it is kept or why it is dropped.

    Checks run in order: black pixels, then missing images, then coverage.
    Coverage counts the footprints of the tile's own images, or with
    ``include_neighbors`` every footprint in ``footprints`` that reaches
    the tile.
    """
    if not 0.0 < coverage_threshold <= 1.0:
        raise ValueError(f"coverage_threshold must be in (0, 1], got {coverage_threshold}")
    black_flags = black_flags or {}
    if include_neighbors and footprints:
        all_fps = list(footprints.values())
        boxes = np.array([fp.bounds() for fp in all_fps])
    status = {}
    for tile in tiles:
        ids = assoc.images_for(tile.tile_id)
        if black_flags.get(tile.tile_id, False):
            status[tile.tile_id] = DROP_BLACK
        elif not ids:
            status[tile.tile_id] = DROP_NO_IMAGES
        elif require_coverage:
            if include_neighbors:
                b = tile.bounds
                near = (boxes[:, 0] < b.max_e) & (boxes[:, 2] > b.min_e) & (boxes[:, 1] < b.max_n) & (boxes[:, 3] > b.min_n)
                fps = [all_fps[k] for k in np.flatnonzero(near)]
            else:
                fps = [footprints[i] for i in ids]
            cov = coverage_fraction(fps, tile.bounds, grid_n)
            status[tile.tile_id] = KEPT if cov >= coverage_threshold else DROP_LOW_COVERAGE
        else:
            status[tile.tile_id] = KEPT
    return status


def filter_tiles(
    tiles: Sequence[Tile],
    assoc: AssociationMap,
    footprints: Mapping[str, Footprint],
    coverage_threshold: float = DEFAULT_COVERAGE_THRESHOLD,
    black_flags: Mapping[str, bool] | None = None,
    grid_n: int = 64,
) -> list[Tile]:
    status = classify_tiles(tiles, assoc, footprints, coverage_threshold, black_flags, grid_n)
    return [t for t in tiles if status[t.tile_id] == KEPT]
