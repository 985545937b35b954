"""Aggregate trip endpoints into a counted grid and rank hotspot cells.

Counts, not kernel density: the story pipeline needs countable clusters
whose totals can be checked exactly. Cell indexing uses the local
equirectangular meter scale at the bbox center; a point exactly on a cell's
max edge belongs to the next cell, except on the bbox maximum edge, which
closes the last cell so that no in-bbox point is lost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .geo import BoundingBox, GeoPoint, bbox_of, meters_per_degree

DEFAULT_CELL_SIZE_M = 250.0


@dataclass
class HeatGrid:
    bbox: BoundingBox
    cell_size_m: float
    rows: int
    cols: int
    counts: np.ndarray          # shape (rows, cols), dtype int64
    total_in_bbox: int
    out_of_bbox: int

    def cell_center(self, row: int, col: int) -> GeoPoint:
        kx, ky = meters_per_degree(self.bbox.center.lat)
        lon = self.bbox.min_lon + (col + 0.5) * self.cell_size_m / kx
        lat = self.bbox.min_lat + (row + 0.5) * self.cell_size_m / ky
        return GeoPoint(lon, lat)


@dataclass(frozen=True)
class Hotspot:
    cell_row: int
    cell_col: int
    center: GeoPoint
    count: int
    rank: int


def build_grid(points: Iterable[GeoPoint], cell_size_m: float = DEFAULT_CELL_SIZE_M,
               bbox: BoundingBox | None = None) -> HeatGrid:
    """Count points into a grid over ``bbox`` (default: tightest box)."""
    if cell_size_m <= 0:
        raise ValueError(f"cell_size_m must be positive, got {cell_size_m}")
    points = list(points)
    if bbox is None:
        if not points:
            raise ValueError("cannot build a grid from no points and no bbox")
        bbox = bbox_of(points)

    kx, ky = meters_per_degree(bbox.center.lat)
    width_m = (bbox.max_lon - bbox.min_lon) * kx
    height_m = (bbox.max_lat - bbox.min_lat) * ky
    cols = max(1, math.ceil(width_m / cell_size_m))
    rows = max(1, math.ceil(height_m / cell_size_m))

    counts = np.zeros((rows, cols), dtype=np.int64)
    out = 0
    for p in points:
        if not bbox.contains(p):
            out += 1
            continue
        col = min(int((p.lon - bbox.min_lon) * kx // cell_size_m), cols - 1)
        row = min(int((p.lat - bbox.min_lat) * ky // cell_size_m), rows - 1)
        counts[row, col] += 1
    return HeatGrid(bbox=bbox, cell_size_m=cell_size_m, rows=rows, cols=cols,
                    counts=counts, total_in_bbox=len(points) - out, out_of_bbox=out)


def top_hotspots(grid: HeatGrid, k: int) -> list[Hotspot]:
    """The k highest-count non-empty cells, count descending.

    Ties break on (row, col) ascending; fewer than k come back when the grid
    has fewer non-zero cells.
    """
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    nonzero = np.argwhere(grid.counts > 0)
    cells = sorted(((int(grid.counts[r, c]), int(r), int(c)) for r, c in nonzero),
                   key=lambda t: (-t[0], t[1], t[2]))
    return [Hotspot(cell_row=r, cell_col=c, center=grid.cell_center(r, c),
                    count=n, rank=i + 1)
            for i, (n, r, c) in enumerate(cells[:k])]


def summarize_for_story(grid: HeatGrid, hotspots: Sequence[Hotspot]) -> str:
    """Deterministic plain-text digest of the grid for prompt construction.

    Fixed 4-decimal coordinates, stable ordering, no prose; the story
    backend adds the flourish.
    """
    b = grid.bbox
    lines = [
        f"area: lon [{b.min_lon:.4f}, {b.max_lon:.4f}] lat [{b.min_lat:.4f}, {b.max_lat:.4f}]",
        f"grid: {grid.rows} x {grid.cols} cells of {grid.cell_size_m:.0f} m",
        f"trip endpoints in area: {grid.total_in_bbox} (outside: {grid.out_of_bbox})",
    ]
    if hotspots:
        lines.append("busiest cells:")
        for h in hotspots:
            share = 100.0 * h.count / grid.total_in_bbox if grid.total_in_bbox else 0.0
            lines.append(f"  {h.rank}. center ({h.center.lon:.4f}, {h.center.lat:.4f})"
                         f"  endpoints {h.count}  share {share:.1f}%")
    return "\n".join(lines) + "\n"


def export_grid(grid: HeatGrid, csv_path: str, meta_path: str | None = None) -> None:
    """Write the count matrix as CSV plus a sidecar header for renderers."""
    if meta_path is None:
        meta_path = csv_path + ".meta"
    np.savetxt(csv_path, grid.counts, fmt="%d", delimiter=",")
    b = grid.bbox
    with open(meta_path, "w", encoding="utf-8") as fh:
        fh.write(f"min_lon = {b.min_lon!r}\nmin_lat = {b.min_lat!r}\n"
                 f"max_lon = {b.max_lon!r}\nmax_lat = {b.max_lat!r}\n"
                 f"cell_size_m = {grid.cell_size_m!r}\nrows = {grid.rows}\ncols = {grid.cols}\n"
                 f"total_in_bbox = {grid.total_in_bbox}\nout_of_bbox = {grid.out_of_bbox}\n")
