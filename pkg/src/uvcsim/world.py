"""Occupancy-grid world model: map file I/O, raycasting, visibility, inflation.

The grid stores one of three values per cell (FREE, OCCUPIED, UNKNOWN) in a
``(height, width)`` int8 array. Row index grows with world +y, so image files
(whose row 0 is the top of the picture) are flipped vertically on load.
Unknown cells are treated conservatively: they block rays and sight lines
exactly like occupied cells, and navigation never traverses them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .geometry import Pose2D

FREE = 0
OCCUPIED = 1
UNKNOWN = -1


class MapError(ValueError):
    """Base class for map loading problems."""


class MapHeaderError(MapError):
    """PGM header is not a well-formed binary (P5) grayscale header."""


class MapDimensionError(MapError):
    """Pixel payload does not match the dimensions declared in the header."""


class MapResolutionError(MapError):
    """Metadata resolution is missing, non-numeric, or not positive."""


class GridQueryError(ValueError):
    """A geometric query was made from an invalid point (out of bounds or
    inside an occupied cell)."""


@dataclass
class OccupancyGrid:
    """Discretized 2D world.

    ``origin`` is the world pose of the corner of cell (0, 0); cell (ix, iy)
    covers world x in [origin.x + ix*res, origin.x + (ix+1)*res) and the
    analogous y interval. Transforms assume an axis-aligned map (origin.theta
    is carried through but not applied, mirroring the common map-server
    convention).
    """

    resolution: float
    origin: Pose2D
    cells: np.ndarray  # (height, width) int8

    def __post_init__(self) -> None:
        if self.resolution <= 0:
            raise MapResolutionError(f"resolution must be > 0, got {self.resolution}")
        self.cells = np.asarray(self.cells, dtype=np.int8)
        if self.cells.ndim != 2:
            raise MapError("cells must be a 2D array")

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """World bounds as (x_min, y_min, x_max, y_max)."""
        return (
            self.origin.x,
            self.origin.y,
            self.origin.x + self.width * self.resolution,
            self.origin.y + self.height * self.resolution,
        )

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        ix = int(math.floor((x - self.origin.x) / self.resolution))
        iy = int(math.floor((y - self.origin.y) / self.resolution))
        return ix, iy

    def cell_to_world(self, ix: int, iy: int) -> tuple[float, float]:
        """World coordinates of the center of cell (ix, iy)."""
        return (
            self.origin.x + (ix + 0.5) * self.resolution,
            self.origin.y + (iy + 0.5) * self.resolution,
        )

    def in_bounds_cell(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

    def in_bounds_world(self, x: float, y: float) -> bool:
        x_min, y_min, x_max, y_max = self.extent
        return x_min <= x < x_max and y_min <= y < y_max

    def cell_at(self, x: float, y: float) -> int:
        ix, iy = self.world_to_cell(x, y)
        if not self.in_bounds_cell(ix, iy):
            raise GridQueryError(f"point ({x}, {y}) outside the map")
        return int(self.cells[iy, ix])

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(self.resolution, self.origin, self.cells.copy())


# ----------------------------------------------------------------------
# PGM I/O
# ----------------------------------------------------------------------

def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary (P5) grayscale PGM into a (rows, cols) uint8 array.

    Comments (# ...) between header tokens are allowed, maxval must be 255.
    """
    data = Path(path).read_bytes()
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < 4 and i < len(data):
        # skip whitespace and comment lines
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i < len(data) and data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
            continue
        start = i
        while i < len(data) and not data[i : i + 1].isspace():
            i += 1
        if i > start:
            tokens.append(data[start:i])
    if len(tokens) < 4 or tokens[0] != b"P5":
        raise MapHeaderError(f"{path}: not a binary P5 PGM")
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise MapHeaderError(f"{path}: non-numeric header field") from exc
    if w <= 0 or h <= 0:
        raise MapHeaderError(f"{path}: non-positive image dimensions {w}x{h}")
    if maxval != 255:
        raise MapHeaderError(f"{path}: unsupported maxval {maxval} (want 255)")
    pixels = data[i + 1 : i + 1 + w * h]
    if len(pixels) != w * h:
        raise MapDimensionError(
            f"{path}: expected {w * h} pixels, found {len(pixels)}"
        )
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w)


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    """Write a (rows, cols) uint8 array as a binary P5 PGM."""
    img = np.ascontiguousarray(image, dtype=np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def load_map_metadata(meta_path: str | Path) -> dict:
    meta = yaml.safe_load(Path(meta_path).read_text())
    if not isinstance(meta, dict):
        raise MapError(f"{meta_path}: metadata must be a key: value mapping")
    for key in ("resolution", "origin", "occupied_thresh", "free_thresh"):
        if key not in meta:
            raise MapError(f"{meta_path}: missing metadata field '{key}'")
    return meta


def load_map(pgm_path: str | Path, meta_path: str | Path) -> OccupancyGrid:
    """Load an occupancy grid from a binary PGM plus a metadata text file.

    Metadata fields: image, resolution (m/cell), origin [x, y, theta],
    occupied_thresh, free_thresh, negate. A pixel of value v has occupancy
    p = 1 - v/255 (or v/255 when negate is set); p >= occupied_thresh marks
    the cell Occupied, p <= free_thresh marks it Free, anything between is
    Unknown. Image row 0 becomes the top (max-y) row of the grid.
    """
    meta = load_map_metadata(meta_path)
    try:
        resolution = float(meta["resolution"])
    except (TypeError, ValueError) as exc:
        raise MapResolutionError(f"{meta_path}: bad resolution {meta['resolution']!r}") from exc
    if resolution <= 0:
        raise MapResolutionError(f"{meta_path}: resolution must be > 0, got {resolution}")
    origin_raw = meta["origin"]
    if not isinstance(origin_raw, (list, tuple)) or len(origin_raw) != 3:
        raise MapError(f"{meta_path}: origin must be [x, y, theta]")
    origin = Pose2D(*(float(v) for v in origin_raw))
    occupied_thresh = float(meta["occupied_thresh"])
    free_thresh = float(meta["free_thresh"])
    negate = bool(int(meta.get("negate", 0)))

    img = read_pgm(pgm_path)
    v = img.astype(np.float64) / 255.0
    p = v if negate else 1.0 - v
    cells = np.full(img.shape, UNKNOWN, dtype=np.int8)
    cells[p >= occupied_thresh] = OCCUPIED
    cells[p <= free_thresh] = FREE
    # image row 0 is the top of the picture -> highest-y grid row
    return OccupancyGrid(resolution, origin, np.flipud(cells))


def load_map_from_meta(meta_path: str | Path) -> OccupancyGrid:
    """Load a map given only the metadata file; the image field names the PGM
    (resolved relative to the metadata file's directory)."""
    meta = load_map_metadata(meta_path)
    if "image" not in meta:
        raise MapError(f"{meta_path}: missing metadata field 'image'")
    pgm = Path(meta_path).parent / str(meta["image"])
    return load_map(pgm, meta_path)


# ----------------------------------------------------------------------
# Geometric queries
# ----------------------------------------------------------------------

def _ray_setup(grid: OccupancyGrid, ox: float, oy: float, dx: float, dy: float):
    """Amanatides-Woo walk state: cell indices, boundary distances, steps."""
    res = grid.resolution
    fx = (ox - grid.origin.x) / res
    fy = (oy - grid.origin.y) / res
    ix, iy = int(math.floor(fx)), int(math.floor(fy))
    inf = math.inf
    if dx > 0:
        step_x, tmax_x = 1, ((ix + 1) - fx) * res / dx
    elif dx < 0:
        step_x, tmax_x = -1, (ix - fx) * res / dx
    else:
        step_x, tmax_x = 0, inf
    if dy > 0:
        step_y, tmax_y = 1, ((iy + 1) - fy) * res / dy
    elif dy < 0:
        step_y, tmax_y = -1, (iy - fy) * res / dy
    else:
        step_y, tmax_y = 0, inf
    tdelta_x = res / abs(dx) if dx else inf
    tdelta_y = res / abs(dy) if dy else inf
    return ix, iy, step_x, step_y, tmax_x, tmax_y, tdelta_x, tdelta_y


def raycast(
    grid: OccupancyGrid,
    origin: tuple[float, float],
    angle: float,
    max_range: float,
) -> float:
    """Distance from ``origin`` along ``angle`` to the first blocking cell
    boundary, or ``max_range`` if the ray escapes or nothing blocks it.

    Occupied and unknown cells both block. The origin must lie inside the
    grid and outside any occupied cell.
    """
    ox, oy = origin
    if max_range <= 0:
        raise ValueError(f"max_range must be > 0, got {max_range}")
    if not grid.in_bounds_world(ox, oy):
        raise GridQueryError(f"ray origin ({ox}, {oy}) outside the map")
    if grid.cell_at(ox, oy) == OCCUPIED:
        raise GridQueryError(f"ray origin ({ox}, {oy}) inside an occupied cell")
    dx, dy = math.cos(angle), math.sin(angle)
    ix, iy, step_x, step_y, tmax_x, tmax_y, tdelta_x, tdelta_y = _ray_setup(
        grid, ox, oy, dx, dy
    )
    blocked = grid.cells != FREE
    w, h = grid.width, grid.height
    while True:
        if tmax_x <= tmax_y:
            t = tmax_x
            ix += step_x
            tmax_x += tdelta_x
        else:
            t = tmax_y
            iy += step_y
            tmax_y += tdelta_y
        if t >= max_range:
            return max_range
        if not (0 <= ix < w and 0 <= iy < h):
            return max_range
        if blocked[iy, ix]:
            return t


def raycast_batch(
    grid: OccupancyGrid,
    origin: tuple[float, float],
    angles: np.ndarray,
    max_range: float,
) -> np.ndarray:
    """Vectorized raycast: one shared origin, many angles.

    Runs the same cell walk as :func:`raycast` in lockstep across all rays;
    results agree with the scalar version to float rounding.
    """
    ox, oy = origin
    if max_range <= 0:
        raise ValueError(f"max_range must be > 0, got {max_range}")
    if not grid.in_bounds_world(ox, oy):
        raise GridQueryError(f"ray origin ({ox}, {oy}) outside the map")
    if grid.cell_at(ox, oy) == OCCUPIED:
        raise GridQueryError(f"ray origin ({ox}, {oy}) inside an occupied cell")

    angles = np.asarray(angles, dtype=np.float64)
    n = angles.size
    dx = np.cos(angles)
    dy = np.sin(angles)
    res = grid.resolution
    fx = (ox - grid.origin.x) / res
    fy = (oy - grid.origin.y) / res
    ix = np.full(n, int(math.floor(fx)), dtype=np.int64)
    iy = np.full(n, int(math.floor(fy)), dtype=np.int64)

    step_x = np.sign(dx).astype(np.int64)
    step_y = np.sign(dy).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        tmax_x = np.where(
            dx > 0,
            ((ix + 1) - fx) * res / dx,
            np.where(dx < 0, (ix - fx) * res / dx, np.inf),
        )
        tmax_y = np.where(
            dy > 0,
            ((iy + 1) - fy) * res / dy,
            np.where(dy < 0, (iy - fy) * res / dy, np.inf),
        )
        tdelta_x = np.where(dx != 0, res / np.abs(dx), np.inf)
        tdelta_y = np.where(dy != 0, res / np.abs(dy), np.inf)

    blocked = grid.cells != FREE
    w, h = grid.width, grid.height
    out = np.full(n, max_range, dtype=np.float64)
    idx = np.arange(n)
    while idx.size:
        use_x = tmax_x[idx] <= tmax_y[idx]
        t = np.where(use_x, tmax_x[idx], tmax_y[idx])
        ix[idx] += np.where(use_x, step_x[idx], 0)
        iy[idx] += np.where(use_x, 0, step_y[idx])
        tmax_x[idx] += np.where(use_x, tdelta_x[idx], 0.0)
        tmax_y[idx] += np.where(use_x, 0.0, tdelta_y[idx])

        cx, cy = ix[idx], iy[idx]
        over = t >= max_range
        inside = (cx >= 0) & (cx < w) & (cy >= 0) & (cy < h)
        hit = np.zeros(idx.size, dtype=bool)
        live = inside & ~over
        hit[live] = blocked[cy[live], cx[live]]
        out[idx[hit]] = t[hit]
        idx = idx[~(over | ~inside | hit)]
    return out


def line_of_sight(
    grid: OccupancyGrid, a: tuple[float, float], b: tuple[float, float]
) -> bool:
    """True iff no blocking cell lies strictly between ``a`` and ``b``.

    The cells containing the endpoints never block, so a sight line onto a
    wall surface cell (e.g. a lamp irradiating a wall) counts as clear.
    """
    ax, ay = a
    bx, by = b
    if not grid.in_bounds_world(ax, ay):
        raise GridQueryError(f"sight-line endpoint ({ax}, {ay}) outside the map")
    if not grid.in_bounds_world(bx, by):
        raise GridQueryError(f"sight-line endpoint ({bx}, {by}) outside the map")
    dist = math.hypot(bx - ax, by - ay)
    if dist == 0.0:
        return True
    dx, dy = (bx - ax) / dist, (by - ay) / dist
    ix, iy, step_x, step_y, tmax_x, tmax_y, tdelta_x, tdelta_y = _ray_setup(
        grid, ax, ay, dx, dy
    )
    target = grid.world_to_cell(bx, by)
    blocked = grid.cells != FREE
    w, h = grid.width, grid.height
    while True:
        if tmax_x <= tmax_y:
            t = tmax_x
            ix += step_x
            tmax_x += tdelta_x
        else:
            t = tmax_y
            iy += step_y
            tmax_y += tdelta_y
        if t >= dist:
            return True
        if (ix, iy) == target:
            return True
        if not (0 <= ix < w and 0 <= iy < h):
            return True  # segment leaves the grid; nothing left to block it
        if blocked[iy, ix]:
            return False


def segments_clear(
    grid: OccupancyGrid,
    source: tuple[float, float],
    xs: np.ndarray,
    ys: np.ndarray,
) -> np.ndarray:
    """Vectorized :func:`line_of_sight`: one source, many target points.

    Returns a boolean array, True where nothing blocks the open segment
    from ``source`` to the target (the endpoint cells themselves never
    block). Targets are assumed in bounds. Runs the same cell walk as the
    scalar version in lockstep with index compaction, so large batches
    (every cell of a dose field) stay cheap.
    """
    sx, sy = source
    if not grid.in_bounds_world(sx, sy):
        raise GridQueryError(f"sight-line source ({sx}, {sy}) outside the map")
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    n = xs.size
    res = grid.resolution
    dxs = xs - sx
    dys = ys - sy
    dist = np.hypot(dxs, dys)
    out = np.ones(n, dtype=bool)
    active = dist > 0.0
    if not active.any():
        return out

    with np.errstate(divide="ignore", invalid="ignore"):
        ux = np.where(active, dxs / dist, 0.0)
        uy = np.where(active, dys / dist, 0.0)

    fx = (sx - grid.origin.x) / res
    fy = (sy - grid.origin.y) / res
    ix = np.full(n, int(math.floor(fx)), dtype=np.int64)
    iy = np.full(n, int(math.floor(fy)), dtype=np.int64)
    tx = np.floor((xs - grid.origin.x) / res).astype(np.int64)
    ty = np.floor((ys - grid.origin.y) / res).astype(np.int64)

    step_x = np.sign(ux).astype(np.int64)
    step_y = np.sign(uy).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        tmax_x = np.where(
            ux > 0,
            ((ix + 1) - fx) * res / ux,
            np.where(ux < 0, (ix - fx) * res / ux, np.inf),
        )
        tmax_y = np.where(
            uy > 0,
            ((iy + 1) - fy) * res / uy,
            np.where(uy < 0, (iy - fy) * res / uy, np.inf),
        )
        tdelta_x = np.where(ux != 0, res / np.abs(ux), np.inf)
        tdelta_y = np.where(uy != 0, res / np.abs(uy), np.inf)

    blocked = grid.cells != FREE
    w, h = grid.width, grid.height
    idx = np.nonzero(active)[0]
    while idx.size:
        mx = tmax_x[idx] <= tmax_y[idx]
        t = np.where(mx, tmax_x[idx], tmax_y[idx])
        ix[idx] += np.where(mx, step_x[idx], 0)
        iy[idx] += np.where(mx, 0, step_y[idx])
        tmax_x[idx] += np.where(mx, tdelta_x[idx], 0.0)
        tmax_y[idx] += np.where(mx, 0.0, tdelta_y[idx])

        cx, cy = ix[idx], iy[idx]
        reached = t >= dist[idx]
        at_target = (cx == tx[idx]) & (cy == ty[idx])
        inside = (cx >= 0) & (cx < w) & (cy >= 0) & (cy < h)
        hit = np.zeros(idx.size, dtype=bool)
        ins = inside & ~reached & ~at_target
        hit[ins] = blocked[cy[ins], cx[ins]]
        out[idx[hit]] = False
        idx = idx[~(reached | at_target | ~inside | hit)]
    return out


def inflate(grid: OccupancyGrid, radius: float) -> OccupancyGrid:
    """Grow every occupied cell by ``radius``: any cell whose center lies
    within ``radius`` (Euclidean, center-to-center) of an occupied cell
    becomes occupied. Unknown cells are preserved unless swallowed."""
    if radius < 0:
        raise ValueError(f"inflation radius must be >= 0, got {radius}")
    occ = grid.cells == OCCUPIED
    if radius == 0 or not occ.any():
        return grid.copy()
    res = grid.resolution
    reach = int(math.floor(radius / res)) + 1
    offsets = [
        (di, dj)
        for di in range(-reach, reach + 1)
        for dj in range(-reach, reach + 1)
        if math.hypot(di * res, dj * res) <= radius
    ]
    h, w = occ.shape
    grown = np.zeros_like(occ)
    for di, dj in offsets:
        src = occ[
            max(0, -di) : h - max(0, di),
            max(0, -dj) : w - max(0, dj),
        ]
        grown[
            max(0, di) : h - max(0, -di),
            max(0, dj) : w - max(0, -dj),
        ] |= src
    cells = grid.cells.copy()
    cells[grown] = OCCUPIED
    return OccupancyGrid(grid.resolution, grid.origin, cells)
