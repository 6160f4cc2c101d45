import math

import numpy as np
import pytest

from uvcsim.geometry import Pose2D
from uvcsim.world import FREE, OCCUPIED, OccupancyGrid

RES = 0.05  # default indoor mapping resolution used across the suite


def empty_grid(width_m: float = 10.0, height_m: float = 10.0, res: float = RES) -> OccupancyGrid:
    w = round(width_m / res)
    h = round(height_m / res)
    return OccupancyGrid(res, Pose2D(0.0, 0.0, 0.0), np.zeros((h, w), dtype=np.int8))


def add_wall_x(grid: OccupancyGrid, x0: float, x1: float, y0: float = None, y1: float = None) -> None:
    """Occupy all cells whose x-extent intersects [x0, x1] (full height by default)."""
    res = grid.resolution
    ix0 = max(0, int(math.floor((x0 - grid.origin.x) / res)))
    ix1 = min(grid.width - 1, int(math.ceil((x1 - grid.origin.x) / res)) - 1)
    iy0 = 0 if y0 is None else max(0, int(math.floor((y0 - grid.origin.y) / res)))
    iy1 = grid.height - 1 if y1 is None else min(
        grid.height - 1, int(math.ceil((y1 - grid.origin.y) / res)) - 1
    )
    grid.cells[iy0 : iy1 + 1, ix0 : ix1 + 1] = OCCUPIED


def add_wall_y(grid: OccupancyGrid, y0: float, y1: float, x0: float = None, x1: float = None) -> None:
    res = grid.resolution
    iy0 = max(0, int(math.floor((y0 - grid.origin.y) / res)))
    iy1 = min(grid.height - 1, int(math.ceil((y1 - grid.origin.y) / res)) - 1)
    ix0 = 0 if x0 is None else max(0, int(math.floor((x0 - grid.origin.x) / res)))
    ix1 = grid.width - 1 if x1 is None else min(
        grid.width - 1, int(math.ceil((x1 - grid.origin.x) / res)) - 1
    )
    grid.cells[iy0 : iy1 + 1, ix0 : ix1 + 1] = OCCUPIED


def march_ray(grid: OccupancyGrid, origin, angle, max_range, step=0.001):
    """Independent raycast oracle: fixed 1 mm marching along the ray.

    Returns the distance of the first sample that lands in a blocking cell,
    or max_range if none does before leaving the grid or exhausting range.
    """
    ox, oy = origin
    dx, dy = math.cos(angle), math.sin(angle)
    n = int(max_range / step)
    for k in range(1, n + 1):
        t = k * step
        x, y = ox + dx * t, oy + dy * t
        if not grid.in_bounds_world(x, y):
            return max_range
        ix, iy = grid.world_to_cell(x, y)
        if grid.cells[iy, ix] != FREE:
            return t
    return max_range


def march_ray_batch(grid: OccupancyGrid, origin, angles, max_range, step=0.001):
    """Vectorized variant of march_ray for large oracle sweeps."""
    ox, oy = origin
    angles = np.asarray(angles)
    ts = np.arange(1, int(max_range / step) + 1) * step
    dx = np.cos(angles)[:, None]
    dy = np.sin(angles)[:, None]
    xs = ox + dx * ts[None, :]
    ys = oy + dy * ts[None, :]
    x_min, y_min, x_max, y_max = grid.extent
    inside = (xs >= x_min) & (xs < x_max) & (ys >= y_min) & (ys < y_max)
    ix = np.floor((xs - grid.origin.x) / grid.resolution).astype(np.int64)
    iy = np.floor((ys - grid.origin.y) / grid.resolution).astype(np.int64)
    ix = np.clip(ix, 0, grid.width - 1)
    iy = np.clip(iy, 0, grid.height - 1)
    blocked = (grid.cells != FREE)[iy, ix] & inside
    exited = ~inside
    out = np.full(angles.shape, max_range, dtype=np.float64)
    for i in range(angles.size):
        hit = np.argmax(blocked[i])
        gone = np.argmax(exited[i])
        if blocked[i].any() and (not exited[i].any() or hit < gone):
            out[i] = ts[hit]
    return out


@pytest.fixture
def open_room():
    return empty_grid(10.0, 10.0)


def write_map_files(dirpath, grid: OccupancyGrid, name="map"):
    """Persist a grid as PGM + metadata (the on-disk map format)."""
    from uvcsim.world import OCCUPIED as OCC, UNKNOWN as UNK, write_pgm

    img = np.full(grid.cells.shape, 254, dtype=np.uint8)
    img[grid.cells == OCC] = 0
    img[grid.cells == UNK] = 128
    pgm = dirpath / f"{name}.pgm"
    meta = dirpath / f"{name}.yaml"
    write_pgm(pgm, np.flipud(img))
    meta.write_text(
        f"image: {name}.pgm\n"
        f"resolution: {grid.resolution}\n"
        f"origin: [{grid.origin.x}, {grid.origin.y}, 0.0]\n"
        "negate: 0\n"
        "occupied_thresh: 0.65\n"
        "free_thresh: 0.196\n"
    )
    return pgm, meta


def two_room_grid():
    """6 x 4 m fixture: two rooms joined by a 1 m doorway, plus a sealed
    alcove in the left room whose interior cell no lamp can ever reach.

    Returns (grid, info) where info maps:
      divider_x: wall plane between the rooms
      occluded_cell: free cell inside the sealed alcove
      left_room / right_room: free points well inside each room
    """
    grid = empty_grid(6.0, 4.0)
    t = 0.1  # wall thickness
    add_wall_x(grid, 0.0, t)
    add_wall_x(grid, 6.0 - t, 6.0)
    add_wall_y(grid, 0.0, t)
    add_wall_y(grid, 4.0 - t, 4.0)
    # divider with a 1 m doorway centered at y = 2
    add_wall_x(grid, 2.95, 3.05, y0=0.0, y1=1.5)
    add_wall_x(grid, 2.95, 3.05, y0=2.5, y1=4.0)
    # sealed 0.3 x 0.3 m alcove in the lower-left corner area
    add_wall_x(grid, 0.5, 0.8, y0=0.5, y1=0.8)
    ax, ay = grid.world_to_cell(0.65, 0.65)
    grid.cells[ay, ax] = FREE
    info = {
        "divider_x": 3.0,
        "occluded_cell": (ax, ay),
        "left_room": (1.5, 2.0),
        "right_room": (4.5, 2.0),
    }
    return grid, info
