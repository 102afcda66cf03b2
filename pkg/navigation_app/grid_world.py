"""
Grid map model and the geometry queries every other module relies on.

Cell (i, j) is the axis-aligned unit square [i, i+1] x [j, j+1]; its center is
(i + 0.5, j + 0.5). Row 0 of a MovingAI file is j = 0. Anything outside the map
counts as an obstacle.
"""
import bisect
import collections
import logging
import math
from functools import cached_property, lru_cache
from typing import NamedTuple

import numpy as np

from .exceptions import MapFormatError, NoFreeCellError

logger = logging.getLogger(__name__)

TRAVERSABLE_CHARS = frozenset(".G")
BLOCKED_CHARS = frozenset("@OT")

# BFS expansion order: east, south, west, north.
BFS_DIRECTIONS = ((1, 0), (0, 1), (-1, 0), (0, -1))


class Cell(NamedTuple):
    i: int
    j: int


class Point(NamedTuple):
    x: float
    y: float


class GridMap:
    """
    Immutable occupancy grid. `blocked` is indexed [j, i] (row, column) so it
    prints the way the map file reads.
    """
    cell_size = 1.0

    def __init__(self, width, height, blocked, name=""):
        blocked = np.array(blocked, dtype=bool)
        if width <= 0 or height <= 0:
            raise ValueError("Map dimensions must be positive.")
        if blocked.shape != (height, width):
            raise ValueError(
                f"Occupancy has shape {blocked.shape}, expected {(height, width)}."
            )
        blocked.flags.writeable = False
        self.width = int(width)
        self.height = int(height)
        self.blocked = blocked
        self.name = name

    def __repr__(self):
        return f"<GridMap {self.name or 'unnamed'} {self.width}x{self.height} blocked={self.blocked_count}>"

    def __eq__(self, other):
        return (
            isinstance(other, GridMap)
            and self.width == other.width
            and self.height == other.height
            and np.array_equal(self.blocked, other.blocked)
        )

    def __hash__(self):
        return hash((self.width, self.height, self.blocked.tobytes()))

    # --- Cell queries ---
    @property
    def blocked_count(self):
        return int(self.blocked.sum())

    def in_bounds(self, cell):
        i, j = cell
        return 0 <= i < self.width and 0 <= j < self.height

    def is_blocked(self, cell):
        i, j = cell
        if not (0 <= i < self.width and 0 <= j < self.height):
            return True
        return bool(self.blocked[j, i])

    def is_free(self, cell):
        return not self.is_blocked(cell)

    def cell_of(self, point):
        """Cell containing `point`; points on the far map edge belong to the last cell."""
        i = min(max(int(math.floor(point[0])), 0), self.width - 1)
        j = min(max(int(math.floor(point[1])), 0), self.height - 1)
        return Cell(i, j)

    @staticmethod
    def cell_center(cell):
        return Point(cell[0] + 0.5, cell[1] + 0.5)

    def neighbors4(self, cell):
        i, j = cell
        for di, dj in BFS_DIRECTIONS:
            candidate = Cell(i + di, j + dj)
            if self.in_bounds(candidate):
                yield candidate

    def free_cells(self):
        js, is_ = np.nonzero(~self.blocked)
        return [Cell(int(i), int(j)) for j, i in zip(js, is_)]

    # --- Cached geometry ---
    @cached_property
    def _column_rows(self):
        return [np.flatnonzero(self.blocked[:, i]).tolist() for i in range(self.width)]

    @cached_property
    def _integral(self):
        padded = np.pad(self.blocked, 1, constant_values=True).astype(np.int64)
        table = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1), dtype=np.int64)
        table[1:, 1:] = padded.cumsum(axis=0).cumsum(axis=1)
        return table

    def any_blocked(self, i_lo, j_lo, i_hi, j_hi):
        """True if any cell in the inclusive index box is blocked or off the map."""
        if i_lo < -1 or j_lo < -1 or i_hi > self.width or j_hi > self.height:
            return True
        t = self._integral
        # padded index = cell index + 1; table index = padded index + 1 for the upper bound
        total = t[j_hi + 2, i_hi + 2] - t[j_lo + 1, i_hi + 2] - t[j_hi + 2, i_lo + 1] + t[j_lo + 1, i_lo + 1]
        return bool(total)

    @cached_property
    def _blocked_ij(self):
        js, is_ = np.nonzero(self.blocked)
        return is_.astype(float), js.astype(float)

    @cached_property
    def obstacle_segments(self):
        """Merged blocked-edge segments, map boundary included; see obstacle_segments()."""
        return _build_obstacle_segments(self)

    def clear_mask(self, clearance):
        """Boolean [j, i] array: free cells whose center is farther than `clearance` from obstacles."""
        return _clear_mask(self, float(clearance))


# --- Map-file ingestion ---
def load_movingai_map(text, name=""):
    """
    Parses a MovingAI `.map` file body. `text` may be a string or a readable
    stream. Raises MapFormatError naming the 1-based line of the problem.
    """
    if hasattr(text, "read"):
        text = text.read()
    lines = text.splitlines()

    def header(index, keyword):
        if index >= len(lines):
            raise MapFormatError(f"missing '{keyword}' header", line=index + 1)
        parts = lines[index].split()
        if not parts or parts[0].lower() != keyword:
            raise MapFormatError(f"expected '{keyword}' header, found '{lines[index].strip()}'", line=index + 1)
        return parts

    type_parts = header(0, "type")
    if len(type_parts) != 2 or type_parts[1].lower() != "octile":
        raise MapFormatError("only 'type octile' maps are supported", line=1)
    dims = {}
    for index, keyword in ((1, "height"), (2, "width")):
        parts = header(index, keyword)
        try:
            value = int(parts[1]) if len(parts) == 2 else -1
        except ValueError:
            value = -1
        if value <= 0:
            raise MapFormatError(f"'{keyword}' must be a positive integer", line=index + 1)
        dims[keyword] = value
    if len(header(3, "map")) != 1:
        raise MapFormatError("unexpected tokens after 'map'", line=4)

    height, width = dims["height"], dims["width"]
    body = lines[4:]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != height:
        raise MapFormatError(f"expected {height} map rows, found {len(body)}", line=4 + min(len(body), height) + 1)

    blocked = np.zeros((height, width), dtype=bool)
    for j, row in enumerate(body):
        line_number = j + 5
        row = row.rstrip("\r")
        if len(row) != width:
            raise MapFormatError(f"row has {len(row)} cells, expected {width}", line=line_number)
        for i, char in enumerate(row):
            if char in BLOCKED_CHARS:
                blocked[j, i] = True
            elif char not in TRAVERSABLE_CHARS:
                raise MapFormatError(f"unknown cell character '{char}' at column {i}", line=line_number)
    return GridMap(width, height, blocked, name=name)


def read_movingai_map(path):
    with open(path, encoding="utf-8") as handle:
        try:
            return load_movingai_map(handle, name=_stem(path))
        except MapFormatError as exc:
            raise MapFormatError(exc.reason, line=exc.line, path=path) from exc


def to_movingai_text(grid):
    """Serialises a map; 'G' is written as '.', 'O'/'T' as '@'."""
    rows = ["".join("@" if cell else "." for cell in row) for row in grid.blocked]
    return "\n".join(["type octile", f"height {grid.height}", f"width {grid.width}", "map", *rows]) + "\n"


class ScenarioEntry(NamedTuple):
    bucket: int
    map_name: str
    width: int
    height: int
    start: Cell
    goal: Cell
    optimal_length: float


def load_movingai_scenario(text):
    """
    Parses a MovingAI `.scen` body: an optional `version` line followed by
    tab- or space-separated rows `bucket map width height sx sy gx gy length`.
    """
    if hasattr(text, "read"):
        text = text.read()
    entries = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or (number == 1 and line.lower().startswith("version")):
            continue
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) != 9:
            raise MapFormatError(f"expected 9 fields, found {len(parts)}", line=number)
        try:
            bucket, width, height, sx, sy, gx, gy = (int(parts[k]) for k in (0, 2, 3, 4, 5, 6, 7))
            optimal = float(parts[8])
        except ValueError:
            raise MapFormatError("non-numeric scenario field", line=number) from None
        entries.append(ScenarioEntry(bucket, parts[1], width, height, Cell(sx, sy), Cell(gx, gy), optimal))
    return entries


def to_movingai_scenario_text(entries):
    lines = ["version 1"]
    for entry in entries:
        lines.append("\t".join(str(v) for v in (
            entry.bucket, entry.map_name, entry.width, entry.height,
            entry.start[0], entry.start[1], entry.goal[0], entry.goal[1],
            f"{entry.optimal_length:.8f}",
        )))
    return "\n".join(lines) + "\n"


def _stem(path):
    name = str(path).replace("\\", "/").rsplit("/", 1)[-1]
    return name.rsplit(".", 1)[0] if "." in name else name


# --- Map generators ---
def generate_gaps_map(size, num_passages, wall_thickness=1, gap_width=1):
    """
    Two rooms separated by a vertical wall starting at column size // 2, with
    `num_passages` gaps whose first rows are floor(q * size / (num_passages + 1)).
    """
    if size < 8:
        raise ValueError("gaps maps need size >= 8.")
    if not 1 <= num_passages <= 4:
        raise ValueError("num_passages must be between 1 and 4.")
    if wall_thickness < 1 or gap_width < 1:
        raise ValueError("wall_thickness and gap_width must be at least 1.")
    blocked = np.zeros((size, size), dtype=bool)
    wall = size // 2
    blocked[:, wall:min(wall + wall_thickness, size - 1)] = True
    for q in range(1, num_passages + 1):
        row = (q * size) // (num_passages + 1)
        blocked[row:min(row + gap_width, size), :] = False
    return GridMap(size, size, blocked, name=f"gaps-{num_passages}")


def generate_rooms_map(size, room_size, door_width=1, seed=0):
    """
    Square rooms of side `room_size` separated by one-cell walls; every pair of
    adjacent rooms is joined by one door of `door_width` cells at a seeded
    random offset.
    """
    if room_size < 1 or size < room_size + 2:
        raise ValueError("rooms maps need size >= room_size + 2.")
    if not 1 <= door_width <= room_size:
        raise ValueError("door_width must be between 1 and room_size.")
    rng = np.random.default_rng(seed)
    pitch = room_size + 1
    blocked = np.zeros((size, size), dtype=bool)
    walls = list(range(room_size, size, pitch))
    for wall in walls:
        blocked[wall, :] = True
        blocked[:, wall] = True
    starts = list(range(0, size, pitch))
    for wall in walls:
        for start in starts:
            span = min(room_size, size - start)
            if span < door_width:
                continue
            offset = start + int(rng.integers(0, span - door_width + 1))
            # vertical wall at column `wall`, door spanning rows offset..offset+door_width
            blocked[offset:offset + door_width, wall] = False
            # horizontal wall at row `wall`
            offset = start + int(rng.integers(0, span - door_width + 1))
            blocked[wall, offset:offset + door_width] = False
    return GridMap(size, size, blocked, name=f"rooms-{size}-{room_size}")


# --- Geometry predicates ---
def _point_box_distance(x, y, bx0, by0, bx1, by1):
    dx = max(bx0 - x, 0.0, x - bx1)
    dy = max(by0 - y, 0.0, y - by1)
    return math.hypot(dx, dy)


def _point_segment_distance(px, py, x0, y0, x1, y1):
    dx, dy = x1 - x0, y1 - y0
    length_sq = dx * dx + dy * dy
    if length_sq == 0.0:
        return math.hypot(px - x0, py - y0)
    t = max(0.0, min(1.0, ((px - x0) * dx + (py - y0) * dy) / length_sq))
    return math.hypot(px - (x0 + t * dx), py - (y0 + t * dy))


def _segment_hits_box(x0, y0, x1, y1, bx0, by0, bx1, by1):
    """Liang-Barsky clip against the closed box."""
    t0, t1 = 0.0, 1.0
    dx, dy = x1 - x0, y1 - y0
    for p, q in ((-dx, x0 - bx0), (dx, bx1 - x0), (-dy, y0 - by0), (dy, by1 - y0)):
        if p == 0.0:
            if q < 0.0:
                return False
            continue
        r = q / p
        if p < 0.0:
            if r > t1:
                return False
            t0 = max(t0, r)
        else:
            if r < t0:
                return False
            t1 = min(t1, r)
    return t0 <= t1


def segment_box_distance(a, b, box):
    x0, y0 = a
    x1, y1 = b
    bx0, by0, bx1, by1 = box
    if _segment_hits_box(x0, y0, x1, y1, bx0, by0, bx1, by1):
        return 0.0
    return min(
        _point_box_distance(x0, y0, bx0, by0, bx1, by1),
        _point_box_distance(x1, y1, bx0, by0, bx1, by1),
        _point_segment_distance(bx0, by0, x0, y0, x1, y1),
        _point_segment_distance(bx1, by0, x0, y0, x1, y1),
        _point_segment_distance(bx0, by1, x0, y0, x1, y1),
        _point_segment_distance(bx1, by1, x0, y0, x1, y1),
    )


def line_of_sight(grid, a, b, clearance=0.0):
    """
    True iff the segment a-b inflated to a capsule of radius `clearance`
    touches no blocked cell (cells outside the map are blocked).

    Cells are enumerated column by column: for column i only the rows the
    capsule can reach inside [i - clearance, i + 1 + clearance] are visited,
    and each blocked candidate gets an exact segment-to-square distance test.
    A segment touching a blocked square counts as a hit even at clearance 0.
    """
    x0, y0 = float(a[0]), float(a[1])
    x1, y1 = float(b[0]), float(b[1])
    c = float(clearance)
    lo_x, hi_x = min(x0, x1), max(x0, x1)
    lo_y, hi_y = min(y0, y1), max(y0, y1)
    if not grid.any_blocked(
        math.floor(lo_x - c), math.floor(lo_y - c), math.floor(hi_x + c), math.floor(hi_y + c)
    ):
        return True
    for i in range(math.floor(lo_x - c), math.floor(hi_x + c) + 1):
        xa, xb = max(lo_x, i - c), min(hi_x, i + 1 + c)
        if xa > xb:
            continue
        if x1 == x0:
            ya, yb = y0, y1
        else:
            slope = (y1 - y0) / (x1 - x0)
            ya, yb = y0 + (xa - x0) * slope, y0 + (xb - x0) * slope
        j_lo, j_hi = math.floor(min(ya, yb) - c), math.floor(max(ya, yb) + c)
        for j in _blocked_rows(grid, i, j_lo, j_hi):
            distance = segment_box_distance((x0, y0), (x1, y1), (i, j, i + 1, j + 1))
            if distance <= 0.0 or distance < c:
                return False
    return True


def _blocked_rows(grid, i, j_lo, j_hi):
    if i < 0 or i >= grid.width:
        return range(j_lo, j_hi + 1)
    rows = list(range(j_lo, min(-1, j_hi) + 1))
    column = grid._column_rows[i]
    rows.extend(column[bisect.bisect_left(column, j_lo):bisect.bisect_right(column, j_hi)])
    rows.extend(range(max(grid.height, j_lo), j_hi + 1))
    return rows


def nearest_free_cell(grid, start, forbidden=(), bounds=None):
    """
    Breadth-first search over 4-connected cells from `start` (blocked cells are
    traversed but never returned). Returns the first free cell not in
    `forbidden`, optionally restricted to inclusive `bounds` = (min Cell, max Cell).
    """
    forbidden = set(forbidden)
    if bounds is None:
        low, high = Cell(0, 0), Cell(grid.width - 1, grid.height - 1)
    else:
        low, high = bounds

    def inside(cell):
        return low[0] <= cell[0] <= high[0] and low[1] <= cell[1] <= high[1]

    start = Cell(*start)
    if not inside(start):
        start = Cell(min(max(start[0], low[0]), high[0]), min(max(start[1], low[1]), high[1]))
    seen = {start}
    queue = collections.deque([start])
    while queue:
        cell = queue.popleft()
        if not grid.is_blocked(cell) and cell not in forbidden:
            return cell
        for di, dj in BFS_DIRECTIONS:
            nxt = Cell(cell[0] + di, cell[1] + dj)
            if nxt not in seen and inside(nxt):
                seen.add(nxt)
                queue.append(nxt)
    raise NoFreeCellError(f"No free cell reachable from {tuple(start)} within {tuple(low)}..{tuple(high)}.")


def distance_to_obstacles(grid, p, include_boundary=True):
    """Euclidean distance from `p` to the nearest blocked square (0 inside one)."""
    x, y = float(p[0]), float(p[1])
    best = math.inf
    if include_boundary:
        best = max(0.0, min(x, grid.width - x, y, grid.height - y))
    is_, js = grid._blocked_ij
    if is_.size:
        dx = np.maximum(np.maximum(is_ - x, 0.0), x - (is_ + 1.0))
        dy = np.maximum(np.maximum(js - y, 0.0), y - (js + 1.0))
        best = min(best, float(np.sqrt(dx * dx + dy * dy).min()))
    return best


def flood_fill(grid, start):
    """Free cells 4-connected to `start`."""
    start = Cell(*start)
    if grid.is_blocked(start):
        return set()
    reached = {start}
    queue = collections.deque([start])
    while queue:
        cell = queue.popleft()
        for nxt in grid.neighbors4(cell):
            if nxt not in reached and not grid.is_blocked(nxt):
                reached.add(nxt)
                queue.append(nxt)
    return reached


@lru_cache(maxsize=64)
def _clear_mask(grid, clearance):
    reach = int(math.ceil(clearance + 0.5))
    padded = np.pad(grid.blocked, reach, constant_values=True)
    clear = ~grid.blocked.copy()
    for dj in range(-reach, reach + 1):
        for di in range(-reach, reach + 1):
            if di == 0 and dj == 0:
                continue
            gap = math.hypot(max(abs(di) - 0.5, 0.0), max(abs(dj) - 0.5, 0.0))
            if gap > clearance:
                continue
            shifted = padded[reach + dj:reach + dj + grid.height, reach + di:reach + di + grid.width]
            clear &= ~shifted
    clear.flags.writeable = False
    return clear


class ObstacleSegments(NamedTuple):
    starts: np.ndarray
    ends: np.ndarray
    normals: np.ndarray

    def __len__(self):
        return len(self.starts)


def _build_obstacle_segments(grid):
    """
    Faces between a blocked (or out-of-map) cell and a free cell, merged into
    maximal collinear runs. Normals point into free space.
    """
    padded = np.pad(grid.blocked, 1, constant_values=True)
    starts, ends, normals = [], [], []

    def flush(run, fixed, horizontal, normal):
        if run is None:
            return
        lo, hi = run
        if horizontal:
            starts.append((lo, fixed))
            ends.append((hi, fixed))
        else:
            starts.append((fixed, lo))
            ends.append((fixed, hi))
        normals.append(normal)

    # horizontal faces on the line y = j, between rows j - 1 and j
    for j in range(grid.height + 1):
        above = padded[j, 1:-1]
        below = padded[j + 1, 1:-1]
        for normal_y, face in ((1.0, above & ~below), (-1.0, ~above & below)):
            run = None
            for i in range(grid.width):
                if face[i]:
                    run = (run[0], i + 1) if run is not None else (i, i + 1)
                else:
                    flush(run, j, True, (0.0, normal_y))
                    run = None
            flush(run, j, True, (0.0, normal_y))

    # vertical faces on the line x = i, between columns i - 1 and i
    for i in range(grid.width + 1):
        left = padded[1:-1, i]
        right = padded[1:-1, i + 1]
        for normal_x, face in ((1.0, left & ~right), (-1.0, ~left & right)):
            run = None
            for j in range(grid.height):
                if face[j]:
                    run = (run[0], j + 1) if run is not None else (j, j + 1)
                else:
                    flush(run, i, False, (normal_x, 0.0))
                    run = None
            flush(run, i, False, (normal_x, 0.0))

    logger.debug("Built %d obstacle segments for %r", len(starts), grid)
    return ObstacleSegments(
        np.array(starts, dtype=float).reshape(-1, 2),
        np.array(ends, dtype=float).reshape(-1, 2),
        np.array(normals, dtype=float).reshape(-1, 2),
    )
