"""
Individual path planning on the grid.

Theta* searches over cell centers with 8-connected expansion and line-of-sight
parent shortcuts; its waypoints become the local goals ORCA steers toward.
Plain 8-connected A* is kept alongside as the comparison planner.
"""
import heapq
import logging
import math
from dataclasses import dataclass

from .exceptions import NoPathError
from .grid_world import Cell, Point, line_of_sight

logger = logging.getLogger(__name__)

MOVES_8 = ((1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, 1), (-1, -1), (1, -1))


@dataclass(frozen=True)
class Path:
    """Waypoints in world coordinates; consecutive pairs see each other at `clearance`."""
    waypoints: tuple
    clearance: float = 0.0

    def __post_init__(self):
        if not self.waypoints:
            raise ValueError("A path needs at least one waypoint.")
        object.__setattr__(self, "waypoints", tuple(Point(float(x), float(y)) for x, y in self.waypoints))

    def __len__(self):
        return len(self.waypoints)

    def __getitem__(self, index):
        return self.waypoints[index]

    @property
    def start(self):
        return self.waypoints[0]

    @property
    def goal(self):
        return self.waypoints[-1]

    @property
    def length(self):
        return path_length(self.waypoints)

    def is_visible_chain(self, grid):
        return all(
            line_of_sight(grid, a, b, self.clearance)
            for a, b in zip(self.waypoints, self.waypoints[1:])
        )


@dataclass
class SearchNode:
    cell: Cell
    g: float
    parent: "SearchNode | None" = None


def path_length(points):
    return sum(math.dist(a, b) for a, b in zip(points, points[1:]))


def _euclid(a, b):
    return math.hypot(a[0] - b[0], a[1] - b[1])


class _GridSearch:
    """Shared open-list bookkeeping for the two planners."""

    def __init__(self, grid, clearance):
        self.grid = grid
        self.clearance = clearance
        self.clear = grid.clear_mask(clearance)
        self._los_cache = {}

    def passable(self, i, j):
        return 0 <= i < self.grid.width and 0 <= j < self.grid.height and bool(self.clear[j, i])

    def successors(self, cell):
        i, j = cell
        for di, dj in MOVES_8:
            ni, nj = i + di, j + dj
            if not self.passable(ni, nj):
                continue
            # no corner cutting: both orthogonal cells must be passable too
            if di and dj and not (self.passable(i + di, j) and self.passable(i, j + dj)):
                continue
            yield Cell(ni, nj)

    def visible(self, a, b):
        key = (a, b) if a <= b else (b, a)
        if key not in self._los_cache:
            self._los_cache[key] = line_of_sight(
                self.grid, self.grid.cell_center(a), self.grid.cell_center(b), self.clearance
            )
        return self._los_cache[key]

    def endpoints(self, start, goal):
        start_cell, goal_cell = self.grid.cell_of(start), self.grid.cell_of(goal)
        for label, cell in (("start", start_cell), ("goal", goal_cell)):
            if not self.passable(*cell):
                raise NoPathError(
                    f"The {label} cell {tuple(cell)} is not traversable at clearance {self.clearance}."
                )
        return start_cell, goal_cell

    def run(self, start_cell, goal_cell, any_angle):
        """Returns the list of cells from start to goal."""
        goal_center = self.grid.cell_center(goal_cell)
        nodes = {start_cell: SearchNode(start_cell, 0.0)}
        nodes[start_cell].parent = nodes[start_cell]
        open_list = [(_euclid(self.grid.cell_center(start_cell), goal_center), -0.0, start_cell[0], start_cell[1])]
        closed = set()
        expansions = 0
        while open_list:
            f, neg_g, i, j = heapq.heappop(open_list)
            cell = Cell(i, j)
            node = nodes[cell]
            if cell in closed or -neg_g > node.g + 1e-12:
                continue
            if cell == goal_cell:
                logger.debug("Search reached %s after %d expansions", tuple(goal_cell), expansions)
                return self._cells(node)
            closed.add(cell)
            expansions += 1
            for successor in self.successors(cell):
                if successor in closed:
                    continue
                parent = node.parent
                if any_angle and self.visible(parent.cell, successor):
                    candidate = parent.g + _euclid(parent.cell, successor)
                else:
                    parent = node
                    candidate = node.g + _euclid(cell, successor)
                known = nodes.get(successor)
                if known is None or candidate < known.g - 1e-12:
                    nodes[successor] = SearchNode(successor, candidate, parent)
                    h = _euclid(self.grid.cell_center(successor), goal_center)
                    heapq.heappush(open_list, (candidate + h, -candidate, successor[0], successor[1]))
        raise NoPathError(
            f"No path from {tuple(start_cell)} to {tuple(goal_cell)} at clearance {self.clearance}."
        )

    @staticmethod
    def _cells(node):
        cells = [node.cell]
        while node.parent is not node:
            node = node.parent
            cells.append(node.cell)
        cells.reverse()
        return cells

    def attach(self, start, goal, cells):
        """
        Joins the continuous endpoints to the chain of cell centers, dropping
        centers that are not needed. A start that cannot see its own cell
        center at the clearance is replaced by that center.
        """
        centers = [self.grid.cell_center(c) for c in cells]
        start = Point(*start)
        if not line_of_sight(self.grid, start, centers[0], self.clearance):
            logger.debug("Start %s is too close to an obstacle; path starts at %s", tuple(start), tuple(centers[0]))
            start = centers[0]
        points = [start] + centers + [Point(*goal)]
        if len(points) > 2 and line_of_sight(self.grid, points[0], points[2], self.clearance):
            del points[1]
        if len(points) > 2 and line_of_sight(self.grid, points[-3], points[-1], self.clearance):
            del points[-2]
        deduped = [points[0]]
        for point in points[1:]:
            if _euclid(point, deduped[-1]) > 1e-12:
                deduped.append(point)
        return deduped


def plan_theta_star(grid, start, goal, clearance):
    """
    Any-angle path from `start` to `goal` keeping `clearance` from obstacles.

    Open-list ties go to smaller f, then larger g, then smaller (i, j).
    Raises NoPathError when the goal is unreachable at this clearance.
    """
    search = _GridSearch(grid, clearance)
    start_cell, goal_cell = search.endpoints(start, goal)
    cells = search.run(start_cell, goal_cell, any_angle=True)
    return Path(tuple(search.attach(start, goal, cells)), clearance)


def plan_grid_astar(grid, start, goal, clearance):
    """8-connected A* under the same clearance and corner rules; collinear runs are merged."""
    search = _GridSearch(grid, clearance)
    start_cell, goal_cell = search.endpoints(start, goal)
    cells = search.run(start_cell, goal_cell, any_angle=False)
    turns = [cells[0]]
    for previous, current, following in zip(cells, cells[1:], cells[2:]):
        if (current[0] - previous[0], current[1] - previous[1]) != (following[0] - current[0], following[1] - current[1]):
            turns.append(current)
    if len(cells) > 1:
        turns.append(cells[-1])
    return Path(tuple(search.attach(start, goal, turns)), clearance)


def replan_segment(grid, current, local_goal, path, cursor, clearance):
    """
    Re-plans from `current` to the local goal when it is no longer visible and
    splices the new intermediate waypoints in front of `cursor`.
    """
    if line_of_sight(grid, current, local_goal, clearance):
        return path
    detour = plan_theta_star(grid, current, local_goal, clearance)
    # a detour that starts at the cell center leads the agent there first
    inserted = detour.waypoints[1:-1] if detour.start == Point(*current) else detour.waypoints[:-1]
    logger.info(
        "Re-planned toward %s: %d waypoint(s) inserted at index %d",
        tuple(local_goal), len(inserted), cursor,
    )
    waypoints = path.waypoints[:cursor] + inserted + path.waypoints[cursor:]
    return Path(waypoints, path.clearance)
