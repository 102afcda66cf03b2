"""
Coordinated groups: deadlock-pattern detection, group formation, planning
areas, MAPF start/goal projection, synchronous plan execution and the
hand-back to individual mode.

The Coordinator owns every group of a run. It is called once per simulation
step, after individual velocities were chosen, and returns the velocities and
exact placements it wants applied to group members in the integration phase.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

from django.db.models import TextChoices

from .any_angle_planner import replan_segment
from .exceptions import NoFreeCellError, NoPathError
from .grid_world import Cell, Point, nearest_free_cell
from .mapf_push_rotate import MapfInstance, assign_action_duration, solve_push_and_rotate
from .orca_avoidance import AgentMode, OrcaParams, preferred_velocity_toward, step_velocity, visible_neighbors

logger = logging.getLogger(__name__)


class GroupPhase(TextChoices):
    FORMING = "forming", "Forming"
    MOVING_TO_STARTS = "moving_to_starts", "Moving to starts"
    EXECUTING = "executing", "Executing"


class CoordinationEvent(TextChoices):
    FORMATION = "formation", "Formation"
    MERGE = "merge", "Merge"
    INTRUDER = "intruder", "Intruder"
    EXECUTE = "execute", "Execute"
    DISSOLVE = "dissolve", "Dissolve"
    ABORT = "abort", "Abort"


class PlanningArea(NamedTuple):
    """Inclusive cell box."""
    min_corner: Cell
    max_corner: Cell

    @property
    def bounds(self):
        """Continuous (x_lo, y_lo, x_hi, y_hi)."""
        return (
            float(self.min_corner[0]), float(self.min_corner[1]),
            float(self.max_corner[0] + 1), float(self.max_corner[1] + 1),
        )

    def contains_point(self, point):
        x_lo, y_lo, x_hi, y_hi = self.bounds
        return x_lo <= point[0] <= x_hi and y_lo <= point[1] <= y_hi

    def contains_cell(self, cell):
        return (
            self.min_corner[0] <= cell[0] <= self.max_corner[0]
            and self.min_corner[1] <= cell[1] <= self.max_corner[1]
        )

    def overlaps(self, other):
        return not (
            self.max_corner[0] < other.min_corner[0] or other.max_corner[0] < self.min_corner[0]
            or self.max_corner[1] < other.min_corner[1] or other.max_corner[1] < self.min_corner[1]
        )

    def as_list(self):
        return [list(self.min_corner), list(self.max_corner)]


class ProjectedGoal(NamedTuple):
    cell: Cell
    cursor: int


@dataclass
class CoordinatedGroup:
    id: int
    members: tuple
    initiator: int
    trigger_goal: "Point | None" = None
    area: "PlanningArea | None" = None
    instance: "MapfInstance | None" = None
    plan: object = None
    phase: str = GroupPhase.FORMING
    exec_index: int = 0
    exec_steps: int = 0
    goals: dict = field(default_factory=dict)
    timeline: list = field(default_factory=list)

    @property
    def starts(self):
        return dict(zip(self.members, self.instance.starts)) if self.instance else {}

    def expected_position(self, member, steps, dt):
        """Interpolated world position of `member` after `steps` executing steps."""
        index = self.members.index(member)
        elapsed = steps * dt / self.plan.action_duration
        k = min(int(math.floor(elapsed + 1e-9)), self.plan.length)
        here = _center(self.timeline[k][index])
        if k >= self.plan.length:
            return here
        fraction = min(max(elapsed - k, 0.0), 1.0)
        there = _center(self.timeline[k + 1][index])
        return Point(here[0] + (there[0] - here[0]) * fraction, here[1] + (there[1] - here[1]) * fraction)

    @property
    def execution_finished(self):
        return self.plan is not None and self.exec_index >= self.plan.length


def _center(cell):
    return Point(cell[0] + 0.5, cell[1] + 0.5)


# --- Detection and formation ---
def detect_trigger(agent, visible, k):
    """True iff the agent's local goal and at least k other agents are within its visibility range."""
    return math.dist(agent.position, agent.local_goal) <= agent.visibility_range and len(visible) >= k


def form_group(initiator, agents):
    """Closed 2-hop visibility neighbourhood of the initiator, each agent using its own range."""
    members = {initiator.id}
    first_hop = visible_neighbors(initiator, agents)
    members.update(a.id for a in first_hop)
    for neighbour in first_hop:
        members.update(a.id for a in visible_neighbors(neighbour, agents))
    return members


def compute_planning_area(positions, r_init, grid, square=True):
    """
    Bounding box of `positions`, expanded to a square about its center when
    `square` is set, inflated by `r_init` on all sides and clipped to the map.
    """
    if not positions:
        raise ValueError("A planning area needs at least one position.")
    xs = [p[0] for p in positions]
    ys = [p[1] for p in positions]
    x_lo, x_hi, y_lo, y_hi = min(xs), max(xs), min(ys), max(ys)
    if square:
        half = max(x_hi - x_lo, y_hi - y_lo) / 2.0
        cx, cy = (x_lo + x_hi) / 2.0, (y_lo + y_hi) / 2.0
        x_lo, x_hi, y_lo, y_hi = cx - half, cx + half, cy - half, cy + half
    x_lo, y_lo, x_hi, y_hi = x_lo - r_init, y_lo - r_init, x_hi + r_init, y_hi + r_init
    low = Cell(max(int(math.floor(x_lo)), 0), max(int(math.floor(y_lo)), 0))
    high = Cell(min(int(math.ceil(x_hi)) - 1, grid.width - 1), min(int(math.ceil(y_hi)) - 1, grid.height - 1))
    return PlanningArea(low, Cell(max(high[0], low[0]), max(high[1], low[1])))


def _clamp_cell(cell, area):
    return Cell(
        min(max(cell[0], area.min_corner[0]), area.max_corner[0]),
        min(max(cell[1], area.min_corner[1]), area.max_corner[1]),
    )


def _claim(grid, candidate, area, taken):
    if grid.is_blocked(candidate) or candidate in taken:
        candidate = nearest_free_cell(grid, candidate, forbidden=taken, bounds=area)
    taken.add(candidate)
    return candidate


def project_starts(members, area, grid):
    """
    MAPF start per member in ascending id order: the containing cell, or the
    BFS-nearest free cell inside the area when that one is blocked or taken.
    Raises NoFreeCellError when the area runs out of cells.
    """
    taken = set()
    starts = {}
    for agent in sorted(members, key=lambda a: a.id):
        starts[agent.id] = _claim(grid, _clamp_cell(grid.cell_of(agent.position), area), area, taken)
    return starts


def project_goals(members, area, grid, trigger_goal=None):
    """
    MAPF goal per member from its current local goal. A local goal equal to
    the initiator's trigger goal is replaced by its successor waypoint when
    there is one. Coordinates outside the area are clamped onto it.
    """
    x_lo, y_lo, x_hi, y_hi = area.bounds
    taken = set()
    goals = {}
    for agent in sorted(members, key=lambda a: a.id):
        cursor = agent.cursor
        waypoint = agent.local_goal
        if agent.path is not None:
            cursor = min(cursor, len(agent.path.waypoints) - 1)
            if (
                trigger_goal is not None
                and math.dist(waypoint, trigger_goal) <= 1e-9
                and cursor + 1 < len(agent.path.waypoints)
            ):
                cursor += 1
                waypoint = agent.path.waypoints[cursor]
        clamped = (min(max(waypoint[0], x_lo), x_hi), min(max(waypoint[1], y_lo), y_hi))
        cell = _clamp_cell(grid.cell_of(clamped), area)
        goals[agent.id] = ProjectedGoal(_claim(grid, cell, area, taken), cursor)
    return goals


# --- Group lifecycle ---
class Coordinator:
    """All coordinated groups of one run, plus the event log."""

    def __init__(self, grid, config, params=None):
        self.grid = grid
        self.config = config
        self.params = params or OrcaParams.from_config(config)
        self.groups = {}
        self.events = []
        self._next_id = 0

    # Event log
    def _record(self, step, event, group, members=None):
        record = {
            "step": step,
            "event": str(event),
            "group": group.id,
            "members": sorted(members if members is not None else group.members),
            "area": group.area.as_list() if group.area else None,
        }
        self.events.append(record)
        logger.info("Step %d: group %d %s %s", step, group.id, event, record["members"])

    def event_counts(self):
        counts = {}
        for record in self.events:
            counts[record["event"]] = counts.get(record["event"], 0) + 1
        return counts

    def group_of(self, agent):
        return self.groups.get(agent.group_id) if agent.group_id is not None else None

    # Planning
    def _plan(self, group, by_id, step):
        """Builds area, instance and plan from current positions; False if the group had to be dissolved."""
        members = [by_id[m] for m in group.members]
        positions = [a.position for a in members]
        r_init = by_id[group.initiator].visibility_range
        for attempt in range(2):
            area = compute_planning_area(positions, r_init * (attempt + 1), self.grid, self.config.square_area)
            group.area = area
            try:
                starts = project_starts(members, area, self.grid)
                goals = project_goals(members, area, self.grid, group.trigger_goal)
            except NoFreeCellError as exc:
                logger.warning("Group %d: %s", group.id, exc)
                break
            instance = MapfInstance.from_grid_area(
                self.grid, area.min_corner, area.max_corner,
                [starts[m] for m in group.members], [goals[m].cell for m in group.members], group.members,
            )
            plan = solve_push_and_rotate(instance)
            if not plan:
                logger.warning("Group %d: MAPF infeasible on attempt %d (%s)", group.id, attempt + 1, plan.reason)
                continue
            group.instance = instance
            group.plan = assign_action_duration(plan, self.config.max_speed, self.grid.cell_size)
            group.timeline = group.plan.positions(instance.starts)
            group.goals = goals
            group.phase = GroupPhase.MOVING_TO_STARTS
            group.exec_index = 0
            group.exec_steps = 0
            for agent in members:
                agent.mode = AgentMode.COORDINATED
                agent.group_id = group.id
                agent.executing = False
            return True
        self._dissolve(group, by_id, step, CoordinationEvent.ABORT, self.config.formation_cooldown)
        return False

    def _dissolve(self, group, by_id, step, event, cooldown, positions=None):
        self._record(step, event, group)
        for member in group.members:
            agent = by_id[member]
            agent.mode = AgentMode.INDIVIDUAL
            agent.group_id = None
            agent.executing = False
            agent.cooldown = cooldown
            projected = group.goals.get(member)
            if event == CoordinationEvent.DISSOLVE and projected is not None and agent.path is not None:
                agent.cursor = projected.cursor
                try:
                    start = (positions or {}).get(member, agent.position)
                    agent.path = replan_segment(
                        self.grid, start, agent.local_goal, agent.path, agent.cursor, self.config.clearance,
                    )
                except NoPathError as exc:
                    logger.warning("Agent %d keeps its path after dissolve: %s", member, exc)
        self.groups.pop(group.id, None)

    def _absorb(self, survivor, others, extra):
        members = set(survivor.members) | set(extra)
        for other in others:
            members |= set(other.members)
            self.groups.pop(other.id, None)
        survivor.members = tuple(sorted(members))
        survivor.plan = None
        survivor.phase = GroupPhase.FORMING

    # Per-step entry point
    def run_phase(self, step, agents, snapshot):
        """
        Triggers, formations, merges, intruders and group advancement for one
        step. Returns (velocities, placements) for group members.
        """
        by_id = {a.id: a for a in agents}
        self._formation(step, agents, snapshot, by_id)
        self._intruders(step, agents, by_id)
        self._executing_merges(step, by_id)
        velocities, placements = {}, {}
        for group_id in sorted(self.groups):
            group = self.groups.get(group_id)
            if group is not None:
                moved, placed = self.advance_group(group, by_id, snapshot, step)
                velocities.update(moved)
                placements.update(placed)
        return velocities, placements

    def _formation(self, step, agents, snapshot, by_id):
        k = self.config.trigger_k
        for agent in sorted(agents, key=lambda a: a.id):
            if not agent.is_individual or agent.cooldown > 0 or agent.arrived_step is not None:
                continue
            visible = visible_neighbors(agent, snapshot)
            if not detect_trigger(agent, visible, k):
                continue
            members = form_group(agent, snapshot)
            involved = {by_id[m].group_id for m in members if by_id[m].group_id is not None}
            positions = [by_id[m].position for m in members]
            area = compute_planning_area(positions, agent.visibility_range, self.grid, self.config.square_area)
            involved |= {g.id for g in self.groups.values() if g.area is not None and g.area.overlaps(area)}
            if involved:
                survivor = self.groups[min(involved)]
                self._absorb(survivor, [self.groups[g] for g in sorted(involved) if g != survivor.id], members)
                survivor.initiator = agent.id
                survivor.trigger_goal = agent.local_goal
                self._record(step, CoordinationEvent.MERGE, survivor)
                self._plan(survivor, by_id, step)
            else:
                group = CoordinatedGroup(self._next_id, tuple(sorted(members)), agent.id, agent.local_goal)
                self._next_id += 1
                self.groups[group.id] = group
                self._record(step, CoordinationEvent.FORMATION, group)
                self._plan(group, by_id, step)
            # one initiator per step
            return

    def _intruders(self, step, agents, by_id):
        for group_id in sorted(self.groups):
            group = self.groups.get(group_id)
            if group is None or group.area is None:
                continue
            intruders = self.find_intruders(group, agents, by_id)
            if intruders:
                self.handle_intruder(group, intruders, by_id, step)

    def find_intruders(self, group, agents, by_id):
        members = [by_id[m] for m in group.members]
        found = []
        for agent in sorted(agents, key=lambda a: a.id):
            if not agent.is_individual or not group.area.contains_point(agent.position):
                continue
            if any(math.dist(agent.position, m.position) <= m.visibility_range for m in members):
                found.append(agent.id)
        return found

    def handle_intruder(self, group, intruders, by_id, step):
        """Stops execution, adds the intruders and re-plans from current positions."""
        self._absorb(group, [], intruders)
        self._record(step, CoordinationEvent.INTRUDER, group, intruders)
        return self._plan(group, by_id, step)

    def _executing_merges(self, step, by_id):
        changed = True
        while changed:
            changed = False
            executing = [g for _, g in sorted(self.groups.items()) if g.phase == GroupPhase.EXECUTING]
            for first, second in ((a, b) for i, a in enumerate(executing) for b in executing[i + 1:]):
                if self._sees(first, second, by_id):
                    self.merge_groups(first, second, by_id, step)
                    changed = True
                    break

    def _sees(self, first, second, by_id):
        """True when a member of either group has a member of the other inside its own visibility range."""
        for a in first.members:
            for b in second.members:
                pa, pb = by_id[a], by_id[b]
                if math.dist(pa.position, pb.position) <= max(pa.visibility_range, pb.visibility_range):
                    return True
        return False

    def merge_groups(self, first, second, by_id, step):
        """Union of both groups under the lower id, re-planned from current positions."""
        survivor, other = (first, second) if first.id < second.id else (second, first)
        self._absorb(survivor, [other], ())
        self._record(step, CoordinationEvent.MERGE, survivor)
        self._plan(survivor, by_id, step)
        return survivor

    # Execution
    def advance_group(self, group, by_id, snapshot, step):
        """
        Moves the group one step forward. MovingToStarts members steer with
        ORCA toward their start centers; once all are within the arrival
        epsilon they settle onto the centers and execution begins. Executing
        members follow the interpolated plan without ORCA.
        """
        dt = self.config.dt
        velocities, placements = {}, {}
        if group.phase == GroupPhase.MOVING_TO_STARTS:
            starts = group.starts
            members = [by_id[m] for m in group.members]
            if all(math.dist(a.position, _center(starts[a.id])) <= self.config.start_epsilon for a in members):
                for agent in members:
                    placements[agent.id] = _center(starts[agent.id])
                    agent.executing = True
                group.phase = GroupPhase.EXECUTING
                self._record(step, CoordinationEvent.EXECUTE, group)
                return velocities, placements
            for agent in members:
                agent.preferred_velocity = preferred_velocity_toward(
                    agent.position, _center(starts[agent.id]), agent.max_speed, dt,
                )
                velocities[agent.id] = step_velocity(agent, snapshot, self.grid, dt, self.params)
            return velocities, placements

        if group.phase == GroupPhase.EXECUTING:
            tolerance = self.config.trajectory_tolerance
            for member in group.members:
                expected = group.expected_position(member, group.exec_steps, dt)
                if math.dist(by_id[member].position, expected) > tolerance:
                    logger.warning("Group %d: member %d left its trajectory; re-planning", group.id, member)
                    self._record(step, CoordinationEvent.ABORT, group, [member])
                    self._plan(group, by_id, step)
                    return velocities, placements
            group.exec_steps += 1
            elapsed = group.exec_steps * dt / group.plan.action_duration
            group.exec_index = min(int(math.floor(elapsed + 1e-9)), group.plan.length)
            for member in group.members:
                placements[member] = group.expected_position(member, group.exec_steps, dt)
            if group.execution_finished:
                self._dissolve(
                    group, by_id, step, CoordinationEvent.DISSOLVE, self.config.dissolve_cooldown, placements,
                )
        return velocities, placements
