"""
Deterministic discrete-time stepper tying planning, avoidance and
coordination together.

Each step runs in fixed phases: freeze a snapshot, choose velocities for
individual agents, run the coordination phase, integrate positions, audit
collisions and goal arrivals, advance the step counter.
"""
import copy
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from django.db.models import TextChoices

from .any_angle_planner import plan_theta_star, replan_segment
from .coordination import Coordinator
from .exceptions import NoPathError
from .grid_world import Point, distance_to_obstacles, line_of_sight
from .orca_avoidance import AgentMode, AgentState, OrcaParams, preferred_velocity_toward, step_velocity

logger = logging.getLogger(__name__)

TRACE_FIELDS = ("step", "agent", "x", "y", "vx", "vy", "mode", "group")


class Outcome(TextChoices):
    SUCCESS = "success", "Success"
    FAILURE = "failure", "Failure"


class FailureReason(TextChoices):
    TIMEOUT = "timeout", "Timeout"
    COLLISION = "collision", "Collision"
    NO_PATH = "no_path", "No path"
    INTERNAL = "internal", "Internal"


@dataclass
class RunResult:
    outcome: str
    reason: "str | None" = None
    steps_used: int = 0
    makespan: float = 0.0
    flowtime: float = 0.0
    arrival_steps: dict = field(default_factory=dict)
    event_counts: dict = field(default_factory=dict)
    orca_calls_while_executing: int = 0
    detail: str = ""

    @property
    def success(self):
        return self.outcome == Outcome.SUCCESS

    def summary(self):
        status = "Success" if self.success else f"Failure({FailureReason(self.reason).label})"
        events = ", ".join(f"{k}={v}" for k, v in sorted(self.event_counts.items())) or "none"
        text = (
            f"{status} after {self.steps_used} steps; makespan {self.makespan:.2f}, "
            f"flowtime {self.flowtime:.2f}; coordination events: {events}"
        )
        return f"{text}; {self.detail}" if self.detail else text


@dataclass
class SimState:
    grid: object
    config: object
    agents: list
    coordinator: "Coordinator | None" = None
    step: int = 0
    result: "RunResult | None" = None
    params: "OrcaParams | None" = None

    @property
    def is_terminal(self):
        return self.result is not None

    def snapshot(self):
        """Trace records for the current step, in agent id order."""
        records = []
        for agent in self.agents:
            group = agent.group_id if agent.group_id is not None else -1
            records.append({
                "step": self.step,
                "agent": agent.id,
                "x": agent.position[0],
                "y": agent.position[1],
                "vx": agent.velocity[0],
                "vy": agent.velocity[1],
                "mode": str(agent.mode),
                "group": group,
            })
        return records


class TraceWriter:
    """Line-delimited JSON trace, one object per (step, agent), keys in TRACE_FIELDS order."""

    def __init__(self, handle):
        self.handle = handle
        self.records = 0

    def write(self, records):
        for record in records:
            self.handle.write(json.dumps({key: record[key] for key in TRACE_FIELDS}) + "\n")
            self.records += 1


def read_trace(handle):
    return [json.loads(line) for line in handle if line.strip()]


# --- Setup ---
def init_run(grid, starts, goals, config):
    """Creates the agents and plans every initial path at the planning clearance."""
    if len(starts) != len(goals):
        raise ValueError("Every start needs a goal.")
    config.validate()
    agents = []
    state = SimState(grid, config, agents, params=OrcaParams.from_config(config))
    for index, (start, goal) in enumerate(zip(starts, goals)):
        agent = AgentState(
            id=index, position=Point(*start), goal=Point(*goal),
            radius=config.agent_radius, max_speed=config.max_speed,
            visibility_range=config.visibility_range,
        )
        agents.append(agent)
        try:
            agent.path = plan_theta_star(grid, agent.position, agent.goal, config.clearance)
        except NoPathError as exc:
            logger.info("Agent %d has no initial path: %s", index, exc)
            state.result = RunResult(Outcome.FAILURE, FailureReason.NO_PATH, detail=f"agent {index}: {exc}")
            return state
        # a path moved to the cell center starts with that center as the first local goal
        agent.cursor = 1 if len(agent.path) > 1 and agent.path.start == agent.position else 0
    if config.coordination_enabled:
        state.coordinator = Coordinator(grid, config, state.params)
    _audit_arrivals(state)
    return state


# --- Phases ---
def _individual_velocity(state, agent, snapshot):
    config, grid = state.config, state.grid
    path = agent.path
    last = len(path.waypoints) - 1
    while agent.cursor < last and math.dist(agent.position, path.waypoints[agent.cursor]) <= config.waypoint_epsilon:
        agent.cursor += 1
    local_goal = agent.local_goal
    if not line_of_sight(grid, agent.position, local_goal, agent.radius):
        agent.path = replan_segment(grid, agent.position, local_goal, path, agent.cursor, config.clearance)
        local_goal = agent.local_goal
    agent.preferred_velocity = preferred_velocity_toward(agent.position, local_goal, agent.max_speed, config.dt)
    return step_velocity(agent, snapshot, grid, config.dt, state.params)


def _integrate(state, velocities, placements):
    dt = state.config.dt
    previous = {}
    for agent in state.agents:
        old = agent.position
        previous[agent.id] = old
        if agent.id in placements:
            new = placements[agent.id]
            agent.velocity = ((new[0] - old[0]) / dt, (new[1] - old[1]) / dt)
        else:
            velocity = velocities.get(agent.id, (0.0, 0.0))
            agent.velocity = (float(velocity[0]), float(velocity[1]))
            new = (old[0] + agent.velocity[0] * dt, old[1] + agent.velocity[1] * dt)
        agent.position = Point(float(new[0]), float(new[1]))
    return previous


def _pairwise_collision(state, previous):
    """First pair (by ids) closer than the sum of physical radii, at the step or while moving."""
    agents = state.agents
    if len(agents) < 2:
        return None
    before = np.array([previous[a.id] for a in agents], dtype=float)
    after = np.array([a.position for a in agents], dtype=float)
    radii = np.array([a.radius for a in agents], dtype=float)
    first, second = np.triu_indices(len(agents), k=1)
    d0 = before[first] - before[second]
    d1 = after[first] - after[second]
    change = d1 - d0
    denominator = np.einsum("ij,ij->i", change, change)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(denominator > 1e-18, -np.einsum("ij,ij->i", d0, change) / denominator, 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = d0 + change * t[:, None]
    gaps = np.hypot(closest[:, 0], closest[:, 1]) - (radii[first] + radii[second])
    end_gaps = np.hypot(d1[:, 0], d1[:, 1]) - (radii[first] + radii[second])
    hits = np.flatnonzero((np.minimum(gaps, end_gaps) < -1e-9))
    if not hits.size:
        return None
    k = hits[0]
    return agents[first[k]].id, agents[second[k]].id, float(np.hypot(*d1[k]))


def _touches_obstacle(grid, point, radius):
    x, y = point
    if not grid.any_blocked(
        math.floor(x - radius), math.floor(y - radius), math.floor(x + radius), math.floor(y + radius)
    ):
        return False
    return distance_to_obstacles(grid, point) <= radius - 1e-9


def _audit_arrivals(state):
    for agent in state.agents:
        if math.dist(agent.position, agent.goal) <= state.config.goal_epsilon:
            if agent.arrived_step is None:
                agent.arrived_step = state.step
        else:
            agent.arrived_step = None
    return all(agent.arrived_step is not None for agent in state.agents)


def _finish(state, outcome, reason=None, detail=""):
    dt = state.config.dt
    arrivals = {a.id: a.arrived_step for a in state.agents if a.arrived_step is not None}
    coordinator = state.coordinator
    state.result = RunResult(
        outcome=outcome,
        reason=reason,
        steps_used=state.step,
        makespan=max(arrivals.values(), default=0) * dt,
        flowtime=sum(arrivals.values()) * dt,
        arrival_steps=arrivals,
        event_counts=coordinator.event_counts() if coordinator else {},
        orca_calls_while_executing=sum(a.orca_calls_while_executing for a in state.agents),
        detail=detail,
    )
    logger.info("Run finished at step %d: %s", state.step, state.result.summary())
    return state


def step(state):
    """Advances the state by one step; sets `state.result` when the run ends."""
    if state.is_terminal:
        return state
    snapshot = [copy.copy(agent) for agent in state.agents]

    velocities = {}
    for agent in state.agents:
        if agent.is_individual:
            try:
                velocities[agent.id] = _individual_velocity(state, agent, snapshot)
            except NoPathError as exc:
                logger.info("Agent %d could not re-plan at step %d: %s", agent.id, state.step, exc)
                return _finish(state, Outcome.FAILURE, FailureReason.NO_PATH, f"agent {agent.id}: {exc}")

    placements = {}
    if state.coordinator is not None:
        coordinated, placements = state.coordinator.run_phase(state.step, state.agents, snapshot)
        velocities.update(coordinated)

    previous = _integrate(state, velocities, placements)
    state.step += 1
    for agent in state.agents:
        if agent.cooldown > 0:
            agent.cooldown -= 1

    collision = _pairwise_collision(state, previous)
    if collision is not None:
        a, b, distance = collision
        return _finish(state, Outcome.FAILURE, FailureReason.COLLISION,
                       f"agents {a} and {b} collided (distance {distance:.3f})")
    for agent in state.agents:
        if _touches_obstacle(state.grid, agent.position, agent.radius):
            return _finish(state, Outcome.FAILURE, FailureReason.COLLISION,
                           f"agent {agent.id} touched an obstacle at ({agent.position[0]:.3f}, {agent.position[1]:.3f})")
    if _audit_arrivals(state):
        return _finish(state, Outcome.SUCCESS)
    if state.step >= state.config.max_steps:
        return _finish(state, Outcome.FAILURE, FailureReason.TIMEOUT)
    return state


def run_to_completion(state, trace=None):
    """Steps until the run ends. `trace` is an optional TraceWriter fed every step."""
    if trace is not None:
        trace.write(state.snapshot())
    if state.is_terminal:
        return state.result
    if all(a.arrived_step is not None for a in state.agents):
        return _finish(state, Outcome.SUCCESS).result
    while not state.is_terminal:
        step(state)
        if trace is not None:
            trace.write(state.snapshot())
    return state.result


def simulate(grid, starts, goals, config, trace=None):
    return run_to_completion(init_run(grid, starts, goals, config), trace)


def executing_agents(state):
    return [a for a in state.agents if a.mode == AgentMode.COORDINATED and a.executing]
