"""
Optimal Reciprocal Collision Avoidance.

Each neighbour and each nearby wall segment contributes one half-plane of
permitted velocities; the new velocity is the point of their intersection
(inside the speed disc) closest to the preferred velocity, found with the
incremental 2D linear program. When the half-planes have no common point the
velocity that minimises the largest violation is used instead, wall
constraints staying hard.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from django.db.models import TextChoices

from .grid_world import Point

logger = logging.getLogger(__name__)

EPSILON = 1e-9


class AgentMode(TextChoices):
    INDIVIDUAL = "individual", "Individual"
    COORDINATED = "coordinated", "Coordinated"


@dataclass
class AgentState:
    """
    Kinematic and bookkeeping state of one disc agent.

    `radius` is the physical radius; the ORCA and planning radius adds the
    configured safe buffer on top. `cursor` indexes the current local goal in
    `path.waypoints`.
    """
    id: int
    position: Point
    goal: Point
    radius: float = 0.3
    max_speed: float = 1.0
    visibility_range: float = 3.0
    velocity: tuple = (0.0, 0.0)
    preferred_velocity: tuple = (0.0, 0.0)
    mode: str = AgentMode.INDIVIDUAL
    group_id: "int | None" = None
    executing: bool = False
    path: object = None
    cursor: int = 0
    cooldown: int = 0
    arrived_step: "int | None" = None
    trigger_goal: "Point | None" = None
    orca_calls_while_executing: int = field(default=0, repr=False)

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("Agent radius must be positive.")
        if self.visibility_range <= self.radius:
            raise ValueError("Visibility range must exceed the agent radius.")
        self.position = Point(float(self.position[0]), float(self.position[1]))
        self.goal = Point(float(self.goal[0]), float(self.goal[1]))

    @property
    def is_individual(self):
        return self.mode == AgentMode.INDIVIDUAL

    @property
    def local_goal(self):
        if self.path is None:
            return self.goal
        return self.path.waypoints[min(self.cursor, len(self.path.waypoints) - 1)]

    @property
    def speed(self):
        return math.hypot(*self.velocity)


class HalfPlane(NamedTuple):
    """Permitted velocities v satisfy (v - point) . normal >= 0."""
    point: tuple
    normal: tuple

    @property
    def direction(self):
        return (self.normal[1], -self.normal[0])

    def violation(self, velocity):
        return -((velocity[0] - self.point[0]) * self.normal[0] + (velocity[1] - self.point[1]) * self.normal[1])

    def contains(self, velocity, tolerance=EPSILON):
        return self.violation(velocity) <= tolerance


@dataclass(frozen=True)
class OrcaParams:
    tau: float = 5.0
    tau_obst: float = 2.0
    max_neighbors: int = 10
    safe_buffer: float = 0.19
    symmetry_perturbation: float = 1e-3

    @classmethod
    def from_config(cls, config):
        return cls(
            tau=config.tau,
            tau_obst=config.tau_obst,
            max_neighbors=config.max_neighbors,
            safe_buffer=config.safe_buffer,
            symmetry_perturbation=config.symmetry_perturbation,
        )


# --- Small vector helpers (plain floats keep the inner LP loop fast) ---
def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1]


def _det(a, b):
    return a[0] * b[1] - a[1] * b[0]


def _sub(a, b):
    return (a[0] - b[0], a[1] - b[1])


def _add(a, b):
    return (a[0] + b[0], a[1] + b[1])


def _scale(a, s):
    return (a[0] * s, a[1] * s)


def _normalize(a):
    length = math.hypot(a[0], a[1])
    if length <= EPSILON:
        return (0.0, 0.0)
    return (a[0] / length, a[1] / length)


def _rotate(a, angle):
    c, s = math.cos(angle), math.sin(angle)
    return (a[0] * c - a[1] * s, a[0] * s + a[1] * c)


# --- Neighbourhood ---
def visible_neighbors(agent, agents, max_neighbors=None):
    """Agents within the closed visibility ball, nearest first (ties by id)."""
    found = []
    reach = agent.visibility_range
    for other in agents:
        if other.id == agent.id:
            continue
        distance = math.dist(agent.position, other.position)
        if distance <= reach:
            found.append((distance, other.id, other))
    found.sort(key=lambda item: (item[0], item[1]))
    if max_neighbors is not None:
        found = found[:max_neighbors]
    return [other for _, _, other in found]


# --- Constraint construction ---
def _velocity_obstacle_halfplane(position, velocity, other_position, other_velocity,
                                 combined_radius, horizon, dt, responsibility, label):
    rel_pos = _sub(other_position, position)
    rel_vel = _sub(velocity, other_velocity)
    dist_sq = _dot(rel_pos, rel_pos)
    radius_sq = combined_radius * combined_radius

    if dist_sq > radius_sq:
        inv_horizon = 1.0 / horizon
        w = _sub(rel_vel, _scale(rel_pos, inv_horizon))
        w_length_sq = _dot(w, w)
        dot1 = _dot(w, rel_pos)
        if dot1 < 0.0 and dot1 * dot1 > radius_sq * w_length_sq:
            # closest boundary point lies on the truncation circle
            w_length = math.sqrt(w_length_sq)
            unit_w = _scale(w, 1.0 / w_length)
            normal = unit_w
            u = _scale(unit_w, combined_radius * inv_horizon - w_length)
        else:
            leg = math.sqrt(dist_sq - radius_sq)
            if _det(rel_pos, w) > 0.0:
                direction = (
                    (rel_pos[0] * leg - rel_pos[1] * combined_radius) / dist_sq,
                    (rel_pos[0] * combined_radius + rel_pos[1] * leg) / dist_sq,
                )
            else:
                direction = (
                    -(rel_pos[0] * leg + rel_pos[1] * combined_radius) / dist_sq,
                    -(-rel_pos[0] * combined_radius + rel_pos[1] * leg) / dist_sq,
                )
            normal = (-direction[1], direction[0])
            u = _sub(_scale(direction, _dot(rel_vel, direction)), rel_vel)
    else:
        # already overlapping: push apart along the center offset within one step
        distance = math.sqrt(dist_sq)
        if distance <= EPSILON:
            logger.warning("Coincident positions for %s at %s; separating along +x", label, tuple(position))
            normal = (1.0, 0.0)
        else:
            normal = _scale(rel_pos, -1.0 / distance)
        required = (combined_radius - distance) / dt
        u = _scale(normal, required - _dot(rel_vel, normal))

    return HalfPlane(_add(velocity, _scale(u, responsibility)), normal)


def compute_agent_halfplane(agent, other, tau, dt, safe_buffer=0.0, responsibility=0.5):
    """
    ORCA half-plane of `agent` induced by `other`. With the default
    responsibility each side of the pair takes half of the avoiding change.
    """
    combined = agent.radius + other.radius + 2.0 * safe_buffer
    return _velocity_obstacle_halfplane(
        agent.position, agent.velocity, other.position, other.velocity,
        combined, tau, dt, responsibility, f"agents {agent.id}/{other.id}",
    )


def compute_obstacle_halfplanes(agent, grid, tau_obst, dt=0.25, safe_buffer=0.0):
    """
    One half-plane per merged wall segment within the visibility range that
    faces the agent. Walls do not move, so the agent takes the whole change.
    """
    segments = grid.obstacle_segments
    if not len(segments):
        return []
    p = np.array(agent.position, dtype=float)
    starts, ends, normals = segments.starts, segments.ends, segments.normals
    edge = ends - starts
    t = np.clip(np.einsum("ij,ij->i", p - starts, edge) / np.einsum("ij,ij->i", edge, edge), 0.0, 1.0)
    closest = starts + edge * t[:, None]
    offsets = p - closest
    distances = np.hypot(offsets[:, 0], offsets[:, 1])
    facing = np.einsum("ij,ij->i", p - starts, normals) > -EPSILON
    selected = np.flatnonzero(facing & (distances <= agent.visibility_range))
    order = selected[np.lexsort((selected, distances[selected]))]

    radius = agent.radius + safe_buffer
    planes = []
    for index in order:
        distance = float(distances[index])
        normal = (float(normals[index][0]), float(normals[index][1]))
        if 0.0 < t[index] < 1.0:
            if distance > radius:
                bound = -(distance - radius) / tau_obst
            else:
                bound = (radius - distance) / dt
            planes.append(HalfPlane(_scale(normal, bound), normal))
        else:
            corner = (float(closest[index][0]), float(closest[index][1]))
            planes.append(_velocity_obstacle_halfplane(
                agent.position, agent.velocity, corner, (0.0, 0.0),
                radius, tau_obst, dt, 1.0, f"agent {agent.id}/wall corner",
            ))
    return planes


# --- Incremental linear program ---
def _lp1(planes, line_no, radius, optimum, direction_opt):
    plane = planes[line_no]
    point, direction = plane.point, plane.direction
    dot = _dot(point, direction)
    discriminant = dot * dot + radius * radius - _dot(point, point)
    if discriminant < 0.0:
        return None
    root = math.sqrt(discriminant)
    t_left, t_right = -dot - root, -dot + root
    for i in range(line_no):
        other = planes[i]
        other_direction = other.direction
        denominator = _det(direction, other_direction)
        numerator = _det(other_direction, _sub(point, other.point))
        if abs(denominator) <= EPSILON:
            if numerator < 0.0:
                return None
            continue
        t = numerator / denominator
        if denominator >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)
        if t_left > t_right:
            return None
    if direction_opt:
        t = t_right if _dot(optimum, direction) > 0.0 else t_left
    else:
        t = min(max(_dot(direction, _sub(optimum, point)), t_left), t_right)
    return _add(point, _scale(direction, t))


def _lp2(planes, radius, optimum, direction_opt):
    if direction_opt:
        result = _scale(optimum, radius)
    elif _dot(optimum, optimum) > radius * radius:
        result = _scale(_normalize(optimum), radius)
    else:
        result = optimum
    for i, plane in enumerate(planes):
        if _det(plane.direction, _sub(plane.point, result)) > 0.0:
            candidate = _lp1(planes, i, radius, optimum, direction_opt)
            if candidate is None:
                return i, result
            result = candidate
    return len(planes), result


def _lp3(planes, num_fixed, begin, radius, result):
    distance = 0.0
    for i in range(begin, len(planes)):
        plane = planes[i]
        direction = plane.direction
        if _det(direction, _sub(plane.point, result)) <= distance:
            continue
        projected = list(planes[:num_fixed])
        for j in range(num_fixed, i):
            other = planes[j]
            other_direction = other.direction
            determinant = _det(direction, other_direction)
            if abs(determinant) <= EPSILON:
                if _dot(direction, other_direction) > 0.0:
                    continue
                point = _scale(_add(plane.point, other.point), 0.5)
            else:
                t = _det(other_direction, _sub(plane.point, other.point)) / determinant
                point = _add(plane.point, _scale(direction, t))
            new_direction = _normalize(_sub(other_direction, direction))
            projected.append(HalfPlane(point, (-new_direction[1], new_direction[0])))
        previous = result
        count, result = _lp2(projected, radius, (-direction[1], direction[0]), True)
        if count < len(projected):
            result = previous
        distance = _det(direction, _sub(plane.point, result))
    return result


def solve_velocity_lp(constraints, preferred, max_speed, num_fixed=0):
    """
    Velocity in the speed disc satisfying every half-plane, closest to
    `preferred`. If infeasible, minimises the largest violation among the
    constraints after the first `num_fixed`, which stay hard.
    """
    if max_speed <= 0:
        raise ValueError("max_speed must be positive.")
    constraints = list(constraints)
    preferred = (float(preferred[0]), float(preferred[1]))
    fail, result = _lp2(constraints, max_speed, preferred, False)
    if fail < len(constraints):
        result = _lp3(constraints, num_fixed, fail, max_speed, result)
    speed = math.hypot(*result)
    if speed > max_speed:
        result = _scale(result, max_speed / speed)
    return result


# --- Per-step velocity selection ---
def preferred_velocity_toward(position, target, max_speed, dt):
    """Direction to target with magnitude min(max_speed, distance / dt)."""
    offset = _sub(target, position)
    distance = math.hypot(*offset)
    if distance <= EPSILON:
        return (0.0, 0.0)
    speed = min(max_speed, distance / dt)
    return _scale(offset, speed / distance)


def symmetric_tie(agent, neighbors):
    """
    True when some neighbour lies exactly on the line of the preferred
    velocity, ahead of the agent, and the relative velocity is on that line too.
    """
    preferred = agent.preferred_velocity
    if _dot(preferred, preferred) <= EPSILON:
        return False
    for other in neighbors:
        offset = _sub(other.position, agent.position)
        relative_velocity = _sub(agent.velocity, other.velocity)
        if (
            _dot(preferred, offset) > 0.0
            and abs(_det(preferred, offset)) <= EPSILON
            and abs(_det(relative_velocity, offset)) <= EPSILON
        ):
            return True
    return False


def step_velocity(agent, agents, grid, dt, params=None):
    """
    New velocity for `agent` from a frozen snapshot of all agents.

    On an exact head-on tie the preferred velocity is rotated by
    `symmetry_perturbation` radians; otherwise it is used as given.
    """
    params = params or OrcaParams()
    if agent.executing:
        agent.orca_calls_while_executing += 1
    neighbors = visible_neighbors(agent, agents, params.max_neighbors)
    preferred = agent.preferred_velocity
    if params.symmetry_perturbation and symmetric_tie(agent, neighbors):
        preferred = _rotate(preferred, params.symmetry_perturbation)
    planes = compute_obstacle_halfplanes(agent, grid, params.tau_obst, dt, params.safe_buffer)
    num_fixed = len(planes)
    for other in neighbors:
        responsibility = 1.0 if other.executing else 0.5
        planes.append(compute_agent_halfplane(
            agent, other, params.tau, dt, params.safe_buffer, responsibility,
        ))
    return solve_velocity_lp(planes, preferred, agent.max_speed, num_fixed)
