"""Small map and agent builders shared by the test modules."""
import numpy as np

from navigation_app.config import SimConfig
from navigation_app.grid_world import GridMap, load_movingai_map
from navigation_app.orca_avoidance import AgentState


def grid_from_rows(*rows, name="fixture"):
    """Rows top to bottom as in a .map file; row 0 is j = 0."""
    header = f"type octile\nheight {len(rows)}\nwidth {len(rows[0])}\nmap\n"
    return load_movingai_map(header + "\n".join(rows) + "\n", name=name)


def open_grid(width, height=None, blocked=()):
    height = height or width
    occupancy = np.zeros((height, width), dtype=bool)
    for i, j in blocked:
        occupancy[j, i] = True
    return GridMap(width, height, occupancy, name=f"open-{width}x{height}")


def agent(agent_id, x, y, goal=None, **kwargs):
    goal = goal if goal is not None else (x, y)
    return AgentState(id=agent_id, position=(x, y), goal=goal, **kwargs)


def quiet_config(**overrides):
    """Defaults without the symmetry-breaking rotation, so expected velocities are exact."""
    return SimConfig().replace(symmetry_perturbation=0.0, **overrides)
