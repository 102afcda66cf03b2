"""
Experiment plumbing behind the management commands: scenario generation and
`.scen` exchange, single runs with trace/event output, and batch sweeps
aggregated into the success-rate table.
"""
import concurrent.futures
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .config import SimConfig
from .exceptions import MapFormatError, ScenarioGenerationError
from .grid_world import (
    Cell,
    Point,
    ScenarioEntry,
    flood_fill,
    load_movingai_scenario,
    to_movingai_scenario_text,
)
from .simulator_core import FailureReason, Outcome, RunResult, TraceWriter, init_run, run_to_completion

logger = logging.getLogger(__name__)

VARIANT_COORDINATION = "coordination"
VARIANT_BASELINE = "orca"
VARIANTS = (VARIANT_COORDINATION, VARIANT_BASELINE)

SWEEP_COLUMNS = [
    "map", "variant", "agents", "success_rate",
    "mean_makespan_success", "mean_flowtime_success", "failures_by_reason",
]

# Sampling attempts per position before giving up on a scenario.
RETRY_BUDGET = 2000


@dataclass(frozen=True)
class Scenario:
    """Ordered start/goal pairs on one map; runs use a prefix of the list."""
    map_name: str
    pairs: tuple

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(
            (Point(float(s[0]), float(s[1])), Point(float(g[0]), float(g[1]))) for s, g in self.pairs
        ))

    def __len__(self):
        return len(self.pairs)

    @property
    def starts(self):
        return [start for start, _ in self.pairs]

    @property
    def goals(self):
        return [goal for _, goal in self.pairs]

    def prefix(self, agents):
        if agents > len(self.pairs):
            raise ValueError(f"Scenario has {len(self.pairs)} pairs, {agents} requested.")
        return Scenario(self.map_name, self.pairs[:agents])

    def to_entries(self, grid):
        entries = []
        for index, (start, goal) in enumerate(self.pairs):
            entries.append(ScenarioEntry(
                index // 10, self.map_name or grid.name, grid.width, grid.height,
                grid.cell_of(start), grid.cell_of(goal), math.dist(start, goal),
            ))
        return entries


@dataclass
class SweepSpec:
    """What to sweep. `scenarios` maps a map name to its scenario list."""
    maps: dict
    scenarios: dict
    agent_counts: tuple = (5, 10, 15, 20, 25, 30, 35, 40)
    variants: tuple = VARIANTS
    config: SimConfig = field(default_factory=SimConfig)
    jobs: int = 1

    def validate(self):
        counts = list(self.agent_counts)
        if any(b <= a for a, b in zip(counts, counts[1:])):
            raise ValueError("Agent counts must be strictly increasing.")
        if any(c < 1 for c in counts):
            raise ValueError("Agent counts must be positive.")
        unknown = set(self.variants) - set(VARIANTS)
        if unknown:
            raise ValueError(f"Unknown variant(s): {', '.join(sorted(unknown))}.")
        for name, scenarios in self.scenarios.items():
            if name not in self.maps:
                raise ValueError(f"Scenarios given for unknown map '{name}'.")
            for index, scenario in enumerate(scenarios):
                if counts and counts[-1] > len(scenario):
                    raise ValueError(
                        f"Scenario {index} of map '{name}' has {len(scenario)} pairs; "
                        f"the sweep needs {counts[-1]}."
                    )
        return self


# --- Scenario generation ---
def _wall_columns(grid):
    """Columns that are mostly blocked: the separating wall of a gaps map."""
    heavy = np.flatnonzero(grid.blocked.sum(axis=0) > grid.height // 2)
    if heavy.size:
        return int(heavy.min()), int(heavy.max())
    middle = grid.width // 2
    return middle, middle


def _candidate_cells(grid, config):
    clear = grid.clear_mask(config.clearance)
    js, is_ = np.nonzero(clear)
    return [Cell(int(i), int(j)) for j, i in zip(js, is_)]


def _components(grid, cells):
    labels = {}
    for cell in cells:
        if cell in labels:
            continue
        for member in flood_fill(grid, cell):
            labels[member] = cell
    return labels


def _sample(rng, pool, used, separation, label):
    if not pool:
        raise ScenarioGenerationError(f"No free cells available for {label}.")
    for _ in range(RETRY_BUDGET):
        cell = pool[int(rng.integers(len(pool)))]
        center = Point(cell[0] + 0.5, cell[1] + 0.5)
        if all(math.dist(center, other) > separation for other in used):
            return cell, center
    raise ScenarioGenerationError(f"Could not place {label} after {RETRY_BUDGET} attempts.")


def generate_scenarios(grid, kind, count, agents, seed=0, config=None):
    """
    `count` scenarios of `agents` start/goal pairs at cell centers.

    gaps: the first half of the agents start left of the wall with goals on
    the right, the rest the other way round. rooms: uniform rejection
    sampling over free cells. All 2*agents positions of a scenario are
    pairwise farther apart than twice the planning clearance, and every goal
    is reachable from its start.
    """
    config = config or SimConfig()
    if kind not in ("gaps", "rooms"):
        raise ValueError(f"Unknown scenario kind '{kind}'.")
    if agents < 1 or count < 0:
        raise ValueError("agents must be positive and count non-negative.")
    cells = _candidate_cells(grid, config)
    components = _components(grid, cells)
    separation = 2.0 * config.clearance
    if kind == "gaps":
        wall_lo, wall_hi = _wall_columns(grid)
        left = [c for c in cells if c[0] < wall_lo]
        right = [c for c in cells if c[0] > wall_hi]
    else:
        left = right = cells

    scenarios = []
    for index in range(count):
        rng = np.random.default_rng([seed, index])
        used = []
        pairs = []
        for agent in range(agents):
            first_half = agent < agents // 2 or agents == 1
            start_pool, goal_pool = (left, right) if first_half else (right, left)
            try:
                start_cell, start = _sample(rng, start_pool, used, separation, f"start of agent {agent}")
                used.append(start)
                reachable = [c for c in goal_pool if components.get(c) == components.get(start_cell)]
                _, goal = _sample(rng, reachable, used, separation, f"goal of agent {agent}")
            except ScenarioGenerationError as exc:
                raise ScenarioGenerationError(f"Map '{grid.name or 'unnamed'}': {exc}") from exc
            used.append(goal)
            pairs.append((start, goal))
        scenarios.append(Scenario(grid.name, tuple(pairs)))
    logger.info("Generated %d %s scenario(s) with %d agents on %s", count, kind, agents, grid.name or "map")
    return scenarios


# --- .scen files ---
def load_scenario_file(path):
    """One `.scen` file is one scenario; positions are cell centers."""
    with open(path, encoding="utf-8") as handle:
        try:
            entries = load_movingai_scenario(handle)
        except MapFormatError as exc:
            raise MapFormatError(exc.reason, line=exc.line, path=path) from exc
    if not entries:
        raise MapFormatError("scenario file has no entries", path=path)
    pairs = tuple(
        (Point(e.start[0] + 0.5, e.start[1] + 0.5), Point(e.goal[0] + 0.5, e.goal[1] + 0.5))
        for e in entries
    )
    return Scenario(entries[0].map_name, pairs)


def write_scenario_file(path, scenario, grid):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(to_movingai_scenario_text(scenario.to_entries(grid)))


# --- Runs ---
def variant_config(config, variant):
    return config.replace(coordination_enabled=(variant == VARIANT_COORDINATION))


def run_single(grid, scenario, config, trace_handle=None, events_handle=None):
    """One run; optionally writes the trace and the coordination event log as JSON lines."""
    state = init_run(grid, scenario.starts, scenario.goals, config)
    trace = TraceWriter(trace_handle) if trace_handle is not None else None
    result = run_to_completion(state, trace)
    if events_handle is not None and state.coordinator is not None:
        for record in state.coordinator.events:
            events_handle.write(json.dumps(record) + "\n")
    return result


def _run_task(task):
    map_name, grid, variant, agents, index, scenario, config = task
    try:
        prefix = scenario.prefix(agents)
        state = init_run(grid, prefix.starts, prefix.goals, variant_config(config, variant))
        result = run_to_completion(state)
    except Exception as exc:
        logger.exception("Run %s/%s/%d/#%d failed internally", map_name, variant, agents, index)
        result = RunResult(Outcome.FAILURE, FailureReason.INTERNAL, detail=str(exc))
    return {
        "map": map_name,
        "variant": variant,
        "agents": agents,
        "scenario": index,
        "success": result.success,
        "reason": result.reason or "",
        "makespan": result.makespan,
        "flowtime": result.flowtime,
    }


def _tasks(spec):
    for map_name in sorted(spec.scenarios):
        grid = spec.maps[map_name]
        for variant in spec.variants:
            for agents in spec.agent_counts:
                for index, scenario in enumerate(spec.scenarios[map_name]):
                    yield (map_name, grid, variant, agents, index, scenario, spec.config)


def run_sweep(spec):
    """
    Every map x variant x agent count x scenario, aggregated into one row per
    (map, variant, agents) ordered by those keys. Rows with no scenarios are
    omitted.
    """
    spec.validate()
    tasks = list(_tasks(spec))
    if spec.jobs > 1 and len(tasks) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            records = list(pool.map(_run_task, tasks, chunksize=1))
    else:
        records = [_run_task(task) for task in tasks]
    logger.info("Sweep finished: %d run(s)", len(records))
    return aggregate_runs(records)


def _failure_summary(reasons):
    counts = reasons[reasons != ""].value_counts()
    return ";".join(f"{reason}:{counts[reason]}" for reason in sorted(counts.index))


def aggregate_runs(records):
    """Success rate and success-only means per (map, variant, agents)."""
    if not records:
        return pd.DataFrame(columns=SWEEP_COLUMNS)
    runs = pd.DataFrame.from_records(records).sort_values(["map", "variant", "agents", "scenario"], kind="stable")
    rows = []
    for (map_name, variant, agents), group in runs.groupby(["map", "variant", "agents"], sort=True):
        succeeded = group[group["success"]]
        rows.append({
            "map": map_name,
            "variant": variant,
            "agents": int(agents),
            "success_rate": float(group["success"].mean()),
            "mean_makespan_success": float(succeeded["makespan"].mean()) if len(succeeded) else float("nan"),
            "mean_flowtime_success": float(succeeded["flowtime"].mean()) if len(succeeded) else float("nan"),
            "failures_by_reason": _failure_summary(group["reason"]),
        })
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def sweep_csv_text(table):
    return table.to_csv(index=False, lineterminator="\n")


def write_sweep_csv(table, handle):
    handle.write(sweep_csv_text(table))
