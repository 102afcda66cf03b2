"""
Multi-agent path finding on a 4-connected subgrid with push, swap and rotate
primitives.

The instance graph is split into subproblems, one per connected component,
classified as a corridor (a path), a ring (a simple cycle) or a junction
graph (anything with a vertex of degree three or more). Agents first walk to
their goals in priority order, pushing unfinished agents aside. Whatever is
left is settled per subproblem:

* corridor: agents keep their order, so the instance is solvable only if the
  goals are in the same order; agents then shuffle along the line.
* ring: agents keep their cyclic order and rotate into place.
* junction graph: agents are first pushed onto the set of goal vertices, then
  swapped into place. Two agents can trade places when both can be brought to
  a junction with two empty neighbours besides the one holding the trailing
  agent; every helper move is undone afterwards with the pair's labels
  exchanged. Agents that can trade places form exchange classes, and the
  instance is solvable only if every agent's goal lies in its own class.
  Trading places needs two spare vertices in the subproblem.

The sequential log is smoothed (agent-local loops removed), then compressed
into synchronous steps, padded with waits and validated before it is returned.
"""
import collections
import itertools
import logging
from dataclasses import dataclass, field

from .exceptions import PlanValidationError
from .grid_world import BFS_DIRECTIONS, Cell, ScenarioEntry, to_movingai_scenario_text

logger = logging.getLogger(__name__)

WAIT = "wait"
MOVE = "move"

PATH = "path"
CYCLE = "cycle"
JUNCTION = "junction"


@dataclass(frozen=True)
class MapfInstance:
    """Vertices are cells; edges join 4-adjacent vertices."""
    vertices: frozenset
    starts: tuple
    goals: tuple
    agent_ids: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "vertices", frozenset(Cell(*v) for v in self.vertices))
        object.__setattr__(self, "starts", tuple(Cell(*s) for s in self.starts))
        object.__setattr__(self, "goals", tuple(Cell(*g) for g in self.goals))
        if not self.agent_ids:
            object.__setattr__(self, "agent_ids", tuple(range(len(self.starts))))
        if not (len(self.starts) == len(self.goals) == len(self.agent_ids)):
            raise ValueError("starts, goals and agent_ids must have the same length.")
        if len(set(self.starts)) != len(self.starts):
            raise ValueError("MAPF starts must be pairwise distinct.")
        if len(set(self.goals)) != len(self.goals):
            raise ValueError("MAPF goals must be pairwise distinct.")
        for cell in self.starts + self.goals:
            if cell not in self.vertices:
                raise ValueError(f"Start/goal {tuple(cell)} is not a vertex of the instance graph.")

    @classmethod
    def from_grid_area(cls, grid, low, high, starts, goals, agent_ids=()):
        """Free cells of `grid` inside the inclusive box low..high."""
        vertices = {
            Cell(i, j)
            for i in range(low[0], high[0] + 1)
            for j in range(low[1], high[1] + 1)
            if not grid.is_blocked((i, j))
        }
        return cls(frozenset(vertices), tuple(starts), tuple(goals), tuple(agent_ids))

    @property
    def num_agents(self):
        return len(self.starts)

    def adjacency(self):
        adjacency = {}
        for vertex in sorted(self.vertices):
            adjacency[vertex] = tuple(sorted(
                Cell(vertex[0] + di, vertex[1] + dj)
                for di, dj in BFS_DIRECTIONS
                if Cell(vertex[0] + di, vertex[1] + dj) in self.vertices
            ))
        return adjacency


class MapfAction(tuple):
    """('move', target Cell) or ('wait', None)."""

    def __new__(cls, kind, target=None):
        return super().__new__(cls, (kind, target))

    @property
    def kind(self):
        return self[0]

    @property
    def target(self):
        return self[1]

    @property
    def is_move(self):
        return self[0] == MOVE

    def __repr__(self):
        return f"Move{tuple(self[1])}" if self.is_move else "Wait"


@dataclass(frozen=True)
class MapfPlan:
    """Per-agent action sequences of equal length, all of one duration."""
    actions: tuple
    action_duration: float = 1.0

    @property
    def length(self):
        return len(self.actions[0]) if self.actions else 0

    def positions(self, starts):
        """Per index, the tuple of agent vertices (index 0 = starts)."""
        current = list(starts)
        timeline = [tuple(current)]
        for index in range(self.length):
            for agent, sequence in enumerate(self.actions):
                action = sequence[index]
                if action.is_move:
                    current[agent] = action.target
            timeline.append(tuple(current))
        return timeline

    @property
    def makespan(self):
        return self.length * self.action_duration


@dataclass(frozen=True)
class MapfInfeasible:
    reason: str

    def __bool__(self):
        return False


@dataclass(frozen=True)
class Valid:
    ok: bool = True

    def __bool__(self):
        return True


@dataclass(frozen=True)
class ConflictReport:
    kind: str
    index: int
    agents: tuple
    detail: str = ""
    ok: bool = False

    def __bool__(self):
        return False


@dataclass(frozen=True)
class Subproblem:
    """A connected component of the instance graph and the agents starting in it."""
    vertices: frozenset
    agents: tuple
    kind: str
    spare: int


# --- Validation ---
def validate_plan(instance, plan):
    """Valid, or a report naming the first conflicting (index, agents)."""
    adjacency = instance.adjacency()
    if len(plan.actions) != instance.num_agents:
        return ConflictReport("shape", 0, (), "plan has a different number of agents than the instance")
    lengths = {len(sequence) for sequence in plan.actions}
    if len(lengths) > 1:
        return ConflictReport("shape", 0, (), f"sequences have different lengths {sorted(lengths)}")

    current = list(instance.starts)
    for index in range(plan.length):
        following = list(current)
        for agent, sequence in enumerate(plan.actions):
            action = sequence[index]
            if action.is_move:
                if action.target not in adjacency.get(current[agent], ()):
                    return ConflictReport(
                        "move", index, (agent,),
                        f"{tuple(current[agent])} -> {tuple(action.target)} is not a graph edge",
                    )
                following[agent] = action.target
        occupied = {}
        for agent, vertex in enumerate(following):
            if vertex in occupied:
                return ConflictReport("vertex", index, (occupied[vertex], agent), f"both at {tuple(vertex)}")
            occupied[vertex] = agent
        for a, b in itertools.combinations(range(len(current)), 2):
            if current[a] != following[a] and current[a] == following[b] and current[b] == following[a]:
                return ConflictReport(
                    "edge", index, (a, b), f"exchange {tuple(current[a])} <-> {tuple(current[b])}",
                )
        current = following
    for agent, (vertex, goal) in enumerate(zip(current, instance.goals)):
        if vertex != goal:
            return ConflictReport("goal", plan.length, (agent,), f"ends at {tuple(vertex)} instead of {tuple(goal)}")
    return Valid()


def assign_action_duration(plan, max_speed, cell_size=1.0):
    """Shortest uniform duration under which a one-cell move stays within max_speed."""
    if max_speed <= 0:
        raise ValueError("max_speed must be positive.")
    return MapfPlan(plan.actions, cell_size / max_speed)


# --- Graph helpers ---
def biconnected_blocks(adjacency):
    """Vertex sets of the biconnected blocks; an isolated vertex is a block of its own."""
    index, low, blocks = {}, {}, []
    counter = itertools.count()
    for root in sorted(adjacency):
        if root in index:
            continue
        if not adjacency[root]:
            blocks.append(frozenset({root}))
        index[root] = low[root] = next(counter)
        stack = [(root, None, iter(adjacency[root]))]
        edges = []
        while stack:
            vertex, parent, neighbours = stack[-1]
            descended = False
            for nxt in neighbours:
                if nxt == parent:
                    continue
                if nxt not in index:
                    index[nxt] = low[nxt] = next(counter)
                    edges.append((vertex, nxt))
                    stack.append((nxt, vertex, iter(adjacency[nxt])))
                    descended = True
                    break
                if index[nxt] < index[vertex]:
                    edges.append((vertex, nxt))
                    low[vertex] = min(low[vertex], index[nxt])
            if descended:
                continue
            stack.pop()
            if parent is None:
                continue
            low[parent] = min(low[parent], low[vertex])
            if low[vertex] >= index[parent]:
                block = set()
                while True:
                    edge = edges.pop()
                    block.update(edge)
                    if edge == (parent, vertex):
                        break
                blocks.append(frozenset(block))
    return blocks


def _distributions(total, capacities):
    """Every way to spread `total` over (index, capacity) pairs."""
    if not capacities:
        if total == 0:
            yield ()
        return
    (index, capacity), rest = capacities[0], capacities[1:]
    room = sum(c for _, c in rest)
    for amount in range(max(0, total - room), min(capacity, total) + 1):
        for tail in _distributions(total - amount, rest):
            yield ((index, amount),) + tail


# --- Solver ---
@dataclass
class _Search:
    adjacency: dict
    positions: list
    occupant: dict
    log: list = field(default_factory=list)

    def snapshot(self):
        return list(self.positions), dict(self.occupant), len(self.log)

    def restore(self, snapshot):
        positions, occupant, log_length = snapshot
        self.positions[:] = positions
        self.occupant.clear()
        self.occupant.update(occupant)
        del self.log[log_length:]

    def apply(self, moves):
        """Applies one joint step: tuple of (agent, from, to)."""
        for agent, source, _ in moves:
            if self.occupant.get(source) == agent:
                del self.occupant[source]
        for agent, _, target in moves:
            self.positions[agent] = target
            self.occupant[target] = agent
        self.log.append(tuple(moves))

    def move(self, agent, target):
        self.apply(((agent, self.positions[agent], target),))

    def shortest_path(self, source, target, avoid=frozenset()):
        if source == target:
            return [source]
        parents = {source: None}
        queue = collections.deque([source])
        while queue:
            vertex = queue.popleft()
            for nxt in self.adjacency[vertex]:
                if nxt in parents or (nxt in avoid and nxt != target):
                    continue
                parents[nxt] = vertex
                if nxt == target:
                    path = [nxt]
                    while parents[path[-1]] is not None:
                        path.append(parents[path[-1]])
                    return path[::-1]
                queue.append(nxt)
        return None

    def push(self, vertex, blocked):
        """Empties `vertex` by shifting agents toward the nearest empty vertex avoiding `blocked`."""
        if vertex not in self.occupant:
            return True
        if vertex in blocked:
            return False
        parents = {vertex: None}
        queue = collections.deque([vertex])
        while queue:
            current = queue.popleft()
            for nxt in self.adjacency[current]:
                if nxt in parents or nxt in blocked:
                    continue
                parents[nxt] = current
                if nxt not in self.occupant:
                    chain = [nxt]
                    while parents[chain[-1]] is not None:
                        chain.append(parents[chain[-1]])
                    # chain runs from the empty vertex back to `vertex`
                    for target, source in zip(chain, chain[1:]):
                        self.move(self.occupant[source], target)
                    return True
                queue.append(nxt)
        return False

    def shift(self, path):
        """Empties path[0] and fills path[-1]; occupancy in between is unchanged."""
        end = len(path) - 1
        while end > 0:
            start = end - 1
            while path[start] not in self.occupant:
                start -= 1
            agent = self.occupant[path[start]]
            for vertex in path[start + 1:end + 1]:
                self.move(agent, vertex)
            end = start

    def arrange(self, region, holes):
        """
        Moves the agents inside the connected `region` until exactly the
        vertices in `holes` are empty there. Agents are treated as
        interchangeable; `holes` must match the number of empty vertices.
        """
        while True:
            surplus = sorted(v for v in holes if v in self.occupant)
            if not surplus:
                return
            parents = dict.fromkeys(surplus)
            queue = collections.deque(surplus)
            found = None
            while queue and found is None:
                vertex = queue.popleft()
                for nxt in self.adjacency[vertex]:
                    if nxt in parents or nxt not in region:
                        continue
                    parents[nxt] = vertex
                    if nxt not in self.occupant and nxt not in holes:
                        found = nxt
                        break
                    queue.append(nxt)
            if found is None:
                raise ValueError("Region has fewer empty vertices than requested holes.")
            path = [found]
            while parents[path[-1]] is not None:
                path.append(parents[path[-1]])
            self.shift(path[::-1])


class PushAndRotateSolver:
    """
    Solves a MapfInstance. Agents are processed in an order that keeps the
    vertices not yet claimed by finished agents connected whenever possible;
    ties go to the lower agent index.

    `search_limit` bounds the number of abstract states explored when the
    direct way of bringing two agents to a junction fails; past it the pair
    counts as unable to trade places.
    """

    def __init__(self, instance, search_limit=20_000, junction_attempts=8):
        self.instance = instance
        self.adjacency = instance.adjacency()
        self.search_limit = search_limit
        self.junction_attempts = junction_attempts
        self.junctions = [v for v in sorted(self.adjacency) if len(self.adjacency[v]) >= 3]
        self.cyclic = collections.defaultdict(set)
        for number, block in enumerate(biconnected_blocks(self.adjacency)):
            if len(block) >= 3:
                for vertex in block:
                    self.cyclic[vertex].add(number)
        self._splits = {}

    def solve(self):
        instance = self.instance
        if instance.num_agents == 0:
            return MapfPlan(())
        subproblems = self.subproblems()
        for sub in subproblems:
            for agent in sub.agents:
                if instance.goals[agent] not in sub.vertices:
                    return MapfInfeasible(f"agent {instance.agent_ids[agent]} cannot reach its goal")

        search = _Search(self.adjacency, list(instance.starts), {s: a for a, s in enumerate(instance.starts)})
        self._push_phase(search)
        settle = {PATH: self._settle_path, CYCLE: self._settle_cycle, JUNCTION: self._settle_junction}
        for sub in subproblems:
            if all(search.positions[a] == instance.goals[a] for a in sub.agents):
                continue
            reason = settle[sub.kind](search, sub)
            if reason:
                logger.debug("Instance with %d agents is infeasible: %s", instance.num_agents, reason)
                return MapfInfeasible(reason)

        steps = smooth_steps(search.log)
        plan = joint_plan(steps, instance.num_agents)
        report = validate_plan(instance, plan)
        if not report:
            raise PlanValidationError(f"Solver produced an invalid plan: {report}")
        logger.debug("Solved %d-agent instance on %d vertices: %d steps", instance.num_agents, len(instance.vertices), plan.length)
        return plan

    def subproblems(self):
        """One Subproblem per connected component that holds at least one agent."""
        labels = self._components()
        members = collections.defaultdict(set)
        for vertex, root in labels.items():
            members[root].add(vertex)
        owners = collections.defaultdict(list)
        for agent, start in enumerate(self.instance.starts):
            owners[labels[start]].append(agent)
        result = []
        for root in sorted(owners):
            vertices = frozenset(members[root])
            degrees = [len(self.adjacency[v]) for v in vertices]
            if max(degrees) <= 2 and sum(degrees) // 2 == len(vertices) - 1:
                kind = PATH
            elif all(d == 2 for d in degrees):
                kind = CYCLE
            else:
                kind = JUNCTION
            result.append(Subproblem(vertices, tuple(owners[root]), kind, len(vertices) - len(owners[root])))
        return result

    # --- Graph helpers ---
    def _components(self):
        labels = {}
        for root in sorted(self.adjacency):
            if root in labels:
                continue
            labels[root] = root
            queue = collections.deque([root])
            while queue:
                vertex = queue.popleft()
                for nxt in self.adjacency[vertex]:
                    if nxt not in labels:
                        labels[nxt] = root
                        queue.append(nxt)
        return labels

    def _connected(self, vertices):
        if not vertices:
            return True
        root = min(vertices)
        seen = {root}
        queue = collections.deque([root])
        while queue:
            vertex = queue.popleft()
            for nxt in self.adjacency[vertex]:
                if nxt in vertices and nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        return len(seen) == len(vertices)

    def _distances_from(self, source):
        distances = {source: 0}
        queue = collections.deque([source])
        while queue:
            vertex = queue.popleft()
            for nxt in self.adjacency[vertex]:
                if nxt not in distances:
                    distances[nxt] = distances[vertex] + 1
                    queue.append(nxt)
        return distances

    def _walk(self, vertices):
        """Vertices of a path (end to end) or a cycle (once around)."""
        ends = [v for v in vertices if len(self.adjacency[v]) <= 1]
        start = min(ends) if ends else min(vertices)
        order, previous = [start], None
        while True:
            following = [n for n in self.adjacency[order[-1]] if n != previous]
            if not following or following[0] == start:
                return order
            previous = order[-1]
            order.append(following[0])

    def _split(self, vertices, first, second):
        """Components of the subproblem without two vertices: (labels, groups)."""
        key = (first, second) if first <= second else (second, first)
        if key not in self._splits:
            labels, groups = {}, []
            for root in sorted(vertices):
                if root in labels or root in key:
                    continue
                labels[root] = len(groups)
                group = [root]
                queue = collections.deque([root])
                while queue:
                    vertex = queue.popleft()
                    for nxt in self.adjacency[vertex]:
                        if nxt not in labels and nxt not in key:
                            labels[nxt] = len(groups)
                            group.append(nxt)
                            queue.append(nxt)
                groups.append(group)
            self._splits[key] = (labels, groups)
        return self._splits[key]

    def _names(self, agents):
        return ", ".join(str(self.instance.agent_ids[a]) for a in agents)

    def _priority_order(self):
        goals = self.instance.goals
        remaining = set(self.adjacency)
        pending = list(range(self.instance.num_agents))
        order = []
        while pending:
            chosen = pending[0]
            for agent in pending:
                if self._connected(remaining - {goals[agent]}):
                    chosen = agent
                    break
            order.append(chosen)
            pending.remove(chosen)
            remaining.discard(goals[chosen])
        return order

    # --- Push phase ---
    def _push_phase(self, search):
        finished = set()
        for agent in self._priority_order():
            if self._route(search, agent, finished):
                finished.add(agent)

    def _route(self, search, agent, finished):
        """Walks `agent` to its goal around finished agents; False leaves it wherever it got to."""
        held = frozenset(search.positions[other] for other in finished)
        path = search.shortest_path(search.positions[agent], self.instance.goals[agent], avoid=held)
        if path is None:
            return False
        for vertex in path[1:]:
            if vertex in search.occupant and not search.push(vertex, held | {search.positions[agent]}):
                return False
            search.move(agent, vertex)
        return True

    # --- Corridors and rings ---
    def _settle_path(self, search, sub):
        goals = self.instance.goals
        order = self._walk(sub.vertices)
        place = {vertex: index for index, vertex in enumerate(order)}
        agents = sorted(sub.agents, key=lambda a: place[search.positions[a]])
        targets = [place[goals[a]] for a in agents]
        if targets != sorted(targets):
            return f"agents {self._names(agents)} share a corridor and cannot pass each other"
        ahead = [a for a in agents if place[goals[a]] > place[search.positions[a]]]
        behind = [a for a in agents if place[goals[a]] < place[search.positions[a]]]
        for agent in reversed(ahead):
            while search.positions[agent] != goals[agent]:
                search.move(agent, order[place[search.positions[agent]] + 1])
        for agent in behind:
            while search.positions[agent] != goals[agent]:
                search.move(agent, order[place[search.positions[agent]] - 1])
        return None

    def _settle_cycle(self, search, sub):
        goals = self.instance.goals
        order = self._walk(sub.vertices)
        size = len(order)
        place = {vertex: index for index, vertex in enumerate(order)}
        agents = sorted(sub.agents, key=lambda a: place[search.positions[a]])
        here = [place[search.positions[a]] for a in agents]
        there = [place[goals[a]] for a in agents]
        count = len(agents)
        if count > 2 and sum(there[(k + 1) % count] < there[k] for k in range(count)) != 1:
            return f"agents {self._names(agents)} share a ring and cannot change their cyclic order"

        # agents only ever advance, each by its own number of vertices
        shifts = [(there[0] - here[0]) % size]
        for k in range(count - 1):
            shifts.append(shifts[-1] + (there[k + 1] - there[k]) % size - (here[k + 1] - here[k]) % size)
        lowest = min(shifts)
        shifts = [s - size * (lowest // size) for s in shifts]

        if sub.spare == 0:
            for _ in range(shifts[0]):
                search.apply(tuple(
                    (a, search.positions[a], order[(place[search.positions[a]] + 1) % size]) for a in agents
                ))
            return None
        remaining = dict(zip(agents, shifts))
        while any(remaining.values()):
            moved = False
            for agent in agents:
                if not remaining[agent]:
                    continue
                ahead = order[(place[search.positions[agent]] + 1) % size]
                if ahead not in search.occupant:
                    search.move(agent, ahead)
                    remaining[agent] -= 1
                    moved = True
            if not moved:
                return f"rotation of agents {self._names(agents)} stalled"
        return None

    # --- Junction graphs ---
    def _settle_junction(self, search, sub):
        goals = self.instance.goals
        if sub.spare == 0:
            return f"agents {self._names(sub.agents)} have no spare vertex to move into"
        search.arrange(sub.vertices, sub.vertices - {goals[a] for a in sub.agents})
        stray = [a for a in sub.agents if search.positions[a] != goals[a]]
        if not stray:
            return None
        if sub.spare < 2:
            return f"agents {self._names(stray)} need two spare vertices to trade places"

        classes, links = self._exchange_classes(search, sub)
        for agent in sub.agents:
            if classes[search.positions[agent]] != classes[goals[agent]]:
                return f"agent {self.instance.agent_ids[agent]} cannot trade places with the agent on its goal"
        for root in sorted(set(classes.values())):
            members = sorted(p for p, c in classes.items() if c == root)
            hub = members[0]
            while True:
                target = goals[search.occupant[hub]]
                if target == hub:
                    target = next((p for p in members if goals[search.occupant[p]] != p), None)
                    if target is None:
                        break
                if not self._transpose(search, sub, hub, target, links):
                    return f"exchange between {tuple(hub)} and {tuple(target)} failed"
        return None

    def _exchange_classes(self, search, sub):
        """Goal vertices grouped by which agents can trade places; with the tree of tested pairs."""
        parent = {}

        def find(position):
            while parent[position] != position:
                parent[position] = parent[parent[position]]
                position = parent[position]
            return position

        links = collections.defaultdict(list)
        for position in sorted(search.positions[a] for a in sub.agents):
            others = sorted(parent, key=lambda p: (not self.cyclic[position] & self.cyclic[p], p))
            parent[position] = position
            for other in others:
                if find(other) == find(position):
                    continue
                if self._exchangeable(search, position, other, sub):
                    parent[find(other)] = find(position)
                    links[position].append(other)
                    links[other].append(position)
        return {position: find(position) for position in parent}, links

    def _transpose(self, search, sub, source, target, links):
        """Exchanges the agents on two vertices of one class; agents in between end where they began."""
        parents = {source: None}
        queue = collections.deque([source])
        while queue:
            vertex = queue.popleft()
            for nxt in links[vertex]:
                if nxt not in parents:
                    parents[nxt] = vertex
                    queue.append(nxt)
        path = [target]
        while parents[path[-1]] is not None:
            path.append(parents[path[-1]])
        pairs = list(zip(path, path[1:]))
        for first, second in pairs + pairs[-2::-1]:
            if not self._exchange(search, search.occupant[first], search.occupant[second], sub):
                return False
        return True

    def _exchangeable(self, search, first, second, sub):
        snapshot = search.snapshot()
        dock = self._reach_exchange(search, search.occupant[first], search.occupant[second], sub)
        search.restore(snapshot)
        return dock is not None

    def _exchange(self, search, a, b, sub):
        """Swaps agents a and b; every other agent ends where it started."""
        begin = len(search.log)
        dock = self._reach_exchange(search, a, b, sub)
        if dock is None:
            return False
        middle = len(search.log)
        lead, trail, (first, second) = dock
        hub, tail = search.positions[lead], search.positions[trail]
        for agent, vertex in ((lead, first), (trail, hub), (trail, second), (lead, hub), (lead, tail), (trail, hub)):
            search.move(agent, vertex)
        relabel = {a: b, b: a}
        for step in reversed(search.log[begin:middle]):
            search.apply(tuple((relabel.get(agent, agent), target, source) for agent, source, target in step))
        return True

    def _reach_exchange(self, search, a, b, sub):
        """
        Moves a and b onto a junction and one of its neighbours with two more
        neighbours empty. Returns (lead, trail, empty neighbours) or None with
        the search unchanged.
        """
        snapshot = search.snapshot()
        for mover, target in ((a, b), (b, a)):
            if self._approach(search, mover, target):
                dock = self._dock(search, a, b, sub)
                if dock:
                    return dock
            search.restore(snapshot)
        dock = self._search_dock(search, a, b, sub)
        if dock:
            return dock
        search.restore(snapshot)
        return None

    def _approach(self, search, mover, target):
        route = search.shortest_path(search.positions[mover], search.positions[target])
        if route is None:
            return False
        for vertex in route[1:-1]:
            blocked = {search.positions[mover], search.positions[target]}
            if vertex in search.occupant and not search.push(vertex, blocked):
                return False
            search.move(mover, vertex)
        return True

    def _dock(self, search, a, b, sub):
        distances = self._distances_from(search.positions[a])
        hubs = sorted((v for v in self.junctions if v in sub.vertices), key=lambda v: (distances[v], v))
        for hub in hubs[:self.junction_attempts]:
            options = []
            for lead, trail in ((a, b), (b, a)):
                if hub == search.positions[trail]:
                    continue
                route = search.shortest_path(search.positions[lead], hub, avoid=frozenset({search.positions[trail]}))
                if route is not None:
                    options.append((len(route), lead, trail, route))
            for _, lead, trail, route in sorted(options, key=lambda option: option[0]):
                snapshot = search.snapshot()
                if self._multipush(search, lead, trail, route):
                    sides = self._clear(search, lead, trail, sub)
                    if sides:
                        return lead, trail, sides
                search.restore(snapshot)
        return None

    def _multipush(self, search, lead, trail, route):
        """Moves the pair along `route`, lead first, pushing occupants out of the way."""
        for vertex in route[1:]:
            blocked = {search.positions[lead], search.positions[trail]}
            if vertex in search.occupant and not search.push(vertex, blocked):
                return False
            previous = search.positions[lead]
            search.move(lead, vertex)
            search.move(trail, previous)
        return True

    def _free_sides(self, hub, tail, labels, spare):
        """Two neighbours of `hub` (not `tail`) that can both be emptied, or None."""
        if len(self.adjacency[hub]) < 3 or tail not in self.adjacency[hub]:
            return None
        for first, second in itertools.combinations([n for n in self.adjacency[hub] if n != tail], 2):
            one, other = labels[first], labels[second]
            if (one != other and spare[one] and spare[other]) or (one == other and spare[one] >= 2):
                return first, second
        return None

    def _clear(self, search, lead, trail, sub):
        hub, tail = search.positions[lead], search.positions[trail]
        labels, groups = self._split(sub.vertices, hub, tail)
        spare = [sum(v not in search.occupant for v in group) for group in groups]
        sides = self._free_sides(hub, tail, labels, spare)
        if sides is None:
            return None
        for index in sorted({labels[v] for v in sides}):
            wanted = {v for v in sides if labels[v] == index}
            empty = [v for v in groups[index] if v not in search.occupant and v not in wanted]
            search.arrange(frozenset(groups[index]), wanted | set(empty[:spare[index] - len(wanted)]))
        return sides

    # --- Pair search with interchangeable bystanders ---
    def _search_dock(self, search, a, b, sub):
        """
        Breadth-first search over (position of a, position of b, empty count
        per component of the rest). Empty vertices inside a component can be
        rearranged freely, so this decides whether the pair can ever dock.
        """
        vertices = sub.vertices
        pair = (search.positions[a], search.positions[b])
        _, groups = self._split(vertices, *pair)
        start = (*pair, tuple(sum(v not in search.occupant for v in group) for group in groups))
        parents = {start: None}
        queue = collections.deque([start])
        while queue:
            state = queue.popleft()
            labels, _ = self._split(vertices, state[0], state[1])
            if (self._free_sides(state[0], state[1], labels, state[2])
                    or self._free_sides(state[1], state[0], labels, state[2])):
                moves = []
                while parents[state] is not None:
                    state, step = parents[state]
                    moves.append(step)
                return self._replay(search, a, b, sub, moves[::-1])
            for step, following in self._successors(state, vertices):
                if following in parents:
                    continue
                parents[following] = (state, step)
                if len(parents) > self.search_limit:
                    logger.debug("Pair search for agents %s and %s gave up after %d states", a, b, len(parents))
                    return None
                queue.append(following)
        return None

    def _successors(self, state, vertices):
        first, second, spare = state
        labels, groups = self._split(vertices, first, second)
        for mover, (here, other) in enumerate(((first, second), (second, first))):
            for vertex in self.adjacency[here]:
                if vertex == other or not spare[labels[vertex]]:
                    continue
                pair = (vertex, second) if mover == 0 else (first, vertex)
                new_labels, new_groups = self._split(vertices, *pair)
                counts = [0] * len(new_groups)
                source = labels[vertex]
                for index, group in enumerate(groups):
                    if index != source:
                        counts[new_labels[group[0]]] += spare[index]
                counts[new_labels[here]] += 1
                pieces = collections.Counter(new_labels[v] for v in groups[source] if v != vertex)
                for share in _distributions(spare[source] - 1, sorted(pieces.items())):
                    following = list(counts)
                    for index, amount in share:
                        following[index] += amount
                    yield (mover, vertex, share), (*pair, tuple(following))

    def _replay(self, search, a, b, sub, moves):
        agents = (a, b)
        for mover, vertex, share in moves:
            pair = [search.positions[a], search.positions[b]]
            labels, groups = self._split(sub.vertices, *pair)
            region = groups[labels[vertex]]
            pair[mover] = vertex
            new_labels, _ = self._split(sub.vertices, *pair)
            wanted = {vertex}
            for index, amount in share:
                piece = sorted(
                    (v for v in region if v != vertex and new_labels[v] == index),
                    key=lambda v: (v in search.occupant, v),
                )
                wanted.update(piece[:amount])
            search.arrange(frozenset(region), wanted)
            search.move(agents[mover], vertex)
        for lead, trail in ((a, b), (b, a)):
            sides = self._clear(search, lead, trail, sub)
            if sides:
                return lead, trail, sides
        return None


def smooth_steps(steps):
    """
    Removes loops an agent makes while no other agent moves (including the
    move-there-and-back pair). The joint state before and after a removed loop
    is identical, so the rest of the log stays valid.
    """
    steps = [step for step in steps if step]
    changed = True
    while changed:
        changed = False
        result = []
        index = 0
        while index < len(steps):
            step = steps[index]
            if len(step) != 1:
                result.append(step)
                index += 1
                continue
            agent = step[0][0]
            end = index
            while end < len(steps) and len(steps[end]) == 1 and steps[end][0][0] == agent:
                end += 1
            walk = [steps[index][0][1]] + [steps[k][0][2] for k in range(index, end)]
            erased = []
            for vertex in walk:
                if vertex in erased:
                    del erased[erased.index(vertex) + 1:]
                else:
                    erased.append(vertex)
            if len(erased) - 1 != end - index:
                changed = True
            result.extend(((agent, a, b),) for a, b in zip(erased, erased[1:]))
            index = end
        steps = result
    return steps


def joint_plan(steps, num_agents):
    """
    Schedules the sequential joint steps as early as possible: a step waits
    for each member's previous move and for every target vertex to have been
    left at an earlier index. Members of one step move together.
    """
    ready = [0] * num_agents
    freed = {}
    scheduled = []
    for step in steps:
        moment = max(max(ready[a] for a, _, _ in step), max(freed.get(t, 0) for _, _, t in step))
        for agent, source, target in step:
            ready[agent] = moment + 1
            freed[source] = max(freed.get(source, 0), moment + 1)
        scheduled.append((moment, step))
    length = max((moment + 1 for moment, _ in scheduled), default=0)
    actions = [[MapfAction(WAIT)] * length for _ in range(num_agents)]
    for moment, step in scheduled:
        for agent, _, target in step:
            actions[agent][moment] = MapfAction(MOVE, target)
    return MapfPlan(tuple(tuple(sequence) for sequence in actions))


def solve_push_and_rotate(instance):
    """MapfPlan for a solvable instance, MapfInfeasible otherwise."""
    return PushAndRotateSolver(instance).solve()


# --- MovingAI-style instance exchange ---
def instance_from_scenario(grid, entries, area=None):
    """Builds an instance over the free cells of `grid` (or an inclusive area box) from scenario entries."""
    low, high = area or ((0, 0), (grid.width - 1, grid.height - 1))
    return MapfInstance.from_grid_area(
        grid, low, high,
        [entry.start for entry in entries],
        [entry.goal for entry in entries],
    )


def write_instance_scenario(instance, map_name, width, height):
    """MovingAI `.scen` text for the instance; the optimal-length column is left at 0."""
    return to_movingai_scenario_text([
        ScenarioEntry(0, map_name, width, height, start, goal, 0.0)
        for start, goal in zip(instance.starts, instance.goals)
    ])


def plan_cost(plan):
    """Sum over agents of the index after which they no longer move."""
    total = 0
    for sequence in plan.actions:
        last = 0
        for index, action in enumerate(sequence):
            if action.is_move:
                last = index + 1
        total += last
    return total
