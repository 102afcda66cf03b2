import collections
import itertools

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings
from hypothesis import strategies as st

from navigation_app.grid_world import BFS_DIRECTIONS, Cell, load_movingai_scenario
from navigation_app.mapf_push_rotate import (
    CYCLE,
    JUNCTION,
    MOVE,
    PATH,
    WAIT,
    MapfAction,
    MapfInfeasible,
    MapfInstance,
    MapfPlan,
    PushAndRotateSolver,
    assign_action_duration,
    biconnected_blocks,
    instance_from_scenario,
    joint_plan,
    plan_cost,
    smooth_steps,
    solve_push_and_rotate,
    validate_plan,
    write_instance_scenario,
)

from .fixtures import open_grid

SHAPES = {
    "path3": [(0, 0), (1, 0), (2, 0)],
    "path5": [(i, 0) for i in range(5)],
    "square": [(0, 0), (1, 0), (0, 1), (1, 1)],
    "tee": [(0, 0), (1, 0), (2, 0), (1, 1)],
    "ell": [(0, 0), (1, 0), (2, 0), (2, 1), (2, 2)],
    "square_tail": [(0, 0), (1, 0), (0, 1), (1, 1), (2, 1)],
    "square_tail2": [(0, 0), (1, 0), (0, 1), (1, 1), (2, 1), (3, 1)],
    "rect": [(i, j) for i in range(3) for j in range(2)],
    "plus": [(1, 1), (0, 1), (2, 1), (1, 0), (1, 2)],
    "tee_long": [(0, 0), (1, 0), (2, 0), (3, 0), (4, 0), (2, 1)],
}

TEE9 = [(i, 0) for i in range(7)] + [(3, 1), (3, 2)]


def move(i, j):
    return MapfAction(MOVE, Cell(i, j))


def wait():
    return MapfAction(WAIT)


def reachable(vertices, starts):
    """
    Vertex tuples reachable with one agent moving at a time. This matches
    synchronous execution while no cycle of the graph can be filled with
    agents: always on trees, and for up to three agents on a 4-connected grid.
    """
    adjacency = MapfInstance(frozenset(vertices), starts, starts).adjacency()
    start = tuple(Cell(*s) for s in starts)
    seen = {start}
    queue = collections.deque([start])
    while queue:
        state = queue.popleft()
        occupied = set(state)
        for agent, vertex in enumerate(state):
            for nxt in adjacency[vertex]:
                if nxt in occupied:
                    continue
                following = state[:agent] + (nxt,) + state[agent + 1:]
                if following not in seen:
                    seen.add(following)
                    queue.append(following)
    return seen


def solvable(instance):
    return tuple(instance.goals) in reachable(instance.vertices, instance.starts)


def polyomino(rng, size):
    cells = [(0, 0)]
    while len(cells) < size:
        i, j = cells[rng.integers(len(cells))]
        di, dj = BFS_DIRECTIONS[rng.integers(4)]
        if (i + di, j + dj) not in cells:
            cells.append((i + di, j + dj))
    return cells


def largest_component(grid):
    free = set(grid.free_cells())
    best = []
    while free:
        root = free.pop()
        component = [root]
        queue = collections.deque([root])
        while queue:
            i, j = queue.popleft()
            for di, dj in BFS_DIRECTIONS:
                nxt = Cell(i + di, j + dj)
                if nxt in free:
                    free.discard(nxt)
                    component.append(nxt)
                    queue.append(nxt)
        if len(component) > len(best):
            best = component
    return sorted(best)


def scrambled(rng, vertices, starts, moves):
    """Goals reached from `starts` by random legal single moves, so the instance is solvable."""
    adjacency = MapfInstance(frozenset(vertices), starts, starts).adjacency()
    current = [Cell(*s) for s in starts]
    occupied = set(current)
    for _ in range(moves):
        agent = int(rng.integers(len(current)))
        options = [v for v in adjacency[current[agent]] if v not in occupied]
        if options:
            target = options[rng.integers(len(options))]
            occupied.discard(current[agent])
            occupied.add(target)
            current[agent] = target
    return current


def door_grid(n, door):
    return open_grid(n, blocked=[(n // 2, j) for j in range(n) if j != door])


class InstanceTests(SimpleTestCase):

    def test_starts_must_be_distinct(self):
        with self.assertRaises(ValueError):
            MapfInstance(frozenset(SHAPES["square"]), [(0, 0), (0, 0)], [(1, 0), (1, 1)])

    def test_goal_outside_graph(self):
        with self.assertRaises(ValueError):
            MapfInstance(frozenset(SHAPES["square"]), [(0, 0)], [(5, 5)])

    def test_area_excludes_blocked_cells(self):
        grid = open_grid(6, blocked=[(2, 2)])
        instance = MapfInstance.from_grid_area(grid, (1, 1), (3, 3), [(1, 1)], [(3, 3)])
        self.assertEqual(len(instance.vertices), 8)
        self.assertNotIn(Cell(2, 2), instance.vertices)

    def test_scenario_text_reproduces_instance(self):
        grid = open_grid(8)
        instance = MapfInstance.from_grid_area(grid, (0, 0), (7, 7), [(1, 1), (2, 5)], [(6, 6), (0, 3)])
        text = write_instance_scenario(instance, "open-8x8", 8, 8)
        again = instance_from_scenario(grid, load_movingai_scenario(text))
        self.assertEqual(again.starts, instance.starts)
        self.assertEqual(again.goals, instance.goals)
        self.assertEqual(again.vertices, instance.vertices)


class ValidatorTests(SimpleTestCase):

    def setUp(self):
        self.square = frozenset(SHAPES["square"])

    def test_empty_plan_at_goals(self):
        instance = MapfInstance(self.square, [(0, 0), (1, 1)], [(0, 0), (1, 1)])
        self.assertTrue(validate_plan(instance, MapfPlan(((), ()))))

    def test_exchange_is_an_edge_conflict(self):
        instance = MapfInstance(self.square, [(0, 0), (1, 0)], [(1, 0), (0, 0)])
        report = validate_plan(instance, MapfPlan(((move(1, 0),), (move(0, 0),))))
        self.assertFalse(report)
        self.assertEqual((report.kind, report.index, report.agents), ("edge", 0, (0, 1)))

    def test_same_target_is_a_vertex_conflict(self):
        instance = MapfInstance(self.square, [(0, 0), (1, 1)], [(1, 0), (0, 1)])
        plan = MapfPlan(((move(1, 0), move(1, 1), move(0, 1)), (move(1, 0), wait(), wait())))
        report = validate_plan(instance, plan)
        self.assertEqual((report.kind, report.index), ("vertex", 0))

    def test_jump_is_not_a_move(self):
        instance = MapfInstance(self.square, [(0, 0)], [(1, 1)])
        report = validate_plan(instance, MapfPlan(((move(1, 1),),)))
        self.assertEqual(report.kind, "move")

    def test_wrong_final_vertex(self):
        instance = MapfInstance(self.square, [(0, 0)], [(1, 1)])
        report = validate_plan(instance, MapfPlan(((move(1, 0),),)))
        self.assertEqual((report.kind, report.index), ("goal", 1))

    def test_unequal_lengths(self):
        instance = MapfInstance(self.square, [(0, 0), (1, 1)], [(1, 0), (1, 1)])
        report = validate_plan(instance, MapfPlan(((move(1, 0),), ())))
        self.assertEqual(report.kind, "shape")

    def test_full_rotation_is_valid(self):
        cycle = [(0, 0), (1, 0), (1, 1), (0, 1)]
        instance = MapfInstance(self.square, cycle, cycle[1:] + cycle[:1])
        plan = MapfPlan(tuple((move(*target),) for target in cycle[1:] + cycle[:1]))
        self.assertTrue(validate_plan(instance, plan))

    def test_following_into_a_vacated_vertex_is_valid(self):
        instance = MapfInstance(self.square, [(0, 0), (1, 0), (1, 1)], [(1, 0), (1, 1), (0, 1)])
        plan = MapfPlan(((move(1, 0),), (move(1, 1),), (move(0, 1),)))
        self.assertTrue(validate_plan(instance, plan))


class GraphTests(SimpleTestCase):

    def test_blocks_of_a_square_with_a_tail(self):
        adjacency = MapfInstance(frozenset(SHAPES["square_tail"]), [], []).adjacency()
        blocks = sorted(biconnected_blocks(adjacency), key=len)
        self.assertEqual(blocks, [
            frozenset({Cell(1, 1), Cell(2, 1)}),
            frozenset(Cell(*v) for v in SHAPES["square"]),
        ])

    def test_blocks_of_a_path_and_a_lone_vertex(self):
        adjacency = MapfInstance(frozenset(SHAPES["path3"] + [(5, 5)]), [], []).adjacency()
        self.assertEqual(sorted(map(sorted, biconnected_blocks(adjacency))), [
            [Cell(0, 0), Cell(1, 0)], [Cell(1, 0), Cell(2, 0)], [Cell(5, 5)],
        ])

    def test_rect_is_one_block(self):
        adjacency = MapfInstance(frozenset(SHAPES["rect"]), [], []).adjacency()
        self.assertEqual(biconnected_blocks(adjacency), [frozenset(adjacency)])

    def test_subproblems_per_component(self):
        corridor = [(i, 0) for i in range(4)]
        ring = [(i, j) for i in (10, 11) for j in (0, 1)]
        tee = [(20 + i, j) for i, j in SHAPES["tee"]]
        instance = MapfInstance(
            frozenset(corridor + ring + tee + [(30, 0)]),
            [(0, 0), (1, 0), (10, 0), (20, 0)],
            [(2, 0), (3, 0), (11, 1), (22, 0)],
        )
        found = {sub.kind: (sorted(sub.agents), sub.spare) for sub in PushAndRotateSolver(instance).subproblems()}
        self.assertEqual(found, {PATH: ([0, 1], 2), CYCLE: ([2], 3), JUNCTION: ([3], 3)})


class SolverTests(SimpleTestCase):

    def test_single_agent_on_a_path(self):
        instance = MapfInstance(frozenset(SHAPES["path5"]), [(0, 0)], [(4, 0)])
        plan = solve_push_and_rotate(instance)
        self.assertEqual(plan.length, 4)
        self.assertTrue(all(action.is_move for action in plan.actions[0]))

    def test_swap_on_a_cycle(self):
        instance = MapfInstance(frozenset(SHAPES["square"]), [(0, 0), (1, 0)], [(1, 0), (0, 0)])
        plan = solve_push_and_rotate(instance)
        self.assertTrue(validate_plan(instance, plan))
        self.assertEqual(plan.length, 3)

    def test_swap_on_two_vertices_is_infeasible(self):
        instance = MapfInstance(frozenset([(0, 0), (1, 0)]), [(0, 0), (1, 0)], [(1, 0), (0, 0)])
        result = solve_push_and_rotate(instance)
        self.assertIsInstance(result, MapfInfeasible)
        self.assertIn("corridor", result.reason)

    def test_disconnected_goal(self):
        instance = MapfInstance(frozenset([(0, 0), (1, 0), (3, 0)]), [(0, 0)], [(3, 0)])
        result = solve_push_and_rotate(instance)
        self.assertFalse(result)
        self.assertIn("cannot reach", result.reason)

    def test_no_agents(self):
        self.assertEqual(solve_push_and_rotate(MapfInstance(frozenset(SHAPES["square"]), [], [])).length, 0)

    def test_corridor_keeps_order(self):
        instance = MapfInstance(frozenset(SHAPES["path5"]), [(0, 0), (2, 0), (3, 0)], [(1, 0), (3, 0), (4, 0)])
        plan = solve_push_and_rotate(instance)
        self.assertTrue(validate_plan(instance, plan))
        self.assertEqual(plan.length, 2)

    def test_full_ring_rotates_together(self):
        cycle = [(0, 0), (1, 0), (1, 1), (0, 1)]
        instance = MapfInstance(frozenset(cycle), cycle, cycle[1:] + cycle[:1])
        plan = solve_push_and_rotate(instance)
        self.assertTrue(validate_plan(instance, plan))
        self.assertTrue(all(action.is_move for sequence in plan.actions for action in sequence))

    def test_ring_cannot_reorder(self):
        instance = MapfInstance(frozenset(SHAPES["square"]), [(0, 0), (1, 0), (1, 1)], [(1, 0), (0, 0), (1, 1)])
        result = solve_push_and_rotate(instance)
        self.assertIsInstance(result, MapfInfeasible)
        self.assertIn("cyclic order", result.reason)

    def test_one_spare_vertex_on_a_tee(self):
        instance = MapfInstance(frozenset(SHAPES["tee"]), [(0, 0), (2, 0), (1, 1)], [(2, 0), (0, 0), (1, 1)])
        result = solve_push_and_rotate(instance)
        self.assertIsInstance(result, MapfInfeasible)
        self.assertIn("two spare vertices", result.reason)

    def test_swap_through_a_branch(self):
        instance = MapfInstance(frozenset(SHAPES["tee"]), [(0, 0), (2, 0)], [(2, 0), (0, 0)])
        plan = solve_push_and_rotate(instance)
        self.assertTrue(validate_plan(instance, plan))

    def test_swap_on_the_arm_of_a_long_tee(self):
        instance = MapfInstance(frozenset(SHAPES["tee_long"]), [(0, 0), (1, 0), (2, 0)], [(1, 0), (0, 0), (2, 0)])
        plan = solve_push_and_rotate(instance)
        self.assertTrue(validate_plan(instance, plan))

    def test_pair_search_alone_finds_the_junction(self):
        instance = MapfInstance(frozenset(SHAPES["tee_long"]), [(0, 0), (1, 0), (2, 0)], [(1, 0), (0, 0), (2, 0)])
        plan = PushAndRotateSolver(instance, junction_attempts=0).solve()
        self.assertTrue(validate_plan(instance, plan))
        starved = PushAndRotateSolver(instance, search_limit=0, junction_attempts=0).solve()
        self.assertIsInstance(starved, MapfInfeasible)

    def test_five_agents_on_a_branching_tree(self):
        starts = [(3, 2), (0, 0), (3, 1), (1, 0), (3, 0)]
        goals = [(3, 0), (2, 0), (3, 2), (4, 0), (1, 0)]
        instance = MapfInstance(frozenset(TEE9), starts, goals)
        result = solve_push_and_rotate(instance)
        self.assertEqual(bool(result), solvable(instance))
        if result:
            self.assertTrue(validate_plan(instance, result))

    def test_random_placements_on_a_branching_tree(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            starts = [TEE9[k] for k in rng.permutation(len(TEE9))[:5]]
            goals = [TEE9[k] for k in rng.permutation(len(TEE9))[:5]]
            instance = MapfInstance(frozenset(TEE9), starts, goals)
            with self.subTest(starts=starts, goals=goals):
                result = solve_push_and_rotate(instance)
                self.assertEqual(bool(result), solvable(instance))
                if result:
                    self.assertTrue(validate_plan(instance, result))

    def test_agreement_with_reachability_up_to_three_agents(self):
        # agents are labelled, so unordered start sets with every goal order cover all instances
        for shape, vertices in SHAPES.items():
            for agents in (1, 2, 3):
                for starts in itertools.combinations(vertices, agents):
                    reach = reachable(vertices, starts)
                    for goals in itertools.permutations(vertices, agents):
                        instance = MapfInstance(frozenset(vertices), starts, goals)
                        result = solve_push_and_rotate(instance)
                        expected = tuple(Cell(*g) for g in goals) in reach
                        self.assertEqual(bool(result), expected, msg=f"{shape} {starts} -> {goals}")
                        if result:
                            self.assertTrue(validate_plan(instance, result), msg=f"{shape} {starts} -> {goals}")

    def test_agreement_with_reachability_on_random_polyominoes(self):
        rng = np.random.default_rng(2024)
        for _ in range(500):
            vertices = polyomino(rng, int(rng.integers(2, 7)))
            agents = int(rng.integers(1, min(3, len(vertices)) + 1))
            starts = [vertices[k] for k in rng.permutation(len(vertices))[:agents]]
            goals = [vertices[k] for k in rng.permutation(len(vertices))[:agents]]
            instance = MapfInstance(frozenset(vertices), starts, goals)
            result = solve_push_and_rotate(instance)
            self.assertEqual(bool(result), solvable(instance), msg=f"{vertices} {starts} -> {goals}")
            if result:
                self.assertTrue(validate_plan(instance, result))

    def test_dense_small_grid(self):
        grid = open_grid(3)
        cells = grid.free_cells()
        for seed in range(20):
            rng = np.random.default_rng(seed)
            starts = [cells[k] for k in rng.permutation(9)[:7]]
            goals = [cells[k] for k in rng.permutation(9)[:7]]
            instance = MapfInstance.from_grid_area(grid, (0, 0), (2, 2), starts, goals)
            with self.subTest(seed=seed):
                self.assertTrue(validate_plan(instance, solve_push_and_rotate(instance)))

    def test_crowded_grid(self):
        grid = open_grid(6)
        cells = grid.free_cells()
        for seed in range(5):
            rng = np.random.default_rng(1000 + seed)
            starts = [cells[k] for k in rng.permutation(36)[:30]]
            goals = [cells[k] for k in rng.permutation(36)[:30]]
            instance = MapfInstance.from_grid_area(grid, (0, 0), (5, 5), starts, goals)
            with self.subTest(seed=seed):
                self.assertTrue(validate_plan(instance, solve_push_and_rotate(instance)))

    def test_crossing_through_a_door(self):
        n = 9
        grid = door_grid(n, n // 2)
        left = [c for c in grid.free_cells() if c.i < n // 2]
        right = [c for c in grid.free_cells() if c.i > n // 2]
        for seed in range(10):
            rng = np.random.default_rng(seed)
            starts = [left[k] for k in rng.permutation(len(left))[:8]] + [right[k] for k in rng.permutation(len(right))[:8]]
            goals = [right[k] for k in rng.permutation(len(right))[:8]] + [left[k] for k in rng.permutation(len(left))[:8]]
            instance = MapfInstance.from_grid_area(grid, (0, 0), (n - 1, n - 1), starts, goals)
            with self.subTest(seed=seed):
                self.assertTrue(validate_plan(instance, solve_push_and_rotate(instance)))

    def test_crossing_corners(self):
        corners = [(0, 0), (3, 0), (0, 3), (3, 3)]
        instance = MapfInstance.from_grid_area(open_grid(4), (0, 0), (3, 3), corners, corners[::-1])
        self.assertTrue(validate_plan(instance, solve_push_and_rotate(instance)))

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.integers(4, 12), st.floats(0.0, 0.25))
    def test_reachable_goals_are_always_solved(self, seed, size, density):
        rng = np.random.default_rng(seed)
        blocked = [(i, j) for i in range(size) for j in range(size) if rng.random() < density]
        vertices = largest_component(open_grid(size, blocked=blocked))
        if len(vertices) < 3:
            vertices = [Cell(0, 0), Cell(1, 0), Cell(2, 0)]
        agents = int(rng.integers(1, max(2, len(vertices) // 2) + 1))
        starts = [vertices[k] for k in rng.permutation(len(vertices))[:agents]]
        goals = scrambled(rng, vertices, starts, 30 * agents)
        instance = MapfInstance(frozenset(vertices), starts, goals)
        result = solve_push_and_rotate(instance)
        self.assertTrue(result, msg=getattr(result, "reason", ""))
        self.assertTrue(validate_plan(instance, result))


class PlanShapingTests(SimpleTestCase):

    def test_back_and_forth_is_removed(self):
        steps = [((0, Cell(0, 0), Cell(1, 0)),), ((0, Cell(1, 0), Cell(0, 0)),), ((0, Cell(0, 0), Cell(0, 1)),)]
        self.assertEqual(smooth_steps(steps), [((0, Cell(0, 0), Cell(0, 1)),)])

    def test_loops_are_kept_when_others_move_in_between(self):
        steps = [((0, Cell(0, 0), Cell(1, 0)),), ((1, Cell(2, 0), Cell(2, 1)),), ((0, Cell(1, 0), Cell(0, 0)),)]
        self.assertEqual(smooth_steps(steps), steps)

    def test_independent_moves_share_an_index(self):
        steps = [((0, Cell(0, 0), Cell(1, 0)),), ((1, Cell(0, 2), Cell(1, 2)),)]
        plan = joint_plan(steps, 2)
        self.assertEqual(plan.length, 1)

    def test_entering_a_vertex_waits_for_it_to_be_left(self):
        steps = [((0, Cell(1, 0), Cell(2, 0)),), ((1, Cell(0, 0), Cell(1, 0)),)]
        plan = joint_plan(steps, 2)
        self.assertEqual(plan.actions, ((move(2, 0), wait()), (wait(), move(1, 0))))

    def test_durations(self):
        plan = MapfPlan(((move(1, 0), move(2, 0)),))
        self.assertEqual(assign_action_duration(plan, 1.0).action_duration, 1.0)
        self.assertEqual(assign_action_duration(plan, 0.5).action_duration, 2.0)
        self.assertEqual(assign_action_duration(plan, 2.0).action_duration, 0.5)
        self.assertEqual(assign_action_duration(plan, 0.5).makespan, 4.0)
        with self.assertRaises(ValueError):
            assign_action_duration(plan, 0.0)

    def test_positions_and_cost(self):
        plan = MapfPlan(((move(1, 0), wait()), (wait(), move(0, 1))))
        timeline = plan.positions([Cell(0, 0), Cell(0, 0)])
        self.assertEqual(timeline[-1], (Cell(1, 0), Cell(0, 1)))
        self.assertEqual(plan_cost(plan), 3)
