import copy
import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings
from hypothesis import strategies as st

from navigation_app.orca_avoidance import (
    AgentMode,
    HalfPlane,
    OrcaParams,
    compute_agent_halfplane,
    compute_obstacle_halfplanes,
    preferred_velocity_toward,
    solve_velocity_lp,
    step_velocity,
    symmetric_tie,
    visible_neighbors,
)

from .fixtures import agent, open_grid

DT = 0.25
STILL = OrcaParams(symmetry_perturbation=0.0)


class VisibleNeighborsTests(SimpleTestCase):

    def test_lone_agent(self):
        me = agent(0, 5, 5)
        self.assertEqual(visible_neighbors(me, [me]), [])

    def test_boundary_is_inclusive(self):
        me, other = agent(0, 5, 5), agent(1, 8, 5)
        self.assertEqual(visible_neighbors(me, [me, other]), [other])

    def test_closest_first_and_capped(self):
        me = agent(0, 0.0, 0.0, visibility_range=5.0)
        others = [agent(k + 1, d, 0.0) for k, d in enumerate((4.0, 1.0, 6.0, 3.0, 2.0))]
        found = visible_neighbors(me, [me, *others], max_neighbors=3)
        self.assertEqual([math.dist(me.position, o.position) for o in found], [1.0, 2.0, 3.0])

    def test_ties_by_id(self):
        me = agent(0, 5, 5)
        found = visible_neighbors(me, [me, agent(7, 6, 5), agent(3, 4, 5)])
        self.assertEqual([o.id for o in found], [3, 7])


class AgentHalfPlaneTests(SimpleTestCase):

    def test_no_conflict_keeps_current_velocity(self):
        me = agent(0, 5, 5, velocity=(1.0, 0.0))
        other = agent(1, 5, 15)
        plane = compute_agent_halfplane(me, other, tau=5.0, dt=DT, safe_buffer=0.19)
        self.assertTrue(plane.contains(me.velocity))

    def test_head_on_pair_is_point_symmetric(self):
        first = agent(0, 8, 10, velocity=(1.0, 0.0))
        second = agent(1, 12, 10, velocity=(-1.0, 0.0))
        a = compute_agent_halfplane(first, second, 5.0, DT, 0.19)
        b = compute_agent_halfplane(second, first, 5.0, DT, 0.19)
        for k in range(2):
            self.assertAlmostEqual(a.normal[k], -b.normal[k])
            self.assertAlmostEqual(a.point[k], -b.point[k])
        self.assertFalse(a.contains(first.velocity))

    def test_overlap_separates_along_centers(self):
        first, second = agent(0, 5.0, 5.0), agent(1, 5.3, 5.0)
        plane = compute_agent_halfplane(first, second, 5.0, DT)
        self.assertAlmostEqual(plane.normal[0], -1.0)
        self.assertAlmostEqual(plane.normal[1], 0.0)
        # the permitted region asks for the full separation within one step
        self.assertAlmostEqual(plane.point[0], -0.5 * (0.6 - 0.3) / DT)

    def test_full_responsibility_doubles_the_shift(self):
        first = agent(0, 8, 10, velocity=(1.0, 0.0))
        second = agent(1, 12, 10, velocity=(-1.0, 0.0))
        half = compute_agent_halfplane(first, second, 5.0, DT, responsibility=0.5)
        full = compute_agent_halfplane(first, second, 5.0, DT, responsibility=1.0)
        for k in range(2):
            self.assertAlmostEqual(full.point[k] - first.velocity[k], 2 * (half.point[k] - first.velocity[k]))


class ObstacleHalfPlaneTests(SimpleTestCase):

    def setUp(self):
        self.grid = open_grid(10, blocked=[(6, j) for j in range(10)])

    def test_open_area_has_no_constraints(self):
        self.assertEqual(compute_obstacle_halfplanes(agent(0, 10, 10), open_grid(20), 2.0, DT, 0.19), [])

    def test_wall_ahead_bounds_the_approach_speed(self):
        me = agent(0, 5.2, 5.0, preferred_velocity=(1.0, 0.0))
        planes = compute_obstacle_halfplanes(me, self.grid, 2.0, DT, 0.19)
        self.assertEqual(len(planes), 1)
        self.assertEqual(planes[0].normal, (-1.0, 0.0))
        velocity = step_velocity(me, [me], self.grid, DT, STILL)
        gap = 0.8 - 0.49
        self.assertLessEqual(velocity[0], gap / 2.0 + 1e-9)
        self.assertGreater(velocity[0], gap / 2.0 - 1e-6)

    def test_walls_at_range_allow_parallel_motion(self):
        me = agent(0, 3.0, 5.0, velocity=(0.0, 1.0))
        planes = compute_obstacle_halfplanes(me, self.grid, 2.0, DT, 0.19)
        self.assertEqual(len(planes), 2)
        self.assertTrue(all(plane.contains(me.velocity) for plane in planes))


class LinearProgramTests(SimpleTestCase):

    def test_unconstrained_is_clamped_preferred(self):
        result = solve_velocity_lp([], (3.0, 4.0), 1.0)
        self.assertAlmostEqual(result[0], 0.6)
        self.assertAlmostEqual(result[1], 0.8)

    def test_single_plane_projects(self):
        result = solve_velocity_lp([HalfPlane((0.0, 0.0), (1.0, 0.0))], (-0.5, 0.3), 2.0)
        self.assertAlmostEqual(result[0], 0.0)
        self.assertAlmostEqual(result[1], 0.3)

    def test_infeasible_set_minimises_the_largest_violation(self):
        s = 1.0 / math.sqrt(2.0)
        planes = [
            HalfPlane((1.0, 0.0), (1.0, 0.0)),
            HalfPlane((0.0, 1.0), (0.0, 1.0)),
            HalfPlane((0.0, 0.0), (-s, -s)),
        ]
        result = solve_velocity_lp(planes, (0.0, 0.0), 1.0)
        t = 1.0 / (1.0 + math.sqrt(2.0))
        self.assertAlmostEqual(result[0], t, places=4)
        self.assertAlmostEqual(result[1], t, places=4)

        xs, ys = np.meshgrid(np.linspace(-1, 1, 401), np.linspace(-1, 1, 401))
        inside = xs ** 2 + ys ** 2 <= 1.0
        worst = np.max([-((xs - p.point[0]) * p.normal[0] + (ys - p.point[1]) * p.normal[1]) for p in planes], axis=0)
        sampled = worst[inside].min()
        achieved = max(plane.violation(result) for plane in planes)
        self.assertLess(abs(achieved - sampled), 1e-2)

    def test_hard_constraints_stay_hard(self):
        planes = [HalfPlane((0.5, 0.0), (1.0, 0.0)), HalfPlane((-0.5, 0.0), (-1.0, 0.0))]
        result = solve_velocity_lp(planes, (0.0, 0.0), 1.0, num_fixed=1)
        self.assertGreaterEqual(result[0], 0.5 - 1e-9)

    @settings(max_examples=150, deadline=None)
    @given(
        st.lists(st.tuples(st.floats(0.0, 2 * math.pi), st.floats(0.05, 1.0)), min_size=1, max_size=6),
        st.tuples(st.floats(-3.0, 3.0), st.floats(-3.0, 3.0)),
        st.floats(0.5, 2.0),
    )
    def test_feasible_sets_are_satisfied(self, raw_planes, preferred, max_speed):
        planes = [
            HalfPlane((-offset * math.cos(angle), -offset * math.sin(angle)), (math.cos(angle), math.sin(angle)))
            for angle, offset in raw_planes
        ]
        result = solve_velocity_lp(planes, preferred, max_speed)
        self.assertLessEqual(math.hypot(*result), max_speed + 1e-9)
        for plane in planes:
            self.assertTrue(plane.contains(result, tolerance=1e-6))
        if math.hypot(*preferred) <= max_speed and all(p.contains(preferred, tolerance=0.0) for p in planes):
            self.assertAlmostEqual(result[0], preferred[0])
            self.assertAlmostEqual(result[1], preferred[1])

    def test_rejects_non_positive_speed(self):
        with self.assertRaises(ValueError):
            solve_velocity_lp([], (1.0, 0.0), 0.0)


class StepVelocityTests(SimpleTestCase):

    def test_lone_agent_follows_preference(self):
        me = agent(0, 10, 10, preferred_velocity=(0.6, -0.3))
        self.assertEqual(step_velocity(me, [me], open_grid(20), DT, STILL), (0.6, -0.3))

    def test_lone_agent_preference_is_not_rotated(self):
        me = agent(0, 10, 10, preferred_velocity=(1.0, 0.0))
        self.assertEqual(step_velocity(me, [me], open_grid(20), DT, OrcaParams()), (1.0, 0.0))

    def test_exact_head_on_tie_is_perturbed(self):
        grid = open_grid(20)
        me = agent(0, 10, 10, velocity=(1.0, 0.0), preferred_velocity=(1.0, 0.0))
        other = agent(1, 13, 10, velocity=(-1.0, 0.0), preferred_velocity=(-1.0, 0.0))
        self.assertTrue(symmetric_tie(me, [other]))
        self.assertNotEqual(
            step_velocity(me, [me, other], grid, DT, OrcaParams()),
            step_velocity(me, [me, other], grid, DT, STILL),
        )

    def test_offset_pair_is_not_perturbed(self):
        grid = open_grid(20)
        me = agent(0, 10, 10, velocity=(1.0, 0.0), preferred_velocity=(1.0, 0.0))
        other = agent(1, 13, 10.5, velocity=(-1.0, 0.0), preferred_velocity=(-1.0, 0.0))
        self.assertFalse(symmetric_tie(me, [other]))
        self.assertEqual(
            step_velocity(me, [me, other], grid, DT, OrcaParams()),
            step_velocity(me, [me, other], grid, DT, STILL),
        )

    def test_neighbour_behind_is_not_a_tie(self):
        me = agent(0, 10, 10, velocity=(1.0, 0.0), preferred_velocity=(1.0, 0.0))
        self.assertFalse(symmetric_tie(me, [agent(1, 8, 10, velocity=(1.0, 0.0))]))

    def test_mirrored_pairs_choose_mirrored_velocities(self):
        grid = open_grid(20)
        rng = np.random.default_rng(11)
        cases = [((2.0, 10.0), (0.5, 0.1), (1.0, 0.2))]
        for _ in range(50):
            cases.append((
                (rng.uniform(0.4, 2.5), rng.uniform(8.0, 12.0)),
                tuple(rng.uniform(-1.0, 1.0, 2) * 0.7),
                tuple(rng.uniform(-1.0, 1.0, 2) * 0.7),
            ))
        for (dx, y), (vx, vy), (px, py) in cases:
            left = agent(0, 10.0 - dx, y, velocity=(vx, vy), preferred_velocity=(px, py))
            right = agent(1, 10.0 + dx, y, velocity=(-vx, vy), preferred_velocity=(-px, py))
            first = step_velocity(left, [left, right], grid, DT, STILL)
            second = step_velocity(right, [left, right], grid, DT, STILL)
            self.assertAlmostEqual(first[0], -second[0], places=7)
            self.assertAlmostEqual(first[1], second[1], places=7)

    def test_preferred_velocity_slows_on_approach(self):
        for target, expected in (((0.1, 0.0), (0.4, 0.0)), ((3.0, 4.0), (0.6, 0.8)), ((0.0, 0.0), (0.0, 0.0))):
            velocity = preferred_velocity_toward((0.0, 0.0), target, 1.0, DT)
            self.assertAlmostEqual(velocity[0], expected[0])
            self.assertAlmostEqual(velocity[1], expected[1])

    def test_executing_agent_calls_are_counted(self):
        me = agent(0, 10, 10, mode=AgentMode.COORDINATED, executing=True)
        step_velocity(me, [me], open_grid(20), DT)
        self.assertEqual(me.orca_calls_while_executing, 1)

    def test_head_on_pair_never_touches(self):
        grid = open_grid(20)
        agents = [agent(0, 8.0, 10.0, goal=(12.0, 10.0)), agent(1, 12.0, 10.0, goal=(8.0, 10.0))]
        params = OrcaParams()
        closest = math.inf
        for _ in range(100):
            snapshot = [copy.copy(a) for a in agents]
            velocities = []
            for me in agents:
                me.preferred_velocity = preferred_velocity_toward(me.position, me.goal, me.max_speed, DT)
                velocities.append(step_velocity(me, snapshot, grid, DT, params))
            for me, velocity in zip(agents, velocities):
                me.velocity = velocity
                me.position = (me.position[0] + velocity[0] * DT, me.position[1] + velocity[1] * DT)
            closest = min(closest, math.dist(agents[0].position, agents[1].position))
        self.assertGreater(closest, 0.6)
        self.assertLess(math.dist(agents[0].position, agents[0].goal), 0.5)
