import math

import numpy as np
import pytest

from linewatch.safety import (
    DegenerateBearingError,
    MpcParams,
    MpcSolution,
    WorkerEstimator,
    advance,
    formation_slots,
    solve_step,
    visibility_cost,
)
from linewatch.world import (
    CameraParams,
    FormationGeometry,
    Scenario,
    Tower,
    UavState,
    Vec3,
    WorkerState,
    wrap_angle,
)


def uav(position, velocity=(0, 0, 0), heading=0.0):
    return UavState(
        position=Vec3(*position),
        velocity=Vec3(*velocity),
        acceleration=Vec3(0, 0, 0),
        heading=heading,
        heading_rate=0.0,
        battery_energy=1e5,
        capabilities=frozenset(["safety-camera"]),
    )


def tower_scenario():
    return Scenario(
        towers=[Tower(center=Vec3(0, 0, 0), radius=15.0, height=20.0)],
        wires=[],
        regions=[],
        workers=[],
        fleet=[],
        v_max=3.0,
        a_max=2.5,
        separation_min=1.0,
        ts=0.1,
        seed=1,
    )


class TestFormationSlots:
    def test_three_slot_geometry(self):
        worker = WorkerState("w", Vec3(0, 0, 10), Vec3(0, 0, 0))
        geometry = FormationGeometry(
            distance=5.0, azimuth_center=0.0, elevation=0.0,
            inter_uav_angle=math.radians(40),
        )
        slots = formation_slots(worker, geometry, 3)
        azimuths = [math.atan2(p.y, p.x) for p, _ in slots]
        assert azimuths == pytest.approx(
            [-math.radians(40), 0.0, math.radians(40)], abs=1e-12
        )
        for position, heading in slots:
            radius = math.hypot(position.x, position.y)
            assert radius == pytest.approx(5.0)
            assert position.z == pytest.approx(10.0)
            azimuth = math.atan2(position.y, position.x)
            assert wrap_angle(heading - (azimuth + math.pi)) == pytest.approx(0.0, abs=1e-12)

    def test_single_slot_at_center_azimuth(self):
        worker = WorkerState("w", Vec3(2, 3, 8), Vec3(0, 0, 0))
        geometry = FormationGeometry(4.0, 1.1, 0.3, 0.7)
        (position, heading), = formation_slots(worker, geometry, 1)
        radius = 4.0 * math.cos(0.3)
        assert position.x == pytest.approx(2 + radius * math.cos(1.1))
        assert position.y == pytest.approx(3 + radius * math.sin(1.1))
        assert position.z == pytest.approx(8 + 4.0 * math.sin(0.3))

    def test_translation_equivariance(self):
        worker = WorkerState("w", Vec3(0, 0, 10), Vec3(0, 0, 0))
        geometry = FormationGeometry(5.0, 0.4, 0.2, 0.6)
        base = formation_slots(worker, geometry, 3)
        moved = WorkerState("w", Vec3(3, -2, 11), Vec3(0, 0, 0))
        shifted = formation_slots(moved, geometry, 3)
        for (p0, h0), (p1, h1) in zip(base, shifted):
            assert p1.x - p0.x == pytest.approx(3.0)
            assert p1.y - p0.y == pytest.approx(-2.0)
            assert p1.z - p0.z == pytest.approx(1.0)
            assert h1 == h0


class TestVisibilityCost:
    camera = CameraParams(fov_horizontal=1.6, fov_vertical=1.2, mount_pitch=0.0)

    def test_on_axis_is_zero(self):
        state = uav((0, 0, 10), heading=0.0)
        worker = WorkerState("w", Vec3(5, 0, 10), Vec3(0, 0, 0))
        assert visibility_cost(state, worker, self.camera) == pytest.approx(0.0)

    def test_half_fov_azimuth(self):
        half = self.camera.fov_horizontal / 2
        state = uav((0, 0, 10), heading=-half)
        worker = WorkerState("w", Vec3(5, 0, 10), Vec3(0, 0, 0))
        cost = visibility_cost(state, worker, self.camera, weights=(1.0, 7.0))
        assert cost == pytest.approx(half * half)

    def test_symmetry(self):
        worker = WorkerState("w", Vec3(5, 0, 10), Vec3(0, 0, 0))
        plus = visibility_cost(uav((0, 0, 10), heading=0.3), worker, self.camera)
        minus = visibility_cost(uav((0, 0, 10), heading=-0.3), worker, self.camera)
        assert plus == pytest.approx(minus)

    def test_degenerate_bearing(self):
        state = uav((5, 0, 10))
        worker = WorkerState("w", Vec3(5, 0, 10), Vec3(0, 0, 0))
        with pytest.raises(DegenerateBearingError):
            visibility_cost(state, worker, self.camera)


class TestAdvance:
    def test_first_call_zero(self):
        warm = advance(None, 5)
        assert warm.shape == (5, 4)
        assert not warm.any()

    def test_shift_rule(self):
        controls = np.arange(12, dtype=float).reshape(3, 4)
        solution = MpcSolution(
            controls=controls,
            positions=np.zeros((4, 3)),
            velocities=np.zeros((4, 3)),
            headings=np.zeros(4),
            perception=[],
            cost_action=0.0,
            cost_perception=0.0,
            residual_eq=0.0,
            residual_ineq=0.0,
            status="converged",
            iterations=1,
        )
        warm = advance(solution, 3)
        assert np.array_equal(warm[0], controls[1])
        assert np.array_equal(warm[1], controls[2])
        assert np.array_equal(warm[2], controls[2])

    def test_constant_sequence_unchanged(self):
        controls = np.tile(np.array([1.0, -0.5, 0.25, 0.1]), (4, 1))
        solution = MpcSolution(
            controls=controls,
            positions=np.zeros((5, 3)),
            velocities=np.zeros((5, 3)),
            headings=np.zeros(5),
            perception=[],
            cost_action=0.0,
            cost_perception=0.0,
            residual_eq=0.0,
            residual_ineq=0.0,
            status="converged",
            iterations=1,
        )
        assert np.array_equal(advance(solution, 4), controls)


def independent_residuals(sol: MpcSolution, worker_path, neighbors, scenario, params):
    """Re-derive every constraint residual from the returned arrays only."""
    from linewatch.world import distance_to_obstacles

    worst_h = -math.inf
    worst_h = max(worst_h, float(np.abs(sol.velocities[1:]).max()) - params.v_max)
    worst_h = max(worst_h, float(np.abs(sol.controls[:, :3]).max()) - params.a_max)
    worst_h = max(worst_h, float(np.abs(sol.controls[:, 3]).max()) - params.yaw_rate_max)
    for k in range(1, sol.positions.shape[0]):
        dist = float(np.linalg.norm(sol.positions[k] - worker_path[k]))
        worst_h = max(worst_h, params.d_min - dist, dist - params.d_max)
        for neighbor in neighbors:
            q = neighbor[min(k, neighbor.shape[0] - 1)]
            worst_h = max(
                worst_h, params.separation_min - float(np.linalg.norm(sol.positions[k] - q))
            )
        if scenario is not None:
            clearance = distance_to_obstacles(Vec3.from_array(sol.positions[k]), scenario)
            worst_h = max(worst_h, params.obstacle_margin - clearance)
    dt = params.dt
    a = sol.controls[:, :3]
    worst_r = 0.0
    for k in range(sol.positions.shape[0] - 1):
        p_next = sol.positions[k] + sol.velocities[k] * dt + 0.5 * a[k] * dt * dt
        v_next = sol.velocities[k] + a[k] * dt
        worst_r = max(worst_r, float(np.abs(sol.positions[k + 1] - p_next).max()))
        worst_r = max(worst_r, float(np.abs(sol.velocities[k + 1] - v_next).max()))
    return worst_h, worst_r


class TestSolveStep:
    camera = CameraParams(1.6, 1.2, -0.35)

    def formation_setup(self):
        worker = WorkerState("w", Vec3(0.0, 15.0, 10.0), Vec3(0.05, 0.0, 0.0))
        geometry = FormationGeometry(5.0, math.pi / 2, 0.35, math.radians(40))
        return worker, formation_slots(worker, geometry, 3)

    def test_equilibrium_controls_are_zero(self):
        worker, slots = self.formation_setup()
        slot = slots[1]
        state = uav((slot[0].x, slot[0].y, slot[0].z), heading=slot[1])
        sol = solve_step(
            state, slot, (worker.position.as_array(), np.zeros(3)), [], None,
            MpcParams(), self.camera,
        )
        assert sol.status == "converged"
        assert float(np.abs(sol.controls[:, :3]).max()) <= 1e-3
        assert sol.cost_perception <= 1e-6

    def test_distance_band_residuals_nonpositive(self):
        worker, slots = self.formation_setup()
        slot = slots[0]
        state = uav((slot[0].x + 1.5, slot[0].y - 1.0, slot[0].z), heading=slot[1])
        params = MpcParams(d_min=2.0, d_max=8.0)
        sol = solve_step(
            state, slot, (worker.position.as_array(), np.zeros(3)), [],
            tower_scenario(), params, self.camera,
        )
        assert sol.status == "converged"
        worker_path = worker.position.as_array()[None, :] + np.zeros((params.shooting_points + 1, 3))
        worst_h, worst_r = independent_residuals(sol, worker_path, [], tower_scenario(), params)
        assert worst_h <= 1e-4
        assert worst_r <= 1e-6

    def test_one_d_toy_matches_grid_enumeration(self):
        # Pure quadratic: slot 1 m ahead, W=3, visibility off, nothing active.
        params = MpcParams(
            horizon=0.75, shooting_points=3,
            w_visibility_h=0.0, w_visibility_v=0.0,
        )
        dt = params.dt
        state = uav((0, 0, 10), heading=0.0)
        slot = (Vec3(1.0, 0.0, 10.0), 0.0)
        worker = np.array([0.0, 0.0, 5.0])  # far below: distance band inactive
        sol = solve_step(state, slot, (worker, np.zeros(3)), [], None, params, self.camera)
        assert sol.status == "converged"

        def action_cost_x(a):
            # a: (..., 3) acceleration grid along x
            x = np.zeros(a.shape[:-1] + (4,))
            v = np.zeros_like(x)
            for k in range(3):
                x[..., k + 1] = x[..., k] + v[..., k] * dt + 0.5 * a[..., k] * dt * dt
                v[..., k + 1] = v[..., k] + a[..., k] * dt
            err = x - 1.0
            cost = params.w_position * (err[..., 1:] ** 2).sum(-1)
            d1 = np.diff(err, axis=-1) / dt
            cost += params.w_deriv1 * (d1**2).sum(-1)
            d2 = np.diff(err, 2, axis=-1) / (dt * dt)
            cost += params.w_deriv2 * (d2**2).sum(-1)
            cost += params.w_effort * (a**2).sum(-1)
            return cost

        grid = np.arange(-2.5, 2.5 + 1e-9, 0.05)
        mesh = np.stack(np.meshgrid(grid, grid, grid, indexing="ij"), axis=-1)
        costs = action_cost_x(mesh)
        best_idx = np.unravel_index(np.argmin(costs), costs.shape)
        grid_best = float(costs[best_idx])
        qp_cost = float(action_cost_x(sol.controls[:, 0][None, :])[0])
        assert qp_cost <= grid_best + 1e-9
        assert abs(qp_cost - grid_best) <= 1e-2
        # Off-axis components stay quiet.
        assert float(np.abs(sol.controls[:, 1:3]).max()) <= 1e-6

    def test_translation_invariance(self):
        worker, slots = self.formation_setup()
        slot = slots[2]
        offset = np.array([11.0, -7.0, 3.0])
        state_a = uav((slot[0].x + 1.0, slot[0].y, slot[0].z - 0.5), heading=slot[1])
        state_b = uav(
            (slot[0].x + 1.0 + offset[0], slot[0].y + offset[1], slot[0].z - 0.5 + offset[2]),
            heading=slot[1],
        )
        neighbors_a = [np.tile(slot[0].as_array() + np.array([2.0, 0, 0]), (21, 1))]
        neighbors_b = [n + offset for n in neighbors_a]
        args_a = (
            (worker.position.as_array(), worker.velocity.as_array()),
            neighbors_a, None, MpcParams(), self.camera,
        )
        args_b = (
            (worker.position.as_array() + offset, worker.velocity.as_array()),
            neighbors_b, None, MpcParams(), self.camera,
        )
        slot_b = (Vec3.from_array(slot[0].as_array() + offset), slot[1])
        sol_a = solve_step(state_a, slot, *args_a)
        sol_b = solve_step(state_b, slot_b, *args_b)
        assert np.allclose(sol_a.controls, sol_b.controls, atol=1e-9)
        assert np.allclose(sol_a.positions + offset, sol_b.positions, atol=1e-9)

    def test_warm_start_never_increases_iterations(self):
        worker, slots = self.formation_setup()
        slot = slots[1]
        state = uav((slot[0].x + 1.2, slot[0].y - 0.8, slot[0].z), heading=slot[1])
        params = MpcParams()
        estimate = (worker.position.as_array(), np.zeros(3))
        cold_iters = []
        warm_iters = []
        previous = None
        for _ in range(6):
            cold = solve_step(state, slot, estimate, [], None, params, self.camera)
            cold_iters.append(cold.iterations)
            warm = solve_step(
                state, slot, estimate, [], None, params, self.camera,
                warm_start=advance(previous, params.shooting_points),
            )
            warm_iters.append(warm.iterations)
            previous = warm
        assert float(np.median(warm_iters)) <= float(np.median(cold_iters))

    def test_infeasible_band_degrades_to_braking(self):
        worker, slots = self.formation_setup()
        slot = slots[1]
        # Start far outside the band flying away; a single outer iteration
        # cannot recover, so the controller must flag and brake.
        state = uav(
            (worker.position.x, worker.position.y + 30.0, worker.position.z + 5.0),
            velocity=(0.0, 3.0, 0.0),
            heading=slot[1],
        )
        params = MpcParams(max_outer_iterations=1, trust_region=0.2)
        sol = solve_step(
            state, slot, (worker.position.as_array(), np.zeros(3)), [], None,
            params, self.camera,
        )
        assert sol.status == "degraded"
        # The braking sequence kills the initial velocity within bounds.
        assert float(np.abs(sol.controls[:, :3]).max()) <= params.a_max + 1e-9
        assert float(np.abs(sol.velocities[-1]).max()) <= 1e-6

    def test_certification_on_random_scenes(self):
        rng = np.random.default_rng(17)
        worker_state = WorkerState("w", Vec3(0.0, 17.0, 10.0), Vec3(0, 0, 0))
        geometry = FormationGeometry(5.0, math.pi / 2, 0.3, 0.6)
        slots = formation_slots(worker_state, geometry, 3)
        params = MpcParams()
        scenario = tower_scenario()
        converged = 0
        for _ in range(25):
            slot = slots[int(rng.integers(3))]
            start = slot[0].as_array() + rng.uniform(-1.5, 1.5, size=3)
            vel = rng.uniform(-1.0, 1.0, size=3)
            state = uav(tuple(start), velocity=tuple(vel), heading=slot[1])
            neighbor = [
                np.tile(slots[0][0].as_array() + np.array([0.0, 2.5, 0.0]), (params.shooting_points + 1, 1))
            ]
            sol = solve_step(
                state, slot, (worker_state.position.as_array(), np.zeros(3)),
                neighbor, scenario, params, self.camera,
            )
            if sol.status != "converged":
                continue
            converged += 1
            worker_path = np.tile(
                worker_state.position.as_array(), (params.shooting_points + 1, 1)
            )
            worst_h, worst_r = independent_residuals(sol, worker_path, neighbor, scenario, params)
            assert worst_h <= 1e-4
            assert worst_r <= 1e-6
        assert converged >= 20


class TestWorkerEstimator:
    def test_converges_to_constant_velocity_track(self):
        est = WorkerEstimator(time_constant=0.5)
        truth_v = np.array([0.2, -0.1, 0.0])
        for i in range(200):
            t = i * 0.1
            est.update(np.array([1.0, 2.0, 3.0]) + truth_v * t, t)
        pos, vel = est.estimate()
        assert np.allclose(vel, truth_v, atol=0.02)
        assert np.allclose(pos, np.array([1.0, 2.0, 3.0]) + truth_v * 19.9, atol=0.05)

    def test_requires_measurements(self):
        with pytest.raises(RuntimeError):
            WorkerEstimator().estimate()
