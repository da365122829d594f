import math

import numpy as np
import pytest

from linewatch.plant import PlantParams, TrackerGains, plant_step, sense, track
from linewatch.world import UavState, UavStatus, Vec3


def make_state(position=(0, 0, 10), velocity=(0, 0, 0), acceleration=(0, 0, 0), energy=10000.0):
    return UavState(
        position=Vec3(*position),
        velocity=Vec3(*velocity),
        acceleration=Vec3(*acceleration),
        heading=0.0,
        heading_rate=0.0,
        battery_energy=energy,
        capabilities=frozenset(),
    )


class TestPlantStep:
    def test_zero_command_from_rest(self):
        params = PlantParams(idle_power=150.0)
        state = make_state()
        out = plant_step(state, np.zeros(3), 0.0, params, dt=0.01)
        assert out.position == state.position
        assert out.velocity == state.velocity
        assert out.battery_energy == pytest.approx(10000.0 - 150.0 * 0.01)

    def test_double_integrator_limit(self):
        # lag -> 0: exact double integrator over many steps
        params = PlantParams(actuation_lag=0.0, idle_power=1.0)
        state = make_state()
        a = np.array([1.0, -0.5, 0.25])
        dt = 0.01
        for _ in range(200):
            state = plant_step(state, a, 0.0, params, dt)
        t = 200 * dt
        assert np.allclose(
            state.position.as_array(), np.array([0, 0, 10]) + 0.5 * a * t * t, atol=1e-6
        )
        assert np.allclose(state.velocity.as_array(), a * t, atol=1e-6)

    def test_first_order_lag_closed_form(self):
        tau = 0.15
        params = PlantParams(actuation_lag=tau, idle_power=1.0)
        state = make_state()
        a_cmd = np.array([2.0, 0.0, 0.0])
        dt = 0.01
        for k in range(1, 301):
            state = plant_step(state, a_cmd, 0.0, params, dt)
            t = k * dt
            expected_v = a_cmd[0] * (t - tau * (1.0 - math.exp(-t / tau)))
            assert state.velocity.x == pytest.approx(expected_v, abs=1e-6)

    def test_matches_planner_update_without_lag(self):
        # Per-step parity with the planner's discrete double integrator.
        params = PlantParams(actuation_lag=0.0, idle_power=1.0, a_max=10.0)
        rng = np.random.default_rng(3)
        state = make_state(velocity=(0.5, -0.2, 0.1))
        dt = 0.1
        for _ in range(100):
            a = rng.uniform(-2.0, 2.0, size=3)
            p0 = state.position.as_array()
            v0 = state.velocity.as_array()
            state = plant_step(state, a, 0.0, params, dt)
            assert np.allclose(
                state.position.as_array(), p0 + v0 * dt + 0.5 * a * dt * dt, atol=1e-9
            )
            assert np.allclose(state.velocity.as_array(), v0 + a * dt, atol=1e-9)

    def test_hardware_clamp(self):
        params = PlantParams(actuation_lag=0.0, a_max=2.5, idle_power=1.0)
        state = plant_step(make_state(), np.array([100.0, 0, 0]), 0.0, params, 0.01)
        assert state.acceleration.x == pytest.approx(2.5)

    def test_battery_exhaustion_fails_vehicle(self):
        params = PlantParams(idle_power=1000.0)
        state = make_state(energy=5.0)
        out = plant_step(state, np.zeros(3), 0.0, params, dt=0.01)
        assert out.battery_energy == 0.0
        assert out.status is UavStatus.FAILED

    def test_energy_never_increases(self):
        params = PlantParams(idle_power=10.0)
        rng = np.random.default_rng(5)
        state = make_state()
        last = state.battery_energy
        for _ in range(500):
            state = plant_step(state, rng.uniform(-2, 2, 3), rng.uniform(-1, 1), params, 0.01)
            assert state.battery_energy <= last
            last = state.battery_energy

    def test_yaw_integration_and_wrap(self):
        params = PlantParams(idle_power=1.0, yaw_rate_max=2.0)
        state = make_state()
        for _ in range(400):
            state = plant_step(state, np.zeros(3), 1.0, params, 0.01)
        assert abs(state.heading) <= math.pi

    def test_requires_active_vehicle(self):
        state = make_state()
        state.status = UavStatus.LANDED
        with pytest.raises(ValueError):
            plant_step(state, np.zeros(3), 0.0, PlantParams(), 0.01)


class TestTrack:
    params = PlantParams(a_max=2.5, yaw_rate_max=2.0)
    gains = TrackerGains(kp=6.0, kv=4.0, k_yaw=3.0)

    def test_on_reference_returns_feedforward(self):
        state = make_state(position=(1, 2, 3), velocity=(0.5, 0, 0))
        a_ref = np.array([0.3, -0.2, 0.1])
        cmd, yaw = track(
            (np.array([1.0, 2.0, 3.0]), np.array([0.5, 0, 0]), a_ref, 0.0),
            state, self.gains, self.params,
        )
        assert np.allclose(cmd, a_ref)
        assert yaw == 0.0

    def test_pure_position_offset(self):
        state = make_state(position=(0, 0, 10))
        offset = np.array([0.2, -0.1, 0.05])
        cmd, _ = track(
            (np.array([0, 0, 10.0]) + offset, np.zeros(3), np.zeros(3), 0.0),
            state, self.gains, self.params,
        )
        assert np.allclose(cmd, self.gains.kp * offset)

    def test_clamped(self):
        state = make_state()
        cmd, yaw = track(
            (np.array([100.0, 0, 10]), np.zeros(3), np.zeros(3), 3.0),
            state, self.gains, self.params,
        )
        assert cmd[0] == pytest.approx(2.5)
        assert yaw == pytest.approx(2.0)


class TestSense:
    def test_zero_noise_is_identity(self):
        state = make_state(position=(1, 2, 3), velocity=(0.1, 0.2, 0.3))
        out = sense(state, 0.0, 0.0, np.random.default_rng(0))
        assert out.position == state.position
        assert out.velocity == state.velocity

    def test_sample_std_matches_sigma(self):
        state = make_state()
        rng = np.random.default_rng(42)
        deltas = np.array(
            [
                sense(state, 0.5, 0.0, rng).position.as_array() - state.position.as_array()
                for _ in range(10000)
            ]
        )
        stds = deltas.std(axis=0)
        assert np.all(stds > 0.45) and np.all(stds < 0.55)

    def test_heading_exact(self):
        state = make_state()
        out = sense(state, 1.0, 1.0, np.random.default_rng(1))
        assert out.heading == state.heading

    def test_same_seed_same_noise(self):
        state = make_state()
        a = sense(state, 0.3, 0.3, np.random.default_rng(9))
        b = sense(state, 0.3, 0.3, np.random.default_rng(9))
        assert a.position == b.position
        assert a.velocity == b.velocity
