"""Vehicle plant, trajectory tracking law, and sensing noise.

The inner attitude/rate loops are abstracted as a first-order lag on the
commanded acceleration; position and velocity integrate the lag solution
exactly over each step, so the plant is deterministic at any step size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .world import UavState, UavStatus, Vec3, wrap_angle


@dataclass(frozen=True)
class PlantParams:
    actuation_lag: float = 0.15  # seconds; 0 disables the lag entirely
    a_max: float = 2.5  # hardware clamp per axis
    yaw_rate_max: float = 2.0
    idle_power: float = 100.0  # watts
    accel_power_coeff: float = 30.0  # watts per m/s^2 of commanded effort

    def __post_init__(self) -> None:
        if self.actuation_lag < 0:
            raise ValueError("actuation lag must be >= 0")
        if not (self.a_max > 0 and self.yaw_rate_max > 0):
            raise ValueError("clamps must be > 0")


@dataclass(frozen=True)
class TrackerGains:
    kp: float = 9.0
    kv: float = 6.0
    k_yaw: float = 3.0

    def __post_init__(self) -> None:
        if not (self.kp > 0 and self.kv > 0 and self.k_yaw > 0):
            raise ValueError("gains must be > 0")


def plant_step(
    state: UavState,
    commanded_acceleration: np.ndarray,
    commanded_yaw_rate: float,
    params: PlantParams,
    dt: float,
    power_factor: float = 1.0,
) -> UavState:
    """Advance one step: lagged acceleration, exact integration, battery."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if state.status is not UavStatus.ACTIVE:
        raise ValueError("plant_step requires an active vehicle")
    cmd = np.clip(np.asarray(commanded_acceleration, dtype=float), -params.a_max, params.a_max)
    p0 = state.position.as_array()
    v0 = state.velocity.as_array()
    a0 = state.acceleration.as_array()
    tau = params.actuation_lag
    if tau <= 1e-12:
        a_end = cmd
        a_mean = cmd
        v_end = v0 + cmd * dt
        p_end = p0 + v0 * dt + 0.5 * cmd * dt * dt
    else:
        decay = math.exp(-dt / tau)
        diff = a0 - cmd
        a_end = cmd + diff * decay
        v_end = v0 + cmd * dt + tau * diff * (1.0 - decay)
        p_end = p0 + v0 * dt + 0.5 * cmd * dt * dt + tau * diff * (dt - tau * (1.0 - decay))
        a_mean = cmd + diff * tau * (1.0 - decay) / dt

    rate = float(np.clip(commanded_yaw_rate, -params.yaw_rate_max, params.yaw_rate_max))
    heading = wrap_angle(state.heading + rate * dt)

    power = (params.idle_power + params.accel_power_coeff * float(np.linalg.norm(a_mean)))
    energy = state.battery_energy - power * power_factor * dt
    status = state.status
    if energy <= 0.0:
        energy = 0.0
        status = UavStatus.FAILED
    return replace(
        state,
        position=Vec3.from_array(p_end),
        velocity=Vec3.from_array(v_end),
        acceleration=Vec3.from_array(a_end),
        heading=heading,
        heading_rate=rate,
        battery_energy=energy,
        status=status,
    )


def track(
    reference: tuple[np.ndarray, np.ndarray, np.ndarray, float],
    state: UavState,
    gains: TrackerGains,
    params: PlantParams,
) -> tuple[np.ndarray, float]:
    """Feedforward plus PD feedback at the flat-output level."""
    p_ref, v_ref, a_ref, psi_ref = reference
    a_cmd = (
        np.asarray(a_ref, dtype=float)
        + gains.kv * (np.asarray(v_ref, dtype=float) - state.velocity.as_array())
        + gains.kp * (np.asarray(p_ref, dtype=float) - state.position.as_array())
    )
    a_cmd = np.clip(a_cmd, -params.a_max, params.a_max)
    yaw_rate = gains.k_yaw * wrap_angle(psi_ref - state.heading)
    yaw_rate = float(np.clip(yaw_rate, -params.yaw_rate_max, params.yaw_rate_max))
    return a_cmd, yaw_rate


def sense(
    state: UavState,
    sigma_pos: float,
    sigma_vel: float,
    rng: np.random.Generator,
) -> UavState:
    """Gaussian perturbation of position and velocity; heading exact."""
    if sigma_pos < 0 or sigma_vel < 0:
        raise ValueError("noise levels must be >= 0")
    if sigma_pos == 0 and sigma_vel == 0:
        return state.copy()
    noise_p = rng.normal(0.0, 1.0, size=3) * sigma_pos
    noise_v = rng.normal(0.0, 1.0, size=3) * sigma_vel
    return replace(
        state,
        position=Vec3.from_array(state.position.as_array() + noise_p),
        velocity=Vec3.from_array(state.velocity.as_array() + noise_v),
    )
