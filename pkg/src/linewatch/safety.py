"""Perception-aware receding-horizon control for worker monitoring.

Each vehicle tracks a formation slot around the worker while keeping the
worker inside its camera cone and respecting hard limits: speed and
acceleration boxes, a worker distance band, separation from the other
formation members' published predictions, and obstacle clearance. The
flat model is linear (per-axis double integrator driven by commanded
acceleration plus a decoupled yaw integrator), so each outer iteration
linearizes only the distance and bearing terms and solves one convex QP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .qp import solve_qp
from .world import (
    CameraParams,
    FormationGeometry,
    Scenario,
    UavState,
    Vec3,
    WorkerState,
    obstacle_distance_gradient,
    wrap_angle,
)


class DegenerateBearingError(ValueError):
    """Worker coincident with the vehicle position: bearing undefined."""


@dataclass(frozen=True)
class MpcParams:
    horizon: float = 2.0
    shooting_points: int = 20
    w_position: float = 4.0
    w_heading: float = 2.0
    w_deriv1: float = 1.0
    w_deriv2: float = 0.25
    w_effort: float = 0.05
    w_yaw_effort: float = 0.05
    w_visibility_h: float = 2.0
    w_visibility_v: float = 1.0
    d_min: float = 2.0
    d_max: float = 8.0
    separation_min: float = 1.0
    obstacle_margin: float = 1.0
    v_max: float = 3.0
    a_max: float = 2.5
    yaw_rate_max: float = 2.0
    max_outer_iterations: int = 5
    tolerance: float = 1e-4
    trust_region: float = 3.0
    screening_slack: float = 1.5

    def __post_init__(self) -> None:
        if self.shooting_points < 2:
            raise ValueError("need at least two shooting points")
        if not self.d_min < self.d_max:
            raise ValueError("d_min must be below d_max")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        for name in (
            "w_position", "w_heading", "w_deriv1", "w_deriv2", "w_effort",
            "w_yaw_effort", "w_visibility_h", "w_visibility_v",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def dt(self) -> float:
        return self.horizon / self.shooting_points

    @staticmethod
    def from_dict(doc: dict) -> "MpcParams":
        known = {k: doc[k] for k in doc if k in MpcParams.__dataclass_fields__}
        return MpcParams(**known)


@dataclass
class PerceptionState:
    azimuth_error: float
    elevation_error: float
    distance: float


@dataclass
class MpcSolution:
    controls: np.ndarray  # (W, 4): ax, ay, az, yaw rate
    positions: np.ndarray  # (W+1, 3)
    velocities: np.ndarray  # (W+1, 3)
    headings: np.ndarray  # (W+1,)
    perception: list[PerceptionState]
    cost_action: float
    cost_perception: float
    residual_eq: float
    residual_ineq: float
    status: str  # "converged" | "degraded"
    iterations: int


def formation_slots(
    worker: WorkerState, geometry: FormationGeometry, g: int
) -> list[tuple[Vec3, float]]:
    """Slot poses on a circle around the worker, headings facing inward."""
    if g < 1:
        raise ValueError("need at least one vehicle")
    radius = geometry.distance * math.cos(geometry.elevation)
    height = worker.position.z + geometry.distance * math.sin(geometry.elevation)
    slots = []
    for i in range(g):
        azimuth = geometry.azimuth_center + (i - (g - 1) / 2.0) * geometry.inter_uav_angle
        position = Vec3(
            worker.position.x + radius * math.cos(azimuth),
            worker.position.y + radius * math.sin(azimuth),
            height,
        )
        slots.append((position, wrap_angle(azimuth + math.pi)))
    return slots


def bearing_errors(
    position: np.ndarray, heading: float, worker: np.ndarray, mount_pitch: float
) -> tuple[float, float, float]:
    rel = worker - position
    horizontal = math.hypot(rel[0], rel[1])
    distance = float(np.linalg.norm(rel))
    if distance < 1e-9:
        raise DegenerateBearingError("worker coincides with the vehicle position")
    azimuth_error = wrap_angle(math.atan2(rel[1], rel[0]) - heading)
    elevation_error = math.atan2(rel[2], horizontal) - mount_pitch
    return azimuth_error, elevation_error, distance


def visibility_cost(
    state: UavState,
    worker: WorkerState,
    camera: CameraParams,
    weights: tuple[float, float] = (1.0, 1.0),
) -> float:
    """Quadratic penalty on the worker's offset from the camera axis."""
    az, el, _ = bearing_errors(
        state.position.as_array(), state.heading, worker.position.as_array(), camera.mount_pitch
    )
    w_h, w_v = weights
    return w_h * az * az + w_v * el * el


def advance(previous: Optional[MpcSolution], shooting_points: int) -> np.ndarray:
    """Receding-horizon warm start: shift one interval, repeat the tail."""
    if previous is None:
        return np.zeros((shooting_points, 4))
    shifted = np.vstack([previous.controls[1:], previous.controls[-1:]])
    return shifted


class _Maps:
    """Linear maps from stacked controls to the predicted flat states."""

    def __init__(self, w: int, dt: float):
        self.w = w
        self.dt = dt
        k = np.arange(w + 1)[:, None]
        m = np.arange(w)[None, :]
        mask = m < k
        self.pos = np.where(mask, dt * dt * (k - m - 0.5), 0.0)  # (W+1, W)
        self.vel = np.where(mask, dt, 0.0)
        self.yaw = np.where(mask, dt, 0.0)

    def rollout(self, u: np.ndarray, state: UavState):
        w, dt = self.w, self.dt
        a = u[: 3 * w].reshape(w, 3)
        r = u[3 * w :]
        p0 = state.position.as_array()
        v0 = state.velocity.as_array()
        steps = np.arange(w + 1)[:, None]
        positions = p0 + steps * dt * v0 + self.pos @ a
        velocities = v0 + self.vel @ a
        headings = state.heading + self.yaw @ r
        return positions, velocities, headings


def _position_row(maps: _Maps, k: int, direction: np.ndarray, n_u: int) -> np.ndarray:
    """Row of d(direction . p_k)/du."""
    row = np.zeros(n_u)
    for axis in range(3):
        row[axis : 3 * maps.w : 3] += direction[axis] * maps.pos[k]
    return row


def _heading_row(maps: _Maps, k: int, n_u: int) -> np.ndarray:
    row = np.zeros(n_u)
    row[3 * maps.w :] = maps.yaw[k]
    return row


class _Structure:
    """Solve-invariant matrices for a given parameter set."""

    def __init__(self, params: MpcParams):
        w = params.shooting_points
        dt = params.dt
        n_u = 4 * w
        self.maps = _Maps(w, dt)
        self.n_u = n_u
        rows: list[np.ndarray] = []
        weights: list[float] = []
        for k in range(1, w + 1):
            for axis in range(3):
                row = np.zeros(n_u)
                row[axis : 3 * w : 3] = self.maps.pos[k]
                rows.append(row)
                weights.append(params.w_position)
        for k in range(w):
            for axis in range(3):
                row = np.zeros(n_u)
                row[axis : 3 * w : 3] = (self.maps.pos[k + 1] - self.maps.pos[k]) / dt
                rows.append(row)
                weights.append(params.w_deriv1)
        for k in range(w - 1):
            for axis in range(3):
                row = np.zeros(n_u)
                row[axis : 3 * w : 3] = (
                    self.maps.pos[k + 2] - 2.0 * self.maps.pos[k + 1] + self.maps.pos[k]
                ) / (dt * dt)
                rows.append(row)
                weights.append(params.w_deriv2)
        for k in range(1, w + 1):
            rows.append(_heading_row(self.maps, k, n_u))
            weights.append(params.w_heading)
        eye = np.eye(n_u)
        for idx in range(3 * w):
            rows.append(eye[idx])
            weights.append(params.w_effort)
        for idx in range(3 * w, n_u):
            rows.append(eye[idx])
            weights.append(params.w_yaw_effort)
        self.track_rows = np.stack(rows)
        self.track_weights = np.asarray(weights)
        self.h_track = 2.0 * (self.track_rows * self.track_weights[:, None]).T @ self.track_rows
        self.h_track += 1e-8 * np.eye(n_u)

        # Constant inequality rows: variable bounds and velocity boxes.
        vel_rows = []
        for k in range(1, w + 1):
            for axis in range(3):
                row = np.zeros(n_u)
                row[axis : 3 * w : 3] = self.maps.vel[k]
                vel_rows.append(row)
        self.vel_rows = np.stack(vel_rows)
        self.g_base = np.vstack([eye, -eye, self.vel_rows, -self.vel_rows])
        limits = np.concatenate(
            [np.full(3 * w, params.a_max), np.full(w, params.yaw_rate_max)]
        )
        self.bound_limits = limits

    def track_consts(self, base_err: np.ndarray, heading_consts: np.ndarray, params: MpcParams):
        dt = params.dt
        w = params.shooting_points
        parts = [
            base_err[1:].reshape(-1),
            (np.diff(base_err, axis=0) / dt).reshape(-1),
            (np.diff(base_err, 2, axis=0) / (dt * dt)).reshape(-1),
            heading_consts,
            np.zeros(4 * w),
        ]
        return np.concatenate(parts)


_STRUCTURES: dict[MpcParams, _Structure] = {}


def _structure(params: MpcParams) -> _Structure:
    cached = _STRUCTURES.get(params)
    if cached is None:
        cached = _Structure(params)
        if len(_STRUCTURES) > 8:
            _STRUCTURES.clear()
        _STRUCTURES[params] = cached
    return cached


def solve_step(
    current: UavState,
    slot: tuple[Vec3, float],
    worker_estimate: tuple[np.ndarray, np.ndarray],
    neighbors: Sequence[np.ndarray],
    scenario: Optional[Scenario],
    params: MpcParams,
    camera: Optional[CameraParams] = None,
    warm_start: Optional[np.ndarray] = None,
) -> MpcSolution:
    """One receding-horizon solve; the caller applies only the first control.

    The worker estimate is extrapolated at constant velocity across the
    horizon and the slot translates with it. Converged status certifies
    the re-evaluated nonlinear inequality residuals at every shooting
    point; otherwise a braking sequence is returned.
    """
    w = params.shooting_points
    dt = params.dt
    n_u = 4 * w
    structure = _structure(params)
    maps = structure.maps
    camera = camera or CameraParams(1.6, 1.2, 0.0)

    worker_pos, worker_vel = worker_estimate
    worker_path = worker_pos[None, :] + np.arange(w + 1)[:, None] * dt * worker_vel[None, :]
    slot_pos, slot_heading = slot
    slot_path = slot_pos.as_array()[None, :] + np.arange(w + 1)[:, None] * dt * worker_vel[None, :]

    # Unwrapped heading target nearest to the current heading.
    heading_ref = np.full(w + 1, current.heading + wrap_angle(slot_heading - current.heading))

    u = warm_start.reshape(-1).copy() if warm_start is not None else np.zeros(n_u)
    iterations = 0
    for outer in range(params.max_outer_iterations):
        iterations = outer + 1
        positions, velocities, headings = maps.rollout(u, current)
        base_pos = positions - maps.pos @ u[: 3 * w].reshape(w, 3)
        base_vel = velocities - maps.vel @ u[: 3 * w].reshape(w, 3)
        base_err = base_pos - slot_path
        heading_consts = np.full(w, current.heading) - heading_ref[1:]
        consts = structure.track_consts(base_err, heading_consts, params)

        # Visibility: linearized bearing errors toward the worker path.
        vis_rows: list[np.ndarray] = []
        vis_consts: list[float] = []
        vis_weights: list[float] = []
        for k in range(1, w + 1):
            rel = worker_path[k] - positions[k]
            horiz2 = rel[0] * rel[0] + rel[1] * rel[1]
            dist2 = horiz2 + rel[2] * rel[2]
            if dist2 < 1e-12:
                continue
            az_err = wrap_angle(math.atan2(rel[1], rel[0]) - headings[k])
            daz_dp = np.array([rel[1], -rel[0], 0.0]) / max(horiz2, 1e-9)
            row = _position_row(maps, k, daz_dp, n_u) - _heading_row(maps, k, n_u)
            vis_rows.append(row)
            vis_consts.append(az_err - row @ u)
            vis_weights.append(params.w_visibility_h)
            horiz = math.sqrt(max(horiz2, 1e-12))
            el_err = math.atan2(rel[2], horiz) - camera.mount_pitch
            del_dp = np.array(
                [rel[0] * rel[2] / horiz, rel[1] * rel[2] / horiz, -horiz]
            ) / max(dist2, 1e-9)
            row = _position_row(maps, k, del_dp, n_u)
            vis_rows.append(row)
            vis_consts.append(el_err - row @ u)
            vis_weights.append(params.w_visibility_v)

        hess = structure.h_track.copy()
        grad_vec = 2.0 * structure.track_rows.T @ (structure.track_weights * consts)
        if vis_rows:
            vr = np.stack(vis_rows)
            vw = np.asarray(vis_weights)
            vc = np.asarray(vis_consts)
            hess += 2.0 * (vr * vw[:, None]).T @ vr
            grad_vec += 2.0 * vr.T @ (vw * vc)

        # Constant rows: variable bounds folded with the trust region, then
        # velocity boxes; screened nonlinear rows appended after.
        upper = np.minimum(structure.bound_limits, u + params.trust_region)
        lower = np.minimum(structure.bound_limits, params.trust_region - u)
        vel_flat = base_vel[1:].reshape(-1)
        rhs = np.concatenate(
            [upper, lower, params.v_max - vel_flat, params.v_max + vel_flat]
        )
        rows_g: list[np.ndarray] = []
        rhs_h: list[float] = []
        for k in range(1, w + 1):
            rel = positions[k] - worker_path[k]
            dist = float(np.linalg.norm(rel))
            if dist < 1e-9:
                direction = np.array([1.0, 0.0, 0.0])
                dist = 1e-9
            else:
                direction = rel / dist
            drow = None
            if dist < params.d_min + params.screening_slack:
                drow = _position_row(maps, k, direction, n_u)
                base_proj = dist - drow @ u
                rows_g.append(-drow)
                rhs_h.append(base_proj - params.d_min)
            if dist > params.d_max - params.screening_slack:
                if drow is None:
                    drow = _position_row(maps, k, direction, n_u)
                base_proj = dist - drow @ u
                rows_g.append(drow)
                rhs_h.append(params.d_max - base_proj)
            for neighbor in neighbors:
                q = neighbor[min(k, neighbor.shape[0] - 1)]
                rel_n = positions[k] - q
                dist_n = float(np.linalg.norm(rel_n))
                if dist_n >= params.separation_min + params.screening_slack:
                    continue
                dir_n = rel_n / dist_n if dist_n > 1e-9 else np.array([1.0, 0.0, 0.0])
                nrow = _position_row(maps, k, dir_n, n_u)
                base_n = dist_n - nrow @ u
                rows_g.append(-nrow)
                rhs_h.append(base_n - params.separation_min)
            if scenario is not None and (scenario.towers or scenario.wires):
                clearance, grad = obstacle_distance_gradient(
                    Vec3.from_array(positions[k]), scenario
                )
                if clearance < params.obstacle_margin + params.screening_slack:
                    orow = _position_row(maps, k, grad, n_u)
                    base_c = clearance - orow @ u
                    rows_g.append(-orow)
                    rhs_h.append(base_c - params.obstacle_margin)

        if rows_g:
            g_mat = np.vstack([structure.g_base, np.stack(rows_g)])
            h_vec = np.concatenate([rhs, np.asarray(rhs_h)])
        else:
            g_mat = structure.g_base
            h_vec = rhs
        result = solve_qp(hess, grad_vec, g_mat, h_vec, x0=u)
        step = result.x - u
        u = result.x
        if float(np.abs(step).max()) < 1e-6:
            break

    positions, velocities, headings = maps.rollout(u, current)
    controls = np.hstack([u[: 3 * w].reshape(w, 3), u[3 * w :].reshape(w, 1)])
    residual_ineq = _max_inequality_residual(
        positions, velocities, controls, worker_path, neighbors, scenario, params
    )
    residual_eq = _max_equality_residual(positions, velocities, headings, controls, current, dt)
    status = "converged" if residual_ineq <= params.tolerance else "degraded"
    if status == "degraded":
        controls = _braking_sequence(current, params)
        positions, velocities, headings = maps.rollout(
            np.concatenate([controls[:, :3].reshape(-1), controls[:, 3]]), current
        )

    perception = []
    cost_perception = 0.0
    for k in range(w + 1):
        try:
            az, el, dist = bearing_errors(
                positions[k], headings[k], worker_path[k], camera.mount_pitch
            )
        except DegenerateBearingError:
            az, el, dist = 0.0, 0.0, 1e-9
        perception.append(PerceptionState(az, el, dist))
        if k >= 1:
            cost_perception += (
                params.w_visibility_h * az * az + params.w_visibility_v * el * el
            )
    cost_action = _action_cost(positions, headings, controls, slot_path, heading_ref, params)
    return MpcSolution(
        controls=controls,
        positions=positions,
        velocities=velocities,
        headings=np.array([wrap_angle(h) for h in headings]),
        perception=perception,
        cost_action=cost_action,
        cost_perception=cost_perception,
        residual_eq=residual_eq,
        residual_ineq=residual_ineq,
        status=status,
        iterations=iterations,
    )


def _action_cost(positions, headings, controls, slot_path, heading_ref, params: MpcParams):
    dt = params.dt
    err = positions - slot_path
    cost = params.w_position * float((err[1:] ** 2).sum())
    d1 = np.diff(err, axis=0) / dt
    cost += params.w_deriv1 * float((d1**2).sum())
    d2 = np.diff(err, 2, axis=0) / (dt * dt)
    cost += params.w_deriv2 * float((d2**2).sum())
    herr = headings[1:] - heading_ref[1:]
    cost += params.w_heading * float((herr**2).sum())
    cost += params.w_effort * float((controls[:, :3] ** 2).sum())
    cost += params.w_yaw_effort * float((controls[:, 3] ** 2).sum())
    return cost


def _max_equality_residual(positions, velocities, headings, controls, current: UavState, dt):
    """Independent re-check of the flat dynamics on the returned states."""
    a = controls[:, :3]
    r = controls[:, 3]
    dp = positions[1:] - (positions[:-1] + velocities[:-1] * dt + 0.5 * a * dt * dt)
    dv = velocities[1:] - (velocities[:-1] + a * dt)
    dh = headings[1:] - (headings[:-1] + r * dt)
    first = np.abs(positions[0] - current.position.as_array()).max()
    return float(
        max(np.abs(dp).max(), np.abs(dv).max(), np.abs(dh).max(), first)
    )


def _max_inequality_residual(
    positions, velocities, controls, worker_path, neighbors, scenario, params: MpcParams
):
    worst = 0.0
    worst = max(worst, float(np.abs(velocities[1:]).max() - params.v_max))
    worst = max(worst, float(np.abs(controls[:, :3]).max() - params.a_max))
    worst = max(worst, float(np.abs(controls[:, 3]).max() - params.yaw_rate_max))
    for k in range(1, positions.shape[0]):
        dist = float(np.linalg.norm(positions[k] - worker_path[k]))
        worst = max(worst, params.d_min - dist, dist - params.d_max)
        for neighbor in neighbors:
            q = neighbor[min(k, neighbor.shape[0] - 1)]
            worst = max(
                worst, params.separation_min - float(np.linalg.norm(positions[k] - q))
            )
        if scenario is not None and (scenario.towers or scenario.wires):
            clearance, _ = obstacle_distance_gradient(Vec3.from_array(positions[k]), scenario)
            worst = max(worst, params.obstacle_margin - clearance)
    return worst


def _braking_sequence(current: UavState, params: MpcParams) -> np.ndarray:
    """Decelerate to hover at the acceleration limit; heading held."""
    w, dt = params.shooting_points, params.dt
    controls = np.zeros((w, 4))
    v = current.velocity.as_array().copy()
    for k in range(w):
        a = np.clip(-v / dt, -params.a_max, params.a_max)
        controls[k, :3] = a
        v = v + a * dt
    return controls


class WorkerEstimator:
    """First-order low-pass position filter with velocity tracking."""

    def __init__(self, time_constant: float = 0.5):
        self.time_constant = time_constant
        self.position: Optional[np.ndarray] = None
        self.velocity = np.zeros(3)
        self._last_measurement: Optional[np.ndarray] = None
        self._last_time: Optional[float] = None

    def update(self, measured: np.ndarray, now: float) -> None:
        measured = np.asarray(measured, dtype=float)
        if self.position is None or self._last_time is None:
            self.position = measured.copy()
            self._last_measurement = measured.copy()
            self._last_time = now
            return
        dt = now - self._last_time
        if dt <= 0:
            return
        alpha = dt / (self.time_constant + dt)
        raw_velocity = (measured - self._last_measurement) / dt
        self.velocity = (1 - alpha) * self.velocity + alpha * raw_velocity
        self.position = (1 - alpha) * (self.position + self.velocity * dt) + alpha * measured
        self._last_measurement = measured.copy()
        self._last_time = now

    def estimate(self) -> tuple[np.ndarray, np.ndarray]:
        if self.position is None:
            raise RuntimeError("no measurements ingested yet")
        return self.position.copy(), self.velocity.copy()
