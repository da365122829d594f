"""Shared domain types, scenario representation, and geometric queries.

All lengths are in meters, times in seconds, angles in radians and energies
in joules. The world frame is z-up; headings are measured from the +x axis,
counter-clockwise, and normalized to (-pi, pi].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

# Sentinel clearance for scenarios with no obstacles at all.
INFINITE_CLEARANCE = float("inf")


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    w = math.atan2(math.sin(a), math.cos(a))
    # atan2 maps pi to pi but -pi stays -pi; fold the open end.
    if w <= -math.pi:
        w = math.pi
    return w


@dataclass(frozen=True)
class Vec3:
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @staticmethod
    def from_array(a: Sequence[float]) -> "Vec3":
        return Vec3(float(a[0]), float(a[1]), float(a[2]))

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)

    def distance_to(self, other: "Vec3") -> float:
        return math.sqrt(
            (self.x - other.x) ** 2 + (self.y - other.y) ** 2 + (self.z - other.z) ** 2
        )


class UavStatus(Enum):
    ACTIVE = "active"
    FAILED = "failed"
    LANDED = "landed"


@dataclass
class UavState:
    position: Vec3
    velocity: Vec3
    acceleration: Vec3
    heading: float
    heading_rate: float
    battery_energy: float
    capabilities: frozenset[str]
    status: UavStatus = UavStatus.ACTIVE

    def copy(self) -> "UavState":
        return replace(self)


@dataclass(frozen=True)
class CameraParams:
    fov_horizontal: float
    fov_vertical: float
    mount_pitch: float


@dataclass(frozen=True)
class Tower:
    center: Vec3  # ground point of the axis
    radius: float
    height: float
    insulators: tuple[Vec3, ...] = ()


@dataclass(frozen=True)
class WireSegment:
    endpoint_a: Vec3
    endpoint_b: Vec3
    clearance_radius: float


@dataclass(frozen=True)
class TargetRegion:
    id: str
    center: Vec3
    half_extents: Vec3
    dwell_time: float
    viewpoint: Vec3


@dataclass
class WorkerState:
    id: str
    position: Vec3
    velocity: Vec3


@dataclass(frozen=True)
class WorkerScript:
    """Scripted worker motion: constant-speed interpolation through waypoints."""

    id: str
    waypoints: tuple[Vec3, ...]
    speed: float

    def state_at(self, t: float) -> WorkerState:
        pts = [w.as_array() for w in self.waypoints]
        if len(pts) == 1 or self.speed <= 0.0:
            return WorkerState(self.id, self.waypoints[0], Vec3(0.0, 0.0, 0.0))
        remaining = self.speed * max(t, 0.0)
        for a, b in zip(pts[:-1], pts[1:]):
            seg = b - a
            seg_len = float(np.linalg.norm(seg))
            if seg_len <= 1e-12:
                continue
            if remaining <= seg_len:
                direction = seg / seg_len
                p = a + direction * remaining
                v = direction * self.speed
                return WorkerState(self.id, Vec3.from_array(p), Vec3.from_array(v))
            remaining -= seg_len
        return WorkerState(self.id, self.waypoints[-1], Vec3(0.0, 0.0, 0.0))


@dataclass(frozen=True)
class FormationGeometry:
    distance: float
    azimuth_center: float
    elevation: float
    inter_uav_angle: float


@dataclass(frozen=True)
class FleetEntry:
    uav_id: int
    initial: UavState
    camera: CameraParams
    discharge_rate: float  # nominal hover power draw, watts


@dataclass(frozen=True)
class ScenarioEvent:
    """Timed injection applied by the simulation engine.

    kind is one of: "battery_anomaly" (payload: uav, factor),
    "uav_failure" (payload: uav), "operator_command" (payload: command dict).
    """

    time: float
    kind: str
    uav: Optional[int] = None
    factor: Optional[float] = None
    command: Optional[dict] = None


@dataclass
class Scenario:
    towers: list[Tower]
    wires: list[WireSegment]
    regions: list[TargetRegion]
    workers: list[WorkerScript]
    fleet: list[FleetEntry]
    v_max: float
    a_max: float
    separation_min: float
    ts: float
    seed: int
    events: list[ScenarioEvent] = field(default_factory=list)
    # Optional per-scenario tuning blocks (planner/mpc/gains/sim); free-form,
    # consumed by the engine, documented in docs/scenario_schema.md.
    config: dict = field(default_factory=dict)

    def region_by_id(self, region_id: str) -> TargetRegion:
        for r in self.regions:
            if r.id == region_id:
                return r
        raise KeyError(f"unknown region id {region_id!r}")

    def fleet_entry(self, uav_id: int) -> FleetEntry:
        for e in self.fleet:
            if e.uav_id == uav_id:
                return e
        raise KeyError(f"unknown uav id {uav_id}")


@dataclass
class Trajectory:
    """Uniformly sampled state+control sequence on the grid t = (0, Ts, ..., N*Ts).

    Arrays have N+1 rows; accelerations hold the control applied on [k, k+1),
    with the final row zero by convention.
    """

    ts: float
    positions: np.ndarray  # (N+1, 3)
    velocities: np.ndarray  # (N+1, 3)
    accelerations: np.ndarray  # (N+1, 3)

    @property
    def n_steps(self) -> int:
        return self.positions.shape[0] - 1

    @property
    def duration(self) -> float:
        return self.n_steps * self.ts

    def times(self) -> np.ndarray:
        return np.arange(self.positions.shape[0]) * self.ts

    def sample(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Reference (p, v, a) at time t; clamps to the final hover state."""
        n = self.n_steps
        if t >= n * self.ts:
            return self.positions[n].copy(), np.zeros(3), np.zeros(3)
        k = int(t / self.ts)
        tau = t - k * self.ts
        a = self.accelerations[k]
        p = self.positions[k] + self.velocities[k] * tau + 0.5 * a * tau * tau
        v = self.velocities[k] + a * tau
        return p, v, a.copy()

    def dynamics_defect(self) -> float:
        """Max violation of the discrete double-integrator update."""
        p, v, a, ts = self.positions, self.velocities, self.accelerations, self.ts
        dp = p[1:] - (p[:-1] + v[:-1] * ts + 0.5 * a[:-1] * ts * ts)
        dv = v[1:] - (v[:-1] + a[:-1] * ts)
        if dp.size == 0:
            return 0.0
        return float(max(np.abs(dp).max(), np.abs(dv).max()))


# ---------------------------------------------------------------------------
# Geometric queries
# ---------------------------------------------------------------------------


def tower_signed_distance(p: Vec3, tower: Tower) -> float:
    """Signed distance to a tower, negative inside.

    The tower is treated as solid from the ground down (vehicles never fly
    beneath a tower footing), so the boundary is the lateral wall, the top
    cap, and the rim circle joining them.
    """
    dx = p.x - tower.center.x
    dy = p.y - tower.center.y
    radial = math.hypot(dx, dy) - tower.radius
    above = p.z - (tower.center.z + tower.height)
    if radial <= 0.0 and above <= 0.0:
        return max(radial, above)
    return math.hypot(max(radial, 0.0), max(above, 0.0))


def wire_signed_distance(p: Vec3, wire: WireSegment) -> float:
    """Signed distance to a wire modeled as a capsule, negative inside."""
    a = wire.endpoint_a.as_array()
    b = wire.endpoint_b.as_array()
    q = p.as_array()
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom <= 1e-18 else float(np.clip((q - a) @ ab / denom, 0.0, 1.0))
    closest = a + t * ab
    return float(np.linalg.norm(q - closest)) - wire.clearance_radius


def distance_to_obstacles(p: Vec3, scenario: Scenario) -> float:
    """Min signed distance over all towers and wires; +inf with no obstacles."""
    d = INFINITE_CLEARANCE
    for tower in scenario.towers:
        d = min(d, tower_signed_distance(p, tower))
    for wire in scenario.wires:
        d = min(d, wire_signed_distance(p, wire))
    return d


def obstacle_distance_gradient(p: Vec3, scenario: Scenario) -> tuple[float, np.ndarray]:
    """Signed obstacle distance and its gradient with respect to p.

    The gradient of the min is the gradient of the closest obstacle's
    distance field (unit norm almost everywhere).
    """
    best = INFINITE_CLEARANCE
    grad = np.zeros(3)
    for tower in scenario.towers:
        d = tower_signed_distance(p, tower)
        if d < best:
            best = d
            grad = _tower_distance_gradient(p, tower)
    for wire in scenario.wires:
        d = wire_signed_distance(p, wire)
        if d < best:
            best = d
            grad = _wire_distance_gradient(p, wire)
    return best, grad


def _tower_distance_gradient(p: Vec3, tower: Tower) -> np.ndarray:
    dx = p.x - tower.center.x
    dy = p.y - tower.center.y
    horiz = math.hypot(dx, dy)
    radial = horiz - tower.radius
    above = p.z - (tower.center.z + tower.height)
    r_hat = np.array([dx / horiz, dy / horiz, 0.0]) if horiz > 1e-12 else np.array([1.0, 0.0, 0.0])
    if radial <= 0.0 and above <= 0.0:
        return r_hat if radial >= above else np.array([0.0, 0.0, 1.0])
    rp = max(radial, 0.0)
    ap = max(above, 0.0)
    norm = math.hypot(rp, ap)
    if norm <= 1e-12:
        return r_hat
    return (rp * r_hat + np.array([0.0, 0.0, ap])) / norm


def _wire_distance_gradient(p: Vec3, wire: WireSegment) -> np.ndarray:
    a = wire.endpoint_a.as_array()
    b = wire.endpoint_b.as_array()
    q = p.as_array()
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom <= 1e-18 else float(np.clip((q - a) @ ab / denom, 0.0, 1.0))
    diff = q - (a + t * ab)
    norm = float(np.linalg.norm(diff))
    if norm <= 1e-12:
        return np.array([0.0, 0.0, 1.0])
    return diff / norm


def in_region(p: Vec3, region: TargetRegion) -> bool:
    """Closed-box membership test (boundary inclusive)."""
    return (
        abs(p.x - region.center.x) <= region.half_extents.x
        and abs(p.y - region.center.y) <= region.half_extents.y
        and abs(p.z - region.center.z) <= region.half_extents.z
    )


def detour_path_length(a: Vec3, b: Vec3, scenario: Scenario, clearance: float = 1.0) -> float:
    """Flyable path length from a to b: straight, or around blocking towers.

    When the straight segment would cut through a tower's keep-out disc,
    the estimate walks radially to a safe circle, follows the shorter arc,
    and comes back in, which upper-bounds what a planner that cannot cross
    the tower will need. Straight-line distance otherwise.
    """
    direct = a.distance_to(b)
    best = direct
    for tower in scenario.towers:
        c = tower.center.as_array()[:2]
        a2 = np.array([a.x, a.y]) - c
        b2 = np.array([b.x, b.y]) - c
        seg = b2 - a2
        seg_len2 = float(seg @ seg)
        if seg_len2 < 1e-12:
            continue
        t = float(np.clip(-(a2 @ seg) / seg_len2, 0.0, 1.0))
        closest = float(np.linalg.norm(a2 + t * seg))
        keep = tower.radius + clearance
        if closest >= keep or t in (0.0, 1.0):
            continue
        ra, rb = float(np.linalg.norm(a2)), float(np.linalg.norm(b2))
        radius = max(min(ra, rb), keep)
        delta = abs(wrap_angle(math.atan2(b2[1], b2[0]) - math.atan2(a2[1], a2[0])))
        horizontal = abs(ra - radius) + radius * delta + abs(rb - radius)
        best = max(best, math.hypot(horizontal, b.z - a.z))
    return best


# ---------------------------------------------------------------------------
# Scenario validation
# ---------------------------------------------------------------------------


def validate_scenario(scenario: Scenario) -> list[str]:
    """Check every structural invariant; violations are data, not faults."""
    v: list[str] = []
    if not scenario.fleet:
        v.append("fleet: fleet non-empty")
    if not scenario.ts > 0:
        v.append("ts: must be > 0")
    if not scenario.separation_min > 0:
        v.append("separation_min: must be > 0")
    if not scenario.v_max > 0:
        v.append("limits.v_max: must be > 0")
    if not scenario.a_max > 0:
        v.append("limits.a_max: must be > 0")
    if scenario.seed < 0:
        v.append("seed: must be unsigned")

    for i, tower in enumerate(scenario.towers):
        name = f"towers[{i}]"
        if not tower.radius > 0:
            v.append(f"{name}.radius: must be > 0")
        if not tower.height > 0:
            v.append(f"{name}.height: must be > 0")
        if len(tower.insulators) > 12:
            v.append(f"{name}.insulators: at most twelve")
        for j, ins in enumerate(tower.insulators):
            horiz = math.hypot(ins.x - tower.center.x, ins.y - tower.center.y)
            if horiz > tower.radius * 1.1 + 1e-9:
                v.append(f"{name}.insulators[{j}]: outside cylinder radius*1.1")

    for i, wire in enumerate(scenario.wires):
        name = f"wires[{i}]"
        if wire.endpoint_a == wire.endpoint_b:
            v.append(f"{name}: endpoints distinct")
        if not wire.clearance_radius > 0:
            v.append(f"{name}.clearance_radius: must be > 0")

    seen_ids: set[str] = set()
    for i, region in enumerate(scenario.regions):
        name = f"regions[{i}]"
        if region.id in seen_ids:
            v.append(f"{name}.id: duplicate region id {region.id!r}")
        seen_ids.add(region.id)
        he = region.half_extents
        if not (he.x > 0 and he.y > 0 and he.z > 0):
            v.append(f"{name}.half_extents: componentwise > 0")
        if region.dwell_time < 0:
            v.append(f"{name}.dwell_time: must be >= 0")
        if scenario.towers or scenario.wires:
            if distance_to_obstacles(region.viewpoint, scenario) <= 0:
                v.append(f"{name}.viewpoint: inside an obstacle")

    for i, worker in enumerate(scenario.workers):
        name = f"workers[{i}]"
        if not worker.waypoints:
            v.append(f"{name}.waypoints: must be non-empty")
        if worker.speed < 0:
            v.append(f"{name}.speed: must be >= 0")
        for j, w in enumerate(worker.waypoints):
            if not w.is_finite():
                v.append(f"{name}.waypoints[{j}]: finite")

    seen_uavs: set[int] = set()
    for i, entry in enumerate(scenario.fleet):
        name = f"fleet[{i}]"
        if entry.uav_id in seen_uavs:
            v.append(f"{name}.id: duplicate uav id {entry.uav_id}")
        seen_uavs.add(entry.uav_id)
        s = entry.initial
        if not (s.position.is_finite() and s.velocity.is_finite() and s.acceleration.is_finite()):
            v.append(f"{name}.initial: finite state")
        if s.battery_energy < 0:
            v.append(f"{name}.battery_energy: must be >= 0")
        if abs(s.heading) > math.pi + 1e-12:
            v.append(f"{name}.heading: in (-pi, pi]")
        if not entry.discharge_rate > 0:
            v.append(f"{name}.discharge_rate: must be > 0")
        cam = entry.camera
        if not (0 < cam.fov_horizontal < math.pi):
            v.append(f"{name}.camera.fov_horizontal: in (0, pi)")
        if not (0 < cam.fov_vertical < math.pi):
            v.append(f"{name}.camera.fov_vertical: in (0, pi)")

    if scenario.separation_min > 0:
        for i in range(len(scenario.fleet)):
            for j in range(i + 1, len(scenario.fleet)):
                a = scenario.fleet[i].initial.position
                b = scenario.fleet[j].initial.position
                if a.distance_to(b) < scenario.separation_min - 1e-9:
                    v.append(
                        f"fleet[{i}]/fleet[{j}]: initial separation below separation_min"
                    )

    for i, event in enumerate(scenario.events):
        name = f"events[{i}]"
        if event.time < 0:
            v.append(f"{name}.time: must be >= 0")
        if event.kind not in ("battery_anomaly", "uav_failure", "operator_command"):
            v.append(f"{name}.kind: unknown kind {event.kind!r}")
        if event.kind == "battery_anomaly" and (event.factor is None or event.factor <= 0):
            v.append(f"{name}.factor: must be > 0")
        if event.kind in ("battery_anomaly", "uav_failure") and event.uav not in seen_uavs:
            v.append(f"{name}.uav: unknown uav id {event.uav}")

    return v


# ---------------------------------------------------------------------------
# Scenario JSON serialization (schema in docs/scenario_schema.md)
# ---------------------------------------------------------------------------


def _vec(value: Sequence[float]) -> Vec3:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ValueError(f"expected [x, y, z], got {value!r}")
    return Vec3(float(value[0]), float(value[1]), float(value[2]))


def _vec_out(v: Vec3) -> list[float]:
    return [v.x, v.y, v.z]


def scenario_from_dict(doc: dict) -> Scenario:
    try:
        towers = [
            Tower(
                center=_vec(t["center"]),
                radius=float(t["radius"]),
                height=float(t["height"]),
                insulators=tuple(_vec(x) for x in t.get("insulators", [])),
            )
            for t in doc.get("towers", [])
        ]
        wires = [
            WireSegment(_vec(w["endpoint_a"]), _vec(w["endpoint_b"]), float(w["clearance_radius"]))
            for w in doc.get("wires", [])
        ]
        regions = [
            TargetRegion(
                id=str(r["id"]),
                center=_vec(r["center"]),
                half_extents=_vec(r["half_extents"]),
                dwell_time=float(r["dwell_time"]),
                viewpoint=_vec(r["viewpoint"]),
            )
            for r in doc.get("regions", [])
        ]
        workers = [
            WorkerScript(
                id=str(w["id"]),
                waypoints=tuple(_vec(x) for x in w["waypoints"]),
                speed=float(w.get("speed", 0.0)),
            )
            for w in doc.get("workers", [])
        ]
        fleet = [
            FleetEntry(
                uav_id=int(f["id"]),
                initial=UavState(
                    position=_vec(f["position"]),
                    velocity=_vec(f.get("velocity", [0.0, 0.0, 0.0])),
                    acceleration=Vec3(0.0, 0.0, 0.0),
                    heading=float(f.get("heading", 0.0)),
                    heading_rate=0.0,
                    battery_energy=float(f["battery_energy"]),
                    capabilities=frozenset(f.get("capabilities", [])),
                ),
                camera=CameraParams(
                    fov_horizontal=float(f["camera"]["fov_horizontal"]),
                    fov_vertical=float(f["camera"]["fov_vertical"]),
                    mount_pitch=float(f["camera"].get("mount_pitch", 0.0)),
                ),
                discharge_rate=float(f["discharge_rate"]),
            )
            for f in doc.get("fleet", [])
        ]
        events = [
            ScenarioEvent(
                time=float(e["time"]),
                kind=str(e["kind"]),
                uav=int(e["uav"]) if "uav" in e else None,
                factor=float(e["factor"]) if "factor" in e else None,
                command=e.get("command"),
            )
            for e in doc.get("events", [])
        ]
        limits = doc["limits"]
        return Scenario(
            towers=towers,
            wires=wires,
            regions=regions,
            workers=workers,
            fleet=fleet,
            v_max=float(limits["v_max"]),
            a_max=float(limits["a_max"]),
            separation_min=float(doc["separation_min"]),
            ts=float(doc["ts"]),
            seed=int(doc["seed"]),
            events=events,
            config=doc.get("config", {}),
        )
    except KeyError as exc:
        raise ValueError(f"scenario document missing field {exc.args[0]!r}") from exc


def scenario_to_dict(scenario: Scenario) -> dict:
    doc: dict = {
        "seed": scenario.seed,
        "ts": scenario.ts,
        "separation_min": scenario.separation_min,
        "limits": {"v_max": scenario.v_max, "a_max": scenario.a_max},
        "towers": [
            {
                "center": _vec_out(t.center),
                "radius": t.radius,
                "height": t.height,
                "insulators": [_vec_out(i) for i in t.insulators],
            }
            for t in scenario.towers
        ],
        "wires": [
            {
                "endpoint_a": _vec_out(w.endpoint_a),
                "endpoint_b": _vec_out(w.endpoint_b),
                "clearance_radius": w.clearance_radius,
            }
            for w in scenario.wires
        ],
        "regions": [
            {
                "id": r.id,
                "center": _vec_out(r.center),
                "half_extents": _vec_out(r.half_extents),
                "dwell_time": r.dwell_time,
                "viewpoint": _vec_out(r.viewpoint),
            }
            for r in scenario.regions
        ],
        "workers": [
            {"id": w.id, "waypoints": [_vec_out(p) for p in w.waypoints], "speed": w.speed}
            for w in scenario.workers
        ],
        "fleet": [
            {
                "id": f.uav_id,
                "position": _vec_out(f.initial.position),
                "velocity": _vec_out(f.initial.velocity),
                "heading": f.initial.heading,
                "battery_energy": f.initial.battery_energy,
                "capabilities": sorted(f.initial.capabilities),
                "discharge_rate": f.discharge_rate,
                "camera": {
                    "fov_horizontal": f.camera.fov_horizontal,
                    "fov_vertical": f.camera.fov_vertical,
                    "mount_pitch": f.camera.mount_pitch,
                },
            }
            for f in scenario.fleet
        ],
        "events": [
            {
                "time": e.time,
                "kind": e.kind,
                **({"uav": e.uav} if e.uav is not None else {}),
                **({"factor": e.factor} if e.factor is not None else {}),
                **({"command": e.command} if e.command is not None else {}),
            }
            for e in scenario.events
        ],
    }
    if scenario.config:
        doc["config"] = scenario.config
    return doc


def read_scenario(path: Union[str, Path]) -> Scenario:
    """Parse a scenario file without validating it; see cli.load_scenario."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return scenario_from_dict(doc)


def write_scenario(scenario: Scenario, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=2, sort_keys=True)
        fh.write("\n")
