"""Cognitive mission layer: task allocation, monitoring, and emergencies.

The decision logic is a fixed-priority behavior tree evaluated once per
tick: Emergency (failed vehicles, critical endurance) takes precedence
over Feasibility (re-allocation when a plan is missing, has orphaned
tasks, or no longer fits the battery), then Dispatch (post-completion
housekeeping), then Operator (queued ground-operator commands). Problems
surface as Land commands or pending tasks, never as exceptions.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from .world import FormationGeometry, Scenario, UavState, UavStatus, Vec3, detour_path_length


class TaskKind(Enum):
    INSPECT = "inspect"
    SAFETY = "safety"
    IDLE = "idle"
    RECHARGE = "recharge"
    LAND = "land"


@dataclass(frozen=True)
class Task:
    id: str
    kind: TaskKind
    required_capabilities: frozenset[str] = frozenset()
    duration: float = 0.0
    region_id: Optional[str] = None  # INSPECT
    worker_id: Optional[str] = None  # SAFETY
    geometry: Optional[FormationGeometry] = None  # SAFETY
    slot_index: int = 0  # SAFETY
    station_id: Optional[str] = None  # RECHARGE

    def __post_init__(self) -> None:
        if self.duration < 0:
            raise ValueError("task duration must be >= 0")
        if self.kind is TaskKind.INSPECT and self.region_id is None:
            raise ValueError("inspect task needs a region")

    def entry_point(self, scenario: Scenario, fallback: Vec3) -> Vec3:
        if self.kind is TaskKind.INSPECT:
            return scenario.region_by_id(self.region_id).viewpoint
        if self.kind is TaskKind.SAFETY:
            worker = next(w for w in scenario.workers if w.id == self.worker_id)
            return worker.waypoints[0]
        if self.kind is TaskKind.RECHARGE:
            for st in scenario.config.get("stations", []):
                if st["id"] == self.station_id:
                    return Vec3(*st["position"])
        return fallback


@dataclass
class Telemetry:
    """Per-vehicle feedback snapshot consumed by the manager."""

    uav_id: int
    state: UavState
    task_progress: float
    timestamp: float
    completed_regions: frozenset[str] = frozenset()


@dataclass
class Plan:
    assignment: dict[int, list[Task]]
    creation_time: float
    endurance_margin: dict[int, float]
    pending: list[Task] = field(default_factory=list)


class CommandKind(Enum):
    ASSIGN_INSPECTION = "assign_inspection"
    ASSIGN_SAFETY = "assign_safety"
    LAND = "land"
    IDLE = "idle"
    RECHARGE = "recharge"
    SET_FORMATION = "set_formation"


@dataclass(frozen=True)
class Command:
    uav_id: int
    kind: CommandKind
    # ASSIGN_INSPECTION: ordered (region_id, deadline_s) pairs, deadlines
    # relative to the command's issue time.
    visits: tuple[tuple[str, float], ...] = ()
    worker_id: Optional[str] = None
    geometry: Optional[FormationGeometry] = None
    slot_index: int = 0
    team: tuple[int, ...] = ()
    station_id: Optional[str] = None

    def to_dict(self) -> dict:
        doc: dict = {"uav": self.uav_id, "kind": self.kind.value}
        if self.visits:
            doc["visits"] = [[r, round(d, 6)] for r, d in self.visits]
        if self.worker_id is not None:
            doc["worker"] = self.worker_id
        if self.geometry is not None:
            g = self.geometry
            doc["geometry"] = [g.distance, g.azimuth_center, g.elevation, g.inter_uav_angle]
            doc["slot"] = self.slot_index
        if self.team:
            doc["team"] = list(self.team)
        if self.station_id is not None:
            doc["station"] = self.station_id
        return doc


@dataclass
class TickDecision:
    time: float
    branch: str
    commands: list[Command]
    plan: Optional[Plan]
    record: dict


@dataclass(frozen=True)
class ManagerConfig:
    critical_endurance: float = 60.0
    reserve_fraction: float = 0.2
    rate_window: float = 5.0
    deadline_slack: float = 1.35
    deadline_pad: float = 4.0
    enumeration_limit: int = 6
    tick_period: float = 1.0
    pending_retry_period: float = 10.0


class AllocationError(RuntimeError):
    """No active vehicle is available for allocation."""


def estimate_endurance(state: UavState, discharge_rate: float) -> float:
    """Remaining flight time under a constant discharge rate."""
    if not discharge_rate > 0:
        raise ValueError("discharge rate must be > 0")
    return state.battery_energy / discharge_rate


def _time_for_distance(d: float, v_max: float, a_max: float) -> float:
    if not (v_max > 0 and a_max > 0):
        raise ValueError("bounds must be > 0")
    if d <= 0.0:
        return 0.0
    if d * a_max <= v_max * v_max:
        return 2.0 * math.sqrt(d / a_max)
    return d / v_max + v_max / a_max


def travel_time(origin: Vec3, destination: Vec3, v_max: float, a_max: float) -> float:
    """Time-optimal point-to-point bound on the straight-line distance.

    Triangular profile when the cruise speed is never reached, else
    trapezoidal; both are achievable under per-axis bounds because the
    straight-line direction components never exceed one.
    """
    return _time_for_distance(origin.distance_to(destination), v_max, a_max)


def _travel_estimate(
    origin: Vec3, destination: Vec3, scenario: Scenario, v_max: float, a_max: float
) -> float:
    """Travel-time bound over the flyable (tower-avoiding) path length."""
    return _time_for_distance(
        detour_path_length(origin, destination, scenario), v_max, a_max
    )


def _chain_travel(
    position: Vec3, tasks: Iterable[Task], scenario: Scenario, v_max: float, a_max: float
) -> float:
    total = 0.0
    here = position
    for task in tasks:
        site = task.entry_point(scenario, here)
        total += _travel_estimate(here, site, scenario, v_max, a_max)
        here = site
    return total


def allocate(
    tasks: list[Task],
    telemetry: dict[int, Telemetry],
    scenario: Scenario,
    now: float,
    rates: dict[int, float],
    config: ManagerConfig = ManagerConfig(),
) -> Plan:
    """Feasibility-filtered minimum-total-travel-time assignment.

    Exhaustive over task->vehicle maps up to the enumeration limit, greedy
    nearest-feasible beyond. Unassignable tasks are returned as pending.
    Ties break toward lower vehicle ids.
    """
    active = sorted(
        uid for uid, t in telemetry.items() if t.state.status is UavStatus.ACTIVE
    )
    if not active:
        raise AllocationError("no active UAVs")
    v_max, a_max = scenario.v_max, scenario.a_max

    def chain_cost(uid: int, chain: list[Task]) -> float:
        return _chain_travel(telemetry[uid].state.position, chain, scenario, v_max, a_max)

    def chain_feasible(uid: int, chain: list[Task]) -> bool:
        caps = telemetry[uid].state.capabilities
        if any(not task.required_capabilities <= caps for task in chain):
            return False
        # A vehicle can hold at most one formation slot.
        if sum(1 for task in chain if task.kind is TaskKind.SAFETY) > 1:
            return False
        required = chain_cost(uid, chain) + sum(task.duration for task in chain)
        endurance = estimate_endurance(telemetry[uid].state, rates[uid])
        return endurance >= required * (1.0 + config.reserve_fraction)

    def build_plan(assignment: dict[int, list[Task]], pending: list[Task]) -> Plan:
        margins = {}
        for uid in active:
            chain = assignment.get(uid, [])
            required = chain_cost(uid, chain) + sum(t.duration for t in chain)
            endurance = estimate_endurance(telemetry[uid].state, rates[uid])
            margins[uid] = endurance - required * (1.0 + config.reserve_fraction)
        return Plan(
            assignment={uid: assignment.get(uid, []) for uid in active},
            creation_time=now,
            endurance_margin=margins,
            pending=pending,
        )

    if len(tasks) <= config.enumeration_limit:
        best_key = None
        best = None
        choices = active + [None]
        picks = [0] * len(tasks)
        while True:
            assignment: dict[int, list[Task]] = {uid: [] for uid in active}
            pending: list[Task] = []
            for task, pick in zip(tasks, picks):
                uid = choices[pick]
                if uid is None:
                    pending.append(task)
                else:
                    assignment[uid].append(task)
            if all(chain_feasible(uid, chain) for uid, chain in assignment.items()):
                travel = sum(chain_cost(uid, chain) for uid, chain in assignment.items())
                key = (
                    len(pending),
                    round(travel, 9),
                    tuple(len(active) if p == len(active) else p for p in picks),
                )
                if best_key is None or key < best_key:
                    best_key = key
                    best = (dict(assignment), list(pending))
            i = len(tasks) - 1
            while i >= 0:
                picks[i] += 1
                if picks[i] < len(choices):
                    break
                picks[i] = 0
                i -= 1
            if i < 0:
                break
            if len(tasks) == 0:
                break
        if best is None:
            return build_plan({uid: [] for uid in active}, list(tasks))
        return build_plan(*best)

    # Greedy nearest-feasible for large instances.
    assignment = {uid: [] for uid in active}
    pending = []
    for task in tasks:
        best_uid = None
        best_added = math.inf
        for uid in active:
            chain = assignment[uid] + [task]
            if not chain_feasible(uid, chain):
                continue
            added = chain_cost(uid, chain) - chain_cost(uid, assignment[uid])
            if added < best_added - 1e-12 or (
                abs(added - best_added) <= 1e-12 and (best_uid is None or uid < best_uid)
            ):
                best_added = added
                best_uid = uid
        if best_uid is None:
            pending.append(task)
        else:
            assignment[best_uid].append(task)
    return build_plan(assignment, pending)


class TaskManager:
    """Stateful wrapper running the behavior tree once per tick."""

    def __init__(
        self,
        scenario: Scenario,
        config: ManagerConfig = ManagerConfig(),
    ):
        self.scenario = scenario
        self.config = config
        self.plan: Optional[Plan] = None
        self.nominal_rates = {e.uav_id: e.discharge_rate for e in scenario.fleet}
        self._battery_history: dict[int, deque] = {
            e.uav_id: deque() for e in scenario.fleet
        }
        self._landing: set[int] = set()
        self._lost: set[int] = set()
        self._completed_regions: set[str] = set()
        self._operator_queue: deque = deque()
        self._formation_override: Optional[FormationGeometry] = None
        self._idled: set[int] = set()
        self._pending_snapshot: list[str] = []
        self._tick_endurance: dict[int, float] = {}

    # -- feedback -----------------------------------------------------------

    def queue_operator_command(self, command: dict, arrival_time: float) -> None:
        self._operator_queue.append((arrival_time, command))

    def estimated_rate(self, uav_id: int, telemetry: dict[int, Telemetry]) -> float:
        """Observed drain over the monitoring window, floored at nominal."""
        history = self._battery_history[uav_id]
        nominal = self.nominal_rates[uav_id]
        if len(history) < 2:
            return nominal
        (t0, e0), (t1, e1) = history[0], history[-1]
        if t1 - t0 <= 1e-9:
            return nominal
        observed = (e0 - e1) / (t1 - t0)
        return max(observed, nominal)

    def _ingest(self, telemetry: dict[int, Telemetry], now: float) -> None:
        for uid, tel in telemetry.items():
            history = self._battery_history[uid]
            history.append((now, tel.state.battery_energy))
            while history and now - history[0][0] > self.config.rate_window:
                history.popleft()
            self._completed_regions |= tel.completed_regions

    # -- task synthesis -----------------------------------------------------

    def mission_tasks(self) -> list[Task]:
        """Standing inspection work derived from the scenario description."""
        return [
            Task(
                id=f"inspect:{r.id}",
                kind=TaskKind.INSPECT,
                required_capabilities=frozenset(["inspection-camera"]),
                duration=r.dwell_time,
                region_id=r.id,
            )
            for r in self.scenario.regions
        ]

    def formation_geometry(self) -> FormationGeometry:
        if self._formation_override is not None:
            return self._formation_override
        cfg = self.scenario.config.get("safety", {}).get("formation", {})
        return FormationGeometry(
            distance=float(cfg.get("distance", 5.0)),
            azimuth_center=float(cfg.get("azimuth_center", 0.0)),
            elevation=float(cfg.get("elevation", 0.3)),
            inter_uav_angle=float(cfg.get("inter_uav_angle", 0.7)),
        )

    def _remaining_tasks(self, live_team: list[int]) -> list[Task]:
        """Unfinished inspect tasks plus freshly sized safety slots."""
        if self.plan is None:
            inspect = self.mission_tasks()
        else:
            inspect = []
            seen: set[str] = set()
            for uid in sorted(self.plan.assignment):
                for task in self.plan.assignment[uid]:
                    if task.kind is TaskKind.INSPECT and task.id not in seen:
                        inspect.append(task)
                        seen.add(task.id)
            for task in self.plan.pending:
                if task.kind is TaskKind.INSPECT and task.id not in seen:
                    inspect.append(task)
                    seen.add(task.id)
        tasks = [
            t
            for t in inspect
            if t.region_id not in self._completed_regions
        ]
        # Safety slots are re-derived so the formation matches the live team.
        safety_cfg = self.scenario.config.get("safety")
        if safety_cfg and self.scenario.workers:
            capable = [
                e.uav_id
                for e in self.scenario.fleet
                if "safety-camera" in e.initial.capabilities and e.uav_id in live_team
            ]
            team = min(int(safety_cfg.get("team_size", len(capable))), len(capable))
            worker = self.scenario.workers[0]
            geometry = self.formation_geometry()
            for slot in range(team):
                tasks.append(
                    Task(
                        id=f"safety:{worker.id}:{slot}",
                        kind=TaskKind.SAFETY,
                        required_capabilities=frozenset(["safety-camera"]),
                        duration=0.0,
                        worker_id=worker.id,
                        geometry=geometry,
                        slot_index=slot,
                    )
                )
        return tasks

    # -- command synthesis ----------------------------------------------------

    def _dispatch_commands(self, plan: Plan, telemetry: dict[int, Telemetry]) -> list[Command]:
        commands: list[Command] = []
        inspect_uavs = {
            uid: [t for t in chain if t.kind is TaskKind.INSPECT]
            for uid, chain in plan.assignment.items()
        }
        safety_team = tuple(
            sorted(
                uid
                for uid, chain in plan.assignment.items()
                if any(t.kind is TaskKind.SAFETY for t in chain)
            )
        )
        for uid in sorted(plan.assignment):
            chain = plan.assignment[uid]
            if not chain:
                continue
            inspect_chain = inspect_uavs[uid]
            if inspect_chain:
                visits = self._visit_schedule(uid, inspect_chain, telemetry)
                commands.append(
                    Command(uav_id=uid, kind=CommandKind.ASSIGN_INSPECTION, visits=visits)
                )
            for task in chain:
                if task.kind is TaskKind.SAFETY:
                    commands.append(
                        Command(
                            uav_id=uid,
                            kind=CommandKind.ASSIGN_SAFETY,
                            worker_id=task.worker_id,
                            geometry=self.formation_geometry(),
                            slot_index=task.slot_index,
                            team=safety_team,
                        )
                    )
                elif task.kind is TaskKind.RECHARGE:
                    commands.append(
                        Command(uav_id=uid, kind=CommandKind.RECHARGE, station_id=task.station_id)
                    )
        return commands

    def _visit_schedule(
        self, uid: int, chain: list[Task], telemetry: dict[int, Telemetry]
    ) -> tuple[tuple[str, float], ...]:
        """Deadlines from cumulative time-optimal travel plus slack."""
        v_max, a_max = self.scenario.v_max, self.scenario.a_max
        here = telemetry[uid].state.position
        clock = self.config.deadline_pad
        visits = []
        for task in chain:
            region = self.scenario.region_by_id(task.region_id)
            clock += (
                _travel_estimate(here, region.viewpoint, self.scenario, v_max, a_max)
                * self.config.deadline_slack
            )
            clock += region.dwell_time
            visits.append((task.region_id, round(clock, 6)))
            here = region.viewpoint
        return tuple(visits)

    # -- the tree -------------------------------------------------------------

    def tick(self, telemetry: dict[int, Telemetry], now: float) -> TickDecision:
        self._ingest(telemetry, now)
        self._tick_endurance = {
            uid: round(
                estimate_endurance(tel.state, self.estimated_rate(uid, telemetry)), 3
            )
            for uid, tel in sorted(telemetry.items())
            if tel.state.status is UavStatus.ACTIVE
        }
        for branch in (self._emergency, self._feasibility, self._dispatch, self._operator):
            decision = branch(telemetry, now)
            if decision is not None:
                return decision
        return self._decision(now, "idle", [], {})

    def _decision(
        self, now: float, branch: str, commands: list[Command], extra: dict
    ) -> TickDecision:
        record = {
            "t": round(now, 6),
            "branch": branch,
            "commands": [c.to_dict() for c in commands],
            "pending": sorted(t.id for t in self.plan.pending) if self.plan else [],
            "endurance": self._tick_endurance,
        }
        record.update(extra)
        return TickDecision(now, branch, commands, self.plan, record)

    def _emergency(self, telemetry: dict[int, Telemetry], now: float):
        commands = []
        endurances = {}
        for uid in sorted(telemetry):
            tel = telemetry[uid]
            if tel.state.status is UavStatus.FAILED and uid not in self._lost:
                self._lost.add(uid)
                self._orphan(uid)
                continue
            if tel.state.status is not UavStatus.ACTIVE or uid in self._landing:
                continue
            endurance = estimate_endurance(tel.state, self.estimated_rate(uid, telemetry))
            endurances[uid] = round(endurance, 3)
            if endurance < self.config.critical_endurance:
                self._landing.add(uid)
                self._orphan(uid)
                commands.append(Command(uav_id=uid, kind=CommandKind.LAND))
        if commands:
            return self._decision(
                now,
                "emergency",
                commands,
                {"endurance": endurances, "landing": [c.uav_id for c in commands]},
            )
        return None

    def _orphan(self, uid: int) -> None:
        """Move a vehicle's unfinished tasks to pending for re-allocation."""
        if self.plan is None:
            return
        chain = self.plan.assignment.pop(uid, [])
        for task in chain:
            if task.kind is TaskKind.INSPECT and task.region_id in self._completed_regions:
                continue
            if task.kind is TaskKind.SAFETY:
                continue  # slots are re-derived for the surviving team on re-plan
            self.plan.pending.append(task)

    def _live(self, telemetry: dict[int, Telemetry]) -> dict[int, Telemetry]:
        return {
            uid: tel
            for uid, tel in telemetry.items()
            if tel.state.status is UavStatus.ACTIVE
            and uid not in self._landing
            and uid not in self._lost
        }

    def _feasibility(self, telemetry: dict[int, Telemetry], now: float):
        live = self._live(telemetry)
        if not live:
            return None
        needs_replan = self.plan is None
        if self.plan is not None and self.plan.pending:
            # Re-plan when pending changed since the last allocation, or
            # periodically in case feasibility improved; a task nobody can
            # take must not spin the tree every tick.
            pending_ids = sorted(t.id for t in self.plan.pending)
            if pending_ids != self._pending_snapshot:
                needs_replan = True
            elif now - self.plan.creation_time >= self.config.pending_retry_period:
                needs_replan = True
        margins = {}
        if self.plan is not None and not needs_replan:
            for uid, chain in self.plan.assignment.items():
                if uid not in live or not chain:
                    continue
                remaining = [
                    t
                    for t in chain
                    if not (t.kind is TaskKind.INSPECT and t.region_id in self._completed_regions)
                ]
                required = _chain_travel(
                    live[uid].state.position, remaining, self.scenario,
                    self.scenario.v_max, self.scenario.a_max,
                ) + sum(t.duration for t in remaining)
                rate = self.estimated_rate(uid, telemetry)
                margin = estimate_endurance(live[uid].state, rate) - required * (
                    1.0 + self.config.reserve_fraction
                )
                margins[uid] = round(margin, 3)
                if margin < 0:
                    needs_replan = True
        if not needs_replan:
            return None
        tasks = self._remaining_tasks(sorted(live))
        rates = {uid: self.estimated_rate(uid, telemetry) for uid in live}
        self.plan = allocate(tasks, live, self.scenario, now, rates, self.config)
        self._pending_snapshot = sorted(t.id for t in self.plan.pending)
        commands = self._dispatch_commands(self.plan, telemetry)
        self._idled.clear()
        return self._decision(
            now,
            "feasibility",
            commands,
            {
                "assignment": {
                    str(uid): [t.id for t in chain]
                    for uid, chain in sorted(self.plan.assignment.items())
                },
                "margins": margins,
            },
        )

    def _dispatch(self, telemetry: dict[int, Telemetry], now: float):
        if self.plan is None:
            return None
        commands = []
        for uid in sorted(self.plan.assignment):
            tel = telemetry.get(uid)
            if tel is None or tel.state.status is not UavStatus.ACTIVE:
                continue
            chain = self.plan.assignment[uid]
            remaining = [
                t
                for t in chain
                if not (t.kind is TaskKind.INSPECT and t.region_id in self._completed_regions)
            ]
            if not remaining and chain and uid not in self._idled:
                self._idled.add(uid)
                commands.append(Command(uav_id=uid, kind=CommandKind.IDLE))
        if commands:
            return self._decision(now, "dispatch", commands, {})
        return None

    def _operator(self, telemetry: dict[int, Telemetry], now: float):
        due = [cmd for (t, cmd) in self._operator_queue if t <= now]
        if not due:
            return None
        self._operator_queue = deque(
            (t, cmd) for (t, cmd) in self._operator_queue if t > now
        )
        commands: list[Command] = []
        applied = []
        for cmd in due:
            kind = cmd.get("type")
            if kind == "set_formation":
                base = self.formation_geometry()
                self._formation_override = FormationGeometry(
                    distance=float(cmd.get("distance", base.distance)),
                    azimuth_center=float(cmd.get("azimuth_center", base.azimuth_center)),
                    elevation=float(cmd.get("elevation", base.elevation)),
                    inter_uav_angle=float(cmd.get("inter_uav_angle", base.inter_uav_angle)),
                )
                commands.extend(self._formation_commands(telemetry))
                applied.append(kind)
            elif kind == "assign_task" and self.plan is not None:
                region = cmd.get("region")
                if region is not None:
                    self.plan.pending.append(
                        Task(
                            id=f"inspect:{region}:operator",
                            kind=TaskKind.INSPECT,
                            required_capabilities=frozenset(["inspection-camera"]),
                            duration=self.scenario.region_by_id(region).dwell_time,
                            region_id=region,
                        )
                    )
                    applied.append(kind)
        return self._decision(now, "operator", commands, {"operator": applied})

    def _formation_commands(self, telemetry: dict[int, Telemetry]) -> list[Command]:
        if self.plan is None:
            return []
        commands = []
        geometry = self.formation_geometry()
        team = tuple(
            sorted(
                uid
                for uid, chain in self.plan.assignment.items()
                if any(t.kind is TaskKind.SAFETY for t in chain)
            )
        )
        for uid in team:
            task = next(t for t in self.plan.assignment[uid] if t.kind is TaskKind.SAFETY)
            commands.append(
                Command(
                    uav_id=uid,
                    kind=CommandKind.SET_FORMATION,
                    worker_id=task.worker_id,
                    geometry=geometry,
                    slot_index=task.slot_index,
                    team=team,
                )
            )
        return commands
