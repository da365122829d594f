"""Deterministic fixed-step mission simulation.

One master clock drives the vehicle plants, the tracking controllers,
the safety controllers, the task manager, scripted workers, event
injection, and the message bus; every random draw comes from a named
stream of the scenario seed, so a run is a pure function of
(scenario, duration, seed) and its logs are byte-stable.
"""

from __future__ import annotations

import json
import math
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import stl
from .bus import MessageBus, TopicConfig
from .inspection import (
    InspectionTask,
    PlannerConfig,
    PlanResult,
    RegionVisit,
    build_inspection_formula,
    plan_inspection,
)
from .manager import (
    Command,
    CommandKind,
    ManagerConfig,
    TaskManager,
    Telemetry,
)
from .plant import PlantParams, TrackerGains, plant_step, sense, track
from .safety import MpcParams, WorkerEstimator, advance, bearing_errors, formation_slots, solve_step
from .world import (
    FormationGeometry,
    Scenario,
    UavState,
    UavStatus,
    Vec3,
    WorkerState,
    distance_to_obstacles,
    in_region,
    validate_scenario,
)


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.01
    control_period: float = 0.01
    mpc_period: float = 0.1
    manager_period: float = 1.0
    telemetry_period: float = 0.1
    snapshot_period: float = 0.1
    sigma_pos: float = 0.02
    sigma_vel: float = 0.02
    worker_sigma: float = 0.05
    actuation_lag: float = 0.15
    accel_power_coeff: float = 30.0
    landing_speed: float = 1.0
    tracking_allowance: float = 0.1  # execution slack on planned envelopes
    # The mission's a_max is the planner's desired bound; the airframe can
    # give the tracking loop some authority beyond it to fight the lag.
    hardware_headroom: float = 1.4

    @staticmethod
    def from_dict(doc: dict) -> "SimConfig":
        known = {k: doc[k] for k in doc if k in SimConfig.__dataclass_fields__}
        return SimConfig(**known)


class SimClock:
    """Master step plus component schedules as integer multiples."""

    def __init__(self, dt: float, periods: dict[str, float]):
        if not dt > 0:
            raise ValueError("dt must be > 0")
        self.dt = dt
        self.ratios: dict[str, int] = {}
        for name, period in periods.items():
            ratio = period / dt
            if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
                raise ValueError(
                    f"schedule {name!r} period {period} is not an integer multiple of dt {dt}"
                )
            self.ratios[name] = int(round(ratio))

    def due(self, name: str, step: int) -> bool:
        return step % self.ratios[name] == 0


@dataclass
class _SafetyDuty:
    worker_id: str
    geometry: FormationGeometry
    slot_index: int
    team: tuple[int, ...]
    estimator: WorkerEstimator
    warm: Optional[object] = None
    neighbor_predictions: dict[int, np.ndarray] = field(default_factory=dict)
    current_command: tuple[np.ndarray, float] = (np.zeros(3), 0.0)


@dataclass
class _Runtime:
    entry: object
    state: UavState
    plant: Optional[PlantParams] = None
    mode: str = "idle"  # idle | inspect | safety | recharge | landing | down
    hold_position: Optional[np.ndarray] = None
    hold_heading: float = 0.0
    anomaly_factor: float = 1.0
    trajectory: Optional[object] = None
    heading_schedule: Optional[np.ndarray] = None
    plan_start: float = 0.0
    assigned_regions: list[str] = field(default_factory=list)
    dwell_accum: dict[str, float] = field(default_factory=dict)
    safety: Optional[_SafetyDuty] = None
    station: Optional[np.ndarray] = None
    landed_event: bool = False
    fault: bool = False


class MissionLog:
    """Canonical on-disk artifact of one run."""

    FILES = (
        "telemetry.csv",
        "commands.jsonl",
        "decisions.jsonl",
        "events.jsonl",
        "mpc.csv",
        "bus_stats.json",
        "metrics.json",
    )

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.telemetry_rows: list[str] = []
        self.command_records: list[dict] = []
        self.decision_records: list[dict] = []
        self.event_records: list[dict] = []
        self.mpc_rows: list[str] = []
        self.bus_stats: dict = {}
        self.metrics: dict = {}

    def write(self) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        header = "t,uav,px,py,pz,vx,vy,vz,ax,ay,az,psi,battery,status"
        (self.out_dir / "telemetry.csv").write_text(
            "\n".join([header] + self.telemetry_rows) + "\n"
        )
        mpc_header = "t,uav,status,iterations,cost_action,cost_perception,residual_eq,residual_ineq"
        (self.out_dir / "mpc.csv").write_text(
            "\n".join([mpc_header] + self.mpc_rows) + "\n"
        )
        for name, records in (
            ("commands.jsonl", self.command_records),
            ("decisions.jsonl", self.decision_records),
            ("events.jsonl", self.event_records),
        ):
            text = "".join(
                json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in records
            )
            (self.out_dir / name).write_text(text)
        (self.out_dir / "bus_stats.json").write_text(
            json.dumps(self.bus_stats, sort_keys=True, indent=2) + "\n"
        )
        (self.out_dir / "metrics.json").write_text(
            json.dumps(self.metrics, sort_keys=True, indent=2) + "\n"
        )


def _fmt(x: float) -> str:
    return f"{x:.9g}"


class MissionEngine:
    def __init__(
        self,
        scenario: Scenario,
        duration: float,
        seed: Optional[int] = None,
        out_dir: Optional[Path] = None,
    ):
        problems = validate_scenario(scenario)
        if problems:
            raise ValueError("invalid scenario: " + "; ".join(problems))
        if not duration > 0:
            raise ValueError("duration must be > 0")
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        self.duration = duration
        self.sim = SimConfig.from_dict(scenario.config.get("sim", {}))
        self.clock = SimClock(
            self.sim.dt,
            {
                "control": self.sim.control_period,
                "mpc": self.sim.mpc_period,
                "manager": self.sim.manager_period,
                "telemetry": self.sim.telemetry_period,
                "snapshot": self.sim.snapshot_period,
            },
        )
        self.total_steps = int(round(duration / self.sim.dt))
        self.gains = TrackerGains()
        self.manager = TaskManager(scenario, ManagerConfig(tick_period=self.sim.manager_period))
        self.planner_config = PlannerConfig.from_dict(scenario.config.get("planner", {}))
        safety_cfg = scenario.config.get("safety", {})
        self.mpc_params = MpcParams.from_dict(
            {
                "separation_min": scenario.separation_min,
                "v_max": scenario.v_max,
                "a_max": scenario.a_max,
                "d_min": safety_cfg.get("d_min", 2.0),
                "d_max": safety_cfg.get("d_max", 8.0),
                **scenario.config.get("mpc", {}),
            }
        )
        self.log = MissionLog(out_dir or Path("mission_log"))
        self.snapshot_sink: Optional[Callable[[dict], None]] = None
        # Gateway -> manager handoff; appends are thread-safe, the stepping
        # loop drains it at the start of every step.
        self.command_queue: deque = deque()

        telemetry_rate = 1.0 / self.sim.telemetry_period + 1.0
        fast_rate = 1.0 / self.sim.mpc_period + 1.0
        self.bus = MessageBus(self.seed)
        # Commands are batched into one message per manager tick; telemetry
        # and predictions get one topic per vehicle so the per-topic rate
        # limit never collides with same-instant publishes from the fleet.
        self.bus.configure("commands", TopicConfig(rate=2.0 / self.sim.manager_period, latency=0.02, stream=2))
        self.bus.configure("worker", TopicConfig(rate=fast_rate, latency=0.005, stream=3))
        for entry in scenario.fleet:
            self.bus.configure(
                f"telemetry/{entry.uav_id}",
                TopicConfig(rate=telemetry_rate, latency=0.02, stream=100 + entry.uav_id),
            )
            self.bus.configure(
                f"predictions/{entry.uav_id}",
                TopicConfig(rate=fast_rate, latency=0.005, stream=10 + entry.uav_id),
            )

        self.runtimes: dict[int, _Runtime] = {}
        for entry in scenario.fleet:
            plant = PlantParams(
                actuation_lag=self.sim.actuation_lag,
                a_max=scenario.a_max * self.sim.hardware_headroom,
                yaw_rate_max=self.mpc_params.yaw_rate_max,
                idle_power=entry.discharge_rate,
                accel_power_coeff=self.sim.accel_power_coeff,
            )
            runtime = _Runtime(entry=entry, state=entry.initial.copy(), plant=plant)
            runtime.hold_position = entry.initial.position.as_array()
            runtime.hold_heading = entry.initial.heading
            self.runtimes[entry.uav_id] = runtime
        self.uav_ids = sorted(self.runtimes)

        self._sense_rngs = {
            uid: np.random.default_rng([self.seed, 0x5E5E, uid]) for uid in self.uav_ids
        }
        self._worker_rng = np.random.default_rng([self.seed, 0x30B0])

        self.completed_regions: dict[str, float] = {}
        self.events_pending = sorted(scenario.events, key=lambda e: (e.time, e.kind))
        self._event_cursor = 0
        self._latest_telemetry: dict[int, Telemetry] = {}
        self._plan_episodes: list[dict] = []
        self._executed_samples: dict[int, list] = {uid: [] for uid in self.uav_ids}
        self._fov_counts: dict[int, list[int]] = {uid: [0, 0] for uid in self.uav_ids}
        self._min_pairwise = math.inf
        self._min_clearance = math.inf
        self._planner_failure: Optional[dict] = None
        self._step_index = 0
        self._worker_states = {}
        self._decision_history: list[dict] = []
        # Wall-clock instrumentation for the acceptance suite; never logged,
        # so MissionLogs stay byte-deterministic.
        self.planning_wall_time = 0.0
        self.mpc_converged_solves = 0
        self.mpc_degraded_solves = 0
        self.mpc_max_converged_ineq = -math.inf
        self.mpc_max_converged_eq = -math.inf

    # -- events and commands -------------------------------------------------

    def _apply_due_events(self, now: float) -> None:
        while self._event_cursor < len(self.events_pending):
            event = self.events_pending[self._event_cursor]
            if event.time > now + 1e-12:
                break
            self._event_cursor += 1
            if event.kind == "battery_anomaly":
                self.runtimes[event.uav].anomaly_factor = event.factor
                self.log.event_records.append(
                    {"t": round(now, 6), "kind": "battery_anomaly", "uav": event.uav, "factor": event.factor}
                )
            elif event.kind == "uav_failure":
                self._fail(event.uav, now, "injected")
            elif event.kind == "operator_command":
                self._ingest_operator_command(event.command, now)

    def _ingest_operator_command(self, command: dict, now: float) -> None:
        if command.get("type") == "inject_failure":
            # A controllable fault: the drain collapse trips the manager's
            # endurance monitor, which lands the vehicle safely.
            uav = int(command.get("uav", -1))
            runtime = self.runtimes.get(uav)
            if runtime is not None and runtime.state.status is UavStatus.ACTIVE:
                runtime.anomaly_factor = max(runtime.anomaly_factor, 80.0)
                runtime.fault = True
                self.log.event_records.append(
                    {"t": round(now, 6), "kind": "fault_injected", "uav": uav}
                )
            return
        self.manager.queue_operator_command(command, now)

    def _fail(self, uav: int, now: float, why: str) -> None:
        runtime = self.runtimes[uav]
        if runtime.state.status is UavStatus.ACTIVE:
            runtime.state.status = UavStatus.FAILED
            runtime.state.acceleration = Vec3(0.0, 0.0, 0.0)
            runtime.mode = "down"
            self.log.event_records.append(
                {"t": round(now, 6), "kind": "failure", "uav": uav, "why": why}
            )

    # -- telemetry and manager -----------------------------------------------

    def _publish_telemetry(self, now: float) -> None:
        for uid in self.uav_ids:
            runtime = self.runtimes[uid]
            sensed = sense(
                runtime.state, self.sim.sigma_pos, self.sim.sigma_vel, self._sense_rngs[uid]
            )
            assigned = runtime.assigned_regions
            done = [r for r in assigned if r in self.completed_regions]
            progress = len(done) / len(assigned) if assigned else 1.0
            telemetry = Telemetry(
                uav_id=uid,
                state=sensed,
                task_progress=progress,
                timestamp=now,
                completed_regions=frozenset(self.completed_regions),
            )
            self.bus.publish(f"telemetry/{uid}", telemetry, now)

    def _manager_tick(self, now: float) -> None:
        for uid in self.uav_ids:
            for telemetry in self.bus.poll("manager", f"telemetry/{uid}", now):
                self._latest_telemetry[telemetry.uav_id] = telemetry
        if len(self._latest_telemetry) < len(self.uav_ids):
            # Bus latency: nothing heard from part of the fleet yet.
            return
        decision = self.manager.tick(dict(self._latest_telemetry), now)
        self.log.decision_records.append(decision.record)
        self._decision_history.append(decision.record)
        if decision.commands:
            self.bus.publish("commands", list(decision.commands), now)
            for command in decision.commands:
                self.log.command_records.append(
                    {"t": round(now, 6), **command.to_dict()}
                )

    def _deliver_commands(self, now: float) -> None:
        delivered: list[Command] = [
            command
            for batch in self.bus.poll("fleet", "commands", now)
            for command in batch
        ]
        if not delivered:
            return
        assignments: dict[int, tuple] = {}
        for command in delivered:
            runtime = self.runtimes.get(command.uav_id)
            if runtime is None or runtime.state.status is not UavStatus.ACTIVE:
                continue
            if command.kind is CommandKind.ASSIGN_INSPECTION:
                assignments[command.uav_id] = command.visits
            elif command.kind is CommandKind.LAND:
                runtime.mode = "landing"
                runtime.hold_position = runtime.state.position.as_array()
                runtime.hold_heading = runtime.state.heading
                self.log.event_records.append(
                    {"t": round(now, 6), "kind": "land_commanded", "uav": command.uav_id}
                )
            elif command.kind is CommandKind.ASSIGN_SAFETY:
                runtime.mode = "safety"
                runtime.safety = _SafetyDuty(
                    worker_id=command.worker_id,
                    geometry=command.geometry,
                    slot_index=command.slot_index,
                    team=command.team,
                    estimator=WorkerEstimator(),
                )
            elif command.kind is CommandKind.SET_FORMATION:
                if runtime.safety is not None:
                    runtime.safety.geometry = command.geometry
                    runtime.safety.slot_index = command.slot_index
                    runtime.safety.team = command.team
            elif command.kind is CommandKind.IDLE:
                runtime.mode = "idle"
                runtime.hold_position = runtime.state.position.as_array()
                runtime.hold_heading = runtime.state.heading
            elif command.kind is CommandKind.RECHARGE:
                runtime.mode = "recharge"
                for st in self.scenario.config.get("stations", []):
                    if st["id"] == command.station_id:
                        runtime.station = np.asarray(st["position"], dtype=float)
        if assignments:
            self._plan_and_dispatch(assignments, now)

    def _plan_and_dispatch(self, assignments: dict[int, tuple], now: float) -> None:
        uav_ids = tuple(sorted(assignments))
        visits = {
            uid: tuple(RegionVisit(region, deadline) for region, deadline in assignments[uid])
            for uid in uav_ids
        }
        horizon = max(
            (deadline for uid in uav_ids for _, deadline in assignments[uid]),
            default=0.0,
        ) + 5.0
        task = InspectionTask(
            uav_ids=uav_ids,
            visits=visits,
            horizon=horizon,
            separation_min=self.scenario.separation_min,
        )
        initial_states = {
            uid: (
                self.runtimes[uid].state.position.as_array(),
                self.runtimes[uid].state.velocity.as_array(),
            )
            for uid in uav_ids
        }
        started = time.perf_counter()
        plan = plan_inspection(
            task,
            self.scenario,
            config=self.planner_config,
            initial_states=initial_states,
            seed=self.seed,
        )
        self.planning_wall_time += time.perf_counter() - started
        self.log.event_records.append(
            {
                "t": round(now, 6),
                "kind": "planned",
                "uavs": list(uav_ids),
                "robustness": round(plan.robustness, 9),
                "success": plan.success,
                **({"most_violated": plan.most_violated} if plan.most_violated else {}),
            }
        )
        self._plan_episodes.append({"start": now, "task": task, "plan": plan})
        if not plan.success:
            self._planner_failure = {
                "reason": "planner-failure",
                "most_violated": plan.most_violated,
                "robustness": plan.robustness,
                "t": round(now, 6),
            }
            return
        for uid in uav_ids:
            runtime = self.runtimes[uid]
            runtime.mode = "inspect"
            runtime.trajectory = plan.trajectories[uid]
            runtime.heading_schedule = plan.headings[uid]
            runtime.plan_start = now
            runtime.assigned_regions = [region for region, _ in assignments[uid]]
            runtime.dwell_accum = {}

    # -- control -------------------------------------------------------------

    def _worker_measurements(self, now: float) -> None:
        for script in self.scenario.workers:
            state = script.state_at(now)
            noisy = state.position.as_array() + self._worker_rng.normal(0.0, 1.0, 3) * self.sim.worker_sigma
            self.bus.publish("worker", {"id": script.id, "position": noisy.tolist()}, now)

    def _mpc_step(self, now: float) -> None:
        for uid in self.uav_ids:
            runtime = self.runtimes[uid]
            duty = runtime.safety
            if runtime.mode != "safety" or duty is None:
                continue
            if runtime.state.status is not UavStatus.ACTIVE:
                continue
            for message in self.bus.poll(f"uav{uid}", "worker", now):
                if message["id"] == duty.worker_id:
                    duty.estimator.update(np.asarray(message["position"]), now)
            for other in duty.team:
                if other == uid:
                    continue
                for prediction in self.bus.poll(f"uav{uid}", f"predictions/{other}", now):
                    duty.neighbor_predictions[other] = prediction
            if duty.estimator.position is None:
                continue
            worker_pos, worker_vel = duty.estimator.estimate()
            team = [u for u in duty.team if self.runtimes[u].state.status is UavStatus.ACTIVE]
            g = max(len(team), 1)
            slot_list = formation_slots(
                WorkerState(duty.worker_id, Vec3.from_array(worker_pos), Vec3.from_array(worker_vel)),
                duty.geometry,
                g,
            )
            slot = slot_list[min(duty.slot_index, g - 1)]
            neighbors = [
                duty.neighbor_predictions[o]
                for o in sorted(duty.neighbor_predictions)
                if o != uid and o in team
            ]
            solution = solve_step(
                runtime.state,
                slot,
                (worker_pos, worker_vel),
                neighbors,
                self.scenario,
                self.mpc_params,
                runtime.entry.camera,
                warm_start=advance(duty.warm, self.mpc_params.shooting_points),
            )
            duty.warm = solution
            duty.current_command = (solution.controls[0, :3].copy(), float(solution.controls[0, 3]))
            self.log.mpc_rows.append(
                ",".join(
                    [
                        _fmt(now),
                        str(uid),
                        solution.status,
                        str(solution.iterations),
                        _fmt(solution.cost_action),
                        _fmt(solution.cost_perception),
                        _fmt(solution.residual_eq),
                        _fmt(max(solution.residual_ineq, 0.0)),
                    ]
                )
            )
            if solution.status == "converged":
                self.mpc_converged_solves += 1
                self.mpc_max_converged_ineq = max(self.mpc_max_converged_ineq, solution.residual_ineq)
                self.mpc_max_converged_eq = max(self.mpc_max_converged_eq, solution.residual_eq)
            else:
                self.mpc_degraded_solves += 1
            self.bus.publish(f"predictions/{uid}", solution.positions.copy(), now)

    def _control_command(self, runtime: _Runtime, now: float) -> tuple[np.ndarray, float]:
        state = runtime.state
        if runtime.mode == "inspect" and runtime.trajectory is not None:
            local = now - runtime.plan_start
            p_ref, v_ref, a_ref = runtime.trajectory.sample(local)
            schedule = runtime.heading_schedule
            idx = min(int(local / runtime.trajectory.ts), len(schedule) - 1)
            return track((p_ref, v_ref, a_ref, float(schedule[idx])), state, self.gains, runtime.plant)
        if runtime.mode == "safety" and runtime.safety is not None:
            return runtime.safety.current_command
        if runtime.mode == "landing":
            target = runtime.hold_position.copy()
            target[2] = max(0.0, state.position.z - 1.0)
            ref_v = np.array([0.0, 0.0, -self.sim.landing_speed])
            return track((target, ref_v, np.zeros(3), runtime.hold_heading), state, self.gains, runtime.plant)
        if runtime.mode == "recharge" and runtime.station is not None:
            return track(
                (runtime.station, np.zeros(3), np.zeros(3), runtime.hold_heading),
                state, self.gains, runtime.plant,
            )
        # idle hover
        return track(
            (runtime.hold_position, np.zeros(3), np.zeros(3), runtime.hold_heading),
            state, self.gains, runtime.plant,
        )

    def _plant_and_progress(self, now: float) -> None:
        for uid in self.uav_ids:
            runtime = self.runtimes[uid]
            state = runtime.state
            if state.status is not UavStatus.ACTIVE:
                continue
            cmd_acc, cmd_yaw = self._control_command(runtime, now)
            new_state = plant_step(
                state, cmd_acc, cmd_yaw, runtime.plant, self.sim.dt, runtime.anomaly_factor
            )
            runtime.state = new_state
            if new_state.status is UavStatus.FAILED:
                self.log.event_records.append(
                    {"t": round(now, 6), "kind": "battery_exhausted", "uav": uid}
                )
                runtime.mode = "down"
                continue
            if runtime.mode == "landing" and new_state.position.z <= 0.05:
                new_state.status = UavStatus.LANDED
                new_state.acceleration = Vec3(0.0, 0.0, 0.0)
                new_state.velocity = Vec3(0.0, 0.0, 0.0)
                runtime.mode = "down"
                if not runtime.landed_event:
                    runtime.landed_event = True
                    self.log.event_records.append(
                        {"t": round(now, 6), "kind": "landed", "uav": uid}
                    )
                continue
            if runtime.mode == "recharge" and runtime.station is not None:
                if np.linalg.norm(new_state.position.as_array() - runtime.station) < 0.5:
                    new_state.battery_energy = runtime.entry.initial.battery_energy
                    runtime.mode = "idle"
                    runtime.hold_position = runtime.station
                    self.log.event_records.append(
                        {"t": round(now, 6), "kind": "recharged", "uav": uid}
                    )
            if runtime.mode == "inspect":
                self._update_dwell(runtime, uid, now)

    def _update_dwell(self, runtime: _Runtime, uid: int, now: float) -> None:
        position = runtime.state.position
        for region_id in runtime.assigned_regions:
            if region_id in self.completed_regions:
                continue
            region = self.scenario.region_by_id(region_id)
            if in_region(position, region):
                acc = runtime.dwell_accum.get(region_id, 0.0) + self.sim.dt
                runtime.dwell_accum[region_id] = acc
                if acc + 1e-9 >= region.dwell_time:
                    self.completed_regions[region_id] = now
                    self.log.event_records.append(
                        {"t": round(now, 6), "kind": "region_completed", "region": region_id, "uav": uid}
                    )
            else:
                runtime.dwell_accum[region_id] = 0.0

    # -- metrics and logging ---------------------------------------------------

    def _accumulate_metrics(self, now: float) -> None:
        airborne = [
            uid
            for uid in self.uav_ids
            if self.runtimes[uid].state.status is UavStatus.ACTIVE
        ]
        for i, uid_a in enumerate(airborne):
            pa = self.runtimes[uid_a].state.position
            for uid_b in airborne[i + 1 :]:
                pb = self.runtimes[uid_b].state.position
                self._min_pairwise = min(self._min_pairwise, pa.distance_to(pb))
        if self.scenario.towers or self.scenario.wires:
            for uid in airborne:
                self._min_clearance = min(
                    self._min_clearance,
                    distance_to_obstacles(self.runtimes[uid].state.position, self.scenario),
                )
        for uid in airborne:
            runtime = self.runtimes[uid]
            duty = runtime.safety
            if runtime.mode != "safety" or duty is None:
                continue
            worker = self._worker_states.get(duty.worker_id)
            if worker is None:
                continue
            camera = runtime.entry.camera
            try:
                az, el, _ = bearing_errors(
                    runtime.state.position.as_array(),
                    runtime.state.heading,
                    worker.position.as_array(),
                    camera.mount_pitch,
                )
            except Exception:
                continue
            inside = abs(az) <= camera.fov_horizontal / 2 and abs(el) <= camera.fov_vertical / 2
            if now >= 5.0:
                counts = self._fov_counts[uid]
                counts[1] += 1
                if inside:
                    counts[0] += 1

    def _log_telemetry(self, now: float) -> None:
        for uid in self.uav_ids:
            state = self.runtimes[uid].state
            row = ",".join(
                [
                    _fmt(now),
                    str(uid),
                    _fmt(state.position.x),
                    _fmt(state.position.y),
                    _fmt(state.position.z),
                    _fmt(state.velocity.x),
                    _fmt(state.velocity.y),
                    _fmt(state.velocity.z),
                    _fmt(state.acceleration.x),
                    _fmt(state.acceleration.y),
                    _fmt(state.acceleration.z),
                    _fmt(state.heading),
                    _fmt(state.battery_energy),
                    state.status.value,
                ]
            )
            self.log.telemetry_rows.append(row)
            self._executed_samples[uid].append(
                (
                    now,
                    state.position.as_array().copy(),
                    state.velocity.as_array().copy(),
                )
            )

    def make_snapshot(self, now: float) -> dict:
        uavs = []
        for uid in self.uav_ids:
            runtime = self.runtimes[uid]
            state = runtime.state
            capacity = runtime.entry.initial.battery_energy
            uavs.append(
                {
                    "id": uid,
                    "position": [round(state.position.x, 4), round(state.position.y, 4), round(state.position.z, 4)],
                    "heading": round(state.heading, 4),
                    "battery_fraction": round(state.battery_energy / capacity if capacity else 0.0, 4),
                    "status": state.status.value,
                    "mode": runtime.mode,
                    "fault": runtime.fault,
                }
            )
        workers = [
            {"id": wid, "position": [round(w.position.x, 4), round(w.position.y, 4), round(w.position.z, 4)]}
            for wid, w in sorted(self._worker_states.items())
        ]
        plan = self.manager.plan
        assignment = (
            {str(uid): [t.id for t in chain] for uid, chain in sorted(plan.assignment.items())}
            if plan
            else {}
        )
        slots = []
        geometry = None
        for uid in self.uav_ids:
            duty = self.runtimes[uid].safety
            if duty is not None and self._worker_states.get(duty.worker_id) is not None:
                worker = self._worker_states[duty.worker_id]
                team = [u for u in duty.team if self.runtimes[u].state.status is UavStatus.ACTIVE]
                geometry = [
                    duty.geometry.distance,
                    duty.geometry.azimuth_center,
                    duty.geometry.elevation,
                    duty.geometry.inter_uav_angle,
                ]
                for position, heading in formation_slots(worker, duty.geometry, max(len(team), 1)):
                    slots.append(
                        [round(position.x, 4), round(position.y, 4), round(position.z, 4)]
                    )
                break
        return {
            "type": "snapshot",
            "t": round(now, 6),
            "uavs": uavs,
            "workers": workers,
            "assignment": assignment,
            "decisions": self._decision_history[-5:],
            "formation": geometry,
            "slots": slots,
            "regions_completed": sorted(self.completed_regions),
            "scene": {
                "towers": [
                    {
                        "center": [t.center.x, t.center.y, t.center.z],
                        "radius": t.radius,
                        "height": t.height,
                    }
                    for t in self.scenario.towers
                ],
                "wires": [
                    {
                        "a": [w.endpoint_a.x, w.endpoint_a.y, w.endpoint_a.z],
                        "b": [w.endpoint_b.x, w.endpoint_b.y, w.endpoint_b.z],
                    }
                    for w in self.scenario.wires
                ],
                "regions": [
                    {
                        "id": r.id,
                        "center": [r.center.x, r.center.y, r.center.z],
                        "half_extents": [r.half_extents.x, r.half_extents.y, r.half_extents.z],
                    }
                    for r in self.scenario.regions
                ],
            },
        }

    # -- main loop -------------------------------------------------------------

    def step(self) -> None:
        i = self._step_index
        now = i * self.sim.dt
        self._apply_due_events(now)
        while True:
            try:
                command = self.command_queue.popleft()
            except IndexError:
                break
            self._ingest_operator_command(command, now)
        self._worker_states = {
            script.id: script.state_at(now) for script in self.scenario.workers
        }
        if self.clock.due("telemetry", i):
            self._publish_telemetry(now)
            self._worker_measurements(now)
        if self.clock.due("manager", i):
            self._manager_tick(now)
        self._deliver_commands(now)
        if self.clock.due("mpc", i):
            self._mpc_step(now)
        self._log_telemetry(now)
        self._accumulate_metrics(now)
        if self.clock.due("snapshot", i) and self.snapshot_sink is not None:
            snapshot = self.make_snapshot(now)
            self.snapshot_sink(snapshot)
        self._plant_and_progress(now)
        self._step_index += 1

    @property
    def now(self) -> float:
        return self._step_index * self.sim.dt

    def finish(self) -> MissionLog:
        self.log.bus_stats = self.bus.stats()
        self.log.metrics = self._final_metrics()
        self.log.write()
        return self.log

    def run(self) -> MissionLog:
        for _ in range(self.total_steps):
            self.step()
        return self.finish()

    # -- wrap-up ---------------------------------------------------------------

    def _executed_robustness(self) -> list[dict]:
        out = []
        ratio = int(round(self.scenario.ts / self.sim.dt))
        for episode in self._plan_episodes:
            task: InspectionTask = episode["task"]
            plan: PlanResult = episode["plan"]
            if not plan.success:
                out.append({"start": episode["start"], "robustness": None, "evaluated": False})
                continue
            n = plan.diagnostics["horizon_steps"]
            start = episode["start"]
            columns = []
            enough = True
            for uid in task.uav_ids:
                samples = self._executed_samples[uid]
                offset = int(round(start / self.sim.dt))
                rows_p, rows_v = [], []
                for k in range(n + 1):
                    idx = offset + k * ratio
                    if idx >= len(samples):
                        enough = False
                        break
                    rows_p.append(samples[idx][1])
                    rows_v.append(samples[idx][2])
                if not enough:
                    break
                columns.append(np.hstack([np.vstack(rows_p), np.vstack(rows_v)]))
            if not enough:
                out.append({"start": episode["start"], "robustness": None, "evaluated": False})
                continue
            trace = stl.Trace(self.scenario.ts, np.hstack(columns))
            formula = build_inspection_formula(task, self.scenario)
            rho = stl.robustness(formula, trace, 0)
            out.append(
                {"start": episode["start"], "robustness": round(float(rho), 9), "evaluated": True}
            )
        return out

    def _final_metrics(self) -> dict:
        fov = {}
        fov_fractions = []
        for uid, (inside, total) in sorted(self._fov_counts.items()):
            if total > 0:
                fraction = inside / total
                fov[str(uid)] = round(fraction, 6)
                fov_fractions.append(fraction)
        region_tasks = bool(self.scenario.regions)
        all_regions_done = all(
            r.id in self.completed_regions for r in self.scenario.regions
        )
        mission_complete = (
            (not region_tasks or all_regions_done) and self._planner_failure is None
        )
        violations = []
        if self._min_pairwise < self.scenario.separation_min - self.sim.tracking_allowance:
            violations.append("separation")
        margin = self.planner_config.obstacle_margin
        if (self.scenario.towers or self.scenario.wires) and self._min_clearance < margin - self.sim.tracking_allowance:
            violations.append("obstacle-clearance")
        for uid in self.uav_ids:
            runtime = self.runtimes[uid]
            if runtime.state.status is UavStatus.FAILED and runtime.state.battery_energy <= 0.0:
                violations.append(f"battery-exhausted:{uid}")
        if self._planner_failure is not None:
            violations.append("planner-failure")
        completion_time = (
            max(self.completed_regions.values()) if all_regions_done and region_tasks else None
        )
        if mission_complete and region_tasks:
            self.log.event_records.append(
                {"t": round(completion_time, 6), "kind": "mission_complete"}
            )
        return {
            "duration": self.duration,
            "steps": self.total_steps,
            "seed": self.seed,
            "mission_complete": mission_complete,
            "completion_time": completion_time,
            "min_pairwise_distance": None if math.isinf(self._min_pairwise) else round(self._min_pairwise, 6),
            "min_obstacle_clearance": None if math.isinf(self._min_clearance) else round(self._min_clearance, 6),
            "fov_containment_after_transient": fov,
            "fov_containment_min": round(min(fov_fractions), 6) if fov_fractions else None,
            "executed_robustness": self._executed_robustness(),
            "region_completion_times": {
                r: round(t, 6) for r, t in sorted(self.completed_regions.items())
            },
            "violations": violations,
            "planner_failure": self._planner_failure,
        }


def run(
    scenario: Scenario,
    duration: float,
    seed: Optional[int] = None,
    out_dir: Optional[Path] = None,
) -> MissionLog:
    """Execute a scenario headless and write its MissionLog."""
    engine = MissionEngine(scenario, duration, seed=seed, out_dir=out_dir)
    return engine.run()
