"""Multi-vehicle inspection trajectory planning.

A joint mission formula (region visits with deadlines and dwell, obstacle
keep-out, pairwise separation) is maximized in its smoothed robustness
over per-vehicle acceleration profiles. Positions and velocities are
eliminated by exact forward integration of the discrete double
integrator, so dynamic consistency holds by construction; acceleration
bounds are enforced by box projection and velocity bounds by folding
them into the optimized formula plus a final hard-clip pass.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import stl
from .world import Scenario, TargetRegion, Trajectory, wrap_angle


class InfeasibleWindowError(ValueError):
    """A visit deadline is shorter than the required dwell."""


@dataclass(frozen=True)
class RegionVisit:
    region_id: str
    deadline: float  # seconds from plan start


@dataclass
class InspectionTask:
    uav_ids: tuple[int, ...]
    visits: dict[int, tuple[RegionVisit, ...]]  # per-uav ordered visit lists
    horizon: float
    separation_min: float

    def __post_init__(self) -> None:
        if len(self.uav_ids) < 1:
            raise ValueError("task needs at least one vehicle")
        for uid in self.uav_ids:
            for visit in self.visits.get(uid, ()):
                if visit.deadline > self.horizon + 1e-9:
                    raise ValueError(
                        f"visit {visit.region_id} deadline {visit.deadline} "
                        f"exceeds horizon {self.horizon}"
                    )

    def validate_against(self, scenario: Scenario) -> None:
        for uid in self.uav_ids:
            scenario.fleet_entry(uid)
            for visit in self.visits.get(uid, ()):
                scenario.region_by_id(visit.region_id)


@dataclass(frozen=True)
class PlannerConfig:
    iterations: int = 400
    restarts: int = 5
    kappa0: float = 10.0
    kappa_max: float = 80.0
    obstacle_margin: float = 1.0
    keepout_sides: int = 8
    tracking_allowance: float = 0.4
    initial_step: float = 0.5
    max_backtracks: int = 30
    cruise_fraction: float = 0.8
    perturbation: float = 0.4
    early_stop_robustness: float = 0.3
    check_interval: int = 25

    @staticmethod
    def from_dict(doc: dict) -> "PlannerConfig":
        known = {f: doc[f] for f in doc if f in PlannerConfig.__dataclass_fields__}
        return PlannerConfig(**known)


@dataclass
class PlanResult:
    task: InspectionTask
    trajectories: dict[int, Trajectory]
    headings: dict[int, np.ndarray]
    robustness: float
    success: bool
    most_violated: Optional[str]
    diagnostics: dict


# ---------------------------------------------------------------------------
# Formula construction
# ---------------------------------------------------------------------------


def _steps(seconds: float, ts: float) -> int:
    return int(round(seconds / ts))


def _axis_index(uav_slot: int, kind: str, axis: int) -> int:
    # Stacked layout per vehicle: [px, py, pz, vx, vy, vz].
    return uav_slot * 6 + (0 if kind == "p" else 3) + axis


def _box_predicates(slot: int, region: TargetRegion, dim: int, shrink: float) -> list:
    preds = []
    center = region.center.as_array()
    half = region.half_extents.as_array() - shrink
    for axis in range(3):
        lo = np.zeros(dim)
        lo[_axis_index(slot, "p", axis)] = 1.0
        preds.append(stl.LinearPredicate(lo, center[axis] - half[axis]))
        hi = np.zeros(dim)
        hi[_axis_index(slot, "p", axis)] = -1.0
        preds.append(stl.LinearPredicate(hi, -(center[axis] + half[axis])))
    return preds


def build_inspection_formula(
    task: InspectionTask,
    scenario: Scenario,
    margin: float = 1.0,
    keepout_sides: int = 8,
    contingency: float = 0.0,
) -> stl.Formula:
    """Mission formula: visits under deadlines, obstacle keep-out, separation.

    contingency shrinks region boxes and inflates clearances/separation so
    an optimizer can reserve headroom for tracking error; zero reproduces
    the mission contract exactly.
    """
    task.validate_against(scenario)
    ts = scenario.ts
    n = _steps(task.horizon, ts)
    q = len(task.uav_ids)
    dim = 6 * q
    children: list[stl.Formula] = []

    for slot, uid in enumerate(task.uav_ids):
        for visit in task.visits.get(uid, ()):
            region = scenario.region_by_id(visit.region_id)
            dwell_steps = _steps(region.dwell_time, ts)
            deadline_steps = _steps(visit.deadline, ts)
            if deadline_steps < dwell_steps:
                raise InfeasibleWindowError(
                    f"visit {visit.region_id}: deadline {visit.deadline}s shorter "
                    f"than dwell {region.dwell_time}s"
                )
            inbox = stl.And(_box_predicates(slot, region, dim, contingency))
            hold = stl.Globally(0, dwell_steps, inbox)
            children.append(
                stl.Eventually(
                    0,
                    deadline_steps - dwell_steps,
                    hold,
                    label=f"visit[uav{uid},{visit.region_id}]",
                )
            )

    clearance = margin + contingency
    for slot, uid in enumerate(task.uav_ids):
        for t_idx, tower in enumerate(scenario.towers):
            keep = tower.radius + clearance
            disjuncts = []
            cx, cy = tower.center.x, tower.center.y
            for m in range(keepout_sides):
                theta = 2.0 * math.pi * m / keepout_sides
                nx, ny = math.cos(theta), math.sin(theta)
                coeffs = np.zeros(dim)
                coeffs[_axis_index(slot, "p", 0)] = nx
                coeffs[_axis_index(slot, "p", 1)] = ny
                disjuncts.append(stl.LinearPredicate(coeffs, keep + nx * cx + ny * cy))
            top = np.zeros(dim)
            top[_axis_index(slot, "p", 2)] = 1.0
            disjuncts.append(
                stl.LinearPredicate(top, tower.center.z + tower.height + clearance)
            )
            children.append(
                stl.Globally(0, n, stl.Or(disjuncts), label=f"avoid[uav{uid},tower{t_idx}]")
            )
        for w_idx, wire in enumerate(scenario.wires):
            a = wire.endpoint_a.as_array()
            b = wire.endpoint_b.as_array()
            lo = np.minimum(a, b) - wire.clearance_radius - clearance
            hi = np.maximum(a, b) + wire.clearance_radius + clearance
            disjuncts = []
            for axis in range(3):
                up = np.zeros(dim)
                up[_axis_index(slot, "p", axis)] = 1.0
                disjuncts.append(stl.LinearPredicate(up, hi[axis]))
                dn = np.zeros(dim)
                dn[_axis_index(slot, "p", axis)] = -1.0
                disjuncts.append(stl.LinearPredicate(dn, -lo[axis]))
            children.append(
                stl.Globally(0, n, stl.Or(disjuncts), label=f"avoid[uav{uid},wire{w_idx}]")
            )

    sep = task.separation_min + contingency
    for i in range(q):
        for j in range(i + 1, q):
            disjuncts = []
            for axis in range(3):
                for sign in (1.0, -1.0):
                    coeffs = np.zeros(dim)
                    coeffs[_axis_index(i, "p", axis)] = sign
                    coeffs[_axis_index(j, "p", axis)] = -sign
                    disjuncts.append(stl.LinearPredicate(coeffs, sep))
            children.append(
                stl.Globally(
                    0, n, stl.Or(disjuncts),
                    label=f"sep[uav{task.uav_ids[i]},uav{task.uav_ids[j]}]",
                )
            )

    if not children:
        raise ValueError("task induces an empty formula")
    return stl.And(children, label="mission")


def _velocity_bound_nodes(q: int, n: int, v_max: float, dim: int) -> list[stl.Formula]:
    nodes = []
    for slot in range(q):
        preds = []
        for axis in range(3):
            up = np.zeros(dim)
            up[_axis_index(slot, "v", axis)] = -1.0
            preds.append(stl.LinearPredicate(up, -v_max))
            dn = np.zeros(dim)
            dn[_axis_index(slot, "v", axis)] = 1.0
            preds.append(stl.LinearPredicate(dn, -v_max))
        nodes.append(stl.Globally(0, n, stl.And(preds), label=f"vbound[{slot}]"))
    return nodes


# ---------------------------------------------------------------------------
# Dynamics helpers
# ---------------------------------------------------------------------------


def _rollout(accel: np.ndarray, p0: np.ndarray, v0: np.ndarray, ts: float):
    """Exact discrete double-integrator rollout; accel is (N, 3)."""
    v = np.vstack([v0, v0 + ts * np.cumsum(accel, axis=0)])
    dp = v[:-1] * ts + 0.5 * accel * ts * ts
    p = np.vstack([p0, p0 + np.cumsum(dp, axis=0)])
    return p, v

def _accel_gradient(grad_p: np.ndarray, grad_v: np.ndarray, ts: float) -> np.ndarray:
    """Pull a sample-space gradient back to the acceleration variables."""
    n = grad_p.shape[0] - 1
    steps = np.arange(n + 1)[:, None]
    s1 = np.cumsum(grad_p[::-1], axis=0)[::-1]
    s2 = np.cumsum((steps * grad_p)[::-1], axis=0)[::-1]
    sv = np.cumsum(grad_v[::-1], axis=0)[::-1]
    m = np.arange(n)[:, None]
    return ts * sv[1:] + ts * ts * (s2[1:] - (m + 0.5) * s1[1:])


def _clip_rebuild(
    accel: np.ndarray, p0: np.ndarray, v0: np.ndarray, ts: float, v_max: float, a_max: float
):
    """Hard-clip velocities and rebuild a consistent bounded trajectory.

    Clipping is 1-Lipschitz, so the recomputed accelerations never exceed
    the original bound; the rebuilt profile has zero dynamics defect.
    """
    accel = np.clip(accel, -a_max, a_max)
    n = accel.shape[0]
    v = np.empty((n + 1, 3))
    v[0] = np.clip(v0, -v_max, v_max)
    for k in range(n):
        v[k + 1] = np.clip(v[k] + accel[k] * ts, -v_max, v_max)
    a_new = (v[1:] - v[:-1]) / ts
    dp = v[:-1] * ts + 0.5 * a_new * ts * ts
    p = np.vstack([p0, p0 + np.cumsum(dp, axis=0)])
    return p, v, a_new


def _stack_samples(ps: Sequence[np.ndarray], vs: Sequence[np.ndarray]) -> np.ndarray:
    columns = []
    for p, v in zip(ps, vs):
        columns.append(p)
        columns.append(v)
    return np.hstack(columns)


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------


def _arc_augment(path: list[np.ndarray], scenario: Scenario, clearance: float) -> list[np.ndarray]:
    """Insert circular detour points where straight legs would cross a tower."""
    out = [path[0]]
    for target in path[1:]:
        start = out[-1]
        detour = _tower_detour(start, target, scenario, clearance)
        out.extend(detour)
        out.append(target)
    return out


def _tower_detour(
    a: np.ndarray, b: np.ndarray, scenario: Scenario, clearance: float
) -> list[np.ndarray]:
    for tower in scenario.towers:
        c = tower.center.as_array()[:2]
        a2, b2 = a[:2] - c, b[:2] - c
        seg = b2 - a2
        seg_len2 = float(seg @ seg)
        if seg_len2 < 1e-12:
            continue
        t = float(np.clip(-(a2 @ seg) / seg_len2, 0.0, 1.0))
        closest = a2 + t * seg
        keep = tower.radius + clearance
        if np.linalg.norm(closest) >= keep:
            continue
        # Walk the shorter angular way around at a safe radius.
        radius = max(np.linalg.norm(a2), np.linalg.norm(b2), keep + 1.5)
        ang_a = math.atan2(a2[1], a2[0])
        ang_b = math.atan2(b2[1], b2[0])
        delta = wrap_angle(ang_b - ang_a)
        steps = max(int(abs(delta) / math.radians(30.0)), 1)
        points = []
        for s in range(1, steps):
            ang = ang_a + delta * s / steps
            z = a[2] + (b[2] - a[2]) * s / steps
            points.append(
                np.array([c[0] + radius * math.cos(ang), c[1] + radius * math.sin(ang), z])
            )
        return points
    return []


def _initial_accelerations(
    task: InspectionTask,
    scenario: Scenario,
    slot: int,
    uid: int,
    p0: np.ndarray,
    v0: np.ndarray,
    n: int,
    v_max: float,
    a_max: float,
    config: PlannerConfig,
) -> np.ndarray:
    """Time-scaled piecewise-linear path through the visit regions."""
    ts = scenario.ts
    cruise = config.cruise_fraction * v_max
    knots_t = [0.0]
    knots_p = [p0]
    for visit in task.visits.get(uid, ()):
        region = scenario.region_by_id(visit.region_id)
        target = region.center.as_array()
        path = _arc_augment([knots_p[-1], target], scenario, config.obstacle_margin)
        for point in path[1:]:
            hop = float(np.linalg.norm(point - knots_p[-1]))
            arrive = knots_t[-1] + max(hop / cruise, ts)
            knots_t.append(arrive)
            knots_p.append(point)
        # Pull the arrival inside the deadline, then hold for the dwell.
        latest = visit.deadline - region.dwell_time
        if knots_t[-1] > latest:
            knots_t[-1] = max(latest, knots_t[-2] + ts if len(knots_t) > 1 else 0.0)
        knots_t.append(knots_t[-1] + max(region.dwell_time, ts))
        knots_p.append(target)
    horizon = n * ts
    if knots_t[-1] > horizon:
        scale = horizon / knots_t[-1]
        knots_t = [t * scale for t in knots_t]
    ordered = np.maximum.accumulate(np.asarray(knots_t))
    # Strictly increasing knot times for interpolation.
    for i in range(1, len(ordered)):
        if ordered[i] <= ordered[i - 1]:
            ordered[i] = ordered[i - 1] + 1e-6
    grid = np.arange(n + 1) * ts
    points = np.vstack(knots_p)
    reference = np.empty((n + 1, 3))
    for axis in range(3):
        reference[:, axis] = np.interp(grid, ordered, points[:, axis])
    ref_vel = np.vstack([np.diff(reference, axis=0) / ts, np.zeros(3)])
    # Track the reference with a saturated PD rollout so the profile is
    # bounded and dynamically consistent instead of impulse-shaped.
    kp, kv = 2.0, 3.0
    accel = np.empty((n, 3))
    p, v = p0.copy(), v0.copy()
    for k in range(n):
        a = kp * (reference[k + 1] - p) + kv * (ref_vel[k] - v)
        a = np.clip(a, -a_max, a_max)
        overspeed = np.abs(v + a * ts) > v_max
        a[overspeed] = np.clip(
            (np.sign(v[overspeed]) * v_max - v[overspeed]) / ts,
            -a_max,
            a_max,
        )
        accel[k] = a
        p = p + v * ts + 0.5 * a * ts * ts
        v = v + a * ts
    return accel


# ---------------------------------------------------------------------------
# The planner
# ---------------------------------------------------------------------------


def plan_inspection(
    task: InspectionTask,
    scenario: Scenario,
    v_max: Optional[float] = None,
    a_max: Optional[float] = None,
    ts: Optional[float] = None,
    config: Optional[PlannerConfig] = None,
    initial_states: Optional[dict[int, tuple[np.ndarray, np.ndarray]]] = None,
    seed: Optional[int] = None,
) -> PlanResult:
    """Maximize smoothed mission robustness over acceleration profiles.

    Projected gradient ascent with backtracking line search and seeded
    random restarts; the smoothing sharpness doubles per restart. The
    returned robustness is the exact value of the unpadded mission
    formula on the returned (bounded, dynamically consistent)
    trajectories; success requires it to be positive.
    """
    v_max = scenario.v_max if v_max is None else v_max
    a_max = scenario.a_max if a_max is None else a_max
    ts = scenario.ts if ts is None else ts
    if not (v_max > 0 and a_max > 0 and ts > 0):
        raise ValueError("v_max, a_max and ts must be > 0")
    config = config or PlannerConfig.from_dict(scenario.config.get("planner", {}))
    seed = scenario.seed if seed is None else seed
    task.validate_against(scenario)

    n = _steps(task.horizon, ts)
    if n < 1:
        raise ValueError("horizon shorter than one step")
    q = len(task.uav_ids)
    dim = 6 * q

    mission = build_inspection_formula(
        task, scenario, margin=config.obstacle_margin, keepout_sides=config.keepout_sides
    )
    padded = build_inspection_formula(
        task,
        scenario,
        margin=config.obstacle_margin,
        keepout_sides=config.keepout_sides,
        contingency=config.tracking_allowance,
    )
    objective = stl.And(
        list(padded.children) + _velocity_bound_nodes(q, n, v_max, dim), label="objective"
    )

    starts = []
    for slot, uid in enumerate(task.uav_ids):
        if initial_states is not None and uid in initial_states:
            p0, v0 = initial_states[uid]
            p0 = np.asarray(p0, dtype=float)
            v0 = np.asarray(v0, dtype=float)
        else:
            entry = scenario.fleet_entry(uid)
            p0 = entry.initial.position.as_array()
            v0 = entry.initial.velocity.as_array()
        starts.append((p0, v0))

    base = np.stack(
        [
            _initial_accelerations(
                task, scenario, slot, uid, starts[slot][0], starts[slot][1],
                n, v_max, a_max, config,
            )
            for slot, uid in enumerate(task.uav_ids)
        ]
    )  # (q, N, 3)

    def evaluate(accel: np.ndarray, kappa: float, with_grad: bool):
        ps, vs = [], []
        for slot in range(q):
            p, v = _rollout(accel[slot], starts[slot][0], starts[slot][1], ts)
            ps.append(p)
            vs.append(v)
        trace = stl.Trace(ts, _stack_samples(ps, vs))
        if not with_grad:
            return stl.smooth_robustness(objective, trace, 0, kappa), None
        value, grad = stl.smooth_robustness_with_gradient(objective, trace, 0, kappa)
        accel_grad = np.empty_like(accel)
        for slot in range(q):
            gp = grad[:, 6 * slot : 6 * slot + 3]
            gv = grad[:, 6 * slot + 3 : 6 * slot + 6]
            accel_grad[slot] = _accel_gradient(gp, gv, ts)
        return value, accel_grad

    def finalize(accel: np.ndarray):
        ps, vs, accs = [], [], []
        for slot in range(q):
            p, v, a = _clip_rebuild(
                accel[slot], starts[slot][0], starts[slot][1], ts, v_max, a_max
            )
            ps.append(p)
            vs.append(v)
            accs.append(np.vstack([a, np.zeros(3)]))
        trace = stl.Trace(ts, _stack_samples(ps, vs))
        rho = stl.robustness(mission, trace, 0)
        return rho, trace, ps, vs, accs

    best = None  # (rho, restart, trace, ps, vs, accs)
    best_accel = None
    previous_rho = -math.inf
    iteration_counts = []
    final_smooth = 0.0
    restarts_used = 0
    for restart in range(config.restarts):
        restarts_used += 1
        kappa = min(config.kappa0 * 2.0**restart, config.kappa_max)
        # Annealing continuation: refine the incumbent at a sharper kappa;
        # perturb off the base profile only when progress has stalled.
        stalled = best is not None and best[0] <= previous_rho + 1e-9
        if best_accel is not None and not stalled:
            accel = best_accel.copy()
        else:
            accel = base.copy()
            if restart > 0:
                for slot, uid in enumerate(task.uav_ids):
                    rng = np.random.default_rng([seed, restart, uid])
                    accel[slot] += config.perturbation * a_max * rng.normal(size=(n, 3))
        if best is not None:
            previous_rho = best[0]
        accel = np.clip(accel, -a_max, a_max)

        value, grad = evaluate(accel, kappa, with_grad=True)
        alpha = config.initial_step
        iters = 0
        for iteration in range(config.iterations):
            iters = iteration + 1
            norm = float(np.abs(grad).max())
            if norm < 1e-12:
                break
            step = grad / norm
            improved = False
            for _ in range(config.max_backtracks):
                candidate = np.clip(accel + alpha * step, -a_max, a_max)
                cand_value, _ = evaluate(candidate, kappa, with_grad=False)
                if cand_value > value + 1e-12:
                    accel = candidate
                    value, grad = evaluate(accel, kappa, with_grad=True)
                    alpha = min(alpha * 1.5, 4.0 * config.initial_step)
                    improved = True
                    break
                alpha *= 0.5
            if not improved or alpha < 1e-9:
                break
            if iters % config.check_interval == 0:
                if finalize(accel)[0] > config.early_stop_robustness:
                    break
        iteration_counts.append(iters)
        rho, trace, ps, vs, accs = finalize(accel)
        if best is None or rho > best[0]:
            best = (rho, restart, trace, ps, vs, accs)
            best_accel = accel.copy()
            final_smooth = value
        if best[0] > config.early_stop_robustness:
            break

    rho, _, trace, ps, vs, accs = best[0], best[1], best[2], best[3], best[4], best[5]
    trajectories = {
        uid: Trajectory(ts=ts, positions=ps[slot], velocities=vs[slot], accelerations=accs[slot])
        for slot, uid in enumerate(task.uav_ids)
    }
    for traj in trajectories.values():
        assert traj.dynamics_defect() <= 1e-6
    success = rho > 0.0
    most_violated = None
    if not success:
        crit = stl.critical_node(mission, trace, 0)
        most_violated = crit.label
    result = PlanResult(
        task=task,
        trajectories=trajectories,
        headings={},
        robustness=float(rho),
        success=success,
        most_violated=most_violated,
        diagnostics={
            "iterations": iteration_counts,
            "restarts": restarts_used,
            "final_smooth_objective": round(float(final_smooth), 9),
            "horizon_steps": n,
            "success": success,
            "most_violated": most_violated,
        },
    )
    result.headings = heading_reference(task, result, scenario)
    return result


# ---------------------------------------------------------------------------
# Heading schedule
# ---------------------------------------------------------------------------


def heading_reference(
    task: InspectionTask, plan: PlanResult, scenario: Scenario
) -> dict[int, np.ndarray]:
    """Piecewise-constant look directions: at the region during each visit,
    along the planned velocity in between (held below 0.1 m/s)."""
    ts = scenario.ts
    headings = {}
    for uid in task.uav_ids:
        traj = plan.trajectories[uid]
        n = traj.n_steps
        psi = np.full(n + 1, np.nan)
        speeds = np.linalg.norm(traj.velocities, axis=1)
        moving = speeds >= 0.1
        psi[moving] = np.arctan2(traj.velocities[moving, 1], traj.velocities[moving, 0])
        for visit in task.visits.get(uid, ()):
            region = scenario.region_by_id(visit.region_id)
            window = _find_visit_window(traj, region, visit, ts)
            if window is None:
                continue
            look = math.atan2(
                region.center.y - region.viewpoint.y, region.center.x - region.viewpoint.x
            )
            psi[window[0] : window[1] + 1] = look
        psi = _fill_held(psi)
        headings[uid] = psi
    return headings


def _find_visit_window(traj: Trajectory, region: TargetRegion, visit: RegionVisit, ts: float):
    dwell_steps = _steps(region.dwell_time, ts)
    deadline_steps = min(_steps(visit.deadline, ts), traj.n_steps)
    center = region.center.as_array()
    half = region.half_extents.as_array()
    inside = np.all(np.abs(traj.positions - center) <= half + 1e-12, axis=1)
    run = 0
    for k in range(deadline_steps + 1):
        run = run + 1 if inside[k] else 0
        if run >= dwell_steps + 1:
            return (k - dwell_steps, k)
    return None


def _fill_held(psi: np.ndarray) -> np.ndarray:
    out = psi.copy()
    valid = np.isfinite(out)
    if not valid.any():
        return np.zeros_like(out)
    first = int(np.argmax(valid))
    out[:first] = out[first]
    for k in range(first + 1, out.shape[0]):
        if not np.isfinite(out[k]):
            out[k] = out[k - 1]
    return out


# ---------------------------------------------------------------------------
# Plan dump
# ---------------------------------------------------------------------------


def write_plan(plan: PlanResult, out_dir: Path) -> None:
    """CSV per vehicle plus a JSON diagnostics record."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for uid, traj in sorted(plan.trajectories.items()):
        psi = plan.headings[uid]
        rows = ["t,px,py,pz,vx,vy,vz,ax,ay,az,psi"]
        for k in range(traj.positions.shape[0]):
            cells = [k * traj.ts]
            cells += list(traj.positions[k]) + list(traj.velocities[k])
            cells += list(traj.accelerations[k]) + [psi[k]]
            rows.append(",".join(f"{c:.9g}" for c in cells))
        (out_dir / f"plan_uav{uid}.csv").write_text("\n".join(rows) + "\n")
    record = dict(plan.diagnostics)
    record["robustness"] = round(plan.robustness, 9)
    (out_dir / "plan_diagnostics.json").write_text(
        json.dumps(record, sort_keys=True, indent=2) + "\n"
    )
