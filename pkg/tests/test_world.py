import json
import math

import numpy as np
import pytest

from linewatch.world import (
    CameraParams,
    FleetEntry,
    Scenario,
    TargetRegion,
    Tower,
    UavState,
    Vec3,
    WireSegment,
    WorkerScript,
    distance_to_obstacles,
    in_region,
    obstacle_distance_gradient,
    read_scenario,
    scenario_from_dict,
    scenario_to_dict,
    validate_scenario,
    wire_signed_distance,
    wrap_angle,
)


def make_uav(uav_id=0, position=Vec3(0.0, 0.0, 0.0), caps=("inspection-camera",)):
    return FleetEntry(
        uav_id=uav_id,
        initial=UavState(
            position=position,
            velocity=Vec3(0.0, 0.0, 0.0),
            acceleration=Vec3(0.0, 0.0, 0.0),
            heading=0.0,
            heading_rate=0.0,
            battery_energy=50000.0,
            capabilities=frozenset(caps),
        ),
        camera=CameraParams(1.5, 1.0, 0.0),
        discharge_rate=100.0,
    )


def make_scenario(**overrides) -> Scenario:
    base = dict(
        towers=[Tower(center=Vec3(0, 0, 0), radius=15.0, height=20.0)],
        wires=[],
        regions=[],
        workers=[],
        fleet=[make_uav(0, Vec3(20, 0, 2)), make_uav(1, Vec3(20, 5, 2))],
        v_max=3.0,
        a_max=2.5,
        separation_min=1.0,
        ts=0.1,
        seed=7,
    )
    base.update(overrides)
    return Scenario(**base)


class TestTowerDistance:
    def test_outside_lateral(self):
        s = make_scenario()
        assert distance_to_obstacles(Vec3(20.0, 0.0, 5.0), s) == pytest.approx(5.0)

    def test_on_axis_inside(self):
        s = make_scenario()
        assert distance_to_obstacles(Vec3(0.0, 0.0, 5.0), s) == pytest.approx(-15.0)

    def test_above_rim(self):
        # 16 m out horizontally, 25 m up: closest point is the rim circle.
        s = make_scenario()
        d = distance_to_obstacles(Vec3(16.0, 0.0, 25.0), s)
        assert d == pytest.approx(math.sqrt(1.0 + 25.0), abs=1e-12)

    def test_no_obstacles_is_infinite(self):
        s = make_scenario(towers=[])
        assert distance_to_obstacles(Vec3(0, 0, 0), s) == float("inf")

    def test_lipschitz_in_p(self):
        s = make_scenario(
            wires=[WireSegment(Vec3(-30, 0, 18), Vec3(30, 0, 18), 0.4)]
        )
        rng = np.random.default_rng(0)
        for _ in range(500):
            p = Vec3.from_array(rng.uniform(-40, 40, size=3))
            q = Vec3.from_array(rng.uniform(-40, 40, size=3))
            dp = distance_to_obstacles(p, s)
            dq = distance_to_obstacles(q, s)
            assert abs(dp - dq) <= p.distance_to(q) + 1e-9

    def test_gradient_matches_finite_differences(self):
        s = make_scenario(
            wires=[WireSegment(Vec3(-30, 5, 18), Vec3(30, -5, 18), 0.4)]
        )
        rng = np.random.default_rng(1)
        h = 1e-6
        checked = 0
        for _ in range(200):
            p = rng.uniform(-35, 35, size=3)
            d, g = obstacle_distance_gradient(Vec3.from_array(p), s)
            fd = np.zeros(3)
            for i in range(3):
                e = np.zeros(3)
                e[i] = h
                fd[i] = (
                    distance_to_obstacles(Vec3.from_array(p + e), s)
                    - distance_to_obstacles(Vec3.from_array(p - e), s)
                ) / (2 * h)
            # Skip points near gradient discontinuities (obstacle switchovers).
            if np.linalg.norm(fd) < 0.5:
                continue
            if abs(np.linalg.norm(fd) - 1.0) > 1e-3:
                continue
            checked += 1
            assert np.allclose(g, fd, atol=1e-4)
        assert checked > 100


class TestWireDistance:
    def test_perpendicular(self):
        w = WireSegment(Vec3(-10, 0, 10), Vec3(10, 0, 10), 0.5)
        assert wire_signed_distance(Vec3(0, 3, 10), w) == pytest.approx(2.5)

    def test_beyond_endpoint(self):
        w = WireSegment(Vec3(-10, 0, 10), Vec3(10, 0, 10), 0.5)
        d = wire_signed_distance(Vec3(13, 4, 10), w)
        assert d == pytest.approx(5.0 - 0.5)

    def test_inside_is_negative(self):
        w = WireSegment(Vec3(-10, 0, 10), Vec3(10, 0, 10), 0.5)
        assert wire_signed_distance(Vec3(0, 0.2, 10), w) == pytest.approx(-0.3)


class TestInRegion:
    region = TargetRegion(
        id="r",
        center=Vec3(10.0, -2.0, 5.0),
        half_extents=Vec3(1.0, 2.0, 0.5),
        dwell_time=1.0,
        viewpoint=Vec3(12.0, -2.0, 5.0),
    )

    def test_center(self):
        assert in_region(self.region.center, self.region)

    def test_boundary_inclusive(self):
        p = Vec3(11.0, 0.0, 5.5)  # center + half_extents
        assert in_region(p, self.region)

    def test_outside(self):
        assert not in_region(Vec3(12.0, 2.0, 6.0), self.region)

    def test_all_corners(self):
        c, he = self.region.center.as_array(), self.region.half_extents.as_array()
        for sx in (-1, 1):
            for sy in (-1, 1):
                for sz in (-1, 1):
                    corner = c + he * np.array([sx, sy, sz])
                    assert in_region(Vec3.from_array(corner), self.region)
                    outside = c + 1.5 * he * np.array([sx, sy, sz])
                    assert not in_region(Vec3.from_array(outside), self.region)


class TestValidateScenario:
    def test_valid_base(self):
        assert validate_scenario(make_scenario()) == []

    def test_empty_fleet(self):
        violations = validate_scenario(make_scenario(fleet=[]))
        assert any("fleet non-empty" in v for v in violations)

    def test_initial_separation(self):
        s = make_scenario(
            fleet=[make_uav(0, Vec3(0, 0, 0)), make_uav(1, Vec3(0, 0, 0))]
        )
        violations = validate_scenario(s)
        assert any("initial separation" in v for v in violations)

    def test_too_many_insulators(self):
        tower = Tower(
            center=Vec3(0, 0, 0),
            radius=15.0,
            height=20.0,
            insulators=tuple(Vec3(15.0, 0.0, 16.0) for _ in range(13)),
        )
        violations = validate_scenario(make_scenario(towers=[tower]))
        assert any("twelve" in v for v in violations)

    def test_insulator_outside_cylinder(self):
        tower = Tower(
            center=Vec3(0, 0, 0), radius=15.0, height=20.0, insulators=(Vec3(18, 0, 16),)
        )
        violations = validate_scenario(make_scenario(towers=[tower]))
        assert any("radius*1.1" in v for v in violations)

    def test_shipped_scenarios_validate(self, scenario_dir):
        files = sorted(scenario_dir.glob("*.json"))
        assert files, "scenario corpus must not be empty"
        for path in files:
            scenario = read_scenario(path)
            assert validate_scenario(scenario) == [], path.name

    def test_reference_scenario_matches_desk_parameters(self, scenario_dir):
        s = read_scenario(scenario_dir / "inspection_ref.json")
        assert len(s.towers) == 1
        assert s.towers[0].height == 20.0
        assert s.towers[0].radius == 15.0
        assert len(s.regions) == 6
        assert len(s.fleet) == 2
        assert s.v_max == 3.0
        assert s.a_max == 2.5
        assert s.separation_min == 1.0
        assert s.ts == 0.1


class TestScenarioRoundTrip:
    def test_round_trip_equality(self, scenario_dir):
        for path in sorted(scenario_dir.glob("*.json")):
            s = read_scenario(path)
            again = scenario_from_dict(json.loads(json.dumps(scenario_to_dict(s))))
            assert again == s, path.name


class TestWorkerScript:
    def test_interpolation(self):
        w = WorkerScript("w0", (Vec3(0, 0, 0), Vec3(10, 0, 0)), speed=2.0)
        st = w.state_at(2.5)
        assert st.position == Vec3(5.0, 0.0, 0.0)
        assert st.velocity == Vec3(2.0, 0.0, 0.0)

    def test_stops_at_end(self):
        w = WorkerScript("w0", (Vec3(0, 0, 0), Vec3(10, 0, 0)), speed=2.0)
        st = w.state_at(100.0)
        assert st.position == Vec3(10.0, 0.0, 0.0)
        assert st.velocity == Vec3(0.0, 0.0, 0.0)


def test_wrap_angle():
    assert wrap_angle(0.0) == 0.0
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    # Away from the branch point the result is in (-pi, pi].
    assert abs(wrap_angle(-5 * math.pi)) == pytest.approx(math.pi)
    assert -math.pi < wrap_angle(-5 * math.pi) <= math.pi
