"""Command-line entry point: headless runs and the live gateway.

Exit codes: 0 on mission success with a clean safety record, 1 on
mission failure (a machine-readable reason goes to stdout and to
metrics.json), 2 on configuration problems (bad flags, unparseable or
invalid scenario, busy port).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .engine import MissionEngine
from .gateway import Gateway
from .world import Scenario, scenario_from_dict, validate_scenario

EXIT_OK = 0
EXIT_MISSION_FAILURE = 1
EXIT_CONFIGURATION = 2


class ScenarioError(ValueError):
    """Parse or validation failure, carrying every diagnostic found."""

    def __init__(self, path, problems):
        super().__init__(f"{path}: " + "; ".join(problems))
        self.path = path
        self.problems = problems


@dataclass
class RunConfig:
    scenario_path: Path
    seed: Optional[int] = None
    duration: float = 60.0
    mode: str = "headless"  # headless | serve
    port: int = 0
    speed: float = 1.0
    out_dir: Path = Path("mission_log")
    verbose: bool = False

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise ValueError("duration must be > 0")
        if self.mode not in ("headless", "serve"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not 0 <= self.port <= 65535:
            raise ValueError("port out of range")


def load_scenario(path) -> Scenario:
    """Parse and validate; failures carry line context or violation lists."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(path, [f"cannot read: {exc}"]) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            path, [f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"]
        ) from exc
    try:
        scenario = scenario_from_dict(doc)
    except (ValueError, TypeError) as exc:
        raise ScenarioError(path, [str(exc)]) from exc
    violations = validate_scenario(scenario)
    if violations:
        raise ScenarioError(path, violations)
    return scenario


def run_headless(config: RunConfig) -> int:
    scenario = load_scenario(config.scenario_path)
    engine = MissionEngine(
        scenario, config.duration, seed=config.seed, out_dir=config.out_dir
    )
    log = engine.run()
    return _report(log.metrics, config)


def serve(config: RunConfig) -> int:
    scenario = load_scenario(config.scenario_path)
    engine = MissionEngine(
        scenario, config.duration, seed=config.seed, out_dir=config.out_dir
    )
    try:
        gateway = Gateway(engine, port=config.port, speed=config.speed)
    except OSError as exc:
        print(json.dumps({"error": f"cannot bind port {config.port}: {exc}"}))
        return EXIT_CONFIGURATION
    if config.verbose:
        print(json.dumps({"serving": gateway.port}), flush=True)
    gateway.run()
    log = engine.finish()
    return _report(log.metrics, config)


def _report(metrics: dict, config: RunConfig) -> int:
    ok = bool(metrics.get("mission_complete")) and not metrics.get("violations")
    summary = {
        "mission_complete": metrics.get("mission_complete"),
        "violations": metrics.get("violations"),
        "out": str(config.out_dir),
    }
    if not ok:
        summary["reason"] = (
            metrics.get("planner_failure", {}) or {"reason": "mission-incomplete"}
        ).get("reason", "mission-incomplete")
        if metrics.get("planner_failure"):
            summary["most_violated"] = metrics["planner_failure"].get("most_violated")
    if config.verbose or not ok:
        print(json.dumps(summary, sort_keys=True))
    return EXIT_OK if ok else EXIT_MISSION_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="linewatch",
        description="Deterministic multi-UAV inspection and worker-safety mission simulator",
    )
    parser.add_argument("--scenario", required=True, help="scenario JSON file")
    parser.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    parser.add_argument("--duration", type=float, default=60.0, help="simulated seconds")
    parser.add_argument(
        "--serve",
        nargs="?",
        const=0,
        default=None,
        type=int,
        metavar="PORT",
        help="run the live gateway on PORT (0 picks a free port)",
    )
    parser.add_argument("--speed", type=float, default=1.0, help="wall-clock multiplier in serve mode")
    parser.add_argument("--out", default="mission_log", help="MissionLog output directory")
    parser.add_argument("--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIGURATION if exc.code else EXIT_OK
    try:
        config = RunConfig(
            scenario_path=Path(args.scenario),
            seed=args.seed,
            duration=args.duration,
            mode="serve" if args.serve is not None else "headless",
            port=args.serve or 0,
            speed=args.speed,
            out_dir=Path(args.out),
            verbose=args.verbose,
        )
    except ValueError as exc:
        print(json.dumps({"error": str(exc)}))
        return EXIT_CONFIGURATION
    try:
        if config.mode == "serve":
            return serve(config)
        return run_headless(config)
    except ScenarioError as exc:
        print(json.dumps({"error": "scenario", "path": str(exc.path), "problems": exc.problems}))
        return EXIT_CONFIGURATION
    except ValueError as exc:
        print(json.dumps({"error": str(exc)}))
        return EXIT_CONFIGURATION


if __name__ == "__main__":
    sys.exit(main())
