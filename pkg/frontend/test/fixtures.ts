import type { Snapshot } from "../src/protocol.js";

export function snapshotFixture(overrides: Partial<Snapshot> = {}): Snapshot {
  return {
    type: "snapshot",
    seq: 42,
    t: 12.3,
    uavs: [
      {
        id: 0,
        position: [3.0, 18.6, 11.7],
        heading: -2.27,
        battery_fraction: 0.91,
        status: "active",
        mode: "safety",
        fault: false,
      },
      {
        id: 1,
        position: [0.0, 19.7, 11.7],
        heading: -1.57,
        battery_fraction: 0.9,
        status: "active",
        mode: "safety",
        fault: false,
      },
      {
        id: 2,
        position: [-3.0, 18.6, 11.7],
        heading: -0.87,
        battery_fraction: 0.15,
        status: "failed",
        mode: "down",
        fault: true,
      },
    ],
    workers: [{ id: "w0", position: [0.0, 14.8, 10.0] }],
    assignment: { "0": ["safety:w0:0"], "1": ["safety:w0:1"], "2": [] },
    decisions: [
      { t: 11.0, branch: "idle", commands: [] },
      {
        t: 12.0,
        branch: "emergency",
        commands: [{ kind: "land", uav: 2 }],
      },
    ],
    formation: [5.0, 1.5708, 0.35, 0.698],
    slots: [
      [3.0, 18.6, 11.7],
      [-3.0, 18.6, 11.7],
    ],
    regions_completed: ["r0"],
    scene: {
      towers: [{ center: [0, 0, 0], radius: 15, height: 20 }],
      wires: [{ a: [-30, -9, 9.5], b: [30, -9, 9.5] }],
      regions: [
        { id: "r0", center: [18.2, 0, 16], half_extents: [1.2, 1.2, 1.2] },
        { id: "r1", center: [0, 18.2, 16], half_extents: [1.2, 1.2, 1.2] },
      ],
    },
    ...overrides,
  };
}
