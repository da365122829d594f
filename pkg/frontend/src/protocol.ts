/**
 * Gateway wire protocol: one JSON document per line over a persistent
 * socket. Message shapes mirror docs/gateway_protocol.md in the backend
 * repository; decoding is defensive so a malformed line never takes the
 * session down.
 */

export type Vec3 = [number, number, number];

export interface UavView {
  id: number;
  position: Vec3;
  heading: number;
  battery_fraction: number;
  status: "active" | "failed" | "landed";
  mode: string;
  fault?: boolean;
}

export interface WorkerView {
  id: string;
  position: Vec3;
}

export interface DecisionRecord {
  t: number;
  branch: string;
  commands: Array<Record<string, unknown>>;
  [extra: string]: unknown;
}

export interface SceneGeometry {
  towers: Array<{ center: Vec3; radius: number; height: number }>;
  wires: Array<{ a: Vec3; b: Vec3 }>;
  regions: Array<{ id: string; center: Vec3; half_extents: Vec3 }>;
}

export interface Snapshot {
  type: "snapshot";
  seq: number;
  t: number;
  uavs: UavView[];
  workers: WorkerView[];
  assignment: Record<string, string[]>;
  decisions: DecisionRecord[];
  formation: number[] | null;
  slots: Vec3[];
  regions_completed: string[];
  scene: SceneGeometry;
}

export interface Ack {
  type: "ack";
  seq: number;
  command_seq: number | null;
  accepted: boolean;
  reason?: string;
}

export type GatewayMessage = Snapshot | Ack;

export type OperatorCommand =
  | {
      type: "set_formation";
      distance?: number;
      azimuth_center?: number;
      elevation?: number;
      inter_uav_angle?: number;
    }
  | { type: "assign_task"; region: string }
  | { type: "inject_failure"; uav: number }
  | { type: "pause" }
  | { type: "resume" }
  | { type: "set_speed"; speed: number };

export class ProtocolError extends Error {}

/** Serialize a command message; the result never contains a newline. */
export function encodeCommand(seq: number, command: OperatorCommand): string {
  const line = JSON.stringify({ type: "command", seq, command });
  if (line.includes("\n")) {
    throw new ProtocolError("command serialization produced a newline");
  }
  return line;
}

function isVec3(value: unknown): value is Vec3 {
  return (
    Array.isArray(value) &&
    value.length === 3 &&
    value.every((x) => typeof x === "number" && Number.isFinite(x))
  );
}

export function decodeMessage(line: string): GatewayMessage {
  let parsed: unknown;
  try {
    parsed = JSON.parse(line);
  } catch {
    throw new ProtocolError(`not JSON: ${line.slice(0, 80)}`);
  }
  if (typeof parsed !== "object" || parsed === null) {
    throw new ProtocolError("message is not an object");
  }
  const message = parsed as Record<string, unknown>;
  if (message.type === "ack") {
    if (typeof message.seq !== "number" || typeof message.accepted !== "boolean") {
      throw new ProtocolError("malformed ack");
    }
    return message as unknown as Ack;
  }
  if (message.type === "snapshot") {
    if (
      typeof message.seq !== "number" ||
      typeof message.t !== "number" ||
      !Array.isArray(message.uavs) ||
      !Array.isArray(message.decisions)
    ) {
      throw new ProtocolError("malformed snapshot");
    }
    for (const uav of message.uavs as Array<Record<string, unknown>>) {
      if (typeof uav.id !== "number" || !isVec3(uav.position)) {
        throw new ProtocolError("malformed uav entry");
      }
    }
    return message as unknown as Snapshot;
  }
  throw new ProtocolError(`unknown message type ${String(message.type)}`);
}
