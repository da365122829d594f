/**
 * Console view state and its reducer. Socket events and user input all
 * serialize through `reduce`, which returns a fresh state object; the
 * command history is append-only and every sent command ends in exactly
 * one terminal state: accepted, rejected, or timed-out.
 */

import type { Ack, OperatorCommand, Snapshot } from "./protocol.js";

export const ACK_TIMEOUT_MS = 2000;

export type ConnectionStatus = "connecting" | "connected" | "disconnected";

export type CommandState = "pending" | "accepted" | "rejected" | "timed-out";

export interface CommandRecord {
  seq: number;
  command: OperatorCommand;
  sentAt: number; // wall-clock ms
  state: CommandState;
  reason?: string;
  resolvedAt?: number;
}

export interface ViewState {
  connection: ConnectionStatus;
  latest: Snapshot | null;
  snapshotsSeen: number;
  decodeErrors: number;
  pending: CommandRecord[];
  history: CommandRecord[]; // terminal records only, append-only
  selected: number | null;
  reconnectAttempts: number;
}

export type ConsoleEvent =
  | { kind: "connecting" }
  | { kind: "connected" }
  | { kind: "disconnected" }
  | { kind: "snapshot"; snapshot: Snapshot }
  | { kind: "ack"; ack: Ack; at: number }
  | { kind: "sent"; seq: number; command: OperatorCommand; at: number }
  | { kind: "clock"; at: number }
  | { kind: "decode-error" }
  | { kind: "select"; uav: number | null };

export function initialState(): ViewState {
  return {
    connection: "connecting",
    latest: null,
    snapshotsSeen: 0,
    decodeErrors: 0,
    pending: [],
    history: [],
    selected: null,
    reconnectAttempts: 0,
  };
}

function resolve(
  state: ViewState,
  seq: number,
  terminal: CommandState,
  at: number,
  reason?: string,
): ViewState {
  const record = state.pending.find((r) => r.seq === seq);
  if (record === undefined) {
    return state; // unknown or already terminal: history stays untouched
  }
  const closed: CommandRecord = { ...record, state: terminal, resolvedAt: at };
  if (reason !== undefined) {
    closed.reason = reason;
  }
  return {
    ...state,
    pending: state.pending.filter((r) => r.seq !== seq),
    history: [...state.history, closed],
  };
}

export function reduce(state: ViewState, event: ConsoleEvent): ViewState {
  switch (event.kind) {
    case "connecting":
      return { ...state, connection: "connecting" };
    case "connected":
      return { ...state, connection: "connected", reconnectAttempts: 0 };
    case "disconnected":
      return {
        ...state,
        connection: "disconnected",
        reconnectAttempts: state.reconnectAttempts + 1,
      };
    case "snapshot":
      return {
        ...state,
        latest: event.snapshot,
        snapshotsSeen: state.snapshotsSeen + 1,
      };
    case "decode-error":
      return { ...state, decodeErrors: state.decodeErrors + 1 };
    case "sent":
      return {
        ...state,
        pending: [
          ...state.pending,
          { seq: event.seq, command: event.command, sentAt: event.at, state: "pending" },
        ],
      };
    case "ack": {
      if (event.ack.command_seq === null || event.ack.command_seq === undefined) {
        return state;
      }
      return resolve(
        state,
        event.ack.command_seq,
        event.ack.accepted ? "accepted" : "rejected",
        event.at,
        event.ack.reason,
      );
    }
    case "clock": {
      let next = state;
      for (const record of state.pending) {
        if (event.at - record.sentAt >= ACK_TIMEOUT_MS) {
          next = resolve(next, record.seq, "timed-out", event.at);
        }
      }
      return next;
    }
    case "select":
      return { ...state, selected: event.uav };
  }
}
