/**
 * The operator console session: wires the gateway connection into the
 * state reducer and re-renders the scene model on every snapshot.
 */

import { GatewayConnection, type ConnectionOptions } from "./connection.js";
import type { OperatorCommand, Snapshot } from "./protocol.js";
import { render, type SceneModel } from "./render.js";
import {
  initialState,
  reduce,
  type ConsoleEvent,
  type ViewState,
} from "./state.js";

export interface ConsoleOptions extends ConnectionOptions {
  clock?: () => number;
  onFrame?: (scene: SceneModel, state: ViewState) => void;
  clockTickMs?: number;
}

export class OperatorConsole {
  state: ViewState = initialState();
  scene: SceneModel | null = null;
  framesRendered = 0;
  private readonly connection: GatewayConnection;
  private readonly clock: () => number;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(host: string, port: number, private readonly options: ConsoleOptions = {}) {
    this.clock = options.clock ?? Date.now;
    this.connection = new GatewayConnection(
      host,
      port,
      {
        onMessage: (message) => {
          if (message.type === "snapshot") {
            this.dispatch({ kind: "snapshot", snapshot: message });
            this.renderFrame(message);
          } else {
            this.dispatch({ kind: "ack", ack: message, at: this.clock() });
          }
        },
        onDecodeError: () => this.dispatch({ kind: "decode-error" }),
        onStatus: (status) => this.dispatch({ kind: status }),
      },
      options,
    );
  }

  private dispatch(event: ConsoleEvent): void {
    this.state = reduce(this.state, event);
  }

  private renderFrame(snapshot: Snapshot): void {
    this.scene = render(snapshot, this.state);
    this.framesRendered += 1;
    this.options.onFrame?.(this.scene, this.state);
  }

  start(): void {
    this.connection.start();
    this.timer = setInterval(
      () => this.dispatch({ kind: "clock", at: this.clock() }),
      this.options.clockTickMs ?? 250,
    );
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
    this.connection.stop();
  }

  get connected(): boolean {
    return this.connection.connected;
  }

  /** Send a command; it lands in pending until its ack or the timeout. */
  sendCommand(command: OperatorCommand): number {
    const seq = this.connection.send(command);
    this.dispatch({ kind: "sent", seq, command, at: this.clock() });
    return seq;
  }

  selectUav(uav: number | null): void {
    this.dispatch({ kind: "select", uav });
  }
}
