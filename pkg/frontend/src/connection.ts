/**
 * Persistent gateway session: line framing, decode, auto-reconnect with
 * exponential backoff. The transport is injectable so tests can run
 * against in-process servers; the default speaks TCP via node:net.
 */

import * as net from "node:net";

import { decodeMessage, encodeCommand, type GatewayMessage, type OperatorCommand } from "./protocol.js";

export interface TransportHandlers {
  onConnect: () => void;
  onLine: (line: string) => void;
  onClose: () => void;
}

export interface Transport {
  write(line: string): void;
  close(): void;
}

export type TransportFactory = (
  host: string,
  port: number,
  handlers: TransportHandlers,
) => Transport;

export const tcpTransport: TransportFactory = (host, port, handlers) => {
  const socket = net.createConnection({ host, port });
  let buffer = "";
  let closed = false;
  const close = () => {
    if (!closed) {
      closed = true;
      handlers.onClose();
    }
  };
  socket.setNoDelay(true);
  socket.on("connect", handlers.onConnect);
  socket.on("data", (chunk) => {
    buffer += chunk.toString("utf-8");
    let index = buffer.indexOf("\n");
    while (index >= 0) {
      const line = buffer.slice(0, index);
      buffer = buffer.slice(index + 1);
      if (line.trim().length > 0) {
        handlers.onLine(line);
      }
      index = buffer.indexOf("\n");
    }
  });
  socket.on("error", () => {
    /* close follows */
  });
  socket.on("close", close);
  return {
    write: (line: string) => {
      socket.write(line + "\n");
    },
    close: () => {
      socket.destroy();
      close();
    },
  };
};

export interface ConnectionOptions {
  transport?: TransportFactory;
  backoffBaseMs?: number;
  backoffMaxMs?: number;
}

export interface ConnectionCallbacks {
  onMessage: (message: GatewayMessage) => void;
  onDecodeError?: () => void;
  onStatus?: (status: "connecting" | "connected" | "disconnected") => void;
}

export class GatewayConnection {
  private readonly transportFactory: TransportFactory;
  private readonly backoffBase: number;
  private readonly backoffMax: number;
  private transport: Transport | null = null;
  private seq = 0;
  private stopped = false;
  private attempt = 0;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  connected = false;

  constructor(
    private readonly host: string,
    private readonly port: number,
    private readonly callbacks: ConnectionCallbacks,
    options: ConnectionOptions = {},
  ) {
    this.transportFactory = options.transport ?? tcpTransport;
    this.backoffBase = options.backoffBaseMs ?? 200;
    this.backoffMax = options.backoffMaxMs ?? 3000;
  }

  start(): void {
    this.stopped = false;
    this.dial();
  }

  private dial(): void {
    if (this.stopped) {
      return;
    }
    this.callbacks.onStatus?.("connecting");
    this.transport = this.transportFactory(this.host, this.port, {
      onConnect: () => {
        this.connected = true;
        this.attempt = 0;
        this.callbacks.onStatus?.("connected");
      },
      onLine: (line) => {
        try {
          this.callbacks.onMessage(decodeMessage(line));
        } catch {
          this.callbacks.onDecodeError?.();
        }
      },
      onClose: () => {
        const wasConnected = this.connected;
        this.connected = false;
        this.transport = null;
        this.callbacks.onStatus?.("disconnected");
        if (!this.stopped) {
          this.scheduleRetry(wasConnected);
        }
      },
    });
  }

  private scheduleRetry(resetBackoff: boolean): void {
    if (resetBackoff) {
      this.attempt = 0;
    }
    const delay = Math.min(this.backoffBase * 2 ** this.attempt, this.backoffMax);
    this.attempt += 1;
    this.retryTimer = setTimeout(() => this.dial(), delay);
  }

  /** Serialize and send; returns the assigned sequence number.
   * Throws when disconnected: commands are never queued offline. */
  send(command: OperatorCommand): number {
    if (!this.connected || this.transport === null) {
      throw new Error("not connected");
    }
    this.seq += 1;
    this.transport.write(encodeCommand(this.seq, command));
    return this.seq;
  }

  stop(): void {
    this.stopped = true;
    if (this.retryTimer !== null) {
      clearTimeout(this.retryTimer);
      this.retryTimer = null;
    }
    this.transport?.close();
    this.transport = null;
    this.connected = false;
  }
}
