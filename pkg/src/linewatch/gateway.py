"""Live operator gateway: snapshots out, commands in, acks back.

Wire protocol (documented in docs/gateway_protocol.md): one JSON document
per line over a persistent TCP connection; documents never contain raw
newlines. Outbound messages carry a monotonically increasing ``seq``;
command messages are acknowledged with accepted/rejected plus a reason.
Commands never touch engine state directly: they are queued and consumed
at the next manager tick, so a scripted serve session replays exactly as
a headless run with the same commands in the scenario's events list.
"""

from __future__ import annotations

import json
import socket
import socketserver
import threading
import time
from collections import deque
from typing import Optional

from .engine import MissionEngine

_COMMAND_SCHEMAS = {
    "set_formation": {"distance", "azimuth_center", "elevation", "inter_uav_angle"},
    "assign_task": {"region"},
    "inject_failure": {"uav"},
    "pause": set(),
    "resume": set(),
    "set_speed": {"speed"},
}


def validate_command(command) -> Optional[str]:
    """None when acceptable, else a rejection reason."""
    if not isinstance(command, dict):
        return "command must be an object"
    kind = command.get("type")
    if kind not in _COMMAND_SCHEMAS:
        return f"unknown command type {kind!r}"
    allowed = _COMMAND_SCHEMAS[kind]
    extras = set(command) - allowed - {"type"}
    if extras:
        return f"unexpected fields {sorted(extras)}"
    numeric = {"distance", "azimuth_center", "elevation", "inter_uav_angle", "speed"}
    for key in set(command) & numeric:
        if not isinstance(command[key], (int, float)) or isinstance(command[key], bool):
            return f"field {key!r} must be a number"
    if kind == "set_formation" and len(command) == 1:
        return "set_formation needs at least one field"
    if kind == "inject_failure" and not isinstance(command.get("uav"), int):
        return "field 'uav' must be an integer"
    if kind == "set_speed" and not command.get("speed", 0) > 0:
        return "field 'speed' must be > 0"
    return None


class _Client:
    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.queue: deque = deque()
        self.lock = threading.Lock()
        self.ready = threading.Event()
        self.alive = True
        self.dropped = 0

    def enqueue(self, line: str, max_queue: int = 64) -> None:
        with self.lock:
            if len(self.queue) >= max_queue:
                self.queue.popleft()
                self.dropped += 1
            self.queue.append(line)
        self.ready.set()

    def writer_loop(self) -> None:
        try:
            while self.alive:
                self.ready.wait(timeout=0.2)
                while True:
                    with self.lock:
                        if not self.queue:
                            self.ready.clear()
                            break
                        line = self.queue.popleft()
                    self.sock.sendall(line.encode("utf-8") + b"\n")
        except OSError:
            pass
        finally:
            self.alive = False


class Gateway:
    """Runs the stepping loop paced to wall clock while serving clients."""

    def __init__(self, engine: MissionEngine, port: int = 0, speed: float = 1.0):
        self.engine = engine
        self.speed = speed
        self.paused = False
        self._clients: list[_Client] = []
        self._clients_lock = threading.Lock()
        self._seq = 0
        self._seq_lock = threading.Lock()
        self._stop = threading.Event()
        self._reanchor = False
        self.snapshots_sent = 0
        self.snapshots_dropped = 0
        self._server = socketserver.ThreadingTCPServer(
            ("127.0.0.1", port), self._handler_class(), bind_and_activate=False
        )
        self._server.allow_reuse_address = True
        self._server.daemon_threads = True
        self._server.server_bind()
        self._server.server_activate()
        self.port = self._server.server_address[1]
        engine.snapshot_sink = self._broadcast

    def _next_seq(self) -> int:
        with self._seq_lock:
            self._seq += 1
            return self._seq

    def _handler_class(self):
        gateway = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self) -> None:
                client = _Client(self.request)
                with gateway._clients_lock:
                    gateway._clients.append(client)
                writer = threading.Thread(target=client.writer_loop, daemon=True)
                writer.start()
                buffer = b""
                try:
                    while not gateway._stop.is_set():
                        chunk = self.request.recv(4096)
                        if not chunk:
                            break
                        buffer += chunk
                        while b"\n" in buffer:
                            line, buffer = buffer.split(b"\n", 1)
                            if line.strip():
                                gateway._handle_line(line, client)
                except (OSError, ValueError):
                    pass
                finally:
                    client.alive = False
                    with gateway._clients_lock:
                        if client in gateway._clients:
                            gateway._clients.remove(client)

        return Handler

    def _handle_line(self, line: bytes, client: _Client) -> None:
        try:
            message = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            self._ack(client, None, False, "malformed JSON")
            return
        if not isinstance(message, dict) or message.get("type") != "command":
            self._ack(client, None, False, "expected a command message")
            return
        command_seq = message.get("seq")
        command = message.get("command")
        reason = validate_command(command)
        if reason is not None:
            self._ack(client, command_seq, False, reason)
            return
        kind = command["type"]
        if kind == "pause":
            self.paused = True
        elif kind == "resume":
            self.paused = False
            self._reanchor = True
        elif kind == "set_speed":
            self.speed = float(command["speed"])
            self._reanchor = True
        else:
            self.engine.command_queue.append(command)
        self._ack(client, command_seq, True, None)

    def _ack(self, client: _Client, command_seq, accepted: bool, reason: Optional[str]) -> None:
        payload = {
            "type": "ack",
            "seq": self._next_seq(),
            "command_seq": command_seq,
            "accepted": accepted,
        }
        if reason is not None:
            payload["reason"] = reason
        client.enqueue(json.dumps(payload, sort_keys=True, separators=(",", ":")))

    def _broadcast(self, snapshot: dict) -> None:
        snapshot = dict(snapshot)
        snapshot["seq"] = self._next_seq()
        line = json.dumps(snapshot, sort_keys=True, separators=(",", ":"))
        self.snapshots_sent += 1
        with self._clients_lock:
            clients = list(self._clients)
        for client in clients:
            before = client.dropped
            client.enqueue(line)
            self.snapshots_dropped += client.dropped - before

    def run(self) -> None:
        accept = threading.Thread(target=self._server.serve_forever, daemon=True)
        accept.start()
        anchor_wall = time.monotonic()
        anchor_sim = self.engine.now
        self._reanchor = False
        try:
            while self.engine._step_index < self.engine.total_steps and not self._stop.is_set():
                if self.paused:
                    time.sleep(0.005)
                    self._reanchor = True
                    continue
                if self._reanchor:
                    anchor_wall = time.monotonic()
                    anchor_sim = self.engine.now
                    self._reanchor = False
                target = anchor_wall + (self.engine.now - anchor_sim) / self.speed
                lag = target - time.monotonic()
                if lag > 0:
                    time.sleep(min(lag, 0.05))
                    continue
                self.engine.step()
        finally:
            self.stop()

    def stop(self) -> None:
        if self._stop.is_set():
            return
        self._stop.set()
        self._server.shutdown()
        self._server.server_close()
        with self._clients_lock:
            for client in self._clients:
                client.alive = False
                try:
                    client.sock.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass
                try:
                    client.sock.close()
                except OSError:
                    pass
