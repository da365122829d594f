/**
 * Pure snapshot -> screen-state projection. Marker coordinates are taken
 * verbatim from the snapshot (no client-side extrapolation); altitude is
 * shown as a label on the top-down map. `renderSvg` turns the scene model
 * into a standalone SVG string usable by any host (browser or file dump).
 */

import type { Snapshot } from "./protocol.js";
import type { ViewState } from "./state.js";

export interface UavMarker {
  id: number;
  x: number;
  y: number;
  altitude: number;
  heading: number;
  batteryFraction: number;
  status: string;
  mode: string;
  failed: boolean;
  selected: boolean;
  label: string;
}

export interface SceneModel {
  t: number;
  towers: Array<{ x: number; y: number; radius: number }>;
  wires: Array<{ x1: number; y1: number; x2: number; y2: number }>;
  regions: Array<{
    id: string;
    x: number;
    y: number;
    halfX: number;
    halfY: number;
    completed: boolean;
  }>;
  uavs: UavMarker[];
  workers: Array<{ id: string; x: number; y: number }>;
  slots: Array<{ x: number; y: number }>;
  panel: {
    connection: string;
    plan: string[];
    decisions: string[];
    alerts: string[];
    commands: string[];
  };
}

export function render(snapshot: Snapshot, view?: ViewState): SceneModel {
  const completed = new Set(snapshot.regions_completed);
  const uavs: UavMarker[] = snapshot.uavs.map((u) => ({
    id: u.id,
    x: u.position[0],
    y: u.position[1],
    altitude: u.position[2],
    heading: u.heading,
    batteryFraction: u.battery_fraction,
    status: u.status,
    mode: u.mode,
    failed: u.status === "failed" || u.fault === true,
    selected: view?.selected === u.id,
    label: `uav${u.id} @${u.position[2].toFixed(1)}m`,
  }));
  const alerts: string[] = [];
  for (const u of uavs) {
    if (u.failed) {
      alerts.push(`uav${u.id}: ${u.status === "failed" ? "FAILED" : "FAULT"}`);
    } else if (u.batteryFraction < 0.2) {
      alerts.push(`uav${u.id}: battery ${(u.batteryFraction * 100).toFixed(0)}%`);
    }
  }
  const decisions = snapshot.decisions.map((d) => {
    const extras = d.commands.length > 0 ? ` ${JSON.stringify(d.commands)}` : "";
    return `t=${d.t.toFixed(1)} ${d.branch}${extras}`;
  });
  const commands: string[] = [];
  if (view) {
    for (const record of view.pending) {
      commands.push(`#${record.seq} ${record.command.type}: pending`);
    }
    for (const record of view.history.slice(-8)) {
      const why = record.reason ? ` (${record.reason})` : "";
      commands.push(`#${record.seq} ${record.command.type}: ${record.state}${why}`);
    }
  }
  return {
    t: snapshot.t,
    towers: snapshot.scene.towers.map((t) => ({
      x: t.center[0],
      y: t.center[1],
      radius: t.radius,
    })),
    wires: snapshot.scene.wires.map((w) => ({
      x1: w.a[0],
      y1: w.a[1],
      x2: w.b[0],
      y2: w.b[1],
    })),
    regions: snapshot.scene.regions.map((r) => ({
      id: r.id,
      x: r.center[0],
      y: r.center[1],
      halfX: r.half_extents[0],
      halfY: r.half_extents[1],
      completed: completed.has(r.id),
    })),
    uavs,
    workers: snapshot.workers.map((w) => ({ id: w.id, x: w.position[0], y: w.position[1] })),
    slots: snapshot.slots.map((s) => ({ x: s[0], y: s[1] })),
    panel: {
      connection: view?.connection ?? "connected",
      plan: Object.entries(snapshot.assignment).map(
        ([uav, tasks]) => `uav${uav}: ${tasks.join(", ") || "idle"}`,
      ),
      decisions,
      alerts,
      commands,
    },
  };
}

function bounds(scene: SceneModel): { cx: number; cy: number; span: number } {
  const xs: number[] = [];
  const ys: number[] = [];
  for (const t of scene.towers) {
    xs.push(t.x - t.radius, t.x + t.radius);
    ys.push(t.y - t.radius, t.y + t.radius);
  }
  for (const u of scene.uavs) {
    xs.push(u.x);
    ys.push(u.y);
  }
  for (const r of scene.regions) {
    xs.push(r.x - r.halfX, r.x + r.halfX);
    ys.push(r.y - r.halfY, r.y + r.halfY);
  }
  if (xs.length === 0) {
    return { cx: 0, cy: 0, span: 20 };
  }
  const minX = Math.min(...xs);
  const maxX = Math.max(...xs);
  const minY = Math.min(...ys);
  const maxY = Math.max(...ys);
  return {
    cx: (minX + maxX) / 2,
    cy: (minY + maxY) / 2,
    span: Math.max(maxX - minX, maxY - minY, 10) * 1.15,
  };
}

/** Standalone top-down SVG (y up); panel text is the host's concern. */
export function renderSvg(scene: SceneModel, size = 640): string {
  const { cx, cy, span } = bounds(scene);
  const scale = size / span;
  const px = (x: number) => ((x - cx) * scale + size / 2).toFixed(1);
  const py = (y: number) => (size / 2 - (y - cy) * scale).toFixed(1);
  const parts: string[] = [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${size}" height="${size}" viewBox="0 0 ${size} ${size}">`,
    `<rect width="${size}" height="${size}" fill="#10141a"/>`,
  ];
  for (const t of scene.towers) {
    parts.push(
      `<circle cx="${px(t.x)}" cy="${py(t.y)}" r="${(t.radius * scale).toFixed(1)}" ` +
        `fill="#2a2f36" stroke="#5a6472" stroke-width="1.5"/>`,
    );
  }
  for (const w of scene.wires) {
    parts.push(
      `<line x1="${px(w.x1)}" y1="${py(w.y1)}" x2="${px(w.x2)}" y2="${py(w.y2)}" ` +
        `stroke="#46505c" stroke-width="1" stroke-dasharray="6 4"/>`,
    );
  }
  for (const r of scene.regions) {
    const fill = r.completed ? "#1d4d2b" : "#24415c";
    parts.push(
      `<rect x="${px(r.x - r.halfX)}" y="${py(r.y + r.halfY)}" ` +
        `width="${(2 * r.halfX * scale).toFixed(1)}" height="${(2 * r.halfY * scale).toFixed(1)}" ` +
        `fill="${fill}" stroke="#7fa6cc" stroke-width="1" data-region="${r.id}"/>`,
    );
  }
  for (const s of scene.slots) {
    parts.push(
      `<circle cx="${px(s.x)}" cy="${py(s.y)}" r="6" fill="none" ` +
        `stroke="#8d78d9" stroke-dasharray="2 2" data-slot="1"/>`,
    );
  }
  for (const w of scene.workers) {
    parts.push(
      `<circle cx="${px(w.x)}" cy="${py(w.y)}" r="5" fill="#e0b23c" data-worker="${w.id}"/>`,
    );
  }
  for (const u of scene.uavs) {
    const color = u.failed ? "#d94f4f" : u.selected ? "#9fe08a" : "#5ec1e8";
    const hx = Number(px(u.x)) + Math.cos(u.heading) * 12;
    const hy = Number(py(u.y)) - Math.sin(u.heading) * 12;
    parts.push(
      `<g data-uav="${u.id}" data-failed="${u.failed}">` +
        `<circle cx="${px(u.x)}" cy="${py(u.y)}" r="7" fill="${color}"/>` +
        `<line x1="${px(u.x)}" y1="${py(u.y)}" x2="${hx.toFixed(1)}" y2="${hy.toFixed(1)}" ` +
        `stroke="${color}" stroke-width="2"/>` +
        `<rect x="${(Number(px(u.x)) - 10).toFixed(1)}" y="${(Number(py(u.y)) + 10).toFixed(1)}" ` +
        `width="${(20 * Math.max(u.batteryFraction, 0)).toFixed(1)}" height="3" fill="#77d077"/>` +
        `<text x="${(Number(px(u.x)) + 10).toFixed(1)}" y="${(Number(py(u.y)) - 10).toFixed(1)}" ` +
        `fill="#c8d2dc" font-size="10">${u.label}</text>` +
        `</g>`,
    );
  }
  parts.push(
    `<text x="8" y="16" fill="#8a97a5" font-size="12">t=${scene.t.toFixed(1)}s</text>`,
    `</svg>`,
  );
  return parts.join("");
}
