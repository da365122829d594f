/**
 * Terminal entry point: follow a live mission and print a status line per
 * second; optionally dump the latest frame as SVG.
 *
 *   node dist/main.js 127.0.0.1:8700 [--svg /tmp/mission.svg]
 */

import { writeFileSync } from "node:fs";

import { OperatorConsole } from "./console.js";
import { renderSvg } from "./render.js";

function parseAddress(argument: string | undefined): [string, number] {
  if (!argument || !argument.includes(":")) {
    console.error("usage: main.js HOST:PORT [--svg FILE]");
    process.exit(2);
  }
  const idx = argument.lastIndexOf(":");
  return [argument.slice(0, idx), Number(argument.slice(idx + 1))];
}

const [host, port] = parseAddress(process.argv[2]);
const svgIndex = process.argv.indexOf("--svg");
const svgPath = (svgIndex >= 0 ? process.argv[svgIndex + 1] : null) ?? null;

const console_ = new OperatorConsole(host, port);
console_.start();

const report = setInterval(() => {
  const state = console_.state;
  const scene = console_.scene;
  if (scene === null) {
    console.log(`[${state.connection}] waiting for snapshots...`);
    return;
  }
  const fleet = scene.uavs
    .map((u) => `uav${u.id}(${u.failed ? "FAIL" : u.mode},${(u.batteryFraction * 100).toFixed(0)}%)`)
    .join(" ");
  console.log(
    `[${state.connection}] t=${scene.t.toFixed(1)}s frames=${console_.framesRendered} ${fleet}` +
      (scene.panel.alerts.length > 0 ? `  ALERTS: ${scene.panel.alerts.join("; ")}` : ""),
  );
  if (svgPath !== null) {
    writeFileSync(svgPath, renderSvg(scene));
  }
}, 1000);

process.on("SIGINT", () => {
  clearInterval(report);
  console_.stop();
  process.exit(0);
});
