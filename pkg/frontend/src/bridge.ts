/**
 * Browser access: serves index.html plus the compiled modules over HTTP
 * and bridges WebSocket frames to the gateway's TCP line protocol on the
 * same port. Browsers cannot open raw TCP sockets, so this is the hop
 * that lets the page speak to the mission gateway.
 *
 *   node dist/bridge.js --gateway 127.0.0.1:8700 --port 8080
 */

import { readFile } from "node:fs/promises";
import * as http from "node:http";
import * as net from "node:net";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

import { WebSocketServer, type WebSocket } from "ws";

const here = path.dirname(fileURLToPath(import.meta.url));
const root = path.resolve(here, "..");

function argValue(flag: string, fallback: string): string {
  const index = process.argv.indexOf(flag);
  return index >= 0 && process.argv[index + 1] ? process.argv[index + 1]! : fallback;
}

const gatewayArg = argValue("--gateway", "127.0.0.1:8700");
const httpPort = Number(argValue("--port", "8080"));
const splitAt = gatewayArg.lastIndexOf(":");
const gatewayHost = gatewayArg.slice(0, splitAt);
const gatewayPort = Number(gatewayArg.slice(splitAt + 1));

const contentTypes: Record<string, string> = {
  ".html": "text/html; charset=utf-8",
  ".js": "text/javascript; charset=utf-8",
  ".svg": "image/svg+xml",
};

const server = http.createServer(async (request, response) => {
  const url = request.url === "/" ? "/index.html" : (request.url ?? "/index.html");
  const file = path.normalize(path.join(root, url));
  if (!file.startsWith(root)) {
    response.writeHead(403).end();
    return;
  }
  try {
    const body = await readFile(file);
    response.writeHead(200, {
      "content-type": contentTypes[path.extname(file)] ?? "application/octet-stream",
    });
    response.end(body);
  } catch {
    response.writeHead(404).end("not found");
  }
});

const wss = new WebSocketServer({ server, path: "/gateway" });

wss.on("connection", (ws: WebSocket) => {
  const tcp = net.createConnection({ host: gatewayHost, port: gatewayPort });
  let buffer = "";
  tcp.setNoDelay(true);
  tcp.on("data", (chunk) => {
    buffer += chunk.toString("utf-8");
    let index = buffer.indexOf("\n");
    while (index >= 0) {
      const line = buffer.slice(0, index);
      buffer = buffer.slice(index + 1);
      if (line.trim().length > 0) {
        ws.send(line);
      }
      index = buffer.indexOf("\n");
    }
  });
  tcp.on("close", () => ws.close());
  tcp.on("error", () => ws.close());
  ws.on("message", (data) => {
    tcp.write(data.toString() + "\n");
  });
  ws.on("close", () => tcp.destroy());
});

server.listen(httpPort, () => {
  console.log(
    `console at http://127.0.0.1:${httpPort}/ bridging ws(/gateway) <-> tcp(${gatewayHost}:${gatewayPort})`,
  );
});
