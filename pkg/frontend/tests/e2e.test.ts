// End-to-end steer: a real hub, a real box service with an empty world, and
// this client as the only user. Spawn a box, nudge it one unit along +x,
// delete it, and require every change to land in the rendered state within
// two stream ticks of the service's reply.

import { spawn, type ChildProcessWithoutNullStreams } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import WebSocket from "ws";
import { HubClient, type SocketLike } from "../src/client.js";
import { WorldStore, type BoxSpecEntry } from "../src/store.js";
import type { Json } from "../src/protocol.js";
import { RecordingCanvas } from "./recording.js";

function wsSocket(url: string): SocketLike {
  // the ws package exposes the browser handler-property API we rely on
  return new WebSocket(url) as unknown as SocketLike;
}

interface Proc {
  child: ChildProcessWithoutNullStreams;
  output: () => string;
}

function start(args: string[]): Proc {
  const child = spawn("python3", args, { stdio: ["ignore", "pipe", "pipe"] });
  let buffer = "";
  child.stdout.setEncoding("utf8");
  child.stderr.setEncoding("utf8");
  child.stdout.on("data", (chunk: string) => {
    buffer += chunk;
  });
  child.stderr.on("data", (chunk: string) => {
    buffer += chunk;
  });
  return { child, output: () => buffer };
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

async function waitForOutput(proc: Proc, pattern: RegExp, deadlineMs: number): Promise<RegExpMatchArray> {
  const limit = Date.now() + deadlineMs;
  for (;;) {
    const match = proc.output().match(pattern);
    if (match !== null) {
      return match;
    }
    if (Date.now() > limit) {
      throw new Error(`never saw ${pattern} in process output:\n${proc.output()}`);
    }
    await sleep(25);
  }
}

async function waitUntil(predicate: () => boolean, deadlineMs: number, label: string): Promise<void> {
  const limit = Date.now() + deadlineMs;
  while (!predicate()) {
    if (Date.now() > limit) {
      throw new Error(`timed out waiting for ${label}`);
    }
    await sleep(5);
  }
}

function stop(proc: Proc | null): Promise<void> {
  if (proc === null || proc.child.exitCode !== null) {
    return Promise.resolve();
  }
  return new Promise((resolve) => {
    const killTimer = setTimeout(() => proc.child.kill("SIGKILL"), 5000);
    proc.child.once("exit", () => {
      clearTimeout(killTimer);
      resolve();
    });
    proc.child.kill("SIGINT");
  });
}

function asObj(value: Json): { [k: string]: Json } {
  expect(typeof value).toBe("object");
  expect(value).not.toBeNull();
  expect(Array.isArray(value)).toBe(false);
  return value as { [k: string]: Json };
}

let tmp: string;
let server: Proc | null = null;
let sim: Proc | null = null;
let client: HubClient | null = null;
let owner = "";
const store = new WorldStore();
const screen = new RecordingCanvas();
let spawnedId = "";

const GROUP = "physics_engine";

beforeAll(async () => {
  tmp = mkdtempSync(join(tmpdir(), "webclient-e2e-"));
  server = start(["-m", "concierge", "serve", "--port", "0", "--fs-root", join(tmp, "fs")]);
  const hit = await waitForOutput(server, /http: http:\/\/127\.0\.0\.1:(\d+)/, 20_000);
  const port = hit[1] as string;

  sim = start([
    "-m",
    "concierge",
    "sim",
    "boxes",
    "--count",
    "0",
    "--rate",
    "50",
    "--hub",
    `ws://127.0.0.1:${port}`,
  ]);
  await waitForOutput(sim, /streaming/, 20_000);

  client = await HubClient.connect(`ws://127.0.0.1:${port}`, "e2e_webclient", {
    socketFactory: wsSocket,
    timeoutMs: 10_000,
  });
  client.onRelay = (frame) => {
    if (frame.target.type === "group" && frame.target.group === store.group) {
      store.applyStream(frame.data);
    }
  };
  client.onEvent = (frame) => {
    if (frame.kind === "group_deleted" && frame.subject === store.group) {
      store.groupDeleted();
    }
  };

  // the service may still be registering its group; poll until it shows up,
  // then resolve the owner name to the uuid commands are addressed to
  const deadline = Date.now() + 20_000;
  let ownerName = "";
  for (;;) {
    const listing = await client.fetch("groups");
    for (const item of listing.items) {
      if (typeof item === "object" && item !== null && !Array.isArray(item)) {
        const entry = item as { [k: string]: Json };
        if (entry["name"] === GROUP && typeof entry["owner"] === "string") {
          ownerName = entry["owner"];
        }
      }
    }
    if (ownerName !== "") {
      break;
    }
    if (Date.now() > deadline) {
      throw new Error("box service group never appeared");
    }
    await sleep(50);
  }
  const roster = await client.fetch("clients");
  for (const item of roster.items) {
    if (typeof item === "object" && item !== null && !Array.isArray(item)) {
      const entry = item as { [k: string]: Json };
      if (entry["name"] === ownerName && typeof entry["id"] === "string") {
        owner = entry["id"];
      }
    }
  }
  if (owner === "") {
    throw new Error(`service '${ownerName}' not in the clients listing`);
  }

  const sub = await client.subscribe(GROUP);
  expect(sub.code).toBe("ok");

  const spec = await client.command(owner, { cmd: "fetch_spec" });
  expect(store.beginWatch(GROUP, owner, spec)).toBe(true);
  store.onRefetchNeeded = () => {
    void client
      ?.command(owner, { cmd: "fetch_spec" })
      .then((fresh) => {
        store.applySpec(fresh);
      })
      .catch(() => {});
  };

  await waitUntil(() => store.tick >= 0, 10_000, "first stream tick");
}, 90_000);

afterAll(async () => {
  client?.close();
  await stop(sim);
  await stop(server);
  rmSync(tmp, { recursive: true, force: true });
}, 30_000);

describe("scripted steer session", () => {
  it("starts from an empty world", () => {
    expect(store.spec?.kind).toBe("box_world");
    expect(store.entities).toHaveLength(0);
    screen.render(store);
    expect(screen.entityRects()).toHaveLength(0);
  });

  it("spawn shows up within two ticks of the reply", async () => {
    const reply = asObj(await (client as HubClient).command(owner, { cmd: "spawn" }));
    const tickAtReply = store.tick;
    expect(reply["ok"]).toBe(true);
    expect(typeof reply["id"]).toBe("string");
    spawnedId = reply["id"] as string;

    await waitUntil(
      () => store.entities.some((e) => e.id === spawnedId),
      5_000,
      "spawned box in the stream",
    );
    expect(store.tick).toBeLessThanOrEqual(tickAtReply + 2);

    screen.render(store);
    expect(screen.entityRects()).toHaveLength(1);

    // a new id may render as a placeholder first; the debounced re-fetch
    // must then fill in the real spec entry
    await waitUntil(() => store.specById.has(spawnedId), 5_000, "spec table catch-up");
    screen.render(store);
    const entry = store.specById.get(spawnedId) as BoxSpecEntry;
    const [r, g, b] = entry.color;
    expect(screen.entityRects()[0]?.style).toBe(`rgb(${r},${g},${b})`);
  }, 30_000);

  it("nudge moves the box one unit along +x within two ticks", async () => {
    const before = store.entities.find((e) => e.id === spawnedId);
    expect(before).toBeDefined();
    const x0 = before?.position[0] as number;
    const y0 = before?.position[1] as number;

    screen.render(store);
    const rectBefore = screen.entityRects()[0];

    const reply = asObj(
      await (client as HubClient).command(owner, { cmd: "nudge", id: spawnedId, delta: [1, 0] }),
    );
    const tickAtReply = store.tick;
    expect(reply["ok"]).toBe(true);

    await waitUntil(
      () => {
        const now = store.entities.find((e) => e.id === spawnedId);
        return now !== undefined && (now.position[0] as number) > x0 + 0.5;
      },
      5_000,
      "nudged position in the stream",
    );
    expect(store.tick).toBeLessThanOrEqual(tickAtReply + 2);

    const after = store.entities.find((e) => e.id === spawnedId);
    expect(after?.position[0]).toBeCloseTo(x0 + 1, 9);
    expect(after?.position[1]).toBeCloseTo(y0, 9);

    // same movement, measured on the canvas: one world unit times the scale
    // the renderer derives from the world bounds
    const spec = store.spec;
    if (spec === null || spec.kind !== "box_world") {
      throw new Error("box world spec disappeared");
    }
    const [minX, minY, maxX, maxY] = spec.bounds;
    const scale = Math.min((800 - 48) / (maxX - minX), (600 - 48) / (maxY - minY));
    screen.render(store);
    const rectAfter = screen.entityRects()[0];
    expect(rectAfter).toBeDefined();
    expect((rectAfter?.x as number) - (rectBefore?.x as number)).toBeCloseTo(scale, 6);
  }, 30_000);

  it("delete clears the box within two ticks", async () => {
    const reply = asObj(
      await (client as HubClient).command(owner, { cmd: "delete", id: spawnedId }),
    );
    const tickAtReply = store.tick;
    expect(reply["ok"]).toBe(true);

    await waitUntil(
      () => !store.entities.some((e) => e.id === spawnedId),
      5_000,
      "box gone from the stream",
    );
    expect(store.tick).toBeLessThanOrEqual(tickAtReply + 2);

    screen.render(store);
    expect(screen.entityRects()).toHaveLength(0);

    const fresh = asObj(await (client as HubClient).command(owner, { cmd: "fetch_spec" }));
    const specs = fresh["specs"];
    expect(Array.isArray(specs)).toBe(true);
    for (const item of specs as Json[]) {
      expect(asObj(item)["id"]).not.toBe(spawnedId);
    }
  }, 30_000);
});
