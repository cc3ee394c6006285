// Page wiring: one hub connection, one watched group, one canvas.
//
// State changes are never shown optimistically. Every command goes to the
// service, the reply lands in the status line, and the canvas only moves when
// the stream ticks.

import { ConnectError, HubClient } from "./client.js";
import { draw, type Canvas2D } from "./render.js";
import { WorldStore } from "./store.js";
import type { Json } from "./protocol.js";

let client: HubClient | null = null;
const store = new WorldStore();
let knownEntityIds = "";

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (found === null) {
    throw new Error(`missing element #${id}`);
  }
  return found as T;
}

function setText(id: string, text: string): void {
  el(id).textContent = text;
}

function show(id: string, visible: boolean): void {
  el(id).style.display = visible ? "" : "none";
}

function wsBase(): string {
  const override = el<HTMLInputElement>("hub-url").value.trim();
  if (override !== "") {
    return override;
  }
  const scheme = location.protocol === "https:" ? "wss:" : "ws:";
  return `${scheme}//${location.host}`;
}

// ---------------------------------------------------------------- connection

async function connect(): Promise<void> {
  const name = el<HTMLInputElement>("client-name").value.trim();
  setText("connect-error", "");
  if (name === "") {
    setText("connect-error", "pick a name first");
    return;
  }
  const button = el<HTMLButtonElement>("connect-btn");
  button.disabled = true;
  try {
    client = await HubClient.connect(wsBase(), name);
  } catch (err) {
    if (err instanceof ConnectError && err.code === "name_conflict") {
      setText("connect-error", `'${name}' is taken, try another name`);
    } else {
      setText("connect-error", (err as Error).message);
    }
    button.disabled = false;
    return;
  }
  button.disabled = false;
  client.onRelay = (frame) => {
    if (frame.target.type === "group" && frame.target.group === store.group) {
      store.applyStream(frame.data);
    }
  };
  client.onEvent = (frame) => {
    if (frame.kind === "group_deleted" && frame.subject === store.group) {
      store.groupDeleted();
    }
    if (frame.kind === "group_created" || frame.kind === "group_deleted") {
      void refreshGroups();
    }
  };
  client.onDisconnect = (code, reason) => {
    client = null;
    store.clearWatch();
    store.notice = `disconnected: ${reason || code}`;
    store.dirty = true;
    show("connect-panel", true);
    show("session-panel", false);
  };
  setText("whoami", `${client.profile.name} (${client.profile.id.slice(0, 8)})`);
  show("connect-panel", false);
  show("session-panel", true);
  await refreshGroups();
}

// -------------------------------------------------------------------- groups

async function refreshGroups(): Promise<void> {
  if (client === null) {
    return;
  }
  let items: Json[];
  try {
    items = (await client.fetch("groups")).items;
  } catch (err) {
    setText("reply-line", `group list failed: ${(err as Error).message}`);
    return;
  }
  const picker = el<HTMLSelectElement>("group-picker");
  const previous = picker.value;
  picker.innerHTML = "";
  for (const item of items) {
    if (typeof item !== "object" || item === null || Array.isArray(item)) {
      continue;
    }
    const name = (item as { [k: string]: Json })["name"];
    if (typeof name !== "string") {
      continue;
    }
    const option = document.createElement("option");
    option.value = name;
    option.textContent = name;
    picker.appendChild(option);
  }
  if (previous !== "") {
    picker.value = previous;
  }
}

async function watchSelected(): Promise<void> {
  if (client === null) {
    return;
  }
  const group = el<HTMLSelectElement>("group-picker").value;
  if (group === "") {
    setText("reply-line", "no group selected");
    return;
  }
  const sub = await client.subscribe(group);
  if (sub.code !== "ok") {
    setText("reply-line", `subscribe failed: ${sub.code} (${sub.detail})`);
    return;
  }
  // the group listing names the owning service; the clients listing turns
  // that name into the uuid commands are addressed to
  const listing = await client.fetch("groups");
  let ownerName: string | null = null;
  for (const item of listing.items) {
    if (typeof item === "object" && item !== null && !Array.isArray(item)) {
      const entry = item as { [k: string]: Json };
      if (entry["name"] === group && typeof entry["owner"] === "string") {
        ownerName = entry["owner"];
        break;
      }
    }
  }
  if (ownerName === null) {
    setText("reply-line", `group '${group}' vanished before its owner was found`);
    return;
  }
  const roster = await client.fetch("clients");
  let owner: string | null = null;
  for (const item of roster.items) {
    if (typeof item === "object" && item !== null && !Array.isArray(item)) {
      const entry = item as { [k: string]: Json };
      if (entry["name"] === ownerName && typeof entry["id"] === "string") {
        owner = entry["id"];
        break;
      }
    }
  }
  if (owner === null) {
    setText("reply-line", `service '${ownerName}' is not connected`);
    return;
  }
  const spec = await client.command(owner, { cmd: "fetch_spec" });
  if (store.beginWatch(group, owner, spec)) {
    store.onRefetchNeeded = () => {
      void refetchSpec();
    };
    setText("reply-line", `watching '${group}'`);
  } else {
    setText("reply-line", `'${group}' did not return a drawable spec`);
  }
}

async function refetchSpec(): Promise<void> {
  if (client === null || store.serviceId === null) {
    return;
  }
  try {
    store.applySpec(await client.command(store.serviceId, { cmd: "fetch_spec" }));
  } catch (err) {
    console.error("spec re-fetch failed:", err);
  }
}

// --------------------------------------------------------------------- steer

function describeReply(reply: Json): string {
  if (typeof reply === "object" && reply !== null && !Array.isArray(reply)) {
    const obj = reply as { [k: string]: Json };
    if (obj["error"] !== undefined) {
      return `error: ${String(obj["error"])}`;
    }
    if (obj["ok"] === true) {
      const id = typeof obj["id"] === "string" ? ` ${obj["id"].slice(0, 8)}` : "";
      const clamped = obj["clamped"] === true ? " (clamped at the wall)" : "";
      return `ok${id}${clamped}`;
    }
  }
  return JSON.stringify(reply);
}

async function runCommand(payload: Json): Promise<void> {
  if (client === null || store.serviceId === null) {
    setText("reply-line", "watch a group first");
    return;
  }
  try {
    setText("reply-line", describeReply(await client.command(store.serviceId, payload)));
  } catch (err) {
    setText("reply-line", (err as Error).message);
  }
}

function selectedEntity(): string | null {
  const value = el<HTMLSelectElement>("entity-picker").value;
  return value === "" ? null : value;
}

function nudgeDelta(): number {
  const parsed = Number(el<HTMLInputElement>("nudge-step").value);
  return Number.isFinite(parsed) && parsed > 0 ? parsed : 1;
}

function wireControls(): void {
  el<HTMLButtonElement>("connect-btn").addEventListener("click", () => void connect());
  el<HTMLInputElement>("client-name").addEventListener("keydown", (event) => {
    if ((event as KeyboardEvent).key === "Enter") {
      void connect();
    }
  });
  el<HTMLButtonElement>("refresh-groups").addEventListener("click", () => void refreshGroups());
  el<HTMLButtonElement>("watch-btn").addEventListener("click", () => void watchSelected());
  el<HTMLButtonElement>("spawn-btn").addEventListener("click", () => void runCommand({ cmd: "spawn" }));
  el<HTMLButtonElement>("delete-btn").addEventListener("click", () => {
    const id = selectedEntity();
    if (id === null) {
      setText("reply-line", "no entity selected");
      return;
    }
    void runCommand({ cmd: "delete", id });
  });
  el<HTMLButtonElement>("move-btn").addEventListener("click", () => {
    const id = selectedEntity();
    const x = Number(el<HTMLInputElement>("move-x").value);
    const y = Number(el<HTMLInputElement>("move-y").value);
    if (id === null) {
      setText("reply-line", "no entity selected");
      return;
    }
    if (!Number.isFinite(x) || !Number.isFinite(y)) {
      setText("reply-line", "move needs numeric x and y");
      return;
    }
    void runCommand({ cmd: "move_to", id, position: [x, y] });
  });
  const nudges: Array<[string, number, number]> = [
    ["nudge-left", -1, 0],
    ["nudge-right", 1, 0],
    ["nudge-up", 0, 1],
    ["nudge-down", 0, -1],
  ];
  for (const [id, dx, dy] of nudges) {
    el<HTMLButtonElement>(id).addEventListener("click", () => {
      const target = selectedEntity();
      if (target === null) {
        setText("reply-line", "no entity selected");
        return;
      }
      const step = nudgeDelta();
      void runCommand({ cmd: "nudge", id: target, delta: [dx * step, dy * step] });
    });
  }
}

// -------------------------------------------------------------------- render

function syncEntityPicker(): void {
  const ids = store.entities.map((e) => e.id);
  const key = ids.join(",");
  if (key === knownEntityIds) {
    return;
  }
  knownEntityIds = key;
  const picker = el<HTMLSelectElement>("entity-picker");
  const previous = picker.value;
  picker.innerHTML = "";
  for (const id of ids) {
    const option = document.createElement("option");
    option.value = id;
    option.textContent = id.slice(0, 8);
    picker.appendChild(option);
  }
  if (ids.includes(previous)) {
    picker.value = previous;
  }
}

function frameLoop(ctx: Canvas2D): void {
  if (store.dirty) {
    store.dirty = false;
    draw(ctx, store);
    syncEntityPicker();
  }
  requestAnimationFrame(() => frameLoop(ctx));
}

function start(): void {
  wireControls();
  const canvas = el<HTMLCanvasElement>("world");
  // the renderer only uses the 2D subset declared in Canvas2D
  const ctx = canvas.getContext("2d") as unknown as Canvas2D;
  store.dirty = true;
  frameLoop(ctx);
}

start();
