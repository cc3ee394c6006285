// View model for one watched simulation group.
//
// Holds exactly one tick of state, so memory stays flat no matter how long a
// 50 Hz stream runs. Stale ticks (at or below the last accepted one) are
// discarded; entity ids missing from the spec table render as placeholders
// and trigger a single debounced spec re-fetch.

import type { Json } from "./protocol.js";

export interface BoxSpecEntry {
  id: string;
  half_extents: [number, number];
  color: [number, number, number];
  mass: number;
}

export interface PlanetSpecEntry {
  id: string;
  label: string;
  mass: number;
  display_radius: number;
  color: [number, number, number];
}

export type WorldSpec =
  | {
      kind: "box_world";
      bounds: [number, number, number, number];
      specs: BoxSpecEntry[];
    }
  | { kind: "planetary"; specs: PlanetSpecEntry[] };

export interface EntityState {
  id: string;
  position: number[];
}

export const REFETCH_DEBOUNCE_MS = 250;

type Schedule = (fn: () => void, ms: number) => void;

function num(value: unknown): number | null {
  return typeof value === "number" && Number.isFinite(value) ? value : null;
}

function vec(value: unknown, length: number): number[] | null {
  if (!Array.isArray(value) || value.length !== length) {
    return null;
  }
  const out: number[] = [];
  for (const item of value) {
    const n = num(item);
    if (n === null) {
      return null;
    }
    out.push(n);
  }
  return out;
}

export function parseSpec(payload: Json): WorldSpec | null {
  if (typeof payload !== "object" || payload === null || Array.isArray(payload)) {
    return null;
  }
  const obj = payload as { [key: string]: Json };
  const kind = obj["kind"];
  const rawSpecs = obj["specs"];
  if (!Array.isArray(rawSpecs)) {
    return null;
  }
  if (kind === "box_world") {
    const bounds = vec(obj["bounds"], 4);
    if (bounds === null) {
      return null;
    }
    const specs: BoxSpecEntry[] = [];
    for (const raw of rawSpecs) {
      if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
        return null;
      }
      const entry = raw as { [key: string]: Json };
      const half = vec(entry["half_extents"], 2);
      const color = vec(entry["color"], 3);
      const mass = num(entry["mass"]);
      if (typeof entry["id"] !== "string" || half === null || color === null || mass === null) {
        return null;
      }
      specs.push({
        id: entry["id"],
        half_extents: half as [number, number],
        color: color as [number, number, number],
        mass,
      });
    }
    return { kind: "box_world", bounds: bounds as [number, number, number, number], specs };
  }
  if (kind === "planetary") {
    const specs: PlanetSpecEntry[] = [];
    for (const raw of rawSpecs) {
      if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
        return null;
      }
      const entry = raw as { [key: string]: Json };
      const mass = num(entry["mass"]);
      const radius = num(entry["display_radius"]);
      const color = vec(entry["color"], 3);
      if (
        typeof entry["id"] !== "string" ||
        typeof entry["label"] !== "string" ||
        mass === null ||
        radius === null ||
        color === null
      ) {
        return null;
      }
      specs.push({
        id: entry["id"],
        label: entry["label"],
        mass,
        display_radius: radius,
        color: color as [number, number, number],
      });
    }
    return { kind: "planetary", specs };
  }
  return null;
}

export class WorldStore {
  group: string | null = null;
  serviceId: string | null = null;
  spec: WorldSpec | null = null;
  specById = new Map<string, BoxSpecEntry | PlanetSpecEntry>();
  tick = -1;
  entities: EntityState[] = [];
  fault: string | null = null;
  notice: string | null = null;
  dirty = false;
  onRefetchNeeded: (() => void) | null = null;

  private schedule: Schedule;
  private refetchArmed = false;

  constructor(opts: { schedule?: Schedule } = {}) {
    this.schedule = opts.schedule ?? ((fn, ms) => setTimeout(fn, ms));
  }

  /** Start watching a group; spec is the service's fetch_spec reply. */
  beginWatch(group: string, serviceId: string, spec: Json): boolean {
    this.clearWatch();
    const parsed = parseSpec(spec);
    if (parsed === null) {
      this.notice = `service for '${group}' returned an unusable spec`;
      this.dirty = true;
      return false;
    }
    this.group = group;
    this.serviceId = serviceId;
    this.installSpec(parsed);
    this.dirty = true;
    return true;
  }

  /** Replace the spec table, e.g. after a re-fetch prompted by unknown ids. */
  applySpec(spec: Json): boolean {
    const parsed = parseSpec(spec);
    if (parsed === null) {
      return false;
    }
    this.installSpec(parsed);
    this.dirty = true;
    return true;
  }

  private installSpec(spec: WorldSpec): void {
    this.spec = spec;
    this.specById.clear();
    for (const entry of spec.specs) {
      this.specById.set(entry.id, entry);
    }
  }

  /** Feed one payload from the watched group's stream. */
  applyStream(payload: Json): void {
    if (this.group === null) {
      return;
    }
    if (typeof payload !== "object" || payload === null || Array.isArray(payload)) {
      return;
    }
    const obj = payload as { [key: string]: Json };
    const fault = obj["fault"];
    if (typeof fault === "string") {
      this.fault = fault;
      this.notice = `simulation faulted: ${fault}`;
      this.dirty = true;
      return;
    }
    const tick = num(obj["tick"]);
    const rawEntities = obj["entities"];
    if (tick === null || !Array.isArray(rawEntities)) {
      return;
    }
    if (tick <= this.tick) {
      return; // stale or duplicate, never rewind
    }
    const entities: EntityState[] = [];
    let unknown = false;
    for (const raw of rawEntities) {
      if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
        continue;
      }
      const entry = raw as { [key: string]: Json };
      const id = entry["id"];
      const position = entry["position"];
      if (typeof id !== "string" || !Array.isArray(position)) {
        continue;
      }
      const coords: number[] = [];
      let ok = true;
      for (const c of position) {
        const n = num(c);
        if (n === null) {
          ok = false;
          break;
        }
        coords.push(n);
      }
      if (!ok) {
        continue;
      }
      entities.push({ id, position: coords });
      if (!this.specById.has(id)) {
        unknown = true;
      }
    }
    this.tick = tick;
    this.entities = entities;
    this.dirty = true;
    if (unknown) {
      this.requestRefetch();
    }
  }

  // collapse a burst of unknown-id ticks into one re-fetch
  private requestRefetch(): void {
    if (this.refetchArmed) {
      return;
    }
    this.refetchArmed = true;
    this.schedule(() => {
      this.refetchArmed = false;
      if (this.group !== null && this.onRefetchNeeded !== null) {
        this.onRefetchNeeded();
      }
    }, REFETCH_DEBOUNCE_MS);
  }

  /** The watched group vanished; blank the canvas and say so. */
  groupDeleted(): void {
    const group = this.group;
    this.clearWatch();
    this.notice = group !== null ? `group '${group}' was deleted` : "group was deleted";
    this.dirty = true;
  }

  clearWatch(): void {
    this.group = null;
    this.serviceId = null;
    this.spec = null;
    this.specById.clear();
    this.tick = -1;
    this.entities = [];
    this.fault = null;
    this.notice = null;
    this.dirty = true;
  }
}
