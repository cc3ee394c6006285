import { describe, expect, it } from "vitest";
import { REFETCH_DEBOUNCE_MS, WorldStore, parseSpec } from "../src/store.js";
import type { Json } from "../src/protocol.js";

const BOX_A = "11111111-1111-4111-8111-111111111111";
const BOX_B = "22222222-2222-4222-8222-222222222222";
const BOX_C = "33333333-3333-4333-8333-333333333333";

function boxSpec(ids: string[]): Json {
  return {
    kind: "box_world",
    bounds: [-10, -10, 10, 10],
    specs: ids.map((id) => ({
      id,
      half_extents: [0.5, 0.5],
      color: [200, 100, 50],
      mass: 1,
    })),
  };
}

function tickPayload(tick: number, ids: string[]): Json {
  return { tick, entities: ids.map((id, i) => ({ id, position: [i, -i] })) };
}

// a manual scheduler standing in for setTimeout, fired explicitly
class FakeClock {
  queue: Array<{ fn: () => void; ms: number }> = [];
  schedule = (fn: () => void, ms: number): void => {
    this.queue.push({ fn, ms });
  };
  fire(): void {
    const batch = this.queue.splice(0);
    for (const item of batch) {
      item.fn();
    }
  }
}

function watchedStore(): { store: WorldStore; clock: FakeClock } {
  const clock = new FakeClock();
  const store = new WorldStore({ schedule: clock.schedule });
  expect(store.beginWatch("physics_engine", BOX_A, boxSpec([BOX_A, BOX_B]))).toBe(true);
  return { store, clock };
}

describe("parseSpec", () => {
  it("accepts both world kinds", () => {
    expect(parseSpec(boxSpec([BOX_A]))?.kind).toBe("box_world");
    const planetary = parseSpec({
      kind: "planetary",
      specs: [
        { id: BOX_A, label: "sun", mass: 1, display_radius: 2, color: [255, 200, 0] },
      ],
    });
    expect(planetary?.kind).toBe("planetary");
  });

  it("rejects malformed payloads", () => {
    expect(parseSpec(null)).toBeNull();
    expect(parseSpec([])).toBeNull();
    expect(parseSpec({ kind: "box_world", specs: [] })).toBeNull(); // no bounds
    expect(parseSpec({ kind: "maze", specs: [] })).toBeNull();
    expect(
      parseSpec({ kind: "box_world", bounds: [0, 0, 1, 1], specs: [{ id: 5 }] }),
    ).toBeNull();
  });
});

describe("stream handling", () => {
  it("applies fresh ticks and exposes their entities", () => {
    const { store } = watchedStore();
    store.applyStream(tickPayload(1, [BOX_A, BOX_B]));
    expect(store.tick).toBe(1);
    expect(store.entities.map((e) => e.id)).toEqual([BOX_A, BOX_B]);
    expect(store.dirty).toBe(true);
  });

  it("discards stale and duplicate ticks", () => {
    const { store } = watchedStore();
    store.applyStream(tickPayload(5, [BOX_A]));
    store.applyStream(tickPayload(5, [BOX_A, BOX_B]));
    store.applyStream(tickPayload(3, [BOX_B]));
    expect(store.tick).toBe(5);
    expect(store.entities.map((e) => e.id)).toEqual([BOX_A]);
  });

  it("keeps only the latest tick no matter how long the stream runs", () => {
    const { store } = watchedStore();
    for (let t = 1; t <= 30_000; t++) {
      store.applyStream(tickPayload(t, [BOX_A, BOX_B]));
    }
    expect(store.tick).toBe(30_000);
    expect(store.entities).toHaveLength(2);
    expect(store.specById.size).toBe(2);
  });

  it("ignores garbage payloads without disturbing state", () => {
    const { store } = watchedStore();
    store.applyStream(tickPayload(2, [BOX_A]));
    store.applyStream("noise");
    store.applyStream({ tick: "three", entities: [] });
    store.applyStream({ entities: [] });
    expect(store.tick).toBe(2);
    expect(store.entities).toHaveLength(1);
  });

  it("records a fault and keeps the last good state", () => {
    const { store } = watchedStore();
    store.applyStream(tickPayload(4, [BOX_A]));
    store.applyStream({ fault: "non_finite_state", tick: 4 });
    expect(store.fault).toBe("non_finite_state");
    expect(store.notice).toContain("non_finite_state");
    expect(store.entities).toHaveLength(1);
  });
});

describe("spec re-fetch debounce", () => {
  it("asks once for a burst of unknown ids", () => {
    const { store, clock } = watchedStore();
    let calls = 0;
    store.onRefetchNeeded = () => {
      calls += 1;
    };
    store.applyStream(tickPayload(1, [BOX_A, BOX_C]));
    store.applyStream(tickPayload(2, [BOX_A, BOX_C]));
    store.applyStream(tickPayload(3, [BOX_A, BOX_C]));
    expect(clock.queue).toHaveLength(1);
    expect(clock.queue[0]?.ms).toBe(REFETCH_DEBOUNCE_MS);
    clock.fire();
    expect(calls).toBe(1);
  });

  it("re-arms after the pending fetch fires", () => {
    const { store, clock } = watchedStore();
    let calls = 0;
    store.onRefetchNeeded = () => {
      calls += 1;
    };
    store.applyStream(tickPayload(1, [BOX_C]));
    clock.fire();
    store.applyStream(tickPayload(2, [BOX_C]));
    clock.fire();
    expect(calls).toBe(2);
  });

  it("does not ask when every id is known", () => {
    const { store, clock } = watchedStore();
    store.applyStream(tickPayload(1, [BOX_A, BOX_B]));
    expect(clock.queue).toHaveLength(0);
  });

  it("renders unknown ids as placeholders until the table catches up", () => {
    const { store } = watchedStore();
    store.applyStream(tickPayload(1, [BOX_A, BOX_C]));
    // the entity is visible even though the spec table lacks it
    expect(store.entities.map((e) => e.id)).toContain(BOX_C);
    expect(store.specById.has(BOX_C)).toBe(false);
    store.applySpec(boxSpec([BOX_A, BOX_B, BOX_C]));
    expect(store.specById.has(BOX_C)).toBe(true);
  });
});

describe("lifecycle", () => {
  it("blanks everything when the group is deleted", () => {
    const { store } = watchedStore();
    store.applyStream(tickPayload(7, [BOX_A]));
    store.groupDeleted();
    expect(store.group).toBeNull();
    expect(store.spec).toBeNull();
    expect(store.entities).toHaveLength(0);
    expect(store.notice).toContain("deleted");
    expect(store.dirty).toBe(true);
  });

  it("ignores stream payloads when nothing is watched", () => {
    const store = new WorldStore({ schedule: () => {} });
    store.applyStream(tickPayload(1, [BOX_A]));
    expect(store.tick).toBe(-1);
    expect(store.entities).toHaveLength(0);
  });

  it("starts a new watch from a clean slate", () => {
    const { store } = watchedStore();
    store.applyStream(tickPayload(50, [BOX_A]));
    store.beginWatch("physics_engine", BOX_A, boxSpec([BOX_B]));
    expect(store.tick).toBe(-1);
    expect(store.entities).toHaveLength(0);
    expect(store.specById.has(BOX_B)).toBe(true);
    expect(store.specById.has(BOX_A)).toBe(false);
  });

  it("flags an unusable spec instead of watching", () => {
    const clock = new FakeClock();
    const store = new WorldStore({ schedule: clock.schedule });
    expect(store.beginWatch("physics_engine", BOX_A, "garbage")).toBe(false);
    expect(store.group).toBeNull();
    expect(store.notice).toContain("unusable spec");
  });
});
