// Wire protocol: canonical JSON frames, one per line, matching the hub's
// encoding byte for byte so hashes and replay logs agree across languages.

export const PROTOCOL_VERSION = "1.0";
export const MAX_TAGS = 16;
export const MAX_TAG_LEN = 32;

const NAME_RE = /^[A-Za-z0-9_-]{1,64}$/;
const UUID_RE = /^[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}$/;

export type ClientKind = "user" | "service";
export type BroadcastPolicy = "owner_only" | "subscribers" | "anyone";
export type FetchWhat = "clients" | "groups" | "subscribers";
export type EventKind =
  | "client_joined"
  | "client_left"
  | "group_created"
  | "group_deleted";

export type StatusCode =
  | "ok"
  | "no_such_name"
  | "no_such_uuid"
  | "no_such_group"
  | "name_conflict"
  | "group_already_exists"
  | "not_group_owner"
  | "bad_permission"
  | "not_identified"
  | "already_identified"
  | "unsupported_version"
  | "malformed_frame";

const CLIENT_KINDS = new Set(["user", "service"]);
const POLICIES = new Set(["owner_only", "subscribers", "anyone"]);
const FETCH_WHATS = new Set(["clients", "groups", "subscribers"]);
const EVENT_KINDS = new Set([
  "client_joined",
  "client_left",
  "group_created",
  "group_deleted",
]);
const STATUS_CODES = new Set([
  "ok",
  "no_such_name",
  "no_such_uuid",
  "no_such_group",
  "name_conflict",
  "group_already_exists",
  "not_group_owner",
  "bad_permission",
  "not_identified",
  "already_identified",
  "unsupported_version",
  "malformed_frame",
]);

export type Json =
  | null
  | boolean
  | number
  | string
  | Json[]
  | { [key: string]: Json };

export interface Profile {
  id: string;
  name: string;
  kind: ClientKind;
  tags: string[];
}

export type Target =
  | { type: "uuid"; id: string }
  | { type: "name"; name: string }
  | { type: "group"; group: string }
  | { type: "all" };

export interface IdentifyFrame {
  type: "identify";
  name: string;
  kind: ClientKind;
  tags: string[];
  version: string;
}

export interface MessageFrame {
  type: "message";
  target: Target;
  data: Json;
  seq: number;
  content_hint?: string;
}

export interface CreateGroupFrame {
  type: "create_group";
  group: string;
  policy: BroadcastPolicy;
  seq?: number;
}

export interface DeleteGroupFrame {
  type: "delete_group";
  group: string;
  seq?: number;
}

export interface SubscribeFrame {
  type: "subscribe";
  group: string;
  seq?: number;
}

export interface UnsubscribeFrame {
  type: "unsubscribe";
  group: string;
  seq?: number;
}

export interface FetchFrame {
  type: "fetch";
  what: FetchWhat;
  group?: string;
  seq?: number;
}

export interface HelloFrame {
  type: "hello";
  profile: Profile;
  version: string;
  file_token?: string;
}

export interface RelayFrame {
  type: "relay";
  origin: Profile;
  target: Target;
  data: Json;
  seq: number;
}

export interface StatusFrame {
  type: "status";
  code: StatusCode;
  detail: string;
  re?: number;
}

export interface ListFrame {
  type: "list";
  what: FetchWhat;
  items: Json[];
  re?: number;
}

export interface EventFrame {
  type: "event";
  kind: EventKind;
  subject: string;
}

export type Frame =
  | IdentifyFrame
  | MessageFrame
  | CreateGroupFrame
  | DeleteGroupFrame
  | SubscribeFrame
  | UnsubscribeFrame
  | FetchFrame
  | HelloFrame
  | RelayFrame
  | StatusFrame
  | ListFrame
  | EventFrame;

export class FrameError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "FrameError";
  }
}

export function validName(candidate: unknown): candidate is string {
  return typeof candidate === "string" && NAME_RE.test(candidate);
}

export function validUuid(candidate: unknown): candidate is string {
  return typeof candidate === "string" && UUID_RE.test(candidate);
}

// -- Number formatting --------------------------------------------------------
//
// The hub serializes with Python's json module, whose float repr differs from
// String(n) in two places: it switches to exponent notation outside
// [1e-4, 1e16) instead of JS's [1e-6, 1e21), and it always writes a signed,
// two digit exponent ("1e-05", not "1e-5").  Both sides use shortest
// round-trip digits, so aligning those two rules makes the output identical.

function padExponent(s: string): string {
  return s.replace(/e([+-])(\d)$/, "e$10$2");
}

export function fmtNumber(n: number): string {
  if (!Number.isFinite(n)) {
    throw new FrameError("non-finite numbers are not allowed");
  }
  // integral doubles inside the safe range print as Python ints; outside it
  // a double cannot hold an exact int anyway, so Python's float form wins
  if (Number.isSafeInteger(n)) {
    return String(n);
  }
  const a = Math.abs(n);
  if (n !== 0 && (a < 1e-4 || a >= 1e16)) {
    return padExponent(n.toExponential());
  }
  return String(n);
}

// -- Canonical serialization --------------------------------------------------

function cmpCodePoints(a: string, b: string): number {
  // Python compares strings by code point; the default JS sort compares
  // UTF-16 units, which misorders astral-plane keys against U+E000..U+FFFF.
  let i = 0;
  let j = 0;
  while (i < a.length && j < b.length) {
    const ca = a.codePointAt(i) as number;
    const cb = b.codePointAt(j) as number;
    if (ca !== cb) {
      return ca < cb ? -1 : 1;
    }
    i += ca > 0xffff ? 2 : 1;
    j += cb > 0xffff ? 2 : 1;
  }
  if (i >= a.length && j >= b.length) {
    return 0;
  }
  return i >= a.length ? -1 : 1;
}

function jsonValue(value: Json): string {
  if (value === null) {
    return "null";
  }
  switch (typeof value) {
    case "boolean":
      return value ? "true" : "false";
    case "number":
      return fmtNumber(value);
    case "string":
      return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return "[" + value.map(jsonValue).join(",") + "]";
  }
  if (typeof value === "object") {
    const keys = Object.keys(value).sort(cmpCodePoints);
    const parts = keys.map(
      (k) => JSON.stringify(k) + ":" + jsonValue(value[k] as Json),
    );
    return "{" + parts.join(",") + "}";
  }
  throw new FrameError(`payload value is not JSON-representable: ${typeof value}`);
}

type Pair = [string, string];

function assemble(pairs: Pair[]): string {
  return "{" + pairs.map(([k, v]) => JSON.stringify(k) + ":" + v).join(",") + "}";
}

function targetValue(target: Target): string {
  switch (target.type) {
    case "uuid":
      return assemble([
        ["type", '"uuid"'],
        ["id", JSON.stringify(target.id)],
      ]);
    case "name":
      return assemble([
        ["type", '"name"'],
        ["name", JSON.stringify(target.name)],
      ]);
    case "group":
      return assemble([
        ["type", '"group"'],
        ["group", JSON.stringify(target.group)],
      ]);
    case "all":
      return '{"type":"all"}';
  }
}

function profileValue(profile: Profile): string {
  return assemble([
    ["id", JSON.stringify(profile.id)],
    ["kind", JSON.stringify(profile.kind)],
    ["name", JSON.stringify(profile.name)],
    ["tags", jsonValue(profile.tags)],
  ]);
}

/** Encode a frame to its canonical single-line JSON form. */
export function encodeFrame(frame: Frame): string {
  const pairs: Pair[] = [["type", JSON.stringify(frame.type)]];
  switch (frame.type) {
    case "identify":
      pairs.push(["kind", JSON.stringify(frame.kind)]);
      pairs.push(["name", JSON.stringify(frame.name)]);
      pairs.push(["tags", jsonValue(frame.tags)]);
      pairs.push(["version", JSON.stringify(frame.version)]);
      break;
    case "message":
      if (frame.content_hint !== undefined) {
        pairs.push(["content_hint", JSON.stringify(frame.content_hint)]);
      }
      pairs.push(["data", jsonValue(frame.data)]);
      pairs.push(["seq", fmtNumber(frame.seq)]);
      pairs.push(["target", targetValue(frame.target)]);
      break;
    case "create_group":
      pairs.push(["group", JSON.stringify(frame.group)]);
      pairs.push(["policy", JSON.stringify(frame.policy)]);
      if (frame.seq !== undefined) {
        pairs.push(["seq", fmtNumber(frame.seq)]);
      }
      break;
    case "delete_group":
    case "subscribe":
    case "unsubscribe":
      pairs.push(["group", JSON.stringify(frame.group)]);
      if (frame.seq !== undefined) {
        pairs.push(["seq", fmtNumber(frame.seq)]);
      }
      break;
    case "fetch":
      if (frame.group !== undefined) {
        pairs.push(["group", JSON.stringify(frame.group)]);
      }
      if (frame.seq !== undefined) {
        pairs.push(["seq", fmtNumber(frame.seq)]);
      }
      pairs.push(["what", JSON.stringify(frame.what)]);
      break;
    case "hello":
      if (frame.file_token !== undefined) {
        pairs.push(["file_token", JSON.stringify(frame.file_token)]);
      }
      pairs.push(["profile", profileValue(frame.profile)]);
      pairs.push(["version", JSON.stringify(frame.version)]);
      break;
    case "relay":
      pairs.push(["data", jsonValue(frame.data)]);
      pairs.push(["origin", profileValue(frame.origin)]);
      pairs.push(["seq", fmtNumber(frame.seq)]);
      pairs.push(["target", targetValue(frame.target)]);
      break;
    case "status":
      pairs.push(["code", JSON.stringify(frame.code)]);
      pairs.push(["detail", JSON.stringify(frame.detail)]);
      if (frame.re !== undefined) {
        pairs.push(["re", fmtNumber(frame.re)]);
      }
      break;
    case "list":
      pairs.push(["items", jsonValue(frame.items)]);
      if (frame.re !== undefined) {
        pairs.push(["re", fmtNumber(frame.re)]);
      }
      pairs.push(["what", JSON.stringify(frame.what)]);
      break;
    case "event":
      pairs.push(["kind", JSON.stringify(frame.kind)]);
      pairs.push(["subject", JSON.stringify(frame.subject)]);
      break;
    default:
      throw new FrameError(`not a frame: ${JSON.stringify(frame)}`);
  }
  return assemble(pairs);
}

// -- Decoding -----------------------------------------------------------------
//
// Decoding is tolerant of key order and ignores unknown fields, so any frame a
// conforming peer emits is accepted no matter how its serializer orders keys.

type Obj = { [key: string]: unknown };

function requireField(obj: Obj, key: string): unknown {
  if (!(key in obj)) {
    throw new FrameError(`missing field '${key}'`);
  }
  return obj[key];
}

function strField(obj: Obj, key: string): string {
  const value = requireField(obj, key);
  if (typeof value !== "string") {
    throw new FrameError(`field '${key}' must be a string`);
  }
  return value;
}

function nameField(obj: Obj, key: string): string {
  const value = strField(obj, key);
  if (!validName(value)) {
    throw new FrameError(`field '${key}' is not a valid name`);
  }
  return value;
}

function uuidField(obj: Obj, key: string): string {
  const value = strField(obj, key);
  if (!validUuid(value)) {
    throw new FrameError(`field '${key}' is not a valid uuid`);
  }
  return value;
}

function seqValue(value: unknown, key = "seq"): number {
  if (typeof value !== "number" || !Number.isInteger(value)) {
    throw new FrameError(`field '${key}' must be an unsigned integer`);
  }
  if (value < 0 || value > 18446744073709551615) {
    throw new FrameError(`field '${key}' out of range`);
  }
  return value;
}

function optSeq(obj: Obj, key = "seq"): number | undefined {
  if (!(key in obj) || obj[key] === null) {
    return undefined;
  }
  return seqValue(obj[key], key);
}

function optStr(obj: Obj, key: string): string | undefined {
  if (!(key in obj) || obj[key] === null) {
    return undefined;
  }
  const value = obj[key];
  if (typeof value !== "string") {
    throw new FrameError(`field '${key}' must be a string`);
  }
  return value;
}

function enumField<T extends string>(obj: Obj, key: string, allowed: Set<string>): T {
  const value = strField(obj, key);
  if (!allowed.has(value)) {
    throw new FrameError(`unknown '${key}' value '${value}'`);
  }
  return value as T;
}

function tagsField(obj: Obj): string[] {
  const value = requireField(obj, "tags");
  if (!Array.isArray(value)) {
    throw new FrameError("field 'tags' must be a list");
  }
  if (value.length > MAX_TAGS) {
    throw new FrameError(`at most ${MAX_TAGS} tags allowed`);
  }
  for (const tag of value) {
    if (typeof tag !== "string" || tag.length > MAX_TAG_LEN) {
      throw new FrameError("tags must be strings of at most 32 chars");
    }
  }
  return value.slice();
}

function targetField(obj: Obj, key = "target"): Target {
  const value = requireField(obj, key);
  if (typeof value !== "object" || value === null || Array.isArray(value)) {
    throw new FrameError(`field '${key}' must be an object`);
  }
  const t = value as Obj;
  const kind = t["type"];
  if (kind === "uuid") {
    return { type: "uuid", id: uuidField(t, "id") };
  }
  if (kind === "name") {
    return { type: "name", name: nameField(t, "name") };
  }
  if (kind === "group") {
    return { type: "group", group: nameField(t, "group") };
  }
  if (kind === "all") {
    return { type: "all" };
  }
  throw new FrameError(`unknown target type '${String(kind)}'`);
}

function profileField(obj: Obj, key: string): Profile {
  const value = requireField(obj, key);
  if (typeof value !== "object" || value === null || Array.isArray(value)) {
    throw new FrameError(`field '${key}' must be an object`);
  }
  const p = value as Obj;
  return {
    id: uuidField(p, "id"),
    name: nameField(p, "name"),
    kind: enumField<ClientKind>(p, "kind", CLIENT_KINDS),
    tags: tagsField(p),
  };
}

/** Decode one frame from JSON text; throws FrameError on any defect. */
export function decodeFrame(text: string): Frame {
  let parsed: unknown;
  try {
    parsed = JSON.parse(text);
  } catch (exc) {
    throw new FrameError(`not valid JSON: ${(exc as Error).message}`);
  }
  if (typeof parsed !== "object" || parsed === null || Array.isArray(parsed)) {
    throw new FrameError("frame must be a JSON object");
  }
  const obj = parsed as Obj;
  const tag = obj["type"];
  if (typeof tag !== "string") {
    throw new FrameError("missing 'type' discriminator");
  }

  switch (tag) {
    case "identify":
      return {
        type: "identify",
        name: nameField(obj, "name"),
        kind: enumField<ClientKind>(obj, "kind", CLIENT_KINDS),
        tags: tagsField(obj),
        version: strField(obj, "version"),
      };
    case "message": {
      const frame: MessageFrame = {
        type: "message",
        target: targetField(obj),
        data: requireField(obj, "data") as Json,
        seq: seqValue(requireField(obj, "seq")),
      };
      const hint = optStr(obj, "content_hint");
      if (hint !== undefined) {
        frame.content_hint = hint;
      }
      return frame;
    }
    case "create_group": {
      const frame: CreateGroupFrame = {
        type: "create_group",
        group: nameField(obj, "group"),
        policy: enumField<BroadcastPolicy>(obj, "policy", POLICIES),
      };
      const seq = optSeq(obj);
      if (seq !== undefined) {
        frame.seq = seq;
      }
      return frame;
    }
    case "delete_group":
    case "subscribe":
    case "unsubscribe": {
      const frame: DeleteGroupFrame | SubscribeFrame | UnsubscribeFrame = {
        type: tag,
        group: nameField(obj, "group"),
      };
      const seq = optSeq(obj);
      if (seq !== undefined) {
        frame.seq = seq;
      }
      return frame;
    }
    case "fetch": {
      const frame: FetchFrame = {
        type: "fetch",
        what: enumField<FetchWhat>(obj, "what", FETCH_WHATS),
      };
      if (obj["group"] !== undefined && obj["group"] !== null) {
        frame.group = nameField(obj, "group");
      }
      const seq = optSeq(obj);
      if (seq !== undefined) {
        frame.seq = seq;
      }
      return frame;
    }
    case "hello": {
      const frame: HelloFrame = {
        type: "hello",
        profile: profileField(obj, "profile"),
        version: strField(obj, "version"),
      };
      const token = optStr(obj, "file_token");
      if (token !== undefined) {
        frame.file_token = token;
      }
      return frame;
    }
    case "relay":
      return {
        type: "relay",
        origin: profileField(obj, "origin"),
        target: targetField(obj),
        data: requireField(obj, "data") as Json,
        seq: seqValue(requireField(obj, "seq")),
      };
    case "status": {
      const frame: StatusFrame = {
        type: "status",
        code: enumField<StatusCode>(obj, "code", STATUS_CODES),
        detail: strField(obj, "detail"),
      };
      const re = optSeq(obj, "re");
      if (re !== undefined) {
        frame.re = re;
      }
      return frame;
    }
    case "list": {
      const items = requireField(obj, "items");
      if (!Array.isArray(items)) {
        throw new FrameError("field 'items' must be a list");
      }
      const frame: ListFrame = {
        type: "list",
        what: enumField<FetchWhat>(obj, "what", FETCH_WHATS),
        items: items as Json[],
      };
      const re = optSeq(obj, "re");
      if (re !== undefined) {
        frame.re = re;
      }
      return frame;
    }
    case "event":
      return {
        type: "event",
        kind: enumField<EventKind>(obj, "kind", EVENT_KINDS),
        subject: strField(obj, "subject"),
      };
    default:
      throw new FrameError(`unknown frame type '${tag}'`);
  }
}
