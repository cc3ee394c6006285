// Hub connection: one websocket, canonical frames, request/reply correlation.
//
// Two reply channels exist. Hub operations (subscribe, fetch, ...) answer with
// status or list frames carrying our seq in `re`. Service commands answer with
// a relay aimed back at our uuid; services handle commands in order, so one
// FIFO of waiters per service id is enough to pair replies with requests.

import {
  PROTOCOL_VERSION,
  decodeFrame,
  encodeFrame,
  type BroadcastPolicy,
  type EventFrame,
  type FetchWhat,
  type Frame,
  type Json,
  type ListFrame,
  type MessageFrame,
  type Profile,
  type RelayFrame,
  type StatusCode,
  type StatusFrame,
  type Target,
} from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(code?: number, reason?: string): void;
  onopen: (() => void) | null;
  onmessage: ((event: { data: unknown }) => void) | null;
  onerror: (() => void) | null;
  onclose: ((event: { code: number; reason: string }) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

function browserSocket(url: string): SocketLike {
  // the native WebSocket satisfies this shape at runtime; its lib.dom typings
  // are stricter about handler `this` and event types than we care to be
  return new WebSocket(url) as unknown as SocketLike;
}

export class ConnectError extends Error {
  code: StatusCode | null;

  constructor(message: string, code: StatusCode | null = null) {
    super(message);
    this.name = "ConnectError";
    this.code = code;
  }
}

export class RequestTimeout extends Error {
  constructor(message: string) {
    super(message);
    this.name = "RequestTimeout";
  }
}

export class HubClosed extends Error {
  constructor(message = "connection closed") {
    super(message);
    this.name = "HubClosed";
  }
}

export interface ConnectOptions {
  tags?: string[];
  socketFactory?: SocketFactory;
  timeoutMs?: number;
}

interface Waiter<T> {
  resolve: (value: T) => void;
  reject: (err: Error) => void;
  timer: ReturnType<typeof setTimeout>;
}

const DEFAULT_TIMEOUT_MS = 5000;

export class HubClient {
  profile: Profile;
  fileToken: string | null;
  onRelay: ((frame: RelayFrame) => void) | null = null;
  onEvent: ((frame: EventFrame) => void) | null = null;
  onStatus: ((frame: StatusFrame) => void) | null = null;
  onDisconnect: ((code: number, reason: string) => void) | null = null;
  closed = false;

  private sock: SocketLike;
  private seq = 0;
  private pending = new Map<number, Waiter<StatusFrame | ListFrame>>();
  private commandQueues = new Map<string, Waiter<Json>[]>();

  static connect(base: string, name: string, opts: ConnectOptions = {}): Promise<HubClient> {
    const factory = opts.socketFactory ?? browserSocket;
    const sock = factory(`${base}/ws?version=${PROTOCOL_VERSION}`);
    return new Promise((resolve, reject) => {
      let settled = false;
      const timer = setTimeout(() => {
        fail(new ConnectError("handshake timed out"));
        try {
          sock.close();
        } catch {
          // already gone
        }
      }, opts.timeoutMs ?? DEFAULT_TIMEOUT_MS);
      function fail(err: Error) {
        if (!settled) {
          settled = true;
          clearTimeout(timer);
          reject(err);
        }
      }
      sock.onopen = () => {
        sock.send(
          encodeFrame({
            type: "identify",
            name,
            kind: "user",
            tags: opts.tags ?? [],
            version: PROTOCOL_VERSION,
          }),
        );
      };
      sock.onmessage = (event) => {
        let frame: Frame;
        try {
          frame = decodeFrame(String(event.data));
        } catch (err) {
          fail(new ConnectError(`bad handshake frame: ${(err as Error).message}`));
          try {
            sock.close();
          } catch {
            // already gone
          }
          return;
        }
        if (frame.type === "hello") {
          if (!settled) {
            settled = true;
            clearTimeout(timer);
            resolve(new HubClient(sock, frame.profile, frame.file_token ?? null));
          }
        } else if (frame.type === "status") {
          fail(new ConnectError(frame.detail, frame.code));
        }
      };
      sock.onerror = () => fail(new ConnectError("connection failed"));
      sock.onclose = (event) =>
        fail(new ConnectError(event.reason || `connection closed (${event.code})`));
    });
  }

  private constructor(sock: SocketLike, profile: Profile, fileToken: string | null) {
    this.sock = sock;
    this.profile = profile;
    this.fileToken = fileToken;
    sock.onopen = null;
    sock.onerror = null;
    sock.onmessage = (event) => this.handleText(String(event.data));
    sock.onclose = (event) => this.handleClose(event.code, event.reason);
  }

  close(): void {
    if (this.closed) {
      return;
    }
    this.closed = true;
    try {
      this.sock.close(1000, "client closing");
    } catch {
      // already gone
    }
    this.failAll(new HubClosed());
  }

  /** Send a hub operation and await the status or list reply. */
  request(
    frame:
      | { type: "create_group"; group: string; policy: BroadcastPolicy }
      | { type: "delete_group"; group: string }
      | { type: "subscribe"; group: string }
      | { type: "unsubscribe"; group: string }
      | { type: "fetch"; what: FetchWhat; group?: string },
    timeoutMs = DEFAULT_TIMEOUT_MS,
  ): Promise<StatusFrame | ListFrame> {
    if (this.closed) {
      return Promise.reject(new HubClosed());
    }
    const seq = ++this.seq;
    const text = encodeFrame({ ...frame, seq });
    return new Promise((resolve, reject) => {
      const timer = setTimeout(() => {
        this.pending.delete(seq);
        reject(new RequestTimeout(`no reply to ${frame.type} within ${timeoutMs}ms`));
      }, timeoutMs);
      this.pending.set(seq, { resolve, reject, timer });
      this.sock.send(text);
    });
  }

  async subscribe(group: string): Promise<StatusFrame> {
    return (await this.request({ type: "subscribe", group })) as StatusFrame;
  }

  async unsubscribe(group: string): Promise<StatusFrame> {
    return (await this.request({ type: "unsubscribe", group })) as StatusFrame;
  }

  async createGroup(group: string, policy: BroadcastPolicy): Promise<StatusFrame> {
    return (await this.request({ type: "create_group", group, policy })) as StatusFrame;
  }

  async deleteGroup(group: string): Promise<StatusFrame> {
    return (await this.request({ type: "delete_group", group })) as StatusFrame;
  }

  async fetch(what: FetchWhat, group?: string): Promise<ListFrame> {
    const frame: { type: "fetch"; what: FetchWhat; group?: string } = { type: "fetch", what };
    if (group !== undefined) {
      frame.group = group;
    }
    return (await this.request(frame)) as ListFrame;
  }

  /** Fire-and-forget message to any target. */
  send(target: Target, data: Json, contentHint?: string): void {
    if (this.closed) {
      throw new HubClosed();
    }
    const frame: MessageFrame = { type: "message", target, data, seq: ++this.seq };
    if (contentHint !== undefined) {
      frame.content_hint = contentHint;
    }
    this.sock.send(encodeFrame(frame));
  }

  /** Send a command payload to a service and await its reply payload. */
  command(serviceId: string, data: Json, timeoutMs = DEFAULT_TIMEOUT_MS): Promise<Json> {
    if (this.closed) {
      return Promise.reject(new HubClosed());
    }
    const text = encodeFrame({
      type: "message",
      target: { type: "uuid", id: serviceId },
      data,
      seq: ++this.seq,
    });
    return new Promise((resolve, reject) => {
      let queue = this.commandQueues.get(serviceId);
      if (queue === undefined) {
        queue = [];
        this.commandQueues.set(serviceId, queue);
      }
      const waiter: Waiter<Json> = {
        resolve,
        reject,
        timer: setTimeout(() => {
          const q = this.commandQueues.get(serviceId);
          if (q !== undefined) {
            const at = q.indexOf(waiter);
            if (at >= 0) {
              q.splice(at, 1);
            }
          }
          reject(new RequestTimeout(`service ${serviceId} did not reply within ${timeoutMs}ms`));
        }, timeoutMs),
      };
      queue.push(waiter);
      this.sock.send(text);
    });
  }

  private handleText(text: string): void {
    let frame: Frame;
    try {
      frame = decodeFrame(text);
    } catch (err) {
      console.error("undecodable frame from hub:", err);
      return;
    }
    if (frame.type === "status" || frame.type === "list") {
      if (frame.re !== undefined) {
        const waiter = this.pending.get(frame.re);
        if (waiter !== undefined) {
          this.pending.delete(frame.re);
          clearTimeout(waiter.timer);
          waiter.resolve(frame);
        }
        // a reply whose waiter timed out is stale; drop it
      } else if (frame.type === "status" && this.onStatus !== null) {
        this.onStatus(frame);
      }
      return;
    }
    if (frame.type === "relay") {
      if (frame.target.type === "uuid") {
        const queue = this.commandQueues.get(frame.origin.id);
        const waiter = queue?.shift();
        if (waiter !== undefined) {
          clearTimeout(waiter.timer);
          waiter.resolve(frame.data);
          return;
        }
      }
      this.onRelay?.(frame);
      return;
    }
    if (frame.type === "event") {
      this.onEvent?.(frame);
    }
  }

  private handleClose(code: number, reason: string): void {
    const wasOpen = !this.closed;
    this.closed = true;
    this.failAll(new HubClosed(reason || `connection closed (${code})`));
    if (wasOpen && this.onDisconnect !== null) {
      this.onDisconnect(code, reason);
    }
  }

  private failAll(err: Error): void {
    const pending = Array.from(this.pending.values());
    this.pending.clear();
    for (const waiter of pending) {
      clearTimeout(waiter.timer);
      waiter.reject(err);
    }
    const queues = Array.from(this.commandQueues.values());
    this.commandQueues.clear();
    for (const queue of queues) {
      for (const waiter of queue) {
        clearTimeout(waiter.timer);
        waiter.reject(err);
      }
    }
  }
}
