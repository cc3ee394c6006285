"""The network face of the hub: WebSocket relay plus HTTP file store.

One aiohttp application serves four things:

* ``GET /ws?version=1.0``, the relay endpoint (text frames, one protocol
  frame per message),
* ``PUT|POST|GET|DELETE /fs/{owner}/{path}``, a per-client file namespace
  authenticated by the ``file_token`` issued in HELLO,
* ``GET /healthz`` for probes,
* optionally ``/app``, static files for the bundled web client.

Every connection runs one reader (this handler) and one writer task draining
a bounded queue. A full queue means the peer is not keeping up; the policy is
to drop the connection (close code 4008) rather than buffer without limit.
Close codes: 4000 identify timeout, 4001 protocol violation, 4008 slow
consumer, 1001 server shutdown.

After IDENTIFY the writer task is the only thing that touches the socket,
including the final close frame. Tearing down from another task would mean
cancelling the writer mid-send, and a task cancelled while parked on the
transport's drain waiter poisons that shared future; the next drain then
dies with CancelledError and the peer sees an abnormal close instead of the
code we meant to send. So _kill only records the close code and wakes the
writer, which flushes what is queued and says goodbye itself.
"""

from __future__ import annotations

import asyncio
import logging
import secrets
import tempfile
import os
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Optional

from aiohttp import WSMsgType, web

from .hub import Hub, HubError, Notification
from .protocol import (
    PROTOCOL_VERSION,
    Event,
    Fetch,
    FetchWhat,
    FrameError,
    Hello,
    Identify,
    ListReply,
    Message,
    Relay,
    Status,
    StatusCode,
    CreateGroup,
    DeleteGroup,
    Subscribe,
    Unsubscribe,
    decode_frame,
    encode_frame,
    profile_wire,
    validate_name,
)

__all__ = ["Gateway", "ConnState"]

log = logging.getLogger(__name__)

DEFAULT_QUEUE_CAPACITY = 1024
DEFAULT_MAX_FRAME = 1 << 20  # 1 MiB; bulk data belongs in the file store
DEFAULT_IDENTIFY_TIMEOUT = 10.0
DEFAULT_FILE_LIMIT = 512 * 1024 * 1024

CLOSE_IDENTIFY_TIMEOUT = 4000
CLOSE_PROTOCOL_VIOLATION = 4001
CLOSE_SLOW_CONSUMER = 4008
CLOSE_SHUTDOWN = 1001

_CHUNK = 64 * 1024

# How long a killed connection gets to flush its backlog and complete the
# close handshake before the transport is torn down underneath it.
_CLOSE_GRACE = 15.0


class ConnState(Enum):
    AWAITING_IDENTIFY = "awaiting_identify"
    ACTIVE = "active"
    CLOSING = "closing"


class _Session:
    def __init__(self, ws: web.WebSocketResponse, capacity: int) -> None:
        self.ws = ws
        self.state = ConnState.AWAITING_IDENTIFY
        self.profile = None
        self.token: Optional[str] = None
        self.queue: asyncio.Queue[str] = asyncio.Queue(maxsize=capacity)
        self.writer: Optional[asyncio.Task] = None
        self.wake = asyncio.Event()  # tells the writer to wrap up
        self.goodbye: Optional[tuple[int, bytes]] = None
        self.transport = None  # for the last-resort abort

    def offer(self, text: str) -> bool:
        """Queue one outbound frame; False signals overflow."""
        if self.state is not ConnState.ACTIVE:
            return True
        try:
            self.queue.put_nowait(text)
            return True
        except asyncio.QueueFull:
            return False


class Gateway:
    def __init__(
        self,
        fs_root: str,
        *,
        queue_capacity: int = DEFAULT_QUEUE_CAPACITY,
        max_frame: int = DEFAULT_MAX_FRAME,
        identify_timeout: float = DEFAULT_IDENTIFY_TIMEOUT,
        file_limit: int = DEFAULT_FILE_LIMIT,
        static_root: Optional[str] = None,
    ) -> None:
        self.hub = Hub(on_event=self._fanout_event)
        self.fs_root = Path(fs_root)
        self.fs_root.mkdir(parents=True, exist_ok=True)
        self.queue_capacity = queue_capacity
        self.max_frame = max_frame
        self.identify_timeout = identify_timeout
        self.file_limit = file_limit
        self.static_root = Path(static_root) if static_root else None
        self._sessions: dict[str, _Session] = {}  # client id -> session
        self._tokens: dict[str, str] = {}  # file token -> client name
        self._reapers: set[asyncio.Task] = set()  # keeps kill tasks alive

    # ------------------------------------------------------------------ app

    def make_app(self) -> web.Application:
        app = web.Application()
        app.router.add_get("/ws", self._ws_handler)
        app.router.add_get("/healthz", self._healthz)
        app.router.add_put("/fs/{owner}/{path:.+}", self._upload)
        app.router.add_post("/fs/{owner}/{path:.+}", self._upload)
        app.router.add_get("/fs/{owner}/{path:.+}", self._download)
        app.router.add_delete("/fs/{owner}/{path:.+}", self._delete_file)
        if self.static_root is not None and self.static_root.is_dir():
            app.router.add_get("/app", self._app_index)
            app.router.add_get("/app/", self._app_index)
            app.router.add_static("/app", self.static_root)
        app.on_shutdown.append(self._on_shutdown)
        return app

    async def _healthz(self, request: web.Request) -> web.Response:
        return web.Response(text="ok")

    async def _app_index(self, request: web.Request) -> web.StreamResponse:
        index = self.static_root / "index.html" if self.static_root else None
        if index is None or not index.is_file():
            raise web.HTTPNotFound(text="web client not built")
        return web.FileResponse(index)

    async def _on_shutdown(self, app: web.Application) -> None:
        sessions = list(self._sessions.values())
        if sessions:
            await asyncio.gather(
                *(self._kill(s, CLOSE_SHUTDOWN, "server shutdown") for s in sessions),
                return_exceptions=True,
            )

    # ----------------------------------------------------------- relay side

    def _fanout_event(self, note: Notification) -> None:
        text = encode_frame(Event(kind=note.kind, subject=note.subject))
        for rid in note.recipients:
            self._offer_to(rid, text)

    def _offer_to(self, client_id: str, text: str) -> None:
        sess = self._sessions.get(client_id)
        if sess is None:
            return
        if not sess.offer(text):
            task = asyncio.get_running_loop().create_task(
                self._kill(sess, CLOSE_SLOW_CONSUMER, "outbound queue overflow")
            )
            self._reapers.add(task)
            task.add_done_callback(self._reapers.discard)

    def _retire(self, sess: _Session) -> None:
        """Idempotent removal from the registries; safe to call twice."""
        if sess.state is ConnState.CLOSING:
            return
        sess.state = ConnState.CLOSING
        if sess.token is not None:
            self._tokens.pop(sess.token, None)
        if sess.profile is not None:
            self._sessions.pop(sess.profile.id, None)
            try:
                self.hub.unregister_client(sess.profile.id)
            except HubError:
                pass
        sess.wake.set()

    async def _kill(self, sess: _Session, code: int, reason: str) -> None:
        if sess.state is ConnState.CLOSING:
            return
        name = sess.profile.name if sess.profile else "?"
        log.info("closing connection of %s: %s (code %d)", name, reason, code)
        sess.goodbye = (code, reason.encode())
        self._retire(sess)
        if sess.writer is None:
            # Identify phase; nothing else writes, close directly.
            try:
                await sess.ws.close(code=code, message=reason.encode())
            except OSError:
                pass
            return
        try:
            await asyncio.wait_for(asyncio.shield(sess.writer), _CLOSE_GRACE)
        except asyncio.TimeoutError:
            # The peer stopped reading and never drained the close frame.
            sess.writer.cancel()
            if sess.transport is not None:
                sess.transport.abort()

    async def _writer_loop(self, sess: _Session) -> None:
        ws = sess.ws
        wake = asyncio.ensure_future(sess.wake.wait())
        getter: Optional[asyncio.Task] = None
        try:
            while True:
                getter = asyncio.ensure_future(sess.queue.get())
                done, _ = await asyncio.wait(
                    {getter, wake}, return_when=asyncio.FIRST_COMPLETED
                )
                if getter in done:
                    await ws.send_str(getter.result())
                    getter = None
                    continue
                break
            # Retired. Nothing enqueues past that point, so flush the
            # backlog and send the close frame with the recorded code.
            while not sess.queue.empty():
                await ws.send_str(sess.queue.get_nowait())
            code, reason = sess.goodbye or (CLOSE_SHUTDOWN, b"")
            await ws.close(code=code, message=reason)
        except (asyncio.CancelledError, OSError):
            pass  # peer went away mid-write, or the grace watchdog fired
        except Exception:
            log.exception("writer for %s died", sess.profile.name if sess.profile else "?")
        finally:
            wake.cancel()
            if getter is not None:
                getter.cancel()

    async def _ws_handler(self, request: web.Request) -> web.WebSocketResponse:
        ws = web.WebSocketResponse(max_msg_size=self.max_frame)
        await ws.prepare(request)

        version = request.query.get("version", PROTOCOL_VERSION)
        if version != PROTOCOL_VERSION:
            await ws.send_str(
                encode_frame(
                    Status(
                        code=StatusCode.UNSUPPORTED_VERSION,
                        detail=f"server speaks {PROTOCOL_VERSION}",
                    )
                )
            )
            await ws.close(code=CLOSE_PROTOCOL_VIOLATION, message=b"unsupported version")
            return ws

        sess = _Session(ws, self.queue_capacity)
        sess.transport = request.transport
        if not await self._identify_phase(sess):
            return ws

        sess.writer = asyncio.create_task(self._writer_loop(sess))
        try:
            async for msg in ws:
                if sess.state is not ConnState.ACTIVE:
                    # Goodbye in progress; drop inbound frames until the
                    # writer's close lands and ends this loop. Returning
                    # early instead would let aiohttp's write_eof() race
                    # the goodbye with a generic 1000 close.
                    continue
                if msg.type == WSMsgType.TEXT:
                    self._handle_frame(sess, msg.data)
                elif msg.type == WSMsgType.BINARY:
                    await self._kill(sess, CLOSE_PROTOCOL_VIOLATION, "binary frames not allowed")
                elif msg.type == WSMsgType.ERROR:
                    break
        finally:
            self._retire(sess)
            if sess.writer is not None and not sess.writer.done():
                try:
                    await asyncio.wait_for(asyncio.shield(sess.writer), _CLOSE_GRACE)
                except (asyncio.TimeoutError, asyncio.CancelledError):
                    sess.writer.cancel()
        return ws

    async def _identify_phase(self, sess: _Session) -> bool:
        """Run the AWAITING_IDENTIFY state; True once the session is ACTIVE."""
        ws = sess.ws

        async def refuse(frame: Status, close_code: int, reason: str) -> bool:
            try:
                await ws.send_str(encode_frame(frame))
                await ws.close(code=close_code, message=reason.encode())
            except Exception:
                pass
            return False

        try:
            msg = await asyncio.wait_for(ws.receive(), self.identify_timeout)
        except asyncio.TimeoutError:
            await ws.close(code=CLOSE_IDENTIFY_TIMEOUT, message=b"identify deadline passed")
            return False
        if msg.type != WSMsgType.TEXT:
            if msg.type == WSMsgType.BINARY:
                await ws.close(code=CLOSE_PROTOCOL_VIOLATION, message=b"binary frames not allowed")
            return False
        try:
            frame = decode_frame(msg.data)
        except FrameError as err:
            return await refuse(
                Status(code=StatusCode.MALFORMED_FRAME, detail=str(err)),
                CLOSE_PROTOCOL_VIOLATION,
                "malformed frame before identify",
            )
        if not isinstance(frame, Identify):
            return await refuse(
                Status(code=StatusCode.NOT_IDENTIFIED, detail="first frame must be identify"),
                CLOSE_PROTOCOL_VIOLATION,
                "identify first",
            )
        if frame.version != PROTOCOL_VERSION:
            return await refuse(
                Status(
                    code=StatusCode.UNSUPPORTED_VERSION,
                    detail=f"server speaks {PROTOCOL_VERSION}",
                ),
                CLOSE_PROTOCOL_VIOLATION,
                "unsupported version",
            )
        try:
            profile = self.hub.register_client(frame.name, frame.kind, frame.tags)
        except HubError as err:
            return await refuse(
                Status(code=err.code, detail=err.detail),
                CLOSE_PROTOCOL_VIOLATION,
                "identify rejected",
            )

        token = secrets.token_hex(32)
        sess.profile = profile
        sess.token = token
        sess.state = ConnState.ACTIVE
        self._sessions[profile.id] = sess
        self._tokens[token] = profile.name
        try:
            await ws.send_str(
                encode_frame(Hello(profile=profile, version=PROTOCOL_VERSION, file_token=token))
            )
        except Exception:
            self._retire(sess)
            return False
        return True

    def _handle_frame(self, sess: _Session, text: str) -> None:
        origin = sess.profile
        try:
            frame = decode_frame(text)
        except FrameError as err:
            self._reply(sess, Status(code=StatusCode.MALFORMED_FRAME, detail=str(err)))
            return

        if isinstance(frame, Identify):
            self._reply(
                sess,
                Status(code=StatusCode.ALREADY_IDENTIFIED, detail=f"already {origin.name}"),
            )
        elif isinstance(frame, Message):
            decision = self.hub.route(origin.id, frame.target)
            if decision.status is not StatusCode.OK:
                self._reply(sess, Status(code=decision.status, re=frame.seq))
                return
            relay = encode_frame(
                Relay(origin=origin, target=frame.target, data=frame.data, seq=frame.seq)
            )
            for rid in decision.recipients:
                self._offer_to(rid, relay)
        elif isinstance(frame, CreateGroup):
            code = self.hub.create_group(origin.id, frame.group, frame.policy)
            self._reply(sess, Status(code=code, re=frame.seq))
        elif isinstance(frame, DeleteGroup):
            code = self.hub.delete_group(origin.id, frame.group)
            self._reply(sess, Status(code=code, re=frame.seq))
        elif isinstance(frame, Subscribe):
            code = self.hub.subscribe(origin.id, frame.group)
            self._reply(sess, Status(code=code, re=frame.seq))
        elif isinstance(frame, Unsubscribe):
            code = self.hub.unsubscribe(origin.id, frame.group)
            self._reply(sess, Status(code=code, re=frame.seq))
        elif isinstance(frame, Fetch):
            self._handle_fetch(sess, frame)
        else:
            # a server-originated frame type echoed back at us
            self._reply(
                sess,
                Status(code=StatusCode.MALFORMED_FRAME, detail="not a client frame"),
            )

    def _handle_fetch(self, sess: _Session, frame: Fetch) -> None:
        try:
            found = self.hub.list(sess.profile.id, frame.what, frame.group)
        except HubError as err:
            self._reply(sess, Status(code=err.code, detail=err.detail, re=frame.seq))
            return
        if frame.what is FetchWhat.GROUPS:
            items = [
                {
                    "name": s.name,
                    "owner": s.owner,
                    "policy": s.policy.value,
                    "subscriber_count": s.subscriber_count,
                }
                for s in found
            ]
        else:
            items = [profile_wire(p) for p in found]
        self._reply(sess, ListReply(what=frame.what, items=items, re=frame.seq))

    def _reply(self, sess: _Session, frame) -> None:
        if sess.profile is not None:
            self._offer_to(sess.profile.id, encode_frame(frame))

    # ------------------------------------------------------------ file store

    def _auth_name(self, request: web.Request) -> Optional[str]:
        header = request.headers.get("Authorization", "")
        if not header.startswith("Bearer "):
            return None
        return self._tokens.get(header[len("Bearer ") :].strip())

    def _resolve(self, owner: str, path: str) -> Optional[Path]:
        """Map owner + relative path to a real location, or None if unsafe."""
        if not validate_name(owner):
            return None
        if "\\" in path or "\x00" in path:
            return None
        segments = path.split("/")
        for seg in segments:
            if not seg or seg in (".", "..") or len(seg.encode("utf-8")) > 255:
                return None
        full = self.fs_root.joinpath(owner, *segments)
        root = self.fs_root.resolve()
        try:
            full.resolve().relative_to(root)
        except ValueError:
            return None
        return full

    async def _upload(self, request: web.Request) -> web.Response:
        name = self._auth_name(request)
        if name is None:
            raise web.HTTPUnauthorized(text="missing or unknown file token")
        owner = request.match_info["owner"]
        rel = request.match_info["path"]
        if name != owner:
            raise web.HTTPForbidden(text="token does not own this namespace")
        full = self._resolve(owner, rel)
        if full is None:
            raise web.HTTPBadRequest(text="bad path")
        if full.is_dir():
            raise web.HTTPConflict(text="path collides with an existing directory")
        if (request.content_length or 0) > self.file_limit:
            raise web.HTTPRequestEntityTooLarge(
                max_size=self.file_limit, actual_size=request.content_length
            )
        try:
            full.parent.mkdir(parents=True, exist_ok=True)
        except (FileExistsError, NotADirectoryError):
            raise web.HTTPConflict(text="path collides with an existing file")

        total = 0
        tmp = tempfile.NamedTemporaryFile(dir=full.parent, prefix=".upload-", delete=False)
        try:
            if request.content_type.startswith("multipart/"):
                reader = await request.multipart()
                while True:
                    part = await reader.next()
                    if part is None:
                        break
                    while True:
                        chunk = await part.read_chunk(_CHUNK)
                        if not chunk:
                            break
                        total += len(chunk)
                        if total > self.file_limit:
                            raise web.HTTPRequestEntityTooLarge(
                                max_size=self.file_limit, actual_size=total
                            )
                        tmp.write(chunk)
            else:
                async for chunk in request.content.iter_chunked(_CHUNK):
                    total += len(chunk)
                    if total > self.file_limit:
                        raise web.HTTPRequestEntityTooLarge(
                            max_size=self.file_limit, actual_size=total
                        )
                    tmp.write(chunk)
            tmp.flush()
            tmp.close()
            os.replace(tmp.name, full)
        except BaseException:
            tmp.close()
            try:
                os.unlink(tmp.name)
            except OSError:
                pass
            raise

        entry = {
            "owner": owner,
            "path": rel,
            "size": total,
            "created": datetime.now(timezone.utc).isoformat(),
        }
        return web.json_response(entry, status=201)

    async def _download(self, request: web.Request) -> web.StreamResponse:
        if self._auth_name(request) is None:
            raise web.HTTPUnauthorized(text="missing or unknown file token")
        full = self._resolve(request.match_info["owner"], request.match_info["path"])
        if full is None:
            raise web.HTTPBadRequest(text="bad path")
        if not full.is_file():
            raise web.HTTPNotFound(text="no such file")
        return web.FileResponse(full, chunk_size=_CHUNK)

    async def _delete_file(self, request: web.Request) -> web.Response:
        name = self._auth_name(request)
        if name is None:
            raise web.HTTPUnauthorized(text="missing or unknown file token")
        owner = request.match_info["owner"]
        if name != owner:
            raise web.HTTPForbidden(text="token does not own this namespace")
        full = self._resolve(owner, request.match_info["path"])
        if full is None:
            raise web.HTTPBadRequest(text="bad path")
        if not full.is_file():
            raise web.HTTPNotFound(text="no such file")
        await asyncio.to_thread(full.unlink)
        return web.Response(status=204)
