"""Client library for the hub: sessions, request/reply, service adapters.

A Session owns one websocket connection. A single reader task decodes every
inbound frame; replies resolve the future registered under their ``re`` seq,
relays and events go to the ``on_relay`` / ``on_event`` callbacks. Callbacks
run on the reader task, so they must not block; hand work off to a queue or
a task if it is more than bookkeeping.

ServiceAdapter is the standard shape of a service process: connect, own a
group, publish state at a fixed rate, answer command frames. It reconnects
forever with exponential backoff until told to stop, because a service that
dies with its hub is useless for the long-running deployments this is for.
"""

from __future__ import annotations

import asyncio
import dataclasses
import logging
from typing import Any, Callable, Optional, Union

import aiohttp

from .protocol import (
    BroadcastPolicy,
    ClientKind,
    ClientProfile,
    CreateGroup,
    DeleteGroup,
    Event,
    Fetch,
    FetchWhat,
    Frame,
    FrameError,
    GroupTarget,
    Hello,
    Identify,
    ListReply,
    Message,
    Relay,
    Status,
    StatusCode,
    Subscribe,
    Target,
    Unsubscribe,
    UuidTarget,
    decode_frame,
    encode_frame,
)

__all__ = [
    "Session",
    "ServiceAdapter",
    "SdkError",
    "SessionClosed",
    "RequestTimeout",
    "RequestFailed",
    "HandshakeRefused",
    "NameConflict",
    "VersionRejected",
    "DEFAULT_TIMEOUT",
]

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 5.0

# Uploads below this size may be buffered whole; anything larger should be
# passed as a file object or async iterable so it streams.
STREAM_THRESHOLD = 4 * 1024 * 1024


class SdkError(Exception):
    """Base for everything this module raises on purpose."""


class SessionClosed(SdkError):
    """The connection is gone; the operation cannot complete."""


class RequestTimeout(SdkError):
    """No reply arrived within the deadline."""


class HandshakeRefused(SdkError):
    """The hub answered IDENTIFY with a refusal instead of HELLO."""

    def __init__(self, status: Status) -> None:
        super().__init__(f"{status.code.value}: {status.detail}")
        self.status = status


class NameConflict(HandshakeRefused):
    pass


class VersionRejected(HandshakeRefused):
    pass


class RequestFailed(SdkError):
    """A typed helper got a non-OK status back."""

    def __init__(self, status: Status) -> None:
        super().__init__(f"{status.code.value}: {status.detail}")
        self.status = status


def _http_base(url: str) -> str:
    base = url.rstrip("/")
    if base.startswith("ws://"):
        base = "http://" + base[len("ws://") :]
    elif base.startswith("wss://"):
        base = "https://" + base[len("wss://") :]
    return base


class Session:
    """One identified connection; create with :meth:`connect`."""

    def __init__(
        self,
        http: aiohttp.ClientSession,
        ws: aiohttp.ClientWebSocketResponse,
        hello: Hello,
        base: str,
    ) -> None:
        self._http = http
        self._ws = ws
        self._base = base
        self.profile: ClientProfile = hello.profile
        self.file_token: Optional[str] = hello.file_token
        self.on_relay: Optional[Callable[[Relay], None]] = None
        self.on_event: Optional[Callable[[Event], None]] = None
        self.on_status: Optional[Callable[[Status], None]] = None
        self._pending: dict[int, asyncio.Future] = {}
        self._seq = 0
        self._closed = False
        self._reader = asyncio.create_task(self._read_loop())

    # ------------------------------------------------------------- lifecycle

    @classmethod
    async def connect(
        cls,
        url: str,
        name: str,
        *,
        kind: Union[ClientKind, str] = ClientKind.USER,
        tags: tuple[str, ...] = (),
        timeout: float = DEFAULT_TIMEOUT,
    ) -> "Session":
        """Open, identify, and return an ACTIVE session.

        Transport failures (unreachable host, refused port) surface as the
        underlying OSError/ClientError; protocol refusals raise
        HandshakeRefused subclasses so callers can tell them apart.
        """
        base = _http_base(url)
        kind = ClientKind(kind) if isinstance(kind, str) else kind
        http = aiohttp.ClientSession()
        try:
            ws = await http.ws_connect(f"{base}/ws", max_msg_size=0)
            await ws.send_str(
                encode_frame(Identify(name=name, kind=kind, tags=tuple(tags)))
            )
            msg = await asyncio.wait_for(ws.receive(), timeout)
            if msg.type != aiohttp.WSMsgType.TEXT:
                raise SessionClosed(f"connection ended during handshake ({msg.type})")
            frame = decode_frame(msg.data)
            if isinstance(frame, Hello):
                return cls(http, ws, frame, base)
            if isinstance(frame, Status):
                raise {
                    StatusCode.NAME_CONFLICT: NameConflict,
                    StatusCode.UNSUPPORTED_VERSION: VersionRejected,
                }.get(frame.code, HandshakeRefused)(frame)
            raise SessionClosed(f"unexpected handshake frame {type(frame).__name__}")
        except BaseException:
            await http.close()
            raise

    @property
    def closed(self) -> bool:
        return self._closed

    async def close(self) -> None:
        """Idempotent; pending requests fail with SessionClosed."""
        if not self._closed:
            self._closed = True
            self._fail_pending(SessionClosed("session closed locally"))
            try:
                await self._ws.close()
            except OSError:
                pass
        if self._reader is not asyncio.current_task():
            self._reader.cancel()
            try:
                await self._reader
            except (asyncio.CancelledError, Exception):
                pass
        await self._http.close()

    # ---------------------------------------------------------- raw requests

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    async def _send_frame(self, frame: Frame) -> None:
        if self._closed:
            raise SessionClosed("session is closed")
        try:
            await self._ws.send_str(encode_frame(frame))
        except (OSError, ConnectionResetError) as err:
            raise SessionClosed(f"send failed: {err}") from err

    async def request(
        self, frame: Frame, *, timeout: float = DEFAULT_TIMEOUT
    ) -> Union[Status, ListReply]:
        """Stamp a seq, send, await the matching STATUS or LIST."""
        if self._closed:
            raise SessionClosed("session is closed")
        seq = self._next_seq()
        frame = dataclasses.replace(frame, seq=seq)
        future: asyncio.Future = asyncio.get_running_loop().create_future()
        self._pending[seq] = future
        try:
            await self._send_frame(frame)
            return await asyncio.wait_for(future, timeout)
        except asyncio.TimeoutError:
            raise RequestTimeout(f"no reply to seq {seq} within {timeout}s") from None
        finally:
            self._pending.pop(seq, None)

    async def send(self, target: Target, data: Any) -> int:
        """Fire one MESSAGE at a target; returns the stamped seq."""
        seq = self._next_seq()
        await self._send_frame(Message(target=target, data=data, seq=seq))
        return seq

    async def publish(self, group: str, data: Any) -> int:
        return await self.send(GroupTarget(group), data)

    # --------------------------------------------------------- typed helpers

    async def _expect_ok(self, frame: Frame, timeout: float) -> None:
        reply = await self.request(frame, timeout=timeout)
        if not isinstance(reply, Status) or reply.code is not StatusCode.OK:
            if isinstance(reply, Status):
                raise RequestFailed(reply)
            raise SdkError(f"unexpected reply {type(reply).__name__}")

    async def create_group(
        self,
        group: str,
        policy: BroadcastPolicy = BroadcastPolicy.OWNER_ONLY,
        *,
        timeout: float = DEFAULT_TIMEOUT,
    ) -> None:
        await self._expect_ok(CreateGroup(group=group, policy=policy), timeout)

    async def delete_group(self, group: str, *, timeout: float = DEFAULT_TIMEOUT) -> None:
        await self._expect_ok(DeleteGroup(group=group), timeout)

    async def subscribe(self, group: str, *, timeout: float = DEFAULT_TIMEOUT) -> None:
        await self._expect_ok(Subscribe(group=group), timeout)

    async def unsubscribe(self, group: str, *, timeout: float = DEFAULT_TIMEOUT) -> None:
        await self._expect_ok(Unsubscribe(group=group), timeout)

    async def fetch(
        self,
        what: Union[FetchWhat, str],
        group: Optional[str] = None,
        *,
        timeout: float = DEFAULT_TIMEOUT,
    ) -> list:
        what = FetchWhat(what) if isinstance(what, str) else what
        reply = await self.request(Fetch(what=what, group=group), timeout=timeout)
        if isinstance(reply, Status):
            raise RequestFailed(reply)
        assert isinstance(reply, ListReply)
        return reply.items

    # ------------------------------------------------------------ file store

    def _auth(self) -> dict:
        if self.file_token is None:
            raise SdkError("hub issued no file token")
        return {"Authorization": f"Bearer {self.file_token}"}

    async def upload(self, path: str, data: Any, *, timeout: float = 300.0) -> dict:
        """PUT to the caller's own namespace.

        ``data`` may be bytes, a binary file object, or an async iterable of
        chunks; the latter two stream, which is the right call past a few MiB.
        """
        resp = await self._http.put(
            f"{self._base}/fs/{self.profile.name}/{path}",
            data=data,
            headers=self._auth(),
            timeout=aiohttp.ClientTimeout(total=timeout),
        )
        async with resp:
            if resp.status != 201:
                raise SdkError(f"upload failed: {resp.status} {await resp.text()}")
            return await resp.json()

    async def download(self, owner: str, path: str, *, timeout: float = 300.0) -> bytes:
        resp = await self._http.get(
            f"{self._base}/fs/{owner}/{path}",
            headers=self._auth(),
            timeout=aiohttp.ClientTimeout(total=timeout),
        )
        async with resp:
            if resp.status != 200:
                raise SdkError(f"download failed: {resp.status} {await resp.text()}")
            return await resp.read()

    async def download_to(
        self, owner: str, path: str, destination, *, timeout: float = 300.0
    ) -> int:
        """Stream a file to ``destination`` (a local path); returns bytes written."""
        resp = await self._http.get(
            f"{self._base}/fs/{owner}/{path}",
            headers=self._auth(),
            timeout=aiohttp.ClientTimeout(total=timeout),
        )
        async with resp:
            if resp.status != 200:
                raise SdkError(f"download failed: {resp.status} {await resp.text()}")
            written = 0
            with open(destination, "wb") as sink:
                async for chunk in resp.content.iter_chunked(64 * 1024):
                    sink.write(chunk)
                    written += len(chunk)
            return written

    async def delete_file(self, path: str, *, timeout: float = 60.0) -> None:
        resp = await self._http.delete(
            f"{self._base}/fs/{self.profile.name}/{path}",
            headers=self._auth(),
            timeout=aiohttp.ClientTimeout(total=timeout),
        )
        async with resp:
            if resp.status != 204:
                raise SdkError(f"delete failed: {resp.status} {await resp.text()}")

    # ----------------------------------------------------------- reader side

    async def _read_loop(self) -> None:
        try:
            async for msg in self._ws:
                if msg.type != aiohttp.WSMsgType.TEXT:
                    continue
                try:
                    frame = decode_frame(msg.data)
                except FrameError as err:
                    log.warning("undecodable frame from hub: %s", err)
                    continue
                self._dispatch(frame)
        except Exception:
            log.exception("session reader died")
        finally:
            self._closed = True
            self._fail_pending(SessionClosed("connection lost"))

    def _dispatch(self, frame: Frame) -> None:
        if isinstance(frame, (Status, ListReply)):
            if frame.re is not None:
                future = self._pending.pop(frame.re, None)
                if future is not None and not future.done():
                    future.set_result(frame)
                else:
                    log.debug("reply for seq %s arrived with no waiter", frame.re)
            elif isinstance(frame, Status) and self.on_status is not None:
                self._guarded(self.on_status, frame)
            return
        if isinstance(frame, Relay) and self.on_relay is not None:
            self._guarded(self.on_relay, frame)
        elif isinstance(frame, Event) and self.on_event is not None:
            self._guarded(self.on_event, frame)

    @staticmethod
    def _guarded(handler: Callable, frame: Frame) -> None:
        try:
            handler(frame)
        except Exception:
            log.exception("frame handler raised")

    def _fail_pending(self, err: Exception) -> None:
        pending, self._pending = self._pending, {}
        for future in pending.values():
            if not future.done():
                future.set_exception(err)


class ServiceAdapter:
    """Publish state to an owned group at a fixed rate and answer commands.

    ``produce`` runs once per tick and returns the payload to publish (None
    publishes nothing). ``handle`` gets the data of each inbound RELAY and
    returns a reply payload for the sender (None stays silent). Both run on
    the adapter's loop, serialized with the ticks.
    """

    def __init__(
        self,
        url: str,
        name: str,
        group: str,
        produce: Callable[[], Optional[dict]],
        handle: Callable[[Any], Optional[dict]],
        *,
        rate: float = 50.0,
        tags: tuple[str, ...] = (),
        backoff_base: float = 0.5,
        backoff_cap: float = 30.0,
    ) -> None:
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.url = url
        self.name = name
        self.group = group
        self.produce = produce
        self.handle = handle
        self.rate = rate
        self.tags = tuple(tags)
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self._stop = asyncio.Event()
        # observability, mostly for tests and the CLI status line
        self.published = 0
        self.connects = 0

    @classmethod
    def for_service(
        cls, url: str, service, *, name: Optional[str] = None, **kwargs
    ) -> "ServiceAdapter":
        """Wire up a physics service (anything with kind/group/advance/dispatch)."""
        return cls(
            url,
            name or service.kind,
            service.group,
            service.advance,
            service.dispatch,
            **kwargs,
        )

    def stop(self) -> None:
        self._stop.set()

    async def serve(self) -> None:
        """Run until :meth:`stop`; reconnects with exponential backoff."""
        backoff = self.backoff_base
        while not self._stop.is_set():
            try:
                session = await Session.connect(
                    self.url, self.name, kind=ClientKind.SERVICE, tags=self.tags
                )
            except (SdkError, OSError, aiohttp.ClientError) as err:
                log.info("connect failed (%s); retrying in %.1fs", err, backoff)
                if await self._pause(backoff):
                    return
                backoff = min(backoff * 2, self.backoff_cap)
                continue
            try:
                self.connects += 1
                await session.create_group(self.group, BroadcastPolicy.OWNER_ONLY)
                backoff = self.backoff_base
                await self._pump(session)
                return  # stopped cleanly
            except (SdkError, OSError, aiohttp.ClientError) as err:
                log.info("session dropped (%s); reconnecting in %.1fs", err, backoff)
            finally:
                await session.close()
            if await self._pause(backoff):
                return
            backoff = min(backoff * 2, self.backoff_cap)

    async def _pause(self, delay: float) -> bool:
        """Sleep, but wake immediately on stop; True means stop was set."""
        try:
            await asyncio.wait_for(self._stop.wait(), delay)
            return True
        except asyncio.TimeoutError:
            return False

    async def _pump(self, session: Session) -> None:
        inbox: asyncio.Queue[Relay] = asyncio.Queue()
        session.on_relay = inbox.put_nowait
        loop = asyncio.get_running_loop()
        start = loop.time()
        ticks = 0
        while not self._stop.is_set():
            while not inbox.empty():
                relay = inbox.get_nowait()
                reply = self.handle(relay.data)
                if reply is not None:
                    await session.send(UuidTarget(relay.origin.id), reply)
            payload = self.produce()
            if payload is not None:
                await session.publish(self.group, payload)
                self.published += 1
            ticks += 1
            # absolute deadlines: lateness in one tick shortens the next
            # sleep instead of shifting the whole schedule
            delay = start + ticks / self.rate - loop.time()
            if delay > 0 and await self._pause(delay):
                return
