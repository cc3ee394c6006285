"""In-memory routing core: client registry, groups, permissions, fanout.

Transport-independent.  All operations take and return plain values; the
surrounding gateway owns sockets and queues.  Every mutating or routing call
runs under one lock, so callers on any thread observe a consistent registry.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field
from typing import Callable, Optional

from .protocol import (
    BroadcastPolicy,
    ClientKind,
    ClientProfile,
    EventKind,
    FetchWhat,
    StatusCode,
    Target,
    AllTarget,
    GroupTarget,
    NameTarget,
    UuidTarget,
    validate_name,
)


class HubError(Exception):
    """Registry operation failure carrying the wire status code."""

    def __init__(self, code: StatusCode, detail: str = ""):
        super().__init__(detail or code.value)
        self.code = code
        self.detail = detail or code.value


@dataclass
class Group:
    name: str
    owner: str  # client id
    policy: BroadcastPolicy
    subscribers: set[str] = field(default_factory=set)


@dataclass(frozen=True)
class GroupSummary:
    name: str
    owner: str  # owner's client name
    policy: BroadcastPolicy
    subscriber_count: int


@dataclass(frozen=True)
class RoutingDecision:
    recipients: frozenset[str]
    status: StatusCode


@dataclass(frozen=True)
class Notification:
    """A presence or group event the gateway should fan out as an EVENT frame."""

    kind: EventKind
    subject: str
    recipients: frozenset[str]


EventSink = Callable[[Notification], None]

_EMPTY: frozenset[str] = frozenset()


class Hub:
    """The registry state machine behind the relay.

    ``on_event`` is called synchronously, inside the registry lock, for every
    presence/group notification; keep sinks non-blocking.
    """

    def __init__(self, on_event: Optional[EventSink] = None):
        self._lock = threading.RLock()
        self._clients: dict[str, ClientProfile] = {}
        self._names: dict[str, str] = {}
        self._groups: dict[str, Group] = {}
        self._on_event = on_event

    def _emit(self, kind: EventKind, subject: str, recipients: frozenset[str]) -> None:
        if self._on_event is not None and recipients:
            self._on_event(Notification(kind, subject, recipients))

    # -- registry -------------------------------------------------------------

    def register_client(
        self, name: str, kind: ClientKind, tags: tuple[str, ...] = ()
    ) -> ClientProfile:
        """Mint a fresh id and insert the client; USER and SERVICE take the
        identical path and start with identical rights."""
        if not validate_name(name):
            raise ValueError(f"invalid client name: {name!r}")
        with self._lock:
            if name in self._names:
                raise HubError(StatusCode.NAME_CONFLICT, f"name {name!r} is taken")
            cid = str(uuid.uuid4())
            while cid in self._clients:  # vanishing odds, but cheap to rule out
                cid = str(uuid.uuid4())
            profile = ClientProfile(id=cid, name=name, kind=kind, tags=tuple(tags))
            self._clients[cid] = profile
            self._names[name] = cid
            others = frozenset(self._clients) - {cid}
            self._emit(EventKind.CLIENT_JOINED, name, others)
            return profile

    def unregister_client(self, client_id: str) -> set[str]:
        """Remove a client and everything that hangs off it.

        Groups owned by the client are deleted (their subscribers are told);
        the name is freed; everyone remaining sees CLIENT_LEFT.  Returns the
        names of the deleted groups.
        """
        with self._lock:
            profile = self._clients.get(client_id)
            if profile is None:
                raise HubError(StatusCode.NO_SUCH_UUID, "unknown client id")
            del self._clients[client_id]
            del self._names[profile.name]
            deleted: dict[str, frozenset[str]] = {}
            for gname, group in list(self._groups.items()):
                group.subscribers.discard(client_id)
                if group.owner == client_id:
                    deleted[gname] = frozenset(group.subscribers)
                    del self._groups[gname]
            for gname, subs in deleted.items():
                self._emit(EventKind.GROUP_DELETED, gname, subs)
            self._emit(EventKind.CLIENT_LEFT, profile.name, frozenset(self._clients))
            return set(deleted)

    # -- groups ---------------------------------------------------------------

    def create_group(self, requester: str, name: str, policy: BroadcastPolicy) -> StatusCode:
        with self._lock:
            if requester not in self._clients:
                return StatusCode.NOT_IDENTIFIED
            if name in self._groups:
                return StatusCode.GROUP_ALREADY_EXISTS
            self._groups[name] = Group(name=name, owner=requester, policy=policy)
            self._emit(EventKind.GROUP_CREATED, name, frozenset(self._clients) - {requester})
            return StatusCode.OK

    def delete_group(self, requester: str, name: str) -> StatusCode:
        with self._lock:
            if requester not in self._clients:
                return StatusCode.NOT_IDENTIFIED
            group = self._groups.get(name)
            if group is None:
                return StatusCode.NO_SUCH_GROUP
            if group.owner != requester:
                return StatusCode.NOT_GROUP_OWNER
            del self._groups[name]
            self._emit(EventKind.GROUP_DELETED, name, frozenset(group.subscribers) - {requester})
            return StatusCode.OK

    def subscribe(self, requester: str, group: str) -> StatusCode:
        with self._lock:
            if requester not in self._clients:
                return StatusCode.NOT_IDENTIFIED
            g = self._groups.get(group)
            if g is None:
                return StatusCode.NO_SUCH_GROUP
            g.subscribers.add(requester)
            return StatusCode.OK

    def unsubscribe(self, requester: str, group: str) -> StatusCode:
        # unsubscribing while not subscribed is a no-op by design
        with self._lock:
            if requester not in self._clients:
                return StatusCode.NOT_IDENTIFIED
            g = self._groups.get(group)
            if g is None:
                return StatusCode.NO_SUCH_GROUP
            g.subscribers.discard(requester)
            return StatusCode.OK

    # -- routing --------------------------------------------------------------

    def route(self, origin: str, target: Target) -> RoutingDecision:
        """Compute the recipient set for a message; payloads are never seen here."""
        with self._lock:
            if origin not in self._clients:
                return RoutingDecision(_EMPTY, StatusCode.NOT_IDENTIFIED)
            if isinstance(target, UuidTarget):
                if target.id not in self._clients:
                    return RoutingDecision(_EMPTY, StatusCode.NO_SUCH_UUID)
                return RoutingDecision(frozenset({target.id}), StatusCode.OK)
            if isinstance(target, NameTarget):
                cid = self._names.get(target.name)
                if cid is None:
                    return RoutingDecision(_EMPTY, StatusCode.NO_SUCH_NAME)
                return RoutingDecision(frozenset({cid}), StatusCode.OK)
            if isinstance(target, GroupTarget):
                group = self._groups.get(target.group)
                if group is None:
                    return RoutingDecision(_EMPTY, StatusCode.NO_SUCH_GROUP)
                if group.policy is BroadcastPolicy.OWNER_ONLY:
                    allowed = origin == group.owner
                elif group.policy is BroadcastPolicy.SUBSCRIBERS:
                    allowed = origin in group.subscribers or origin == group.owner
                else:
                    allowed = True
                if not allowed:
                    return RoutingDecision(_EMPTY, StatusCode.BAD_PERMISSION)
                return RoutingDecision(frozenset(group.subscribers) - {origin}, StatusCode.OK)
            if isinstance(target, AllTarget):
                return RoutingDecision(frozenset(self._clients) - {origin}, StatusCode.OK)
            raise ValueError(f"not a target: {target!r}")

    # -- introspection --------------------------------------------------------

    def list(self, requester: str, what: FetchWhat, group: Optional[str] = None) -> list:
        with self._lock:
            if requester not in self._clients:
                raise HubError(StatusCode.NOT_IDENTIFIED)
            if what is FetchWhat.CLIENTS:
                return sorted(self._clients.values(), key=lambda p: p.name)
            if what is FetchWhat.GROUPS:
                return [
                    GroupSummary(
                        name=g.name,
                        owner=self._clients[g.owner].name,
                        policy=g.policy,
                        subscriber_count=len(g.subscribers),
                    )
                    for g in sorted(self._groups.values(), key=lambda g: g.name)
                ]
            if what is FetchWhat.SUBSCRIBERS:
                g = self._groups.get(group or "")
                if g is None:
                    raise HubError(StatusCode.NO_SUCH_GROUP, f"no group {group!r}")
                return sorted((self._clients[cid] for cid in g.subscribers), key=lambda p: p.name)
            raise ValueError(f"not a fetch kind: {what!r}")

    def profile(self, client_id: str) -> Optional[ClientProfile]:
        with self._lock:
            return self._clients.get(client_id)

    def snapshot(self) -> tuple[dict, dict, dict]:
        """Deep-enough copy of (clients, names, groups) for oracles and checks."""
        with self._lock:
            groups = {
                name: Group(g.name, g.owner, g.policy, set(g.subscribers))
                for name, g in self._groups.items()
            }
            return dict(self._clients), dict(self._names), groups
