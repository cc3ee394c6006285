"""Wire vocabulary for the hub: typed frames and their canonical JSON codec.

One frame travels per WebSocket text message.  Encoding is canonical: the
``type`` discriminator comes first, the remaining keys are alphabetical,
nested payload objects have their keys sorted, and separators are compact,
so equal frames always serialize to identical bytes.  Decoding is tolerant:
key order is free and unknown keys are ignored, but the ``type`` vocabulary
itself is closed and field types are checked strictly.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional, Union

PROTOCOL_VERSION = "1.0"

NAME_RE = re.compile(r"^[A-Za-z0-9_\-]{1,64}$")
UUID_RE = re.compile(r"^[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}$")

MAX_TAGS = 16
MAX_TAG_LEN = 32
MAX_SEQ = 2**64 - 1


class ClientKind(Enum):
    USER = "user"
    SERVICE = "service"


class BroadcastPolicy(Enum):
    OWNER_ONLY = "owner_only"
    SUBSCRIBERS = "subscribers"
    ANYONE = "anyone"


class StatusCode(Enum):
    OK = "ok"
    NO_SUCH_NAME = "no_such_name"
    NO_SUCH_UUID = "no_such_uuid"
    NO_SUCH_GROUP = "no_such_group"
    NAME_CONFLICT = "name_conflict"
    GROUP_ALREADY_EXISTS = "group_already_exists"
    NOT_GROUP_OWNER = "not_group_owner"
    BAD_PERMISSION = "bad_permission"
    NOT_IDENTIFIED = "not_identified"
    ALREADY_IDENTIFIED = "already_identified"
    UNSUPPORTED_VERSION = "unsupported_version"
    MALFORMED_FRAME = "malformed_frame"


class FetchWhat(Enum):
    CLIENTS = "clients"
    GROUPS = "groups"
    SUBSCRIBERS = "subscribers"


class EventKind(Enum):
    CLIENT_JOINED = "client_joined"
    CLIENT_LEFT = "client_left"
    GROUP_CREATED = "group_created"
    GROUP_DELETED = "group_deleted"


class FrameError(ValueError):
    """A frame that cannot be decoded; reported as MALFORMED_FRAME on the wire."""

    code = StatusCode.MALFORMED_FRAME


def validate_name(candidate: object) -> bool:
    """True iff candidate is a legal client or group name (1-64 of [A-Za-z0-9_-])."""
    return isinstance(candidate, str) and NAME_RE.fullmatch(candidate) is not None


def validate_uuid(candidate: object) -> bool:
    """True iff candidate is a lowercase hyphenated UUID string."""
    return isinstance(candidate, str) and UUID_RE.fullmatch(candidate) is not None


@dataclass(frozen=True)
class ClientProfile:
    """Identity of a connected participant; the id is always hub-assigned."""

    id: str
    name: str
    kind: ClientKind
    tags: tuple[str, ...] = ()


# -- Targets ------------------------------------------------------------------


@dataclass(frozen=True)
class UuidTarget:
    id: str


@dataclass(frozen=True)
class NameTarget:
    name: str


@dataclass(frozen=True)
class GroupTarget:
    group: str


@dataclass(frozen=True)
class AllTarget:
    pass


ALL = AllTarget()

Target = Union[UuidTarget, NameTarget, GroupTarget, AllTarget]


# -- Client -> hub frames -----------------------------------------------------


@dataclass(frozen=True)
class Identify:
    name: str
    kind: ClientKind
    tags: tuple[str, ...] = ()
    version: str = PROTOCOL_VERSION


@dataclass(frozen=True)
class Message:
    """An envelope relayed to the target; ``data`` is an opaque JSON tree.

    ``content_hint`` is a reserved, unvalidated label for the payload kind.
    """

    target: Target
    data: Any
    seq: int
    content_hint: Optional[str] = None


@dataclass(frozen=True)
class CreateGroup:
    group: str
    policy: BroadcastPolicy
    seq: Optional[int] = None


@dataclass(frozen=True)
class DeleteGroup:
    group: str
    seq: Optional[int] = None


@dataclass(frozen=True)
class Subscribe:
    group: str
    seq: Optional[int] = None


@dataclass(frozen=True)
class Unsubscribe:
    group: str
    seq: Optional[int] = None


@dataclass(frozen=True)
class Fetch:
    what: FetchWhat
    group: Optional[str] = None
    seq: Optional[int] = None


# -- Hub -> client frames -----------------------------------------------------


@dataclass(frozen=True)
class Hello:
    """Handshake reply; ``file_token`` authorizes the HTTP file store."""

    profile: ClientProfile
    version: str
    file_token: Optional[str] = None


@dataclass(frozen=True)
class Relay:
    """A relayed envelope; ``origin`` is stamped by the hub, never the sender."""

    origin: ClientProfile
    target: Target
    data: Any
    seq: int


@dataclass(frozen=True)
class Status:
    code: StatusCode
    detail: str = ""
    re: Optional[int] = None


@dataclass(frozen=True)
class ListReply:
    what: FetchWhat
    items: list
    re: Optional[int] = None


@dataclass(frozen=True)
class Event:
    kind: EventKind
    subject: str


Frame = Union[
    Identify,
    Message,
    CreateGroup,
    DeleteGroup,
    Subscribe,
    Unsubscribe,
    Fetch,
    Hello,
    Relay,
    Status,
    ListReply,
    Event,
]


# -- Encoding -----------------------------------------------------------------


def _canon(value: Any) -> Any:
    """Return a copy of a payload tree with object keys sorted recursively."""
    if isinstance(value, dict):
        out = {}
        for key in sorted(value):
            if not isinstance(key, str):
                raise ValueError(f"payload object keys must be strings, got {key!r}")
            out[key] = _canon(value[key])
        return out
    if isinstance(value, (list, tuple)):
        return [_canon(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        raise ValueError("payload numbers must be finite")
    if value is None or isinstance(value, (str, int, float, bool)):
        return value
    raise ValueError(f"payload value is not JSON-representable: {type(value).__name__}")


def _target_obj(target: Target) -> dict:
    if isinstance(target, UuidTarget):
        return {"type": "uuid", "id": target.id}
    if isinstance(target, NameTarget):
        return {"type": "name", "name": target.name}
    if isinstance(target, GroupTarget):
        return {"type": "group", "group": target.group}
    if isinstance(target, AllTarget):
        return {"type": "all"}
    raise ValueError(f"not a target: {target!r}")


def _profile_obj(profile: ClientProfile) -> dict:
    return {
        "id": profile.id,
        "kind": profile.kind.value,
        "name": profile.name,
        "tags": list(profile.tags),
    }


def profile_wire(profile: ClientProfile) -> dict:
    """Plain-dict form of a profile, as it appears inside frames."""
    return _profile_obj(profile)


def encode_frame(frame: Frame) -> str:
    """Encode a frame to its canonical single-line JSON form."""
    obj: dict[str, Any]
    if isinstance(frame, Identify):
        obj = {
            "type": "identify",
            "kind": frame.kind.value,
            "name": frame.name,
            "tags": list(frame.tags),
            "version": frame.version,
        }
    elif isinstance(frame, Message):
        obj = {"type": "message"}
        if frame.content_hint is not None:
            obj["content_hint"] = frame.content_hint
        obj["data"] = _canon(frame.data)
        obj["seq"] = frame.seq
        obj["target"] = _target_obj(frame.target)
    elif isinstance(frame, CreateGroup):
        obj = {"type": "create_group", "group": frame.group, "policy": frame.policy.value}
        if frame.seq is not None:
            obj["seq"] = frame.seq
    elif isinstance(frame, DeleteGroup):
        obj = {"type": "delete_group", "group": frame.group}
        if frame.seq is not None:
            obj["seq"] = frame.seq
    elif isinstance(frame, Subscribe):
        obj = {"type": "subscribe", "group": frame.group}
        if frame.seq is not None:
            obj["seq"] = frame.seq
    elif isinstance(frame, Unsubscribe):
        obj = {"type": "unsubscribe", "group": frame.group}
        if frame.seq is not None:
            obj["seq"] = frame.seq
    elif isinstance(frame, Fetch):
        obj = {"type": "fetch"}
        if frame.group is not None:
            obj["group"] = frame.group
        if frame.seq is not None:
            obj["seq"] = frame.seq
        obj["what"] = frame.what.value
    elif isinstance(frame, Hello):
        obj = {"type": "hello"}
        if frame.file_token is not None:
            obj["file_token"] = frame.file_token
        obj["profile"] = _profile_obj(frame.profile)
        obj["version"] = frame.version
    elif isinstance(frame, Relay):
        obj = {
            "type": "relay",
            "data": _canon(frame.data),
            "origin": _profile_obj(frame.origin),
            "seq": frame.seq,
            "target": _target_obj(frame.target),
        }
    elif isinstance(frame, Status):
        obj = {"type": "status", "code": frame.code.value, "detail": frame.detail}
        if frame.re is not None:
            obj["re"] = frame.re
    elif isinstance(frame, ListReply):
        obj = {"type": "list", "items": _canon(frame.items)}
        if frame.re is not None:
            obj["re"] = frame.re
        obj["what"] = frame.what.value
    elif isinstance(frame, Event):
        obj = {"type": "event", "kind": frame.kind.value, "subject": frame.subject}
    else:
        raise ValueError(f"not a frame: {frame!r}")
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


# -- Decoding -----------------------------------------------------------------


def _reject_constant(_value: str) -> None:
    raise FrameError("non-finite numbers are not allowed")


def _require(obj: dict, key: str) -> Any:
    if key not in obj:
        raise FrameError(f"missing field {key!r}")
    return obj[key]


def _str_field(obj: dict, key: str) -> str:
    value = _require(obj, key)
    if not isinstance(value, str):
        raise FrameError(f"field {key!r} must be a string")
    return value


def _name_field(obj: dict, key: str) -> str:
    value = _str_field(obj, key)
    if not validate_name(value):
        raise FrameError(f"field {key!r} is not a valid name")
    return value


def _uuid_field(obj: dict, key: str) -> str:
    value = _str_field(obj, key)
    if not validate_uuid(value):
        raise FrameError(f"field {key!r} is not a valid uuid")
    return value


def _seq_value(value: Any, key: str = "seq") -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise FrameError(f"field {key!r} must be an unsigned integer")
    if not 0 <= value <= MAX_SEQ:
        raise FrameError(f"field {key!r} out of range")
    return value


def _opt_seq(obj: dict, key: str = "seq") -> Optional[int]:
    if key not in obj or obj[key] is None:
        return None
    return _seq_value(obj[key], key)


def _enum_field(obj: dict, key: str, enum_cls: type) -> Any:
    value = _str_field(obj, key)
    try:
        return enum_cls(value)
    except ValueError:
        raise FrameError(f"unknown {key!r} value {value!r}") from None


def _tags_field(obj: dict) -> tuple[str, ...]:
    value = _require(obj, "tags")
    if not isinstance(value, list):
        raise FrameError("field 'tags' must be a list")
    if len(value) > MAX_TAGS:
        raise FrameError(f"at most {MAX_TAGS} tags allowed")
    for tag in value:
        if not isinstance(tag, str) or len(tag) > MAX_TAG_LEN:
            raise FrameError("tags must be strings of at most 32 chars")
    return tuple(value)


def _target_field(obj: dict, key: str = "target") -> Target:
    value = _require(obj, key)
    if not isinstance(value, dict):
        raise FrameError(f"field {key!r} must be an object")
    kind = value.get("type")
    if kind == "uuid":
        return UuidTarget(_uuid_field(value, "id"))
    if kind == "name":
        return NameTarget(_name_field(value, "name"))
    if kind == "group":
        return GroupTarget(_name_field(value, "group"))
    if kind == "all":
        return ALL
    raise FrameError(f"unknown target type {kind!r}")


def _profile_field(obj: dict, key: str) -> ClientProfile:
    value = _require(obj, key)
    if not isinstance(value, dict):
        raise FrameError(f"field {key!r} must be an object")
    return ClientProfile(
        id=_uuid_field(value, "id"),
        name=_name_field(value, "name"),
        kind=_enum_field(value, "kind", ClientKind),
        tags=_tags_field(value),
    )


def _opt_str(obj: dict, key: str) -> Optional[str]:
    if key not in obj or obj[key] is None:
        return None
    value = obj[key]
    if not isinstance(value, str):
        raise FrameError(f"field {key!r} must be a string")
    return value


def decode_frame(text: str) -> Frame:
    """Decode one frame from JSON text; raises FrameError on any defect."""
    try:
        obj = json.loads(text, parse_constant=_reject_constant)
    except FrameError:
        raise
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise FrameError(f"not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise FrameError("frame must be a JSON object")
    tag = obj.get("type")
    if not isinstance(tag, str):
        raise FrameError("missing 'type' discriminator")

    if tag == "identify":
        return Identify(
            name=_name_field(obj, "name"),
            kind=_enum_field(obj, "kind", ClientKind),
            tags=_tags_field(obj),
            version=_str_field(obj, "version"),
        )
    if tag == "message":
        return Message(
            target=_target_field(obj),
            data=_require(obj, "data"),
            seq=_seq_value(_require(obj, "seq")),
            content_hint=_opt_str(obj, "content_hint"),
        )
    if tag == "create_group":
        return CreateGroup(
            group=_name_field(obj, "group"),
            policy=_enum_field(obj, "policy", BroadcastPolicy),
            seq=_opt_seq(obj),
        )
    if tag == "delete_group":
        return DeleteGroup(group=_name_field(obj, "group"), seq=_opt_seq(obj))
    if tag == "subscribe":
        return Subscribe(group=_name_field(obj, "group"), seq=_opt_seq(obj))
    if tag == "unsubscribe":
        return Unsubscribe(group=_name_field(obj, "group"), seq=_opt_seq(obj))
    if tag == "fetch":
        what = _enum_field(obj, "what", FetchWhat)
        group = None
        if obj.get("group") is not None:
            group = _name_field(obj, "group")
        return Fetch(what=what, group=group, seq=_opt_seq(obj))
    if tag == "hello":
        return Hello(
            profile=_profile_field(obj, "profile"),
            version=_str_field(obj, "version"),
            file_token=_opt_str(obj, "file_token"),
        )
    if tag == "relay":
        return Relay(
            origin=_profile_field(obj, "origin"),
            target=_target_field(obj),
            data=_require(obj, "data"),
            seq=_seq_value(_require(obj, "seq")),
        )
    if tag == "status":
        return Status(
            code=_enum_field(obj, "code", StatusCode),
            detail=_str_field(obj, "detail"),
            re=_opt_seq(obj, "re"),
        )
    if tag == "list":
        items = _require(obj, "items")
        if not isinstance(items, list):
            raise FrameError("field 'items' must be a list")
        return ListReply(what=_enum_field(obj, "what", FetchWhat), items=items, re=_opt_seq(obj, "re"))
    if tag == "event":
        return Event(kind=_enum_field(obj, "kind", EventKind), subject=_str_field(obj, "subject"))
    raise FrameError(f"unknown frame type {tag!r}")
