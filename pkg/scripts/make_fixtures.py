#!/usr/bin/env python3
"""Regenerate the golden frame fixtures shared by the server and web client.

Writes fixtures/frames.jsonl (one canonical frame per line) and
fixtures/frames.notes.txt (one description per line, same order).

Numbers are chosen to serialize identically in Python and JavaScript:
integers stay below 2**53 and floats avoid integer values (1.0 prints as
"1.0" in Python but "1" in JS).
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from concierge.protocol import (  # noqa: E402
    ALL,
    BroadcastPolicy,
    ClientKind,
    ClientProfile,
    CreateGroup,
    DeleteGroup,
    Event,
    EventKind,
    Fetch,
    FetchWhat,
    GroupTarget,
    Hello,
    Identify,
    ListReply,
    Message,
    NameTarget,
    Relay,
    Status,
    StatusCode,
    Subscribe,
    Unsubscribe,
    UuidTarget,
    encode_frame,
)

UID_A = "6f1c0f3a-2a1b-4c3d-9e8f-001122334455"
UID_B = "0a0b0c0d-1111-4222-8333-445566778899"

PROFILE_A = ClientProfile(id=UID_A, name="alice", kind=ClientKind.USER, tags=("teacher",))
PROFILE_B = ClientProfile(id=UID_B, name="physics_engine", kind=ClientKind.SERVICE, tags=())

FIXTURES = [
    (Identify(name="physics_engine", kind=ClientKind.SERVICE, tags=(), version="1.0"),
     "identify: service with no tags"),
    (Identify(name="alice", kind=ClientKind.USER, tags=("teacher", "astro-101"), version="1.0"),
     "identify: user with tags"),
    (Message(target=ALL, data={}, seq=0),
     "message: broadcast with empty payload object"),
    (Message(target=UuidTarget(UID_B), data={"cmd": "fetch_spec"}, seq=7),
     "message: direct by uuid, command payload"),
    (Message(target=NameTarget("physics_engine"),
             data={"cmd": "spawn", "position": [0.5, -2.25]}, seq=8),
     "message: direct by name, nested array payload with fractional floats"),
    (Message(target=GroupTarget("physics_engine"),
             data={"tick": 41, "entities": [{"id": UID_A, "position": [1.5, -0.25]}]}, seq=9),
     "message: group fanout, stream-shaped payload"),
    (Message(target=ALL, data={"note": "héllo wörld ✓"}, seq=10),
     "message: unicode text payload (utf-8, not ascii-escaped)"),
    (Message(target=ALL, data={"b": 1, "a": 2, "c": {"y": True, "x": None}}, seq=11),
     "message: payload object keys are sorted recursively"),
    (Message(target=ALL, data=[1, "two", 3.5, False, None], seq=12),
     "message: payload may be any JSON tree, arrays keep order"),
    (Message(target=ALL, data={"big": 9007199254740991}, seq=9007199254740991),
     "message: largest integer exact in both codecs (2^53-1)"),
    (Message(target=ALL, data={"g": 6.674e-11}, seq=13, content_hint="physics/constants"),
     "message: reserved content_hint field present; exponent float"),
    (CreateGroup(group="physics_engine", policy=BroadcastPolicy.OWNER_ONLY, seq=1),
     "create_group: owner-only streaming channel"),
    (CreateGroup(group="chat", policy=BroadcastPolicy.ANYONE),
     "create_group: open channel, no correlation seq"),
    (CreateGroup(group="team-rocket", policy=BroadcastPolicy.SUBSCRIBERS, seq=2),
     "create_group: subscribers-only policy"),
    (DeleteGroup(group="chat", seq=3),
     "delete_group"),
    (Subscribe(group="physics_engine", seq=4),
     "subscribe"),
    (Unsubscribe(group="physics_engine", seq=5),
     "unsubscribe"),
    (Fetch(what=FetchWhat.CLIENTS, seq=6),
     "fetch: client roster"),
    (Fetch(what=FetchWhat.GROUPS),
     "fetch: group table, no seq"),
    (Fetch(what=FetchWhat.SUBSCRIBERS, group="physics_engine", seq=14),
     "fetch: subscribers of one group"),
    (Hello(profile=PROFILE_A, version="1.0",
           file_token="9f" * 32),
     "hello: profile echo plus file-store token"),
    (Hello(profile=PROFILE_B, version="1.0"),
     "hello: minimal, no file token"),
    (Relay(origin=PROFILE_B, target=GroupTarget("physics_engine"),
           data={"tick": 42, "ts": 1724318000.125,
                 "entities": [{"id": UID_A, "position": [0.125, 7.5]}]},
           seq=1041),
     "relay: hub-stamped origin, streamed state payload"),
    (Relay(origin=PROFILE_A, target=UuidTarget(UID_B), data={"ok": True, "id": UID_A}, seq=15),
     "relay: command reply payload"),
    (Status(code=StatusCode.OK, detail="", re=4),
     "status: success with correlation"),
    (Status(code=StatusCode.NO_SUCH_GROUP, detail="no group 'nope'", re=16),
     "status: routing error"),
    (Status(code=StatusCode.MALFORMED_FRAME, detail="not valid JSON"),
     "status: decode failure, no correlation"),
    (Status(code=StatusCode.BAD_PERMISSION, detail="policy owner_only", re=17),
     "status: permission denied"),
    (ListReply(what=FetchWhat.CLIENTS,
               items=[{"id": UID_A, "kind": "user", "name": "alice", "tags": ["teacher"]},
                      {"id": UID_B, "kind": "service", "name": "physics_engine", "tags": []}],
               re=6),
     "list: client roster"),
    (ListReply(what=FetchWhat.GROUPS,
               items=[{"name": "physics_engine", "owner": "physics_engine",
                       "policy": "owner_only", "subscriber_count": 3}],
               re=18),
     "list: group table"),
    (ListReply(what=FetchWhat.SUBSCRIBERS, items=[], re=19),
     "list: empty subscriber set"),
    (Event(kind=EventKind.CLIENT_JOINED, subject="alice"),
     "event: presence join"),
    (Event(kind=EventKind.CLIENT_LEFT, subject="alice"),
     "event: presence leave"),
    (Event(kind=EventKind.GROUP_CREATED, subject="physics_engine"),
     "event: group created"),
    (Event(kind=EventKind.GROUP_DELETED, subject="physics_engine"),
     "event: group deleted"),
]


def main() -> None:
    root = pathlib.Path(__file__).resolve().parents[1]
    out = root / "fixtures"
    out.mkdir(exist_ok=True)
    lines = []
    notes = []
    for i, (frame, note) in enumerate(FIXTURES):
        lines.append(encode_frame(frame))
        notes.append(f"{i:02d}: {note}")
    (out / "frames.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out / "frames.notes.txt").write_text("\n".join(notes) + "\n", encoding="utf-8")
    print(f"wrote {len(lines)} fixtures to {out/'frames.jsonl'}")


if __name__ == "__main__":
    main()
