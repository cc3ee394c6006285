"""Shared strategies, oracles, and harness helpers for the test suite."""

from __future__ import annotations

import asyncio
import json
import random
import string
from typing import Any

from hypothesis import strategies as st

from concierge.protocol import (
    ALL,
    AllTarget,
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
)

NAME_ALPHABET = string.ascii_letters + string.digits + "_-"

names = st.text(alphabet=NAME_ALPHABET, min_size=1, max_size=64)
uuids = st.uuids(version=4).map(str)
tags = st.lists(st.text(max_size=32), max_size=16).map(tuple)
seqs = st.integers(min_value=0, max_value=2**64 - 1)
opt_seqs = st.none() | seqs

# Payload trees are JSON values: object keys are strings, numbers finite.
json_values = st.recursive(
    st.none()
    | st.booleans()
    | st.integers(min_value=-(2**63), max_value=2**63)
    | st.floats(allow_nan=False, allow_infinity=False)
    | st.text(max_size=20),
    lambda children: st.lists(children, max_size=4)
    | st.dictionaries(st.text(max_size=10), children, max_size=4),
    max_leaves=12,
)

targets = st.one_of(
    uuids.map(UuidTarget),
    names.map(NameTarget),
    names.map(GroupTarget),
    st.just(ALL),
)

profiles = st.builds(
    ClientProfile,
    id=uuids,
    name=names,
    kind=st.sampled_from(ClientKind),
    tags=tags,
)

frames = st.one_of(
    st.builds(Identify, name=names, kind=st.sampled_from(ClientKind), tags=tags, version=st.text(max_size=16)),
    st.builds(Message, target=targets, data=json_values, seq=seqs, content_hint=st.none() | st.text(max_size=32)),
    st.builds(CreateGroup, group=names, policy=st.sampled_from(BroadcastPolicy), seq=opt_seqs),
    st.builds(DeleteGroup, group=names, seq=opt_seqs),
    st.builds(Subscribe, group=names, seq=opt_seqs),
    st.builds(Unsubscribe, group=names, seq=opt_seqs),
    st.builds(Fetch, what=st.sampled_from(FetchWhat), group=st.none() | names, seq=opt_seqs),
    st.builds(Hello, profile=profiles, version=st.text(max_size=16), file_token=st.none() | st.text(alphabet="0123456789abcdef", min_size=64, max_size=64)),
    st.builds(Relay, origin=profiles, target=targets, data=json_values, seq=seqs),
    st.builds(Status, code=st.sampled_from(StatusCode), detail=st.text(max_size=40), re=opt_seqs),
    st.builds(ListReply, what=st.sampled_from(FetchWhat), items=st.lists(json_values, max_size=4), re=opt_seqs),
    st.builds(Event, kind=st.sampled_from(EventKind), subject=st.text(max_size=40)),
)


async def raw_request(port: int, target: str, token: str) -> str:
    """One hand-written GET, bypassing client-side URL normalization."""
    reader, writer = await asyncio.open_connection("127.0.0.1", port)
    writer.write(
        (
            f"GET {target} HTTP/1.1\r\n"
            f"Host: 127.0.0.1:{port}\r\n"
            f"Authorization: Bearer {token}\r\n"
            "Connection: close\r\n\r\n"
        ).encode()
    )
    await writer.drain()
    data = await reader.read()
    writer.close()
    try:
        await writer.wait_closed()
    except OSError:
        pass
    return data.split(b"\r\n", 1)[0].decode()


def shuffle_json(value: Any, rng: random.Random) -> Any:
    """Deep copy of a JSON tree with every object's key order randomized."""
    if isinstance(value, dict):
        keys = list(value)
        rng.shuffle(keys)
        return {k: shuffle_json(value[k], rng) for k in keys}
    if isinstance(value, list):
        return [shuffle_json(v, rng) for v in value]
    return value


def permuted_text(canonical: str, rng: random.Random) -> str:
    """Re-serialize a canonical frame with randomized key order everywhere."""
    return json.dumps(shuffle_json(json.loads(canonical), rng), separators=(",", ": "))


def route_oracle(clients: dict, names_map: dict, groups: dict, origin: str, target) -> tuple[set, StatusCode]:
    """Recompute a routing decision by direct set algebra over a registry snapshot."""
    if origin not in clients:
        return set(), StatusCode.NOT_IDENTIFIED
    if isinstance(target, UuidTarget):
        if target.id in clients:
            return {target.id}, StatusCode.OK
        return set(), StatusCode.NO_SUCH_UUID
    if isinstance(target, NameTarget):
        for cid, prof in clients.items():
            if prof.name == target.name:
                return {cid}, StatusCode.OK
        return set(), StatusCode.NO_SUCH_NAME
    if isinstance(target, GroupTarget):
        g = groups.get(target.group)
        if g is None:
            return set(), StatusCode.NO_SUCH_GROUP
        if g.policy is BroadcastPolicy.OWNER_ONLY and origin != g.owner:
            return set(), StatusCode.BAD_PERMISSION
        if g.policy is BroadcastPolicy.SUBSCRIBERS and not (origin in g.subscribers or origin == g.owner):
            return set(), StatusCode.BAD_PERMISSION
        return set(g.subscribers) - {origin}, StatusCode.OK
    if isinstance(target, AllTarget):
        return set(clients) - {origin}, StatusCode.OK
    raise AssertionError(target)


def check_registry_invariants(clients: dict, names_map: dict, groups: dict) -> None:
    """Bijection between names and ids, plus referential integrity of groups."""
    assert len(names_map) == len(clients)
    for name, cid in names_map.items():
        assert cid in clients, f"name {name!r} maps to missing id"
        assert clients[cid].name == name
    for cid, prof in clients.items():
        assert names_map.get(prof.name) == cid
    for g in groups.values():
        assert g.owner in clients, f"group {g.name!r} owned by departed client"
        for sub in g.subscribers:
            assert sub in clients, f"group {g.name!r} references departed subscriber"
