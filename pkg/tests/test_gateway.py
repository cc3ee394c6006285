"""Connection state machine and relay behavior of the websocket endpoint."""

import asyncio
import json
import re

from harness import RawClient, run, running_gateway


def test_identify_then_hello(tmp_path):
    async def body():
        async with running_gateway(tmp_path) as (gw, base):
            client = await RawClient.identified(base, "alice", tags=("teacher",))
            hello = client.hello
            assert hello["version"] == "1.0"
            profile = hello["profile"]
            assert profile["name"] == "alice"
            assert profile["kind"] == "user"
            assert profile["tags"] == ["teacher"]
            assert re.fullmatch(r"[0-9a-f-]{36}", profile["id"])
            assert re.fullmatch(r"[0-9a-f]{64}", hello["file_token"])
            await client.close()

    run(body())


def test_unsupported_query_version_refused(tmp_path):
    async def body():
        async with running_gateway(tmp_path) as (gw, base):
            client = await RawClient.open(base, query="?version=9.9")
            frame = await client.recv()
            assert frame == {
                "type": "status",
                "code": "unsupported_version",
                "detail": "server speaks 1.0",
            }
            assert await client.expect_close() == 4001
            await client.close()

    run(body())


def test_identify_deadline(tmp_path):
    async def body():
        async with running_gateway(tmp_path, identify_timeout=0.2) as (gw, base):
            client = await RawClient.open(base)
            assert await client.expect_close(timeout=3.0) == 4000
            await client.close()

    run(body())


def test_message_before_identify(tmp_path):
    async def body():
        async with running_gateway(tmp_path) as (gw, base):
            client = await RawClient.open(base)
            await client.send({"type": "message", "target": {"type": "all"}, "data": {}, "seq": 0})
            frame = await client.recv()
            assert frame["type"] == "status" and frame["code"] == "not_identified"
            assert await client.expect_close() == 4001
            await client.close()

    run(body())


def test_malformed_before_identify(tmp_path):
    async def body():
        async with running_gateway(tmp_path) as (gw, base):
            client = await RawClient.open(base)
            await client.send_text("this is not json")
            frame = await client.recv()
            assert frame["type"] == "status" and frame["code"] == "malformed_frame"
            assert await client.expect_close() == 4001
            await client.close()

    run(body())


def test_name_conflict_closes_second_connection_only(tmp_path):
    async def body():
        async with running_gateway(tmp_path) as (gw, base):
            first = await RawClient.identified(base, "bob")
            second = await RawClient.open(base)
            await second.send(
                {"type": "identify", "kind": "user", "name": "bob", "tags": [], "version": "1.0"}
            )
            frame = await second.recv()
            assert frame["type"] == "status" and frame["code"] == "name_conflict"
            assert await second.expect_close() == 4001
            await second.close()
            # the original connection is unharmed
            await first.send({"type": "fetch", "what": "clients", "seq": 1})
            reply = await first.recv_until(lambda f: f["type"] == "list")
            assert [p["name"] for p in reply["items"]] == ["bob"]
            await first.close()

    run(body())


def test_second_identify_is_refused_but_not_fatal(tmp_path):
    async def body():
        async with running_gateway(tmp_path) as (gw, base):
            client = await RawClient.identified(base, "carol")
            await client.send(
                {"type": "identify", "kind": "user", "name": "carol2", "tags": [], "version": "1.0"}
            )
            frame = await client.recv()
            assert frame["type"] == "status" and frame["code"] == "already_identified"
            await client.send({"type": "fetch", "what": "clients", "seq": 2})
            reply = await client.recv_until(lambda f: f["type"] == "list")
            assert reply["re"] == 2
            await client.close()

    run(body())


def test_malformed_while_active_is_survivable(tmp_path):
    async def body():
        async with running_gateway(tmp_path) as (gw, base):
            a = await RawClient.identified(base, "a")
            b = await RawClient.identified(base, "b")
            await a.send_text('{"type":"message","target":{"type":"all"}')  # truncated
            frame = await a.recv_until(lambda f: f["type"] == "status")
            assert frame["code"] == "malformed_frame"
            # a still works, and b never noticed
            await a.send(
                {"type": "message", "target": {"type": "name", "name": "b"}, "data": {"x": 1}, "seq": 5}
            )
            relay = await b.recv_until(lambda f: f["type"] == "relay")
            assert relay["data"] == {"x": 1} and relay["seq"] == 5
            assert relay["origin"]["name"] == "a"
            await a.close()
            await b.close()

    run(body())


def test_binary_frame_closes_connection(tmp_path):
    async def body():
        async with running_gateway(tmp_path) as (gw, base):
            client = await RawClient.identified(base, "binsender")
            await client.ws.send_bytes(b"\x00\x01")
            assert await client.expect_close() == 4001
            await client.close()

    run(body())


def test_all_broadcast_reaches_everyone_but_origin(tmp_path):
    async def body():
        async with running_gateway(tmp_path) as (gw, base):
            a = await RawClient.identified(base, "a")
            b = await RawClient.identified(base, "b")
            c = await RawClient.identified(base, "c")
            await a.send(
                {"type": "message", "target": {"type": "all"}, "data": {"n": 1}, "seq": 9}
            )
            for peer in (b, c):
                relay = await peer.recv_until(lambda f: f["type"] == "relay")
                assert relay["origin"]["name"] == "a"
                assert relay["target"] == {"type": "all"}
                assert relay["data"] == {"n": 1}
                assert relay["seq"] == 9
            # the sender gets neither a relay nor a status for a successful send
            await a.send({"type": "fetch", "what": "clients", "seq": 10})
            reply = await a.recv_until(lambda f: f["type"] == "list")
            assert reply["re"] == 10  # nothing but the list arrived
            await a.close()
            await b.close()
            await c.close()

    run(body())


def test_message_to_unknown_name(tmp_path):
    async def body():
        async with running_gateway(tmp_path) as (gw, base):
            a = await RawClient.identified(base, "a")
            await a.send(
                {"type": "message", "target": {"type": "name", "name": "ghost"}, "data": {}, "seq": 3}
            )
            frame = await a.recv()
            assert frame["type"] == "status"
            assert frame["code"] == "no_such_name"
            assert frame["re"] == 3
            await a.close()

    run(body())


def test_group_lifecycle_events_and_permissions(tmp_path):
    async def body():
        async with running_gateway(tmp_path) as (gw, base):
            svc = await RawClient.identified(base, "engine", kind="service")
            user = await RawClient.identified(base, "viewer")
            await svc.send(
                {"type": "create_group", "group": "stream", "policy": "owner_only", "seq": 1}
            )
            status = await svc.recv_until(lambda f: f["type"] == "status")
            assert status["code"] == "ok" and status["re"] == 1
            event = await user.recv_until(lambda f: f["type"] == "event" and f["kind"] == "group_created")
            assert event["subject"] == "stream"

            await user.send({"type": "subscribe", "group": "stream", "seq": 2})
            status = await user.recv_until(lambda f: f["type"] == "status")
            assert status["code"] == "ok" and status["re"] == 2

            # subscriber may not publish into an owner_only group
            await user.send(
                {"type": "message", "target": {"type": "group", "group": "stream"}, "data": {}, "seq": 3}
            )
            status = await user.recv_until(lambda f: f["type"] == "status")
            assert status["code"] == "bad_permission" and status["re"] == 3

            # owner publishes; subscriber receives
            await svc.send(
                {"type": "message", "target": {"type": "group", "group": "stream"},
                 "data": {"tick": 1}, "seq": 4}
            )
            relay = await user.recv_until(lambda f: f["type"] == "relay")
            assert relay["data"] == {"tick": 1}

            # non-owner cannot delete
            await user.send({"type": "delete_group", "group": "stream", "seq": 5})
            status = await user.recv_until(lambda f: f["type"] == "status")
            assert status["code"] == "not_group_owner"
            await svc.close()
            await user.close()

    run(body())


def test_owner_disconnect_deletes_group(tmp_path):
    async def body():
        async with running_gateway(tmp_path) as (gw, base):
            owner = await RawClient.identified(base, "owner", kind="service")
            sub = await RawClient.identified(base, "sub")
            await owner.send(
                {"type": "create_group", "group": "g", "policy": "anyone", "seq": 1}
            )
            await owner.recv_until(lambda f: f["type"] == "status")
            await sub.send({"type": "subscribe", "group": "g", "seq": 2})
            await sub.recv_until(lambda f: f["type"] == "status")
            await owner.close()
            kinds = set()
            for _ in range(2):
                frame = await sub.recv_until(lambda f: f["type"] == "event")
                kinds.add((frame["kind"], frame["subject"]))
            assert ("group_deleted", "g") in kinds
            assert ("client_left", "owner") in kinds
            await sub.close()

    run(body())


def test_fetch_groups_and_subscribers(tmp_path):
    async def body():
        async with running_gateway(tmp_path) as (gw, base):
            a = await RawClient.identified(base, "a")
            await a.send({"type": "create_group", "group": "room", "policy": "subscribers", "seq": 1})
            await a.recv_until(lambda f: f["type"] == "status")
            await a.send({"type": "subscribe", "group": "room", "seq": 2})
            await a.recv_until(lambda f: f["type"] == "status")
            await a.send({"type": "fetch", "what": "groups", "seq": 3})
            groups = await a.recv_until(lambda f: f["type"] == "list")
            assert groups["items"] == [
                {"name": "room", "owner": "a", "policy": "subscribers", "subscriber_count": 1}
            ]
            await a.send({"type": "fetch", "what": "subscribers", "group": "room", "seq": 4})
            subs = await a.recv_until(lambda f: f["type"] == "list")
            assert [p["name"] for p in subs["items"]] == ["a"]
            await a.send({"type": "fetch", "what": "subscribers", "group": "nope", "seq": 5})
            status = await a.recv_until(lambda f: f["type"] == "status")
            assert status["code"] == "no_such_group" and status["re"] == 5
            await a.close()

    run(body())


def test_server_frame_from_client_is_malformed(tmp_path):
    async def body():
        async with running_gateway(tmp_path) as (gw, base):
            a = await RawClient.identified(base, "a")
            await a.send({"type": "event", "kind": "client_joined", "subject": "x"})
            frame = await a.recv_until(lambda f: f["type"] == "status")
            assert frame["code"] == "malformed_frame"
            await a.close()

    run(body())


def test_per_pair_ordering(tmp_path):
    async def body():
        async with running_gateway(tmp_path) as (gw, base):
            a = await RawClient.identified(base, "a")
            b = await RawClient.identified(base, "b")
            count = 300
            for i in range(count):
                await a.send(
                    {"type": "message", "target": {"type": "name", "name": "b"},
                     "data": {"i": i}, "seq": i}
                )
            seen = []
            while len(seen) < count:
                frame = await b.recv_until(lambda f: f["type"] == "relay")
                seen.append(frame["data"]["i"])
                assert frame["seq"] == frame["data"]["i"]
            assert seen == list(range(count))
            await a.close()
            await b.close()

    run(body())


def test_slow_consumer_is_disconnected(tmp_path):
    async def body():
        async with running_gateway(tmp_path, queue_capacity=8) as (gw, base):
            watcher = await RawClient.identified(base, "watcher")
            pump = await RawClient.identified(base, "pump")
            slow = await RawClient.identified(base, "slow")
            payload = {"blob": "x" * 65536}
            # slow never drains; pump until its queue must have overflowed.
            # The pump may get culled too (error statuses for the dead
            # target flood its own tiny queue), which is fine; the watcher
            # stays idle and does the observing.
            for i in range(120):
                await pump.send(
                    {"type": "message", "target": {"type": "name", "name": "slow"},
                     "data": payload, "seq": i}
                )
            left = await watcher.recv_until(
                lambda f: f["type"] == "event" and f["kind"] == "client_left"
                and f["subject"] == "slow",
                timeout=30.0,
            )
            assert left["subject"] == "slow"
            code = await slow.expect_close(timeout=30.0)
            assert code == 4008
            # and the hub no longer lists it
            await watcher.send({"type": "fetch", "what": "clients", "seq": 999})
            reply = await watcher.recv_until(lambda f: f["type"] == "list")
            names = [p["name"] for p in reply["items"]]
            assert "slow" not in names
            assert "watcher" in names
            await watcher.close()
            await pump.close()
            await slow.close()

    run(body())


def test_reconnect_frees_name_end_to_end(tmp_path):
    async def body():
        async with running_gateway(tmp_path) as (gw, base):
            first = await RawClient.identified(base, "phoenix")
            await first.close()
            await asyncio.sleep(0.05)
            second = await RawClient.identified(base, "phoenix")
            assert second.hello["profile"]["name"] == "phoenix"
            assert second.uid != first.uid
            await second.close()

    run(body())


def test_self_send_by_uuid(tmp_path):
    async def body():
        async with running_gateway(tmp_path) as (gw, base):
            a = await RawClient.identified(base, "soliloquy")
            await a.send(
                {"type": "message", "target": {"type": "uuid", "id": a.uid}, "data": {"echo": True}, "seq": 1}
            )
            relay = await a.recv_until(lambda f: f["type"] == "relay")
            assert relay["origin"]["id"] == a.uid
            assert relay["data"] == {"echo": True}
            await a.close()

    run(body())


def test_oversize_frame_is_rejected(tmp_path):
    async def body():
        async with running_gateway(tmp_path, max_frame=4096) as (gw, base):
            a = await RawClient.identified(base, "bigmouth")
            big = json.dumps(
                {"type": "message", "target": {"type": "all"}, "data": {"x": "y" * 8192}, "seq": 1}
            )
            await a.send_text(big)
            code = await a.expect_close()
            assert code is not None and code != 1000  # server refused, never relayed
            await a.close()

    run(body())
