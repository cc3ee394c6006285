"""CLI tests: real subprocesses driven over pipes and signals.

Everything here runs `python -m concierge ...` the way an operator would,
so these double as packaging checks (the module must be importable and the
entry point wired) on top of the behavior under test.
"""

import asyncio
import json
import os
import signal
import subprocess
import sys
import time
from pathlib import Path

import pytest

from harness import RawClient, ServeProc, read_lines_until, run

REPO = Path(__file__).resolve().parent.parent


def _cli(*argv, **kwargs):
    return subprocess.run(
        [sys.executable, "-m", "concierge", *argv],
        capture_output=True,
        text=True,
        timeout=60,
        **kwargs,
    )


@pytest.fixture
def served(tmp_path):
    server = ServeProc(tmp_path)
    try:
        yield server
    finally:
        server.kill()


# ----------------------------------------------------------------- generic


def test_help_exits_zero_everywhere():
    for argv in ([], ["serve"], ["sim"], ["sim", "nbody"], ["sim", "boxes"], ["bench"], ["replay"]):
        result = _cli(*argv, "--help")
        assert result.returncode == 0, (argv, result.stderr)
        assert "usage" in result.stdout.lower()


def test_usage_error_exits_two():
    assert _cli("serve", "--port", "70000").returncode == 2
    assert _cli("no-such-command").returncode == 2


# ------------------------------------------------------------------- serve


def test_serve_port_zero_prints_assigned_port(tmp_path, served):
    assert 1 <= served.port <= 65535
    # the hub actually answers on what it printed
    import urllib.request

    with urllib.request.urlopen(f"{served.base}/healthz", timeout=5) as resp:
        assert resp.read() == b"ok"
    assert served.interrupt_and_wait() == 0


def test_serve_bind_conflict_exits_nonzero(tmp_path, served):
    second = _cli(
        "serve",
        "--port",
        str(served.port),
        "--fs-root",
        str(tmp_path / "other-fs"),
    )
    assert second.returncode == 1
    assert "cannot bind" in second.stderr


def test_serve_env_mirror_and_flag_priority(tmp_path):
    # env supplies the port; the flag must beat it when both are present
    env = dict(os.environ, CONCIERGE_PORT="1")  # would fail to bind if used
    server = subprocess.Popen(
        [
            sys.executable,
            "-m",
            "concierge",
            "serve",
            "--port",
            "0",
            "--fs-root",
            str(tmp_path / "fs"),
        ],
        stdout=subprocess.PIPE,
        stderr=subprocess.DEVNULL,
        text=True,
        env=env,
    )
    try:
        lines = read_lines_until(server, lambda l: l.startswith("http: "))
        port = int(lines[-1].rsplit(":", 1)[1])
        assert port != 1
    finally:
        server.send_signal(signal.SIGINT)
        assert server.wait(timeout=15) == 0


def test_sigint_closes_every_connection(tmp_path, served):
    """A packed hub shuts down by saying goodbye to each socket."""

    async def scenario():
        clients = []
        for batch in range(5):
            opened = await asyncio.gather(
                *(
                    RawClient.identified(served.base, f"c{batch}_{i}")
                    for i in range(20)
                )
            )
            clients.extend(opened)
        assert len(clients) == 100
        served.proc.send_signal(signal.SIGINT)
        codes = await asyncio.gather(
            *(c.expect_close(timeout=20) for c in clients)
        )
        for c in clients:
            await c.close()
        return codes

    codes = run(scenario())
    assert codes == [1001] * 100
    assert served.proc.wait(timeout=15) == 0


# --------------------------------------------------------------------- sim


def test_sim_unknown_preset_lists_available():
    result = _cli("sim", "nbody", "--preset", "atlantis")
    assert result.returncode != 0
    assert "two-body" in result.stderr
    assert "solar-lite" in result.stderr


def test_sim_boxes_count_zero_streams_empty_world(tmp_path, served):
    sim = subprocess.Popen(
        [
            sys.executable,
            "-m",
            "concierge",
            "sim",
            "boxes",
            "--count",
            "0",
            "--hub",
            f"ws://127.0.0.1:{served.port}",
        ],
        stdout=subprocess.PIPE,
        stderr=subprocess.DEVNULL,
        text=True,
    )
    try:
        read_lines_until(sim, lambda l: l.startswith("streaming"))

        async def scenario():
            watcher = await RawClient.identified(served.base, "watcher")
            for _ in range(100):
                await watcher.send({"type": "fetch", "what": "groups", "seq": 1})
                reply = await watcher.recv_until(lambda f: f["type"] == "list")
                if any(g["name"] == "physics_engine" for g in reply["items"]):
                    break
                await asyncio.sleep(0.05)
            await watcher.send({"type": "subscribe", "group": "physics_engine", "seq": 2})
            frame = await watcher.recv_until(
                lambda f: f["type"] == "relay" and "tick" in f["data"]
            )
            assert frame["data"]["entities"] == []
            await watcher.close()

        run(scenario())
        sim.send_signal(signal.SIGINT)
        assert sim.wait(timeout=15) == 0
    finally:
        if sim.poll() is None:
            sim.kill()
            sim.wait(timeout=10)


# ------------------------------------------------------------------- bench


def test_bench_zero_clients_exits_clean_immediately():
    started = time.monotonic()
    result = _cli("bench", "--clients", "0", "--hub", "ws://127.0.0.1:1")
    assert result.returncode == 0
    assert time.monotonic() - started < 10
    report = json.loads(result.stdout)
    assert report["clients"] == 0
    assert report["published"] == 0


def test_bench_unreachable_hub_exits_one():
    result = _cli("bench", "--clients", "1", "--duration", "1", "--hub", "ws://127.0.0.1:1")
    assert result.returncode == 1
    assert "bench failed" in result.stderr


def test_bench_reports_delivery_and_latency(tmp_path, served):
    result = _cli(
        "bench",
        "--hub",
        f"ws://127.0.0.1:{served.port}",
        "--clients",
        "2",
        "--rate",
        "30",
        "--duration",
        "1.5",
    )
    assert result.returncode == 0, result.stderr
    report = json.loads(result.stdout)
    expected = 30 * 1.5
    assert abs(report["published"] - expected) <= 2
    assert report["lost"]["total"] == 0
    assert report["delivered"]["min"] == report["published"]
    stats = report["latency_ms"]
    assert stats["count"] == 2 * report["published"]
    assert 0 <= stats["p50"] <= stats["p99"] <= stats["max"]


# ------------------------------------------------------------------ replay


def test_replay_passes_on_shipped_fixtures():
    result = _cli("replay", cwd=REPO)
    assert result.returncode == 0, result.stdout
    assert "byte-identical" in result.stdout


def test_replay_flags_corrupted_fixture(tmp_path):
    fixture = tmp_path / "frames.jsonl"
    good = (REPO / "fixtures" / "frames.jsonl").read_text().splitlines()
    # reorder keys in one frame: decodes fine, but is not canonical
    broken = good[:3] + ['{"data":{},"type":"message","seq":0,"target":{"type":"all"}}']
    fixture.write_text("\n".join(broken) + "\n")
    result = _cli("replay", str(fixture))
    assert result.returncode == 1
    assert "FAIL" in result.stdout
