"""Command line entry points: serve the hub, run simulators, bench, replay.

Every flag has a CONCIERGE_* environment mirror (flag wins); defaults live
here and nowhere else. Exit codes follow the usual convention: 0 on success,
1 on runtime failure, 2 on usage errors (argparse handles those).
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import math
import os
import signal
import sys
import time
from pathlib import Path

import aiohttp
from aiohttp import web

from .gateway import (
    DEFAULT_FILE_LIMIT,
    DEFAULT_IDENTIFY_TIMEOUT,
    DEFAULT_MAX_FRAME,
    DEFAULT_QUEUE_CAPACITY,
    Gateway,
)
from .physics.service import BoxService, NBodyService
from .protocol import BroadcastPolicy, FrameError, decode_frame, encode_frame
from .sdk import ServiceAdapter, SdkError, Session

log = logging.getLogger(__name__)

DEFAULT_PORT = 8020
DEFAULT_HUB = "ws://127.0.0.1:8020"
DEFAULT_RATE = 50.0


# ------------------------------------------------------------ flag plumbing


def _env(flag: str) -> str | None:
    return os.environ.get("CONCIERGE_" + flag.upper().replace("-", "_"))


def _env_default(flag: str, fallback, kind=str):
    """Environment mirror of a flag; a broken value is a usage error."""
    raw = _env(flag)
    if raw is None:
        return fallback
    try:
        return kind(raw)
    except (TypeError, ValueError):
        print(
            f"invalid CONCIERGE_{flag.upper().replace('-', '_')}: {raw!r}",
            file=sys.stderr,
        )
        raise SystemExit(2)


def _port(value: str) -> int:
    port = int(value)
    if not 0 <= port <= 65535:
        raise argparse.ArgumentTypeError("port must be 0-65535 (0 = OS-assigned)")
    return port


def _positive_float(value: str) -> float:
    parsed = float(value)
    if not math.isfinite(parsed) or parsed <= 0:
        raise argparse.ArgumentTypeError("must be a positive number")
    return parsed


def _nonneg_int(value: str) -> int:
    parsed = int(value)
    if parsed < 0:
        raise argparse.ArgumentTypeError("must be zero or more")
    return parsed


def _setup_logging(level: str) -> None:
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def _install_stop_handlers(stop: asyncio.Event) -> None:
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGINT, signal.SIGTERM):
        try:
            loop.add_signal_handler(sig, stop.set)
        except NotImplementedError:
            signal.signal(sig, lambda *_: stop.set())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="concierge",
        description="Real-time collaboration hub and its reference services.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    serve = sub.add_parser("serve", help="run the hub (websocket relay + file store)")
    serve.add_argument("--bind", default=_env_default("bind", "127.0.0.1"))
    serve.add_argument(
        "--port", type=_port, default=_env_default("port", DEFAULT_PORT, _port)
    )
    serve.add_argument(
        "--fs-root", default=_env_default("fs-root", "./concierge-fs")
    )
    serve.add_argument(
        "--queue",
        type=_nonneg_int,
        default=_env_default("queue", DEFAULT_QUEUE_CAPACITY, int),
        help="outbound frames buffered per client before it is dropped",
    )
    serve.add_argument(
        "--max-frame",
        type=_nonneg_int,
        default=_env_default("max-frame", DEFAULT_MAX_FRAME, int),
        help="largest accepted websocket frame, bytes",
    )
    serve.add_argument(
        "--identify-timeout",
        type=_positive_float,
        default=_env_default("identify-timeout", DEFAULT_IDENTIFY_TIMEOUT, float),
    )
    serve.add_argument(
        "--file-limit",
        type=_nonneg_int,
        default=_env_default("file-limit", DEFAULT_FILE_LIMIT, int),
        help="largest accepted upload, bytes",
    )
    serve.add_argument(
        "--static",
        default=_env_default("static", None),
        help="directory served at /app (the browser client build)",
    )
    serve.add_argument("--log", default=_env_default("log", "info"))
    serve.set_defaults(func=_cmd_serve)

    sim = sub.add_parser("sim", help="run a reference simulation service")
    sim_sub = sim.add_subparsers(dest="world", required=True, metavar="world")

    def sim_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--hub", default=_env_default("hub", DEFAULT_HUB))
        p.add_argument(
            "--rate",
            type=_positive_float,
            default=_env_default("rate", DEFAULT_RATE, float),
            help="state publishes per second",
        )
        p.add_argument(
            "--dt", type=_positive_float, default=None, help="integration step override"
        )
        p.add_argument("--log", default=_env_default("log", "info"))

    nbody = sim_sub.add_parser("nbody", help="gravitational n-body world")
    nbody.add_argument(
        "--preset",
        default=_env_default("preset", "two-body"),
        help="built-in preset name or a JSON file path",
    )
    sim_common(nbody)
    nbody.set_defaults(func=_cmd_sim_nbody)

    boxes = sim_sub.add_parser("boxes", help="colliding rigid boxes world")
    boxes.add_argument(
        "--count", type=_nonneg_int, default=_env_default("count", 10, int)
    )
    boxes.add_argument("--seed", type=int, default=_env_default("seed", 0, int))
    sim_common(boxes)
    boxes.set_defaults(func=_cmd_sim_boxes)

    bench = sub.add_parser(
        "bench", help="load-test a hub and report delivery and latency"
    )
    bench.add_argument("--hub", default=_env_default("hub", DEFAULT_HUB))
    bench.add_argument(
        "--clients",
        type=_nonneg_int,
        default=_env_default("clients", 5, int),
        help="subscriber sessions to attach",
    )
    bench.add_argument(
        "--rate",
        type=_positive_float,
        default=_env_default("rate", DEFAULT_RATE, float),
    )
    bench.add_argument(
        "--duration",
        type=_positive_float,
        default=_env_default("duration", 10.0, float),
        help="seconds to publish for",
    )
    bench.add_argument("--log", default=_env_default("log", "warning"))
    bench.set_defaults(func=_cmd_bench)

    replay = sub.add_parser(
        "replay", help="re-encode recorded frames and verify byte identity"
    )
    replay.add_argument(
        "fixtures",
        nargs="?",
        default="fixtures/frames.jsonl",
        help="jsonl file, one canonical frame per line",
    )
    replay.add_argument("-v", "--verbose", action="store_true")
    replay.set_defaults(func=_cmd_replay)

    return parser


# ------------------------------------------------------------------- serve


def _cmd_serve(args) -> int:
    _setup_logging(args.log)
    return asyncio.run(_serve(args))


async def _serve(args) -> int:
    try:
        gw = Gateway(
            fs_root=args.fs_root,
            queue_capacity=args.queue,
            max_frame=args.max_frame,
            identify_timeout=args.identify_timeout,
            file_limit=args.file_limit,
            static_root=args.static,
        )
    except OSError as err:
        print(f"cannot use fs root {args.fs_root!r}: {err}", file=sys.stderr)
        return 1
    # handlers go in before the URLs are printed: anyone scripting against
    # the printed port may signal us the moment the line appears
    stop = asyncio.Event()
    _install_stop_handlers(stop)
    runner = web.AppRunner(gw.make_app())
    await runner.setup()
    site = web.TCPSite(runner, args.bind, args.port)
    try:
        await site.start()
    except OSError as err:
        print(f"cannot bind {args.bind}:{args.port}: {err}", file=sys.stderr)
        await runner.cleanup()
        return 1
    port = runner.addresses[0][1]
    print(f"websocket: ws://{args.bind}:{port}/ws", flush=True)
    print(f"http: http://{args.bind}:{port}", flush=True)
    log.info("file store root: %s", gw.fs_root)
    await stop.wait()
    log.info("shutting down")
    await runner.cleanup()  # sends close frames to every connection
    return 0


# --------------------------------------------------------------------- sim


def _cmd_sim_nbody(args) -> int:
    _setup_logging(args.log)
    try:
        svc = NBodyService.from_preset(args.preset, dt=args.dt)
    except KeyError as err:
        # the message already lists what is available
        print(err.args[0], file=sys.stderr)
        return 2
    except (OSError, ValueError, json.JSONDecodeError) as err:
        print(f"cannot load preset {args.preset!r}: {err}", file=sys.stderr)
        return 1
    return asyncio.run(_run_sim(args, svc))


def _cmd_sim_boxes(args) -> int:
    _setup_logging(args.log)
    kwargs = {"dt": args.dt} if args.dt is not None else {}
    svc = BoxService.fresh(count=args.count, seed=args.seed, **kwargs)
    return asyncio.run(_run_sim(args, svc))


async def _run_sim(args, svc) -> int:
    adapter = ServiceAdapter.for_service(args.hub, svc, rate=args.rate)
    stop = asyncio.Event()
    _install_stop_handlers(stop)
    print(
        f"streaming as {svc.kind!r} to group {svc.group!r} "
        f"at {args.rate:g} Hz via {args.hub}",
        flush=True,
    )
    job = asyncio.create_task(adapter.serve())
    await stop.wait()
    adapter.stop()
    await job
    log.info("published %d states over %d connects", adapter.published, adapter.connects)
    return 0


# ------------------------------------------------------------------- bench


def _cmd_bench(args) -> int:
    _setup_logging(args.log)
    try:
        return asyncio.run(_bench(args))
    except (OSError, aiohttp.ClientError, SdkError) as err:
        print(f"bench failed: {err}", file=sys.stderr)
        return 1


def _percentile(sorted_values: list[float], q: float) -> float:
    """Nearest-rank percentile; callers guarantee a non-empty list."""
    rank = max(1, math.ceil(q * len(sorted_values)))
    return sorted_values[rank - 1]


async def _bench(args) -> int:
    report = {
        "hub": args.hub,
        "clients": args.clients,
        "rate": args.rate,
        "duration": args.duration,
        "published": 0,
        "delivered": {"per_client": [], "min": 0, "max": 0},
        "lost": {"per_client": [], "total": 0},
        "latency_ms": None,
    }
    if args.clients == 0:
        print(json.dumps(report, indent=2))
        return 0

    stop = asyncio.Event()
    _install_stop_handlers(stop)
    group = f"bench_{os.getpid()}"
    publisher = await Session.connect(args.hub, f"bench_pub_{os.getpid()}")
    subscribers: list[Session] = []
    counts: list[int] = []
    latencies: list[float] = []
    try:
        await publisher.create_group(group, BroadcastPolicy.OWNER_ONLY)
        for i in range(args.clients):
            sub = await Session.connect(args.hub, f"bench_sub_{os.getpid()}_{i}")
            subscribers.append(sub)
            counts.append(0)

            def tally(relay, slot=i):
                data = relay.data
                if isinstance(data, dict) and "bench" in data:
                    counts[slot] += 1
                    latencies.append(time.perf_counter() - data["t"])

            sub.on_relay = tally
            await sub.subscribe(group)

        loop = asyncio.get_running_loop()
        start = loop.time()
        published = 0
        while loop.time() - start < args.duration and not stop.is_set():
            await publisher.publish(
                group, {"bench": published, "t": time.perf_counter()}
            )
            published += 1
            delay = start + published / args.rate - loop.time()
            if delay > 0:
                await asyncio.sleep(delay)
        await asyncio.sleep(0.3)  # let the tail drain to the subscribers
    finally:
        await publisher.close()
        for sub in subscribers:
            await sub.close()

    report["published"] = published
    report["delivered"] = {
        "per_client": counts,
        "min": min(counts),
        "max": max(counts),
    }
    lost = [published - c for c in counts]
    report["lost"] = {"per_client": lost, "total": sum(lost)}
    if latencies:
        latencies.sort()
        to_ms = lambda s: round(s * 1000, 3)  # noqa: E731
        report["latency_ms"] = {
            "count": len(latencies),
            "p50": to_ms(_percentile(latencies, 0.50)),
            "p90": to_ms(_percentile(latencies, 0.90)),
            "p99": to_ms(_percentile(latencies, 0.99)),
            "max": to_ms(latencies[-1]),
        }
    print(json.dumps(report, indent=2))
    return 0


# ------------------------------------------------------------------ replay


def _load_notes(fixture_path: Path) -> dict[int, str]:
    sidecar = fixture_path.with_suffix("").with_suffix(".notes.txt")
    notes: dict[int, str] = {}
    try:
        for line in sidecar.read_text(encoding="utf-8").splitlines():
            head, _, text = line.partition(":")
            if head.strip().isdigit():
                notes[int(head)] = text.strip()
    except OSError:
        pass
    return notes


def _cmd_replay(args) -> int:
    path = Path(args.fixtures)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as err:
        print(f"cannot read {path}: {err}", file=sys.stderr)
        return 1
    notes = _load_notes(path)
    total = failures = 0
    for index, line in enumerate(lines):
        if not line.strip():
            continue
        total += 1
        try:
            frame = decode_frame(line)
        except FrameError as err:
            print(f"{index:02d} FAIL decode: {err}")
            failures += 1
            continue
        again = encode_frame(frame)
        if again != line:
            print(f"{index:02d} FAIL re-encode differs")
            print(f"     recorded {line}")
            print(f"     produced {again}")
            failures += 1
        elif args.verbose:
            print(f"{index:02d} ok  {notes.get(index, type(frame).__name__)}")
    if failures:
        print(f"{total} frames, {failures} FAILED")
        return 1
    print(f"{total} frames round-tripped byte-identical")
    return 0


# -------------------------------------------------------------------- main


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
