"""Command-line entry point: scenario runs, log replay, and selftest."""

from __future__ import annotations

import argparse
import os
import sys
from importlib import resources
from pathlib import Path

from .bus import Bus, SocketServer, WebSocketBridge, decode_stream, encode
from .config import load_config
from .scenarios import run_freeplay, run_obstacle, run_tally, run_wholebody
from .sim import load_scene, parse_scene

SCENARIOS = ("tally", "wholebody", "obstacle", "freeplay")


def _default_scene(scenario: str):
    ref = resources.files("yor").joinpath(f"scenes/{scenario}.scene")
    return parse_scene(ref.read_text(encoding="utf-8"))


def _parse_addr(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)


def cmd_run(args) -> int:
    if args.scenario not in SCENARIOS:
        print(f"unknown scenario '{args.scenario}' (choose from {', '.join(SCENARIOS)})",
              file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
    except (OSError, ValueError, KeyError) as e:
        print(f"bad config: {e}", file=sys.stderr)
        return 2
    scene = load_scene(args.scene) if args.scene else _default_scene(args.scenario)

    bus = Bus()
    log_fh = None
    if args.log:
        log_fh = open(args.log, "wb")
        bus.add_tap(lambda env: log_fh.write(encode(env)))

    server = bridge = None
    rate = args.rate
    if args.ui:
        addr = args.bus_addr or os.environ.get("YOR_BUS_ADDR", "127.0.0.1:8765")
        host, port = _parse_addr(addr)
        server = SocketServer(bus, host, port)
        bridge = WebSocketBridge(bus, host, port + 1)
        if rate == 0.0:
            rate = 1.0
        print(f"bus socket on {server.address[0]}:{server.address[1]}, "
              f"websocket bridge on {bridge.address[0]}:{bridge.address[1]}")

    try:
        if args.scenario == "tally":
            report = run_tally(scene, cfg, args.seed, loops=args.loops, bus=bus)
        elif args.scenario == "wholebody":
            report = run_wholebody(scene, cfg, args.seed, bus=bus)
        elif args.scenario == "obstacle":
            report = run_obstacle(scene, cfg, args.seed, bus=bus)
        else:
            report = run_freeplay(scene, cfg, args.seed, bus=bus, rate=rate,
                                  duration=args.duration)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 1
    finally:
        if server:
            server.close()
        if bridge:
            bridge.close()
        if log_fh:
            log_fh.close()

    from .report import metrics_lines, render_figures, write_metrics

    if args.metrics:
        write_metrics(report, args.metrics)
        print(f"metrics written to {args.metrics}")
    else:
        print("\n".join(metrics_lines(report)))
    if args.figures:
        for p in render_figures(report, args.figures):
            print(f"figure written to {p}")
    return 0 if report.success else 1


def cmd_replay(args) -> int:
    try:
        data = Path(args.log).read_bytes()
        envelopes = decode_stream(data)
    except Exception as e:  # corrupt or missing log
        print(f"replay failed: {e}", file=sys.stderr)
        return 1
    stats: dict[str, list] = {}
    for env in envelopes:
        rec = stats.setdefault(env.topic, [0, 0, None, None])
        rec[0] += 1
        rec[1] += len(env.payload)
        rec[2] = env.timestamp_us if rec[2] is None else rec[2]
        rec[3] = env.timestamp_us
    print(f"{len(envelopes)} messages, {len(stats)} topics")
    print(f"{'topic':<12}{'count':>8}{'bytes':>12}{'span_s':>10}")
    for topic in sorted(stats):
        count, size, t0, t1 = stats[topic]
        span = (t1 - t0) / 1e6 if count > 1 else 0.0
        print(f"{topic:<12}{count:>8}{size:>12}{span:>10.2f}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="yor",
        description="mobile-manipulation stack scenarios on the built-in simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario")
    run_p.add_argument("--scenario", required=True, help="tally|wholebody|obstacle|freeplay")
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--config", help="key-value config file")
    run_p.add_argument("--scene", help="scene file (defaults to the scenario's packaged scene)")
    mode = run_p.add_mutually_exclusive_group()
    mode.add_argument("--headless", action="store_true", help="no servers (default)")
    mode.add_argument("--ui", action="store_true", help="start bus socket + websocket bridge")
    run_p.add_argument("--metrics", help="write the metrics file here")
    run_p.add_argument("--figures", help="render report figures into this directory")
    run_p.add_argument("--log", help="record all bus traffic to this file")
    run_p.add_argument("--rate", type=float, default=0.0,
                       help="real-time pacing factor (0 = as fast as possible)")
    run_p.add_argument("--duration", type=float, default=0.0,
                       help="freeplay sim-time limit in seconds (0 = unlimited)")
    run_p.add_argument("--loops", type=int, default=None, help="tally loop count override")
    run_p.add_argument("--bus-addr", help="host:port for --ui (or YOR_BUS_ADDR)")
    run_p.set_defaults(fn=cmd_run)

    replay_p = sub.add_parser("replay", help="summarize a recorded bus log")
    replay_p.add_argument("--log", required=True)
    replay_p.set_defaults(fn=cmd_replay)

    self_p = sub.add_parser("selftest", help="run built-in property checks")
    self_p.set_defaults(fn=lambda a: __import__("yor.selftest", fromlist=["x"]).run_selftest())

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
