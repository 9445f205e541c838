"""Operator entry point: run scenarios, validate routes, list agents, serve, replay.

Exit codes: 0 success/completed, 1 run finished with infractions or
incomplete, 2 usage error, 3 input file error, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import wire
from .agents import list_agent_names, resolve_agent
from .errors import (
    DeterminismViolation,
    DuplicateConsecutivePoint,
    EmptyRoute,
    Error,
    InvalidSpacing,
    LogCorrupt,
    MalformedName,
    NoRoads,
    OutOfRange,
    ParseError,
    UnknownAgent,
)
from .harness import HarnessConfig, LocalClient, RunResult, TerminatedBy, replay, run_scenario
from .routes import GeoOrigin, interpolate_route, parse_route, to_geo
from .world import World, load_map_path

EXIT_OK = 0
EXIT_INFRACTIONS = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_RUNTIME = 4

_FILE_ERRORS = (FileNotFoundError, IsADirectoryError, PermissionError, ParseError,
                EmptyRoute, DuplicateConsecutivePoint, NoRoads, UnicodeDecodeError)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drivebench",
        description="Deterministic test harness for interchangeable driving agents.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one agent over one route")
    run.add_argument("--agent", required=True, help="agent name, e.g. pp_fast or ext:host:port")
    run.add_argument("--route", required=True, help="route file (XML)")
    run.add_argument("--map", dest="map_path", help="map file (JSON); required unless --connect")
    run.add_argument("--out", default="runs", help="output directory for log and summary")
    run.add_argument("--seed", type=int, default=None,
                     help="world seed (falls back to HARNESS_SEED, then 0)")
    run.add_argument("--max-frames", type=int, default=2400)
    run.add_argument("--step-budget-ms", type=float, default=100.0)
    run.add_argument("--spacing", type=float, default=1.0, help="route interpolation spacing, m")
    run.add_argument("--connect", metavar="HOST:PORT", help="drive a remote world instead of an in-process one")
    run.add_argument("--pretty", action="store_true", help="human-readable summary instead of JSON")

    val = sub.add_parser("validate-route", help="parse and interpolate a route, report stats")
    val.add_argument("--route", required=True)
    val.add_argument("--map", dest="map_path", help="map providing the geographic origin")
    val.add_argument("--spacing", type=float, default=1.0)

    sub.add_parser("list-agents", help="print every resolvable agent name")

    srv = sub.add_parser("serve", help="own a world and accept wire clients")
    srv.add_argument("--map", dest="map_path", required=True)
    srv.add_argument("--bind", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=2000)
    srv.add_argument("--seed", type=int, default=None)

    rep = sub.add_parser("replay", help="re-execute a run log and verify determinism")
    rep.add_argument("--log", required=True)
    return parser


def _seed_from(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("HARNESS_SEED")
    return int(env) if env else 0


def _cmd_run(args) -> int:
    if args.connect:
        host, _, port_text = args.connect.rpartition(":")
        if not host or not port_text.isdigit():
            print(f"error: --connect expects HOST:PORT, got {args.connect!r}", file=sys.stderr)
            return EXIT_USAGE
        client = wire.connect(host, int(port_text))
    else:
        if not args.map_path:
            print("error: --map is required without --connect", file=sys.stderr)
            return EXIT_USAGE
        world = World(load_map_path(args.map_path), seed=_seed_from(args))
        client = LocalClient(world)

    out_dir = Path(args.out)
    try:
        config = HarnessConfig(
            agent_name=args.agent,
            route_path=args.route,
            step_budget_ms=args.step_budget_ms,
            max_frames=args.max_frames,
            spacing=args.spacing,
            log_path=out_dir / "run.ndjson",
        )
    except OutOfRange as exc:
        print(f"error: bad flag value: {exc}", file=sys.stderr)
        return EXIT_USAGE
    result = run_scenario(config, client)
    summary_path = out_dir / "result.json"
    summary_path.write_text(json.dumps(result.as_dict(), indent=2) + "\n", encoding="utf-8")
    _print_result(result, pretty=args.pretty)
    clean = result.terminated_by is TerminatedBy.COMPLETED and not result.infractions
    return EXIT_OK if clean else EXIT_INFRACTIONS


def _print_result(result: RunResult, pretty: bool) -> None:
    if not pretty:
        print(json.dumps(result.as_dict()))
        return
    print(f"agent         {result.agent_name}")
    print(f"route         {result.route_id}")
    print(f"seed          {result.seed}")
    print(f"frames        {result.frames_executed}")
    print(f"completion    {result.completion:.4f}")
    print(f"terminated by {result.terminated_by.value}")
    if result.infractions:
        print("infractions:")
        for inf in result.infractions:
            print(f"  frame {inf.frame:6d}  {inf.kind.value:15s} {inf.detail}")
    else:
        print("infractions:  none")


def _cmd_validate_route(args) -> int:
    text = Path(args.route).read_text(encoding="utf-8")
    try:
        route = parse_route(text)
        dense = interpolate_route(route, args.spacing)
    except (ParseError, EmptyRoute, DuplicateConsecutivePoint, InvalidSpacing) as exc:
        print(f"invalid route: {exc}", file=sys.stderr)
        return EXIT_INPUT
    origin = (load_map_path(args.map_path).geo_origin if args.map_path
              else GeoOrigin(0.0, 0.0, 0.0))
    geo = to_geo(dense, origin)
    gaps = np.hypot(np.diff(dense.xs), np.diff(dense.ys))
    report = {
        "route_id": route.route_id,
        "town": route.town,
        "keypoints": len(route.keypoints),
        "waypoints": len(dense),
        "total_length_m": dense.total_length,
        "max_gap_m": float(gaps.max()),
        "geo_bounds": {
            "lat_min": float(geo.latitudes.min()),
            "lat_max": float(geo.latitudes.max()),
            "lon_min": float(geo.longitudes.min()),
            "lon_max": float(geo.longitudes.max()),
        },
    }
    print(json.dumps(report, indent=2))
    ok = (float(gaps.max()) <= args.spacing + 1e-9
          and bool(np.all(np.diff(dense.arc) > 0))
          and dense.arc[0] == 0.0)
    return EXIT_OK if ok else EXIT_INPUT


def _cmd_list_agents(args) -> int:
    for name in list_agent_names():
        resolved = resolve_agent(name)
        params = " ".join(f"{k}={v:g}" for k, v in sorted(resolved.parameters.items()))
        rig = "+".join(spec.sensor_id for spec in resolved.rig)
        print(f"{name:<14} family={resolved.descriptor.family:<5} rig={rig:<26} {params}".rstrip())
    return EXIT_OK


def _cmd_serve(args) -> int:
    server = wire.serve(args.bind, args.port, args.map_path, seed=_seed_from(args))
    print(f"serving {server.world.world_map.town!r} on {server.host}:{server.port}", flush=True)
    try:
        while server.wait(timeout=1.0):
            pass
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
    return EXIT_OK


def _cmd_replay(args) -> int:
    try:
        result = replay(args.log)
    except LogCorrupt as exc:
        print(f"corrupt log: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DeterminismViolation as exc:
        print(f"determinism violation at frame {exc.frame}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(result.as_dict()))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    commands = {
        "run": _cmd_run,
        "validate-route": _cmd_validate_route,
        "list-agents": _cmd_list_agents,
        "serve": _cmd_serve,
        "replay": _cmd_replay,
    }
    try:
        return commands[args.command](args)
    except (UnknownAgent, MalformedName) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        return EXIT_OK
    except _FILE_ERRORS as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (Error, ConnectionError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
