"""Scenario facade: bind agent + vehicle + route + world client, run, record.

The harness samples the agent's rig, invokes the agent under a wall-clock
step budget, and hands back a validated control action; the caller applies it
and ticks the world, one action per tick (lockstep).  Agent overruns and
exceptions never stall the loop: the harness substitutes a safe-stop action
and records an infraction instead.  Every frame goes to a newline-delimited
log that `replay` can re-execute bit-identically.
"""

from __future__ import annotations

import enum
import hashlib
import json
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import codec
from .agents import AgentConfig, resolve_agent
from .core import ControlAction, Transform, VehicleState, safe_stop_control, validate_control
from .errors import DeterminismViolation, LogCorrupt, OutOfLockstep, OutOfRange
from .routes import RouteProgress, interpolate_route, parse_route, to_geo
from .sensors import SensorFrame, SensorSpec, build_rig, sample
from .world import (
    ActorBlueprint,
    ActorKind,
    World,
    WorldInfo,
    WorldState,
    off_road_distance,
    vehicle_blueprint,
)

LOG_MARKER = "drivebench-run"
LOG_VERSION = 1


class InfractionKind(str, enum.Enum):
    COLLISION = "collision"
    OFF_ROAD = "off_road"
    ROUTE_DEVIATION = "route_deviation"
    AGENT_TIMEOUT = "agent_timeout"
    AGENT_ERROR = "agent_error"


class TerminatedBy(str, enum.Enum):
    COMPLETED = "completed"
    MAX_FRAMES = "max_frames"
    FATAL_INFRACTION = "fatal_infraction"


@dataclass(frozen=True)
class Infraction:
    frame: int
    kind: InfractionKind
    detail: str = ""

    def as_dict(self) -> dict:
        return {"frame": self.frame, "kind": self.kind.value, "detail": self.detail}


@dataclass(frozen=True)
class HarnessConfig:
    agent_name: str
    route_path: str | Path
    ego_blueprint: ActorBlueprint = field(default_factory=vehicle_blueprint)
    step_budget_ms: float = 100.0
    max_frames: int = 2400
    completion_threshold: float = 0.99
    off_route_limit: float = 15.0
    spacing: float = 1.0
    log_path: str | Path = "drivebench_run.ndjson"

    def __post_init__(self):
        if not self.step_budget_ms > 0:
            raise OutOfRange("step_budget_ms", self.step_budget_ms)
        if not self.max_frames > 0:
            raise OutOfRange("max_frames", self.max_frames)
        if not (0 < self.completion_threshold <= 1):
            raise OutOfRange("completion_threshold", self.completion_threshold)
        if not self.off_route_limit > 0:
            raise OutOfRange("off_route_limit", self.off_route_limit)
        if not self.spacing > 0:
            raise OutOfRange("spacing", self.spacing)


@dataclass(frozen=True)
class RunResult:
    agent_name: str
    route_id: str
    seed: int
    frames_executed: int
    completion: float
    infractions: tuple[Infraction, ...]
    terminated_by: TerminatedBy
    log_path: str

    def as_dict(self) -> dict:
        return {
            "agent_name": self.agent_name,
            "route_id": self.route_id,
            "seed": self.seed,
            "frames_executed": self.frames_executed,
            "completion": self.completion,
            "infractions": [i.as_dict() for i in self.infractions],
            "terminated_by": self.terminated_by.value,
            "log_path": self.log_path,
        }


class LocalClient:
    """In-process world handle with the same surface as the wire client."""

    def __init__(self, world: World):
        self.world = world
        self._rigs = {}
        self._next_rig_id = 1

    def world_info(self) -> WorldInfo:
        return WorldInfo(world_map=self.world.world_map, seed=self.world.seed,
                         fixed_delta=self.world.fixed_delta, frame=self.world.frame)

    def spawn_actor(self, blueprint, at) -> int:
        return self.world.spawn_actor(blueprint, at)

    def apply_control(self, actor_id, action) -> None:
        self.world.apply_control(actor_id, action)

    def set_weather(self, params) -> None:
        self.world.set_weather(params)

    def set_script_route(self, actor_id, route, speed) -> None:
        self.world.set_script_route(actor_id, route, speed)

    def tick(self) -> WorldState:
        return self.world.tick()

    def get_state(self) -> WorldState:
        return self.world.state()

    def build_rig(self, ego_id: int, specs: tuple[SensorSpec, ...]) -> int:
        rig_id = self._next_rig_id
        self._next_rig_id += 1
        self._rigs[rig_id] = (build_rig(specs), ego_id)
        return rig_id

    def sample_sensors(self, rig_id: int) -> SensorFrame:
        rig, ego_id = self._rigs[rig_id]
        return sample(rig, self.world, ego_id)


def sensor_digest(frame: SensorFrame) -> str:
    w = codec.Writer()
    codec.write_sensor_frame(w, frame)
    return hashlib.sha256(w.getvalue()).hexdigest()[:16]


class _AgentWorker:
    """Runs agent steps on a dedicated thread so the harness can abandon a
    step at budget expiry; a late result from an abandoned step is discarded."""

    def __init__(self, agent):
        self._agent = agent
        self._tasks: queue.Queue = queue.Queue()
        self._results: queue.Queue = queue.Queue()
        self._generation = 0
        self._abandoned: set[int] = set()
        self._thread = threading.Thread(target=self._loop, name="agent-step", daemon=True)
        self._thread.start()

    def _loop(self):
        while True:
            item = self._tasks.get()
            if item is None:
                return
            generation, frame = item
            try:
                result = ("ok", self._agent.run_step(frame))
            except Exception as exc:
                result = ("error", exc)
            self._results.put((generation, result))

    def _drain(self):
        while True:
            try:
                generation, _ = self._results.get_nowait()
            except queue.Empty:
                return
            self._abandoned.discard(generation)

    def step(self, frame: SensorFrame, budget_s: float):
        self._drain()
        if self._abandoned:
            return ("timeout", "agent still busy with an earlier step")
        self._generation += 1
        generation = self._generation
        self._tasks.put((generation, frame))
        deadline = time.monotonic() + budget_s
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                self._abandoned.add(generation)
                return ("timeout", f"step exceeded budget of {budget_s * 1000:.0f} ms")
            try:
                got_generation, result = self._results.get(timeout=remaining)
            except queue.Empty:
                continue
            if got_generation != generation:
                self._abandoned.discard(got_generation)
                continue
            return result

    def close(self):
        self._tasks.put(None)


class Harness:
    """One agent driving one ego vehicle through one client, in lockstep."""

    def __init__(self, agent_name: str, ego_id: int, route_path, client, *,
                 spacing: float = 1.0, step_budget_ms: float = 100.0):
        resolved = resolve_agent(agent_name)
        self.agent_name = agent_name
        self.ego_id = ego_id
        self.client = client
        self.route = parse_route(Path(route_path).read_text(encoding="utf-8"))
        info = client.world_info()
        self.dense_route = interpolate_route(self.route, spacing)
        self.geo_route = to_geo(self.dense_route, info.world_map.geo_origin)
        client.get_state().actor(ego_id)  # raises NoSuchActor early

        self.agent = resolved.create()
        self._rig_id = client.build_rig(ego_id, self.agent.required_rig())
        self.agent.setup(AgentConfig(descriptor=resolved.descriptor,
                                     geo_route=self.geo_route,
                                     dense_route=self.dense_route,
                                     parameters=resolved.parameters))
        self._budget_s = step_budget_ms / 1000.0
        self._worker = _AgentWorker(self.agent)
        self._expected_frame = client.get_state().frame
        self._failures: list[tuple[InfractionKind, str]] = []
        self.last_sensor_digest = ""

    def get_action(self) -> ControlAction:
        state = self.client.get_state()
        if state.frame != self._expected_frame:
            raise OutOfLockstep(
                f"world is at frame {state.frame}, expected {self._expected_frame}: "
                "exactly one get_action per tick")
        self._expected_frame = state.frame + 1

        frame = self.client.sample_sensors(self._rig_id)
        self.last_sensor_digest = sensor_digest(frame)
        status, payload = self._worker.step(frame, self._budget_s)
        if status == "ok":
            return validate_control(payload)
        if status == "timeout":
            self._failures.append((InfractionKind.AGENT_TIMEOUT, payload))
        else:
            self._failures.append((InfractionKind.AGENT_ERROR,
                                   f"{type(payload).__name__}: {payload}"))
        return safe_stop_control()

    def take_failures(self) -> list[tuple[InfractionKind, str]]:
        failures, self._failures = self._failures, []
        return failures

    def close(self):
        self._worker.close()
        try:
            self.agent.destroy()
        except Exception:
            pass


def create_harness(agent_name: str, ego_id: int, route_path, client, *,
                   spacing: float = 1.0, step_budget_ms: float = 100.0) -> Harness:
    return Harness(agent_name, ego_id, route_path, client,
                   spacing=spacing, step_budget_ms=step_budget_ms)


# --- scenario loop -----------------------------------------------------------

def _json_line(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":")) + "\n"


def _ego_record(state: VehicleState) -> dict:
    return {"x": state.transform.x, "y": state.transform.y,
            "yaw": state.transform.yaw, "speed": state.speed,
            "yaw_rate": state.yaw_rate}


def _blueprint_record(bp: ActorBlueprint) -> dict:
    return {"kind": bp.kind.value, "length": bp.length, "width": bp.width,
            "max_wheel_angle": bp.max_wheel_angle, "wheelbase": bp.wheelbase,
            "max_accel": bp.max_accel, "max_brake_decel": bp.max_brake_decel,
            "drag": bp.drag}


def run_scenario(config: HarnessConfig, client) -> RunResult:
    """Spawn the ego at the route start and loop until done.

    Terminates on completion >= threshold, on a collision (fatal), or at
    max_frames.  Off-road and off-route excursions are recorded once each but
    do not stop the run.
    """
    if isinstance(client, World):
        client = LocalClient(client)
    route = parse_route(Path(config.route_path).read_text(encoding="utf-8"))
    info = client.world_info()
    spawn_at = route.keypoints[0]
    ego_id = client.spawn_actor(config.ego_blueprint, spawn_at)
    harness = Harness(config.agent_name, ego_id, config.route_path, client,
                      spacing=config.spacing, step_budget_ms=config.step_budget_ms)
    progress = RouteProgress(harness.dense_route)

    log_path = Path(config.log_path)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    infractions: list[Infraction] = []
    terminated_by = TerminatedBy.MAX_FRAMES
    frames_executed = 0
    completion = 0.0
    off_road_active = False
    deviation_active = False

    with open(log_path, "w", encoding="utf-8") as log:
        log.write(_json_line({
            "log": LOG_MARKER,
            "version": LOG_VERSION,
            "town": info.world_map.town,
            "route_id": route.route_id,
            "agent": config.agent_name,
            "seed": info.seed,
            "fixed_delta": info.fixed_delta,
            "ego_blueprint": _blueprint_record(config.ego_blueprint),
            "spawn": {"x": spawn_at.x, "y": spawn_at.y, "yaw": spawn_at.yaw},
            "config": {
                "max_frames": config.max_frames,
                "step_budget_ms": config.step_budget_ms,
                "completion_threshold": config.completion_threshold,
                "off_route_limit": config.off_route_limit,
                "spacing": config.spacing,
            },
        }))

        try:
            for _ in range(config.max_frames):
                action = harness.get_action()
                client.apply_control(ego_id, action)
                state = client.tick()
                frames_executed += 1
                ego = state.actor(ego_id)
                completion, cross_track = progress.update(
                    ego.state.transform.x, ego.state.transform.y)

                frame_infractions = [Infraction(state.frame, kind, detail)
                                     for kind, detail in harness.take_failures()]
                fatal = False
                for a, b in state.collisions_this_frame:
                    if ego_id in (a, b):
                        other = b if a == ego_id else a
                        frame_infractions.append(Infraction(
                            state.frame, InfractionKind.COLLISION, f"with actor {other}"))
                        fatal = True
                distance_off = off_road_distance(info.world_map, ego.state.transform)
                if distance_off > 0 and not off_road_active:
                    frame_infractions.append(Infraction(
                        state.frame, InfractionKind.OFF_ROAD, f"{distance_off:.3f} m outside"))
                off_road_active = distance_off > 0
                if cross_track > config.off_route_limit and not deviation_active:
                    frame_infractions.append(Infraction(
                        state.frame, InfractionKind.ROUTE_DEVIATION,
                        f"cross-track {cross_track:.3f} m"))
                deviation_active = cross_track > config.off_route_limit

                infractions.extend(frame_infractions)
                log.write(_json_line({
                    "frame": state.frame,
                    "sim_time": state.frame * info.fixed_delta,
                    "ego": _ego_record(ego.state),
                    "control": action.as_record(),
                    "sensors": harness.last_sensor_digest,
                    "completion": completion,
                    "cross_track": cross_track,
                    "infractions": [{"kind": i.kind.value, "detail": i.detail}
                                    for i in frame_infractions],
                }))

                if fatal:
                    terminated_by = TerminatedBy.FATAL_INFRACTION
                    break
                if completion >= config.completion_threshold:
                    terminated_by = TerminatedBy.COMPLETED
                    break

            result = RunResult(
                agent_name=config.agent_name,
                route_id=route.route_id,
                seed=info.seed,
                frames_executed=frames_executed,
                completion=completion,
                infractions=tuple(infractions),
                terminated_by=terminated_by,
                log_path=str(log_path),
            )
            footer = result.as_dict()
            footer.pop("log_path")  # keep log bytes independent of where they live
            log.write(_json_line({"result": footer}))
        finally:
            harness.close()
    return result


# --- replay ------------------------------------------------------------------

_REQUIRED_HEADER = {"log", "version", "town", "route_id", "agent", "seed",
                    "fixed_delta", "ego_blueprint", "spawn", "config"}
_REQUIRED_RECORD = {"frame", "sim_time", "ego", "control", "sensors",
                    "completion", "cross_track", "infractions"}


def _load_log(log_path) -> tuple[dict, list[dict], dict]:
    try:
        text = Path(log_path).read_text(encoding="utf-8")
    except OSError as exc:
        raise LogCorrupt(f"cannot read log: {exc}") from exc
    lines = [line for line in text.splitlines() if line.strip()]
    if len(lines) < 2:
        raise LogCorrupt("log shorter than header + footer")
    try:
        parsed = [json.loads(line) for line in lines]
    except json.JSONDecodeError as exc:
        raise LogCorrupt(f"invalid JSON at log line {exc.lineno}: {exc.msg}") from exc
    header, *records, footer = parsed
    if header.get("log") != LOG_MARKER or not _REQUIRED_HEADER <= set(header):
        raise LogCorrupt("missing or invalid header record")
    if "result" not in footer:
        raise LogCorrupt("missing footer record (log truncated?)")
    for i, rec in enumerate(records):
        if not _REQUIRED_RECORD <= set(rec):
            raise LogCorrupt(f"record {i} is missing fields")
    if footer["result"].get("frames_executed") != len(records):
        raise LogCorrupt("record count does not match frames_executed")
    return header, records, footer


def replay(log_path) -> RunResult:
    """Re-run the logged control sequence and verify the trajectory matches.

    The agent is bypassed: only the recorded actions are integrated, so any
    edit to a control or an ego state shows up as a divergence at that frame.
    """
    from .world import integrate_vehicle

    header, records, footer = _load_log(log_path)
    bp_rec = header["ego_blueprint"]
    try:
        blueprint = ActorBlueprint(
            kind=ActorKind(bp_rec["kind"]), length=bp_rec["length"], width=bp_rec["width"],
            max_wheel_angle=bp_rec["max_wheel_angle"], wheelbase=bp_rec["wheelbase"],
            max_accel=bp_rec["max_accel"], max_brake_decel=bp_rec["max_brake_decel"],
            drag=bp_rec["drag"])
        spawn = header["spawn"]
        state = VehicleState(transform=Transform(spawn["x"], spawn["y"], spawn["yaw"]))
        fixed_delta = float(header["fixed_delta"])
    except (KeyError, TypeError, OutOfRange) as exc:
        raise LogCorrupt(f"bad header: {exc}") from exc

    for i, rec in enumerate(records):
        expected_frame = i + 1
        if rec["frame"] != expected_frame:
            raise LogCorrupt(f"record {i} has frame {rec['frame']}, expected {expected_frame}")
        try:
            action = validate_control(ControlAction.from_record(rec["control"]))
        except (KeyError, OutOfRange) as exc:
            raise LogCorrupt(f"record {i} has a bad control: {exc}") from exc
        state = integrate_vehicle(state, action, blueprint, fixed_delta)
        ego = rec["ego"]
        recomputed = _ego_record(state)
        if any(recomputed[k] != ego.get(k) for k in recomputed) \
                or rec["sim_time"] != state.sim_time:
            raise DeterminismViolation(expected_frame)

    result = footer["result"]
    return RunResult(
        agent_name=result["agent_name"],
        route_id=result["route_id"],
        seed=result["seed"],
        frames_executed=result["frames_executed"],
        completion=result["completion"],
        infractions=tuple(Infraction(i["frame"], InfractionKind(i["kind"]), i["detail"])
                          for i in result["infractions"]),
        terminated_by=TerminatedBy(result["terminated_by"]),
        log_path=str(log_path),
    )
