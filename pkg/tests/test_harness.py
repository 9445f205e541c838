import json
import time
from pathlib import Path

import pytest

import drivebench
from drivebench.agents import NoopAgent, ResolvedAgent, register_family
from drivebench.core import ControlAction, Transform, safe_stop_control
from drivebench.errors import (
    DeterminismViolation,
    LogCorrupt,
    NoSuchActor,
    OutOfLockstep,
    UnknownAgent,
)
from drivebench.harness import (
    HarnessConfig,
    InfractionKind,
    LocalClient,
    TerminatedBy,
    create_harness,
    replay,
    run_scenario,
)
from drivebench.world import World, static_prop_blueprint, vehicle_blueprint


class _ScriptedAgent(NoopAgent):
    """Test-only agent family returning a fixed action, optionally slow/broken."""

    def __init__(self, action=None, sleep_s=0.0, explode=False):
        super().__init__()
        self._action = action or ControlAction()
        self._sleep_s = sleep_s
        self._explode = explode

    def run_step(self, frame):
        super().run_step(frame)
        if self._sleep_s:
            time.sleep(self._sleep_s)
        if self._explode:
            raise RuntimeError("synthetic agent failure")
        return self._action


def _register_test_families():
    rig = NoopAgent.RIG

    def make(family, **kwargs):
        def resolver(descriptor):
            return ResolvedAgent(descriptor, {}, rig, lambda: _ScriptedAgent(**kwargs))
        register_family(family, resolver)

    make("sleepy", sleep_s=0.08)
    make("crashy", explode=True)
    make("drifty", action=ControlAction(throttle=1.0, steer=-1.0))


_register_test_families()


@pytest.fixture
def client(straight_world):
    return LocalClient(straight_world)


@pytest.fixture
def ego(client, straight_route_path):
    route = drivebench.parse_route(Path(straight_route_path).read_text())
    return client.spawn_actor(vehicle_blueprint(), route.keypoints[0])


def make_config(tmp_path, **overrides):
    defaults = dict(
        agent_name="pp_fast",
        route_path=drivebench.data_path("straight200_route.xml"),
        log_path=tmp_path / "run.ndjson",
    )
    defaults.update(overrides)
    return HarnessConfig(**defaults)


class TestCreateHarness:
    def test_happy_path(self, client, ego, straight_route_path):
        harness = create_harness("pp_fast", ego, straight_route_path, client)
        assert harness.route.route_id == "straight200"
        harness.close()

    def test_unknown_agent(self, client, ego, straight_route_path):
        with pytest.raises(UnknownAgent):
            create_harness("bogus_x", ego, straight_route_path, client)

    def test_unknown_ego(self, client, straight_route_path):
        with pytest.raises(NoSuchActor):
            create_harness("pp_fast", 99, straight_route_path, client)

    def test_distant_route_is_permitted(self, client, ego, tmp_path):
        far = tmp_path / "far.xml"
        far.write_text('<route id="far" town="strip">'
                       '<waypoint x="500" y="500" yaw="0"/>'
                       '<waypoint x="600" y="500" yaw="0"/></route>')
        harness = create_harness("pp_fast", ego, far, client)
        harness.close()


class TestGetAction:
    def test_first_action_accelerates_straight(self, client, ego, straight_route_path):
        harness = create_harness("pp_fast", ego, straight_route_path, client)
        action = harness.get_action()
        assert action.throttle > 0
        assert abs(action.steer) < 1e-6
        assert action.brake == 0.0
        harness.close()

    def test_two_calls_without_tick_break_lockstep(self, client, ego, straight_route_path):
        harness = create_harness("pp_fast", ego, straight_route_path, client)
        harness.get_action()
        with pytest.raises(OutOfLockstep):
            harness.get_action()
        harness.close()

    def test_two_ticks_without_action_break_lockstep(self, client, ego, straight_route_path):
        harness = create_harness("pp_fast", ego, straight_route_path, client)
        client.tick()
        client.tick()
        with pytest.raises(OutOfLockstep):
            harness.get_action()
        harness.close()

    def test_sleeping_agent_yields_safe_stop(self, client, ego, straight_route_path):
        harness = create_harness("sleepy", ego, straight_route_path, client,
                                 step_budget_ms=20.0)
        action = harness.get_action()
        assert action == safe_stop_control()
        failures = harness.take_failures()
        assert failures and failures[0][0] is InfractionKind.AGENT_TIMEOUT
        harness.close()

    def test_crashing_agent_yields_safe_stop(self, client, ego, straight_route_path):
        harness = create_harness("crashy", ego, straight_route_path, client)
        action = harness.get_action()
        assert action == safe_stop_control()
        failures = harness.take_failures()
        assert failures and failures[0][0] is InfractionKind.AGENT_ERROR
        assert "synthetic agent failure" in failures[0][1]
        harness.close()


class TestRunScenario:
    def test_pp_fast_completes_straight_route(self, straight_world, tmp_path):
        result = run_scenario(make_config(tmp_path), straight_world)
        assert result.terminated_by is TerminatedBy.COMPLETED
        assert result.completion >= 0.99
        assert result.infractions == ()
        assert result.frames_executed <= 2400

    def test_noop_times_out_at_max_frames(self, straight_world, tmp_path):
        result = run_scenario(make_config(tmp_path, agent_name="noop", max_frames=100),
                              straight_world)
        assert result.terminated_by is TerminatedBy.MAX_FRAMES
        assert result.frames_executed == 100
        assert result.completion <= 0.01

    def test_log_structure_matches_run(self, straight_world, tmp_path):
        config = make_config(tmp_path, agent_name="noop", max_frames=7)
        result = run_scenario(config, straight_world)
        lines = [json.loads(line) for line in
                 Path(config.log_path).read_text().splitlines()]
        header, *records, footer = lines
        assert header["log"] == "drivebench-run"
        assert header["agent"] == "noop"
        assert len(records) == result.frames_executed == 7
        assert [r["frame"] for r in records] == list(range(1, 8))
        assert set(records[0]["control"]) == {"throttle", "steer", "brake", "hand_brake",
                                              "reverse", "manual_gear_shift", "gear"}
        assert footer["result"]["terminated_by"] == "max_frames"

    def test_drifting_agent_records_nonfatal_infractions(self, straight_world, tmp_path):
        # full right lock circles with ~8 m diameter, so a 5 m corridor is left
        config = make_config(tmp_path, agent_name="drifty", max_frames=300,
                             off_route_limit=5.0)
        result = run_scenario(config, straight_world)
        kinds = {infraction.kind for infraction in result.infractions}
        assert InfractionKind.OFF_ROAD in kinds
        assert InfractionKind.ROUTE_DEVIATION in kinds
        assert InfractionKind.COLLISION not in kinds
        assert result.terminated_by is TerminatedBy.MAX_FRAMES  # deviations are not fatal

    def test_collision_with_prop_is_fatal(self, straight_world, tmp_path):
        straight_world.spawn_actor(static_prop_blueprint(), Transform(100.0, 0.0, 0.0))
        result = run_scenario(make_config(tmp_path), straight_world)
        assert result.terminated_by is TerminatedBy.FATAL_INFRACTION
        assert any(i.kind is InfractionKind.COLLISION for i in result.infractions)

    def test_timeout_run_terminates_cleanly(self, straight_world, tmp_path):
        config = make_config(tmp_path, agent_name="sleepy", max_frames=12,
                             step_budget_ms=20.0)
        result = run_scenario(config, straight_world)
        assert result.terminated_by is TerminatedBy.MAX_FRAMES
        assert sum(1 for i in result.infractions
                   if i.kind is InfractionKind.AGENT_TIMEOUT) >= 1


class TestReplay:
    def test_fresh_log_replays_identically(self, straight_world, tmp_path):
        config = make_config(tmp_path)
        result = run_scenario(config, straight_world)
        replayed = replay(config.log_path)
        assert replayed.as_dict() == result.as_dict() | {"log_path": str(config.log_path)}

    def test_tampered_state_detected_at_frame(self, straight_world, tmp_path):
        config = make_config(tmp_path)
        run_scenario(config, straight_world)
        lines = Path(config.log_path).read_text().splitlines()
        record = json.loads(lines[50])
        assert record["frame"] == 50
        record["ego"]["x"] += 0.25
        lines[50] = json.dumps(record, separators=(",", ":"))
        Path(config.log_path).write_text("\n".join(lines) + "\n")
        with pytest.raises(DeterminismViolation) as exc:
            replay(config.log_path)
        assert exc.value.frame == 50

    def test_tampered_control_detected(self, straight_world, tmp_path):
        config = make_config(tmp_path)
        run_scenario(config, straight_world)
        lines = Path(config.log_path).read_text().splitlines()
        record = json.loads(lines[30])
        record["control"]["throttle"] = 0.0
        lines[30] = json.dumps(record, separators=(",", ":"))
        Path(config.log_path).write_text("\n".join(lines) + "\n")
        with pytest.raises(DeterminismViolation) as exc:
            replay(config.log_path)
        assert exc.value.frame == 30

    def test_truncated_log_is_corrupt(self, straight_world, tmp_path):
        config = make_config(tmp_path)
        run_scenario(config, straight_world)
        lines = Path(config.log_path).read_text().splitlines()
        Path(config.log_path).write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(LogCorrupt):
            replay(config.log_path)

    def test_missing_log_is_corrupt(self, tmp_path):
        with pytest.raises(LogCorrupt):
            replay(tmp_path / "nope.ndjson")


class TestAgentSwap:
    def test_only_the_name_changes_between_agents(self, straight_map, tmp_path):
        results = {}
        for name in ("pp_fast", "pp_safe_s1"):
            world = World(straight_map, seed=0)
            config = make_config(tmp_path / name, agent_name=name)
            results[name] = run_scenario(config, world)
        assert all(r.terminated_by is TerminatedBy.COMPLETED for r in results.values())
        assert all(r.infractions == () for r in results.values())
