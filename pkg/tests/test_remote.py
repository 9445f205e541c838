import shutil
import socket
import subprocess
import threading
import time
from pathlib import Path

import pytest

import drivebench
from drivebench import codec, wire
from drivebench.agents import resolve_agent
from drivebench.core import ControlAction
from drivebench.errors import MalformedName
from drivebench.harness import HarnessConfig, InfractionKind, TerminatedBy, run_scenario
from drivebench.remote import register_external
from drivebench.sensors import SensorKind, SensorSpec
from drivebench.world import World

ROUTE = drivebench.data_path("straight200_route.xml")
MAP = drivebench.data_path("straight200_map.json")

RIG = (
    SensorSpec("gnss", SensorKind.GNSS),
    SensorSpec("speedometer", SensorKind.SPEEDOMETER),
    SensorSpec("imu", SensorKind.IMU),
)


class ScriptedAgentPeer:
    """Minimal in-process agent endpoint for exercising the ext: adapter."""

    def __init__(self, step_delay_s=0.0):
        self.step_delay_s = step_delay_s
        self.setups = 0
        self.destroys = 0
        self._listener = socket.create_server(("127.0.0.1", 0))
        self.port = self._listener.getsockname()[1]
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self._thread.start()

    def _serve(self):
        while True:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            threading.Thread(target=self._session, args=(conn,), daemon=True).start()

    def _session(self, conn):
        try:
            while True:
                env = wire.read_envelope(conn)
                w = codec.Writer()
                if env.msg_type == wire.AGENT_HELLO:
                    w.u32(len(RIG))
                    for spec in RIG:
                        codec.write_sensor_spec(w, spec)
                elif env.msg_type == wire.AGENT_SETUP:
                    r = codec.Reader(env.payload)
                    r.string()
                    codec.read_parameters(r)
                    codec.read_dense_route(r)
                    codec.read_geo_route(r)
                    self.setups += 1
                elif env.msg_type == wire.AGENT_STEP:
                    codec.read_sensor_frame(codec.Reader(env.payload))
                    if self.step_delay_s:
                        time.sleep(self.step_delay_s)
                    codec.write_control(w, ControlAction())
                elif env.msg_type == wire.AGENT_DESTROY:
                    self.destroys += 1
                reply = wire.Envelope(wire.PROTOCOL_VERSION, env.request_id,
                                      env.msg_type | wire.RESPONSE_FLAG, w.getvalue())
                conn.sendall(wire.encode_envelope(reply))
        except (ConnectionError, OSError, wire.WireError):
            pass
        finally:
            conn.close()

    def close(self):
        self._listener.close()


@pytest.fixture
def peer():
    server = ScriptedAgentPeer()
    yield server
    server.close()


class TestExtNames:
    @pytest.mark.parametrize("bad", ["ext:nohost", "ext::7001", "ext:h:notaport", "ext:h:0"])
    def test_malformed_endpoints(self, bad):
        with pytest.raises(MalformedName):
            resolve_agent(bad)

    def test_register_external_requires_prefix(self):
        with pytest.raises(MalformedName):
            register_external("pp_fast")

    def test_resolves_without_connecting(self):
        # no listener on this port; resolution alone must not touch it
        resolved = resolve_agent("ext:127.0.0.1:9")
        assert resolved.descriptor.family == "ext"


class TestExtLifecycle:
    def test_endpoint_down_fails_at_harness_creation(self, tmp_path):
        probe = socket.create_server(("127.0.0.1", 0))
        dead_port = probe.getsockname()[1]
        probe.close()
        config = HarnessConfig(agent_name=f"ext:127.0.0.1:{dead_port}",
                               route_path=ROUTE, max_frames=5,
                               log_path=tmp_path / "down.ndjson")
        with pytest.raises(ConnectionRefusedError):
            run_scenario(config, World(drivebench.load_map_path(MAP)))

    def test_scripted_peer_completes_setup_and_runs(self, peer, tmp_path):
        config = HarnessConfig(agent_name=f"ext:127.0.0.1:{peer.port}",
                               route_path=ROUTE, max_frames=10,
                               log_path=tmp_path / "ext.ndjson")
        result = run_scenario(config, World(drivebench.load_map_path(MAP)))
        assert peer.setups == 1
        assert result.terminated_by is TerminatedBy.MAX_FRAMES
        assert result.frames_executed == 10
        assert result.infractions == ()
        assert peer.destroys == 1  # harness cleanup sends the destroy message

    def test_stalling_peer_follows_safe_stop_path(self, tmp_path):
        slow = ScriptedAgentPeer(step_delay_s=0.08)
        try:
            config = HarnessConfig(agent_name=f"ext:127.0.0.1:{slow.port}",
                                   route_path=ROUTE, max_frames=8,
                                   step_budget_ms=20.0,
                                   log_path=tmp_path / "stall.ndjson")
            result = run_scenario(config, World(drivebench.load_map_path(MAP)))
            assert result.terminated_by is TerminatedBy.MAX_FRAMES
            assert sum(1 for i in result.infractions
                       if i.kind is InfractionKind.AGENT_TIMEOUT) >= 1
        finally:
            slow.close()


NODE_DIST = Path(__file__).resolve().parents[1] / "remote-agent" / "dist" / "server.js"
needs_node = pytest.mark.skipif(
    shutil.which("node") is None or not NODE_DIST.exists(),
    reason="remote agent bundle not built (npm run build in remote-agent/)")


@pytest.fixture
def node_agent():
    proc = subprocess.Popen(["node", str(NODE_DIST), "--port", "0"],
                            stdout=subprocess.PIPE, text=True)
    port = None
    for _ in range(50):
        line = proc.stdout.readline()
        if line.startswith("agent listening"):
            port = int(line.rsplit(" ", 1)[1])
            break
    if port is None:
        proc.terminate()
        pytest.fail("node agent did not report a port")
    yield port
    proc.terminate()
    proc.wait(timeout=10)


@needs_node
class TestNodeAgentSessions:
    def test_declares_the_pursuit_rig(self, node_agent):
        specs = drivebench.required_rig_for(f"ext:127.0.0.1:{node_agent}")
        assert [s.kind for s in specs] == [SensorKind.GNSS, SensorKind.SPEEDOMETER,
                                           SensorKind.IMU]

    def test_malformed_frame_closes_session(self, node_agent):
        sock = socket.create_connection(("127.0.0.1", node_agent))
        # a syntactically valid envelope whose AGENT_SETUP payload is garbage
        sock.sendall(wire.encode_envelope(
            wire.Envelope(wire.PROTOCOL_VERSION, 1, wire.AGENT_SETUP, b"\xff\xff")))
        deadline = time.monotonic() + 5.0
        closed = False
        sock.settimeout(0.5)
        while time.monotonic() < deadline:
            try:
                chunk = sock.recv(4096)
            except socket.timeout:
                continue
            if not chunk:
                closed = True
                break
        sock.close()
        assert closed

    def test_destroy_keeps_the_process_alive_for_the_next_setup(self, node_agent, tmp_path):
        name = f"ext:127.0.0.1:{node_agent}"
        for attempt in range(2):
            config = HarnessConfig(agent_name=name, route_path=ROUTE, max_frames=5,
                                   step_budget_ms=500.0,
                                   log_path=tmp_path / f"n{attempt}.ndjson")
            result = run_scenario(config, World(drivebench.load_map_path(MAP)))
            assert result.frames_executed == 5

    def test_curved_route_matches_builtin_controller(self, node_agent, tmp_path):
        # corner-cutting stresses the cursor and lookahead interpolation
        route = tmp_path / "corner.xml"
        route.write_text('<route id="corner" town="strip">'
                         '<waypoint x="0" y="0" yaw="0"/>'
                         '<waypoint x="60" y="0" yaw="0"/>'
                         '<waypoint x="60" y="60" yaw="90"/></route>')
        world_doc = tmp_path / "corner_map.json"
        world_doc.write_text(
            '{"town": "corner", '
            '"geo_origin": {"latitude": 45.0, "longitude": 8.0, "altitude": 0.0}, '
            '"roads": [{"centerline": [[-20, 0], [60, 0], [60, 80]], "width": 8.0}], '
            '"spawn_points": []}')

        def run(name, label):
            config = HarnessConfig(agent_name=name, route_path=route, max_frames=400,
                                   step_budget_ms=500.0,
                                   log_path=tmp_path / f"{label}.ndjson")
            return run_scenario(config, World(drivebench.load_map_path(world_doc), seed=0))

        builtin = run("pp_fast", "builtin")
        remote = run(f"ext:127.0.0.1:{node_agent}", "remote")
        assert builtin.frames_executed == remote.frames_executed
        import json
        ours = [json.loads(l)["control"] for l in
                (tmp_path / "builtin.ndjson").read_text().splitlines()[1:-1]]
        theirs = [json.loads(l)["control"] for l in
                  (tmp_path / "remote.ndjson").read_text().splitlines()[1:-1]]
        for frame, (a, b) in enumerate(zip(ours, theirs)):
            for field in ("throttle", "steer", "brake"):
                assert abs(a[field] - b[field]) <= 1e-6, (frame, field, a[field], b[field])
