import socket
import struct
import threading
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

import drivebench
from drivebench import codec, wire
from drivebench.core import ControlAction, Transform
from drivebench.errors import (
    BindFailure,
    DuplicateRequest,
    Forbidden,
    NoRoads,
    VersionMismatch,
    WireError,
)
from drivebench.harness import HarnessConfig, LocalClient, run_scenario
from drivebench.sensors import GridSpec, SensorKind, SensorSpec
from drivebench.world import WeatherParams, World, vehicle_blueprint


@pytest.fixture
def server(straight_map):
    world = World(straight_map, seed=0)
    with wire.WorldServer(world) as server:
        yield server


@pytest.fixture
def authority(server):
    with wire.connect("127.0.0.1", server.port) as client:
        yield client


class TestFraming:
    def test_envelope_layout_matches_struct_oracle(self):
        env = wire.Envelope(version=1, request_id=7, msg_type=0x04, payload=b"abc")
        data = wire.encode_envelope(env)
        assert data[:4] == struct.pack(">I", 1 + 8 + 1 + 3)
        assert data[4] == 1
        assert data[5:13] == struct.pack(">Q", 7)
        assert data[13] == 0x04
        assert data[14:] == b"abc"

    def test_round_trip_over_socketpair(self):
        a, b = socket.socketpair()
        env = wire.Envelope(1, 123456789, 0x22, bytes(range(32)))
        a.sendall(wire.encode_envelope(env))
        assert wire.read_envelope(b) == env
        a.close()
        b.close()

    def test_oversized_length_rejected(self):
        a, b = socket.socketpair()
        a.sendall(struct.pack(">I", wire.MAX_ENVELOPE_BYTES + 1))
        with pytest.raises(WireError):
            wire.read_envelope(b)
        a.close()
        b.close()


class TestCodecRoundTrips:
    def test_control_action_exact(self):
        action = ControlAction(0.123456789, -0.5, 0.25, True, False, True, -1)
        w = codec.Writer()
        codec.write_control(w, action)
        assert codec.read_control(codec.Reader(w.getvalue())) == action

    @given(st.floats(0, 1), st.floats(-1, 1), st.floats(0, 1),
           st.booleans(), st.booleans(), st.integers(-1, 6))
    @settings(max_examples=80, deadline=None)
    def test_control_action_round_trip_is_bit_exact(self, throttle, steer, brake,
                                                    hand_brake, reverse, gear):
        action = ControlAction(throttle, steer, brake, hand_brake, reverse, False, gear)
        w = codec.Writer()
        codec.write_control(w, action)
        back = codec.read_control(codec.Reader(w.getvalue()))
        assert back == action  # IEEE-754 doubles carry through unchanged

    @given(st.floats(-1e9, 1e9), st.floats(-1e9, 1e9), st.floats(-10, 10))
    @settings(max_examples=80, deadline=None)
    def test_transform_round_trip(self, x, y, yaw):
        t = Transform(x, y, yaw)
        w = codec.Writer()
        codec.write_transform(w, t)
        assert codec.read_transform(codec.Reader(w.getvalue())) == t

    def test_truncated_payload_raises_wire_error(self):
        w = codec.Writer()
        codec.write_control(w, ControlAction())
        with pytest.raises(WireError):
            codec.read_control(codec.Reader(w.getvalue()[:-1]))

    def test_sensor_spec_with_grid(self):
        spec = SensorSpec("bev", SensorKind.BEV_OCCUPANCY,
                          mount=Transform(1.0, -0.5, 0.25),
                          noise_stddev=0.0, grid=GridSpec(40, 40, 0.5))
        w = codec.Writer()
        codec.write_sensor_spec(w, spec)
        assert codec.read_sensor_spec(codec.Reader(w.getvalue())) == spec

    def test_world_state_survives_the_wire(self, straight_map):
        world = World(straight_map, seed=9)
        world.spawn_actor(vehicle_blueprint(), Transform(0, 0, 0))
        world.apply_control(1, ControlAction(throttle=0.8))
        state = world.tick()
        w = codec.Writer()
        codec.write_world_state(w, state)
        back = codec.read_world_state(codec.Reader(w.getvalue()))
        assert back == state


class TestServe:
    def test_ephemeral_port_reported(self, server):
        assert server.port > 0

    def test_bind_conflict(self, server, straight_map):
        with pytest.raises(BindFailure):
            wire.WorldServer(World(straight_map), port=server.port)

    def test_bad_map_fails_before_binding(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"town": "x", "geo_origin": {"latitude": 0, "longitude": 0}, "roads": []}')
        with pytest.raises(NoRoads):
            wire.serve("127.0.0.1", 0, bad)


class TestRoles:
    def test_first_authority_granted(self, authority):
        assert authority.role == wire.ROLE_AUTHORITY
        assert not authority.downgraded

    def test_second_authority_downgraded(self, server, authority):
        with wire.connect("127.0.0.1", server.port) as second:
            assert second.role == wire.ROLE_OBSERVER
            assert second.downgraded

    def test_observer_cannot_tick(self, server, authority):
        with wire.connect("127.0.0.1", server.port) as observer:
            frame_before = observer.get_state().frame
            with pytest.raises(Forbidden):
                observer.tick()
            assert observer.get_state().frame == frame_before

    def test_observer_cannot_spawn_or_control(self, server, authority):
        ego = authority.spawn_actor(vehicle_blueprint(), Transform(0, 0, 0))
        with wire.connect("127.0.0.1", server.port) as observer:
            with pytest.raises(Forbidden):
                observer.spawn_actor(vehicle_blueprint(), Transform(50, 0, 0))
            with pytest.raises(Forbidden):
                observer.apply_control(ego, ControlAction(throttle=1.0))
            with pytest.raises(Forbidden):
                observer.set_weather(WeatherParams())

    def test_observer_may_script_npcs(self, server, authority):
        from drivebench.routes import RouteFile, interpolate_route
        from drivebench.world import pedestrian_blueprint

        walker = authority.spawn_actor(pedestrian_blueprint(), Transform(5, 5, 0))
        route = interpolate_route(
            RouteFile("npc", "strip", (Transform(5, 5, 0), Transform(15, 5, 0))), 1.0)
        with wire.connect("127.0.0.1", server.port) as observer:
            observer.set_script_route(walker, route, speed=2.0)
        for _ in range(10):
            authority.tick()
        moved = authority.get_state().actor(walker).state
        assert moved.transform.x == pytest.approx(5 + 2.0 * 10 * 0.05, rel=1e-12)


class TestRemoteCalls:
    def test_tick_advances_exactly_one_frame(self, authority):
        before = authority.get_state().frame
        state = authority.tick()
        assert state.frame == before + 1

    def test_read_your_writes(self, authority):
        ego = authority.spawn_actor(vehicle_blueprint(), Transform(0, 0, 0))
        state = authority.get_state()
        assert [a.actor_id for a in state.actors] == [ego]

    def test_sensor_sampling_over_the_wire(self, authority):
        ego = authority.spawn_actor(vehicle_blueprint(), Transform(0, 0, 0))
        rig_id = authority.build_rig(ego, drivebench.required_rig_for("pp_fast"))
        frame = authority.sample_sensors(rig_id)
        assert set(frame.readings) == {"gnss", "speedometer", "imu"}

    def test_world_info_carries_the_map(self, authority, straight_map):
        info = authority.world_info()
        assert info.world_map.town == straight_map.town
        assert info.fixed_delta == 0.05

    def test_unknown_msg_type_keeps_session_alive(self, server, authority):
        with pytest.raises(WireError):
            authority._channel.request(0x6E)
        assert authority.get_state().frame == 0  # session still usable

    def test_malformed_payload_keeps_session_alive(self, server, authority):
        with pytest.raises(WireError):
            authority._channel.request(wire.APPLY_CONTROL, b"\x01")
        assert authority.get_state().frame == 0

    def test_non_monotonic_script_route_rejected(self, server, authority):
        from drivebench.errors import OutOfRange
        from drivebench.world import pedestrian_blueprint

        walker = authority.spawn_actor(pedestrian_blueprint(), Transform(5, 5, 0))
        w = codec.Writer()
        w.u32(walker)
        w.u32(2)
        for values in ((0.0, 0.0, 0.0, 5.0), (1.0, 0.0, 0.0, 2.0)):  # arc decreasing
            for v in values:
                w.f64(v)
        w.f64(1.0)
        w.u32(0)
        w.f64(2.0)
        with pytest.raises(OutOfRange):
            authority._channel.request(wire.SET_SCRIPT_ROUTE, w.getvalue())
        assert authority.get_state().frame == 0  # world untouched, session alive

    def test_duplicate_request_id_rejected(self, server):
        sock = socket.create_connection(("127.0.0.1", server.port))
        hello = codec.Writer()
        hello.u8(wire.ROLE_AUTHORITY)
        sock.sendall(wire.encode_envelope(wire.Envelope(1, 5, wire.HELLO, hello.getvalue())))
        wire.read_envelope(sock)
        sock.sendall(wire.encode_envelope(wire.Envelope(1, 5, wire.GET_STATE, b"")))
        reply = wire.read_envelope(sock)
        assert reply.msg_type == wire.ERROR_TYPE
        with pytest.raises(DuplicateRequest):
            wire._raise_error(reply.payload)
        sock.close()

    def test_version_mismatch_reported(self, server):
        sock = socket.create_connection(("127.0.0.1", server.port))
        sock.sendall(wire.encode_envelope(wire.Envelope(2, 1, wire.GET_STATE, b"")))
        reply = wire.read_envelope(sock)
        assert reply.msg_type == wire.ERROR_TYPE
        with pytest.raises(VersionMismatch) as exc:
            wire._raise_error(reply.payload)
        assert exc.value.server_version == wire.PROTOCOL_VERSION
        sock.close()


class TestTransparency:
    def _run(self, client_factory, log_path):
        config = HarnessConfig(
            agent_name="pp_fast",
            route_path=drivebench.data_path("straight200_route.xml"),
            max_frames=2400,
            log_path=log_path,
        )
        return run_scenario(config, client_factory())

    def test_wire_run_matches_local_run_bit_for_bit(self, straight_map, tmp_path):
        local = self._run(lambda: LocalClient(World(straight_map, seed=0)),
                          tmp_path / "local.ndjson")
        server = wire.WorldServer(World(straight_map, seed=0))
        try:
            client = wire.connect("127.0.0.1", server.port)
            remote = self._run(lambda: client, tmp_path / "remote.ndjson")
            client.close()
        finally:
            server.close()
        assert local.frames_executed == remote.frames_executed
        local_lines = Path(tmp_path / "local.ndjson").read_bytes()
        remote_lines = Path(tmp_path / "remote.ndjson").read_bytes()
        assert local_lines == remote_lines

    def test_polling_observers_do_not_perturb_the_run(self, straight_map, tmp_path):
        server = wire.WorldServer(World(straight_map, seed=0))
        stop = threading.Event()

        def poll():
            with wire.connect("127.0.0.1", server.port, wire.ROLE_OBSERVER) as observer:
                while not stop.is_set():
                    observer.get_state()

        watchers = [threading.Thread(target=poll) for _ in range(2)]
        try:
            client = wire.connect("127.0.0.1", server.port)
            for t in watchers:
                t.start()
            result = self._run(lambda: client, tmp_path / "watched.ndjson")
            client.close()
        finally:
            stop.set()
            for t in watchers:
                t.join(timeout=5)
            server.close()
        baseline = self._run(lambda: LocalClient(World(straight_map, seed=0)),
                             tmp_path / "baseline.ndjson")
        assert Path(tmp_path / "watched.ndjson").read_bytes() == \
            Path(tmp_path / "baseline.ndjson").read_bytes()
        assert result.completion >= 0.99
