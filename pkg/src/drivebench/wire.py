"""Client/world split over a length-prefixed binary protocol.

Envelope layout (all integers big-endian):

    u32 length     -- byte count of everything after this field
    u8  version    -- protocol version; mismatches are rejected explicitly
    u64 request_id -- unique per session; duplicates are rejected
    u8  msg_type   -- see the table below
    ... payload    -- canonical binary encoding (codec module)

Responses echo the request id with ``msg_type | 0x80``; errors use 0xFF with
a code, message, and numeric detail.  The world advances only on the single
authority session's tick; extra clients are downgraded to observers, which
may read state and script NPCs but cannot mutate the world outcome.
"""

from __future__ import annotations

import hashlib
import logging
import socket
import struct
import threading
from dataclasses import dataclass

from . import codec
from .core import ControlAction, Transform
from .errors import (
    BindFailure,
    DuplicateRequest,
    Forbidden,
    NoSuchActor,
    NotAVehicle,
    OutOfRange,
    SpawnCollision,
    VersionMismatch,
    WireError,
)
from .routes import DenseRoute
from .sensors import SensorFrame, SensorRig, SensorSpec, build_rig, sample
from .world import ActorBlueprint, WeatherParams, World, WorldState, load_map_path

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
MAX_ENVELOPE_BYTES = 16 * 1024 * 1024
_HEADER = struct.Struct(">IBQB")  # length, version, request_id, msg_type

# msg_type table, frozen for protocol version 1
HELLO = 0x01
SPAWN_ACTOR = 0x02
APPLY_CONTROL = 0x03
TICK = 0x04
GET_STATE = 0x05
SET_WEATHER = 0x06
BUILD_RIG = 0x07
SAMPLE_SENSORS = 0x08
SET_SCRIPT_ROUTE = 0x09
WORLD_INFO = 0x0A
# out-of-process agent range
AGENT_HELLO = 0x20
AGENT_SETUP = 0x21
AGENT_STEP = 0x22
AGENT_DESTROY = 0x23

RESPONSE_FLAG = 0x80
ERROR_TYPE = 0xFF

ROLE_OBSERVER = 0
ROLE_AUTHORITY = 1

_AUTHORITY_ONLY = {TICK, APPLY_CONTROL, SET_WEATHER, SPAWN_ACTOR}

# error codes
ERR_FORBIDDEN = 1
ERR_VERSION_MISMATCH = 2
ERR_DUPLICATE_REQUEST = 3
ERR_UNKNOWN_MSG_TYPE = 4
ERR_BAD_REQUEST = 5
ERR_SPAWN_COLLISION = 6
ERR_NO_SUCH_ACTOR = 7
ERR_NOT_A_VEHICLE = 8
ERR_OUT_OF_RANGE = 9
ERR_INTERNAL = 10


@dataclass(frozen=True)
class Envelope:
    version: int
    request_id: int
    msg_type: int
    payload: bytes


def encode_envelope(env: Envelope) -> bytes:
    body_len = 1 + 8 + 1 + len(env.payload)
    return _HEADER.pack(body_len, env.version, env.request_id, env.msg_type) + env.payload


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = sock.recv(remaining)
        if not chunk:
            raise ConnectionError("peer closed the connection")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_envelope(sock: socket.socket) -> Envelope:
    length = struct.unpack(">I", _recv_exact(sock, 4))[0]
    if length < 10 or length > MAX_ENVELOPE_BYTES:
        raise WireError(f"envelope length {length} out of bounds")
    body = _recv_exact(sock, length)
    version, request_id, msg_type = struct.unpack(">BQB", body[:10])
    return Envelope(version, request_id, msg_type, body[10:])


def _error_payload(code: int, message: str, detail: int = 0) -> bytes:
    w = codec.Writer()
    w.u8(code)
    w.string(message)
    w.i64(detail)
    return w.getvalue()


def _raise_error(payload: bytes):
    r = codec.Reader(payload)
    code = r.u8()
    message = r.string()
    detail = r.i64()
    if code == ERR_FORBIDDEN:
        raise Forbidden(message)
    if code == ERR_VERSION_MISMATCH:
        raise VersionMismatch(detail)
    if code == ERR_DUPLICATE_REQUEST:
        raise DuplicateRequest(detail)
    if code == ERR_SPAWN_COLLISION:
        raise SpawnCollision(detail)
    if code == ERR_NO_SUCH_ACTOR:
        raise NoSuchActor(detail)
    if code == ERR_NOT_A_VEHICLE:
        raise NotAVehicle(detail)
    if code == ERR_OUT_OF_RANGE:
        raise OutOfRange("remote", message)
    raise WireError(f"error {code}: {message}")


def state_digest(state: WorldState) -> int:
    w = codec.Writer()
    codec.write_world_state(w, state)
    return int.from_bytes(hashlib.sha256(w.getvalue()).digest()[:8], "big")


# --- server -----------------------------------------------------------------

class _Session:
    def __init__(self, conn: socket.socket, peer, session_id: int):
        self.conn = conn
        self.peer = peer
        self.session_id = session_id
        self.role = ROLE_OBSERVER
        self.seen_ids: set[int] = set()
        self.write_lock = threading.Lock()

    def send(self, env: Envelope):
        with self.write_lock:
            self.conn.sendall(encode_envelope(env))


class WorldServer:
    """Owns one world; serializes every world operation through one lock."""

    def __init__(self, world: World, host: str = "127.0.0.1", port: int = 0):
        self.world = world
        try:
            self._listener = socket.create_server((host, port))
        except OSError as exc:
            raise BindFailure(f"cannot bind {host}:{port}: {exc}") from exc
        self.host, self.port = self._listener.getsockname()[:2]
        self._world_lock = threading.Lock()
        self._authority_lock = threading.Lock()
        self._authority_session: int | None = None
        self._rigs: dict[int, tuple[SensorRig, int]] = {}
        self._next_rig_id = 1
        self._next_session_id = 1
        self._closing = False
        self._threads: list[threading.Thread] = []
        self._sessions: set[_Session] = set()
        self._accept_thread = threading.Thread(target=self._accept_loop,
                                               name="wire-accept", daemon=True)
        self._accept_thread.start()
        log.info("serving world %r on %s:%d", world.world_map.town, self.host, self.port)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def wait(self, timeout: float | None = None) -> bool:
        """Block until the server stops accepting; True while still alive."""
        self._accept_thread.join(timeout)
        return self._accept_thread.is_alive()

    def close(self):
        self._closing = True
        # a blocked accept() is not reliably woken by close(); poke it
        try:
            with socket.create_connection((self.host, self.port), timeout=0.5):
                pass
        except OSError:
            pass
        try:
            self._listener.close()
        except OSError:
            pass
        for session in list(self._sessions):
            try:
                session.conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
        self._accept_thread.join(timeout=2.0)
        for t in self._threads:
            t.join(timeout=2.0)

    def _accept_loop(self):
        while not self._closing:
            try:
                conn, peer = self._listener.accept()
            except OSError:
                return
            if self._closing:
                conn.close()
                return
            session = _Session(conn, peer, self._next_session_id)
            self._next_session_id += 1
            t = threading.Thread(target=self._serve_session, args=(session,),
                                 name=f"wire-session-{session.session_id}", daemon=True)
            self._threads.append(t)
            t.start()

    def _serve_session(self, session: _Session):
        log.info("session %d connected from %s", session.session_id, session.peer)
        self._sessions.add(session)
        try:
            while True:
                try:
                    env = read_envelope(session.conn)
                except (ConnectionError, WireError, OSError):
                    return
                self._handle(session, env)
        finally:
            self._sessions.discard(session)
            with self._authority_lock:
                if self._authority_session == session.session_id:
                    self._authority_session = None
            try:
                session.conn.close()
            except OSError:
                pass
            log.info("session %d closed", session.session_id)

    def _handle(self, session: _Session, env: Envelope):
        def err(code: int, message: str, detail: int = 0):
            session.send(Envelope(PROTOCOL_VERSION, env.request_id, ERROR_TYPE,
                                  _error_payload(code, message, detail)))

        if env.version != PROTOCOL_VERSION:
            err(ERR_VERSION_MISMATCH, "protocol version mismatch", PROTOCOL_VERSION)
            return
        if env.request_id in session.seen_ids:
            err(ERR_DUPLICATE_REQUEST, "request id reused", env.request_id)
            return
        session.seen_ids.add(env.request_id)

        if env.msg_type in _AUTHORITY_ONLY and session.role != ROLE_AUTHORITY:
            err(ERR_FORBIDDEN, "operation requires the authority role")
            return

        try:
            payload = self._dispatch(session, env.msg_type, env.payload)
        except KeyError:
            err(ERR_UNKNOWN_MSG_TYPE, f"unknown msg_type 0x{env.msg_type:02x}")
            return
        except SpawnCollision as exc:
            err(ERR_SPAWN_COLLISION, str(exc), exc.existing_id)
            return
        except NoSuchActor as exc:
            err(ERR_NO_SUCH_ACTOR, str(exc), exc.actor_id)
            return
        except NotAVehicle as exc:
            err(ERR_NOT_A_VEHICLE, str(exc), exc.actor_id)
            return
        except OutOfRange as exc:
            err(ERR_OUT_OF_RANGE, str(exc))
            return
        except WireError as exc:
            err(ERR_BAD_REQUEST, str(exc))
            return
        except Exception as exc:  # keep the session alive; report the failure
            log.exception("internal error handling msg_type 0x%02x", env.msg_type)
            err(ERR_INTERNAL, f"{type(exc).__name__}: {exc}")
            return
        session.send(Envelope(PROTOCOL_VERSION, env.request_id,
                              env.msg_type | RESPONSE_FLAG, payload))

    def _dispatch(self, session: _Session, msg_type: int, payload: bytes) -> bytes:
        r = codec.Reader(payload)
        w = codec.Writer()
        if msg_type == HELLO:
            requested = r.u8()
            with self._authority_lock:
                if requested == ROLE_AUTHORITY and self._authority_session is None:
                    self._authority_session = session.session_id
                    session.role = ROLE_AUTHORITY
                    downgraded = False
                else:
                    session.role = ROLE_OBSERVER
                    downgraded = requested == ROLE_AUTHORITY
            log.info("session %d role=%s%s", session.session_id,
                     "authority" if session.role == ROLE_AUTHORITY else "observer",
                     " (downgraded)" if downgraded else "")
            w.u8(session.role)
            w.boolean(downgraded)
            w.u8(PROTOCOL_VERSION)
            return w.getvalue()
        if msg_type == SPAWN_ACTOR:
            blueprint = codec.read_blueprint(r)
            at = codec.read_transform(r)
            with self._world_lock:
                actor_id = self.world.spawn_actor(blueprint, at)
            w.u32(actor_id)
            return w.getvalue()
        if msg_type == APPLY_CONTROL:
            actor_id = r.u32()
            action = codec.read_control(r)
            with self._world_lock:
                self.world.apply_control(actor_id, action)
            return w.getvalue()
        if msg_type == TICK:
            with self._world_lock:
                state = self.world.tick()
            codec.write_world_state(w, state)
            w.u64(state_digest(state))
            return w.getvalue()
        if msg_type == GET_STATE:
            with self._world_lock:
                state = self.world.state()
            codec.write_world_state(w, state)
            return w.getvalue()
        if msg_type == SET_WEATHER:
            params = codec.read_weather(r)
            with self._world_lock:
                self.world.set_weather(params)
            return w.getvalue()
        if msg_type == BUILD_RIG:
            ego_id = r.u32()
            specs = tuple(codec.read_sensor_spec(r) for _ in range(r.u32()))
            rig = build_rig(specs)
            with self._world_lock:
                rig_id = self._next_rig_id
                self._next_rig_id += 1
                self._rigs[rig_id] = (rig, ego_id)
            w.u32(rig_id)
            return w.getvalue()
        if msg_type == SAMPLE_SENSORS:
            rig_id = r.u32()
            with self._world_lock:
                if rig_id not in self._rigs:
                    raise WireError(f"unknown rig id {rig_id}")
                rig, ego_id = self._rigs[rig_id]
                frame = sample(rig, self.world, ego_id)
            codec.write_sensor_frame(w, frame)
            return w.getvalue()
        if msg_type == SET_SCRIPT_ROUTE:
            actor_id = r.u32()
            route = codec.read_dense_route(r)
            speed = r.f64()
            with self._world_lock:
                self.world.set_script_route(actor_id, route, speed)
            return w.getvalue()
        if msg_type == WORLD_INFO:
            with self._world_lock:
                codec.write_world_map(w, self.world.world_map)
                w.i64(self.world.seed)
                w.f64(self.world.fixed_delta)
                w.u64(self.world.frame)
            return w.getvalue()
        raise KeyError(msg_type)


def serve(bind: str, port: int, map_path, seed: int = 0,
          fixed_delta: float = 0.05) -> WorldServer:
    """Load the map, build the world, then open the socket (fail-fast order)."""
    world_map = load_map_path(map_path)
    world = World(world_map, seed=seed, fixed_delta=fixed_delta)
    return WorldServer(world, host=bind, port=port)


# --- client -----------------------------------------------------------------

class MessageChannel:
    """Blocking request/response over one socket.

    A lock serializes requests so a watchdog thread still draining a late
    reply cannot swallow another caller's response.
    """

    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._next_request_id = 1
        self._lock = threading.Lock()

    def request(self, msg_type: int, payload: bytes = b"",
                version: int = PROTOCOL_VERSION) -> bytes:
        with self._lock:
            return self._request_locked(msg_type, payload, version)

    def try_request(self, msg_type: int, payload: bytes = b"",
                    lock_timeout: float = 2.0, io_timeout: float = 2.0) -> bytes | None:
        """Best-effort request with bounded waits; None when it cannot be done."""
        if not self._lock.acquire(timeout=lock_timeout):
            return None
        previous = self._sock.gettimeout()
        try:
            self._sock.settimeout(io_timeout)
            return self._request_locked(msg_type, payload, PROTOCOL_VERSION)
        except (OSError, WireError, ConnectionError):
            return None
        finally:
            try:
                self._sock.settimeout(previous)
            except OSError:
                pass
            self._lock.release()

    def _request_locked(self, msg_type: int, payload: bytes, version: int) -> bytes:
        request_id = self._next_request_id
        self._next_request_id += 1
        self._sock.sendall(encode_envelope(Envelope(version, request_id, msg_type, payload)))
        while True:
            env = read_envelope(self._sock)
            if env.request_id != request_id:
                continue  # stale reply from an abandoned request
            if env.msg_type == ERROR_TYPE:
                _raise_error(env.payload)
            if env.msg_type != (msg_type | RESPONSE_FLAG):
                raise WireError(f"unexpected response type 0x{env.msg_type:02x}")
            return env.payload

    def shutdown(self):
        """Wake any reader blocked on this socket, then close it."""
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.close()

    def close(self):
        try:
            self._sock.close()
        except OSError:
            pass


class WireClient:
    """Remote world handle exposing the same operations as a local world."""

    def __init__(self, channel: MessageChannel, role: int, downgraded: bool):
        self._channel = channel
        self.role = role
        self.downgraded = downgraded
        self._info = None

    # -- handshake ----------------------------------------------------------

    @classmethod
    def connect(cls, address: str, port: int,
                role: int = ROLE_AUTHORITY) -> "WireClient":
        sock = socket.create_connection((address, port))
        channel = MessageChannel(sock)
        w = codec.Writer()
        w.u8(role)
        r = codec.Reader(channel.request(HELLO, w.getvalue()))
        granted = r.u8()
        downgraded = r.boolean()
        return cls(channel, granted, downgraded)

    def close(self):
        self._channel.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- world operations -----------------------------------------------------

    def world_info(self):
        from .world import WorldInfo
        if self._info is None:
            r = codec.Reader(self._channel.request(WORLD_INFO))
            world_map = codec.read_world_map(r)
            self._info = WorldInfo(world_map=world_map, seed=r.i64(),
                                   fixed_delta=r.f64(), frame=r.u64())
        return self._info

    def spawn_actor(self, blueprint: ActorBlueprint, at: Transform) -> int:
        w = codec.Writer()
        codec.write_blueprint(w, blueprint)
        codec.write_transform(w, at)
        r = codec.Reader(self._channel.request(SPAWN_ACTOR, w.getvalue()))
        return r.u32()

    def apply_control(self, actor_id: int, action: ControlAction) -> None:
        w = codec.Writer()
        w.u32(actor_id)
        codec.write_control(w, action)
        self._channel.request(APPLY_CONTROL, w.getvalue())

    def tick(self) -> WorldState:
        r = codec.Reader(self._channel.request(TICK))
        state = codec.read_world_state(r)
        self.last_tick_digest = r.u64()
        return state

    def get_state(self) -> WorldState:
        r = codec.Reader(self._channel.request(GET_STATE))
        return codec.read_world_state(r)

    def set_weather(self, params: WeatherParams) -> None:
        w = codec.Writer()
        codec.write_weather(w, params)
        self._channel.request(SET_WEATHER, w.getvalue())

    def build_rig(self, ego_id: int, specs: tuple[SensorSpec, ...]) -> int:
        w = codec.Writer()
        w.u32(ego_id)
        w.u32(len(specs))
        for spec in specs:
            codec.write_sensor_spec(w, spec)
        r = codec.Reader(self._channel.request(BUILD_RIG, w.getvalue()))
        return r.u32()

    def sample_sensors(self, rig_id: int) -> SensorFrame:
        w = codec.Writer()
        w.u32(rig_id)
        r = codec.Reader(self._channel.request(SAMPLE_SENSORS, w.getvalue()))
        return codec.read_sensor_frame(r)

    def set_script_route(self, actor_id: int, route: DenseRoute, speed: float) -> None:
        w = codec.Writer()
        w.u32(actor_id)
        codec.write_dense_route(w, route)
        w.f64(speed)
        self._channel.request(SET_SCRIPT_ROUTE, w.getvalue())


def connect(address: str, port: int, role: int = ROLE_AUTHORITY) -> WireClient:
    """Open a client session; ConnectionRefusedError propagates unchanged."""
    return WireClient.connect(address, port, role)
