"""drivebench: a deterministic test harness for interchangeable driving agents.

Typical use mirrors the two-line pattern the package is built around: create a
harness from an agent name, a vehicle, a route file, and a world client, then
ask for one control action per tick and apply it yourself:

    harness = create_harness("pp_fast", ego_id, "route.xml", client)
    action = harness.get_action()
    client.apply_control(ego_id, action)
    client.tick()
"""

from importlib import resources
from pathlib import Path

from .agents import (
    AgentConfig,
    AgentDescriptor,
    parse_agent_name,
    register_family,
    resolve_agent,
)
from .remote import register_external
from .core import (
    ControlAction,
    GeoLocation,
    Transform,
    VehicleState,
    neutral_control,
    normalize_yaw,
    safe_stop_control,
    validate_control,
)
from .harness import (
    Harness,
    HarnessConfig,
    Infraction,
    InfractionKind,
    LocalClient,
    RunResult,
    TerminatedBy,
    create_harness,
    replay,
    run_scenario,
)
from .routes import (
    DenseRoute,
    GeoOrigin,
    GeoRoute,
    RoadOption,
    RouteFile,
    RouteProgress,
    from_geo,
    interpolate_route,
    parse_route,
    point_to_geo,
    route_progress,
    serialize_route,
    to_geo,
)
from .sensors import (
    GridSpec,
    SensorFrame,
    SensorKind,
    SensorSpec,
    build_rig,
    required_rig_for,
    sample,
)
from .world import (
    ActorBlueprint,
    ActorKind,
    WeatherParams,
    World,
    WorldMap,
    WorldState,
    detect_collisions,
    load_map,
    load_map_path,
    off_road_distance,
    pedestrian_blueprint,
    static_prop_blueprint,
    vehicle_blueprint,
)
from .wire import WireClient, WorldServer, connect, serve

__version__ = "0.1.0"


def data_path(name: str) -> Path:
    """Path to a bundled data file, e.g. data_path('straight200_map.json')."""
    return Path(resources.files(__package__) / "data" / name)
