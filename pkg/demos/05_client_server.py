"""World server and wire clients: the same scenario, out of process.

One authority session owns time; extra clients are downgraded to observers,
who may read state (and script NPCs) but cannot change the outcome.  A run
driven through the socket is bit-identical to the in-process run, which the
acceptance suite checks on every build.
"""

import tempfile
from pathlib import Path

import drivebench
from drivebench import HarnessConfig, run_scenario, wire
from drivebench.errors import Forbidden

MAP = drivebench.data_path("straight200_map.json")
ROUTE = drivebench.data_path("straight200_route.xml")

server = wire.serve("127.0.0.1", 0, MAP, seed=0)
print(f"world {server.world.world_map.town!r} served on port {server.port}")

authority = wire.connect("127.0.0.1", server.port)
observer = wire.connect("127.0.0.1", server.port)   # second authority request
print(f"first client: role {authority.role} (1 = authority), "
      f"second client downgraded: {observer.downgraded}")

try:
    observer.tick()
except Forbidden as exc:
    print(f"observer tick rejected: {exc}")

out = Path(tempfile.mkdtemp(prefix="drivebench_wire_"))
config = HarnessConfig(agent_name="pp_fast", route_path=ROUTE,
                       log_path=out / "wire.ndjson")
result = run_scenario(config, authority)
print(f"remote-driven run: {result.terminated_by.value}, "
      f"completion {result.completion:.1%}, frames {result.frames_executed}")

snapshot = observer.get_state()
print(f"observer sees the final world at frame {snapshot.frame} "
      f"with {len(snapshot.actors)} actor(s)")

observer.close()
authority.close()
server.close()
