"""The facade in action: agent + vehicle + route + client, one action per tick.

The core usage pattern is deliberately small: the harness hands you a
validated control action and *you* apply it, so the same action stream can
feed a vehicle, a logger, or any other analysis.  run_scenario wraps this
loop with spawning, progress tracking, infractions, and a replayable log.
Switching agents is a one-string change.
"""

import tempfile
from pathlib import Path

import drivebench
from drivebench import (
    HarnessConfig,
    LocalClient,
    World,
    create_harness,
    replay,
    run_scenario,
    vehicle_blueprint,
)

MAP = drivebench.data_path("straight200_map.json")
ROUTE = drivebench.data_path("straight200_route.xml")

# --- the manual loop: exactly the action-per-tick contract -----------------
world = World(drivebench.load_map_path(MAP), seed=0)
client = LocalClient(world)
ego = client.spawn_actor(vehicle_blueprint(), drivebench.Transform(0, 0, 0))
harness = create_harness("pp_fast", ego, ROUTE, client)

for _ in range(40):
    action = harness.get_action()        # ask the agent
    client.apply_control(ego, action)    # apply it yourself
    client.tick()                        # advance the world exactly once
state = client.get_state().actor(ego).state
print(f"after 2 s of pure pursuit: x = {state.transform.x:.2f} m, "
      f"speed = {state.speed:.2f} m/s")
harness.close()

# --- the packaged loop: run, log, replay, swap agents -----------------------
out = Path(tempfile.mkdtemp(prefix="drivebench_demo_"))
for agent in ("pp_fast", "pp_safe_s1", "noop"):
    config = HarnessConfig(agent_name=agent, route_path=ROUTE, max_frames=1200,
                           log_path=out / f"{agent}.ndjson")
    result = run_scenario(config, World(drivebench.load_map_path(MAP), seed=0))
    print(f"{agent:11s} -> {result.terminated_by.value:16s} "
          f"completion {result.completion:6.1%}  frames {result.frames_executed:4d}  "
          f"infractions {len(result.infractions)}")

verified = replay(out / "pp_fast.ndjson")
print(f"replay of pp_fast reproduced {verified.frames_executed} frames bit-exactly")
