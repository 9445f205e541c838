"""Sensor rigs: what an agent actually sees.

Agents never read world internals.  Each family declares a rig; the harness
mounts it on the ego vehicle and samples it once per tick.  This demo builds
the rig the pp_safe family asks for and prints one frame of readings,
including the bird's-eye occupancy grid around the ego.
"""

import drivebench
from drivebench import (
    Transform,
    World,
    build_rig,
    required_rig_for,
    sample,
    static_prop_blueprint,
    vehicle_blueprint,
)

world = World(drivebench.load_map_path(drivebench.data_path("straight200_map.json")), seed=0)
ego = world.spawn_actor(vehicle_blueprint(), Transform(100, 0, 0))
world.spawn_actor(static_prop_blueprint(), Transform(107, 1.0, 0))

specs = required_rig_for("pp_safe")
print("pp_safe declares:", ", ".join(f"{s.sensor_id}({s.kind.value})" for s in specs))

rig = build_rig(specs)
frame = sample(rig, world, ego)
gnss = frame.readings["gnss"].location
imu = frame.readings["imu"]
print(f"gnss: lat {gnss.latitude:.7f}, lon {gnss.longitude:.7f}")
print(f"imu: compass {imu.compass:.3f} rad from north, accel ({imu.accel_x}, {imu.accel_y})")
print(f"speedometer: {frame.readings['speedometer'].speed} m/s")

grid = frame.readings["bev"]
print(f"\noccupancy grid {grid.cells_x}x{grid.cells_y} @ {grid.meters_per_cell} m/cell")
print("legend: . free   X occupied   ~ off-road   E ego   (top row = farthest ahead)")
for row in range(0, grid.cells_x, 2):          # every second row keeps it compact
    cells = "".join(grid.cell(row, col) for col in range(grid.cells_y))
    print("   " + cells)
