"""Kinematic bicycle model: what one control action does to a vehicle.

The world integrates each vehicle with a semi-implicit step (speed, then
heading with the new speed, then position with the new heading) at a fixed
20 Hz.  The model has a closed-form steady-state: under constant steering
the trajectory is a circle of radius wheelbase / tan(wheel angle), which is
also how the test suite cross-checks the integrator.
"""

import math

from drivebench import ControlAction, Transform, VehicleState, vehicle_blueprint
from drivebench.world import integrate_vehicle

DT = 0.05
blueprint = vehicle_blueprint(drag=0.0)

# accelerate from rest: first step moves 7.5 mm
state = VehicleState(Transform(0, 0, 0))
state = integrate_vehicle(state, ControlAction(throttle=1.0), blueprint, DT)
print(f"after one full-throttle step: speed {state.speed:.3f} m/s, "
      f"x {state.transform.x * 1000:.2f} mm")

# hold a constant wheel angle and drive a full circle
for delta in (0.1, 0.3, 0.5):
    predicted = blueprint.wheelbase / math.tan(delta)
    state = VehicleState(Transform(0, 0, 0), speed=5.0)
    control = ControlAction(steer=delta / blueprint.max_wheel_angle)
    steps = math.ceil(2 * math.pi * predicted / (5.0 * DT)) + 1
    xs, ys = [], []
    for _ in range(steps):
        state = integrate_vehicle(state, control, blueprint, DT)
        xs.append(state.transform.x)
        ys.append(state.transform.y)
    measured = ((max(xs) - min(xs)) + (max(ys) - min(ys))) / 4
    print(f"wheel angle {delta:.1f} rad: predicted radius {predicted:6.2f} m, "
          f"driven {measured:6.2f} m ({abs(measured - predicted) / predicted:.3%} off)")

# braking clamps at zero; reversing needs the explicit flag
state = VehicleState(Transform(0, 0, 0), speed=3.0)
while state.speed > 0:
    state = integrate_vehicle(state, ControlAction(brake=1.0), blueprint, DT)
print(f"full brake from 3 m/s stops without crossing zero: speed {state.speed}")
state = integrate_vehicle(state, ControlAction(throttle=0.4, reverse=True), blueprint, DT)
print(f"reverse + throttle backs up: speed {state.speed:.3f} m/s")
