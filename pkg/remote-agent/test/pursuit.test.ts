import { describe, expect, it } from "vitest";

import { DenseRoute, GeoRoute, Reading, SensorFrame } from "../src/codec";
import {
  ASSUMED_MAX_WHEEL_ANGLE_RAD,
  ASSUMED_WHEELBASE_M,
  DEG_PER_RAD,
  EARTH_RADIUS_M,
  PurePursuit,
  RouteCursor,
  normalizeYaw,
  pointAtArc,
} from "../src/pursuit";

/** Forward geodetic mapping (the inverse of what the agent computes). */
function pointToGeo(x: number, y: number, refLat: number, refLon: number) {
  const cosRef = Math.cos((refLat * Math.PI) / 180.0);
  return {
    latitude: refLat + (y / EARTH_RADIUS_M) * DEG_PER_RAD,
    longitude: refLon + (x / (EARTH_RADIUS_M * cosRef)) * DEG_PER_RAD,
    altitude: 0,
  };
}

function straightRoute(xEnd: number, spacing = 1.0): DenseRoute {
  const n = Math.ceil(xEnd / spacing) + 1;
  const xs = new Float64Array(n);
  const ys = new Float64Array(n);
  const yaws = new Float64Array(n);
  const arc = new Float64Array(n);
  for (let i = 0; i < n; i += 1) {
    xs[i] = Math.min(i * spacing, xEnd);
    arc[i] = xs[i];
  }
  return { xs, ys, yaws, arc, spacing, junctions: [] };
}

function northRoute(yEnd: number): DenseRoute {
  const n = Math.ceil(yEnd) + 1;
  const xs = new Float64Array(n);
  const ys = new Float64Array(n);
  const yaws = new Float64Array(n).fill(Math.PI / 2);
  const arc = new Float64Array(n);
  for (let i = 0; i < n; i += 1) {
    ys[i] = Math.min(i, yEnd);
    arc[i] = ys[i];
  }
  return { xs, ys, yaws, arc, spacing: 1.0, junctions: [] };
}

function geoFor(dense: DenseRoute): GeoRoute {
  const n = dense.xs.length;
  const latitudes = new Float64Array(n);
  const longitudes = new Float64Array(n);
  const altitudes = new Float64Array(n);
  for (let i = 0; i < n; i += 1) {
    const loc = pointToGeo(dense.xs[i], dense.ys[i], 0, 0);
    latitudes[i] = loc.latitude;
    longitudes[i] = loc.longitude;
  }
  return { latitudes, longitudes, altitudes, roadOptions: new Array(n).fill(1) };
}

function makeFrame(x: number, y: number, heading: number, speed: number): SensorFrame {
  const readings = new Map<string, Reading>();
  readings.set("gnss", { kind: "gnss", location: pointToGeo(x, y, 0, 0) });
  readings.set("speedometer", { kind: "speed", speed });
  readings.set("imu", {
    kind: "imu", accelX: 0, accelY: 0, yawRate: 0,
    compass: normalizeYaw(Math.PI / 2 - heading),
  });
  return { frame: 0n, simTime: 0, readings };
}

function setUp(route: DenseRoute): PurePursuit {
  const agent = new PurePursuit();
  agent.setup(geoFor(route), route, new Map());
  return agent;
}

describe("normalizeYaw", () => {
  it("wraps into (-pi, pi]", () => {
    expect(normalizeYaw(0)).toBe(0);
    expect(normalizeYaw(3 * Math.PI)).toBeCloseTo(Math.PI, 12);
    expect(normalizeYaw(-Math.PI)).toBeCloseTo(Math.PI, 12);
    expect(normalizeYaw(-Math.PI)).toBeGreaterThan(0);
  });
});

describe("route cursor", () => {
  it("projects onto the polyline and never retreats", () => {
    const cursor = new RouteCursor(straightRoute(10));
    cursor.update(7.0, 0.5);
    expect(cursor.arc).toBeCloseTo(7.0, 12);
    cursor.update(3.0, 0.0);
    expect(cursor.arc).toBeGreaterThanOrEqual(7.0);
  });

  it("pointAtArc interpolates and clamps", () => {
    const route = straightRoute(10);
    expect(pointAtArc(route, 2.5)[0]).toBeCloseTo(2.5, 12);
    expect(pointAtArc(route, -1)[0]).toBe(0);
    expect(pointAtArc(route, 99)[0]).toBe(10);
  });
});

describe("pure pursuit", () => {
  it("steers straight when the route is dead ahead", () => {
    const agent = setUp(straightRoute(200));
    const action = agent.runStep(makeFrame(0, 0, 0, 0));
    expect(Math.abs(action.steer)).toBeLessThan(1e-9);
    expect(action.throttle).toBe(1.0); // error 8 * kp 0.5, clamped
    expect(action.brake).toBe(0.0);
  });

  it("clamps steer at full lock for a target 90 degrees off", () => {
    const agent = setUp(northRoute(50));
    const action = agent.runStep(makeFrame(0, 0, 0, 5));
    const unclamped =
      Math.atan2(2 * ASSUMED_WHEELBASE_M, 6.0) / ASSUMED_MAX_WHEEL_ANGLE_RAD;
    expect(unclamped).toBeGreaterThan(1);
    expect(action.steer).toBe(1.0);
  });

  it("idles at the target speed and brakes above it", () => {
    const agent = setUp(straightRoute(200));
    const atTarget = agent.runStep(makeFrame(0, 0, 0, 8.0));
    expect(atTarget.throttle).toBe(0.0);
    expect(atTarget.brake).toBe(0.0);
    const tooFast = agent.runStep(makeFrame(0, 0, 0, 10.0));
    expect(tooFast.throttle).toBe(0.0);
    expect(tooFast.brake).toBeCloseTo(1.0, 12);
  });

  it("honors forwarded parameters over defaults", () => {
    const route = straightRoute(200);
    const agent = new PurePursuit();
    agent.setup(geoFor(route), route, new Map([["target_speed", 2.0], ["k_p", 0.5]]));
    const action = agent.runStep(makeFrame(0, 0, 0, 0));
    expect(action.throttle).toBeCloseTo(1.0, 12); // 0.5 * 2.0
  });

  it("throws before setup and after destroy", () => {
    const agent = new PurePursuit();
    expect(() => agent.runStep(makeFrame(0, 0, 0, 0))).toThrow(/not set up/);
    agent.setup(geoFor(straightRoute(10)), straightRoute(10), new Map());
    agent.destroy();
    expect(() => agent.runStep(makeFrame(0, 0, 0, 0))).toThrow(/not set up/);
  });
});
