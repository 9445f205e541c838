/**
 * Pure-pursuit path tracker, numerically mirroring the harness's built-in
 * "fast" profile: a forward-only cursor projects the GNSS fix onto the dense
 * route, steering aims one lookahead ahead of the cursor, and a proportional
 * controller tracks the target speed.  Formula order matters; keep every
 * expression aligned with the reference implementation so per-frame outputs
 * agree to well below 1e-6.
 */

import {
  ControlAction,
  DenseRoute,
  GeoRoute,
  SensorFrame,
} from "./codec";

export const EARTH_RADIUS_M = 6_371_000.0;
export const DEG_PER_RAD = 180.0 / Math.PI;
export const RAD_PER_DEG = Math.PI / 180.0;
const TWO_PI = 2.0 * Math.PI;

export const ASSUMED_WHEELBASE_M = 2.9;
export const ASSUMED_MAX_WHEEL_ANGLE_RAD = 0.61;

export const DEFAULTS = {
  target_speed: 8.0,
  lookahead: 6.0,
  k_p: 0.5,
};

export function normalizeYaw(angle: number): number {
  let wrapped = angle % TWO_PI;
  if (wrapped > Math.PI) wrapped -= TWO_PI;
  else if (wrapped <= -Math.PI) wrapped += TWO_PI;
  return wrapped;
}

export interface Origin {
  refLatitude: number;
  refLongitude: number;
  cosRef: number;
}

/** Recover the map origin from the first (geodetic, planar) waypoint pair. */
export function deriveOrigin(geo: GeoRoute, dense: DenseRoute): Origin {
  const lat0 = geo.latitudes[0];
  const lon0 = geo.longitudes[0];
  const x0 = dense.xs[0];
  const y0 = dense.ys[0];
  const refLatitude = lat0 - (y0 / EARTH_RADIUS_M) * DEG_PER_RAD;
  const cosRef = Math.cos((refLatitude * Math.PI) / 180.0);
  const refLongitude = lon0 - (x0 / (EARTH_RADIUS_M * cosRef)) * DEG_PER_RAD;
  return { refLatitude, refLongitude, cosRef };
}

export function fromGeo(latitude: number, longitude: number, origin: Origin): [number, number] {
  const y = (latitude - origin.refLatitude) * RAD_PER_DEG * EARTH_RADIUS_M;
  const x = (longitude - origin.refLongitude) * RAD_PER_DEG * EARTH_RADIUS_M * origin.cosRef;
  return [x, y];
}

/** Forward-only projection onto the route polyline; the cursor never retreats. */
export class RouteCursor {
  private seg = 0;
  private t = 0.0;
  arc = 0.0;

  constructor(private readonly route: DenseRoute) {
    if (route.xs.length < 2) throw new Error("route needs at least 2 waypoints");
  }

  update(x: number, y: number): void {
    const { xs, ys, arc } = this.route;
    let bestD2 = Infinity;
    let bestSeg = this.seg;
    let bestT = this.t;
    for (let j = this.seg; j < xs.length - 1; j += 1) {
      const ax = xs[j];
      const ay = ys[j];
      const ex = xs[j + 1] - ax;
      const ey = ys[j + 1] - ay;
      const len2 = ex * ex + ey * ey;
      let t = ((x - ax) * ex + (y - ay) * ey) / len2;
      if (t < 0.0) t = 0.0;
      else if (t > 1.0) t = 1.0;
      if (j === this.seg && t < this.t) t = this.t;
      const px = ax + t * ex;
      const py = ay + t * ey;
      const d2 = (x - px) ** 2 + (y - py) ** 2;
      if (d2 < bestD2) {
        bestD2 = d2;
        bestSeg = j;
        bestT = t;
      }
    }
    this.seg = bestSeg;
    this.t = bestT;
    this.arc = arc[bestSeg] + bestT * (arc[bestSeg + 1] - arc[bestSeg]);
  }
}

export function pointAtArc(route: DenseRoute, s: number): [number, number, number] {
  const { xs, ys, yaws, arc } = route;
  const n = xs.length;
  const total = arc[n - 1];
  if (s <= 0.0) return [xs[0], ys[0], yaws[0]];
  if (s >= total) return [xs[n - 1], ys[n - 1], yaws[n - 1]];
  // greatest i with arc[i] <= s (mirror of searchsorted side="right", minus 1)
  let lo = 0;
  let hi = n;
  while (lo < hi) {
    const mid = (lo + hi) >>> 1;
    if (arc[mid] <= s) lo = mid + 1;
    else hi = mid;
  }
  let i = lo - 1;
  if (i > n - 2) i = n - 2;
  const t = (s - arc[i]) / (arc[i + 1] - arc[i]);
  const x = xs[i] + t * (xs[i + 1] - xs[i]);
  const y = ys[i] + t * (ys[i + 1] - ys[i]);
  return [x, y, yaws[i]];
}

export class PurePursuit {
  private cursor: RouteCursor | null = null;
  private route: DenseRoute | null = null;
  private origin: Origin | null = null;
  private targetSpeed = DEFAULTS.target_speed;
  private lookahead = DEFAULTS.lookahead;
  private kp = DEFAULTS.k_p;

  setup(geo: GeoRoute, dense: DenseRoute, parameters: Map<string, number>): void {
    if (dense.xs.length < 2 || geo.latitudes.length === 0) {
      throw new Error("agent configured with an empty route");
    }
    this.targetSpeed = parameters.get("target_speed") ?? DEFAULTS.target_speed;
    this.lookahead = parameters.get("lookahead") ?? DEFAULTS.lookahead;
    this.kp = parameters.get("k_p") ?? DEFAULTS.k_p;
    this.route = dense;
    this.origin = deriveOrigin(geo, dense);
    this.cursor = new RouteCursor(dense);
  }

  runStep(frame: SensorFrame): ControlAction {
    if (!this.cursor || !this.route || !this.origin) {
      throw new Error("agent not set up");
    }
    const gnss = frame.readings.get("gnss");
    const speedo = frame.readings.get("speedometer");
    const imu = frame.readings.get("imu");
    if (!gnss || gnss.kind !== "gnss") throw new Error("frame is missing sensor 'gnss'");
    if (!speedo || speedo.kind !== "speed") throw new Error("frame is missing sensor 'speedometer'");
    if (!imu || imu.kind !== "imu") throw new Error("frame is missing sensor 'imu'");

    const [x, y] = fromGeo(gnss.location.latitude, gnss.location.longitude, this.origin);
    const heading = normalizeYaw(Math.PI / 2 - imu.compass);

    this.cursor.update(x, y);
    const [tx, ty] = pointAtArc(this.route, this.cursor.arc + this.lookahead);
    const alpha = normalizeYaw(Math.atan2(ty - y, tx - x) - heading);
    const steerAngle = Math.atan2(2.0 * ASSUMED_WHEELBASE_M * Math.sin(alpha), this.lookahead);
    let steer = steerAngle / ASSUMED_MAX_WHEEL_ANGLE_RAD;
    if (steer > 1.0) steer = 1.0;
    else if (steer < -1.0) steer = -1.0;

    const error = this.targetSpeed - speedo.speed;
    let throttle = 0.0;
    let brake = 0.0;
    if (error > 0) {
      throttle = Math.min(1.0, Math.max(0.0, this.kp * error));
    } else {
      brake = Math.min(1.0, Math.max(0.0, -this.kp * error));
    }
    return {
      throttle, steer, brake,
      handBrake: false, reverse: false, manualGearShift: false, gear: 0,
    };
  }

  destroy(): void {
    this.cursor = null;
    this.route = null;
    this.origin = null;
  }
}
