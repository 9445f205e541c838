/**
 * Canonical payload encoding, mirrored bit-for-bit from the harness side:
 * big-endian integers, 8-byte IEEE-754 doubles, u16-length-prefixed UTF-8
 * strings, u32-count-prefixed lists.
 */

export class Cursor {
  private pos = 0;

  constructor(private readonly data: Buffer) {}

  private take(n: number): number {
    if (this.pos + n > this.data.length) throw new Error("payload truncated");
    const at = this.pos;
    this.pos += n;
    return at;
  }

  u8(): number {
    return this.data.readUInt8(this.take(1));
  }

  u16(): number {
    return this.data.readUInt16BE(this.take(2));
  }

  u32(): number {
    return this.data.readUInt32BE(this.take(4));
  }

  u64(): bigint {
    return this.data.readBigUInt64BE(this.take(8));
  }

  i8(): number {
    return this.data.readInt8(this.take(1));
  }

  i64(): bigint {
    return this.data.readBigInt64BE(this.take(8));
  }

  f64(): number {
    return this.data.readDoubleBE(this.take(8));
  }

  boolean(): boolean {
    return this.u8() !== 0;
  }

  string(): string {
    const n = this.u16();
    const at = this.take(n);
    return this.data.toString("utf-8", at, at + n);
  }

  raw(): Buffer {
    const n = this.u32();
    const at = this.take(n);
    return Buffer.from(this.data.subarray(at, at + n));
  }

  done(): boolean {
    return this.pos === this.data.length;
  }
}

export class Builder {
  private chunks: Buffer[] = [];

  u8(v: number): this {
    const b = Buffer.alloc(1);
    b.writeUInt8(v, 0);
    this.chunks.push(b);
    return this;
  }

  u16(v: number): this {
    const b = Buffer.alloc(2);
    b.writeUInt16BE(v, 0);
    this.chunks.push(b);
    return this;
  }

  u32(v: number): this {
    const b = Buffer.alloc(4);
    b.writeUInt32BE(v, 0);
    this.chunks.push(b);
    return this;
  }

  i8(v: number): this {
    const b = Buffer.alloc(1);
    b.writeInt8(v, 0);
    this.chunks.push(b);
    return this;
  }

  f64(v: number): this {
    const b = Buffer.alloc(8);
    b.writeDoubleBE(v, 0);
    this.chunks.push(b);
    return this;
  }

  boolean(v: boolean): this {
    return this.u8(v ? 1 : 0);
  }

  string(v: string): this {
    const data = Buffer.from(v, "utf-8");
    this.u16(data.length);
    this.chunks.push(data);
    return this;
  }

  build(): Buffer {
    return Buffer.concat(this.chunks);
  }
}

// --- domain types ----------------------------------------------------------

export interface Transform {
  x: number;
  y: number;
  yaw: number;
}

export interface ControlAction {
  throttle: number;
  steer: number;
  brake: number;
  handBrake: boolean;
  reverse: boolean;
  manualGearShift: boolean;
  gear: number;
}

export const NEUTRAL: ControlAction = {
  throttle: 0, steer: 0, brake: 0,
  handBrake: false, reverse: false, manualGearShift: false, gear: 0,
};

export interface GeoLocation {
  latitude: number;
  longitude: number;
  altitude: number;
}

export interface SensorSpec {
  sensorId: string;
  kind: string;
  mount: Transform;
  noiseStddev: number;
  grid?: { cellsX: number; cellsY: number; metersPerCell: number };
}

export type Reading =
  | { kind: "gnss"; location: GeoLocation }
  | { kind: "imu"; accelX: number; accelY: number; yawRate: number; compass: number }
  | { kind: "speed"; speed: number }
  | { kind: "occupancy"; cellsX: number; cellsY: number; metersPerCell: number; cells: string };

export interface SensorFrame {
  frame: bigint;
  simTime: number;
  readings: Map<string, Reading>;
}

export interface DenseRoute {
  xs: Float64Array;
  ys: Float64Array;
  yaws: Float64Array;
  arc: Float64Array;
  spacing: number;
  junctions: number[];
}

export interface GeoRoute {
  latitudes: Float64Array;
  longitudes: Float64Array;
  altitudes: Float64Array;
  roadOptions: number[];
}

export function writeControl(b: Builder, a: ControlAction): void {
  b.f64(a.throttle).f64(a.steer).f64(a.brake)
    .boolean(a.handBrake).boolean(a.reverse).boolean(a.manualGearShift)
    .i8(a.gear);
}

export function writeSensorSpec(b: Builder, spec: SensorSpec): void {
  b.string(spec.sensorId).string(spec.kind);
  b.f64(spec.mount.x).f64(spec.mount.y).f64(spec.mount.yaw);
  b.f64(spec.noiseStddev);
  b.boolean(spec.grid !== undefined);
  if (spec.grid) {
    b.u32(spec.grid.cellsX).u32(spec.grid.cellsY).f64(spec.grid.metersPerCell);
  }
}

export function readSensorFrame(r: Cursor): SensorFrame {
  const frame = r.u64();
  const simTime = r.f64();
  const readings = new Map<string, Reading>();
  const count = r.u32();
  for (let i = 0; i < count; i += 1) {
    const sensorId = r.string();
    const tag = r.u8();
    if (tag === 1) {
      readings.set(sensorId, {
        kind: "gnss",
        location: { latitude: r.f64(), longitude: r.f64(), altitude: r.f64() },
      });
    } else if (tag === 2) {
      readings.set(sensorId, {
        kind: "imu", accelX: r.f64(), accelY: r.f64(), yawRate: r.f64(), compass: r.f64(),
      });
    } else if (tag === 3) {
      readings.set(sensorId, { kind: "speed", speed: r.f64() });
    } else if (tag === 4) {
      readings.set(sensorId, {
        kind: "occupancy",
        cellsX: r.u32(), cellsY: r.u32(), metersPerCell: r.f64(),
        cells: r.raw().toString("ascii"),
      });
    } else {
      throw new Error(`unknown reading tag ${tag}`);
    }
  }
  return { frame, simTime, readings };
}

export function readDenseRoute(r: Cursor): DenseRoute {
  const n = r.u32();
  const xs = new Float64Array(n);
  const ys = new Float64Array(n);
  const yaws = new Float64Array(n);
  const arc = new Float64Array(n);
  for (let i = 0; i < n; i += 1) {
    xs[i] = r.f64();
    ys[i] = r.f64();
    yaws[i] = r.f64();
    arc[i] = r.f64();
  }
  const spacing = r.f64();
  const junctionCount = r.u32();
  const junctions: number[] = [];
  for (let i = 0; i < junctionCount; i += 1) junctions.push(r.u32());
  return { xs, ys, yaws, arc, spacing, junctions };
}

export function readGeoRoute(r: Cursor): GeoRoute {
  const n = r.u32();
  const latitudes = new Float64Array(n);
  const longitudes = new Float64Array(n);
  const altitudes = new Float64Array(n);
  const roadOptions: number[] = [];
  for (let i = 0; i < n; i += 1) {
    latitudes[i] = r.f64();
    longitudes[i] = r.f64();
    altitudes[i] = r.f64();
    roadOptions.push(r.u8());
  }
  return { latitudes, longitudes, altitudes, roadOptions };
}

export function readParameters(r: Cursor): Map<string, number> {
  const out = new Map<string, number>();
  const count = r.u32();
  for (let i = 0; i < count; i += 1) {
    const key = r.string();
    out.set(key, r.f64());
  }
  return out;
}
