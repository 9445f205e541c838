/**
 * Entry point: serve the reference pure-pursuit agent on a TCP port.
 *
 *   node dist/server.js --port 7001     (or --port 0 for an ephemeral port)
 *
 * Prints "agent listening <port>" once ready.
 */

import { SensorSpec } from "./codec";
import { AgentImplementation, serveAgent } from "./agent";
import { PurePursuit } from "./pursuit";

const IDENTITY = { x: 0, y: 0, yaw: 0 };

export function referencePursuitAgent(): AgentImplementation {
  const controller = new PurePursuit();
  const rig: SensorSpec[] = [
    { sensorId: "gnss", kind: "gnss", mount: IDENTITY, noiseStddev: 0 },
    { sensorId: "speedometer", kind: "speedometer", mount: IDENTITY, noiseStddev: 0 },
    { sensorId: "imu", kind: "imu", mount: IDENTITY, noiseStddev: 0 },
  ];
  return {
    rig: () => rig,
    setup: (_name, parameters, dense, geo) => controller.setup(geo, dense, parameters),
    runStep: (frame) => controller.runStep(frame),
    destroy: () => controller.destroy(),
  };
}

function main(): void {
  const args = process.argv.slice(2);
  let port = 7001;
  for (let i = 0; i < args.length; i += 1) {
    if (args[i] === "--port" && i + 1 < args.length) {
      port = Number.parseInt(args[i + 1], 10);
    }
  }
  serveAgent(referencePursuitAgent(), port)
    .then((server) => {
      console.log(`agent listening ${server.port}`);
    })
    .catch((err) => {
      console.error(`failed to start: ${err.message}`);
      process.exit(1);
    });
}

if (require.main === module) {
  main();
}
