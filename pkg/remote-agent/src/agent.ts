/**
 * Agent process server: answers the handshake with the declared rig, then
 * serves setup / step / destroy over the shared envelope framing.  One
 * session at a time; protocol violations close the session with a
 * diagnostic, a destroy leaves the process alive for the next setup.
 */

import net from "net";

import {
  Builder,
  ControlAction,
  Cursor,
  DenseRoute,
  GeoRoute,
  SensorFrame,
  SensorSpec,
  readDenseRoute,
  readGeoRoute,
  readParameters,
  readSensorFrame,
  writeControl,
  writeSensorSpec,
} from "./codec";
import {
  AGENT_DESTROY,
  AGENT_HELLO,
  AGENT_SETUP,
  AGENT_STEP,
  ERR_BAD_REQUEST,
  ERR_INTERNAL,
  ERR_UNKNOWN_MSG_TYPE,
  ERR_VERSION_MISMATCH,
  ERROR_TYPE,
  Envelope,
  FrameReader,
  PROTOCOL_VERSION,
  RESPONSE_FLAG,
  encodeEnvelope,
  errorPayload,
} from "./protocol";

export interface AgentImplementation {
  rig(): SensorSpec[];
  setup(name: string, parameters: Map<string, number>, dense: DenseRoute, geo: GeoRoute): void;
  runStep(frame: SensorFrame): ControlAction;
  destroy(): void;
}

export interface AgentServer {
  port: number;
  close(): Promise<void>;
}

export function serveAgent(impl: AgentImplementation, port: number,
                           host = "127.0.0.1"): Promise<AgentServer> {
  let active: net.Socket | null = null;

  const server = net.createServer((socket) => {
    if (active) {
      // one session at a time
      socket.destroy();
      return;
    }
    active = socket;
    const reader = new FrameReader();

    const respond = (env: Envelope, msgType: number, payload: Buffer) => {
      socket.write(encodeEnvelope({
        version: PROTOCOL_VERSION,
        requestId: env.requestId,
        msgType,
        payload,
      }));
    };

    socket.on("data", (chunk) => {
      let envelopes: Envelope[];
      try {
        envelopes = reader.feed(chunk);
      } catch (err) {
        console.error(`closing session: ${(err as Error).message}`);
        socket.destroy();
        return;
      }
      for (const env of envelopes) {
        if (env.version !== PROTOCOL_VERSION) {
          respond(env, ERROR_TYPE, errorPayload(
            ERR_VERSION_MISMATCH, "protocol version mismatch", BigInt(PROTOCOL_VERSION)));
          continue;
        }
        try {
          handle(env, respond);
        } catch (err) {
          console.error(`closing session after protocol violation: ${(err as Error).message}`);
          respond(env, ERROR_TYPE, errorPayload(ERR_BAD_REQUEST, (err as Error).message));
          socket.destroy();
          return;
        }
      }
    });
    socket.on("close", () => {
      if (active === socket) active = null;
    });
    socket.on("error", () => socket.destroy());
  });

  const handle = (env: Envelope, respond: (e: Envelope, t: number, p: Buffer) => void) => {
    const r = new Cursor(env.payload);
    if (env.msgType === AGENT_HELLO) {
      const b = new Builder();
      const rig = impl.rig();
      b.u32(rig.length);
      for (const spec of rig) writeSensorSpec(b, spec);
      respond(env, AGENT_HELLO | RESPONSE_FLAG, b.build());
    } else if (env.msgType === AGENT_SETUP) {
      const name = r.string();
      const parameters = readParameters(r);
      const dense = readDenseRoute(r);
      const geo = readGeoRoute(r);
      impl.setup(name, parameters, dense, geo);
      respond(env, AGENT_SETUP | RESPONSE_FLAG, Buffer.alloc(0));
    } else if (env.msgType === AGENT_STEP) {
      const frame = readSensorFrame(r);
      let action: ControlAction;
      try {
        action = impl.runStep(frame);
      } catch (err) {
        respond(env, ERROR_TYPE, errorPayload(ERR_INTERNAL, (err as Error).message));
        return;
      }
      const b = new Builder();
      writeControl(b, action);
      respond(env, AGENT_STEP | RESPONSE_FLAG, b.build());
    } else if (env.msgType === AGENT_DESTROY) {
      impl.destroy();
      respond(env, AGENT_DESTROY | RESPONSE_FLAG, Buffer.alloc(0));
    } else {
      respond(env, ERROR_TYPE, errorPayload(
        ERR_UNKNOWN_MSG_TYPE, `unknown msg_type 0x${env.msgType.toString(16)}`));
    }
  };

  return new Promise((resolve, reject) => {
    server.once("error", reject);
    server.listen(port, host, () => {
      const address = server.address() as net.AddressInfo;
      resolve({
        port: address.port,
        close: () => new Promise((done) => server.close(() => done())),
      });
    });
  });
}
