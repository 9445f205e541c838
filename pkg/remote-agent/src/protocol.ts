/**
 * Length-prefixed binary envelope, shared with the world server:
 *
 *   u32 length | u8 version | u64 request_id | u8 msg_type | payload
 *
 * All integers big-endian.  Agent messages live in the 0x20 range;
 * responses echo the request id with msg_type | 0x80, errors use 0xFF.
 */

export const PROTOCOL_VERSION = 1;
export const MAX_ENVELOPE_BYTES = 16 * 1024 * 1024;

export const AGENT_HELLO = 0x20;
export const AGENT_SETUP = 0x21;
export const AGENT_STEP = 0x22;
export const AGENT_DESTROY = 0x23;

export const RESPONSE_FLAG = 0x80;
export const ERROR_TYPE = 0xff;

export const ERR_VERSION_MISMATCH = 2;
export const ERR_UNKNOWN_MSG_TYPE = 4;
export const ERR_BAD_REQUEST = 5;
export const ERR_INTERNAL = 10;

export interface Envelope {
  version: number;
  requestId: bigint;
  msgType: number;
  payload: Buffer;
}

export function encodeEnvelope(env: Envelope): Buffer {
  const header = Buffer.alloc(4 + 1 + 8 + 1);
  header.writeUInt32BE(1 + 8 + 1 + env.payload.length, 0);
  header.writeUInt8(env.version, 4);
  header.writeBigUInt64BE(env.requestId, 5);
  header.writeUInt8(env.msgType, 13);
  return Buffer.concat([header, env.payload]);
}

/** Incremental parser: feed raw socket chunks, pull complete envelopes. */
export class FrameReader {
  private buffer: Buffer = Buffer.alloc(0);

  feed(chunk: Buffer): Envelope[] {
    this.buffer = this.buffer.length === 0 ? chunk : Buffer.concat([this.buffer, chunk]);
    const envelopes: Envelope[] = [];
    for (;;) {
      if (this.buffer.length < 4) break;
      const length = this.buffer.readUInt32BE(0);
      if (length < 10 || length > MAX_ENVELOPE_BYTES) {
        throw new Error(`envelope length ${length} out of bounds`);
      }
      if (this.buffer.length < 4 + length) break;
      const body = this.buffer.subarray(4, 4 + length);
      envelopes.push({
        version: body.readUInt8(0),
        requestId: body.readBigUInt64BE(1),
        msgType: body.readUInt8(9),
        payload: Buffer.from(body.subarray(10)),
      });
      this.buffer = Buffer.from(this.buffer.subarray(4 + length));
    }
    return envelopes;
  }
}

export function errorPayload(code: number, message: string, detail = 0n): Buffer {
  const msg = Buffer.from(message, "utf-8");
  const out = Buffer.alloc(1 + 2 + msg.length + 8);
  out.writeUInt8(code, 0);
  out.writeUInt16BE(msg.length, 1);
  msg.copy(out, 3);
  out.writeBigInt64BE(detail, 3 + msg.length);
  return out;
}
