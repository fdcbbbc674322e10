// Message types for the teleoperation websocket protocol.
//
// Server -> client:
//   {type: "obs", t, q: [4], grip, img_up, img_down}   (images: base64 PNG)
//   {type: "record_ack", action, episode_id, count}
//   {type: "error", msg}
// Client -> server:
//   {type: "cmd", dq: [4], grip}
//   {type: "reset", state, seed}
//   {type: "record", action: "start" | "stop" | "discard"}

export interface ObsMessage {
  type: "obs";
  t: number;
  q: [number, number, number, number];
  grip: number;
  img_up: string;
  img_down: string;
}

export interface RecordAckMessage {
  type: "record_ack";
  action: "start" | "stop" | "discard";
  episode_id: string | null;
  count: number;
}

export interface ErrorMessage {
  type: "error";
  msg: string;
}

export type ServerMessage = ObsMessage | RecordAckMessage | ErrorMessage;

export class ProtocolError extends Error {}

function isNumberArray(v: unknown, n: number): v is number[] {
  return Array.isArray(v) && v.length === n &&
    v.every((x) => typeof x === "number" && Number.isFinite(x));
}

export function parseServerMessage(raw: string): ServerMessage {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    throw new ProtocolError("not valid JSON");
  }
  if (typeof data !== "object" || data === null) {
    throw new ProtocolError("message is not an object");
  }
  const msg = data as Record<string, unknown>;
  switch (msg.type) {
    case "obs": {
      if (typeof msg.t !== "number" || !isNumberArray(msg.q, 4) ||
          typeof msg.grip !== "number" ||
          typeof msg.img_up !== "string" ||
          typeof msg.img_down !== "string") {
        throw new ProtocolError("malformed obs message");
      }
      return msg as unknown as ObsMessage;
    }
    case "record_ack": {
      if (msg.action !== "start" && msg.action !== "stop" &&
          msg.action !== "discard") {
        throw new ProtocolError("malformed record_ack message");
      }
      if (typeof msg.count !== "number" ||
          (msg.episode_id !== null && typeof msg.episode_id !== "string")) {
        throw new ProtocolError("malformed record_ack message");
      }
      return msg as unknown as RecordAckMessage;
    }
    case "error": {
      if (typeof msg.msg !== "string") {
        throw new ProtocolError("malformed error message");
      }
      return msg as unknown as ErrorMessage;
    }
    default:
      throw new ProtocolError(`unknown message type ${String(msg.type)}`);
  }
}

export function encodeCmd(dq: number[], grip: number): string {
  if (!isNumberArray(dq, 4)) {
    throw new ProtocolError("dq must be 4 finite numbers");
  }
  if (!(grip >= 0 && grip <= 1)) {
    throw new ProtocolError("grip must be in [0, 1]");
  }
  return JSON.stringify({ type: "cmd", dq, grip });
}

export function encodeReset(state: number, seed: number): string {
  if (!Number.isInteger(state) || state < 0 || state > 5) {
    throw new ProtocolError("state must be an integer in 0..5");
  }
  if (!Number.isInteger(seed)) {
    throw new ProtocolError("seed must be an integer");
  }
  return JSON.stringify({ type: "reset", state, seed });
}

export function encodeRecord(action: "start" | "stop" | "discard"): string {
  return JSON.stringify({ type: "record", action });
}
