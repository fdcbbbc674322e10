import { describe, expect, it } from "vitest";
import {
  encodeCmd,
  encodeRecord,
  encodeReset,
  parseServerMessage,
  ProtocolError,
} from "../src/protocol.js";

const OBS = {
  type: "obs",
  t: 12,
  q: [0.1, -0.2, 0.03, 1.5],
  grip: 0.0,
  img_up: "aGk=",
  img_down: "aGk=",
};

describe("parseServerMessage", () => {
  it("accepts a well-formed obs", () => {
    const msg = parseServerMessage(JSON.stringify(OBS));
    expect(msg.type).toBe("obs");
    if (msg.type === "obs") {
      expect(msg.t).toBe(12);
      expect(msg.q).toEqual([0.1, -0.2, 0.03, 1.5]);
    }
  });

  it("accepts record_ack with and without episode id", () => {
    const saved = parseServerMessage(JSON.stringify({
      type: "record_ack", action: "stop", episode_id: "ep_000004", count: 31,
    }));
    expect(saved).toMatchObject({ action: "stop", episode_id: "ep_000004" });
    const started = parseServerMessage(JSON.stringify({
      type: "record_ack", action: "start", episode_id: null, count: 0,
    }));
    expect(started).toMatchObject({ action: "start", episode_id: null });
  });

  it("accepts error messages", () => {
    const msg = parseServerMessage(JSON.stringify({ type: "error", msg: "busy" }));
    expect(msg).toEqual({ type: "error", msg: "busy" });
  });

  it("rejects non-JSON and non-objects", () => {
    expect(() => parseServerMessage("{nope")).toThrow(ProtocolError);
    expect(() => parseServerMessage("42")).toThrow(ProtocolError);
    expect(() => parseServerMessage("null")).toThrow(ProtocolError);
  });

  it("rejects unknown message types", () => {
    expect(() => parseServerMessage(JSON.stringify({ type: "telemetry" })))
      .toThrow(/unknown message type/);
  });

  it("rejects obs with wrong joint arity or non-finite values", () => {
    expect(() => parseServerMessage(JSON.stringify({ ...OBS, q: [0, 0, 0] })))
      .toThrow(ProtocolError);
    expect(() => parseServerMessage(
      JSON.stringify({ ...OBS, q: [0, 0, 0, null] }),
    )).toThrow(ProtocolError);
    expect(() => parseServerMessage(JSON.stringify({ ...OBS, img_up: 7 })))
      .toThrow(ProtocolError);
  });

  it("rejects record_ack with a bad action", () => {
    expect(() => parseServerMessage(JSON.stringify({
      type: "record_ack", action: "pause", episode_id: null, count: 0,
    }))).toThrow(ProtocolError);
  });
});

describe("encoders", () => {
  it("round-trips a cmd through JSON", () => {
    const parsed = JSON.parse(encodeCmd([0.1, 0, -0.01, 0.2], 1));
    expect(parsed).toEqual({ type: "cmd", dq: [0.1, 0, -0.01, 0.2], grip: 1 });
  });

  it("rejects bad cmd arguments", () => {
    expect(() => encodeCmd([0.1, 0, 0], 0)).toThrow(ProtocolError);
    expect(() => encodeCmd([0, 0, 0, NaN], 0)).toThrow(ProtocolError);
    expect(() => encodeCmd([0, 0, 0, 0], 1.5)).toThrow(ProtocolError);
  });

  it("encodes reset and validates the scene index", () => {
    expect(JSON.parse(encodeReset(3, 42)))
      .toEqual({ type: "reset", state: 3, seed: 42 });
    expect(() => encodeReset(6, 0)).toThrow(ProtocolError);
    expect(() => encodeReset(-1, 0)).toThrow(ProtocolError);
    expect(() => encodeReset(1, 0.5)).toThrow(ProtocolError);
  });

  it("encodes record actions", () => {
    expect(JSON.parse(encodeRecord("discard")))
      .toEqual({ type: "record", action: "discard" });
  });
});
