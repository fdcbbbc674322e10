// UI state as a pure reducer: every server event and connection event maps
// the previous state to a new one, so the rendering layer can stay dumb and
// the logic stays testable without a DOM.

import type { ServerMessage } from "./protocol.js";

export type ConnectionStatus = "connecting" | "open" | "closed";

export interface UiState {
  connection: ConnectionStatus;
  // Latest observation from the service; null until the first obs arrives.
  t: number | null;
  q: [number, number, number, number] | null;
  grip: number | null;
  imgUp: string | null;
  imgDown: string | null;
  recording: boolean;
  episodesSaved: number;
  lastEpisodeId: string | null;
  lastError: string | null;
}

export function initialState(): UiState {
  return {
    connection: "connecting",
    t: null,
    q: null,
    grip: null,
    imgUp: null,
    imgDown: null,
    recording: false,
    episodesSaved: 0,
    lastEpisodeId: null,
    lastError: null,
  };
}

export type UiEvent =
  | { kind: "connected" }
  | { kind: "disconnected" }
  | { kind: "server"; msg: ServerMessage };

export function reduce(state: UiState, event: UiEvent): UiState {
  switch (event.kind) {
    case "connected":
      return { ...initialState(), connection: "open" };
    case "disconnected":
      return { ...state, connection: "closed", recording: false };
    case "server":
      return applyServer(state, event.msg);
  }
}

function applyServer(state: UiState, msg: ServerMessage): UiState {
  switch (msg.type) {
    case "obs":
      return {
        ...state,
        t: msg.t,
        q: msg.q,
        grip: msg.grip,
        imgUp: msg.img_up,
        imgDown: msg.img_down,
      };
    case "record_ack": {
      if (msg.action === "start") {
        return { ...state, recording: true, lastError: null };
      }
      const saved = msg.action === "stop" && msg.episode_id !== null;
      return {
        ...state,
        recording: false,
        episodesSaved: state.episodesSaved + (saved ? 1 : 0),
        lastEpisodeId: saved ? msg.episode_id : state.lastEpisodeId,
      };
    }
    case "error":
      return { ...state, lastError: msg.msg };
  }
}
