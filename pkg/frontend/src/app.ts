// Browser entry point: connects to the teleop websocket service, renders
// the two wrist camera streams, and sends keyboard commands at a fixed
// client tick rate. All displayed values come from the latest server
// observation; the UI never extrapolates robot state on its own.

import { encodeCmd, encodeRecord, encodeReset, parseServerMessage } from "./protocol.js";
import { initialState, reduce, type UiState } from "./state.js";
import { KeyboardInput, TICK_HZ } from "./input.js";

const RECONNECT_DELAY_MS = 1000;

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) {
    throw new Error(`missing element #${id}`);
  }
  return el as T;
}

function drawFrame(canvas: HTMLCanvasElement, b64png: string): void {
  const img = new Image();
  img.onload = () => {
    const ctx = canvas.getContext("2d");
    if (ctx !== null) {
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(img, 0, 0, canvas.width, canvas.height);
    }
  };
  img.src = `data:image/png;base64,${b64png}`;
}

function render(state: UiState): void {
  const banner = byId<HTMLDivElement>("banner");
  banner.textContent = {
    connecting: "connecting...",
    open: state.lastError !== null ? `error: ${state.lastError}` : "connected",
    closed: "disconnected, retrying...",
  }[state.connection];
  banner.className = state.connection;

  if (state.q !== null) {
    byId<HTMLSpanElement>("joints").textContent =
      state.q.map((v) => v.toFixed(3)).join("  ");
    byId<HTMLSpanElement>("grip").textContent =
      (state.grip ?? 0) > 0.5 ? "closed" : "open";
    byId<HTMLSpanElement>("tick").textContent = String(state.t);
  }
  if (state.imgUp !== null) {
    drawFrame(byId<HTMLCanvasElement>("cam-up"), state.imgUp);
  }
  if (state.imgDown !== null) {
    drawFrame(byId<HTMLCanvasElement>("cam-down"), state.imgDown);
  }
  byId<HTMLSpanElement>("rec-status").textContent = state.recording
    ? "recording"
    : `idle (${state.episodesSaved} saved)`;
  byId<HTMLButtonElement>("rec-start").disabled = state.recording;
  byId<HTMLButtonElement>("rec-stop").disabled = !state.recording;
  byId<HTMLButtonElement>("rec-discard").disabled = !state.recording;
}

export function main(): void {
  const url = `ws://${location.hostname}:${location.port || "8765"}/`;
  let state = initialState();
  let socket: WebSocket | null = null;
  const input = new KeyboardInput();

  const dispatch = (event: Parameters<typeof reduce>[1]): void => {
    state = reduce(state, event);
    render(state);
  };

  const send = (payload: string): void => {
    if (socket !== null && socket.readyState === WebSocket.OPEN) {
      socket.send(payload);
    }
  };

  const connect = (): void => {
    socket = new WebSocket(url);
    socket.onopen = () => dispatch({ kind: "connected" });
    socket.onmessage = (ev) => {
      try {
        dispatch({ kind: "server", msg: parseServerMessage(String(ev.data)) });
      } catch (err) {
        console.warn("dropping bad message:", err);
      }
    };
    socket.onclose = () => {
      dispatch({ kind: "disconnected" });
      input.releaseAll();
      setTimeout(connect, RECONNECT_DELAY_MS);
    };
  };
  connect();

  window.addEventListener("keydown", (ev) => {
    if (ev.target instanceof HTMLInputElement) {
      return;
    }
    if (ev.key === " ") {
      ev.preventDefault();
    }
    input.handleKeyDown(ev.key);
  });
  window.addEventListener("keyup", (ev) => input.handleKeyUp(ev.key));
  window.addEventListener("blur", () => input.releaseAll());

  // Command loop: one cmd per tick, bounded at the client tick rate.
  setInterval(() => {
    if (state.connection === "open" && state.q !== null) {
      const { dq, grip } = input.sample();
      send(encodeCmd(dq, grip));
    }
  }, 1000 / TICK_HZ);

  byId<HTMLButtonElement>("reset").onclick = () => {
    const stateIdx = Number(byId<HTMLSelectElement>("scene-state").value);
    const seed = Number(byId<HTMLInputElement>("scene-seed").value) || 0;
    send(encodeReset(stateIdx, seed));
  };
  byId<HTMLButtonElement>("rec-start").onclick = () => send(encodeRecord("start"));
  byId<HTMLButtonElement>("rec-stop").onclick = () => send(encodeRecord("stop"));
  byId<HTMLButtonElement>("rec-discard").onclick = () => send(encodeRecord("discard"));

  render(state);
}

main();
