// Entry point: socket wiring, input loop, record/reset controls.

import { InputTracker } from "./input.js";
import { ClientMessage, parseServerMessage, validateClientMessage } from "./protocol.js";
import { DrawCtx, renderScene } from "./render.js";
import { UiSessionState, controlsEnabled, initialState, onClose, onOpen,
         onResetSent, onServerMessage } from "./state.js";

const CMD_HZ = 30;
const CANVAS_SIZE = 512;

let state: UiSessionState = initialState();
let socket: WebSocket | null = null;
const input = new InputTracker();

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

function send(msg: ClientMessage): void {
  if (!socket || socket.readyState !== WebSocket.OPEN) return;
  if (!validateClientMessage(msg)) {
    console.error("refusing to send protocol-invalid message", msg);
    return;
  }
  socket.send(JSON.stringify(msg));
}

function setState(next: UiSessionState): void {
  state = next;
  syncControls();
}

function syncControls(): void {
  const enabled = controlsEnabled(state);
  for (const id of ["record-start", "record-stop", "record-discard",
                    "reset", "seed", "env-select"]) {
    ($(id) as HTMLButtonElement | HTMLInputElement).disabled = !enabled;
  }
  $("status").textContent = state.connection === "open"
    ? `connected (${state.selectedEnv})` : state.connection;
  $("episodes").textContent = `episodes: ${state.episodeCount}`;
  $("last-path").textContent = state.lastRecordedPath ?? "";
  if (state.toast !== null) {
    $("toast").textContent = state.toast;
  }
}

function connect(): void {
  const proto = location.protocol === "https:" ? "wss" : "ws";
  socket = new WebSocket(`${proto}://${location.host}/ws`);
  socket.onopen = () => setState(onOpen(state));
  socket.onclose = () => {
    setState(onClose(state));
    setTimeout(connect, 1000); // reconnect restores via a fresh hello
  };
  socket.onmessage = (event: MessageEvent) => {
    const msg = parseServerMessage(event.data);
    if (msg === null) {
      $("toast").textContent = "malformed message from server";
      return;
    }
    if (msg.type === "hello") {
      input.setArmCount(msg.env_spec.embodiment === "bimanual" ? 2 : 1);
      (($("env-select")) as HTMLSelectElement).value = msg.env_spec.env_id;
    }
    setState(onServerMessage(state, msg));
  };
}

function wireControls(): void {
  $("record-start").addEventListener("click", () =>
    send({ type: "record", action: "start" }));
  $("record-stop").addEventListener("click", () =>
    send({ type: "record", action: "stop" }));
  $("record-discard").addEventListener("click", () =>
    send({ type: "record", action: "discard" }));
  $("reset").addEventListener("click", () => {
    const seed = parseInt(($("seed") as HTMLInputElement).value, 10) || 0;
    setState(onResetSent(state));
    send({ type: "reset", seed });
  });
  $("env-select").addEventListener("change", () => {
    const envId = ($("env-select") as HTMLSelectElement).value;
    setState(onResetSent(state));
    send({ type: "select_env", env_id: envId });
  });

  window.addEventListener("keydown", (e) => {
    if (e.target instanceof HTMLInputElement) return;
    if (e.key === "Tab" || e.key === " ") e.preventDefault();
    input.keyDown(e.key);
  });
  window.addEventListener("keyup", (e) => input.keyUp(e.key));
}

function startLoops(): void {
  setInterval(() => {
    const cmd = input.tick();
    if (cmd !== null && controlsEnabled(state)) send(cmd);
  }, 1000 / CMD_HZ);

  const canvas = $("scene") as HTMLCanvasElement;
  canvas.width = CANVAS_SIZE;
  canvas.height = CANVAS_SIZE;
  const ctx = canvas.getContext("2d") as unknown as DrawCtx;
  const draw = () => {
    if (state.scene !== null && state.envSpec !== null) {
      renderScene(ctx, state.scene, state.envSpec, CANVAS_SIZE);
    }
    requestAnimationFrame(draw);
  };
  requestAnimationFrame(draw);
}

wireControls();
startLoops();
connect();
