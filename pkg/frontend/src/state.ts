// Session state reducer. Pure: every transition returns a new state
// object, so rendering is a function of (latest state) alone. Stale scene
// frames (older t) are discarded unless a reset we initiated makes a
// smaller t legitimate.

import { EnvSpecMsg, SceneMsg, ServerMessage } from "./protocol.js";

export type Connection = "connecting" | "open" | "closed";

export interface UiSessionState {
  connection: Connection;
  envSpec: EnvSpecMsg | null;
  scene: SceneMsg | null;
  episodeCount: number;
  lastRecordedPath: string | null;
  selectedEnv: string;
  toast: string | null;
  expectReset: boolean;
}

export function initialState(): UiSessionState {
  return {
    connection: "connecting",
    envSpec: null,
    scene: null,
    episodeCount: 0,
    lastRecordedPath: null,
    selectedEnv: "",
    toast: null,
    expectReset: false,
  };
}

export function onOpen(state: UiSessionState): UiSessionState {
  return { ...state, connection: "open" };
}

export function onClose(state: UiSessionState): UiSessionState {
  return { ...state, connection: "closed", scene: null, envSpec: null };
}

/** Mark that we sent a reset (or env switch): the next scene may restart t. */
export function onResetSent(state: UiSessionState): UiSessionState {
  return { ...state, expectReset: true };
}

export function onServerMessage(state: UiSessionState,
                                msg: ServerMessage): UiSessionState {
  switch (msg.type) {
    case "hello":
      return {
        ...state,
        envSpec: msg.env_spec,
        selectedEnv: msg.env_spec.env_id,
        scene: null,
        expectReset: false,
      };
    case "scene": {
      if (state.scene !== null && !state.expectReset &&
          msg.t < state.scene.t) {
        return state; // stale frame, never rendered
      }
      return { ...state, scene: msg, expectReset: false };
    }
    case "recorded":
      return {
        ...state,
        episodeCount: state.episodeCount + 1,
        lastRecordedPath: msg.path,
        toast: `saved ${msg.path} (${msg.length} steps)`,
      };
    case "error":
      // server refused something: surface it, change nothing else
      return { ...state, toast: `${msg.code}: ${msg.message}` };
  }
}

export function controlsEnabled(state: UiSessionState): boolean {
  return state.connection === "open" && state.envSpec !== null;
}
