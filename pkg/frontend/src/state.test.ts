import { describe, expect, it } from "vitest";
import { SceneMsg } from "./protocol.js";
import { initialState, onClose, onOpen, onResetSent, onServerMessage,
         controlsEnabled } from "./state.js";

function sceneAt(t: number): SceneMsg {
  return {
    type: "scene", t,
    arms: [{ joints: [0, 0], ee: [2, 0, 0], gripper: 0 }],
    base: [0, 0], objects: [], rope: null,
    goal: { kind: "disc", center: [0.8, -0.9], radius: 0.15 },
    recording: false, success: false,
  };
}

const hello = {
  type: "hello" as const, protocol_version: 1,
  env_spec: { env_id: "pick_place", embodiment: "single_arm" as const,
              link_lengths: [1, 1], max_steps: 300 },
};

describe("scene staleness", () => {
  it("ignores frames with older t", () => {
    let s = onServerMessage(initialState(), sceneAt(10));
    const stale = onServerMessage(s, sceneAt(4));
    expect(stale.scene!.t).toBe(10);
    expect(stale).toBe(s); // unchanged object: nothing re-rendered
  });

  it("accepts equal or newer t", () => {
    let s = onServerMessage(initialState(), sceneAt(5));
    s = onServerMessage(s, sceneAt(5));
    expect(s.scene!.t).toBe(5);
    s = onServerMessage(s, sceneAt(6));
    expect(s.scene!.t).toBe(6);
  });

  it("accepts t restarting after a reset we sent", () => {
    let s = onServerMessage(initialState(), sceneAt(42));
    s = onResetSent(s);
    s = onServerMessage(s, sceneAt(0));
    expect(s.scene!.t).toBe(0);
    // and the window closes after one accepted frame
    const stale = onServerMessage(s, sceneAt(40));
    expect(stale.scene!.t).toBe(40); // 40 > 0, normal rule applies again
    expect(onServerMessage(stale, sceneAt(3)).scene!.t).toBe(40);
  });

  it("fresh hello clears the scene", () => {
    let s = onServerMessage(initialState(), sceneAt(9));
    s = onServerMessage(s, hello);
    expect(s.scene).toBeNull();
    expect(s.selectedEnv).toBe("pick_place");
  });
});

describe("recording bookkeeping", () => {
  it("recorded reply increments the episode counter", () => {
    let s = initialState();
    expect(s.episodeCount).toBe(0);
    s = onServerMessage(s, { type: "recorded", path: "a.rmbe", length: 12,
                             success: true });
    expect(s.episodeCount).toBe(1);
    expect(s.lastRecordedPath).toBe("a.rmbe");
    s = onServerMessage(s, { type: "recorded", path: "b.rmbe", length: 9,
                             success: false });
    expect(s.episodeCount).toBe(2);
  });

  it("server errors set a toast and change nothing else", () => {
    const before = onServerMessage(initialState(), sceneAt(2));
    const after = onServerMessage(before,
      { type: "error", code: "NOT_RECORDING", message: "no" });
    expect(after.toast).toContain("NOT_RECORDING");
    expect(after.episodeCount).toBe(before.episodeCount);
    expect(after.scene).toBe(before.scene);
  });
});

describe("connection gating", () => {
  it("controls enabled only when open with a hello", () => {
    let s = initialState();
    expect(controlsEnabled(s)).toBe(false);
    s = onOpen(s);
    expect(controlsEnabled(s)).toBe(false); // no env spec yet
    s = onServerMessage(s, hello);
    expect(controlsEnabled(s)).toBe(true);
    s = onClose(s);
    expect(controlsEnabled(s)).toBe(false);
    expect(s.scene).toBeNull();
  });
});
