// Keyboard capture: held arrows become ee deltas each tick, space toggles
// the gripper, Tab cycles the commanded arm. Key-up simply stops emitting,
// which the server treats as hold.

import { CmdMsg } from "./protocol.js";

export const KEY_STEP = 0.04;

const ARROWS: Record<string, [number, number]> = {
  ArrowUp: [0, KEY_STEP],
  ArrowDown: [0, -KEY_STEP],
  ArrowRight: [KEY_STEP, 0],
  ArrowLeft: [-KEY_STEP, 0],
};

// A grip toggle is re-sent for several ticks: the server-side gripper
// servo moves 0.25 per step, so one lone cmd would stall it mid-travel.
const GRIP_REPEAT_TICKS = 8;

export class InputTracker {
  private held = new Set<string>();
  private grip: "open" | "close" = "open";
  private gripTicks = 0;
  private arm = 0;

  constructor(private armCount: number = 1) {}

  keyDown(key: string): void {
    if (key in ARROWS) {
      this.held.add(key);
    } else if (key === " ") {
      this.grip = this.grip === "open" ? "close" : "open";
      this.gripTicks = GRIP_REPEAT_TICKS;
    } else if (key === "Tab") {
      this.arm = (this.arm + 1) % Math.max(1, this.armCount);
    }
  }

  keyUp(key: string): void {
    this.held.delete(key);
  }

  setArmCount(n: number): void {
    this.armCount = n;
    this.arm = 0;
  }

  get selectedArm(): number {
    return this.arm;
  }

  /** One command per tick while keys are held; null means nothing to send. */
  tick(): CmdMsg | null {
    let dx = 0;
    let dy = 0;
    for (const key of this.held) {
      const [ax, ay] = ARROWS[key];
      dx += ax;
      dy += ay;
    }
    const moving = dx !== 0 || dy !== 0;
    if (!moving && this.gripTicks === 0) return null;
    if (this.gripTicks > 0) this.gripTicks -= 1;
    return { type: "cmd", dx, dy, grip: this.grip, arm: this.arm };
  }
}
