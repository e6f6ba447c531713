// Wire protocol types and validation. Every outbound message is
// schema-checked before send; inbound messages are parsed defensively so
// a malformed frame can never crash the client.

export const PROTOCOL_VERSION = 1;

export interface ArmState {
  joints: number[];
  ee: [number, number, number];
  gripper: number;
}

export interface SceneGoal {
  kind: "disc" | "line";
  center: [number, number];
  radius: number;
}

export interface SceneObject {
  position: [number, number];
  half_extent: number;
  kind: "box" | "disc";
}

export interface HelloMsg {
  type: "hello";
  protocol_version: number;
  env_spec: EnvSpecMsg;
}

export interface EnvSpecMsg {
  env_id: string;
  embodiment: "single_arm" | "bimanual" | "mobile_arm";
  link_lengths: number[];
  max_steps: number;
  [key: string]: unknown;
}

export interface SceneMsg {
  type: "scene";
  t: number;
  arms: ArmState[];
  base: [number, number];
  objects: SceneObject[];
  rope: [number, number][] | null;
  goal: SceneGoal;
  recording: boolean;
  success: boolean;
}

export interface RecordedMsg {
  type: "recorded";
  path: string;
  length: number;
  success: boolean;
}

export interface ErrorMsg {
  type: "error";
  code: string;
  message: string;
}

export type ServerMessage = HelloMsg | SceneMsg | RecordedMsg | ErrorMsg;

export interface CmdMsg {
  type: "cmd";
  dx: number;
  dy: number;
  grip: "open" | "close" | "hold";
  arm: number;
}

export interface ResetMsg {
  type: "reset";
  seed: number;
}

export interface RecordMsg {
  type: "record";
  action: "start" | "stop" | "discard";
}

export interface SelectEnvMsg {
  type: "select_env";
  env_id: string;
}

export type ClientMessage = CmdMsg | ResetMsg | RecordMsg | SelectEnvMsg;

const GRIPS = new Set(["open", "close", "hold"]);
const RECORD_ACTIONS = new Set(["start", "stop", "discard"]);

function isFiniteNumber(x: unknown): x is number {
  return typeof x === "number" && Number.isFinite(x);
}

/** Schema check for outbound messages; nothing invalid may reach the wire. */
export function validateClientMessage(msg: unknown): msg is ClientMessage {
  if (typeof msg !== "object" || msg === null) return false;
  const m = msg as Record<string, unknown>;
  switch (m.type) {
    case "cmd":
      return isFiniteNumber(m.dx) && isFiniteNumber(m.dy) &&
        typeof m.grip === "string" && GRIPS.has(m.grip) &&
        isFiniteNumber(m.arm) && Number.isInteger(m.arm) && (m.arm as number) >= 0;
    case "reset":
      return isFiniteNumber(m.seed) && Number.isInteger(m.seed) && (m.seed as number) >= 0;
    case "record":
      return typeof m.action === "string" && RECORD_ACTIONS.has(m.action);
    case "select_env":
      return typeof m.env_id === "string" && (m.env_id as string).length > 0;
    default:
      return false;
  }
}

function isPoint(x: unknown): x is [number, number] {
  return Array.isArray(x) && x.length === 2 && x.every(isFiniteNumber);
}

function isArm(x: unknown): x is ArmState {
  if (typeof x !== "object" || x === null) return false;
  const a = x as Record<string, unknown>;
  return Array.isArray(a.joints) && a.joints.every(isFiniteNumber) &&
    Array.isArray(a.ee) && a.ee.length === 3 && a.ee.every(isFiniteNumber) &&
    isFiniteNumber(a.gripper);
}

/** Parse an inbound frame; returns null for anything malformed. */
export function parseServerMessage(raw: unknown): ServerMessage | null {
  let data: unknown = raw;
  if (typeof raw === "string") {
    try {
      data = JSON.parse(raw);
    } catch {
      return null;
    }
  }
  if (typeof data !== "object" || data === null) return null;
  const m = data as Record<string, unknown>;
  switch (m.type) {
    case "hello": {
      const spec = m.env_spec as Record<string, unknown> | undefined;
      if (!isFiniteNumber(m.protocol_version) || !spec) return null;
      if (typeof spec.env_id !== "string" || !Array.isArray(spec.link_lengths)) return null;
      return m as unknown as HelloMsg;
    }
    case "scene": {
      if (!isFiniteNumber(m.t) || !Array.isArray(m.arms) || !m.arms.every(isArm)) return null;
      if (!isPoint(m.base)) return null;
      if (!Array.isArray(m.objects)) return null;
      if (m.rope !== null && !(Array.isArray(m.rope) && m.rope.every(isPoint))) return null;
      const goal = m.goal as Record<string, unknown> | undefined;
      if (!goal || (goal.kind !== "disc" && goal.kind !== "line") ||
          !isPoint(goal.center) || !isFiniteNumber(goal.radius)) return null;
      if (typeof m.recording !== "boolean" || typeof m.success !== "boolean") return null;
      return m as unknown as SceneMsg;
    }
    case "recorded":
      if (typeof m.path !== "string" || !isFiniteNumber(m.length)) return null;
      return m as unknown as RecordedMsg;
    case "error":
      if (typeof m.code !== "string" || typeof m.message !== "string") return null;
      return m as unknown as ErrorMsg;
    default:
      return null;
  }
}
