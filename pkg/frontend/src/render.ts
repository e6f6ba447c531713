// Canvas scene rendering: server truth only, no client-side prediction.
// The drawing context is a narrow interface so tests can record calls.

import { EnvSpecMsg, SceneMsg } from "./protocol.js";

export const WORKSPACE_HALF_EXTENT = 2.5;

export const PALETTE = {
  background: "#000000",
  link: "#c8c8c8",
  object: "#ff0000",
  goal: "#00ff00",
  rope: "#0000ff",
  text: "#e0e0e0",
  recording: "#ff3030",
  success: "#00ff00",
};

// the subset of CanvasRenderingContext2D the renderer touches
export interface DrawCtx {
  fillStyle: string;
  strokeStyle: string;
  lineWidth: number;
  font: string;
  fillRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
  fill(): void;
  fillText(text: string, x: number, y: number): void;
}

const ARM_OFFSETS: Record<string, [number, number][]> = {
  single_arm: [[0, 0]],
  mobile_arm: [[0, 0]],
  bimanual: [[-0.6, 0], [0.6, 0]],
};

export function worldToCanvas(p: [number, number],
                              size: number): [number, number] {
  const s = size / (2 * WORKSPACE_HALF_EXTENT);
  return [(p[0] + WORKSPACE_HALF_EXTENT) * s,
          (WORKSPACE_HALF_EXTENT - p[1]) * s];
}

function chainPoints(base: [number, number], joints: number[],
                     lengths: number[]): [number, number][] {
  const pts: [number, number][] = [base];
  let angle = 0;
  let [x, y] = base;
  for (let i = 0; i < lengths.length; i++) {
    angle += joints[i] ?? 0;
    x += lengths[i] * Math.cos(angle);
    y += lengths[i] * Math.sin(angle);
    pts.push([x, y]);
  }
  return pts;
}

function drawPolyline(ctx: DrawCtx, pts: [number, number][], size: number,
                      color: string, width: number): void {
  if (pts.length < 2) return;
  ctx.strokeStyle = color;
  ctx.lineWidth = width;
  ctx.beginPath();
  const [x0, y0] = worldToCanvas(pts[0], size);
  ctx.moveTo(x0, y0);
  for (const p of pts.slice(1)) {
    const [x, y] = worldToCanvas(p, size);
    ctx.lineTo(x, y);
  }
  ctx.stroke();
}

function drawDisc(ctx: DrawCtx, center: [number, number], radius: number,
                  size: number, color: string): void {
  const [cx, cy] = worldToCanvas(center, size);
  const r = radius * size / (2 * WORKSPACE_HALF_EXTENT);
  ctx.fillStyle = color;
  ctx.beginPath();
  ctx.arc(cx, cy, r, 0, 2 * Math.PI);
  ctx.fill();
}

export function renderScene(ctx: DrawCtx, scene: SceneMsg, spec: EnvSpecMsg,
                            size: number): void {
  const scale = size / (2 * WORKSPACE_HALF_EXTENT);
  ctx.fillStyle = PALETTE.background;
  ctx.fillRect(0, 0, size, size);

  // goal region under everything else
  if (scene.goal.kind === "line") {
    const [gx] = worldToCanvas([scene.goal.center[0], 0], size);
    ctx.fillStyle = PALETTE.goal;
    ctx.fillRect(gx - 1, 0, 2, size);
  } else {
    drawDisc(ctx, scene.goal.center, scene.goal.radius, size, PALETTE.goal);
  }

  for (const obj of scene.objects) {
    if (obj.kind === "disc") {
      drawDisc(ctx, obj.position, obj.half_extent, size, PALETTE.object);
    } else {
      const [x, y] = worldToCanvas(
        [obj.position[0] - obj.half_extent, obj.position[1] + obj.half_extent], size);
      ctx.fillStyle = PALETTE.object;
      ctx.fillRect(x, y, 2 * obj.half_extent * scale, 2 * obj.half_extent * scale);
    }
  }

  if (scene.rope !== null) {
    drawPolyline(ctx, scene.rope, size, PALETTE.rope, 3);
  }

  const offsets = ARM_OFFSETS[spec.embodiment] ?? ARM_OFFSETS.single_arm;
  scene.arms.forEach((arm, i) => {
    const off = offsets[Math.min(i, offsets.length - 1)];
    const base: [number, number] =
      [scene.base[0] + off[0], scene.base[1] + off[1]];
    drawPolyline(ctx, chainPoints(base, arm.joints, spec.link_lengths),
                 size, PALETTE.link, 4);
    drawGripper(ctx, arm.ee, arm.gripper, size);
  });

  drawOverlays(ctx, scene, size);
}

function drawGripper(ctx: DrawCtx, ee: [number, number, number],
                     opening: number, size: number): void {
  // jaw glyph: two prongs whose gap tracks the opening fraction
  const gap = 0.03 + 0.07 * opening;
  const jaw = 0.08;
  const angle = ee[2];
  const nx = Math.cos(angle + Math.PI / 2);
  const ny = Math.sin(angle + Math.PI / 2);
  const dx = Math.cos(angle);
  const dy = Math.sin(angle);
  for (const side of [-1, 1]) {
    const bx = ee[0] + side * gap * nx;
    const by = ee[1] + side * gap * ny;
    drawPolyline(ctx, [[bx, by], [bx + jaw * dx, by + jaw * dy]], size,
                 PALETTE.link, 2);
  }
}

function drawOverlays(ctx: DrawCtx, scene: SceneMsg, size: number): void {
  ctx.font = "12px monospace";
  ctx.fillStyle = PALETTE.text;
  ctx.fillText(`t=${scene.t}`, 8, 16);
  if (scene.recording) {
    ctx.fillStyle = PALETTE.recording;
    ctx.beginPath();
    ctx.arc(size - 16, 16, 6, 0, 2 * Math.PI);
    ctx.fill();
    ctx.fillText("REC", size - 46, 20);
  }
  if (scene.success) {
    ctx.font = "20px monospace";
    ctx.fillStyle = PALETTE.success;
    ctx.fillText("SUCCESS", size / 2 - 44, 32);
  }
}
