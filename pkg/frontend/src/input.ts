// Keyboard teleop: held keys map to joint velocity commands sampled at the
// client tick rate. The mapping itself is pure so it can be unit tested;
// the DOM listeners just maintain the held-key set.
//
//   q / a   theta1 + / -
//   w / s   theta2 + / -
//   e / d   prismatic d3 + / -
//   r / f   theta4 + / -
//   space   toggle gripper open/closed

export const TICK_HZ = 15;

// Per-tick joint steps, matched to the service's per-tick rate limits at
// 15 Hz so a held key commands full speed without being clipped.
export const STEP = [0.16, 0.16, 0.016, 0.16] as const;

const KEY_AXIS: Record<string, [number, number]> = {
  q: [0, 1],
  a: [0, -1],
  w: [1, 1],
  s: [1, -1],
  e: [2, 1],
  d: [2, -1],
  r: [3, 1],
  f: [3, -1],
};

export function dqFromKeys(held: ReadonlySet<string>): number[] {
  const dq = [0, 0, 0, 0];
  for (const key of held) {
    const axis = KEY_AXIS[key];
    if (axis !== undefined) {
      dq[axis[0]] += axis[1] * STEP[axis[0]];
    }
  }
  // Opposing keys cancel; a single key never exceeds one step.
  for (let i = 0; i < 4; i++) {
    dq[i] = Math.max(-STEP[i], Math.min(STEP[i], dq[i]));
  }
  return dq;
}

export function isAxisKey(key: string): boolean {
  return key in KEY_AXIS;
}

export class KeyboardInput {
  private held = new Set<string>();
  private grip = 0;

  handleKeyDown(key: string): void {
    const k = key.toLowerCase();
    if (k === " ") {
      this.grip = this.grip > 0.5 ? 0 : 1;
    } else if (isAxisKey(k)) {
      this.held.add(k);
    }
  }

  handleKeyUp(key: string): void {
    this.held.delete(key.toLowerCase());
  }

  releaseAll(): void {
    this.held.clear();
  }

  sample(): { dq: number[]; grip: number } {
    return { dq: dqFromKeys(this.held), grip: this.grip };
  }
}
