// Pose input model: quantization to the control granularity plus a
// debounced, latest-wins dispatcher so slider drags never pile up more
// than one in-flight request on the service.

import type { Pose } from "./api.js";

export const DISTANCE_STEP_M = 0.01;
export const ANGLE_STEP_RAD = Math.PI / 180; // 1 degree
export const DEBOUNCE_MS = 50;

export function quantizePose(pose: Pose): Pose {
  const snap = (value: number, step: number) => Math.round(value / step) * step;
  return {
    distance_m: snap(pose.distance_m, DISTANCE_STEP_M),
    theta_x_rad: snap(pose.theta_x_rad, ANGLE_STEP_RAD),
    theta_y_rad: snap(pose.theta_y_rad, ANGLE_STEP_RAD),
  };
}

export function posesEqual(a: Pose | null, b: Pose | null): boolean {
  if (a === null || b === null) return a === b;
  return (
    a.distance_m === b.distance_m &&
    a.theta_x_rad === b.theta_x_rad &&
    a.theta_y_rad === b.theta_y_rad
  );
}

type SendFn = (pose: Pose) => Promise<unknown>;

export class PoseDispatcher {
  private pending: Pose | null = null;
  private lastSent: Pose | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private inflightCount = 0;
  private sendCount = 0;

  constructor(
    private readonly send: SendFn,
    private readonly debounceMs: number = DEBOUNCE_MS,
  ) {}

  /** Number of requests handed to fetch so far (for tests/diagnostics). */
  get sent(): number {
    return this.sendCount;
  }

  get inflight(): boolean {
    return this.inflightCount > 0;
  }

  update(raw: Pose): void {
    const pose = quantizePose(raw);
    if (posesEqual(pose, this.pending ?? this.lastSent)) {
      return; // below control granularity: nothing new to say
    }
    this.pending = pose;
    if (this.timer === null && !this.inflight) {
      this.timer = setTimeout(() => {
        this.timer = null;
        void this.flush();
      }, this.debounceMs);
    }
  }

  private async flush(): Promise<void> {
    if (this.inflight || this.pending === null) return;
    const pose = this.pending;
    this.pending = null;
    this.lastSent = pose;
    this.inflightCount += 1;
    this.sendCount += 1;
    try {
      await this.send(pose);
    } finally {
      this.inflightCount -= 1;
      if (this.pending !== null) {
        // a newer pose arrived mid-flight: it wins, immediately
        void this.flush();
      }
    }
  }

  /** Resolves once nothing is pending or in flight (test helper). */
  async settled(pollMs = 5): Promise<void> {
    for (;;) {
      if (this.pending === null && !this.inflight && this.timer === null) return;
      await new Promise((resolve) => setTimeout(resolve, pollMs));
    }
  }
}
