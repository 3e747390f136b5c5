// Viewer-pose log format shared with the engine:
// one sample per line, `timestamp_ms distance_m theta_x_rad theta_y_rad`.

import type { Pose } from "./api.js";

export type PoseSample = { timestampMs: number; pose: Pose };

export function formatPoseLogLine(timestampMs: number, pose: Pose): string {
  return (
    `${timestampMs.toFixed(3)} ${pose.distance_m.toFixed(6)} ` +
    `${pose.theta_x_rad.toFixed(6)} ${pose.theta_y_rad.toFixed(6)}`
  );
}

export function formatPoseLog(samples: PoseSample[]): string {
  return samples.map((s) => formatPoseLogLine(s.timestampMs, s.pose)).join("\n") + "\n";
}

export function parsePoseLog(text: string): PoseSample[] {
  const samples: PoseSample[] = [];
  for (const raw of text.split("\n")) {
    const line = raw.trim();
    if (line.length === 0 || line.startsWith("#")) continue;
    const parts = line.split(/\s+/).map(Number);
    if (parts.length !== 4 || parts.some((v) => Number.isNaN(v))) {
      throw new Error(`bad pose log line: ${raw}`);
    }
    samples.push({
      timestampMs: parts[0],
      pose: { distance_m: parts[1], theta_x_rad: parts[2], theta_y_rad: parts[3] },
    });
  }
  return samples;
}

export class PoseRecorder {
  private samples: PoseSample[] = [];
  private startedAt: number | null = null;

  get recording(): boolean {
    return this.startedAt !== null;
  }

  get count(): number {
    return this.samples.length;
  }

  start(now: number = Date.now()): void {
    this.samples = [];
    this.startedAt = now;
  }

  record(pose: Pose, now: number = Date.now()): void {
    if (this.startedAt === null) return;
    this.samples.push({ timestampMs: now - this.startedAt, pose });
  }

  stop(): string {
    this.startedAt = null;
    return formatPoseLog(this.samples);
  }
}

/** Plays a recorded log back through `apply`, honoring relative timestamps. */
export class PoseReplayer {
  private cancelled = false;

  constructor(
    private readonly samples: PoseSample[],
    private readonly apply: (pose: Pose) => void,
  ) {}

  cancel(): void {
    this.cancelled = true;
  }

  async play(speed = 1.0): Promise<void> {
    if (this.samples.length === 0) return;
    const t0 = this.samples[0].timestampMs;
    let elapsed = 0;
    for (const sample of this.samples) {
      const wait = (sample.timestampMs - t0) / speed - elapsed;
      if (wait > 0) {
        await new Promise((resolve) => setTimeout(resolve, wait));
        elapsed += wait;
      }
      if (this.cancelled) return;
      this.apply(sample.pose);
    }
  }
}
