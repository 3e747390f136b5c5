// End-to-end against a real correction service: a scripted pose-slider drag
// must produce a frame update within a 200 ms median round trip, and the
// metrics panel must mirror the service JSON exactly.

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { CorrectionClient, type FrameEvent } from "../src/api.js";
import { metricsRows } from "../src/metrics.js";
import { quantizePose } from "../src/pose.js";

const PORT = 8876 + Math.floor(Math.random() * 100);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess;
let workdir: string;
let scenePng: Uint8Array;

async function waitForHealth(client: CorrectionClient, timeoutMs = 30000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (await client.health()) return;
    await new Promise((resolve) => setTimeout(resolve, 100));
  }
  throw new Error("service never became healthy");
}

beforeAll(async () => {
  workdir = mkdtempSync(join(tmpdir(), "vcui-"));
  const imagePath = join(workdir, "scene.png");
  const gen = spawnSync("python3", [
    "-c",
    "import sys; from visioncorrect.image import save_png, reference_scene; save_png(reference_scene(96), sys.argv[1])",
    imagePath,
  ]);
  if (gen.status !== 0) {
    throw new Error(`could not render test image: ${gen.stderr}`);
  }
  scenePng = readFileSync(imagePath);
  server = spawn("python3", ["-m", "visioncorrect.service", "--port", String(PORT)], {
    stdio: "ignore",
  });
  await waitForHealth(new CorrectionClient(BASE));
}, 60000);

afterAll(() => {
  server?.kill();
  rmSync(workdir, { recursive: true, force: true });
});

function eventCollector(client: CorrectionClient, sessionId: string) {
  const waiters: Array<(e: FrameEvent) => void> = [];
  const unsubscribe = client.subscribeEvents(sessionId, (event) => {
    const waiter = waiters.shift();
    if (waiter) waiter(event);
  });
  return {
    next(timeoutMs = 10000): Promise<FrameEvent> {
      return new Promise((resolve, reject) => {
        const timer = setTimeout(() => reject(new Error("no frame_ready event")), timeoutMs);
        waiters.push((event) => {
          clearTimeout(timer);
          resolve(event);
        });
      });
    },
    close: unsubscribe,
  };
}

describe("UI loop against a live service", () => {
  it("criterion 12: drag round trip under 200 ms median; metrics mirror exactly", async () => {
    const client = new CorrectionClient(BASE);
    const sessionId = await client.createSession({ sphere_diopters: -2.0 });
    await client.putImage(sessionId, scenePng);

    const events = eventCollector(client, sessionId);
    try {
      // scripted slider drag: 8 steps, each far enough to defeat hysteresis
      const rtts: number[] = [];
      for (let step = 0; step < 8; step++) {
        const pose = quantizePose({
          distance_m: 1.0 - 0.06 * step,
          theta_x_rad: 0,
          theta_y_rad: 0,
        });
        const t0 = performance.now();
        const ack = await client.putPose(sessionId, pose);
        expect(ack.regenerating).toBe(true);
        await events.next();
        const frame = await client.fetchFrame(sessionId, "precorrected");
        rtts.push(performance.now() - t0);
        expect(frame.size).toBeGreaterThan(0);
      }
      const median = rtts.sort((a, b) => a - b)[Math.floor(rtts.length / 2)];
      console.log(`pose->frame RTTs (ms): ${rtts.map((v) => v.toFixed(1)).join(", ")}`);
      expect(median).toBeLessThan(200);

      // metrics panel rows mirror the service payload exactly
      const payload = await client.getMetrics(sessionId);
      const rows = metricsRows(payload);
      expect(rows.length).toBeGreaterThanOrEqual(8);
      for (const row of rows) {
        expect(row.value).toBe(String(payload[row.key]));
      }
    } finally {
      events.close();
    }
  }, 60000);

  it("focus-distance pose leaves the image untouched", async () => {
    const client = new CorrectionClient(BASE);
    const sessionId = await client.createSession({ sphere_diopters: -2.0 });
    await client.putImage(sessionId, scenePng);
    const events = eventCollector(client, sessionId);
    try {
      await client.putPose(sessionId, { distance_m: 0.5, theta_x_rad: 0, theta_y_rad: 0 });
      await events.next();
      const [pre, orig] = await Promise.all([
        client.fetchFrame(sessionId, "precorrected"),
        client.fetchFrame(sessionId, "original"),
      ]);
      const a = new Uint8Array(await pre.arrayBuffer());
      const b = new Uint8Array(await orig.arrayBuffer());
      expect(a).toEqual(b); // delta kernel: simulated == original pixels
    } finally {
      events.close();
    }
  }, 60000);

  it("oblique pose serves an elliptical PSF view", async () => {
    const client = new CorrectionClient(BASE);
    const sessionId = await client.createSession({ sphere_diopters: -2.0 });
    await client.putImage(sessionId, scenePng);
    const events = eventCollector(client, sessionId);
    try {
      await client.putPose(sessionId, {
        distance_m: 1.0,
        theta_x_rad: 0,
        theta_y_rad: Math.PI / 4,
      });
      await events.next();
      const psf = await client.fetchFrame(sessionId, "psf");
      expect(psf.size).toBeGreaterThan(0);
      const head = new Uint8Array(await psf.arrayBuffer()).slice(0, 8);
      expect(Array.from(head)).toEqual([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);
    } finally {
      events.close();
    }
  }, 60000);
});
