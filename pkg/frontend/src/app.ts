// Operator console: prescription in, image up, pose steered by sliders or
// the angle pad, with original / precorrected / simulated / PSF / diff views
// and a live metrics panel. All pixels come from the service; the client
// only arranges them.

import { CorrectionClient, type FrameEvent, type Pose, type ViewName } from "./api.js";
import { metricsRows } from "./metrics.js";
import { DEBOUNCE_MS, PoseDispatcher } from "./pose.js";
import { parsePoseLog, PoseRecorder, PoseReplayer } from "./poselog.js";

const VIEWS: ViewName[] = ["original", "precorrected", "simulated", "psf", "diff"];
const MAX_ANGLE_DEG = 60;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

class ConsoleApp {
  private readonly client: CorrectionClient;
  private sessionId: string | null = null;
  private hasImage = false;
  private view: ViewName = "precorrected";
  private unsubscribe: (() => void) | null = null;
  private dispatcher: PoseDispatcher;
  private recorder = new PoseRecorder();
  private replayer: PoseReplayer | null = null;
  private lastGeneration = 0;
  private refreshQueued = false;

  private banner = el<HTMLDivElement>("banner");
  private bannerText = el<HTMLSpanElement>("banner-text");
  private form = el<HTMLFormElement>("prescription-form");
  private diopters = el<HTMLInputElement>("diopters");
  private pupil = el<HTMLInputElement>("pupil-mm");
  private pitch = el<HTMLInputElement>("pitch-mm");
  private ringing = el<HTMLInputElement>("ringing");
  private formError = el<HTMLSpanElement>("form-error");
  private upload = el<HTMLInputElement>("image-upload");
  private distance = el<HTMLInputElement>("distance");
  private distanceOut = el<HTMLOutputElement>("distance-out");
  private pad = el<HTMLDivElement>("angle-pad");
  private padDot = el<HTMLDivElement>("angle-dot");
  private angleOut = el<HTMLOutputElement>("angle-out");
  private tabs = el<HTMLDivElement>("tabs");
  private frame = el<HTMLImageElement>("frame");
  private metricsBody = el<HTMLTableSectionElement>("metrics-body");
  private status = el<HTMLSpanElement>("status");
  private recordBtn = el<HTMLButtonElement>("record");
  private downloadLink = el<HTMLAnchorElement>("download-log");
  private replayInput = el<HTMLInputElement>("replay-upload");

  private thetaXDeg = 0;
  private thetaYDeg = 0;

  constructor() {
    this.client = new CorrectionClient("");
    this.dispatcher = new PoseDispatcher((pose) => this.sendPose(pose), DEBOUNCE_MS);
    this.wire();
    void this.checkHealth();
  }

  private wire(): void {
    el<HTMLButtonElement>("banner-retry").addEventListener("click", () => void this.checkHealth());
    this.form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.startSession();
    });
    this.upload.addEventListener("change", () => void this.uploadImage());
    this.distance.addEventListener("input", () => {
      this.distanceOut.value = `${Number(this.distance.value).toFixed(2)} m`;
      this.pushPose();
    });

    const onPad = (ev: PointerEvent) => {
      if (ev.buttons === 0 && ev.type !== "pointerdown") return;
      const rect = this.pad.getBoundingClientRect();
      const nx = Math.min(1, Math.max(-1, ((ev.clientX - rect.left) / rect.width) * 2 - 1));
      const ny = Math.min(1, Math.max(-1, ((ev.clientY - rect.top) / rect.height) * 2 - 1));
      this.thetaYDeg = Math.round(nx * MAX_ANGLE_DEG);
      this.thetaXDeg = Math.round(ny * MAX_ANGLE_DEG);
      this.renderPad();
      this.pushPose();
    };
    this.pad.addEventListener("pointerdown", (ev) => {
      this.pad.setPointerCapture(ev.pointerId);
      onPad(ev);
    });
    this.pad.addEventListener("pointermove", onPad);
    this.pad.addEventListener("dblclick", () => {
      this.thetaXDeg = 0;
      this.thetaYDeg = 0;
      this.renderPad();
      this.pushPose();
    });

    for (const view of VIEWS) {
      const button = document.createElement("button");
      button.textContent = view;
      button.dataset.view = view;
      button.addEventListener("click", () => {
        this.view = view;
        this.renderTabs();
        this.refreshFrame();
      });
      this.tabs.appendChild(button);
    }
    this.renderTabs();

    this.recordBtn.addEventListener("click", () => this.toggleRecording());
    this.replayInput.addEventListener("change", () => void this.replayLog());
  }

  private async checkHealth(): Promise<void> {
    const ok = await this.client.health();
    this.banner.hidden = ok;
    if (!ok) this.bannerText.textContent = "correction service unreachable";
  }

  private fail(message: string): void {
    this.banner.hidden = false;
    this.bannerText.textContent = message;
  }

  private async startSession(): Promise<void> {
    this.formError.textContent = "";
    const sphere = Number(this.diopters.value);
    const pupilMm = Number(this.pupil.value);
    const pitchMm = Number(this.pitch.value);
    if (!Number.isFinite(sphere) || sphere === 0) {
      this.formError.textContent = "sphere power must be a nonzero number of diopters";
      return;
    }
    if (!(pupilMm > 0.5 && pupilMm < 10)) {
      this.formError.textContent = "pupil diameter should be between 0.5 and 10 mm";
      return;
    }
    if (!(pitchMm > 0.01 && pitchMm < 2)) {
      this.formError.textContent = "pixel pitch should be between 0.01 and 2 mm";
      return;
    }
    try {
      if (this.unsubscribe) this.unsubscribe();
      this.sessionId = await this.client.createSession({
        sphere_diopters: sphere,
        ringing: this.ringing.checked,
      });
      this.hasImage = false;
      this.unsubscribe = this.client.subscribeEvents(
        this.sessionId,
        (event) => this.onFrameReady(event),
        () => this.fail("event stream lost"),
      );
      this.status.textContent = `session ${this.sessionId} (pupil ${pupilMm} mm, pitch ${pitchMm} mm)`;
    } catch (err) {
      this.fail(`could not create session: ${String(err)}`);
    }
  }

  private async uploadImage(): Promise<void> {
    const file = this.upload.files?.[0];
    if (!file || this.sessionId === null) return;
    try {
      await this.client.putImage(this.sessionId, file);
      this.hasImage = true;
      this.pushPose();
      this.refreshFrame();
    } catch (err) {
      this.fail(`image upload failed: ${String(err)}`);
    }
  }

  private currentPose(): Pose {
    return {
      distance_m: Number(this.distance.value),
      theta_x_rad: (this.thetaXDeg * Math.PI) / 180,
      theta_y_rad: (this.thetaYDeg * Math.PI) / 180,
    };
  }

  private pushPose(): void {
    if (this.sessionId === null || !this.hasImage) return;
    const pose = this.currentPose();
    this.recorder.record(pose);
    this.dispatcher.update(pose);
  }

  private async sendPose(pose: Pose): Promise<void> {
    if (this.sessionId === null) return;
    try {
      await this.client.putPose(this.sessionId, pose);
    } catch (err) {
      this.fail(`pose update failed: ${String(err)}`);
    }
  }

  private onFrameReady(event: FrameEvent): void {
    if (event.event !== "frame_ready") return;
    this.lastGeneration = event.generation;
    this.status.textContent =
      `generation ${event.generation} in ${event.processing_ms.toFixed(1)} ms`;
    if (!this.refreshQueued) {
      this.refreshQueued = true;
      requestAnimationFrame(() => {
        this.refreshQueued = false;
        this.refreshFrame();
        void this.refreshMetrics();
      });
    }
  }

  private refreshFrame(): void {
    if (this.sessionId === null || !this.hasImage) return;
    this.frame.src = this.client.frameUrl(this.sessionId, this.view, this.lastGeneration);
  }

  private async refreshMetrics(): Promise<void> {
    if (this.sessionId === null) return;
    try {
      const payload = await this.client.getMetrics(this.sessionId);
      this.metricsBody.replaceChildren(
        ...metricsRows(payload).map((row) => {
          const tr = document.createElement("tr");
          const name = document.createElement("td");
          name.textContent = row.label;
          const value = document.createElement("td");
          value.textContent = row.value; // exact mirror of the service JSON
          tr.append(name, value);
          return tr;
        }),
      );
    } catch {
      // metrics lag one generation behind during regeneration; keep the old panel
    }
  }

  private renderTabs(): void {
    for (const button of this.tabs.querySelectorAll("button")) {
      button.classList.toggle("active", button.dataset.view === this.view);
    }
  }

  private renderPad(): void {
    this.padDot.style.left = `${50 + (this.thetaYDeg / MAX_ANGLE_DEG) * 50}%`;
    this.padDot.style.top = `${50 + (this.thetaXDeg / MAX_ANGLE_DEG) * 50}%`;
    this.angleOut.value = `${this.thetaYDeg}° / ${this.thetaXDeg}°`;
  }

  private toggleRecording(): void {
    if (this.recorder.recording) {
      const log = this.recorder.stop();
      const blob = new Blob([log], { type: "text/plain" });
      this.downloadLink.href = URL.createObjectURL(blob);
      this.downloadLink.hidden = false;
      this.recordBtn.textContent = "record poses";
    } else {
      this.recorder.start();
      this.downloadLink.hidden = true;
      this.recordBtn.textContent = "stop recording";
    }
  }

  private async replayLog(): Promise<void> {
    const file = this.replayInput.files?.[0];
    if (!file) return;
    this.replayer?.cancel();
    const samples = parsePoseLog(await file.text());
    this.replayer = new PoseReplayer(samples, (pose) => {
      this.distance.value = pose.distance_m.toFixed(2);
      this.distanceOut.value = `${pose.distance_m.toFixed(2)} m`;
      this.thetaXDeg = Math.round((pose.theta_x_rad * 180) / Math.PI);
      this.thetaYDeg = Math.round((pose.theta_y_rad * 180) / Math.PI);
      this.renderPad();
      this.dispatcher.update(pose);
    });
    await this.replayer.play();
  }
}

new ConsoleApp();
