// HTTP client for the correction service. The UI performs no image math:
// every pixel it shows comes back from these endpoints.

export type Pose = {
  distance_m: number;
  theta_x_rad: number;
  theta_y_rad: number;
};

export type SessionOptions = {
  sphere_diopters?: number;
  optical_spec?: Record<string, number>;
  rho?: number;
  rho_text?: number;
  ringing?: boolean;
};

export type PoseAck = {
  accepted: boolean;
  regenerating: boolean;
  generation: number;
};

export type FrameEvent = {
  event: string;
  generation: number;
  processing_ms: number;
};

export type MetricsPayload = Record<string, number | string>;

export type ViewName = "original" | "precorrected" | "simulated" | "psf" | "diff";

export class ServiceError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

async function expectOk(resp: Response): Promise<Response> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = await resp.json();
      detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
    } catch {
      // keep the status text
    }
    throw new ServiceError(detail, resp.status);
  }
  return resp;
}

export class CorrectionClient {
  constructor(readonly baseUrl: string) {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async health(): Promise<boolean> {
    try {
      const resp = await fetch(this.url("/health"));
      return resp.ok;
    } catch {
      return false;
    }
  }

  async createSession(options: SessionOptions): Promise<string> {
    const resp = await expectOk(
      await fetch(this.url("/session"), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(options),
      }),
    );
    const body = (await resp.json()) as { id: string };
    return body.id;
  }

  async putImage(sessionId: string, png: Blob | ArrayBuffer | Uint8Array): Promise<{ width: number; height: number }> {
    const resp = await expectOk(
      await fetch(this.url(`/session/${sessionId}/image`), {
        method: "PUT",
        headers: { "content-type": "image/png" },
        body: png as BodyInit,
      }),
    );
    return (await resp.json()) as { width: number; height: number };
  }

  async putPose(sessionId: string, pose: Pose): Promise<PoseAck> {
    const resp = await expectOk(
      await fetch(this.url(`/session/${sessionId}/pose`), {
        method: "PUT",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(pose),
      }),
    );
    return (await resp.json()) as PoseAck;
  }

  frameUrl(sessionId: string, view: ViewName, generation?: number): string {
    const tag = generation === undefined ? "" : `&g=${generation}`;
    return this.url(`/session/${sessionId}/frame?view=${view}${tag}`);
  }

  async fetchFrame(sessionId: string, view: ViewName): Promise<Blob> {
    const resp = await expectOk(await fetch(this.frameUrl(sessionId, view)));
    return await resp.blob();
  }

  async getMetrics(sessionId: string): Promise<MetricsPayload> {
    const resp = await expectOk(await fetch(this.url(`/session/${sessionId}/metrics`)));
    return (await resp.json()) as MetricsPayload;
  }

  /** Server-sent events over a streaming fetch (works in browsers and node). */
  subscribeEvents(
    sessionId: string,
    onEvent: (event: FrameEvent) => void,
    onError?: (err: unknown) => void,
  ): () => void {
    const controller = new AbortController();
    (async () => {
      try {
        const resp = await fetch(this.url(`/session/${sessionId}/events`), {
          signal: controller.signal,
        });
        if (!resp.ok || resp.body === null) {
          throw new ServiceError("event stream unavailable", resp.status);
        }
        const reader = resp.body.getReader();
        const decoder = new TextDecoder();
        let buffer = "";
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          buffer += decoder.decode(value, { stream: true });
          const { events, rest } = parseSseBuffer(buffer);
          buffer = rest;
          for (const data of events) {
            onEvent(JSON.parse(data) as FrameEvent);
          }
        }
      } catch (err) {
        if (!controller.signal.aborted && onError) onError(err);
      }
    })();
    return () => controller.abort();
  }
}

/** Split an SSE text buffer into complete `data:` payloads plus the unfinished tail. */
export function parseSseBuffer(buffer: string): { events: string[]; rest: string } {
  const events: string[] = [];
  let start = 0;
  for (;;) {
    const cut = buffer.indexOf("\n\n", start);
    if (cut < 0) break;
    const block = buffer.slice(start, cut);
    start = cut + 2;
    const payload = block
      .split("\n")
      .filter((line) => line.startsWith("data: "))
      .map((line) => line.slice(6))
      .join("\n");
    if (payload.length > 0) events.push(payload);
  }
  return { events, rest: buffer.slice(start) };
}
