/**
 * Typed client for the echolab echo service.
 *
 * The fetch implementation is injected so tests can stub the network; the
 * default is the global fetch.
 */

import type { Direction, Pixel, SessionInfo } from "./state.js";

export interface EchoPayload {
  nx: number;
  ny: number;
  raster: string; // base64 uint8
  raw: string; // base64 little-endian float64
  raw_max: number;
  location?: { x: number; y: number };
  direction?: string;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function expectOk(resp: Response): Promise<Response> {
  if (!resp.ok) {
    let detail = `${resp.status}`;
    try {
      const body = await resp.json();
      if (body && body.detail) detail = `${resp.status}: ${body.detail}`;
    } catch {
      // non-JSON error body; keep the status code
    }
    throw new Error(`service error ${detail}`);
  }
  return resp;
}

export class EchoClient {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private url(path: string): string {
    return `${this.baseUrl.replace(/\/$/, "")}${path}`;
  }

  async createSession(
    image: Blob,
    filter: Record<string, unknown>,
    compression: Record<string, unknown>,
  ): Promise<SessionInfo> {
    const form = new FormData();
    form.append("image", image, "image.pgm");
    form.append("filter", JSON.stringify(filter));
    form.append("compression", JSON.stringify(compression));
    const resp = await expectOk(
      await this.fetchFn(this.url("/sessions"), { method: "POST", body: form }),
    );
    const body = await resp.json();
    return {
      id: body.id,
      nx: body.nx,
      ny: body.ny,
      k: body.k,
      filter: body.filter,
      exclusions: body.exclusions,
      spectrumUrl: body.spectrum_url,
    };
  }

  async getEcho(
    sessionId: string,
    pixel: Pixel,
    direction: Direction,
    rank: number | null = null,
  ): Promise<EchoPayload> {
    const params = new URLSearchParams({
      x: String(pixel.x),
      y: String(pixel.y),
      direction,
    });
    if (rank !== null) params.set("rank", String(rank));
    const resp = await expectOk(
      await this.fetchFn(this.url(`/sessions/${sessionId}/echo?${params}`)),
    );
    return resp.json();
  }

  async getCumulative(
    sessionId: string,
    pixels: Pixel[],
    direction: Direction,
  ): Promise<EchoPayload> {
    const query = new URLSearchParams({
      pixels: pixels.map((p) => `${p.x},${p.y}`).join(";"),
      direction,
    });
    const resp = await expectOk(
      await this.fetchFn(this.url(`/sessions/${sessionId}/cumulative?${query}`)),
    );
    return resp.json();
  }

  async getImage(sessionId: string, which: "original" | "filtered"): Promise<EchoPayload> {
    const resp = await expectOk(
      await this.fetchFn(this.url(`/sessions/${sessionId}/image?which=${which}`)),
    );
    return resp.json();
  }

  async getSpectrum(sessionId: string): Promise<string> {
    const resp = await expectOk(
      await this.fetchFn(this.url(`/sessions/${sessionId}/spectrum`)),
    );
    return resp.text();
  }
}
