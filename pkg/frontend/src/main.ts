/**
 * DOM wiring for the echo explorer.
 *
 * All numerics come from the service; this file only routes clicks and
 * slider moves into requests and paints the returned rasters. In compare
 * mode one click drives both panels and the two raw echoes are rescaled
 * jointly on the client.
 */

import { EchoClient, EchoPayload } from "./api.js";
import { debounce, LatestOnly } from "./debounce.js";
import { canvasToPixel, decodeRaw, toRGBA, zoomFactor } from "./raster.js";
import { rescale } from "./rescale.js";
import type { RescaleMode } from "./rescale.js";
import {
  activeSessions,
  ExplorerState,
  initialState,
  openSession,
  selectPixel,
  setRank,
  setRescaleMode,
  toggleDirection,
  toggleMultiSelect,
} from "./state.js";

const CANVAS_SIZE = 384;

let state: ExplorerState = initialState();
const client = new EchoClient(
  (window as unknown as { ECHOLAB_URL?: string }).ECHOLAB_URL ?? "http://127.0.0.1:8000",
);
const inflight = new LatestOnly();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function toast(message: string): void {
  const box = el<HTMLDivElement>("toast");
  box.textContent = message;
  box.style.opacity = "1";
  setTimeout(() => (box.style.opacity = "0"), 4000);
}

function panelCanvas(panel: number): HTMLCanvasElement {
  return el<HTMLCanvasElement>(`canvas${panel}`);
}

function drawPayload(panel: number, payload: EchoPayload, raster: Uint8Array): void {
  const canvas = panelCanvas(panel);
  const zoom = zoomFactor(CANVAS_SIZE, payload.nx);
  canvas.width = payload.nx * zoom;
  canvas.height = payload.ny * zoom;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const rgba = toRGBA(raster, payload.nx, payload.ny, state.selected, state.multiSelect);
  const base = new OffscreenCanvas(payload.nx, payload.ny);
  const bctx = base.getContext("2d");
  if (!bctx) return;
  bctx.putImageData(new ImageData(rgba, payload.nx, payload.ny), 0, 0);
  ctx.imageSmoothingEnabled = false; // nearest-neighbour zoom
  ctx.drawImage(base, 0, 0, canvas.width, canvas.height);
}

async function refreshEchoes(): Promise<void> {
  if (!state.selected) return;
  const requests: { panel: number; promise: Promise<EchoPayload> }[] = [];
  state.panels.forEach((session, panel) => {
    if (!session) return;
    const promise =
      state.multiSelect.length > 1
        ? client.getCumulative(session.id, state.multiSelect, state.direction)
        : client.getEcho(session.id, state.selected!, state.direction, state.rank);
    requests.push({ panel, promise });
  });
  if (requests.length === 0) return;
  const ticket = inflight.next();
  try {
    const payloads = await Promise.all(requests.map((r) => r.promise));
    if (!inflight.isCurrent(ticket)) return; // superseded click
    const mode: RescaleMode = state.rescaleMode;
    const rasters = rescale(payloads.map((p) => decodeRaw(p.raw)), mode);
    requests.forEach((r, i) => drawPayload(r.panel, payloads[i], rasters[i]));
    el<HTMLSpanElement>("status").textContent = requests
      .map((r, i) => {
        const session = state.panels[r.panel]!;
        return `panel ${r.panel}: ${session.filter}, raw max ${payloads[i].raw_max.toExponential(3)}`;
      })
      .join(" | ");
  } catch (err) {
    if (inflight.isCurrent(ticket)) toast(String(err));
  }
}

const debouncedRefresh = debounce(refreshEchoes, 150);

function filterConfigFromForm(): Record<string, unknown> {
  const method = el<HTMLSelectElement>("method").value;
  const num = (id: string) => Number(el<HTMLInputElement>(id).value);
  if (method === "bilateral") {
    return { method, sigma_t: num("sigmaT"), sigma_s: num("sigmaS") };
  }
  if (method === "nlmeans") {
    return { method, sigma: num("sigmaT"), patch_radius: 3 };
  }
  const config: Record<string, unknown> = {
    method,
    tau: num("tau"),
    time: num("time"),
  };
  if (method !== "hd") {
    config.diffusivity = el<HTMLSelectElement>("diffusivity").value;
    config.lambda = num("lambda");
    config.sigma = num("sigma");
  }
  return config;
}

async function createSessionInPanel(panel: 0 | 1): Promise<void> {
  const files = el<HTMLInputElement>("file").files;
  if (!files || files.length === 0) {
    toast("choose a PGM image first");
    return;
  }
  const compression = {
    rank_fraction: Number(el<HTMLInputElement>("rankFrac").value),
    seed: 7,
  };
  try {
    const session = await client.createSession(files[0], filterConfigFromForm(), compression);
    state = openSession(state, session, panel);
    const slider = el<HTMLInputElement>("rank");
    slider.max = String(session.k);
    slider.value = String(session.k);
    state = setRank(state, null);
    toast(`session ${session.id} ready (k = ${session.k}, ${session.exclusions} excluded)`);
    void refreshEchoes();
  } catch (err) {
    toast(String(err));
  }
}

function wire(): void {
  el<HTMLButtonElement>("openA").addEventListener("click", () => void createSessionInPanel(0));
  el<HTMLButtonElement>("openB").addEventListener("click", () => void createSessionInPanel(1));

  for (const panel of [0, 1] as const) {
    panelCanvas(panel).addEventListener("click", (event) => {
      const session = state.panels[panel] ?? activeSessions(state)[0];
      if (!session) return;
      const canvas = panelCanvas(panel);
      const rect = canvas.getBoundingClientRect();
      const zoom = zoomFactor(CANVAS_SIZE, session.nx);
      const x = canvasToPixel(event.clientX - rect.left, zoom);
      const y = canvasToPixel(event.clientY - rect.top, zoom);
      if (el<HTMLInputElement>("multi").checked) {
        state = toggleMultiSelect(state, x, y);
        state = selectPixel(state, x, y);
      } else {
        state = { ...state, multiSelect: [] };
        state = selectPixel(state, x, y);
      }
      void refreshEchoes();
    });
  }

  el<HTMLButtonElement>("direction").addEventListener("click", () => {
    state = toggleDirection(state);
    el<HTMLButtonElement>("direction").textContent = state.direction;
    void refreshEchoes();
  });

  el<HTMLInputElement>("rank").addEventListener("input", (event) => {
    const value = Number((event.target as HTMLInputElement).value);
    state = setRank(state, value);
    debouncedRefresh.call();
  });

  el<HTMLSelectElement>("rescale").addEventListener("change", (event) => {
    state = setRescaleMode(state, (event.target as HTMLSelectElement).value as RescaleMode);
    void refreshEchoes();
  });
}

wire();
