/**
 * Explorer state and its pure update functions.
 *
 * The state never holds numerical results, only the selections that drive
 * service requests: which sessions sit in the two panels, the selected
 * pixel, the source/drain toggle, the rank slider, the multi-selection for
 * cumulative echoes, and the rescale mode.
 */

import type { RescaleMode } from "./rescale.js";

export type Direction = "source" | "drain";

export interface SessionInfo {
  id: string;
  nx: number;
  ny: number;
  k: number;
  filter: string;
  exclusions: number;
  spectrumUrl: string;
}

export interface Pixel {
  x: number;
  y: number;
}

export type Panels = [SessionInfo | null, SessionInfo | null];

export interface ExplorerState {
  panels: Panels;
  selected: Pixel | null;
  direction: Direction;
  rank: number | null; // null renders at full rank
  multiSelect: Pixel[];
  rescaleMode: RescaleMode;
}

export function initialState(): ExplorerState {
  return {
    panels: [null, null],
    selected: null,
    direction: "source",
    rank: null,
    multiSelect: [],
    rescaleMode: "per",
  };
}

export function activeSessions(state: ExplorerState): SessionInfo[] {
  return state.panels.filter((p): p is SessionInfo => p !== null);
}

export function canCompare(a: SessionInfo, b: SessionInfo): boolean {
  return a.nx === b.nx && a.ny === b.ny;
}

export function maxRank(state: ExplorerState): number {
  const sessions = activeSessions(state);
  if (sessions.length === 0) return 0;
  return Math.min(...sessions.map((p) => p.k));
}

/** Put a session into panel 0 or 1; mismatched dimensions are rejected. */
export function openSession(
  state: ExplorerState,
  session: SessionInfo,
  panel: 0 | 1 = 0,
): ExplorerState {
  const other = state.panels[1 - panel];
  if (other && !canCompare(other, session)) {
    throw new Error(
      `cannot compare ${session.nx}x${session.ny} with ${other.nx}x${other.ny}`,
    );
  }
  const panels: Panels = [state.panels[0], state.panels[1]];
  panels[panel] = session;
  const next = { ...state, panels };
  // selections from another image size no longer apply
  if (state.selected && !inBounds(next, state.selected)) next.selected = null;
  next.multiSelect = state.multiSelect.filter((p) => inBounds(next, p));
  if (next.rank !== null) next.rank = clampRank(next, next.rank);
  return next;
}

function inBounds(state: ExplorerState, pixel: Pixel): boolean {
  const sessions = activeSessions(state);
  return (
    sessions.length > 0 &&
    sessions.every(
      (p) => pixel.x >= 0 && pixel.x < p.nx && pixel.y >= 0 && pixel.y < p.ny,
    )
  );
}

function clampRank(state: ExplorerState, rank: number): number {
  return Math.max(1, Math.min(rank, maxRank(state)));
}

/** Select the probed pixel; out-of-bounds clicks leave the state unchanged. */
export function selectPixel(state: ExplorerState, x: number, y: number): ExplorerState {
  const pixel = { x: Math.floor(x), y: Math.floor(y) };
  if (!inBounds(state, pixel)) return state;
  return { ...state, selected: pixel };
}

export function toggleDirection(state: ExplorerState): ExplorerState {
  return { ...state, direction: state.direction === "source" ? "drain" : "source" };
}

/** Slider position, clamped into [1, min k across panels]. */
export function setRank(state: ExplorerState, rank: number | null): ExplorerState {
  if (rank === null || activeSessions(state).length === 0) return { ...state, rank: null };
  return { ...state, rank: clampRank(state, Math.floor(rank)) };
}

/** Add or remove a pixel from the cumulative multi-selection. */
export function toggleMultiSelect(state: ExplorerState, x: number, y: number): ExplorerState {
  const pixel = { x: Math.floor(x), y: Math.floor(y) };
  if (!inBounds(state, pixel)) return state;
  const existing = state.multiSelect.findIndex((p) => p.x === pixel.x && p.y === pixel.y);
  const multiSelect =
    existing >= 0
      ? state.multiSelect.filter((_, i) => i !== existing)
      : [...state.multiSelect, pixel];
  return { ...state, multiSelect };
}

export function clearMultiSelect(state: ExplorerState): ExplorerState {
  return { ...state, multiSelect: [] };
}

export function setRescaleMode(state: ExplorerState, mode: RescaleMode): ExplorerState {
  return { ...state, rescaleMode: mode };
}
