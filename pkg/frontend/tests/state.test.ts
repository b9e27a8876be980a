import { describe, expect, it } from "vitest";

import {
  activeSessions,
  canCompare,
  initialState,
  maxRank,
  openSession,
  selectPixel,
  setRank,
  setRescaleMode,
  toggleDirection,
  toggleMultiSelect,
  type SessionInfo,
} from "../src/state.js";

function session(overrides: Partial<SessionInfo> = {}): SessionInfo {
  return {
    id: "abc",
    nx: 64,
    ny: 64,
    k: 102,
    filter: "nld(lambda=3)",
    exclusions: 0,
    spectrumUrl: "/sessions/abc/spectrum",
    ...overrides,
  };
}

describe("session panels", () => {
  it("opens sessions into panels", () => {
    let s = initialState();
    s = openSession(s, session(), 0);
    s = openSession(s, session({ id: "def", k: 50 }), 1);
    expect(s.panels[0]?.id).toBe("abc");
    expect(s.panels[1]?.id).toBe("def");
    expect(maxRank(s)).toBe(50);
  });

  it("handles a session opened only in panel B", () => {
    let s = openSession(initialState(), session({ k: 33 }), 1);
    expect(s.panels[0]).toBeNull();
    expect(maxRank(s)).toBe(33);
    s = setRank(s, 999);
    expect(s.rank).toBe(33);
    s = selectPixel(s, 5, 5);
    expect(s.selected).toEqual({ x: 5, y: 5 });
  });

  it("rejects mismatched dimensions in compare mode", () => {
    let s = openSession(initialState(), session(), 0);
    expect(() => openSession(s, session({ id: "x", nx: 32, ny: 32 }), 1)).toThrow(/compare/);
    expect(canCompare(session(), session({ nx: 32 }))).toBe(false);
  });

  it("drops selections that fall outside a newly opened smaller image", () => {
    let s = openSession(initialState(), session(), 0);
    s = selectPixel(s, 60, 60);
    s = toggleMultiSelect(s, 61, 61);
    s = openSession(s, session({ id: "small", nx: 32, ny: 32 }), 0);
    expect(activeSessions(s)).toHaveLength(1);
    expect(s.selected).toBeNull();
    expect(s.multiSelect).toHaveLength(0);
  });
});

describe("pixel selection", () => {
  it("stores clicked pixels and ignores out-of-bounds clicks", () => {
    let s = openSession(initialState(), session(), 0);
    s = selectPixel(s, 10, 12);
    expect(s.selected).toEqual({ x: 10, y: 12 });
    const unchanged = selectPixel(s, 64, 0);
    expect(unchanged).toBe(s);
  });

  it("ignores clicks before any session exists", () => {
    const s = initialState();
    expect(selectPixel(s, 1, 1)).toBe(s);
  });

  it("multi-select toggles pixels in and out", () => {
    let s = openSession(initialState(), session(), 0);
    s = toggleMultiSelect(s, 1, 1);
    s = toggleMultiSelect(s, 2, 2);
    expect(s.multiSelect).toHaveLength(2);
    s = toggleMultiSelect(s, 1, 1);
    expect(s.multiSelect).toEqual([{ x: 2, y: 2 }]);
  });
});

describe("controls", () => {
  it("toggles source and drain", () => {
    let s = initialState();
    expect(s.direction).toBe("source");
    s = toggleDirection(s);
    expect(s.direction).toBe("drain");
    s = toggleDirection(s);
    expect(s.direction).toBe("source");
  });

  it("clamps the rank slider to the smallest panel rank", () => {
    let s = openSession(initialState(), session({ k: 40 }), 0);
    s = setRank(s, 9999);
    expect(s.rank).toBe(40);
    s = setRank(s, 0);
    expect(s.rank).toBe(1);
    s = setRank(s, null);
    expect(s.rank).toBeNull();
  });

  it("re-clamps the rank when a smaller-k session opens", () => {
    let s = openSession(initialState(), session({ k: 100 }), 0);
    s = setRank(s, 90);
    s = openSession(s, session({ id: "z", k: 30 }), 1);
    expect(s.rank).toBe(30);
  });

  it("switches rescale modes", () => {
    const s = setRescaleMode(initialState(), "log");
    expect(s.rescaleMode).toBe("log");
  });
});
