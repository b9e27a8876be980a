import { describe, expect, it } from "vitest";

import { EchoClient } from "../src/api.js";

function jsonResponse(body: unknown, status = 200): () => Response {
  return () =>
    new Response(JSON.stringify(body), {
      status,
      headers: { "content-type": "application/json" },
    });
}

function recordingFetch(makeResponse: () => Response) {
  const calls: { url: string; init?: RequestInit }[] = [];
  const fetchFn = async (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    return makeResponse();
  };
  return { calls, fetchFn };
}

describe("EchoClient", () => {
  it("creates sessions from multipart form data", async () => {
    const { calls, fetchFn } = recordingFetch(
      jsonResponse(
        {
          id: "s1",
          nx: 64,
          ny: 64,
          k: 102,
          filter: "nld(...)",
          exclusions: 3,
          spectrum_url: "/sessions/s1/spectrum",
        },
        201,
      ),
    );
    const client = new EchoClient("http://host:8000/", fetchFn);
    const session = await client.createSession(
      new Blob([new Uint8Array([80, 53])]),
      { method: "nld" },
      { rank_fraction: 0.025 },
    );
    expect(session.id).toBe("s1");
    expect(session.k).toBe(102);
    expect(session.spectrumUrl).toBe("/sessions/s1/spectrum");
    expect(calls[0].url).toBe("http://host:8000/sessions");
    expect(calls[0].init?.method).toBe("POST");
    const form = calls[0].init?.body as FormData;
    expect(JSON.parse(form.get("filter") as string)).toEqual({ method: "nld" });
  });

  it("builds echo query parameters including the optional rank", async () => {
    const { calls, fetchFn } = recordingFetch(jsonResponse({ nx: 8, ny: 8 }));
    const client = new EchoClient("http://host:8000", fetchFn);
    await client.getEcho("s1", { x: 3, y: 4 }, "drain", 17);
    expect(calls[0].url).toBe("http://host:8000/sessions/s1/echo?x=3&y=4&direction=drain&rank=17");
    await client.getEcho("s1", { x: 0, y: 0 }, "source");
    expect(calls[1].url).toBe("http://host:8000/sessions/s1/echo?x=0&y=0&direction=source");
  });

  it("serialises cumulative pixel lists", async () => {
    const { calls, fetchFn } = recordingFetch(jsonResponse({ nx: 8, ny: 8 }));
    const client = new EchoClient("http://host:8000", fetchFn);
    await client.getCumulative("s1", [{ x: 1, y: 2 }, { x: 3, y: 4 }], "source");
    expect(decodeURIComponent(calls[0].url)).toContain("pixels=1,2;3,4");
  });

  it("raises readable errors on failure responses", async () => {
    const { fetchFn } = recordingFetch(jsonResponse({ detail: "unknown session" }, 404));
    const client = new EchoClient("http://host:8000", fetchFn);
    await expect(client.getSpectrum("nope")).rejects.toThrow(/404: unknown session/);
  });
});
