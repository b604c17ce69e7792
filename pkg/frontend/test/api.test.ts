import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiError, ServiceClient } from "../src/api.js";

function mockFetch(status: number, body: unknown) {
  const fn = vi.fn(async () => ({
    ok: status < 400,
    status,
    json: async () => body,
  }));
  vi.stubGlobal("fetch", fn);
  return fn;
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("ServiceClient", () => {
  it("posts observations to the session endpoint", async () => {
    const fn = mockFetch(200, { session_id: "s", prediction: { kind: "numeric" } });
    const client = new ServiceClient("http://host");
    await client.observe("s", "x0", 1.5);
    expect(fn).toHaveBeenCalledOnce();
    const [url, init] = fn.mock.calls[0] as unknown as [string, RequestInit];
    expect(url).toBe("http://host/sessions/s/observations");
    expect(init.method).toBe("POST");
    expect(JSON.parse(init.body as string)).toEqual({ feature: "x0", value: 1.5 });
  });

  it("passes top_n through as a query parameter", async () => {
    const fn = mockFetch(200, { session_id: "s", suggestions: [] });
    await new ServiceClient().suggestions("s", 5);
    const [url] = fn.mock.calls[0] as unknown as [string];
    expect(url).toBe("/sessions/s/suggestions?top_n=5");
  });

  it("surfaces service errors verbatim", async () => {
    mockFetch(409, { code: "already_observed", message: "feature 'x0' already observed" });
    const client = new ServiceClient();
    const err = await client.observe("s", "x0", 1).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.code).toBe("already_observed");
    expect(err.message).toContain("already observed");
    expect(err.status).toBe(409);
  });
});
