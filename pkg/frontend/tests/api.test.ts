// Request layer behavior with a mocked fetch: auth header on every call,
// fire-and-forget event posts that never throw.

import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiError, GatewayClient } from "../src/api.js";
import type { WireEvent } from "../src/types.js";

const ENDPOINTS = {
  teaching: "http://t",
  autograde: "http://a",
  events: "http://e",
  feedback: "http://f",
  token: "tok-123",
};

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

const sampleEvent: WireEvent = {
  user_id: "u01x",
  lesson_id: "module-9",
  session_id: "session_u01x_module-9",
  category: "video_playback",
  timestamp: "2026-01-12T09:00:00.000Z",
  payload: { action: "play", position_s: 0 },
};

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("GatewayClient", () => {
  it("sends the bearer token on every request", async () => {
    const calls: RequestInit[] = [];
    vi.stubGlobal("fetch", (url: string, init?: RequestInit) => {
      calls.push(init ?? {});
      return Promise.resolve(jsonResponse({ response: "hi", timing: {}, format_findings: [], degraded: false }));
    });
    const api = new GatewayClient(ENDPOINTS);
    await api.runChat("session_u01x_module-9", "hello");
    const headers = calls[0].headers as Record<string, string>;
    expect(headers.Authorization).toBe("Bearer tok-123");
  });

  it("raises ApiError with the status on failures", async () => {
    vi.stubGlobal("fetch", () => Promise.resolve(jsonResponse({ detail: "nope" }, 404)));
    const api = new GatewayClient(ENDPOINTS);
    await expect(api.getSession("session_u01x_module-9")).rejects.toMatchObject({
      status: 404,
    });
    await expect(api.getSession("k")).rejects.toBeInstanceOf(ApiError);
  });

  it("postEvent resolves false when the pipeline is down", async () => {
    vi.stubGlobal("fetch", () => Promise.reject(new TypeError("connection refused")));
    const api = new GatewayClient(ENDPOINTS);
    await expect(api.postEvent(sampleEvent)).resolves.toBe(false);
  });

  it("postEvent resolves false on 4xx/5xx instead of throwing", async () => {
    vi.stubGlobal("fetch", () => Promise.resolve(jsonResponse({ detail: "bad" }, 500)));
    const api = new GatewayClient(ENDPOINTS);
    await expect(api.postEvent(sampleEvent)).resolves.toBe(false);
  });

  it("postEvent resolves true on 202", async () => {
    vi.stubGlobal("fetch", () => Promise.resolve(jsonResponse({ event_id: 1 }, 202)));
    const api = new GatewayClient(ENDPOINTS);
    await expect(api.postEvent(sampleEvent)).resolves.toBe(true);
  });
});
