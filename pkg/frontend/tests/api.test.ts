// Unit tests for the API client against a scripted fetch. The retry
// contract matters most: a POST that dies on the wire is retried once
// with the same Idempotency-Key so the server can replay, never rerun.

import { afterEach, describe, expect, it, vi } from "vitest";
import { ApiClient, ApiError, newRequestId } from "../src/api.js";

type Call = { url: string; init: RequestInit };

function scriptedFetch(
  script: Array<(call: Call) => Response | Error>,
): { fn: typeof fetch; calls: Call[] } {
  const calls: Call[] = [];
  const fn = (async (input: RequestInfo | URL, init?: RequestInit) => {
    const call = { url: String(input), init: init ?? {} };
    calls.push(call);
    const step = script.shift();
    if (!step) throw new Error("fetch called more times than scripted");
    const result = step(call);
    if (result instanceof Error) throw result;
    return result;
  }) as typeof fetch;
  return { fn, calls };
}

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("ApiClient", () => {
  it("sends bearer token and parses JSON", async () => {
    const { fn, calls } = scriptedFetch([() => json({ status: "ok" })]);
    vi.stubGlobal("fetch", fn);
    const client = new ApiClient("http://example.test");
    client.token = "secret";
    const health = await client.health();
    expect(health.status).toBe("ok");
    expect(calls[0].url).toBe("http://example.test/health");
    const headers = calls[0].init.headers as Record<string, string>;
    expect(headers["Authorization"]).toBe("Bearer secret");
  });

  it("raises ApiError with the server's code and message", async () => {
    const { fn } = scriptedFetch([
      () =>
        json(
          { error: { code: "IllegalTransition", message: "no path" } },
          409,
        ),
    ]);
    vi.stubGlobal("fetch", fn);
    const client = new ApiClient();
    const err = await client.finish("app-1").catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(409);
    expect((err as ApiError).code).toBe("IllegalTransition");
    expect((err as ApiError).message).toContain("no path");
  });

  it("parses FastAPI validation errors too", async () => {
    const { fn } = scriptedFetch([
      () => json({ detail: [{ msg: "field required" }] }, 422),
    ]);
    vi.stubGlobal("fetch", fn);
    const err = await new ApiClient()
      .submitApplication({
        username: "",
        contact: "",
        job_description: "",
        requested_node_count: 0,
      })
      .catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(422);
  });

  it("attaches an Idempotency-Key to every mutation", async () => {
    const { fn, calls } = scriptedFetch([() => json({}, 200)]);
    vi.stubGlobal("fetch", fn);
    await new ApiClient().activate("app-1");
    const headers = calls[0].init.headers as Record<string, string>;
    expect(headers["Idempotency-Key"]).toMatch(/[0-9a-f-]{8,}/);
  });

  it("retries a dropped POST once, with the same key", async () => {
    const { fn, calls } = scriptedFetch([
      () => new TypeError("fetch failed"),
      () => json({ app_id: "a1" }),
    ]);
    vi.stubGlobal("fetch", fn);
    const app = await new ApiClient().activate("a1");
    expect(app.app_id).toBe("a1");
    expect(calls).toHaveLength(2);
    const first = calls[0].init.headers as Record<string, string>;
    const second = calls[1].init.headers as Record<string, string>;
    expect(first["Idempotency-Key"]).toBe(second["Idempotency-Key"]);
  });

  it("does not retry twice", async () => {
    const { fn, calls } = scriptedFetch([
      () => new TypeError("fetch failed"),
      () => new TypeError("fetch failed again"),
    ]);
    vi.stubGlobal("fetch", fn);
    await expect(new ApiClient().activate("a1")).rejects.toThrow(
      "fetch failed again",
    );
    expect(calls).toHaveLength(2);
  });

  it("uses fresh keys for separate mutations", async () => {
    const { fn, calls } = scriptedFetch([() => json({}), () => json({})]);
    vi.stubGlobal("fetch", fn);
    const client = new ApiClient();
    await client.activate("a1");
    await client.activate("a1");
    const first = calls[0].init.headers as Record<string, string>;
    const second = calls[1].init.headers as Record<string, string>;
    expect(first["Idempotency-Key"]).not.toBe(second["Idempotency-Key"]);
  });

  it("maps the role probe through fleet access", async () => {
    const probe = async (response: Response | null): Promise<string> => {
      const client = new ApiClient();
      if (response) {
        client.token = "some-token";
        vi.stubGlobal("fetch", scriptedFetch([() => response]).fn);
      }
      return client.probeRole();
    };
    expect(await probe(json({ revision: 1, nodes: [], blocks: [] }))).toBe(
      "admin",
    );
    expect(
      await probe(
        json({ error: { code: "NotOwner", message: "admin only" } }, 403),
      ),
    ).toBe("user");
    expect(
      await probe(
        json({ error: { code: "UnknownPrincipal", message: "bad" } }, 401),
      ),
    ).toBe("anonymous");
    // No token: no probe at all.
    expect(await probe(null)).toBe("anonymous");
  });

  it("generates unique request ids", () => {
    const seen = new Set(Array.from({ length: 64 }, () => newRequestId()));
    expect(seen.size).toBe(64);
  });
});
