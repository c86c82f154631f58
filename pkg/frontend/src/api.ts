// Thin typed client over the control API. Mutations carry a fresh
// Idempotency-Key and retry once with the same key on network failure, so
// a dropped response never double-applies.

import type {
  ApplicationView,
  BenchReportView,
  BenchStatusView,
  FleetView,
  JobResults,
  JobView,
  NodeView,
  ReviewResponse,
  RingView,
  Role,
  TokenResponse,
  TraceView,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    // Banners render `${name}: ${message}`; the server's code is the
    // name a user should see.
    this.name = code;
  }
}

export function newRequestId(): string {
  if (typeof crypto !== "undefined" && "randomUUID" in crypto) {
    return crypto.randomUUID();
  }
  return `req-${Date.now()}-${Math.random().toString(36).slice(2)}`;
}

export class ApiClient {
  token: string | null = null;

  constructor(readonly baseUrl: string = "") {}

  private headers(idemKey?: string): Record<string, string> {
    const h: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) h["Authorization"] = `Bearer ${this.token}`;
    if (idemKey) h["Idempotency-Key"] = idemKey;
    return h;
  }

  private async request(
    method: "GET" | "POST",
    path: string,
    body?: unknown,
  ): Promise<Response> {
    const idemKey = method === "POST" ? newRequestId() : undefined;
    const init: RequestInit = {
      method,
      headers: this.headers(idemKey),
      body: body === undefined ? undefined : JSON.stringify(body),
    };
    try {
      return await fetch(this.baseUrl + path, init);
    } catch {
      // One retry with the same key; the server replays a cached response
      // if the first attempt actually landed.
      return await fetch(this.baseUrl + path, init);
    }
  }

  private async call<T>(
    method: "GET" | "POST",
    path: string,
    body?: unknown,
  ): Promise<T> {
    const response = await this.request(method, path, body);
    if (!response.ok) {
      let code = `HTTP ${response.status}`;
      let message = response.statusText;
      try {
        const payload = await response.json();
        if (payload?.error) {
          code = payload.error.code ?? code;
          message = payload.error.message ?? message;
        } else if (payload?.detail) {
          message = JSON.stringify(payload.detail);
        }
      } catch {
        // keep the status line
      }
      throw new ApiError(response.status, code, message);
    }
    return (await response.json()) as T;
  }

  // -- session ------------------------------------------------------------

  /** Classify the current token by probing an admin-only endpoint. */
  async probeRole(): Promise<Role> {
    if (!this.token) return "anonymous";
    const response = await this.request("GET", "/fleet");
    if (response.ok) return "admin";
    if (response.status === 403) return "user";
    return "anonymous";
  }

  // -- public -------------------------------------------------------------

  health(): Promise<{ status: string; now: number }> {
    return this.call("GET", "/health");
  }

  submitApplication(body: {
    username: string;
    contact: string;
    job_description: string;
    requested_node_count: number;
  }): Promise<ApplicationView> {
    return this.call("POST", "/applications", body);
  }

  getApplication(appId: string): Promise<ApplicationView> {
    return this.call("GET", `/applications/${appId}`);
  }

  // -- authenticated ------------------------------------------------------

  listApplications(): Promise<ApplicationView[]> {
    return this.call("GET", "/applications");
  }

  review(
    appId: string,
    body: {
      approve: boolean;
      node_ids?: string[];
      period?: [number, number];
      reason?: string;
      expected_version?: number;
    },
  ): Promise<ReviewResponse> {
    return this.call("POST", `/applications/${appId}/review`, body);
  }

  reconfirm(appId: string, accept: boolean): Promise<ApplicationView> {
    return this.call("POST", `/applications/${appId}/reconfirm`, { accept });
  }

  activate(appId: string): Promise<ApplicationView> {
    return this.call("POST", `/applications/${appId}/activate`, {});
  }

  finish(appId: string): Promise<ApplicationView> {
    return this.call("POST", `/applications/${appId}/finish`, {});
  }

  // -- jobs ---------------------------------------------------------------

  createJob(body: {
    app_id: string;
    program: string;
    n_procs: number;
    placement?: string[];
    program_name?: string;
  }): Promise<JobView> {
    return this.call("POST", "/jobs", body);
  }

  listJobs(): Promise<JobView[]> {
    return this.call("GET", "/jobs");
  }

  getJob(jobId: string): Promise<JobView> {
    return this.call("GET", `/jobs/${jobId}`);
  }

  jobResults(jobId: string): Promise<JobResults> {
    return this.call("GET", `/jobs/${jobId}/results`);
  }

  async downloadJob(jobId: string): Promise<ArrayBuffer> {
    const response = await this.request("GET", `/jobs/${jobId}/download`);
    if (!response.ok) {
      throw new ApiError(
        response.status,
        `HTTP ${response.status}`,
        "transcript download failed",
      );
    }
    return await response.arrayBuffer();
  }

  // -- fleet (admin) ------------------------------------------------------

  fleet(): Promise<FleetView> {
    return this.call("GET", "/fleet");
  }

  addNode(body: {
    name: string;
    internal_addr: string;
    spec_class?: string;
    is_master?: boolean;
    external_addr?: string;
  }): Promise<NodeView> {
    return this.call("POST", "/nodes", body);
  }

  setPower(nodeId: string, power: "on" | "off"): Promise<NodeView> {
    return this.call("POST", `/nodes/${nodeId}/power`, { power });
  }

  rings(): Promise<RingView[]> {
    return this.call("GET", "/rings");
  }

  trace(ringId: string): Promise<TraceView> {
    return this.call("GET", `/rings/${ringId}/trace`);
  }

  // -- benchmarks (admin) -------------------------------------------------

  benchRun(body: {
    mode: "single" | "comparison";
    block_a: string;
    block_b?: string;
    sizes?: number[];
    reps?: number;
  }): Promise<BenchStatusView> {
    return this.call("POST", "/bench/run", body);
  }

  benchStatus(benchId: string): Promise<BenchStatusView> {
    return this.call("GET", `/bench/${benchId}`);
  }

  benchReport(benchId: string): Promise<BenchReportView> {
    return this.call("GET", `/bench/${benchId}/report`);
  }

  // -- administration (admin) ---------------------------------------------

  issueToken(username: string, role: "admin" | "user"): Promise<TokenResponse> {
    return this.call("POST", "/tokens", { username, role });
  }
}
