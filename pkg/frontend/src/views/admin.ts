// Admin console: application queue, fleet grid with power toggles, ring
// live view, benchmark launcher. Every control maps to exactly one API
// call; responses re-render the affected section and errors surface
// verbatim in the banner.

import type { ApiClient } from "../api.js";
import { bandwidthChart } from "../chart.js";
import {
  clearError,
  el,
  fmtBandwidth,
  fmtPeriod,
  replaceChildrenOf,
  showError,
} from "../dom.js";
import { DEFAULT_POLL_MS, Poller } from "../poll.js";
import type {
  ApplicationView,
  BenchReportView,
  FleetView,
  RingView,
} from "../types.js";

export interface AdminOptions {
  pollMs?: number;
}

export class AdminConsole {
  private banner = el("div", { class: "banner", hidden: true });
  private appsBody = el("div", { id: "admin-apps" });
  private fleetBody = el("div", { id: "admin-fleet" });
  private ringsBody = el("div", { id: "admin-rings" });
  private benchBody = el("div", { id: "admin-bench-result" });
  private tokenLine = el("div", { id: "admin-issued-token", hidden: true });
  private fleetCache: FleetView | null = null;
  // Trace text survives the poll re-render; it is still API data, just
  // the last response we got for that ring.
  private traceCache = new Map<string, string>();
  private poller: Poller;

  constructor(
    private readonly api: ApiClient,
    private readonly root: HTMLElement,
    opts: AdminOptions = {},
  ) {
    this.poller = new Poller(
      () => this.refresh(),
      opts.pollMs ?? DEFAULT_POLL_MS,
    );
  }

  mount(): void {
    replaceChildrenOf(
      this.root,
      this.banner,
      el("section", {}, el("h2", {}, "Applications"), this.tokenLine,
        this.appsBody),
      el("section", {}, el("h2", {}, "Fleet"), this.fleetBody),
      el("section", {}, el("h2", {}, "Rings"), this.ringsBody),
      el("section", {}, el("h2", {}, "Benchmark"), this.benchForm(),
        this.benchBody),
    );
    this.poller.start();
  }

  stop(): void {
    this.poller.stop();
  }

  async refresh(): Promise<void> {
    try {
      const [apps, fleet, rings] = await Promise.all([
        this.api.listApplications(),
        this.api.fleet(),
        this.api.rings(),
      ]);
      this.fleetCache = fleet;
      this.renderApps(apps);
      this.renderFleet(fleet);
      this.renderRings(rings);
    } catch (err) {
      showError(this.banner, err);
    }
  }

  private async act(action: () => Promise<unknown>): Promise<void> {
    // A new action clears the previous verdict; a background poll never
    // does, so refusals stay readable.
    clearError(this.banner);
    try {
      await action();
    } catch (err) {
      showError(this.banner, err);
    }
    await this.refresh();
  }

  // -- applications -------------------------------------------------------

  private renderApps(apps: ApplicationView[]): void {
    if (apps.length === 0) {
      replaceChildrenOf(this.appsBody, el("p", {}, "No applications."));
      return;
    }
    const rows = apps.map((app) => this.appRow(app));
    replaceChildrenOf(
      this.appsBody,
      el(
        "table",
        { class: "grid" },
        el(
          "thead",
          {},
          el("tr", {}, el("th", {}, "id"), el("th", {}, "user"),
            el("th", {}, "state"), el("th", {}, "nodes"),
            el("th", {}, "period"), el("th", {}, "actions")),
        ),
        el("tbody", {}, ...rows),
      ),
    );
  }

  private appRow(app: ApplicationView): HTMLElement {
    const actions = el("td", { class: "actions" });
    if (app.state === "Submitted" || app.state === "UnderReview") {
      actions.append(...this.reviewControls(app));
    } else if (app.state === "Reconfirmed") {
      actions.append(
        el("button", {
          "data-action": "activate",
          onclick: () => void this.act(() => this.api.activate(app.app_id)),
        }, "Activate"),
      );
    } else if (app.state === "Active") {
      actions.append(
        el("button", {
          "data-action": "finish",
          onclick: () => void this.act(() => this.api.finish(app.app_id)),
        }, "Finish"),
      );
    }
    return el(
      "tr",
      { "data-app": app.app_id, "data-state": app.state },
      el("td", {}, app.app_id),
      el("td", {}, app.user.username),
      el("td", { class: "state" }, app.state),
      el("td", {}, String(app.requested_node_count)),
      el("td", {}, fmtPeriod(app.period)),
      actions,
    );
  }

  private reviewControls(app: ApplicationView): HTMLElement[] {
    const picker = el("select", {
      multiple: true,
      "data-role": "node-picker",
      size: "4",
    });
    const free = (this.fleetCache?.nodes ?? []).filter(
      (n) => !n.is_master && n.block_id === null,
    );
    for (const node of free) {
      picker.append(
        el("option", { value: node.node_id }, `${node.name} (${node.power})`),
      );
    }
    const start = el("input", {
      type: "number",
      "data-role": "period-start",
      value: "0",
      title: "period start",
    });
    const end = el("input", {
      type: "number",
      "data-role": "period-end",
      value: "3600",
      title: "period end",
    });
    const approve = el("button", {
      "data-action": "approve",
      onclick: () =>
        void this.act(async () => {
          const ids = [...picker.selectedOptions].map((o) => o.value);
          const response = await this.api.review(app.app_id, {
            approve: true,
            node_ids: ids,
            period: [Number(start.value), Number(end.value)],
          });
          this.showIssuedToken(app, response.user_token);
        }),
    }, "Approve");
    const reject = el("button", {
      "data-action": "reject",
      onclick: () =>
        void this.act(() =>
          this.api.review(app.app_id, { approve: false, reason: "rejected" }),
        ),
    }, "Reject");
    return [picker, start, end, approve, reject];
  }

  private showIssuedToken(app: ApplicationView, token: string | null): void {
    if (!token) return;
    this.tokenLine.hidden = false;
    replaceChildrenOf(
      this.tokenLine,
      `Token for ${app.user.username}: `,
      el("code", { "data-role": "user-token" }, token),
    );
  }

  // -- fleet --------------------------------------------------------------

  private renderFleet(fleet: FleetView): void {
    const rows = fleet.nodes.map((node) =>
      el(
        "tr",
        { "data-node": node.name, "data-power": node.power },
        el("td", {}, node.name + (node.is_master ? " (master)" : "")),
        el("td", {}, node.spec_class),
        el("td", {}, node.internal_addr),
        el("td", { class: "power" }, node.power),
        el("td", {}, node.block_id ?? "-"),
        el(
          "td",
          {},
          el("button", {
            "data-action": "toggle-power",
            onclick: () =>
              void this.act(() =>
                this.api.setPower(
                  node.node_id,
                  node.power === "on" ? "off" : "on",
                ),
              ),
          }, node.power === "on" ? "Power off" : "Power on"),
        ),
      ),
    );
    replaceChildrenOf(
      this.fleetBody,
      el(
        "table",
        { class: "grid" },
        el(
          "thead",
          {},
          el("tr", {}, el("th", {}, "node"), el("th", {}, "class"),
            el("th", {}, "address"), el("th", {}, "power"),
            el("th", {}, "block"), el("th", {}, "actions")),
        ),
        el("tbody", {}, ...rows),
      ),
      el("p", { class: "muted" }, `fleet revision ${fleet.revision}`),
    );
  }

  // -- rings --------------------------------------------------------------

  private renderRings(rings: RingView[]): void {
    if (rings.length === 0) {
      replaceChildrenOf(this.ringsBody, el("p", {}, "No live rings."));
      return;
    }
    const rows = rings.map((ring) =>
      el(
        "tr",
        { "data-ring": ring.ring_id },
        el("td", {}, ring.ring_id),
        el("td", {}, ring.owner),
        el("td", {}, ring.block_id),
        el("td", {}, String(ring.size)),
        el(
          "td",
          {},
          el("button", {
            "data-action": "trace",
            onclick: () =>
              void this.act(async () => {
                const trace = await this.api.trace(ring.ring_id);
                this.traceCache.set(
                  ring.ring_id,
                  trace.entries
                    .map(([node, owner]) => `${node} (${owner})`)
                    .join(" -> "),
                );
              }),
          }, "Trace"),
        ),
        el("td", { class: "trace" }, this.traceCache.get(ring.ring_id) ?? ""),
      ),
    );
    replaceChildrenOf(
      this.ringsBody,
      el(
        "table",
        { class: "grid" },
        el(
          "thead",
          {},
          el("tr", {}, el("th", {}, "ring"), el("th", {}, "owner"),
            el("th", {}, "block"), el("th", {}, "daemons"),
            el("th", {}, "actions"), el("th", {}, "trace")),
        ),
        el("tbody", {}, ...rows),
      ),
    );
  }

  // -- benchmark ----------------------------------------------------------

  private benchForm(): HTMLElement {
    const blockA = el("input", { id: "bench-block-a", placeholder: "block a" });
    const blockB = el("input", { id: "bench-block-b", placeholder: "block b" });
    const sizes = el("input", { id: "bench-sizes", value: "1k,4k,32k,256k,1m" });
    const reps = el("input", { id: "bench-reps", type: "number", value: "5" });
    const mode = el("select", { id: "bench-mode" },
      el("option", { value: "comparison" }, "comparison"),
      el("option", { value: "single" }, "single"));
    const run = el("button", {
      id: "bench-run",
      onclick: () =>
        void this.act(async () => {
          const started = await this.api.benchRun({
            mode: mode.value as "single" | "comparison",
            block_a: blockA.value.trim(),
            block_b: blockB.value.trim() || undefined,
            sizes: parseSizes(sizes.value),
            reps: Number(reps.value),
          });
          replaceChildrenOf(this.benchBody,
            el("p", {}, `benchmark ${started.bench_id} running...`));
          await this.watchBench(started.bench_id);
        }),
    }, "Run benchmark");
    return el("div", { class: "bench-form" },
      blockA, blockB, sizes, reps, mode, run);
  }

  private async watchBench(benchId: string): Promise<void> {
    for (;;) {
      const status = await this.api.benchStatus(benchId);
      if (status.state === "Failed") {
        throw new Error(status.error ?? "benchmark failed");
      }
      if (status.state === "Finished") break;
      await new Promise((resolve) => setTimeout(resolve, 250));
    }
    this.renderBenchReport(await this.api.benchReport(benchId));
  }

  private renderBenchReport(report: BenchReportView): void {
    const pieces: (HTMLElement | SVGElement)[] = [
      bandwidthChart(report.curves) as SVGElement,
    ];
    if (report.degradation_per_size) {
      const sizes = report.curves[0]?.points.map((p) => p.size_bytes) ?? [];
      pieces.push(
        el(
          "ul",
          { id: "bench-degradation" },
          ...report.degradation_per_size.map((d, i) =>
            el("li", {}, `${sizes[i] ?? "?"} B: ${(d * 100).toFixed(2)}%`),
          ),
        ),
      );
    }
    for (const curve of report.curves) {
      pieces.push(
        el(
          "p",
          { class: "muted" },
          `${curve.scenario}: ` +
            curve.points
              .map((p) => fmtBandwidth(p.bandwidth_Bps))
              .join(", "),
        ),
      );
    }
    pieces.push(
      el("details", {}, el("summary", {}, "CSV"),
        el("pre", { id: "bench-csv" }, report.csv)),
    );
    replaceChildrenOf(this.benchBody, ...(pieces as Node[]));
  }
}

export function parseSizes(text: string): number[] {
  const scale: Record<string, number> = { k: 1024, m: 1024 * 1024, g: 1024 ** 3 };
  return text
    .split(",")
    .map((part) => part.trim().toLowerCase())
    .filter((part) => part.length > 0)
    .map((part) => {
      const suffix = part[part.length - 1];
      if (suffix in scale) {
        return Number(part.slice(0, -1)) * scale[suffix];
      }
      return Number(part);
    });
}
