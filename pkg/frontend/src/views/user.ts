// User console: register for a block, reconfirm an approved grant, edit
// or upload a program, run it, watch the job, download transcripts.
// Everything shown is re-fetched from the API; the console keeps only
// the viewer's token and the application id they are looking at.

import type { ApiClient } from "../api.js";
import {
  clearError,
  el,
  fmtPeriod,
  replaceChildrenOf,
  saveBytes,
  showError,
  type SaveBytes,
} from "../dom.js";
import { DEFAULT_POLL_MS, Poller } from "../poll.js";
import type { ApplicationView, JobView } from "../types.js";

export interface UserOptions {
  pollMs?: number;
  save?: SaveBytes;
}

export class UserConsole {
  private banner = el("div", { class: "banner", hidden: true });
  private registerResult = el("div", { id: "user-register-result" });
  private appCard = el("div", { id: "user-app-card" });
  private runnerCard = el("div", { id: "user-runner", hidden: true });
  private jobsBody = el("div", { id: "user-jobs" });
  private programText = el("textarea", {
    id: "program-text",
    rows: "10",
    placeholder: "RANK 0:\nSEND 1 1024\n...",
  });
  private appId: string | null = null;
  // Last fetched emits per job, so the poll re-render keeps them visible.
  private emitsCache = new Map<string, string>();
  private poller: Poller;
  private readonly save: SaveBytes;

  constructor(
    private readonly api: ApiClient,
    private readonly root: HTMLElement,
    opts: UserOptions = {},
  ) {
    this.poller = new Poller(
      () => this.refresh(),
      opts.pollMs ?? DEFAULT_POLL_MS,
    );
    this.save = opts.save ?? saveBytes;
  }

  mount(): void {
    replaceChildrenOf(
      this.root,
      this.banner,
      el("section", {}, el("h2", {}, "Register"), this.registerForm(),
        this.registerResult),
      el("section", {}, el("h2", {}, "My application"), this.lookupForm(),
        this.appCard),
      el("section", { id: "user-runner-section" }, el("h2", {}, "Run a program"),
        this.runnerCard),
      el("section", {}, el("h2", {}, "Jobs"), this.jobsBody),
    );
    this.buildRunner();
    this.poller.start();
  }

  stop(): void {
    this.poller.stop();
  }

  /** Point the console at one application and start tracking it. */
  track(appId: string): void {
    this.appId = appId;
    void this.refresh();
  }

  async refresh(): Promise<void> {
    if (!this.appId) return;
    try {
      const app = await this.api.getApplication(this.appId);
      this.renderApp(app);
      this.runnerCard.hidden = app.state !== "Active";
      if (this.api.token) {
        this.renderJobs(await this.api.listJobs());
      }
    } catch (err) {
      showError(this.banner, err);
    }
  }

  private async act(action: () => Promise<unknown>): Promise<void> {
    // Clear only on a fresh action; polls must not eat a refusal.
    clearError(this.banner);
    try {
      await action();
    } catch (err) {
      showError(this.banner, err);
    }
    await this.refresh();
  }

  // -- registration -------------------------------------------------------

  private registerForm(): HTMLElement {
    const username = el("input", { id: "reg-username", placeholder: "username" });
    const contact = el("input", { id: "reg-contact", placeholder: "contact" });
    const description = el("input", {
      id: "reg-description",
      placeholder: "what will you run?",
    });
    const count = el("input", {
      id: "reg-count",
      type: "number",
      value: "2",
      min: "1",
    });
    const submit = el("button", {
      id: "reg-submit",
      onclick: () =>
        void this.act(async () => {
          const app = await this.api.submitApplication({
            username: username.value.trim(),
            contact: contact.value.trim(),
            job_description: description.value.trim(),
            requested_node_count: Number(count.value),
          });
          replaceChildrenOf(
            this.registerResult,
            "Submitted. Your application id is ",
            el("code", { "data-role": "new-app-id" }, app.app_id),
            ". Keep it; you will need it to check the decision.",
          );
          this.track(app.app_id);
        }),
    }, "Submit application");
    return el("div", { class: "stack" },
      username, contact, description, count, submit);
  }

  private lookupForm(): HTMLElement {
    const appId = el("input", { id: "lookup-app-id", placeholder: "application id" });
    const load = el("button", {
      id: "lookup-load",
      onclick: () => {
        const value = appId.value.trim();
        if (value) this.track(value);
      },
    }, "Load");
    return el("div", { class: "stack" }, appId, load);
  }

  // -- application card ---------------------------------------------------

  private renderApp(app: ApplicationView): void {
    const pieces: Node[] = [
      el("p", {},
        el("strong", { class: "state", "data-state": app.state }, app.state),
        ` - ${app.user.username}, ${app.requested_node_count} node(s)`),
    ];
    if (app.period) {
      pieces.push(el("p", {}, `Period: ${fmtPeriod(app.period)}`));
    }
    const assigned = app.assigned_nodes ?? [];
    if (assigned.length > 0) {
      pieces.push(
        el(
          "ul",
          { id: "assigned-nodes" },
          ...assigned.map((n) => el("li", {}, `${n.name} (cap ${n.process_cap})`)),
        ),
      );
    }
    if (app.state === "Approved") {
      pieces.push(this.reconfirmPrompt(app));
    }
    if (app.decision_log.length > 0) {
      pieces.push(
        el("details", {}, el("summary", {}, "History"),
          el("ul", {},
            ...app.decision_log.map((d) =>
              el("li", {}, `${d.actor}: ${d.transition}` +
                (d.detail ? ` (${d.detail})` : ""))))),
      );
    }
    replaceChildrenOf(this.appCard, ...pieces);
  }

  private reconfirmPrompt(app: ApplicationView): HTMLElement {
    return el(
      "div",
      { id: "reconfirm-prompt", class: "callout" },
      el("p", {},
        `You have been granted ${(app.assigned_nodes ?? []).length} node(s) ` +
          `for ${fmtPeriod(app.period)}. Confirm to proceed.`),
      el("button", {
        id: "reconfirm-accept",
        onclick: () =>
          void this.act(() => this.api.reconfirm(app.app_id, true)),
      }, "Accept"),
      el("button", {
        id: "reconfirm-decline",
        onclick: () =>
          void this.act(() => this.api.reconfirm(app.app_id, false)),
      }, "Decline"),
    );
  }

  // -- program runner -----------------------------------------------------

  private buildRunner(): void {
    const file = el("input", { id: "program-file", type: "file" });
    file.addEventListener("change", () => {
      const chosen = file.files?.[0];
      if (!chosen) return;
      const reader = new FileReader();
      reader.onload = () => {
        this.programText.value = String(reader.result ?? "");
      };
      reader.readAsText(chosen);
    });
    const nProcs = el("input", {
      id: "job-n-procs",
      type: "number",
      value: "2",
      min: "1",
    });
    const run = el("button", {
      id: "job-run",
      onclick: () =>
        void this.act(() =>
          this.api.createJob({
            app_id: this.appId ?? "",
            program: this.programText.value,
            n_procs: Number(nProcs.value),
          }),
        ),
    }, "Run");
    replaceChildrenOf(this.runnerCard, this.programText, file, nProcs, run);
  }

  // -- jobs ---------------------------------------------------------------

  private renderJobs(jobs: JobView[]): void {
    if (jobs.length === 0) {
      replaceChildrenOf(this.jobsBody, el("p", {}, "No jobs yet."));
      return;
    }
    const rows = jobs.map((job) => {
      const actions = el("td", {});
      if (job.state === "Finished") {
        actions.append(
          el("button", {
            "data-action": "results",
            onclick: () =>
              void this.act(async () => {
                const results = await this.api.jobResults(job.job_id);
                const lines = results.ranks.flatMap((rank) =>
                  rank.emits.map(([, text]) => `rank ${rank.rank}: ${text}`),
                );
                this.emitsCache.set(job.job_id, lines.join("; "));
              }),
          }, "Results"),
          el("button", {
            "data-action": "download",
            onclick: () =>
              void this.act(async () => {
                const bytes = await this.api.downloadJob(job.job_id);
                this.save(`${job.job_id}.tar`, bytes);
              }),
          }, "Download"),
        );
      }
      return el(
        "tr",
        { "data-job": job.job_id, "data-state": job.state },
        el("td", {}, job.job_id),
        el("td", { class: "state" }, job.state),
        el("td", {}, job.error ?? ""),
        actions,
        el("td", { class: "emits" }, this.emitsCache.get(job.job_id) ?? ""),
      );
    });
    replaceChildrenOf(
      this.jobsBody,
      el(
        "table",
        { class: "grid" },
        el(
          "thead",
          {},
          el("tr", {}, el("th", {}, "job"), el("th", {}, "state"),
            el("th", {}, "error"), el("th", {}, "actions"),
            el("th", {}, "output")),
        ),
        el("tbody", {}, ...rows),
      ),
    );
  }
}
