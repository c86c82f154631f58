// End-to-end: a real `clusterctl serve` process, the real DOM code under
// jsdom, and no shortcuts through the API client for the steps a person
// would click. Covers the whole journey: register, approve with the node
// picker, reconfirm, run an uploaded program, download the transcript.

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { ApiClient } from "../src/api.js";
import { Shell } from "../src/main.js";

// vitest runs with the project root as cwd.
const DIST_DIR = join(process.cwd(), "dist");

const ADMIN_TOKEN = "e2e-admin-token";
const POLL_MS = 150;

let server: ChildProcess;
let baseUrl: string;
let stateDir: string;
let serverLog = "";

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = createServer();
    probe.listen(0, "127.0.0.1", () => {
      const address = probe.address();
      if (address && typeof address === "object") {
        const port = address.port;
        probe.close(() => resolve(port));
      } else {
        reject(new Error("no port"));
      }
    });
  });
}

async function waitFor(
  what: string,
  predicate: () => boolean | Promise<boolean>,
  timeoutMs = 20_000,
): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    if (await predicate()) return;
    if (Date.now() > deadline) {
      throw new Error(`timed out waiting for ${what}\nserver log:\n${serverLog}`);
    }
    await new Promise((resolve) => setTimeout(resolve, 50));
  }
}

beforeAll(async () => {
  const port = await freePort();
  baseUrl = `http://127.0.0.1:${port}`;
  stateDir = mkdtempSync(join(tmpdir(), "console-e2e-"));
  server = spawn(
    "clusterctl",
    [
      "serve",
      "--listen", `127.0.0.1:${port}`,
      "--state", join(stateDir, "state.json"),
      "--clock", "virtual",
      "--admin-token", ADMIN_TOKEN,
      "--ui-dir", DIST_DIR,
    ],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  server.stdout?.on("data", (chunk: Buffer) => (serverLog += chunk.toString()));
  server.stderr?.on("data", (chunk: Buffer) => (serverLog += chunk.toString()));
  await waitFor("server health", async () => {
    try {
      const response = await fetch(`${baseUrl}/health`);
      return response.ok;
    } catch {
      return false;
    }
  });

  // Seed a fleet the way an operator would have before opening the UI.
  const seed = new ApiClient(baseUrl);
  seed.token = ADMIN_TOKEN;
  const master = await seed.addNode({
    name: "gateway",
    internal_addr: "10.0.0.1",
    is_master: true,
    external_addr: "203.0.113.1",
  });
  await seed.setPower(master.node_id, "on");
  for (let i = 1; i <= 2; i += 1) {
    const node = await seed.addNode({
      name: `n0${i}`,
      internal_addr: `10.0.0.${i + 1}`,
    });
    await seed.setPower(node.node_id, "on");
  }
}, 60_000);

afterAll(() => {
  server?.kill("SIGTERM");
  if (stateDir) rmSync(stateDir, { recursive: true, force: true });
});

function freshRoot(): HTMLElement {
  document.body.innerHTML = '<div id="e2e-root"></div>';
  return document.getElementById("e2e-root") as HTMLElement;
}

function click(element: Element | null): void {
  if (!element) throw new Error("expected element to click");
  (element as HTMLElement).click();
}

function setValue(id: string, value: string): void {
  const input = document.getElementById(id) as HTMLInputElement | null;
  if (!input) throw new Error(`no input #${id}`);
  input.value = value;
}

const PROGRAM = [
  "RANK 0:",
  "SEND 1 2048",
  "RECV 1",
  "EMIT round trip complete",
  "RANK 1:",
  "RECV 0",
  "SEND 0 2048",
  "EMIT echo done",
  "",
].join("\n");

interface TarMember {
  name: string;
  content: string;
}

/** Minimal ustar reader: 512-byte headers, size in octal at offset 124. */
function readTar(bytes: ArrayBuffer): TarMember[] {
  const data = new Uint8Array(bytes);
  const decoder = new TextDecoder();
  const members: TarMember[] = [];
  let offset = 0;
  while (offset + 512 <= data.length) {
    const header = data.subarray(offset, offset + 512);
    if (header.every((b) => b === 0)) break;
    const name = decoder.decode(header.subarray(0, 100)).replace(/\0.*$/, "");
    const size = parseInt(
      decoder.decode(header.subarray(124, 136)).replace(/\0.*$/, "").trim(),
      8,
    );
    const body = data.subarray(offset + 512, offset + 512 + size);
    members.push({ name, content: decoder.decode(body) });
    offset += 512 + Math.ceil(size / 512) * 512;
  }
  return members;
}

describe("console end to end", () => {
  it("serves the built UI as static assets", async () => {
    const page = await fetch(`${baseUrl}/ui/index.html`);
    expect(page.status).toBe(200);
    expect(await page.text()).toContain('<div id="app">');
    const css = await fetch(`${baseUrl}/ui/styles.css`);
    expect(css.status).toBe(200);
    const js = await fetch(`${baseUrl}/ui/main.js`);
    expect(js.status).toBe(200);
  });

  it("walks an application from registration to transcript download", async () => {
    const downloads: Array<{ filename: string; bytes: ArrayBuffer }> = [];
    window.location.hash = "#/user";
    window.sessionStorage.clear();
    const shell = new Shell(freshRoot(), new ApiClient(baseUrl), {
      pollMs: POLL_MS,
      save: (filename, bytes) => downloads.push({ filename, bytes }),
    });
    await shell.mount();
    try {
      // -- user registers --------------------------------------------------
      setValue("reg-username", "eka");
      setValue("reg-contact", "eka@example.org");
      setValue("reg-description", "two node ping pong");
      setValue("reg-count", "2");
      click(document.getElementById("reg-submit"));
      await waitFor("registration confirmation", () =>
        (document.getElementById("user-register-result")?.textContent ?? "")
          .includes("application id"),
      );
      const appId = document.querySelector('[data-role="new-app-id"]')
        ?.textContent as string;
      expect(appId).toBeTruthy();
      await waitFor("submitted card", () =>
        document.querySelector('#user-app-card [data-state="Submitted"]') !==
          null,
      );

      // -- admin approves via node picker ---------------------------------
      await shell.applyToken(ADMIN_TOKEN);
      window.location.hash = "#/admin";
      await shell.route();
      await waitFor("application row", () =>
        document.querySelector(`tr[data-app="${appId}"]`) !== null,
      );
      const row = document.querySelector(`tr[data-app="${appId}"]`) as HTMLElement;
      expect(row.getAttribute("data-state")).toBe("Submitted");
      const picker = row.querySelector(
        '[data-role="node-picker"]',
      ) as HTMLSelectElement;
      const labels = [...picker.options].map((option) => option.textContent);
      expect(labels.join(" ")).toContain("n01");
      expect(labels.join(" ")).toContain("n02");
      expect(labels.join(" ")).not.toContain("gateway");
      for (const option of picker.options) option.selected = true;
      (row.querySelector('[data-role="period-start"]') as HTMLInputElement)
        .value = "0";
      (row.querySelector('[data-role="period-end"]') as HTMLInputElement)
        .value = "1000000000";
      click(row.querySelector('[data-action="approve"]'));
      await waitFor("issued token", () =>
        document.querySelector('[data-role="user-token"]') !== null,
      );
      const userToken = document.querySelector('[data-role="user-token"]')
        ?.textContent as string;
      expect(userToken).toBeTruthy();
      await waitFor("approved row", () =>
        document
          .querySelector(`tr[data-app="${appId}"]`)
          ?.getAttribute("data-state") === "Approved",
      );

      // -- user reconfirms -------------------------------------------------
      await shell.applyToken(userToken);
      window.location.hash = "#/user";
      await shell.route();
      setValue("lookup-app-id", appId);
      click(document.getElementById("lookup-load"));
      await waitFor("reconfirm prompt", () =>
        document.getElementById("reconfirm-accept") !== null,
      );
      const assigned = document.getElementById("assigned-nodes")
        ?.textContent as string;
      expect(assigned).toContain("n01");
      expect(assigned).toContain("n02");
      click(document.getElementById("reconfirm-accept"));
      await waitFor("reconfirmed card", () =>
        document.querySelector('#user-app-card [data-state="Reconfirmed"]') !==
          null,
      );

      // -- admin activates -------------------------------------------------
      await shell.applyToken(ADMIN_TOKEN);
      window.location.hash = "#/admin";
      await shell.route();
      await waitFor("activate button", () =>
        document
          .querySelector(`tr[data-app="${appId}"] [data-action="activate"]`) !==
          null,
      );
      click(
        document.querySelector(`tr[data-app="${appId}"] [data-action="activate"]`),
      );
      await waitFor("active row", () =>
        document
          .querySelector(`tr[data-app="${appId}"]`)
          ?.getAttribute("data-state") === "Active",
      );
      // The ring view reflects the fanout within a poll cycle.
      await waitFor("ring row", () =>
        document.querySelector("#admin-rings tr[data-ring]") !== null,
      );

      // -- user uploads a program file and runs it -------------------------
      await shell.applyToken(userToken);
      window.location.hash = "#/user";
      await shell.route();
      setValue("lookup-app-id", appId);
      click(document.getElementById("lookup-load"));
      await waitFor("runner visible", () => {
        const runner = document.getElementById("user-runner");
        return runner !== null && !runner.hidden;
      });
      const fileInput = document.getElementById(
        "program-file",
      ) as HTMLInputElement;
      const file = new File([PROGRAM], "pingpong.prog", { type: "text/plain" });
      Object.defineProperty(fileInput, "files", { value: [file] });
      fileInput.dispatchEvent(new Event("change"));
      await waitFor("program loaded into editor", () =>
        (document.getElementById("program-text") as HTMLTextAreaElement).value
          .includes("round trip complete"),
      );
      setValue("job-n-procs", "2");
      click(document.getElementById("job-run"));
      await waitFor("job row", () =>
        document.querySelector("#user-jobs tr[data-job]") !== null,
      );
      await waitFor(
        "job finished",
        () =>
          document
            .querySelector("#user-jobs tr[data-job]")
            ?.getAttribute("data-state") === "Finished",
        30_000,
      );
      const jobId = document
        .querySelector("#user-jobs tr[data-job]")
        ?.getAttribute("data-job") as string;

      // -- results and transcript download --------------------------------
      click(document.querySelector('[data-action="results"]'));
      await waitFor("emits rendered", () =>
        (document.querySelector("#user-jobs .emits")?.textContent ?? "")
          .includes("round trip complete"),
      );
      click(document.querySelector('[data-action="download"]'));
      await waitFor("download captured", () => downloads.length > 0);
      expect(downloads[0].filename).toBe(`${jobId}.tar`);
      const members = readTar(downloads[0].bytes);
      const names = members.map((m) => m.name);
      expect(names).toContain(`${jobId}/rank-0.txt`);
      expect(names).toContain(`${jobId}/rank-1.txt`);
      const rank0 = members.find((m) => m.name.endsWith("rank-0.txt"));
      expect(rank0?.content).toContain("round trip complete");

      // -- reload: everything above must be reconstructable from the API --
      shell.unmount();
      const reborn = new Shell(freshRoot(), new ApiClient(baseUrl), {
        pollMs: POLL_MS,
      });
      await reborn.mount();
      try {
        setValue("lookup-app-id", appId);
        click(document.getElementById("lookup-load"));
        await waitFor("card after reload", () =>
          document.querySelector('#user-app-card [data-state="Active"]') !==
            null,
        );
        await waitFor("jobs after reload", () =>
          document.querySelector(
            `#user-jobs tr[data-job="${jobId}"][data-state="Finished"]`,
          ) !== null,
        );
      } finally {
        reborn.unmount();
      }
    } finally {
      shell.unmount();
    }
  }, 120_000);

  it("surfaces server errors verbatim and keeps polling", async () => {
    window.location.hash = "#/admin";
    window.sessionStorage.clear();
    const shell = new Shell(freshRoot(), new ApiClient(baseUrl), {
      pollMs: POLL_MS,
    });
    await shell.mount();
    try {
      await shell.applyToken(ADMIN_TOKEN);
      await waitFor("fleet grid", () =>
        document.querySelector('[data-node="n01"]') !== null,
      );
      // n01 sits in an active block; powering it off must be refused and
      // the refusal shown with the server's own words.
      click(
        document.querySelector('[data-node="n01"] [data-action="toggle-power"]'),
      );
      await waitFor("error banner", () =>
        (document.querySelector(".error-banner")?.textContent ?? "").length > 0,
      );
      const banner = document.querySelector(".error-banner")
        ?.textContent as string;
      expect(banner).toContain("NodeInActiveBlock");
      // The grid keeps refreshing and the node stays on.
      expect(
        document
          .querySelector('[data-node="n01"]')
          ?.getAttribute("data-power"),
      ).toBe("on");
    } finally {
      shell.unmount();
    }
  });

  it("runs the two-block benchmark from the admin console", async () => {
    // Two more single-node blocks, approved only (benchmarks need idle
    // blocks, not live rings).
    const seed = new ApiClient(baseUrl);
    seed.token = ADMIN_TOKEN;
    const blocks: string[] = [];
    for (const [index, owner] of [
      [3, "fajar"],
      [4, "gita"],
    ] as Array<[number, string]>) {
      const node = await seed.addNode({
        name: `n0${index}`,
        internal_addr: `10.0.0.${index + 1}`,
      });
      await seed.setPower(node.node_id, "on");
      const app = await seed.submitApplication({
        username: owner,
        contact: `${owner}@example.org`,
        job_description: "bench block",
        requested_node_count: 1,
      });
      const review = await seed.review(app.app_id, {
        approve: true,
        node_ids: [node.node_id],
        period: [0, 1_000_000_000],
      });
      blocks.push(review.application.assigned_block as string);
    }

    window.location.hash = "#/admin";
    window.sessionStorage.clear();
    const shell = new Shell(freshRoot(), new ApiClient(baseUrl), {
      pollMs: POLL_MS,
    });
    await shell.mount();
    try {
      await shell.applyToken(ADMIN_TOKEN);
      await waitFor("bench form", () =>
        document.getElementById("bench-run") !== null,
      );
      setValue("bench-block-a", blocks[0]);
      setValue("bench-block-b", blocks[1]);
      setValue("bench-sizes", "1k,4k");
      setValue("bench-reps", "3");
      click(document.getElementById("bench-run"));
      await waitFor(
        "bench chart",
        () => document.querySelector("#admin-bench-result svg") !== null,
        60_000,
      );
      const chart = document.querySelector("#admin-bench-result svg") as Element;
      expect(chart.querySelectorAll("polyline.series")).toHaveLength(2);
      expect(
        document.getElementById("bench-degradation")?.textContent ?? "",
      ).toContain("%");
      expect(
        document.getElementById("bench-csv")?.textContent ?? "",
      ).toContain("scenario,size_bytes");
    } finally {
      shell.unmount();
    }
  }, 120_000);

  it("lets a user decline a granted block", async () => {
    const seed = new ApiClient(baseUrl);
    seed.token = ADMIN_TOKEN;
    const node = await seed.addNode({ name: "n05", internal_addr: "10.0.0.6" });
    await seed.setPower(node.node_id, "on");
    const app = await seed.submitApplication({
      username: "hana",
      contact: "hana@example.org",
      job_description: "will decline",
      requested_node_count: 1,
    });
    const review = await seed.review(app.app_id, {
      approve: true,
      node_ids: [node.node_id],
      period: [0, 1_000_000_000],
    });
    const token = review.user_token as string;

    window.location.hash = "#/user";
    window.sessionStorage.clear();
    const shell = new Shell(freshRoot(), new ApiClient(baseUrl), {
      pollMs: POLL_MS,
    });
    await shell.mount();
    try {
      await shell.applyToken(token);
      setValue("lookup-app-id", app.app_id);
      click(document.getElementById("lookup-load"));
      await waitFor("decline button", () =>
        document.getElementById("reconfirm-decline") !== null,
      );
      click(document.getElementById("reconfirm-decline"));
      await waitFor("rejected card", () =>
        document.querySelector('#user-app-card [data-state="Rejected"]') !==
          null,
      );
      // The grant is gone; no runner, no reconfirm prompt.
      expect(document.getElementById("reconfirm-accept")).toBeNull();
      expect((document.getElementById("user-runner") as HTMLElement).hidden)
        .toBe(true);
    } finally {
      shell.unmount();
    }
  });
});
