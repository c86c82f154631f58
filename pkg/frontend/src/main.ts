// Application shell: token entry, role probe, and a tiny hash router.
// The admin console mounts only when the server itself says the token
// is an admin token; a user token on the admin route gets a notice and
// no controls.

import { ApiClient } from "./api.js";
import { clearError, el, replaceChildrenOf, showError } from "./dom.js";
import type { Role } from "./types.js";
import { AdminConsole, type AdminOptions } from "./views/admin.js";
import { UserConsole, type UserOptions } from "./views/user.js";

const TOKEN_KEY = "multiblock-token";

export interface ShellOptions {
  pollMs?: number;
  save?: UserOptions["save"];
  storage?: Pick<Storage, "getItem" | "setItem" | "removeItem">;
}

export class Shell {
  readonly api: ApiClient;
  private role: Role = "anonymous";
  private view: AdminConsole | UserConsole | null = null;
  private banner = el("div", { class: "banner", hidden: true });
  private roleBadge = el("span", { id: "role-badge", class: "badge" }, "anonymous");
  private outlet = el("main", { id: "outlet" });
  // Last (route, role) pair we rendered. Browsers deliver hashchange
  // asynchronously, so a redundant event must not tear down a live view.
  private lastRouted: string | null = null;
  private readonly storage: ShellOptions["storage"];
  private readonly onHashChange = (): void => void this.route();

  constructor(
    private readonly root: HTMLElement,
    api: ApiClient,
    private readonly opts: ShellOptions = {},
  ) {
    this.api = api;
    this.storage = opts.storage ?? window.sessionStorage;
  }

  async mount(): Promise<void> {
    const tokenInput = el("input", {
      id: "token-input",
      type: "password",
      placeholder: "access token",
      value: this.storage?.getItem(TOKEN_KEY) ?? "",
    });
    const useToken = el("button", {
      id: "token-apply",
      onclick: () => void this.applyToken(tokenInput.value.trim()),
    }, "Use token");
    replaceChildrenOf(
      this.root,
      el(
        "header",
        {},
        el("h1", {}, "Cluster console"),
        el("nav", {},
          el("a", { href: "#/user", id: "nav-user" }, "User"),
          el("a", { href: "#/admin", id: "nav-admin" }, "Admin")),
        el("div", { class: "session" }, tokenInput, useToken, this.roleBadge),
      ),
      this.banner,
      this.outlet,
    );
    window.addEventListener("hashchange", this.onHashChange);
    await this.applyToken(tokenInput.value.trim());
  }

  unmount(): void {
    window.removeEventListener("hashchange", this.onHashChange);
    this.view?.stop();
    this.view = null;
  }

  async applyToken(token: string): Promise<void> {
    this.api.token = token || null;
    if (token) {
      this.storage?.setItem(TOKEN_KEY, token);
    } else {
      this.storage?.removeItem(TOKEN_KEY);
    }
    this.role = await this.api.probeRole();
    replaceChildrenOf(this.roleBadge, this.role);
    await this.route();
  }

  async route(): Promise<void> {
    const hash = window.location.hash || "#/user";
    const route = hash.startsWith("#/admin") ? "admin" : "user";
    const key = `${route}|${this.role}`;
    if (key === this.lastRouted) return;
    this.lastRouted = key;
    this.view?.stop();
    this.view = null;
    clearError(this.banner);
    if (route === "admin") {
      if (this.role !== "admin") {
        replaceChildrenOf(
          this.outlet,
          el("p", { id: "admin-denied", class: "callout" },
            "The admin console needs an admin token. Paste one above."),
        );
        return;
      }
      const admin = new AdminConsole(this.api, this.outlet, {
        pollMs: this.opts.pollMs,
      } satisfies AdminOptions);
      this.view = admin;
      admin.mount();
      await admin.refresh();
      return;
    }
    const user = new UserConsole(this.api, this.outlet, {
      pollMs: this.opts.pollMs,
      save: this.opts.save,
    });
    this.view = user;
    user.mount();
  }

  /** The mounted console, for tests that need to drive it directly. */
  current(): AdminConsole | UserConsole | null {
    return this.view;
  }
}

export async function mountShell(
  root: HTMLElement,
  baseUrl = "",
  opts: ShellOptions = {},
): Promise<Shell> {
  const shell = new Shell(root, new ApiClient(baseUrl), opts);
  try {
    await shell.mount();
  } catch (err) {
    const banner = el("div", { class: "banner" });
    root.prepend(banner);
    showError(banner, err);
  }
  return shell;
}

const appRoot = document.getElementById("app");
if (appRoot) {
  void mountShell(appRoot);
}
