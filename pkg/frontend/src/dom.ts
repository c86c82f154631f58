// Small DOM helpers; no framework, the views re-render whole sections
// from API responses.

type Attrs = Record<string, string | boolean | ((event: Event) => void)>;
type Child = Node | string;

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Attrs = {},
  ...children: Child[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (typeof value === "function") {
      node.addEventListener(key.replace(/^on/, ""), value);
    } else if (typeof value === "boolean") {
      if (value) node.setAttribute(key, "");
    } else {
      node.setAttribute(key, value);
    }
  }
  node.append(...children);
  return node;
}

export function clear(node: HTMLElement): void {
  while (node.firstChild) node.removeChild(node.firstChild);
}

export function replaceChildrenOf(node: HTMLElement, ...children: Child[]): void {
  clear(node);
  node.append(...children);
}

export function fmtBytes(n: number): string {
  if (n >= 1024 * 1024 && n % (1024 * 1024) === 0) return `${n / 1024 / 1024} MiB`;
  if (n >= 1024 && n % 1024 === 0) return `${n / 1024} KiB`;
  return `${n} B`;
}

export function fmtBandwidth(bps: number): string {
  if (bps >= 1e6) return `${(bps / 1e6).toFixed(2)} MB/s`;
  if (bps >= 1e3) return `${(bps / 1e3).toFixed(2)} kB/s`;
  return `${bps.toFixed(0)} B/s`;
}

export function fmtPeriod(period: [number, number] | null): string {
  if (!period) return "-";
  return `[${period[0]}, ${period[1]})`;
}

/** Render an API error verbatim into a banner element. */
export function showError(banner: HTMLElement, err: unknown): void {
  banner.classList.add("error-banner");
  banner.textContent =
    err instanceof Error ? `${err.name}: ${err.message}` : String(err);
  banner.hidden = false;
}

export function clearError(banner: HTMLElement): void {
  banner.textContent = "";
  banner.hidden = true;
}

/** Trigger a browser download of raw bytes. Injectable for tests. */
export type SaveBytes = (filename: string, bytes: ArrayBuffer) => void;

export const saveBytes: SaveBytes = (filename, bytes) => {
  const url = URL.createObjectURL(new Blob([bytes]));
  const link = el("a", { href: url, download: filename });
  document.body.append(link);
  link.click();
  link.remove();
  URL.revokeObjectURL(url);
};
