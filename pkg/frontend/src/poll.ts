// Polling is the only live channel the API offers; every live view runs
// one of these.

export const DEFAULT_POLL_MS = 2000;

export class Poller {
  private timer: ReturnType<typeof setInterval> | null = null;
  private running = false;

  constructor(
    private readonly tick: () => Promise<void>,
    private readonly intervalMs: number = DEFAULT_POLL_MS,
  ) {}

  start(): void {
    if (this.timer !== null) return;
    void this.fire();
    this.timer = setInterval(() => void this.fire(), this.intervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  /** Run one tick immediately; overlapping fires are skipped, not queued. */
  async fire(): Promise<void> {
    if (this.running) return;
    this.running = true;
    try {
      await this.tick();
    } finally {
      this.running = false;
    }
  }
}
