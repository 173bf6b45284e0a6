// Polling loop for the live views.
//
// Every live pane refreshes on a cadence of at most 2 s. A failed poll
// flips the loop stale (the views show an indicator and keep the last
// good data); the next success clears it. Rendering is last-write-wins:
// a subscriber only sees monotonically newer snapshots.

export interface PollState<T> {
  data: T | null;
  stale: boolean;
  error: string | null;
  tick: number;
}

export class PollLoop<T> {
  cadenceMs: number;
  private fetcher: () => Promise<T>;
  private listeners: ((state: PollState<T>) => void)[] = [];
  private timer: ReturnType<typeof setInterval> | null = null;
  private seq = 0;
  private rendered = 0;
  state: PollState<T> = { data: null, stale: false, error: null, tick: 0 };

  constructor(fetcher: () => Promise<T>, cadenceMs = 1000) {
    this.fetcher = fetcher;
    this.cadenceMs = Math.min(cadenceMs, 2000);
  }

  subscribe(listener: (state: PollState<T>) => void): void {
    this.listeners.push(listener);
    if (this.state.tick > 0) listener(this.state);
  }

  start(): void {
    if (this.timer !== null) return;
    void this.refresh();
    this.timer = setInterval(() => void this.refresh(), this.cadenceMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  async refresh(): Promise<void> {
    const ticket = ++this.seq;
    let next: PollState<T>;
    try {
      const data = await this.fetcher();
      next = { data, stale: false, error: null, tick: ticket };
    } catch (err) {
      next = {
        data: this.state.data,          // keep last good snapshot
        stale: true,
        error: err instanceof Error ? err.message : String(err),
        tick: ticket,
      };
    }
    if (ticket <= this.rendered) return;   // an in-flight older reply lost
    this.rendered = ticket;
    this.state = next;
    for (const listener of this.listeners) listener(next);
  }
}
