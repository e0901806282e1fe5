/** Debounced, single-in-flight request scheduler.
 *
 * Slider drags produce a burst of value changes; the service only needs the
 * final target. `DebouncedSender` coalesces a burst into one payload, waits
 * for `delayMs` of quiet before sending, and never allows more than one
 * request in flight: changes that arrive mid-request are merged and sent in
 * a single follow-up once the response lands.
 */

export type SendFn<T> = (payload: T) => Promise<void>;
export type MergeFn<T> = (pending: T | null, incoming: T) => T;

export class DebouncedSender<T> {
  private pending: T | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private inFlightCount = 0;
  private idleWaiters: Array<() => void> = [];

  constructor(
    private readonly send: SendFn<T>,
    private readonly merge: MergeFn<T>,
    private readonly delayMs = 150,
  ) {}

  /** True while a request is on the wire. */
  get inFlight(): boolean {
    return this.inFlightCount > 0;
  }

  /** True when nothing is scheduled, pending, or in flight. */
  get idle(): boolean {
    return this.timer === null && this.pending === null && this.inFlightCount === 0;
  }

  /** Payload waiting to be sent, or null. */
  get pendingPayload(): T | null {
    return this.pending;
  }

  change(payload: T): void {
    this.pending = this.merge(this.pending, payload);
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.dispatch();
    }, this.delayMs);
  }

  /** Resolves once all pending and in-flight work has drained. */
  settle(): Promise<void> {
    if (this.idle) return Promise.resolve();
    return new Promise((resolve) => this.idleWaiters.push(resolve));
  }

  private async dispatch(): Promise<void> {
    if (this.inFlightCount > 0 || this.pending === null) return;
    const payload = this.pending;
    this.pending = null;
    this.inFlightCount += 1;
    try {
      await this.send(payload);
    } catch {
      // The send function owns error handling (rollback, inline messages);
      // a rejection must not stall the queue.
    } finally {
      this.inFlightCount -= 1;
      if (this.pending !== null && this.timer === null) {
        // A change landed while we were on the wire; its debounce window
        // already elapsed, so follow up immediately.
        void this.dispatch();
      } else if (this.idle) {
        const waiters = this.idleWaiters;
        this.idleWaiters = [];
        for (const resolve of waiters) resolve();
      }
    }
  }
}
