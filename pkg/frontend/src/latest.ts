/**
 * Stale-response protection: every request takes a monotonically increasing
 * id, and a response is delivered only while its id is still the newest.
 * Superseded requests are aborted so the network layer can cancel them.
 */
export class LatestGate<T> {
  private nextId = 0;
  private liveId = -1;
  private controller: AbortController | null = null;

  /**
   * Run `task` as the newest request.  The returned promise resolves with
   * the task result, or with `null` if a newer request started meanwhile.
   */
  async run(task: (signal: AbortSignal) => Promise<T>): Promise<T | null> {
    const id = this.nextId++;
    this.liveId = id;
    this.controller?.abort();
    const controller = new AbortController();
    this.controller = controller;
    try {
      const result = await task(controller.signal);
      return this.liveId === id ? result : null;
    } catch (err) {
      if (this.liveId !== id) return null; // superseded; failure is moot
      throw err;
    }
  }

  /** Drop any in-flight request without starting a new one. */
  cancel(): void {
    this.liveId = this.nextId++;
    this.controller?.abort();
    this.controller = null;
  }

  get inFlight(): boolean {
    return this.controller !== null && !this.controller.signal.aborted;
  }
}
