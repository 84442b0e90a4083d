/** 2-second polling with per-view cancellation.
 *
 * Each tick aborts the previous in-flight request; stop() cancels the
 * interval and any outstanding fetch, so navigating away never leaves a
 * request running.
 */

export const POLL_INTERVAL_MS = 2000;

export interface Poller {
  stop(): void;
  tick(): Promise<void>;
}

export function startPolling(
  run: (signal: AbortSignal) => Promise<void>,
  intervalMs: number = POLL_INTERVAL_MS
): Poller {
  let controller: AbortController | null = null;
  let stopped = false;

  const tick = async () => {
    if (stopped) return;
    controller?.abort();
    controller = new AbortController();
    try {
      await run(controller.signal);
    } catch (error) {
      if ((error as Error).name !== "AbortError") {
        // polling is best-effort; the next tick retries
      }
    }
  };

  const timer = setInterval(tick, intervalMs);
  void tick();

  return {
    stop() {
      stopped = true;
      clearInterval(timer);
      controller?.abort();
    },
    tick,
  };
}
