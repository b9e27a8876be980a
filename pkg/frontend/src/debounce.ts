/**
 * Request pacing: a trailing debounce for the rank slider and a
 * last-write-wins token so superseded echo responses are discarded.
 */

export interface Debounced<A extends unknown[]> {
  call: (...args: A) => void;
  cancel: () => void;
}

export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  delayMs = 150,
): Debounced<A> {
  let timer: ReturnType<typeof setTimeout> | null = null;
  return {
    call: (...args: A) => {
      if (timer !== null) clearTimeout(timer);
      timer = setTimeout(() => {
        timer = null;
        fn(...args);
      }, delayMs);
    },
    cancel: () => {
      if (timer !== null) clearTimeout(timer);
      timer = null;
    },
  };
}

/** Monotone ticket counter; only the most recent ticket is current. */
export class LatestOnly {
  private ticket = 0;

  next(): number {
    return ++this.ticket;
  }

  isCurrent(ticket: number): boolean {
    return ticket === this.ticket;
  }
}
