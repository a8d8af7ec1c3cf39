// Request sequencing: debounced triggers plus a monotone id that lets the
// view drop stale responses when a newer request has already been issued.

export class RequestSequencer {
  private issued = 0;
  private applied = 0;

  next(): number {
    this.issued += 1;
    return this.issued;
  }

  /** True when a response with this id is still the newest; marks it applied. */
  accept(id: number): boolean {
    if (id !== this.issued || id <= this.applied) {
      return false; // a newer request is in flight, or this one already landed
    }
    this.applied = id;
    return true;
  }
}

export interface TimerHooks {
  set: (fn: () => void, ms: number) => unknown;
  clear: (handle: unknown) => void;
}

const realTimers: TimerHooks = {
  set: (fn, ms) => setTimeout(fn, ms),
  clear: (handle) => clearTimeout(handle as Parameters<typeof clearTimeout>[0]),
};

/** Trailing-edge debounce; repeated calls within `ms` coalesce to one. */
export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  ms: number,
  timers: TimerHooks = realTimers,
): (...args: A) => void {
  let handle: unknown = null;
  return (...args: A) => {
    if (handle !== null) timers.clear(handle);
    handle = timers.set(() => {
      handle = null;
      fn(...args);
    }, ms);
  };
}
