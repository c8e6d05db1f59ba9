/** Event-stream subscription with gapless reconnect.
 *
 * The server replays everything after `after_seq`, so resuming from the
 * last seen sequence number guarantees no gap; dropping anything at or
 * below it guarantees no duplicate. The transport is injectable so the
 * resume logic is testable without a browser EventSource. */

export interface StreamEvent {
  seq: number;
  ts_s: number;
  kind: string;
  payload: Record<string, unknown>;
}

export interface Connection {
  close(): void;
}

export type Transport = (
  url: string,
  onMessage: (data: string) => void,
  onError: () => void,
) => Connection;

export interface EventStreamOptions {
  /** Base stream path; `after_seq` is appended as a query parameter. */
  url?: string;
  transport?: Transport;
  onEvent: (event: StreamEvent) => void;
  onStatus?: (connected: boolean) => void;
  /** Reconnect delay in ms (0 in tests). */
  retryMs?: number;
}

export function streamUrl(base: string, afterSeq: number): string {
  const sep = base.includes("?") ? "&" : "?";
  return `${base}${sep}after_seq=${afterSeq}`;
}

const browserTransport: Transport = (url, onMessage, onError) => {
  const source = new EventSource(url);
  source.onmessage = (event) => onMessage(event.data);
  source.onerror = () => onError();
  return { close: () => source.close() };
};

export class EventStream {
  lastSeq = 0;
  private connection: Connection | null = null;
  private closed = false;
  private readonly url: string;
  private readonly transport: Transport;
  private readonly retryMs: number;

  constructor(private readonly options: EventStreamOptions) {
    this.url = options.url ?? "/events";
    this.transport = options.transport ?? browserTransport;
    this.retryMs = options.retryMs ?? 1000;
  }

  connect(): void {
    if (this.closed) return;
    this.connection = this.transport(
      streamUrl(this.url, this.lastSeq),
      (data) => this.handleMessage(data),
      () => this.handleError(),
    );
    this.options.onStatus?.(true);
  }

  close(): void {
    this.closed = true;
    this.connection?.close();
    this.connection = null;
  }

  private handleMessage(data: string): void {
    let event: StreamEvent;
    try {
      event = JSON.parse(data) as StreamEvent;
    } catch {
      return; // not an event frame
    }
    if (typeof event.seq !== "number" || event.seq <= this.lastSeq) {
      return; // replayed overlap after a reconnect
    }
    this.lastSeq = event.seq;
    this.options.onEvent(event);
  }

  private handleError(): void {
    this.connection?.close();
    this.connection = null;
    this.options.onStatus?.(false);
    if (this.closed) return;
    if (this.retryMs === 0) {
      this.connect();
    } else {
      setTimeout(() => this.connect(), this.retryMs);
    }
  }
}
