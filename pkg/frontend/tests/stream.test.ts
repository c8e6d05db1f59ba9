import { describe, expect, it } from "vitest";

import {
  EventStream,
  streamUrl,
  type Connection,
  type StreamEvent,
  type Transport,
} from "../src/stream.js";

/** Scripted server: replays everything after the requested after_seq. */
class FakeServer {
  events: StreamEvent[] = [];
  urls: string[] = [];
  private handlers: {
    onMessage: (data: string) => void;
    onError: () => void;
    afterSeq: number;
    open: boolean;
  } | null = null;

  transport: Transport = (url, onMessage, onError): Connection => {
    this.urls.push(url);
    const afterSeq = Number(new URL(url, "http://x").searchParams.get("after_seq"));
    this.handlers = { onMessage, onError, afterSeq, open: true };
    // Replay the backlog the way the SSE endpoint does.
    for (const event of this.events) {
      if (event.seq > afterSeq) onMessage(JSON.stringify(event));
    }
    return { close: () => { if (this.handlers) this.handlers.open = false; } };
  };

  emit(kind = "scrape"): void {
    const event: StreamEvent = {
      seq: this.events.length + 1,
      ts_s: 30 * (this.events.length + 1),
      kind,
      payload: {},
    };
    this.events.push(event);
    if (this.handlers?.open) this.handlers.onMessage(JSON.stringify(event));
  }

  dropConnection(): void {
    const handlers = this.handlers;
    if (handlers?.open) {
      handlers.open = false;
      handlers.onError();
    }
  }
}

function collector(): { seen: StreamEvent[]; onEvent: (e: StreamEvent) => void } {
  const seen: StreamEvent[] = [];
  return { seen, onEvent: (e) => seen.push(e) };
}

describe("streamUrl", () => {
  it("appends after_seq with the right separator", () => {
    expect(streamUrl("/events", 0)).toBe("/events?after_seq=0");
    expect(streamUrl("/events?x=1", 7)).toBe("/events?x=1&after_seq=7");
  });
});

describe("EventStream", () => {
  it("delivers live events in order", () => {
    const server = new FakeServer();
    const { seen, onEvent } = collector();
    const stream = new EventStream({
      transport: server.transport, onEvent, retryMs: 0,
    });
    stream.connect();
    server.emit();
    server.emit();
    server.emit();
    expect(seen.map((e) => e.seq)).toEqual([1, 2, 3]);
  });

  it("resumes after a disconnect with no gap and no duplicate", () => {
    const server = new FakeServer();
    const { seen, onEvent } = collector();
    const stream = new EventStream({
      transport: server.transport, onEvent, retryMs: 0,
    });
    stream.connect();
    server.emit();
    server.emit();
    server.dropConnection();          // immediate reconnect (retryMs = 0)
    server.emit();                    // missed nothing: replay starts at 3
    server.emit();
    expect(server.urls).toEqual([
      "/events?after_seq=0",
      "/events?after_seq=2",
    ]);
    const seqs = seen.map((e) => e.seq);
    expect(seqs).toEqual([1, 2, 3, 4]);
    expect(new Set(seqs).size).toBe(seqs.length); // no duplicates
  });

  it("drops replayed overlap when the server resends history", () => {
    const server = new FakeServer();
    server.emit();
    server.emit();
    const { seen, onEvent } = collector();
    const stream = new EventStream({
      transport: server.transport, onEvent, retryMs: 0,
    });
    stream.connect(); // backlog replay of 1..2
    // A server bug that resends history must not produce duplicates.
    const feed = stream as unknown as { handleMessage(d: string): void };
    for (const event of server.events) {
      feed.handleMessage(JSON.stringify(event));
    }
    expect(seen.map((e) => e.seq)).toEqual([1, 2]);
  });

  it("ignores frames that are not event JSON", () => {
    const server = new FakeServer();
    const { seen, onEvent } = collector();
    const stream = new EventStream({
      transport: server.transport, onEvent, retryMs: 0,
    });
    stream.connect();
    (stream as unknown as { handleMessage(d: string): void })
      .handleMessage("not json");
    (stream as unknown as { handleMessage(d: string): void })
      .handleMessage("{}");
    expect(seen).toEqual([]);
  });

  it("stops reconnecting after close", () => {
    const server = new FakeServer();
    const { onEvent } = collector();
    const stream = new EventStream({
      transport: server.transport, onEvent, retryMs: 0,
    });
    stream.connect();
    stream.close();
    server.dropConnection();
    expect(server.urls.length).toBe(1);
  });
});
