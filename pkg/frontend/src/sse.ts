// Server-sent-events handling over fetch. EventSource would give resume
// for free, but it cannot attach to an injected fetch in tests, so we parse
// frames ourselves and carry Last-Event-ID across reconnects by hand.

import type { FetchLike } from "./api";
import { ProgressEventSchema, type ProgressEvent } from "./types";

export interface SseFrame {
  id: number | null;
  event: string;
  data: string;
}

// Incremental parser for the subset of the SSE grammar the server emits:
// "id:", "event:", "data:" fields, ":" comment lines (keep-alives), frames
// separated by a blank line. Multiple data lines join with "\n".
export class SseParser {
  private buffer = "";

  push(chunk: string): SseFrame[] {
    this.buffer += chunk;
    const frames: SseFrame[] = [];
    let split: number;
    while ((split = this.buffer.indexOf("\n\n")) >= 0) {
      const raw = this.buffer.slice(0, split);
      this.buffer = this.buffer.slice(split + 2);
      const frame = parseFrame(raw);
      if (frame !== null) {
        frames.push(frame);
      }
    }
    return frames;
  }
}

function parseFrame(raw: string): SseFrame | null {
  let id: number | null = null;
  let event = "message";
  const data: string[] = [];
  let sawField = false;
  for (const line of raw.split("\n")) {
    if (line === "" || line.startsWith(":")) {
      continue;
    }
    const colon = line.indexOf(":");
    const field = colon < 0 ? line : line.slice(0, colon);
    let value = colon < 0 ? "" : line.slice(colon + 1);
    if (value.startsWith(" ")) {
      value = value.slice(1);
    }
    if (field === "id") {
      const parsed = Number.parseInt(value, 10);
      if (!Number.isNaN(parsed)) {
        id = parsed;
      }
      sawField = true;
    } else if (field === "event") {
      event = value;
      sawField = true;
    } else if (field === "data") {
      data.push(value);
      sawField = true;
    }
  }
  if (!sawField) {
    return null; // comment-only frame (keep-alive)
  }
  return { id, event, data: data.join("\n") };
}

export interface EventStreamOptions {
  fetchImpl?: FetchLike;
  /** Reconnect attempts after a drop before giving up. */
  maxRetries?: number;
  /** Delay between reconnects; 0 in tests. */
  retryDelayMs?: number;
  onEvent: (event: ProgressEvent, id: number | null) => void;
  /** Stream is complete once this returns true for a received event. */
  isTerminal: (event: ProgressEvent) => boolean;
}

const DEFAULT_RETRIES = 5;
const DEFAULT_RETRY_DELAY_MS = 500;

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export interface EventStreamResult {
  /** Highest event id seen, or null if the stream never delivered one. */
  lastEventId: number | null;
  /** Number of connections made (1 means no reconnect was needed). */
  connections: number;
}

/**
 * Consume a progress-event stream to completion.
 *
 * Frames already seen are never re-delivered: after a drop the reconnect
 * asks the server to resume from the last received id, and any frame at or
 * below that id is dropped client-side as well, so callers observe each
 * event exactly once and in order.
 */
export async function consumeEventStream(
  url: string,
  options: EventStreamOptions,
): Promise<EventStreamResult> {
  const fetchImpl = options.fetchImpl ?? ((u, init) => fetch(u, init));
  const maxRetries = options.maxRetries ?? DEFAULT_RETRIES;
  const retryDelayMs = options.retryDelayMs ?? DEFAULT_RETRY_DELAY_MS;

  let lastEventId: number | null = null;
  let connections = 0;
  let retriesLeft = maxRetries;

  for (;;) {
    connections += 1;
    const headers: Record<string, string> = { accept: "text/event-stream" };
    if (lastEventId !== null) {
      headers["Last-Event-ID"] = String(lastEventId);
    }
    let sawTerminal = false;
    try {
      const response = await fetchImpl(url, { headers });
      if (!response.ok || response.body === null) {
        throw new Error(`event stream HTTP ${response.status}`);
      }
      const reader = response.body.getReader();
      const decoder = new TextDecoder();
      const parser = new SseParser();
      for (;;) {
        const { done, value } = await reader.read();
        if (done) {
          break;
        }
        for (const frame of parser.push(decoder.decode(value, { stream: true }))) {
          if (frame.id !== null && lastEventId !== null && frame.id <= lastEventId) {
            continue; // replayed frame after an over-eager resume
          }
          const event = ProgressEventSchema.parse(JSON.parse(frame.data));
          if (frame.id !== null) {
            lastEventId = frame.id;
          }
          options.onEvent(event, frame.id);
          retriesLeft = maxRetries; // progress resets the retry budget
          if (options.isTerminal(event)) {
            sawTerminal = true;
          }
        }
      }
    } catch (error) {
      if (retriesLeft <= 0) {
        throw error;
      }
    }
    if (sawTerminal) {
      return { lastEventId, connections };
    }
    // The server closed without a terminal event: treat as a drop.
    if (retriesLeft <= 0) {
      throw new Error(
        `event stream ended after id ${lastEventId} with retries exhausted`,
      );
    }
    retriesLeft -= 1;
    if (retryDelayMs > 0) {
      await sleep(retryDelayMs);
    }
  }
}
