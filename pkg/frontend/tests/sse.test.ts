import { describe, expect, it } from "vitest";

import { consumeEventStream, SseParser } from "../src/sse";
import { SCHEMA_VERSION, type ProgressEvent } from "../src/types";

describe("SseParser", () => {
  it("parses a complete frame", () => {
    const parser = new SseParser();
    const frames = parser.push('id: 3\nevent: progress\ndata: {"x":1}\n\n');
    expect(frames).toEqual([{ id: 3, event: "progress", data: '{"x":1}' }]);
  });

  it("buffers frames split across arbitrary chunk boundaries", () => {
    const parser = new SseParser();
    const text = 'id: 0\nevent: progress\ndata: {"a":1}\n\nid: 1\nevent: progress\ndata: {"b":2}\n\n';
    const collected = [];
    for (let i = 0; i < text.length; i += 5) {
      collected.push(...parser.push(text.slice(i, i + 5)));
    }
    expect(collected.map((f) => f.id)).toEqual([0, 1]);
    expect(collected.map((f) => f.data)).toEqual(['{"a":1}', '{"b":2}']);
  });

  it("ignores comment keep-alives", () => {
    const parser = new SseParser();
    expect(parser.push(": keep-alive\n\n")).toEqual([]);
    expect(parser.push(': ping\n\nid: 2\ndata: {"c":3}\n\n')).toHaveLength(1);
  });

  it("joins multiple data lines with newlines", () => {
    const parser = new SseParser();
    const frames = parser.push("data: first\ndata: second\n\n");
    expect(frames[0]?.data).toBe("first\nsecond");
    expect(frames[0]?.event).toBe("message");
    expect(frames[0]?.id).toBeNull();
  });

  it("accepts values without the optional space after the colon", () => {
    const parser = new SseParser();
    const frames = parser.push("id:7\ndata:tight\n\n");
    expect(frames[0]).toEqual({ id: 7, event: "message", data: "tight" });
  });
});

function progressFrame(id: number, stage: string, delta: string | null): string {
  const payload = {
    schema_version: SCHEMA_VERSION,
    stage,
    leaf_id: delta === null ? null : "n00005",
    substep: delta === null ? null : 0,
    text_delta: delta,
  };
  return `id: ${id}\nevent: progress\ndata: ${JSON.stringify(payload)}\n\n`;
}

function streamResponse(text: string): Response {
  return new Response(text, {
    status: 200,
    headers: { "content-type": "text/event-stream" },
  });
}

describe("consumeEventStream", () => {
  it("resumes from the last event id after a drop, without loss", async () => {
    const requests: Array<string | null> = [];
    const fetchImpl = async (_url: string, init?: RequestInit) => {
      const lastId = new Headers(init?.headers).get("Last-Event-ID");
      requests.push(lastId);
      if (lastId === null) {
        // first connection drops after two frames
        return streamResponse(
          progressFrame(0, "Drafting", "alpha ") + progressFrame(1, "Drafting", "beta "),
        );
      }
      expect(lastId).toBe("1");
      return streamResponse(
        progressFrame(2, "Drafting", "gamma") + progressFrame(3, "Done", null),
      );
    };

    const deltas: string[] = [];
    const result = await consumeEventStream("http://stub/runs/r1/events", {
      fetchImpl,
      retryDelayMs: 0,
      onEvent: (event: ProgressEvent) => {
        if (event.text_delta !== null) {
          deltas.push(event.text_delta);
        }
      },
      isTerminal: (event) => event.stage === "Done",
    });

    expect(deltas.join("")).toBe("alpha beta gamma");
    expect(result.connections).toBe(2);
    expect(result.lastEventId).toBe(3);
    expect(requests).toEqual([null, "1"]);
  });

  it("drops frames replayed at or below the resume point", async () => {
    let call = 0;
    const fetchImpl = async () => {
      call += 1;
      if (call === 1) {
        return streamResponse(progressFrame(0, "Drafting", "one "));
      }
      // a sloppy server replays from the start despite Last-Event-ID
      return streamResponse(
        progressFrame(0, "Drafting", "one ") +
          progressFrame(1, "Drafting", "two") +
          progressFrame(2, "Done", null),
      );
    };
    const deltas: string[] = [];
    await consumeEventStream("http://stub/runs/r1/events", {
      fetchImpl,
      retryDelayMs: 0,
      onEvent: (event) => {
        if (event.text_delta !== null) {
          deltas.push(event.text_delta);
        }
      },
      isTerminal: (event) => event.stage === "Done",
    });
    expect(deltas.join("")).toBe("one two");
  });

  it("gives up after the retry budget with no progress", async () => {
    const fetchImpl = async () => streamResponse(": keep-alive\n\n");
    await expect(
      consumeEventStream("http://stub/runs/r1/events", {
        fetchImpl,
        retryDelayMs: 0,
        maxRetries: 2,
        onEvent: () => {},
        isTerminal: () => false,
      }),
    ).rejects.toThrow(/retries exhausted/);
  });
});
