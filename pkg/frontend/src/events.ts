/** Incremental decoder and consumer for the gateway's step event stream.
 *
 * The gateway frames each transcript record as
 *
 *   id: {seq}
 *   event: step
 *   data: {json}
 *
 * followed by a blank line, and ends a job with an id-less "final" or
 * "failed" frame. The consumer keeps a resume cursor (last seen seq + 1) so a
 * dropped connection picks up without losing or duplicating records.
 */

import { GatewayClient, GatewayError } from "./api.js";
import type { StreamEvent } from "./types.js";
import { isStepEvent } from "./types.js";

export interface SseFrame {
  id?: string;
  event: string;
  data: string;
}

/** Feed arbitrary chunk boundaries in; complete frames come out. */
export class SseDecoder {
  private buffer = "";

  push(chunk: string): SseFrame[] {
    this.buffer += chunk;
    const frames: SseFrame[] = [];
    for (;;) {
      const split = this.buffer.indexOf("\n\n");
      if (split < 0) {
        break;
      }
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
  let id: string | undefined;
  let event = "message";
  const dataLines: string[] = [];
  for (const line of raw.split("\n")) {
    if (line.startsWith("id:")) {
      id = line.slice(3).trim();
    } else if (line.startsWith("event:")) {
      event = line.slice(6).trim();
    } else if (line.startsWith("data:")) {
      dataLines.push(line.slice(5).trim());
    }
  }
  if (dataLines.length === 0) {
    return null;
  }
  return { id, event, data: dataLines.join("\n") };
}

export function decodeEvent(frame: SseFrame): StreamEvent {
  return JSON.parse(frame.data) as StreamEvent;
}

export type ConnectionState = "connecting" | "live" | "reconnecting" | "closed";

export interface StreamOptions {
  client: GatewayClient;
  sessionId: string;
  /** Seq to start (or resume) from; defaults to 0. */
  fromSeq?: number;
  /** Stop once a terminal frame for this job arrives; any terminal if unset. */
  jobId?: string;
  onEvent: (ev: StreamEvent) => void;
  onConnectionState?: (state: ConnectionState) => void;
  /** Pause before a reconnect attempt. */
  retryDelayMs?: number;
  /** Consecutive failed attempts tolerated before giving up. */
  maxRetries?: number;
}

export interface StreamOutcome {
  /** Next from_seq; pass back in to resume later. */
  cursor: number;
  terminal: StreamEvent | null;
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

/** Consume the event stream until the watched job reaches a terminal state.
 *
 * Transport failures reconnect from the cursor; HTTP errors (bad session,
 * bad token) surface immediately as GatewayError.
 */
export async function streamEvents(options: StreamOptions): Promise<StreamOutcome> {
  const retryDelayMs = options.retryDelayMs ?? 1000;
  const maxRetries = options.maxRetries ?? 10;
  const notify = options.onConnectionState ?? (() => undefined);
  let cursor = options.fromSeq ?? 0;
  let failures = 0;

  notify("connecting");
  for (;;) {
    let sawTerminal: StreamEvent | null = null;
    try {
      const sid = encodeURIComponent(options.sessionId);
      const path = `/api/sessions/${sid}/events?from_seq=${cursor}`;
      const res = await options.client.fetchEvents(path);
      if (!res.ok) {
        const text = await res.text();
        throw new GatewayError(res.status, text);
      }
      if (res.body === null) {
        throw new Error("event stream had no body");
      }
      notify("live");
      failures = 0;
      const decoder = new SseDecoder();
      const textDecoder = new TextDecoder();
      const reader = res.body.getReader();
      for (;;) {
        const { done, value } = await reader.read();
        if (done) {
          break;
        }
        for (const frame of decoder.push(textDecoder.decode(value, { stream: true }))) {
          const ev = decodeEvent(frame);
          if (isStepEvent(ev)) {
            cursor = Math.max(cursor, ev.data.seq + 1);
          } else if (options.jobId === undefined || ev.job_id === options.jobId) {
            sawTerminal = ev;
          }
          options.onEvent(ev);
        }
      }
    } catch (err) {
      if (err instanceof GatewayError) {
        notify("closed");
        throw err;
      }
      failures += 1;
      if (failures > maxRetries) {
        notify("closed");
        throw err;
      }
      notify("reconnecting");
      await sleep(retryDelayMs);
      continue;
    }
    if (sawTerminal !== null) {
      notify("closed");
      return { cursor, terminal: sawTerminal };
    }
    // Stream ended cleanly but the job is still running: resume.
    failures += 1;
    if (failures > maxRetries) {
      notify("closed");
      return { cursor, terminal: null };
    }
    notify("reconnecting");
    await sleep(retryDelayMs);
  }
}
