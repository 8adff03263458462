/** Typed HTTP client for the gateway. All reads and writes go through here;
 * nothing else in the console touches the network.
 */

import type {
  EvalRun,
  EvalRunList,
  GsnrReply,
  HealthReply,
  IngestReply,
  NetworkState,
  SessionDescription,
  SessionList,
  SubmitReply,
  Ticket,
  TicketList,
  TranscriptReply,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface GatewayOptions {
  /** e.g. "http://127.0.0.1:8790" (no trailing slash needed). */
  baseUrl: string;
  /** Bearer token; omit when the gateway runs without auth. */
  token?: string;
  /** Injectable for tests; defaults to the global fetch. */
  fetchImpl?: FetchLike;
}

export class GatewayError extends Error {
  readonly status: number;
  readonly detail: string;

  constructor(status: number, detail: string) {
    super(`gateway returned ${status}: ${detail}`);
    this.name = "GatewayError";
    this.status = status;
    this.detail = detail;
  }
}

interface CreateSessionBody {
  topology?: string;
  demands?: Record<string, unknown>[];
}

interface EvalParams {
  tasks?: string[];
  conditions?: string[];
  n_per_cell?: number;
  seed?: number;
}

export class GatewayClient {
  readonly baseUrl: string;
  private readonly token: string | undefined;
  private readonly fetchImpl: FetchLike;

  constructor(options: GatewayOptions) {
    this.baseUrl = options.baseUrl.replace(/\/+$/, "");
    this.token = options.token;
    this.fetchImpl = options.fetchImpl ?? ((input, init) => fetch(input, init));
  }

  headers(): Record<string, string> {
    const out: Record<string, string> = { accept: "application/json" };
    if (this.token !== undefined) {
      out["authorization"] = `Bearer ${this.token}`;
    }
    return out;
  }

  url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers = this.headers();
    const init: RequestInit = { method, headers };
    if (body !== undefined) {
      headers["content-type"] = "application/json";
      init.body = JSON.stringify(body);
    }
    const res = await this.fetchImpl(this.url(path), init);
    const text = await res.text();
    if (!res.ok) {
      let detail = text;
      try {
        const parsed = JSON.parse(text) as { detail?: unknown };
        if (typeof parsed.detail === "string") {
          detail = parsed.detail;
        }
      } catch {
        // keep the raw body as the detail
      }
      throw new GatewayError(res.status, detail);
    }
    return JSON.parse(text) as T;
  }

  /** Raw authenticated GET for streaming endpoints; callers read the body. */
  fetchEvents(path: string): Promise<Response> {
    return this.fetchImpl(this.url(path), { headers: this.headers() });
  }

  health(): Promise<HealthReply> {
    return this.request("GET", "/api/health");
  }

  createSession(body: CreateSessionBody = {}): Promise<SessionDescription> {
    return this.request("POST", "/api/sessions", body);
  }

  listSessions(): Promise<SessionList> {
    return this.request("GET", "/api/sessions");
  }

  describeSession(sessionId: string): Promise<SessionDescription> {
    return this.request("GET", `/api/sessions/${encodeURIComponent(sessionId)}`);
  }

  submitQuery(sessionId: string, query: string, condition?: string): Promise<SubmitReply> {
    const body: Record<string, unknown> = { query };
    if (condition !== undefined) {
      body["condition"] = condition;
    }
    return this.request("POST", `/api/sessions/${encodeURIComponent(sessionId)}/query`, body);
  }

  transcript(sessionId: string, jobId: string): Promise<TranscriptReply> {
    const sid = encodeURIComponent(sessionId);
    const jid = encodeURIComponent(jobId);
    return this.request("GET", `/api/sessions/${sid}/transcripts/${jid}`);
  }

  ingestAlarmText(sessionId: string, text: string): Promise<IngestReply> {
    return this.request("POST", `/api/sessions/${encodeURIComponent(sessionId)}/alarms`, { text });
  }

  ingestAlarmRecords(
    sessionId: string,
    records: Record<string, unknown>[],
  ): Promise<IngestReply> {
    return this.request("POST", `/api/sessions/${encodeURIComponent(sessionId)}/alarms`, {
      records,
    });
  }

  listTickets(sessionId: string): Promise<TicketList> {
    return this.request("GET", `/api/sessions/${encodeURIComponent(sessionId)}/tickets`);
  }

  approvalStatus(ticketId: string): Promise<Ticket> {
    return this.request("GET", `/api/approvals/${encodeURIComponent(ticketId)}`);
  }

  resolveApproval(ticketId: string, decision: string, note = ""): Promise<Ticket> {
    return this.request("POST", `/api/approvals/${encodeURIComponent(ticketId)}`, {
      decision,
      note,
    });
  }

  networkState(sessionId: string): Promise<NetworkState> {
    return this.request("GET", `/api/network/${encodeURIComponent(sessionId)}/state`);
  }

  gsnrReport(sessionId: string, service: string): Promise<GsnrReply> {
    const sid = encodeURIComponent(sessionId);
    const svc = encodeURIComponent(service);
    return this.request("GET", `/api/network/${sid}/gsnr?service=${svc}`);
  }

  startEval(params: EvalParams = {}): Promise<EvalRun> {
    return this.request("POST", "/api/eval/run", params);
  }

  listEvalRuns(): Promise<EvalRunList> {
    return this.request("GET", "/api/eval/runs");
  }

  evalRun(runId: string): Promise<EvalRun> {
    return this.request("GET", `/api/eval/runs/${encodeURIComponent(runId)}`);
  }
}
