/** End-to-end console test against an in-process mock gateway.
 *
 * The mock speaks the gateway's wire format over real HTTP and records every
 * byte it serves. The assertions close the loop the console promises: what
 * the renderers put on screen is exactly what crossed the wire, digit for
 * digit, with no client-side recomputation.
 */

import { createServer, type IncomingMessage, type Server, type ServerResponse } from "node:http";
import type { AddressInfo } from "node:net";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { GatewayClient, GatewayError } from "../src/api.js";
import { SseDecoder, streamEvents, type ConnectionState } from "../src/events.js";
import {
  applyConnectionState,
  applyResolution,
  applyResolutionError,
  applyStreamEvent,
  loadTickets,
  markResolving,
  newInboxView,
  newSessionView,
  type InboxView,
  type SessionView,
} from "../src/state.js";
import {
  renderAlarmTable,
  renderAnswer,
  renderApprovalInbox,
  renderEvalMatrix,
  renderGsnrChart,
  renderNetworkSummary,
  renderOptimizationTrace,
  renderTimeline,
} from "../src/render.js";
import type {
  EvalRun,
  GsnrReply,
  MatrixCell,
  OptimizationTrace,
  StepRecord,
  StreamEvent,
  Ticket,
} from "../src/types.js";

const TOKEN = "console-test-token";
const SESSION_ID = "s-e2e-1";
const JOB_ID = "j-e2e-1";
const TICKET_ID = "t-e2e-1";

// ---------------------------------------------------------------------------
// Canned gateway data (structurally identical to live responses)
// ---------------------------------------------------------------------------

const RANKING = [
  {
    event: {
      alarm_type: "LOS",
      source_ne: "NE-1",
      key: "LOS@NE-1",
      count: 6,
      max_severity: "CRITICAL",
      first_ts: 1000,
      last_ts: 3500,
      representative_description: "Loss of signal detected on line port",
    },
    severity_term: 1.0,
    frequency_term: 0.5454545454545454,
    correlation_term: 0.6333333333333333,
    score: 0.8536363636363636,
  },
  {
    event: {
      alarm_type: "LOF",
      source_ne: "NE-1",
      key: "LOF@NE-1",
      count: 3,
      max_severity: "MAJOR",
      first_ts: 2000,
      last_ts: 3400,
      representative_description: "Loss of frame alignment on client port",
    },
    severity_term: 0.75,
    frequency_term: 0.2727272727272727,
    correlation_term: 0.6333333333333333,
    score: 0.5848181818181818,
  },
  {
    event: {
      alarm_type: "BER_DEG",
      source_ne: "NE-2",
      key: "BER_DEG@NE-2",
      count: 2,
      max_severity: "MINOR",
      first_ts: 3000,
      last_ts: 3400,
      representative_description: "Pre-FEC bit error rate above degrade threshold",
    },
    severity_term: 0.5,
    frequency_term: 0.18181818181818182,
    correlation_term: 0.3333333333333333,
    score: 0.3712121212121212,
  },
];

const SUGGESTION = {
  event_key: "LOS@NE-1",
  cause: "Fiber cut or disconnected patch cord upstream of the receiver.",
  actions: ["Dispatch to inspect the fiber span.", "Check transponder output power."],
  source_refs: ["los#0", "los#1"],
};

function stepRows(): StepRecord[] {
  const rows: Array<[string, Record<string, unknown>]> = [
    [
      "INTENT_ANALYSIS",
      {
        query: "Analyze the current alarms and tell me what to handle first.",
        task_kind: "alarm_analysis",
        confidence: 0.92,
        backend_reply: "alarm_analysis",
      },
    ],
    [
      "TASK_DECOMPOSITION",
      {
        backend_note: "",
        plan: {
          pattern: "CASCADED",
          subtasks: [
            { id: "st-0", kind: "compress", depends_on: [] },
            { id: "st-1", kind: "prioritize", depends_on: ["st-0"] },
            { id: "st-2", kind: "suggest", depends_on: ["st-1"] },
          ],
        },
      },
    ],
    [
      "RESOURCE_SELECTION",
      { subtask: "compress", tools: ["alarm_compress"], chunks: [], backend_confirmation: "" },
    ],
    [
      "TOOL_CALL",
      { tool: "alarm_compress", args: { window_ms: 180000 }, result_digest: "d0a1" },
    ],
    [
      "PROBLEM_SOLVING",
      {
        subtask: "compress",
        tools: ["alarm_compress"],
        answer_text: "Recorded the structured results for this stage.",
        payload: {
          batch: { window_start: 1000, window_end: 181000, size: 11 },
          events: RANKING.map((r) => r.event),
        },
      },
    ],
    [
      "RESOURCE_SELECTION",
      {
        subtask: "prioritize",
        tools: ["alarm_correlate", "alarm_priority"],
        chunks: [],
        backend_confirmation: "",
      },
    ],
    ["TOOL_CALL", { tool: "alarm_correlate", args: {}, result_digest: "d0a2" }],
    ["TOOL_CALL", { tool: "alarm_priority", args: {}, result_digest: "d0a3" }],
    [
      "PROBLEM_SOLVING",
      {
        subtask: "prioritize",
        tools: ["alarm_correlate", "alarm_priority"],
        answer_text: "Recorded the structured results for this stage.",
        payload: {
          matrix: [
            [1.0, 0.9, 0.0],
            [0.9, 1.0, 0.0],
            [0.0, 0.0, 1.0],
          ],
          ranking: RANKING,
        },
      },
    ],
    [
      "RESOURCE_SELECTION",
      { subtask: "suggest", tools: ["alarm_suggest"], chunks: ["los#0"], backend_confirmation: "" },
    ],
    ["TOOL_CALL", { tool: "alarm_suggest", args: { k: 3 }, result_digest: "d0a4" }],
    [
      "PROBLEM_SOLVING",
      {
        subtask: "suggest",
        tools: ["alarm_suggest"],
        answer_text: "Recorded the structured results for this stage.",
        payload: {
          hits: [
            { ref: "los#0", score: 0.9315789473684211 },
            { ref: "los#1", score: 0.4027777777777778 },
          ],
          suggestion: SUGGESTION,
        },
      },
    ],
    [
      "FINAL_ANSWER",
      {
        status: "COMPLETED",
        answer: {
          text: "Handle LOS@NE-1 first. Cause: fiber cut upstream. Sources: los#0, los#1.",
          sections: [
            {
              kind: "compress",
              answer_text: "Recorded the structured results for this stage.",
              payload: { batch: { window_start: 1000, window_end: 181000, size: 11 } },
            },
            {
              kind: "prioritize",
              answer_text: "Recorded the structured results for this stage.",
              payload: { ranking: RANKING },
            },
            {
              kind: "suggest",
              answer_text: "Recorded the structured results for this stage.",
              payload: { suggestion: SUGGESTION },
            },
          ],
          transcript_ref: JOB_ID,
        },
      },
    ],
  ];
  return rows.map(([step, payload], seq) => ({
    job_id: JOB_ID,
    seq,
    ts: 1700000000000 + seq,
    step,
    payload,
  }));
}

const STEPS = stepRows();

function gsnrChannels(scale: number) {
  return [0, 1].map((index) => ({
    channel_index: index,
    center_thz: 193.1 + index * 0.0125,
    power_w: 0.001,
    ase_w: 2.507423611389e-7 * scale,
    nli_w: 1.1959276423995e-7 * scale,
    gsnr_db: 24.331928716904347 - scale * 1.0000454321987 - index * 0.011326543219876,
    margin_db: 15.331928716904347 - scale * 1.0000454321987 - index * 0.011326543219876,
    modulation: "QPSK",
  }));
}

const GSNR_REPLY: GsnrReply = {
  session_id: SESSION_ID,
  service: "d0",
  blocked: false,
  allocation: {
    demand_id: "d0",
    blocked: false,
    route_nodes: ["N01", "N05", "N09"],
    link_ids: ["L01", "L05"],
    channel: 0,
  },
  report: {
    channels: gsnrChannels(2),
    links: [
      { link_id: "L01", channels: gsnrChannels(1) },
      { link_id: "L05", channels: gsnrChannels(2) },
    ],
  },
};

const TRACE: OptimizationTrace = {
  steps: [
    {
      step_index: 0,
      demand_id: "d0",
      channel_index: 0,
      delta_db: 0.5,
      power_dbm: -1.5,
      objective_db: 1.2503219876543211,
    },
    {
      step_index: 1,
      demand_id: "d1",
      channel_index: 1,
      delta_db: 0.5,
      power_dbm: -1.5,
      objective_db: 2.0012345678901234,
    },
    {
      step_index: 2,
      demand_id: "d0",
      channel_index: 0,
      delta_db: 0.5,
      power_dbm: -1.0,
      objective_db: 2.5098765432109876,
    },
    {
      step_index: 3,
      demand_id: "d1",
      channel_index: 1,
      delta_db: 0.5,
      power_dbm: -1.0,
      objective_db: 2.982104938271605,
    },
  ],
  initial_objective_db: 1.0406132503219876,
  final_objective_db: 2.982104938271605,
  final_launch_dbm: { d0: -1.0, d1: -1.0 },
  rounds: 2,
  converged: true,
};

const EVAL_TASKS = [
  "alarm_analysis",
  "config_generation",
  "performance_query",
  "power_optimization",
  "service_provisioning",
  "troubleshooting",
];
const EVAL_CONDITIONS = ["BASE", "BASE_PLUS_RAG", "ADVANCED", "ADVANCED_PLUS_RAG", "FULL"];

const EVAL_CELLS: MatrixCell[] = EVAL_TASKS.flatMap((task, ti) =>
  EVAL_CONDITIONS.map((condition, ci) => ({
    task,
    condition,
    n: 20,
    mean_accuracy: Number(((50 + ti * 7 + ci * 3) / 100).toFixed(6)),
    mean_similarity: Number(((40 + ti * 5 + ci * 4) / 100).toFixed(6)),
  })),
);

const EVAL_RUN: EvalRun = {
  run_id: "run-1",
  status: "DONE",
  params: { tasks: EVAL_TASKS, conditions: EVAL_CONDITIONS, n_per_cell: 20, seed: 11 },
  error: "",
  report: {
    cells: EVAL_CELLS,
    rows: [],
    seed: 11,
    config: { n_per_cell: 20 },
    config_digest: "cfg-1",
  },
};

// ---------------------------------------------------------------------------
// Mock gateway with traffic recording
// ---------------------------------------------------------------------------

interface ServedEntry {
  method: string;
  path: string;
  body: unknown;
}

interface MockGateway {
  server: Server;
  baseUrl: string;
  served: ServedEntry[];
  eventRequests: string[];
  approvalPosts: unknown[];
  ticketStatus: () => string;
}

function readBody(req: IncomingMessage): Promise<string> {
  return new Promise((resolve, reject) => {
    const chunks: Buffer[] = [];
    req.on("data", (c: Buffer) => chunks.push(c));
    req.on("end", () => resolve(Buffer.concat(chunks).toString("utf-8")));
    req.on("error", reject);
  });
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

function startMockGateway(): Promise<MockGateway> {
  const served: ServedEntry[] = [];
  const eventRequests: string[] = [];
  const approvalPosts: unknown[] = [];
  const ticket: Ticket = {
    ticket_id: TICKET_ID,
    session_id: SESSION_ID,
    job_id: "j-opt-1",
    action: "optimize_launch_power",
    description: "Apply optimized launch powers to 2 demands.",
    proposed: { demand_count: 2, bounds_dbm: [-4.0, 4.0], step_db: 0.5 },
    status: "PENDING",
    note: "",
  };

  const sessionBody = () => ({
    session_id: SESSION_ID,
    topology: "conus_synthetic",
    node_count: 77,
    link_count: 99,
    demand_count: 2,
    alarm_count: 11,
    state_digest: "digest-1",
    busy: false,
    next_seq: 0,
    jobs: [],
  });

  const networkBody = () => ({
    session_id: SESSION_ID,
    topology: "conus_synthetic",
    node_count: 77,
    link_count: 99,
    demands: [
      { id: "d0", src: "N01", dst: "N09", launch_power_dbm: -2.0, modulation: "QPSK" },
      { id: "d1", src: "N03", dst: "N11", launch_power_dbm: -2.0, modulation: "QPSK" },
    ],
    alarm_count: 11,
    state_digest: "digest-1",
    busy: false,
    allocation: { blocking_probability: 0.0, utilization: 0.023569023569023569 },
  });

  const json = (
    req: IncomingMessage,
    res: ServerResponse,
    status: number,
    body: unknown,
  ): void => {
    served.push({ method: req.method ?? "", path: req.url ?? "", body });
    res.writeHead(status, { "content-type": "application/json" });
    res.end(JSON.stringify(body));
  };

  const sseFrame = (row: StepRecord): string => {
    const event = { data: row, event: "step", job_id: row.job_id };
    served.push({ method: "GET", path: "#sse-frame", body: event });
    return `id: ${row.seq}\nevent: step\ndata: ${JSON.stringify(event)}\n\n`;
  };

  const terminalFrame = (): string => {
    const event = { error: "", event: "final", job_id: JOB_ID, status: "COMPLETED" };
    served.push({ method: "GET", path: "#sse-terminal", body: event });
    return `event: final\ndata: ${JSON.stringify(event)}\n\n`;
  };

  const server = createServer((req, res) => {
    void (async () => {
      const url = new URL(req.url ?? "/", "http://mock");
      const path = url.pathname;
      const method = req.method ?? "GET";

      if (path !== "/api/health") {
        if (req.headers.authorization !== `Bearer ${TOKEN}`) {
          json(req, res, 401, { detail: "missing or invalid bearer token" });
          return;
        }
      }

      if (method === "GET" && path === "/api/health") {
        json(req, res, 200, { status: "ok" });
      } else if (method === "POST" && path === "/api/sessions") {
        await readBody(req);
        json(req, res, 201, sessionBody());
      } else if (method === "GET" && path === "/api/sessions") {
        json(req, res, 200, { sessions: [sessionBody()] });
      } else if (method === "POST" && path === `/api/sessions/${SESSION_ID}/query`) {
        await readBody(req);
        json(req, res, 202, { job_id: JOB_ID, session_id: SESSION_ID, status: "RUNNING" });
      } else if (method === "GET" && path === `/api/sessions/${SESSION_ID}/events`) {
        const fromSeq = Number(url.searchParams.get("from_seq") ?? "0");
        eventRequests.push(url.search);
        res.writeHead(200, {
          "content-type": "text/event-stream",
          "cache-control": "no-cache",
          connection: "keep-alive",
        });
        const isFirst = eventRequests.length === 1;
        const rows = STEPS.filter((r) => r.seq >= fromSeq);
        if (isFirst) {
          // Serve six frames, split one mid-frame, then cut the socket to
          // force the client onto its resume path.
          for (const row of rows.slice(0, 5)) {
            res.write(sseFrame(row));
            await sleep(2);
          }
          const sixth = rows[5];
          if (sixth !== undefined) {
            const frame = sseFrame(sixth);
            res.write(frame.slice(0, 40));
            await sleep(5);
            res.write(frame.slice(40));
          }
          await sleep(10);
          res.destroy();
        } else {
          for (const row of rows) {
            res.write(sseFrame(row));
            await sleep(2);
          }
          res.write(terminalFrame());
          res.end();
        }
      } else if (
        method === "GET" &&
        path === `/api/sessions/${SESSION_ID}/transcripts/${JOB_ID}`
      ) {
        json(req, res, 200, {
          session_id: SESSION_ID,
          job_id: JOB_ID,
          status: "COMPLETED",
          query: "Analyze the current alarms and tell me what to handle first.",
          error: "",
          records: STEPS,
        });
      } else if (method === "GET" && path === `/api/sessions/${SESSION_ID}/tickets`) {
        json(req, res, 200, { tickets: [{ ...ticket }] });
      } else if (path === `/api/approvals/${TICKET_ID}`) {
        if (method === "GET") {
          json(req, res, 200, { ...ticket });
        } else {
          const body = JSON.parse(await readBody(req)) as { decision?: string; note?: string };
          approvalPosts.push(body);
          if (ticket.status !== "PENDING") {
            json(req, res, 409, { detail: `ticket ${TICKET_ID} already resolved` });
            return;
          }
          ticket.status = body.decision ?? "REJECTED";
          ticket.note = body.note ?? "";
          json(req, res, 200, { ...ticket });
        }
      } else if (method === "GET" && path === `/api/network/${SESSION_ID}/state`) {
        json(req, res, 200, networkBody());
      } else if (method === "GET" && path === `/api/network/${SESSION_ID}/gsnr`) {
        const service = url.searchParams.get("service");
        if (service === "d0") {
          json(req, res, 200, GSNR_REPLY);
        } else if (service === "d9") {
          json(req, res, 200, {
            session_id: SESSION_ID,
            service: "d9",
            blocked: true,
          });
        } else {
          json(req, res, 404, { detail: `unknown service ${String(service)}` });
        }
      } else if (method === "POST" && path === "/api/eval/run") {
        await readBody(req);
        json(req, res, 202, { ...EVAL_RUN, status: "RUNNING", report: undefined });
      } else if (method === "GET" && path === `/api/eval/runs/${EVAL_RUN.run_id}`) {
        json(req, res, 200, EVAL_RUN);
      } else {
        json(req, res, 404, { detail: `no route for ${method} ${path}` });
      }
    })().catch(() => {
      if (!res.writableEnded) {
        res.destroy();
      }
    });
  });

  return new Promise((resolve) => {
    server.listen(0, "127.0.0.1", () => {
      const { port } = server.address() as AddressInfo;
      resolve({
        server,
        baseUrl: `http://127.0.0.1:${port}`,
        served,
        eventRequests,
        approvalPosts,
        ticketStatus: () => ticket.status,
      });
    });
  });
}

// ---------------------------------------------------------------------------
// Attribute extraction from rendered HTML (string level, no DOM)
// ---------------------------------------------------------------------------

function extractAll(html: string, re: RegExp): RegExpMatchArray[] {
  return [...html.matchAll(re)];
}

// ---------------------------------------------------------------------------

let gw: MockGateway;
let client: GatewayClient;

beforeAll(async () => {
  gw = await startMockGateway();
  client = new GatewayClient({ baseUrl: gw.baseUrl, token: TOKEN });
});

afterAll(() => {
  gw.server.close();
});

describe("gateway client", () => {
  it("reaches health without a token", async () => {
    const bare = new GatewayClient({ baseUrl: gw.baseUrl });
    expect(await bare.health()).toEqual({ status: "ok" });
  });

  it("is rejected elsewhere without a token", async () => {
    const bare = new GatewayClient({ baseUrl: gw.baseUrl });
    await expect(bare.listSessions()).rejects.toMatchObject({
      name: "GatewayError",
      status: 401,
      detail: "missing or invalid bearer token",
    });
  });

  it("creates a session with the bearer token", async () => {
    const description = await client.createSession({});
    expect(description.session_id).toBe(SESSION_ID);
    expect(description.node_count).toBe(77);
  });
});

describe("console end to end", () => {
  let view: SessionView;
  const connectionStates: ConnectionState[] = [];

  it("submits a query and streams the full five-step timeline across a dropped connection", async () => {
    const submitted = await client.submitQuery(
      SESSION_ID,
      "Analyze the current alarms and tell me what to handle first.",
    );
    expect(submitted).toEqual({ job_id: JOB_ID, session_id: SESSION_ID, status: "RUNNING" });

    view = newSessionView(SESSION_ID);
    const outcome = await streamEvents({
      client,
      sessionId: SESSION_ID,
      fromSeq: 0,
      jobId: JOB_ID,
      retryDelayMs: 25,
      maxRetries: 5,
      onEvent: (ev: StreamEvent) => {
        view = applyStreamEvent(view, ev);
      },
      onConnectionState: (state) => {
        connectionStates.push(state);
        view = applyConnectionState(view, state);
      },
    });

    expect(outcome.terminal).toEqual({
      error: "",
      event: "final",
      job_id: JOB_ID,
      status: "COMPLETED",
    });
    expect(outcome.cursor).toBe(13);
    expect(view.jobs[JOB_ID]).toEqual({ status: "COMPLETED", error: "" });

    // All 13 records arrived exactly once, in seq order, despite the drop.
    expect(view.steps.map((s) => s.seq)).toEqual([...Array(13).keys()]);
    expect(gw.eventRequests.length).toBe(2);
    expect(gw.eventRequests[0]).toBe("?from_seq=0");
    expect(gw.eventRequests[1]).toBe("?from_seq=6");
    expect(connectionStates).toContain("reconnecting");
    expect(connectionStates[connectionStates.length - 1]).toBe("closed");

    // The five pipeline stages all appear on the timeline.
    const kinds = new Set(view.steps.map((s) => s.step));
    for (const kind of [
      "INTENT_ANALYSIS",
      "TASK_DECOMPOSITION",
      "RESOURCE_SELECTION",
      "PROBLEM_SOLVING",
      "FINAL_ANSWER",
    ]) {
      expect(kinds.has(kind)).toBe(true);
    }
  });

  it("renders the timeline in seq order with a visible connection badge", () => {
    const html = renderTimeline(view);
    const seqs = extractAll(html, /data-seq="(\d+)"/g).map((m) => Number(m[1]));
    expect(seqs).toEqual([...Array(13).keys()]);
    expect(html).toContain("connection-closed");
    expect(html).toContain("[000] INTENT_ANALYSIS");
    expect(html).toContain("[012] FINAL_ANSWER");
  });

  it("matches the timeline to the stored transcript record for record", async () => {
    const transcript = await client.transcript(SESSION_ID, JOB_ID);
    expect(transcript.status).toBe("COMPLETED");
    expect(transcript.records).toEqual(view.steps);
  });

  it("renders the final answer verbatim", () => {
    const html = renderAnswer(view.answer, view.answerStatus);
    expect(html).toContain("Handle LOS@NE-1 first.");
    expect(html).toContain('data-status="COMPLETED"');
    for (const kind of ["compress", "prioritize", "suggest"]) {
      expect(html).toContain(`data-kind="${kind}"`);
    }
  });

  it("renders the alarm table with every number verbatim from intercepted traffic", () => {
    // Pull the ranking from the recorded SSE traffic, not from test constants.
    const frames = gw.served.filter((e) => e.path === "#sse-frame");
    const ranked = frames
      .map((e) => e.body as { data: StepRecord })
      .find(
        (b) =>
          b.data.step === "PROBLEM_SOLVING" &&
          (b.data.payload as { subtask?: string }).subtask === "prioritize",
      );
    expect(ranked).toBeDefined();
    const wireRanking = (ranked!.data.payload as { payload: { ranking: typeof RANKING } })
      .payload.ranking;

    const html = renderAlarmTable(view.alarmRanking);
    const rows = extractAll(
      html,
      /<tr data-rank="(\d+)" data-key="([^"]+)" data-score="([^"]+)">/g,
    );
    expect(rows.length).toBe(wireRanking.length);
    rows.forEach((m, i) => {
      const wire = wireRanking[i]!;
      expect(Number(m[1])).toBe(i + 1); // rank order is payload order
      expect(m[2]).toBe(wire.event.key);
      expect(m[3]).toBe(String(wire.score)); // digit-for-digit
    });
    for (const wire of wireRanking) {
      expect(html).toContain(`data-severity-term="${String(wire.severity_term)}"`);
      expect(html).toContain(`data-frequency-term="${String(wire.frequency_term)}"`);
      expect(html).toContain(`data-correlation-term="${String(wire.correlation_term)}"`);
      expect(html).toContain(`data-count="${String(wire.event.count)}"`);
      expect(html).toContain(`>${String(wire.score)}</td>`);
    }
  });

  it("approves a pending ticket, reconciling optimistic state with the server reply", async () => {
    let inbox: InboxView = newInboxView();
    expect(renderApprovalInbox(inbox)).toContain("No pending approvals.");

    const list = await client.listTickets(SESSION_ID);
    inbox = loadTickets(inbox, list.tickets);
    expect(inbox.pending.length).toBe(1);
    const pendingHtml = renderApprovalInbox(inbox);
    expect(pendingHtml).toContain('data-status="PENDING"');
    expect(pendingHtml).toContain(">Approve</button>");
    // Proposal numbers come from the ticket payload served by the gateway.
    const servedTicket = (
      gw.served.find((e) => e.path.endsWith("/tickets"))?.body as { tickets: Ticket[] }
    ).tickets[0]!;
    expect(pendingHtml).toContain(`data-value="${String(servedTicket.proposed.demand_count)}"`);
    expect(pendingHtml).toContain(`data-value="${String(servedTicket.proposed.step_db)}"`);

    inbox = markResolving(inbox, TICKET_ID);
    expect(renderApprovalInbox(inbox)).toContain("disabled");

    const resolved = await client.resolveApproval(TICKET_ID, "APPROVED", "reviewed in console");
    expect(resolved.status).toBe("APPROVED");
    expect(gw.approvalPosts[0]).toEqual({ decision: "APPROVED", note: "reviewed in console" });
    expect(gw.ticketStatus()).toBe("APPROVED");

    inbox = applyResolution(inbox, resolved);
    const doneHtml = renderApprovalInbox(inbox);
    expect(doneHtml).toContain("No pending approvals.");
    expect(doneHtml).toContain('data-status="APPROVED"');
    expect(doneHtml).toContain("reviewed in console");
  });

  it("surfaces a double resolution as an AlreadyResolved notice", async () => {
    let err: GatewayError | null = null;
    try {
      await client.resolveApproval(TICKET_ID, "REJECTED", "too late");
    } catch (e) {
      err = e as GatewayError;
    }
    expect(err).toBeInstanceOf(GatewayError);
    expect(err!.status).toBe(409);
    expect(err!.detail).toContain("already resolved");

    let inbox = loadTickets(newInboxView(), [
      {
        ticket_id: TICKET_ID,
        session_id: SESSION_ID,
        job_id: "j-opt-1",
        action: "optimize_launch_power",
        description: "stale view still shows it pending",
        proposed: { demand_count: 2, bounds_dbm: [-4.0, 4.0], step_db: 0.5 },
        status: "PENDING",
        note: "",
      },
    ]);
    inbox = markResolving(inbox, TICKET_ID);
    inbox = applyResolutionError(inbox, TICKET_ID, err!.detail);
    const html = renderApprovalInbox(inbox);
    expect(html).toContain('class="notice"');
    expect(html).toContain("already resolved");
    expect(html).not.toContain("disabled");
  });

  it("renders the GSNR chart with every plotted value verbatim from intercepted traffic", async () => {
    const reply = await client.gsnrReport(SESSION_ID, "d0");
    expect(reply.blocked).toBe(false);
    const html = renderGsnrChart(reply);

    const wire = (
      gw.served.find((e) => e.path.includes("/gsnr") && e.path.includes("service=d0"))!
        .body as GsnrReply
    ).report!;

    const points = extractAll(
      html,
      /data-link="([^"]+)" data-channel="(\d+)" data-metric="(\w+)" data-value="([^"]+)"/g,
    );
    // Two metrics per channel per link.
    const expectedPoints = wire.links.reduce((acc, l) => acc + 2 * l.channels.length, 0);
    expect(points.length).toBe(expectedPoints);
    for (const link of wire.links) {
      for (const ch of link.channels) {
        const gsnr = points.find(
          (m) =>
            m[1] === link.link_id && Number(m[2]) === ch.channel_index && m[3] === "gsnr_db",
        );
        const margin = points.find(
          (m) =>
            m[1] === link.link_id && Number(m[2]) === ch.channel_index && m[3] === "margin_db",
        );
        expect(gsnr?.[4]).toBe(String(ch.gsnr_db)); // digit-for-digit
        expect(margin?.[4]).toBe(String(ch.margin_db));
      }
    }
    // End-of-route table carries the report's channel rows verbatim too.
    for (const ch of wire.channels) {
      expect(html).toContain(`>${String(ch.gsnr_db)}</td>`);
      expect(html).toContain(`>${String(ch.margin_db)}</td>`);
      expect(html).toContain(`>${String(ch.center_thz)}</td>`);
    }
  });

  it("shows an explicit blocked state instead of inventing numbers", async () => {
    const reply = await client.gsnrReport(SESSION_ID, "d9");
    expect(reply.blocked).toBe(true);
    const html = renderGsnrChart(reply);
    expect(html).toContain("blocked");
    expect(html).not.toContain("data-metric");
  });

  it("renders the optimization trace as initial plus one point per accepted move", () => {
    const html = renderOptimizationTrace(TRACE);
    const points = extractAll(html, /data-iteration="(\d+)" data-value="([^"]+)"/g);
    expect(points.length).toBe(TRACE.steps.length + 1);
    const values = points.map((m) => Number(m[2]));
    expect(values[0]).toBe(TRACE.initial_objective_db);
    TRACE.steps.forEach((s, i) => {
      expect(points[i + 1]![2]).toBe(String(s.objective_db));
    });
    for (let i = 1; i < values.length; i += 1) {
      expect(values[i]!).toBeGreaterThanOrEqual(values[i - 1]!);
    }
    expect(html).toContain(`data-value="${String(TRACE.final_objective_db)}"`);
    for (const [demand, dbm] of Object.entries(TRACE.final_launch_dbm)) {
      expect(html).toContain(`data-demand="${demand}"`);
      expect(html).toContain(`<td data-value="${String(dbm)}">${String(dbm)}</td>`);
    }
  });

  it("renders the network summary numbers verbatim", async () => {
    const state = await client.networkState(SESSION_ID);
    const html = renderNetworkSummary(state);
    const wire = gw.served.find((e) => e.path.endsWith("/state"))!.body as typeof state;
    expect(html).toContain(`data-value="${String(wire.allocation!.utilization)}"`);
    expect(html).toContain(`data-value="${String(wire.allocation!.blocking_probability)}"`);
    for (const demand of wire.demands) {
      expect(html).toContain(`data-value="${String(demand.launch_power_dbm)}"`);
    }
  });

  it("renders the 30-cell eval matrix verbatim and a running state before it", async () => {
    const started = await client.startEval({ n_per_cell: 20 });
    expect(started.status).toBe("RUNNING");
    expect(renderEvalMatrix(started)).toContain("RUNNING");

    const run = await client.evalRun(started.run_id);
    expect(run.status).toBe("DONE");
    const html = renderEvalMatrix(run);
    const wire = (gw.served.find((e) => e.path.endsWith(`/eval/runs/${run.run_id}`))!
      .body as EvalRun).report!;
    const rows = extractAll(html, /<tr data-task="([^"]+)" data-condition="([^"]+)">/g);
    expect(rows.length).toBe(30);
    expect(wire.cells.length).toBe(30);
    for (const cell of wire.cells) {
      expect(html).toContain(
        `<td class="accuracy" data-value="${String(cell.mean_accuracy)}">` +
          `${String(cell.mean_accuracy)}</td>`,
      );
    }
  });

  it("keeps empty dashboards explicit rather than fabricated", () => {
    expect(renderAlarmTable(null)).toContain("No alarm ranking yet");
    expect(renderOptimizationTrace(null)).toContain("No optimization run yet");
    expect(renderEvalMatrix(null)).toContain("No evaluation runs yet");
    expect(renderGsnrChart(null)).toContain("No GSNR report loaded");
    expect(renderNetworkSummary(null)).toContain("No session selected");
  });
});

describe("sse decoder", () => {
  it("reassembles frames across arbitrary chunk boundaries", () => {
    const frame = 'id: 4\nevent: step\ndata: {"a": 1}\n\n';
    const decoder = new SseDecoder();
    expect(decoder.push(frame.slice(0, 9))).toEqual([]);
    const frames = decoder.push(frame.slice(9) + 'event: final\ndata: {"b": 2}\n\n');
    expect(frames).toEqual([
      { id: "4", event: "step", data: '{"a": 1}' },
      { id: undefined, event: "final", data: '{"b": 2}' },
    ]);
  });

  it("drops duplicate seqs when a replay overlaps", () => {
    let view = newSessionView(SESSION_ID);
    const row = STEPS[0]!;
    const ev: StreamEvent = { event: "step", job_id: JOB_ID, data: row };
    view = applyStreamEvent(view, ev);
    view = applyStreamEvent(view, ev);
    expect(view.steps.length).toBe(1);
    expect(view.cursor).toBe(1);
  });
});
