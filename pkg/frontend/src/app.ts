/** Browser bootstrap: wires the gateway client, the event stream, and the
 * pure renderers to the static page. All state lives in the reducers from
 * state.ts; this file only moves strings between them and the DOM.
 */

import { GatewayClient, GatewayError } from "./api.js";
import { streamEvents } from "./events.js";
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
} from "./state.js";
import {
  renderAlarmTable,
  renderAnswer,
  renderApprovalInbox,
  renderEvalMatrix,
  renderGsnrChart,
  renderNetworkSummary,
  renderOptimizationTrace,
  renderTimeline,
} from "./render.js";
import type { EvalRun } from "./types.js";

interface App {
  client: GatewayClient | null;
  view: SessionView;
  inbox: InboxView;
  streaming: boolean;
}

const app: App = {
  client: null,
  view: newSessionView(""),
  inbox: newInboxView(),
  streaming: false,
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function setHtml(id: string, html: string): void {
  el(id).innerHTML = html;
}

function setStatus(message: string): void {
  el("status").textContent = message;
}

function renderAll(): void {
  setHtml("timeline", renderTimeline(app.view));
  setHtml("answer", renderAnswer(app.view.answer, app.view.answerStatus));
  setHtml("alarm-table", renderAlarmTable(app.view.alarmRanking));
  setHtml("trace", renderOptimizationTrace(app.view.trace));
  setHtml("inbox", renderApprovalInbox(app.inbox));
}

function requireClient(): GatewayClient {
  if (app.client === null) {
    throw new Error("connect to a gateway first");
  }
  return app.client;
}

async function refreshNetwork(): Promise<void> {
  const client = requireClient();
  const state = await client.networkState(app.view.sessionId);
  setHtml("network", renderNetworkSummary(state));
}

async function refreshTickets(): Promise<void> {
  const client = requireClient();
  const list = await client.listTickets(app.view.sessionId);
  app.inbox = loadTickets(app.inbox, list.tickets);
  setHtml("inbox", renderApprovalInbox(app.inbox));
}

async function connect(): Promise<void> {
  const baseUrl = el<HTMLInputElement>("gateway-url").value.trim();
  const token = el<HTMLInputElement>("gateway-token").value.trim();
  app.client = new GatewayClient({ baseUrl, token: token === "" ? undefined : token });
  const health = await app.client.health();
  const sessions = await app.client.listSessions();
  const first = sessions.sessions[0];
  const description = first ?? (await app.client.createSession({}));
  app.view = newSessionView(description.session_id);
  app.inbox = newInboxView();
  setStatus(`gateway ${health.status}; session ${description.session_id}`);
  renderAll();
  await refreshNetwork();
  await refreshTickets();
}

async function submitQuery(): Promise<void> {
  const client = requireClient();
  const input = el<HTMLInputElement>("query-text");
  const query = input.value.trim();
  if (query === "") {
    return;
  }
  const submitted = await client.submitQuery(app.view.sessionId, query);
  setStatus(`job ${submitted.job_id} ${submitted.status}`);
  if (app.streaming) {
    return;
  }
  app.streaming = true;
  try {
    const outcome = await streamEvents({
      client,
      sessionId: app.view.sessionId,
      fromSeq: app.view.cursor,
      jobId: submitted.job_id,
      onEvent: (ev) => {
        app.view = applyStreamEvent(app.view, ev);
        renderAll();
      },
      onConnectionState: (state) => {
        app.view = applyConnectionState(app.view, state);
        setHtml("timeline", renderTimeline(app.view));
      },
    });
    const terminal = outcome.terminal;
    const status = terminal !== null && "status" in terminal ? terminal.status : "stream ended";
    setStatus(`job ${submitted.job_id} ${status}`);
  } finally {
    app.streaming = false;
  }
  await refreshTickets();
  await refreshNetwork();
}

async function decide(ticketId: string, decision: string): Promise<void> {
  const client = requireClient();
  app.inbox = markResolving(app.inbox, ticketId);
  setHtml("inbox", renderApprovalInbox(app.inbox));
  try {
    const resolved = await client.resolveApproval(ticketId, decision, "via console");
    app.inbox = applyResolution(app.inbox, resolved);
  } catch (err) {
    const detail = err instanceof GatewayError ? err.detail : String(err);
    app.inbox = applyResolutionError(app.inbox, ticketId, detail);
  }
  setHtml("inbox", renderApprovalInbox(app.inbox));
  await refreshTickets();
}

async function loadGsnr(): Promise<void> {
  const client = requireClient();
  const service = el<HTMLInputElement>("gsnr-service").value.trim();
  if (service === "") {
    return;
  }
  const reply = await client.gsnrReport(app.view.sessionId, service);
  setHtml("gsnr", renderGsnrChart(reply));
}

async function runEval(): Promise<void> {
  const client = requireClient();
  const started = await client.startEval({ n_per_cell: 2 });
  setHtml("eval", renderEvalMatrix(started));
  let run: EvalRun = started;
  while (run.status === "RUNNING") {
    await new Promise((resolve) => setTimeout(resolve, 2000));
    run = await client.evalRun(started.run_id);
    setHtml("eval", renderEvalMatrix(run));
  }
}

function guard(action: () => Promise<void>): () => void {
  return () => {
    action().catch((err) => {
      const detail = err instanceof GatewayError ? `${err.status}: ${err.detail}` : String(err);
      setStatus(`error ${detail}`);
    });
  };
}

export function main(): void {
  el("connect").addEventListener("click", guard(connect));
  el("submit-query").addEventListener("click", guard(submitQuery));
  el("load-gsnr").addEventListener("click", guard(loadGsnr));
  el("run-eval").addEventListener("click", guard(runEval));
  el("refresh-tickets").addEventListener("click", guard(refreshTickets));
  el("inbox").addEventListener("click", (ev) => {
    const target = ev.target as HTMLElement;
    const ticketId = target.dataset["ticket"];
    if (ticketId === undefined) {
      return;
    }
    if (target.classList.contains("approve")) {
      guard(() => decide(ticketId, "APPROVED"))();
    } else if (target.classList.contains("reject")) {
      guard(() => decide(ticketId, "REJECTED"))();
    }
  });
  renderAll();
}

if (typeof document !== "undefined") {
  main();
}
