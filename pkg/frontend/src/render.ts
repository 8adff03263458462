/** Pure HTML renderers. Input: wire payloads. Output: markup strings.
 *
 * Invariant: every number shown on screen is the payload field itself,
 * stringified, never recomputed or rounded. Numeric elements also carry the
 * value in a data-value attribute so tests can check the screen against
 * intercepted gateway traffic. Chart coordinates are presentation geometry
 * only; the labelled values stay verbatim.
 */

import type {
  EvalRun,
  FinalAnswer,
  GsnrReply,
  NetworkState,
  OptimizationTrace,
  RankingEntry,
  StepRecord,
} from "./types.js";
import type { ConnectionState } from "./events.js";
import type { InboxView, SessionView } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

/** Verbatim numeric rendering: the JSON value, stringified, nothing else. */
function num(value: number): string {
  return String(value);
}

function dataNum(name: string, value: number): string {
  return `data-${name}="${num(value)}"`;
}

function empty(message: string): string {
  return `<p class="empty">${escapeHtml(message)}</p>`;
}

// ---------------------------------------------------------------------------
// Chat timeline
// ---------------------------------------------------------------------------

function stepSummary(record: StepRecord): string {
  const p = record.payload as Record<string, unknown>;
  switch (record.step) {
    case "INTENT_ANALYSIS":
      return `task ${String(p["task_kind"] ?? "?")}`;
    case "TASK_DECOMPOSITION": {
      const plan = p["plan"] as { pattern?: string; subtasks?: unknown[] } | undefined;
      const count = plan?.subtasks?.length ?? 0;
      return `${String(plan?.pattern ?? "?")} plan, ${count} subtasks`;
    }
    case "RESOURCE_SELECTION": {
      const tools = Array.isArray(p["tools"]) ? (p["tools"] as unknown[]).join(", ") : "";
      return `${String(p["subtask"] ?? "?")}: ${tools}`;
    }
    case "TOOL_CALL":
      return `ran ${String(p["tool"] ?? "?")}`;
    case "PROBLEM_SOLVING":
      return `${String(p["subtask"] ?? "?")} results in`;
    case "PENDING_APPROVAL": {
      const ticket = p["ticket"] as { action?: string; status?: string } | undefined;
      return `${String(ticket?.action ?? p["action"] ?? "?")} ${String(
        ticket?.status ?? p["status"] ?? "",
      )}`.trim();
    }
    case "FINAL_ANSWER":
      return `status ${String(p["status"] ?? "?")}`;
    default:
      return "";
  }
}

export function renderConnectionBadge(state: ConnectionState): string {
  const labels: Record<ConnectionState, string> = {
    connecting: "connecting to stream",
    live: "live",
    reconnecting: "connection lost, reconnecting",
    closed: "stream closed",
  };
  return `<span class="connection connection-${state}">${escapeHtml(labels[state])}</span>`;
}

export function renderTimeline(view: SessionView): string {
  const badge = renderConnectionBadge(view.connection);
  if (view.steps.length === 0) {
    return `<div class="timeline-panel">${badge}${empty("No steps yet.")}</div>`;
  }
  const items = view.steps
    .map((record) => {
      const label = `[${String(record.seq).padStart(3, "0")}] ${record.step}`;
      const summary = stepSummary(record);
      return (
        `<li class="step step-${escapeHtml(record.step)}" data-seq="${record.seq}"` +
        ` data-step="${escapeHtml(record.step)}" data-job="${escapeHtml(record.job_id)}">` +
        `<code>${escapeHtml(label)}</code> ${escapeHtml(summary)}</li>`
      );
    })
    .join("");
  return `<div class="timeline-panel">${badge}<ol class="timeline">${items}</ol></div>`;
}

export function renderAnswer(answer: FinalAnswer | null, status: string | null): string {
  if (answer === null) {
    return empty("No answer yet.");
  }
  const sections = answer.sections
    .map(
      (s) =>
        `<details class="answer-section" data-kind="${escapeHtml(s.kind)}">` +
        `<summary>${escapeHtml(s.kind)}</summary>` +
        `<p>${escapeHtml(s.answer_text)}</p></details>`,
    )
    .join("");
  return (
    `<div class="answer" data-status="${escapeHtml(status ?? "")}">` +
    `<p class="answer-text">${escapeHtml(answer.text)}</p>${sections}</div>`
  );
}

// ---------------------------------------------------------------------------
// Alarm triage table
// ---------------------------------------------------------------------------

export function renderAlarmTable(ranking: RankingEntry[] | null): string {
  if (ranking === null || ranking.length === 0) {
    return empty("No alarm ranking yet. Ask the agent to analyze the current alarms.");
  }
  const rows = ranking
    .map((entry, rank) => {
      const e = entry.event;
      return (
        `<tr data-rank="${rank + 1}" data-key="${escapeHtml(e.key)}" ` +
        `${dataNum("score", entry.score)}>` +
        `<td>${rank + 1}</td>` +
        `<td><code>${escapeHtml(e.key)}</code></td>` +
        `<td>${escapeHtml(e.max_severity)}</td>` +
        `<td ${dataNum("count", e.count)}>${num(e.count)}</td>` +
        `<td ${dataNum("first-ts", e.first_ts)}>${num(e.first_ts)}</td>` +
        `<td ${dataNum("severity-term", entry.severity_term)}>${num(entry.severity_term)}</td>` +
        `<td ${dataNum("frequency-term", entry.frequency_term)}>${num(entry.frequency_term)}</td>` +
        `<td ${dataNum("correlation-term", entry.correlation_term)}>` +
        `${num(entry.correlation_term)}</td>` +
        `<td class="score" ${dataNum("value", entry.score)}>${num(entry.score)}</td>` +
        `<td>${escapeHtml(e.representative_description)}</td>` +
        `</tr>`
      );
    })
    .join("");
  return (
    `<table class="alarm-table"><thead><tr>` +
    `<th>#</th><th>event</th><th>severity</th><th>count</th><th>first ts</th>` +
    `<th>sev term</th><th>freq term</th><th>corr term</th><th>score</th><th>description</th>` +
    `</tr></thead><tbody>${rows}</tbody></table>`
  );
}

// ---------------------------------------------------------------------------
// Per-channel GSNR / margin chart
// ---------------------------------------------------------------------------

interface ChartPoint {
  x: number;
  y: number;
  link: string;
  channel: number;
  metric: string;
  value: number;
}

function chartGeometry(values: number[]): { lo: number; span: number } {
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const span = hi - lo || 1;
  return { lo, span };
}

export function renderGsnrChart(reply: GsnrReply | null): string {
  if (reply === null) {
    return empty("No GSNR report loaded. Pick a provisioned service.");
  }
  if (reply.blocked || reply.report === undefined) {
    return (
      `<p class="blocked" data-service="${escapeHtml(reply.service)}">` +
      `Service ${escapeHtml(reply.service)} is blocked; no light path to report.</p>`
    );
  }
  const report = reply.report;
  if (report.links.length === 0) {
    return empty("Report has no links.");
  }
  const width = 640;
  const height = 260;
  const padX = 50;
  const padY = 20;
  const innerW = width - 2 * padX;
  const innerH = height - 2 * padY;
  const allValues: number[] = [];
  for (const link of report.links) {
    for (const ch of link.channels) {
      allValues.push(ch.gsnr_db, ch.margin_db);
    }
  }
  const { lo, span } = chartGeometry(allValues);
  const xStep = report.links.length > 1 ? innerW / (report.links.length - 1) : 0;
  const toY = (v: number): number => padY + innerH - ((v - lo) / span) * innerH;
  const points: ChartPoint[] = [];
  report.links.forEach((link, i) => {
    const x = padX + (report.links.length > 1 ? i * xStep : innerW / 2);
    for (const ch of link.channels) {
      points.push({
        x,
        y: toY(ch.gsnr_db),
        link: link.link_id,
        channel: ch.channel_index,
        metric: "gsnr_db",
        value: ch.gsnr_db,
      });
      points.push({
        x,
        y: toY(ch.margin_db),
        link: link.link_id,
        channel: ch.channel_index,
        metric: "margin_db",
        value: ch.margin_db,
      });
    }
  });
  const circles = points
    .map(
      (pt) =>
        `<circle class="pt pt-${pt.metric}" cx="${pt.x.toFixed(1)}" cy="${pt.y.toFixed(1)}" ` +
        `r="3" data-link="${escapeHtml(pt.link)}" data-channel="${pt.channel}" ` +
        `data-metric="${pt.metric}" data-value="${num(pt.value)}">` +
        `<title>${escapeHtml(pt.link)} ch${pt.channel} ${pt.metric}=${num(pt.value)}</title>` +
        `</circle>`,
    )
    .join("");
  const xLabels = report.links
    .map((link, i) => {
      const x = padX + (report.links.length > 1 ? i * xStep : innerW / 2);
      return (
        `<text class="x-label" x="${x.toFixed(1)}" y="${height - 4}" text-anchor="middle">` +
        `${escapeHtml(link.link_id)}</text>`
      );
    })
    .join("");
  const endRows = report.channels
    .map(
      (ch) =>
        `<tr data-channel="${ch.channel_index}">` +
        `<td>${num(ch.channel_index)}</td>` +
        `<td ${dataNum("value", ch.center_thz)}>${num(ch.center_thz)}</td>` +
        `<td class="gsnr" ${dataNum("value", ch.gsnr_db)}>${num(ch.gsnr_db)}</td>` +
        `<td class="margin" ${dataNum("value", ch.margin_db)}>${num(ch.margin_db)}</td>` +
        `<td>${escapeHtml(ch.modulation)}</td>` +
        `</tr>`,
    )
    .join("");
  return (
    `<figure class="gsnr-chart" data-service="${escapeHtml(reply.service)}">` +
    `<svg viewBox="0 0 ${width} ${height}" role="img">` +
    `<g class="points">${circles}</g><g class="labels">${xLabels}</g></svg>` +
    `<figcaption>Per-channel GSNR and margin after each link of ` +
    `<code>${escapeHtml(reply.service)}</code>; end-of-route values below.</figcaption>` +
    `<table class="gsnr-end"><thead><tr><th>channel</th><th>center THz</th>` +
    `<th>gsnr dB</th><th>margin dB</th><th>modulation</th></tr></thead>` +
    `<tbody>${endRows}</tbody></table></figure>`
  );
}

// ---------------------------------------------------------------------------
// Optimization trace
// ---------------------------------------------------------------------------

export function renderOptimizationTrace(trace: OptimizationTrace | null): string {
  if (trace === null) {
    return empty("No optimization run yet.");
  }
  const objectives = [trace.initial_objective_db, ...trace.steps.map((s) => s.objective_db)];
  const width = 640;
  const height = 200;
  const padX = 50;
  const padY = 16;
  const innerW = width - 2 * padX;
  const innerH = height - 2 * padY;
  const { lo, span } = chartGeometry(objectives);
  const xStep = objectives.length > 1 ? innerW / (objectives.length - 1) : 0;
  const pts = objectives.map((v, i) => {
    const x = padX + (objectives.length > 1 ? i * xStep : innerW / 2);
    const y = padY + innerH - ((v - lo) / span) * innerH;
    return { x, y, v, i };
  });
  const poly = pts.map((p) => `${p.x.toFixed(1)},${p.y.toFixed(1)}`).join(" ");
  const circles = pts
    .map(
      (p) =>
        `<circle class="pt" cx="${p.x.toFixed(1)}" cy="${p.y.toFixed(1)}" r="3" ` +
        `data-iteration="${p.i}" data-value="${num(p.v)}">` +
        `<title>iteration ${p.i}: ${num(p.v)} dB</title></circle>`,
    )
    .join("");
  const moves = trace.steps
    .map(
      (s) =>
        `<li data-step-index="${s.step_index}">` +
        `<code>${escapeHtml(s.demand_id)}</code> ` +
        `<span ${dataNum("delta", s.delta_db)}>${num(s.delta_db)} dB</span> to ` +
        `<span ${dataNum("power", s.power_dbm)}>${num(s.power_dbm)} dBm</span>, objective ` +
        `<span class="objective" ${dataNum("value", s.objective_db)}>${num(
          s.objective_db,
        )} dB</span></li>`,
    )
    .join("");
  const finals = Object.entries(trace.final_launch_dbm)
    .map(
      ([demand, dbm]) =>
        `<tr data-demand="${escapeHtml(demand)}"><td><code>${escapeHtml(demand)}</code></td>` +
        `<td ${dataNum("value", dbm)}>${num(dbm)}</td></tr>`,
    )
    .join("");
  return (
    `<figure class="trace-chart" data-rounds="${num(trace.rounds)}" ` +
    `data-converged="${trace.converged}">` +
    `<svg viewBox="0 0 ${width} ${height}" role="img">` +
    `<polyline class="objective-line" fill="none" points="${poly}"></polyline>` +
    `<g class="points">${circles}</g></svg>` +
    `<figcaption>Objective ` +
    `<span class="initial" ${dataNum("value", trace.initial_objective_db)}>` +
    `${num(trace.initial_objective_db)}</span> to ` +
    `<span class="final" ${dataNum("value", trace.final_objective_db)}>` +
    `${num(trace.final_objective_db)}</span> dB over ${num(trace.rounds)} rounds` +
    `${trace.converged ? " (converged)" : ""}.</figcaption>` +
    `<ol class="moves">${moves}</ol>` +
    `<table class="final-launch"><thead><tr><th>demand</th><th>launch dBm</th></tr></thead>` +
    `<tbody>${finals}</tbody></table></figure>`
  );
}

// ---------------------------------------------------------------------------
// Approval inbox
// ---------------------------------------------------------------------------

export function renderApprovalInbox(inbox: InboxView): string {
  const notice =
    inbox.notice === null ? "" : `<p class="notice" role="alert">${escapeHtml(inbox.notice)}</p>`;
  const pending =
    inbox.pending.length === 0
      ? empty("No pending approvals.")
      : inbox.pending
          .map(({ ticket, resolving }) => {
            const disabled = resolving ? " disabled" : "";
            const bounds = ticket.proposed.bounds_dbm.map(num).join(" to ");
            return (
              `<article class="ticket" data-ticket="${escapeHtml(ticket.ticket_id)}" ` +
              `data-status="${escapeHtml(ticket.status)}" data-resolving="${resolving}">` +
              `<h4>${escapeHtml(ticket.action)}</h4>` +
              `<p>${escapeHtml(ticket.description)}</p>` +
              `<dl class="proposal">` +
              `<dt>demands</dt><dd ${dataNum("value", ticket.proposed.demand_count)}>` +
              `${num(ticket.proposed.demand_count)}</dd>` +
              `<dt>bounds dBm</dt><dd>${escapeHtml(bounds)}</dd>` +
              `<dt>step dB</dt><dd ${dataNum("value", ticket.proposed.step_db)}>` +
              `${num(ticket.proposed.step_db)}</dd></dl>` +
              `<button class="approve" data-ticket="${escapeHtml(ticket.ticket_id)}"` +
              `${disabled}>${resolving ? "Sending decision" : "Approve"}</button>` +
              `<button class="reject" data-ticket="${escapeHtml(ticket.ticket_id)}"` +
              `${disabled}>Reject</button>` +
              `</article>`
            );
          })
          .join("");
  const resolved =
    inbox.resolved.length === 0
      ? ""
      : `<h4>History</h4><ul class="resolved">` +
        inbox.resolved
          .map(
            (t) =>
              `<li data-ticket="${escapeHtml(t.ticket_id)}" data-status="${escapeHtml(
                t.status,
              )}"><code>${escapeHtml(t.ticket_id)}</code> ${escapeHtml(t.status)}` +
              `${t.note === "" ? "" : `: ${escapeHtml(t.note)}`}</li>`,
          )
          .join("") +
        `</ul>`;
  return `<div class="inbox">${notice}${pending}${resolved}</div>`;
}

// ---------------------------------------------------------------------------
// Eval matrix
// ---------------------------------------------------------------------------

export function renderEvalMatrix(run: EvalRun | null): string {
  if (run === null) {
    return empty("No evaluation runs yet.");
  }
  if (run.status !== "DONE" || run.report === undefined) {
    if (run.status === "FAILED") {
      return `<p class="failed">Run ${escapeHtml(run.run_id)} failed: ${escapeHtml(
        run.error,
      )}</p>`;
    }
    return `<p class="running">Run ${escapeHtml(run.run_id)} is ${escapeHtml(
      run.status,
    )}.</p>`;
  }
  const rows = run.report.cells
    .map(
      (c) =>
        `<tr data-task="${escapeHtml(c.task)}" data-condition="${escapeHtml(c.condition)}">` +
        `<td>${escapeHtml(c.task)}</td><td>${escapeHtml(c.condition)}</td>` +
        `<td ${dataNum("value", c.n)}>${num(c.n)}</td>` +
        `<td class="accuracy" ${dataNum("value", c.mean_accuracy)}>${num(c.mean_accuracy)}</td>` +
        `<td class="similarity" ${dataNum("value", c.mean_similarity)}>` +
        `${num(c.mean_similarity)}</td></tr>`,
    )
    .join("");
  return (
    `<table class="eval-matrix" data-run="${escapeHtml(run.run_id)}" ` +
    `${dataNum("seed", run.report.seed)}>` +
    `<thead><tr><th>task</th><th>condition</th><th>n</th>` +
    `<th>mean accuracy</th><th>mean similarity</th></tr></thead>` +
    `<tbody>${rows}</tbody></table>`
  );
}

// ---------------------------------------------------------------------------
// Network summary
// ---------------------------------------------------------------------------

export function renderNetworkSummary(state: NetworkState | null): string {
  if (state === null) {
    return empty("No session selected.");
  }
  const demands =
    state.demands.length === 0
      ? empty("No demands provisioned.")
      : `<table class="demands"><thead><tr><th>id</th><th>src</th><th>dst</th>` +
        `<th>launch dBm</th><th>modulation</th></tr></thead><tbody>` +
        state.demands
          .map(
            (d) =>
              `<tr data-demand="${escapeHtml(d.id)}"><td><code>${escapeHtml(d.id)}</code></td>` +
              `<td>${escapeHtml(d.src)}</td><td>${escapeHtml(d.dst)}</td>` +
              `<td class="launch" ${dataNum("value", d.launch_power_dbm)}>` +
              `${num(d.launch_power_dbm)}</td>` +
              `<td>${escapeHtml(d.modulation)}</td></tr>`,
          )
          .join("") +
        `</tbody></table>`;
  const allocation =
    state.allocation === undefined
      ? ""
      : `<p class="allocation">Blocking probability ` +
        `<span ${dataNum("value", state.allocation.blocking_probability)}>` +
        `${num(state.allocation.blocking_probability)}</span>, utilization ` +
        `<span ${dataNum("value", state.allocation.utilization)}>` +
        `${num(state.allocation.utilization)}</span>.</p>`;
  return (
    `<div class="network" data-digest="${escapeHtml(state.state_digest)}">` +
    `<p>${escapeHtml(state.topology)}: ` +
    `<span ${dataNum("value", state.node_count)}>${num(state.node_count)}</span> nodes, ` +
    `<span ${dataNum("value", state.link_count)}>${num(state.link_count)}</span> links, ` +
    `<span ${dataNum("value", state.alarm_count)}>${num(state.alarm_count)}</span> alarms.</p>` +
    `${demands}${allocation}</div>`
  );
}
