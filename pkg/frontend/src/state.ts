/** Pure view-state reducers. Every function returns a new object; nothing
 * here talks to the network or the DOM, and nothing recomputes domain
 * numbers; payload fields are carried through untouched.
 */

import type {
  FinalAnswer,
  OptimizationTrace,
  RankingEntry,
  StepRecord,
  StreamEvent,
  SuggestionRow,
  Ticket,
} from "./types.js";
import { isStepEvent } from "./types.js";
import type { ConnectionState } from "./events.js";

export interface JobOutcome {
  status: string;
  error: string;
}

export interface SessionView {
  sessionId: string;
  /** Transcript rows sorted by seq, duplicates dropped. */
  steps: StepRecord[];
  /** Next from_seq to resume the stream with. */
  cursor: number;
  connection: ConnectionState;
  jobs: Record<string, JobOutcome>;
  answer: FinalAnswer | null;
  answerStatus: string | null;
  alarmRanking: RankingEntry[] | null;
  suggestion: SuggestionRow | null;
  trace: OptimizationTrace | null;
}

export function newSessionView(sessionId: string): SessionView {
  return {
    sessionId,
    steps: [],
    cursor: 0,
    connection: "connecting",
    jobs: {},
    answer: null,
    answerStatus: null,
    alarmRanking: null,
    suggestion: null,
    trace: null,
  };
}

function withStep(view: SessionView, record: StepRecord): SessionView {
  if (view.steps.some((s) => s.seq === record.seq)) {
    return view;
  }
  const steps = [...view.steps, record].sort((a, b) => a.seq - b.seq);
  const next: SessionView = { ...view, steps, cursor: Math.max(view.cursor, record.seq + 1) };
  return extractPanels(next, record);
}

/** Lift dashboard payloads out of the records that carry them. */
function extractPanels(view: SessionView, record: StepRecord): SessionView {
  const out = { ...view };
  if (record.step === "PROBLEM_SOLVING") {
    const payload = record.payload as { subtask?: string; payload?: Record<string, unknown> };
    const inner = payload.payload ?? {};
    if (payload.subtask === "prioritize" && Array.isArray(inner["ranking"])) {
      out.alarmRanking = inner["ranking"] as RankingEntry[];
    } else if (payload.subtask === "suggest" && inner["suggestion"] !== undefined) {
      out.suggestion = inner["suggestion"] as SuggestionRow;
    } else if (payload.subtask === "optimize" && inner["trace"] !== undefined) {
      out.trace = inner["trace"] as OptimizationTrace;
    }
  } else if (record.step === "FINAL_ANSWER") {
    const payload = record.payload as { status?: string; answer?: FinalAnswer };
    out.answerStatus = payload.status ?? null;
    out.answer = payload.answer ?? null;
    for (const section of payload.answer?.sections ?? []) {
      if (section.kind === "prioritize" && Array.isArray(section.payload["ranking"])) {
        out.alarmRanking = section.payload["ranking"] as RankingEntry[];
      } else if (section.kind === "suggest" && section.payload["suggestion"] !== undefined) {
        out.suggestion = section.payload["suggestion"] as SuggestionRow;
      } else if (section.kind === "optimize" && section.payload["trace"] !== undefined) {
        out.trace = section.payload["trace"] as OptimizationTrace;
      }
    }
  }
  return out;
}

export function applyStreamEvent(view: SessionView, ev: StreamEvent): SessionView {
  if (isStepEvent(ev)) {
    return withStep(view, ev.data);
  }
  const jobs = { ...view.jobs, [ev.job_id]: { status: ev.status, error: ev.error } };
  return { ...view, jobs };
}

export function applyConnectionState(view: SessionView, state: ConnectionState): SessionView {
  return { ...view, connection: state };
}

// ---------------------------------------------------------------------------
// Approval inbox
// ---------------------------------------------------------------------------

export interface TicketView {
  ticket: Ticket;
  /** Optimistic flag: a decision is in flight, buttons stay disabled. */
  resolving: boolean;
}

export interface InboxView {
  pending: TicketView[];
  resolved: Ticket[];
  notice: string | null;
}

export function newInboxView(): InboxView {
  return { pending: [], resolved: [], notice: null };
}

/** Replace the inbox with server truth, keeping in-flight flags. */
export function loadTickets(inbox: InboxView, tickets: Ticket[]): InboxView {
  const resolving = new Set(
    inbox.pending.filter((t) => t.resolving).map((t) => t.ticket.ticket_id),
  );
  const pending: TicketView[] = [];
  const resolved: Ticket[] = [];
  for (const ticket of tickets) {
    if (ticket.status === "PENDING") {
      pending.push({ ticket, resolving: resolving.has(ticket.ticket_id) });
    } else {
      resolved.push(ticket);
    }
  }
  return { pending, resolved, notice: inbox.notice };
}

export function markResolving(inbox: InboxView, ticketId: string): InboxView {
  const pending = inbox.pending.map((t) =>
    t.ticket.ticket_id === ticketId ? { ...t, resolving: true } : t,
  );
  return { ...inbox, pending };
}

/** Reconcile with the server's resolved ticket: move it to history. */
export function applyResolution(inbox: InboxView, ticket: Ticket): InboxView {
  const pending = inbox.pending.filter((t) => t.ticket.ticket_id !== ticket.ticket_id);
  const resolved = [...inbox.resolved.filter((t) => t.ticket_id !== ticket.ticket_id), ticket];
  return { pending, resolved, notice: null };
}

/** A decision failed (e.g. someone else resolved it first): drop the
 * optimistic flag and surface the gateway's message.
 */
export function applyResolutionError(
  inbox: InboxView,
  ticketId: string,
  detail: string,
): InboxView {
  const pending = inbox.pending.map((t) =>
    t.ticket.ticket_id === ticketId ? { ...t, resolving: false } : t,
  );
  return { ...inbox, pending, notice: detail };
}
