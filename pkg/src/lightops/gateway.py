"""HTTP gateway: durable sessions, approvals, and event streaming.

A session owns one live network/alarm state and at most one in-flight
agent run.  Every run appends step records to a per-session transcript
that is persisted as it grows, streamed to connected clients, and
replayable after a restart.  Mutating tool calls suspend the run on an
approval ticket that is resolved over HTTP.

Persistence is line-delimited JSON under the configured data directory:

    data_dir/sessions/<sid>/meta.json        session identity and seed state
    data_dir/sessions/<sid>/transcript.jsonl one step record per line
    data_dir/sessions/<sid>/tickets.jsonl    ticket lifecycle rows
    data_dir/sessions/<sid>/jobs.jsonl       job submitted/finished rows
    data_dir/sessions/<sid>/alarms.jsonl     ingested alarm records
    data_dir/eval/<run_id>/...               evaluation reports

Files are append-only; restart replays them.  There is no external
database and no auth beyond an optional static bearer token.
"""

from __future__ import annotations

import json
import logging
import os
import queue
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Mapping, Sequence

from fastapi import Body, Depends, FastAPI, HTTPException, Request
from fastapi.responses import StreamingResponse

from . import alarms as alarms_mod
from . import netops
from .agent import (
    Agent,
    AgentConfig,
    AgentSession,
    ApprovalGate,
    ApprovalRequest,
    HttpBackend,
    LlmBackend,
    RunStatus,
    StepRecord,
    TicketHandle,
    Transcript,
    system_clock,
)
from .bundled import (
    load_backend_fixture,
    load_bundled_topology,
    load_knowledge_store,
    load_manual_store,
    load_rulebase,
)
from .errors import (
    AlreadyResolvedError,
    BusyError,
    ConfigError,
    LightopsError,
    ParseError,
    SessionNotFoundError,
    TopologyNotFoundError,
    UnknownEvalRunError,
    UnknownJobError,
    UnknownServiceError,
    UnknownTicketError,
    ValidationError,
)
from .evalharness import (
    ConfigCondition,
    EvalTask,
    condition_config,
    run_matrix,
)
from .netmodel import (
    NetworkTopology,
    demands_to_dict,
    load_topology,
    parse_demand,
)

logger = logging.getLogger(__name__)

__all__ = [
    "GatewayConfig",
    "load_gateway_config",
    "ApprovalTicket",
    "SessionManager",
    "create_app",
]


# ---------------------------------------------------------------------------
# Configuration

ENV_BACKEND_URL = "LIGHTOPS_BACKEND_URL"
ENV_BACKEND_TOKEN = "LIGHTOPS_BACKEND_TOKEN"
ENV_DATA_DIR = "LIGHTOPS_DATA_DIR"
ENV_PORT = "LIGHTOPS_PORT"
ENV_AUTH_TOKEN = "LIGHTOPS_AUTH_TOKEN"


@dataclass
class GatewayConfig:
    """Gateway settings; file values lose to environment overrides.

    ``backend_url`` empty means the bundled scripted backend, which keeps
    the whole service deterministic and offline.  ``auth_token`` empty
    disables auth.
    """

    data_dir: Path = Path("lightops-data")
    host: str = "127.0.0.1"
    port: int = 8787
    auth_token: str = ""
    backend_url: str = ""
    backend_model: str = "operator-assistant"
    backend_token_env: str = ENV_BACKEND_TOKEN
    approval_timeout_s: float = 600.0
    default_topology: str = "bundled"

    def to_dict(self) -> dict:
        return {
            "data_dir": str(self.data_dir),
            "host": self.host,
            "port": self.port,
            "auth_token": self.auth_token,
            "backend_url": self.backend_url,
            "backend_model": self.backend_model,
            "backend_token_env": self.backend_token_env,
            "approval_timeout_s": self.approval_timeout_s,
            "default_topology": self.default_topology,
        }


_CONFIG_KEYS = set(GatewayConfig().to_dict())


def load_gateway_config(
    path: str | Path | None = None,
    env: Mapping[str, str] | None = None,
) -> GatewayConfig:
    """Build a config from an optional JSON file plus environment overrides.

    Environment variables win over the file: LIGHTOPS_BACKEND_URL,
    LIGHTOPS_BACKEND_TOKEN (names the variable holding the backend
    credential), LIGHTOPS_DATA_DIR, LIGHTOPS_PORT, LIGHTOPS_AUTH_TOKEN.
    """
    env = os.environ if env is None else env
    values: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            raw = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {p} is not valid JSON: {exc.msg}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {p} must hold a JSON object")
        unknown = set(raw) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"config file {p}: unknown keys {sorted(unknown)}")
        values.update(raw)

    if env.get(ENV_BACKEND_URL):
        values["backend_url"] = env[ENV_BACKEND_URL]
    if env.get(ENV_DATA_DIR):
        values["data_dir"] = env[ENV_DATA_DIR]
    if env.get(ENV_PORT):
        try:
            values["port"] = int(env[ENV_PORT])
        except ValueError as exc:
            raise ConfigError(f"{ENV_PORT} must be an integer") from exc
    if env.get(ENV_AUTH_TOKEN):
        values["auth_token"] = env[ENV_AUTH_TOKEN]

    if "data_dir" in values:
        values["data_dir"] = Path(values["data_dir"])
    if "port" in values and not isinstance(values["port"], int):
        raise ConfigError("port must be an integer")
    try:
        return GatewayConfig(**values)
    except TypeError as exc:
        raise ConfigError(f"bad gateway config: {exc}") from exc


# ---------------------------------------------------------------------------
# Persistence helpers


def _append_jsonl(path: Path, obj: dict) -> None:
    with path.open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, sort_keys=True) + "\n")
        fh.flush()


def _read_jsonl(path: Path) -> list[dict]:
    if not path.is_file():
        return []
    rows = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


# ---------------------------------------------------------------------------
# Tickets


TICKET_PENDING = "PENDING"
TICKET_APPROVED = "APPROVED"
TICKET_REJECTED = "REJECTED"
_TICKET_DECISIONS = (TICKET_APPROVED, TICKET_REJECTED)


@dataclass
class ApprovalTicket:
    """One approval request; transitions PENDING -> APPROVED/REJECTED once."""

    ticket_id: str
    session_id: str
    job_id: str
    action: str
    description: str
    proposed: dict
    status: str = TICKET_PENDING
    note: str = ""
    resolved: threading.Event = field(default_factory=threading.Event, repr=False)

    def to_dict(self) -> dict:
        return {
            "ticket_id": self.ticket_id,
            "session_id": self.session_id,
            "job_id": self.job_id,
            "action": self.action,
            "description": self.description,
            "proposed": self.proposed,
            "status": self.status,
            "note": self.note,
        }


class _SessionApprovalGate(ApprovalGate):
    """Approval gate that parks the run thread on an HTTP-resolved ticket."""

    def __init__(self, manager: "SessionManager", session_id: str, job_id: str):
        self._manager = manager
        self._session_id = session_id
        self._job_id = job_id

    def open(self, request: ApprovalRequest) -> TicketHandle:
        ticket = self._manager._open_ticket(self._session_id, self._job_id, request)
        return TicketHandle(
            ticket.ticket_id,
            lambda: self._manager._await_ticket(ticket),
        )


# ---------------------------------------------------------------------------
# Jobs and sessions


RUNNING = "RUNNING"


@dataclass
class JobInfo:
    job_id: str
    query: str
    submitted_ms: int
    status: str = RUNNING
    finished_ms: int | None = None
    error: str = ""

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "query": self.query,
            "submitted_ms": self.submitted_ms,
            "status": self.status,
            "finished_ms": self.finished_ms,
            "error": self.error,
        }


class ManagedSession:
    """Server-side wrapper around one AgentSession.

    Holds the append-only file handles, the per-session seq counter, the
    in-flight flag, and the live event subscribers.  All mutation goes
    through the owning SessionManager while holding ``lock``.
    """

    def __init__(self, session_id: str, root: Path, agent_session: AgentSession, topology_ref: str):
        self.session_id = session_id
        self.root = root
        self.agent_session = agent_session
        self.topology_ref = topology_ref
        self.lock = threading.RLock()
        self.next_seq = 0
        self.busy_job: str | None = None
        self.jobs: dict[str, JobInfo] = {}
        self.job_order: list[str] = []
        self.subscribers: list[queue.SimpleQueue] = []

    # -- paths ---------------------------------------------------------------

    @property
    def meta_path(self) -> Path:
        return self.root / "meta.json"

    @property
    def transcript_path(self) -> Path:
        return self.root / "transcript.jsonl"

    @property
    def tickets_path(self) -> Path:
        return self.root / "tickets.jsonl"

    @property
    def jobs_path(self) -> Path:
        return self.root / "jobs.jsonl"

    @property
    def alarms_path(self) -> Path:
        return self.root / "alarms.jsonl"

    # -- events ----------------------------------------------------------------

    def publish(self, event: dict) -> None:
        with self.lock:
            targets = list(self.subscribers)
        for q in targets:
            q.put(event)

    def subscribe(self) -> queue.SimpleQueue:
        q: queue.SimpleQueue = queue.SimpleQueue()
        with self.lock:
            self.subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.SimpleQueue) -> None:
        with self.lock:
            if q in self.subscribers:
                self.subscribers.remove(q)

    def stored_steps(self) -> list[dict]:
        return _read_jsonl(self.transcript_path)

    def last_finished_job(self) -> JobInfo | None:
        for job_id in reversed(self.job_order):
            info = self.jobs[job_id]
            if info.status != RUNNING:
                return info
        return None


def _terminal_event(info: JobInfo) -> dict:
    name = "failed" if info.status == RunStatus.FAILED.value else "final"
    return {
        "event": name,
        "job_id": info.job_id,
        "status": info.status,
        "error": info.error,
    }


class SessionManager:
    """Owns every session, ticket, and eval run behind the HTTP surface."""

    def __init__(
        self,
        config: GatewayConfig,
        backend: LlmBackend | None = None,
        clock: Callable[[], int] = system_clock,
    ):
        self.config = config
        self.clock = clock
        self._backend = backend
        self._lock = threading.RLock()
        self._sessions: dict[str, ManagedSession] = {}
        self._tickets: dict[str, ApprovalTicket] = {}
        self._eval_runs: dict[str, dict] = {}
        self._threads: list[threading.Thread] = []
        self.sessions_dir = Path(config.data_dir) / "sessions"
        self.eval_dir = Path(config.data_dir) / "eval"
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self.eval_dir.mkdir(parents=True, exist_ok=True)
        self._knowledge = load_knowledge_store()
        self._manual = load_manual_store()
        self._rulebase = load_rulebase()
        self._load()

    # -- backend ---------------------------------------------------------------

    def backend(self) -> LlmBackend:
        if self._backend is not None:
            return self._backend
        if self.config.backend_url:
            self._backend = HttpBackend(
                self.config.backend_url,
                self.config.backend_model,
                token_env=self.config.backend_token_env,
            )
        else:
            self._backend = load_backend_fixture()
        return self._backend

    # -- topology / session creation -------------------------------------------

    def _resolve_topology(self, ref: str) -> NetworkTopology:
        if ref == "bundled":
            return load_bundled_topology()
        path = Path(ref)
        if not path.is_file():
            raise TopologyNotFoundError(f"topology not found: {ref}")
        try:
            return load_topology(path)
        except (ParseError, ValidationError) as exc:
            raise TopologyNotFoundError(f"topology {ref} failed to load: {exc}") from exc

    def create_session(
        self,
        topology_ref: str | None = None,
        demands: Sequence[dict] | None = None,
    ) -> dict:
        ref = topology_ref or self.config.default_topology
        topology = self._resolve_topology(ref)
        parsed = [parse_demand(d, where=f"demand[{i}]") for i, d in enumerate(demands or [])]
        session_id = f"s-{uuid.uuid4().hex[:12]}"
        root = self.sessions_dir / session_id
        root.mkdir(parents=True)
        agent_session = AgentSession(
            topology=topology,
            demands=parsed,
            knowledge=self._knowledge,
            manual=self._manual,
            rulebase=self._rulebase,
        )
        managed = ManagedSession(session_id, root, agent_session, ref)
        meta = {
            "session_id": session_id,
            "topology": ref,
            "demands": demands_to_dict(parsed),
            "created_ms": self.clock(),
        }
        managed.meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        with self._lock:
            self._sessions[session_id] = managed
        return self.describe_session(session_id)

    def get(self, session_id: str) -> ManagedSession:
        with self._lock:
            managed = self._sessions.get(session_id)
        if managed is None:
            raise SessionNotFoundError(f"unknown session: {session_id}")
        return managed

    def list_sessions(self) -> list[dict]:
        with self._lock:
            ids = sorted(self._sessions)
        return [self.describe_session(sid) for sid in ids]

    def describe_session(self, session_id: str) -> dict:
        managed = self.get(session_id)
        with managed.lock:
            sess = managed.agent_session
            return {
                "session_id": managed.session_id,
                "topology": managed.topology_ref,
                "node_count": len(sess.topology.nodes) if sess.topology else 0,
                "link_count": len(sess.topology.links) if sess.topology else 0,
                "demand_count": len(sess.demands),
                "alarm_count": len(sess.alarms),
                "state_digest": sess.state_digest(),
                "busy": managed.busy_job is not None,
                "next_seq": managed.next_seq,
                "jobs": [managed.jobs[j].to_dict() for j in managed.job_order],
            }

    # -- restart replay ----------------------------------------------------------

    def _load(self) -> None:
        for root in sorted(self.sessions_dir.iterdir()) if self.sessions_dir.is_dir() else []:
            if not root.is_dir() or not (root / "meta.json").is_file():
                continue
            try:
                self._load_session(root)
            except Exception:
                logger.exception("failed to replay session dir %s", root)
        for run_dir in sorted(self.eval_dir.iterdir()) if self.eval_dir.is_dir() else []:
            status_path = run_dir / "status.json"
            if run_dir.is_dir() and status_path.is_file():
                try:
                    status = json.loads(status_path.read_text(encoding="utf-8"))
                    self._eval_runs[run_dir.name] = status
                except json.JSONDecodeError:
                    logger.warning("ignoring malformed eval status in %s", run_dir)

    def _load_session(self, root: Path) -> None:
        meta = json.loads((root / "meta.json").read_text(encoding="utf-8"))
        session_id = meta["session_id"]
        ref = meta.get("topology", "bundled")
        try:
            topology = self._resolve_topology(ref)
        except TopologyNotFoundError:
            logger.warning("session %s topology %s unavailable; state endpoints degraded", session_id, ref)
            topology = None
        demands = [parse_demand(d, where="meta demand") for d in meta.get("demands", [])]
        agent_session = AgentSession(
            topology=topology,
            demands=demands,
            knowledge=self._knowledge,
            manual=self._manual,
            rulebase=self._rulebase,
        )
        for row in _read_jsonl(root / "alarms.jsonl"):
            try:
                agent_session.alarms.append(alarms_mod.parse_alarm_record(row, where="replay"))
            except (ParseError, ValidationError):
                logger.warning("session %s: skipping malformed persisted alarm", session_id)

        managed = ManagedSession(session_id, root, agent_session, ref)
        steps = managed.stored_steps()
        if steps:
            managed.next_seq = max(int(r["seq"]) for r in steps) + 1

        finished: dict[str, dict] = {}
        submitted: dict[str, dict] = {}
        for row in _read_jsonl(managed.jobs_path):
            if row.get("event") == "submitted":
                submitted[row["job_id"]] = row
            elif row.get("event") == "finished":
                finished[row["job_id"]] = row
        for job_id, row in submitted.items():
            info = JobInfo(
                job_id=job_id,
                query=row.get("query", ""),
                submitted_ms=int(row.get("ts_ms", 0)),
            )
            end = finished.get(job_id)
            if end is None:
                info.status = RunStatus.FAILED.value
                info.error = "interrupted by service restart"
                info.finished_ms = self.clock()
                _append_jsonl(
                    managed.jobs_path,
                    {
                        "event": "finished",
                        "job_id": job_id,
                        "status": info.status,
                        "error": info.error,
                        "ts_ms": info.finished_ms,
                    },
                )
            else:
                info.status = end.get("status", RunStatus.FAILED.value)
                info.error = end.get("error", "")
                info.finished_ms = int(end.get("ts_ms", 0))
            managed.jobs[job_id] = info
            managed.job_order.append(job_id)
        managed.job_order.sort(key=lambda j: managed.jobs[j].submitted_ms)

        latest: dict[str, dict] = {}
        for row in _read_jsonl(managed.tickets_path):
            latest[row["ticket_id"]] = row
        for ticket_id, row in latest.items():
            ticket = ApprovalTicket(
                ticket_id=ticket_id,
                session_id=session_id,
                job_id=row.get("job_id", ""),
                action=row.get("action", ""),
                description=row.get("description", ""),
                proposed=row.get("proposed", {}),
                status=row.get("status", TICKET_PENDING),
                note=row.get("note", ""),
            )
            if ticket.status != TICKET_PENDING:
                ticket.resolved.set()
            self._tickets[ticket.ticket_id] = ticket

        with self._lock:
            self._sessions[session_id] = managed

    # -- query submission ---------------------------------------------------------

    def submit_query(self, session_id: str, query: str, condition: str | None = None) -> dict:
        managed = self.get(session_id)
        if not query or not query.strip():
            raise ConfigError("query must be non-empty")
        cond: ConfigCondition | None = None
        if condition:
            try:
                cond = ConfigCondition(condition)
            except ValueError as exc:
                raise ConfigError(
                    f"unknown condition {condition!r}; expected one of "
                    f"{[c.value for c in ConfigCondition]}"
                ) from exc
        with managed.lock:
            if managed.busy_job is not None:
                raise BusyError(f"session {session_id} already has job {managed.busy_job} in flight")
            job_id = f"job-{uuid.uuid4().hex[:12]}"
            info = JobInfo(job_id=job_id, query=query, submitted_ms=self.clock())
            managed.jobs[job_id] = info
            managed.job_order.append(job_id)
            managed.busy_job = job_id
        _append_jsonl(
            managed.jobs_path,
            {"event": "submitted", "job_id": job_id, "query": query, "ts_ms": info.submitted_ms},
        )
        thread = threading.Thread(
            target=self._run_job,
            args=(managed, job_id, query, cond),
            name=f"lightops-{job_id}",
            daemon=True,
        )
        with self._lock:
            self._threads.append(thread)
        thread.start()
        return {"job_id": job_id, "session_id": session_id, "status": RUNNING}

    def _agent_for(self, query: str, gate: ApprovalGate, cond: ConfigCondition | None) -> Agent:
        backend = self.backend()
        if cond is not None:
            config = condition_config(cond, query, backend, clock=self.clock, approval_gate=gate)
        else:
            config = AgentConfig(backend=backend, approval_gate=gate, clock=self.clock)
        return Agent(config)

    def _run_job(
        self,
        managed: ManagedSession,
        job_id: str,
        query: str,
        cond: ConfigCondition | None,
    ) -> None:
        def on_record(record: StepRecord) -> None:
            row = {"job_id": job_id, **record.to_dict()}
            with managed.lock:
                managed.next_seq = record.seq + 1
            _append_jsonl(managed.transcript_path, row)
            managed.publish({"event": "step", "job_id": job_id, "data": row})

        gate = _SessionApprovalGate(self, managed.session_id, job_id)
        agent = self._agent_for(query, gate, cond)
        with managed.lock:
            start_seq = managed.next_seq
        transcript = Transcript(clock=self.clock, start_seq=start_seq, listener=on_record)
        status = RunStatus.FAILED.value
        error = ""
        try:
            result = agent.run(query, managed.agent_session, transcript, job_id=job_id)
            status = result.status.value
            error = result.error or ""
        except Exception as exc:  # noqa: BLE001 - the job row must always close
            logger.exception("job %s crashed outside the agent", job_id)
            error = str(exc)
        finally:
            info = managed.jobs[job_id]
            info.status = status
            info.error = error
            info.finished_ms = self.clock()
            _append_jsonl(
                managed.jobs_path,
                {
                    "event": "finished",
                    "job_id": job_id,
                    "status": status,
                    "error": error,
                    "ts_ms": info.finished_ms,
                },
            )
            with managed.lock:
                managed.busy_job = None
            managed.publish(_terminal_event(info))

    # -- approvals ------------------------------------------------------------------

    def _open_ticket(self, session_id: str, job_id: str, request: ApprovalRequest) -> ApprovalTicket:
        managed = self.get(session_id)
        ticket = ApprovalTicket(
            ticket_id=f"tk-{uuid.uuid4().hex[:12]}",
            session_id=session_id,
            job_id=job_id,
            action=request.action,
            description=request.description,
            proposed=dict(request.proposed),
        )
        with self._lock:
            self._tickets[ticket.ticket_id] = ticket
        _append_jsonl(managed.tickets_path, ticket.to_dict())
        return ticket

    def _await_ticket(self, ticket: ApprovalTicket) -> tuple[str, str]:
        resolved = ticket.resolved.wait(timeout=self.config.approval_timeout_s)
        if not resolved:
            with self._lock:
                if ticket.status == TICKET_PENDING:
                    ticket.status = TICKET_REJECTED
                    ticket.note = (
                        f"approval window expired after {self.config.approval_timeout_s:g}s"
                    )
                    ticket.resolved.set()
                    managed = self._sessions.get(ticket.session_id)
            if managed is not None:
                _append_jsonl(managed.tickets_path, ticket.to_dict())
        return ticket.status, ticket.note

    def resolve_approval(self, ticket_id: str, decision: str, note: str = "") -> dict:
        if decision not in _TICKET_DECISIONS:
            raise ConfigError(
                f"decision must be one of {list(_TICKET_DECISIONS)}, got {decision!r}"
            )
        with self._lock:
            ticket = self._tickets.get(ticket_id)
            if ticket is None:
                raise UnknownTicketError(f"unknown ticket: {ticket_id}")
            if ticket.status != TICKET_PENDING:
                raise AlreadyResolvedError(
                    f"ticket {ticket_id} is already {ticket.status}"
                )
            ticket.status = decision
            ticket.note = note
        managed = self.get(ticket.session_id)
        _append_jsonl(managed.tickets_path, ticket.to_dict())
        ticket.resolved.set()
        return ticket.to_dict()

    def ticket(self, ticket_id: str) -> dict:
        with self._lock:
            ticket = self._tickets.get(ticket_id)
        if ticket is None:
            raise UnknownTicketError(f"unknown ticket: {ticket_id}")
        return ticket.to_dict()

    def list_tickets(self, session_id: str | None = None) -> list[dict]:
        with self._lock:
            tickets = list(self._tickets.values())
        if session_id is not None:
            tickets = [t for t in tickets if t.session_id == session_id]
        return [t.to_dict() for t in sorted(tickets, key=lambda t: t.ticket_id)]

    # -- alarms -----------------------------------------------------------------------

    def ingest_alarms(self, session_id: str, records: Sequence[dict] | None = None, text: str = "") -> dict:
        managed = self.get(session_id)
        if records is not None and text:
            raise ConfigError("pass either records or text, not both")
        if records is not None:
            blob = "\n".join(json.dumps(r) for r in records)
        else:
            blob = text
        parsed, errors = alarms_mod.parse_alarm_lines(blob)
        with managed.lock:
            managed.agent_session.alarms.extend(parsed)
        for alarm in parsed:
            _append_jsonl(managed.alarms_path, alarm.to_dict())
        return {
            "session_id": session_id,
            "accepted": len(parsed),
            "errors": errors,
            "alarm_count": len(managed.agent_session.alarms),
        }

    # -- transcripts and events ----------------------------------------------------------

    def transcript(self, session_id: str, job_id: str) -> dict:
        managed = self.get(session_id)
        with managed.lock:
            info = managed.jobs.get(job_id)
        if info is None:
            raise UnknownJobError(f"session {session_id} has no job {job_id}")
        records = [r for r in managed.stored_steps() if r.get("job_id") == job_id]
        return {
            "session_id": session_id,
            "job_id": job_id,
            "status": info.status,
            "query": info.query,
            "error": info.error,
            "records": records,
        }

    def events(self, session_id: str, from_seq: int = 0, poll_s: float = 0.2) -> Iterator[dict]:
        """Yield step events with seq >= from_seq, then follow the live run.

        Replays the persisted transcript first, deduplicates against the
        live feed, and closes after a terminal event arrives while the
        session is idle.
        """
        managed = self.get(session_id)
        q = managed.subscribe()
        emitted_terminals: set[str] = set()
        try:
            max_seq = -1
            for row in managed.stored_steps():
                seq = int(row["seq"])
                max_seq = max(max_seq, seq)
                if seq >= from_seq:
                    yield {"event": "step", "job_id": row.get("job_id", ""), "data": row}
            with managed.lock:
                busy = managed.busy_job is not None
                last = managed.last_finished_job()
            if not busy:
                if last is not None:
                    emitted_terminals.add(last.job_id)
                    yield _terminal_event(last)
                    return
                if max_seq >= 0:
                    # Only interrupted history: nothing is running and no
                    # job row closed, so there is nothing more to wait for.
                    return
            while True:
                try:
                    event = q.get(timeout=poll_s)
                except queue.Empty:
                    continue
                if event["event"] == "step":
                    if int(event["data"]["seq"]) <= max_seq:
                        continue
                    max_seq = int(event["data"]["seq"])
                    if int(event["data"]["seq"]) >= from_seq:
                        yield event
                    continue
                job_id = event.get("job_id", "")
                if job_id in emitted_terminals:
                    continue
                emitted_terminals.add(job_id)
                yield event
                with managed.lock:
                    busy = managed.busy_job is not None
                if not busy:
                    return
        finally:
            managed.unsubscribe(q)

    # -- network state ----------------------------------------------------------------------

    def network_state(self, session_id: str) -> dict:
        managed = self.get(session_id)
        with managed.lock:
            sess = managed.agent_session
            state = {
                "session_id": session_id,
                "topology": managed.topology_ref,
                "node_count": len(sess.topology.nodes) if sess.topology else 0,
                "link_count": len(sess.topology.links) if sess.topology else 0,
                "demands": demands_to_dict(sess.demands),
                "alarm_count": len(sess.alarms),
                "state_digest": sess.state_digest(),
                "busy": managed.busy_job is not None,
            }
            if sess.last_allocation is not None:
                state["allocation"] = {
                    "blocking_probability": sess.last_allocation.blocking_probability,
                    "utilization": sess.last_allocation.utilization,
                }
        return state

    def gsnr_report(self, session_id: str, service_id: str) -> dict:
        managed = self.get(session_id)
        with managed.lock:
            sess = managed.agent_session
            demands = list(sess.demands)
            topology = sess.topology
            thresholds = sess.thresholds
            k = sess.provision_k
        if topology is None:
            raise TopologyNotFoundError(f"session {session_id} has no loadable topology")
        if not any(d.id == service_id for d in demands):
            raise UnknownServiceError(f"session {session_id} has no service {service_id}")
        report = netops.provision(demands, topology, k=k)
        alloc = report.allocation(service_id)
        if alloc.blocked:
            return {
                "session_id": session_id,
                "service": service_id,
                "blocked": True,
            }
        gsnr = netops.demand_gsnr_reports(demands, report, topology, thresholds=thresholds)
        return {
            "session_id": session_id,
            "service": service_id,
            "blocked": False,
            "allocation": alloc.to_dict(),
            "report": gsnr[service_id].to_dict(),
        }

    # -- evaluation ---------------------------------------------------------------------------

    def start_eval(
        self,
        tasks: Sequence[str] | None = None,
        conditions: Sequence[str] | None = None,
        n_per_cell: int = 20,
        seed: int = 11,
    ) -> dict:
        try:
            task_values = [EvalTask(t) for t in tasks] if tasks else None
            cond_values = [ConfigCondition(c) for c in conditions] if conditions else None
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if n_per_cell < 1:
            raise ConfigError("n_per_cell must be >= 1")
        run_id = f"ev-{uuid.uuid4().hex[:12]}"
        run_dir = self.eval_dir / run_id
        run_dir.mkdir(parents=True)
        status = {
            "run_id": run_id,
            "status": RUNNING,
            "params": {
                "tasks": [t.value for t in task_values] if task_values else "all",
                "conditions": [c.value for c in cond_values] if cond_values else "all",
                "n_per_cell": n_per_cell,
                "seed": seed,
            },
            "error": "",
        }
        with self._lock:
            self._eval_runs[run_id] = status
        self._write_eval_status(run_id)

        def work() -> None:
            try:
                report = run_matrix(
                    tasks=task_values,
                    conditions=cond_values,
                    n_per_cell=n_per_cell,
                    seed=seed,
                )
                report.write(run_dir)
                status["status"] = "DONE"
            except Exception as exc:  # noqa: BLE001 - surface the failure in the run row
                logger.exception("eval run %s failed", run_id)
                status["status"] = "FAILED"
                status["error"] = str(exc)
            finally:
                self._write_eval_status(run_id)

        thread = threading.Thread(target=work, name=f"lightops-{run_id}", daemon=True)
        with self._lock:
            self._threads.append(thread)
        thread.start()
        return dict(status)

    def _write_eval_status(self, run_id: str) -> None:
        with self._lock:
            status = dict(self._eval_runs[run_id])
        path = self.eval_dir / run_id / "status.json"
        path.write_text(json.dumps(status, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def eval_run(self, run_id: str) -> dict:
        with self._lock:
            status = self._eval_runs.get(run_id)
        if status is None:
            raise UnknownEvalRunError(f"unknown eval run: {run_id}")
        out = dict(status)
        report_path = self.eval_dir / run_id / "report.json"
        if out["status"] == "DONE" and report_path.is_file():
            out["report"] = json.loads(report_path.read_text(encoding="utf-8"))
        return out

    def list_eval_runs(self) -> list[dict]:
        with self._lock:
            return [dict(v) for _, v in sorted(self._eval_runs.items())]

    # -- lifecycle ----------------------------------------------------------------------------

    def join_threads(self, timeout_s: float = 30.0) -> None:
        """Wait for in-flight job/eval threads; test and shutdown helper."""
        with self._lock:
            threads = list(self._threads)
        for t in threads:
            t.join(timeout=timeout_s)


# ---------------------------------------------------------------------------
# HTTP surface


def _sse_frame(event: dict) -> str:
    name = event["event"]
    data = json.dumps(event, sort_keys=True)
    if name == "step":
        return f"id: {event['data']['seq']}\nevent: {name}\ndata: {data}\n\n"
    return f"event: {name}\ndata: {data}\n\n"


def create_app(
    config: GatewayConfig | None = None,
    manager: SessionManager | None = None,
):
    """FastAPI application over a SessionManager.

    Passing an existing manager lets tests drive the same state through
    HTTP and direct calls; otherwise one is built from the config.
    """
    if manager is None:
        manager = SessionManager(config or GatewayConfig())
    cfg = manager.config

    app = FastAPI(title="lightops gateway", version="0.1.0")
    app.state.manager = manager

    def require_auth(request: Request) -> None:
        if not cfg.auth_token:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {cfg.auth_token}":
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    guarded = [Depends(require_auth)]

    def http_error(exc: Exception) -> HTTPException:
        if isinstance(exc, (SessionNotFoundError, TopologyNotFoundError, UnknownTicketError,
                            UnknownJobError, UnknownServiceError, UnknownEvalRunError)):
            return HTTPException(status_code=404, detail=str(exc))
        if isinstance(exc, (BusyError, AlreadyResolvedError)):
            return HTTPException(status_code=409, detail=str(exc))
        if isinstance(exc, (ConfigError, ParseError, ValidationError, ValueError)):
            return HTTPException(status_code=400, detail=str(exc))
        raise exc

    @app.get("/api/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/api/sessions", dependencies=guarded, status_code=201)
    def post_session(body: dict = Body(default={})) -> dict:
        try:
            return manager.create_session(
                topology_ref=body.get("topology"),
                demands=body.get("demands"),
            )
        except Exception as exc:  # noqa: BLE001
            raise http_error(exc) from exc

    @app.get("/api/sessions", dependencies=guarded)
    def get_sessions() -> dict:
        return {"sessions": manager.list_sessions()}

    @app.get("/api/sessions/{session_id}", dependencies=guarded)
    def get_session(session_id: str) -> dict:
        try:
            return manager.describe_session(session_id)
        except Exception as exc:  # noqa: BLE001
            raise http_error(exc) from exc

    @app.post("/api/sessions/{session_id}/query", dependencies=guarded, status_code=202)
    def post_query(session_id: str, body: dict = Body(...)) -> dict:
        try:
            return manager.submit_query(
                session_id,
                str(body.get("query", "")),
                condition=body.get("condition"),
            )
        except Exception as exc:  # noqa: BLE001
            raise http_error(exc) from exc

    @app.get("/api/sessions/{session_id}/events", dependencies=guarded)
    def get_events(session_id: str, from_seq: int = 0):
        try:
            manager.get(session_id)
        except Exception as exc:  # noqa: BLE001
            raise http_error(exc) from exc

        def stream():
            for event in manager.events(session_id, from_seq=from_seq):
                yield _sse_frame(event)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/api/sessions/{session_id}/transcripts/{job_id}", dependencies=guarded)
    def get_transcript(session_id: str, job_id: str) -> dict:
        try:
            return manager.transcript(session_id, job_id)
        except Exception as exc:  # noqa: BLE001
            raise http_error(exc) from exc

    @app.post("/api/sessions/{session_id}/alarms", dependencies=guarded)
    def post_alarms(session_id: str, body: dict = Body(...)) -> dict:
        try:
            return manager.ingest_alarms(
                session_id,
                records=body.get("records"),
                text=str(body.get("text", "")),
            )
        except Exception as exc:  # noqa: BLE001
            raise http_error(exc) from exc

    @app.get("/api/sessions/{session_id}/tickets", dependencies=guarded)
    def get_session_tickets(session_id: str) -> dict:
        try:
            manager.get(session_id)
        except Exception as exc:  # noqa: BLE001
            raise http_error(exc) from exc
        return {"tickets": manager.list_tickets(session_id)}

    @app.get("/api/network/{session_id}/state", dependencies=guarded)
    def get_network_state(session_id: str) -> dict:
        try:
            return manager.network_state(session_id)
        except Exception as exc:  # noqa: BLE001
            raise http_error(exc) from exc

    @app.get("/api/network/{session_id}/gsnr", dependencies=guarded)
    def get_network_gsnr(session_id: str, service: str) -> dict:
        try:
            return manager.gsnr_report(session_id, service)
        except Exception as exc:  # noqa: BLE001
            raise http_error(exc) from exc

    @app.get("/api/approvals/{ticket_id}", dependencies=guarded)
    def get_approval(ticket_id: str) -> dict:
        try:
            return manager.ticket(ticket_id)
        except Exception as exc:  # noqa: BLE001
            raise http_error(exc) from exc

    @app.post("/api/approvals/{ticket_id}", dependencies=guarded)
    def post_approval(ticket_id: str, body: dict = Body(...)) -> dict:
        try:
            return manager.resolve_approval(
                ticket_id,
                str(body.get("decision", "")),
                note=str(body.get("note", "")),
            )
        except Exception as exc:  # noqa: BLE001
            raise http_error(exc) from exc

    @app.post("/api/eval/run", dependencies=guarded, status_code=202)
    def post_eval(body: dict = Body(default={})) -> dict:
        try:
            return manager.start_eval(
                tasks=body.get("tasks"),
                conditions=body.get("conditions"),
                n_per_cell=int(body.get("n_per_cell", 20)),
                seed=int(body.get("seed", 11)),
            )
        except Exception as exc:  # noqa: BLE001
            raise http_error(exc) from exc

    @app.get("/api/eval/runs", dependencies=guarded)
    def get_eval_runs() -> dict:
        return {"runs": manager.list_eval_runs()}

    @app.get("/api/eval/runs/{run_id}", dependencies=guarded)
    def get_eval_run(run_id: str) -> dict:
        try:
            return manager.eval_run(run_id)
        except Exception as exc:  # noqa: BLE001
            raise http_error(exc) from exc

    return app
