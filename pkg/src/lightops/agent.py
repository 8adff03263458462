"""Agent orchestration: prompt assembly, language-model backends, tool
dispatch, and the five-step run loop (intent analysis, task decomposition,
resource selection, problem solving, final answer).

The backend writes narrative text; every number that matters is computed by
the domain tools and carried verbatim in structured payloads, so downstream
consumers never parse prose.  Runs that reach a mutating tool suspend on an
approval gate and only touch session state after an APPROVED resolution.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import re
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Mapping, Sequence

import httpx

from . import alarms as alarms_mod
from . import netops, rag
from .errors import (
    BackendError,
    ConfigError,
    IncompletePlanError,
    ParseError,
    ToolExecutionError,
    UnknownSubtaskError,
    ValidationError,
)
from .netmodel import NetworkTopology, ServiceDemand, SpectrumGrid, demands_to_dict
from .qot import DEFAULT_THRESHOLDS, ModulationThresholds
from .serde import content_digest

logger = logging.getLogger(__name__)

# Fixed chain-of-thought cue appended to the instruction for COT variants.
COT_CUE = "Let's think step by step."

DEFAULT_TOKEN_ENV = "LIGHTOPS_BACKEND_TOKEN"


def system_clock() -> int:
    return int(time.time() * 1000)


class LogicalClock:
    """Deterministic millisecond clock for reproducible transcripts."""

    def __init__(self, start: int = 0, step: int = 1):
        self._next = start
        self._step = step

    def __call__(self) -> int:
        value = self._next
        self._next += self._step
        return value


# ---------------------------------------------------------------------------
# Prompt machinery


class Technique(Enum):
    ZERO_SHOT = "ZERO_SHOT"
    FEW_SHOT = "FEW_SHOT"
    COT = "COT"
    COT_SELF_CONSISTENCY = "COT_SELF_CONSISTENCY"


@dataclass(frozen=True)
class TechniqueConfig:
    technique: Technique = Technique.ZERO_SHOT
    n_examples: int = 2
    n_paths: int = 3

    def __post_init__(self):
        if self.n_examples < 1:
            raise ConfigError(f"n_examples must be >= 1, got {self.n_examples}")
        if self.technique is Technique.COT_SELF_CONSISTENCY:
            if self.n_paths < 3 or self.n_paths % 2 == 0:
                raise ConfigError(
                    f"n_paths must be odd and >= 3 for self-consistency, got {self.n_paths}"
                )


@dataclass(frozen=True)
class PromptTemplate:
    """The four prompt elements; omitted ones render nothing."""

    instruction: str
    context: str = ""
    input_data: str = ""
    output_indicator: str = ""

    def __post_init__(self):
        if not self.instruction:
            raise ValidationError("prompt instruction must be non-empty")


@dataclass(frozen=True)
class FewShotExample:
    question: str
    answer: str


def render_prompt(
    template: PromptTemplate,
    technique_config: TechniqueConfig,
    retrieved: Sequence[rag.RetrievalHit] = (),
    examples: Sequence[FewShotExample] = (),
) -> str:
    """Assemble the prompt: instruction (with CoT cue for COT variants),
    context plus source-prefixed retrieved chunks, few-shot examples
    (FEW_SHOT only), input data, output indicator.  Blocks join with blank
    lines; absent elements produce no placeholder text."""
    technique = technique_config.technique
    instruction = template.instruction
    if technique in (Technique.COT, Technique.COT_SELF_CONSISTENCY):
        instruction = f"{instruction}\n{COT_CUE}"
    parts = [instruction]

    context_lines = []
    if template.context:
        context_lines.append(template.context)
    for hit in retrieved:
        context_lines.append(f"[source:{hit.chunk.ref}] {hit.chunk.text}")
    if context_lines:
        parts.append("\n".join(context_lines))

    if technique is Technique.FEW_SHOT:
        if not examples:
            raise ConfigError("FEW_SHOT requires at least one example")
        shown = examples[: technique_config.n_examples]
        parts.append("\n\n".join(f"Q: {e.question}\nA: {e.answer}" for e in shown))

    if template.input_data:
        parts.append(template.input_data)
    if template.output_indicator:
        parts.append(template.output_indicator)
    return "\n\n".join(parts)


def self_consistency_vote(answers: Sequence[str]) -> str:
    """Majority vote over normalized answers (trimmed, whitespace-collapsed,
    lowercased); ties go to the lowest path index.  Returns the winning
    class's earliest original answer."""
    if not answers:
        raise ConfigError("self-consistency vote needs at least one answer")
    first_index: dict[str, int] = {}
    counts: dict[str, int] = {}
    for i, answer in enumerate(answers):
        norm = re.sub(r"\s+", " ", answer.strip()).lower()
        if norm not in first_index:
            first_index[norm] = i
        counts[norm] = counts.get(norm, 0) + 1
    best = min(counts, key=lambda n: (-counts[n], first_index[n]))
    return answers[first_index[best]]


# ---------------------------------------------------------------------------
# Backends


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str


@dataclass(frozen=True)
class LlmRequest:
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_tokens: int = 1024
    seed: int | None = None


class LlmBackend:
    """Interface: complete() maps a chat request to one text reply."""

    id: str = "backend"
    deterministic: bool = False

    def complete(self, request: LlmRequest) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class ScriptedEntry:
    response: str
    match: str | None = None  # substring; "" matches everything
    pattern: str | None = None  # regex, searched with DOTALL


class ScriptedBackend(LlmBackend):
    """Deterministic fixture backend: an ordered (matcher, response) table.

    The first entry whose substring or regex matches the concatenated
    message text wins; an unmatched request yields the empty string.
    """

    id = "scripted"
    deterministic = True

    def __init__(self, entries: Sequence[ScriptedEntry]):
        self._entries = list(entries)
        self._compiled = [
            re.compile(e.pattern, re.DOTALL) if e.pattern is not None else None
            for e in entries
        ]

    def complete(self, request: LlmRequest) -> str:
        text = "\n".join(m.content for m in request.messages)
        for entry, compiled in zip(self._entries, self._compiled):
            if compiled is not None:
                if compiled.search(text):
                    return entry.response
            elif entry.match is not None and entry.match in text:
                return entry.response
        return ""


def load_scripted_fixture(path) -> ScriptedBackend:
    """Load a JSON list of {match|pattern, response} entries."""
    try:
        raw = json.loads(open(path, encoding="utf-8").read())
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(raw, list):
        raise ParseError(f"{path}: expected a list of entries")
    entries = []
    for i, item in enumerate(raw):
        where = f"entries[{i}]"
        if not isinstance(item, dict) or "response" not in item:
            raise ParseError(f"{where}: expected an object with a 'response'")
        unknown = set(item) - {"match", "pattern", "response"}
        if unknown:
            raise ParseError(f"{where}: unknown key(s) {', '.join(sorted(unknown))}")
        if ("match" in item) == ("pattern" in item):
            raise ParseError(f"{where}: exactly one of 'match' or 'pattern' required")
        entries.append(
            ScriptedEntry(
                response=item["response"],
                match=item.get("match"),
                pattern=item.get("pattern"),
            )
        )
    return ScriptedBackend(entries)


class HttpBackend(LlmBackend):
    """Chat-completions HTTP backend.

    Auth comes from a bearer-token environment variable.  Transport failures
    retry twice with backoff; HTTP error statuses (including 4xx) do not
    retry.
    """

    id = "http"
    deterministic = False

    def __init__(
        self,
        url: str,
        model: str,
        token_env: str = DEFAULT_TOKEN_ENV,
        timeout_s: float = 30.0,
        max_retries: int = 2,
        transport: httpx.BaseTransport | None = None,
    ):
        self.url = url
        self.model = model
        self.token_env = token_env
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self._transport = transport

    def complete(self, request: LlmRequest) -> str:
        body = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.seed is not None:
            body["seed"] = request.seed
        headers = {}
        token = os.environ.get(self.token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                with httpx.Client(
                    timeout=self.timeout_s, transport=self._transport
                ) as client:
                    response = client.post(self.url, json=body, headers=headers)
                if response.status_code >= 400:
                    raise BackendError(
                        f"backend returned HTTP {response.status_code}: "
                        f"{response.text[:200]}"
                    )
                payload = response.json()
                return payload["choices"][0]["message"]["content"]
            except BackendError:
                raise
            except httpx.TransportError as exc:
                last_error = exc
                if attempt < self.max_retries:
                    time.sleep(0.2 * (attempt + 1))
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise BackendError(f"malformed backend reply: {exc}") from exc
        raise BackendError(f"transport failed after retries: {last_error}")


# ---------------------------------------------------------------------------
# Plans, transcripts, sessions


class TaskKind(Enum):
    ALARM_ANALYSIS = "ALARM_ANALYSIS"
    NETWORK_OPTIMIZATION = "NETWORK_OPTIMIZATION"
    DIRECT_QA = "DIRECT_QA"


class PlanPattern(Enum):
    CASCADED = "CASCADED"
    PARALLEL = "PARALLEL"


@dataclass(frozen=True)
class Subtask:
    id: str
    kind: str
    depends_on: tuple[str, ...] = ()


@dataclass(frozen=True)
class AgentPlan:
    task_kind: TaskKind
    pattern: PlanPattern
    subtasks: tuple[Subtask, ...]

    def __post_init__(self):
        seen: set[str] = set()
        for subtask in self.subtasks:
            for dep in subtask.depends_on:
                if dep not in seen:
                    raise ValidationError(
                        f"subtask {subtask.id} depends on {dep} which is not earlier in the plan"
                    )
            if subtask.id in seen:
                raise ValidationError(f"duplicate subtask id {subtask.id}")
            seen.add(subtask.id)

    def to_dict(self) -> dict:
        return {
            "task_kind": self.task_kind.value,
            "pattern": self.pattern.value,
            "subtasks": [
                {"id": s.id, "kind": s.kind, "depends_on": list(s.depends_on)}
                for s in self.subtasks
            ],
        }


class Step(Enum):
    INTENT_ANALYSIS = "INTENT_ANALYSIS"
    TASK_DECOMPOSITION = "TASK_DECOMPOSITION"
    RESOURCE_SELECTION = "RESOURCE_SELECTION"
    PROBLEM_SOLVING = "PROBLEM_SOLVING"
    FINAL_ANSWER = "FINAL_ANSWER"
    TOOL_CALL = "TOOL_CALL"
    PENDING_APPROVAL = "PENDING_APPROVAL"


@dataclass(frozen=True)
class StepRecord:
    seq: int
    step: Step
    ts_ms: int
    payload: dict

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "step": self.step.value,
            "ts_ms": self.ts_ms,
            "payload": self.payload,
        }


class Transcript:
    """Append-only, strictly seq-ordered run log."""

    def __init__(
        self,
        clock: Callable[[], int] = system_clock,
        start_seq: int = 0,
        listener: Callable[[StepRecord], None] | None = None,
    ):
        self._clock = clock
        self._next_seq = start_seq
        self._listener = listener
        self.records: list[StepRecord] = []

    def append(self, step: Step, payload: dict) -> StepRecord:
        record = StepRecord(
            seq=self._next_seq, step=step, ts_ms=self._clock(), payload=payload
        )
        self._next_seq += 1
        self.records.append(record)
        if self._listener is not None:
            self._listener(record)
        return record

    def to_jsonable(self) -> list[dict]:
        return [r.to_dict() for r in self.records]


@dataclass
class AgentSession:
    """Mutable state the agent operates on.

    The state digest covers the service-demand set (including launch
    powers): the part of the twin a mutating tool may rewrite.  Caches of
    computed results are deliberately excluded.
    """

    topology: NetworkTopology | None = None
    grid: SpectrumGrid | None = None
    demands: list[ServiceDemand] = field(default_factory=list)
    alarms: list[alarms_mod.Alarm] = field(default_factory=list)
    knowledge: rag.VectorStore = field(default_factory=rag.VectorStore)
    manual: rag.VectorStore = field(default_factory=rag.VectorStore)
    rulebase: alarms_mod.Rulebase = alarms_mod.EMPTY_RULEBASE
    thresholds: ModulationThresholds = DEFAULT_THRESHOLDS
    analysis_config: netops.AnalysisConfig = netops.AnalysisConfig()
    power_bounds_dbm: tuple[float, float] = (-4.0, 4.0)
    optimizer_step_db: float = 0.5
    optimizer_max_rounds: int = 50
    provision_k: int = 3
    last_allocation: netops.AllocationReport | None = None
    last_optimization: netops.OptimizationTrace | None = None

    def effective_grid(self) -> SpectrumGrid:
        if self.grid is not None:
            return self.grid
        if self.topology is not None:
            return self.topology.grid
        raise ConfigError("session has neither a grid nor a topology")

    def state_digest(self) -> str:
        return content_digest({"demands": demands_to_dict(self.demands)})

    def apply_launch_profile(self, powers_dbm: Mapping[str, float]) -> None:
        self.demands = [
            replace(d, launch_power_dbm=powers_dbm.get(d.id, d.launch_power_dbm))
            for d in self.demands
        ]


# ---------------------------------------------------------------------------
# Approval gate


@dataclass(frozen=True)
class ApprovalRequest:
    action: str
    description: str
    proposed: dict


class TicketHandle:
    """Opaque handle the agent blocks on while a ticket is pending."""

    def __init__(self, ticket_id: str, waiter: Callable[[], tuple[str, str]]):
        self.ticket_id = ticket_id
        self._waiter = waiter

    def wait(self) -> tuple[str, str]:
        return self._waiter()


class ApprovalGate:
    def open(self, request: ApprovalRequest) -> TicketHandle:
        raise NotImplementedError


class StaticApprovalGate(ApprovalGate):
    """Resolves every ticket immediately with a fixed decision.

    The library default rejects, so nothing mutates unless a caller
    explicitly wires an approving gate.
    """

    def __init__(self, decision: str = "REJECTED", note: str = "no approval channel configured"):
        if decision not in ("APPROVED", "REJECTED"):
            raise ConfigError(f"decision must be APPROVED or REJECTED, got {decision}")
        self.decision = decision
        self.note = note
        self._count = 0

    def open(self, request: ApprovalRequest) -> TicketHandle:
        self._count += 1
        ticket_id = f"ticket-{self._count:04d}"
        return TicketHandle(ticket_id, lambda: (self.decision, self.note))


# ---------------------------------------------------------------------------
# Tool layer


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    mutating: bool = False


TOOLS: dict[str, ToolSpec] = {
    spec.name: spec
    for spec in (
        ToolSpec("alarms.compress", "group an alarm batch into typed events"),
        ToolSpec("alarms.correlate", "correlation matrix over compressed events"),
        ToolSpec("alarms.priority_scores", "rank events by severity, frequency, correlation"),
        ToolSpec("rag.retrieve", "top-k chunks from a vector store"),
        ToolSpec("qot.estimate_gsnr", "per-channel GSNR and margin over a route"),
        ToolSpec("netops.analyze_network", "margin, blocking, and congestion findings"),
        ToolSpec(
            "netops.optimize_launch_power",
            "coordinate-ascent launch-power optimization applied to session demands",
            mutating=True,
        ),
    )
}

SUBTASK_TOOLS: dict[str, tuple[str, ...]] = {
    "compress": ("alarms.compress",),
    "prioritize": ("alarms.correlate", "alarms.priority_scores"),
    "suggest": ("rag.retrieve",),
    "qot_estimate": ("qot.estimate_gsnr",),
    "analyze": ("netops.analyze_network",),
    "optimize": ("netops.optimize_launch_power",),
    "qa": ("rag.retrieve",),
}

PLAN_SHAPES: dict[TaskKind, tuple[str, ...]] = {
    TaskKind.ALARM_ANALYSIS: ("compress", "prioritize", "suggest"),
    TaskKind.NETWORK_OPTIMIZATION: ("qot_estimate", "analyze", "optimize"),
    TaskKind.DIRECT_QA: ("qa",),
}

ALARM_LEXICON = frozenset(
    {"alarm", "alarms", "los", "lof", "fault", "failure", "failures"}
)
OPTIMIZATION_LEXICON = frozenset(
    {
        "qot",
        "gsnr",
        "snr",
        "osnr",
        "margin",
        "margins",
        "optimize",
        "optimization",
        "launch",
        "power",
        "powers",
        "provision",
        "blocking",
        "spectrum",
    }
)

INTENT_PROMPT = (
    "TASK: classify-intent\n"
    "Decide which label fits the request: ALARM_ANALYSIS, NETWORK_OPTIMIZATION,"
    " or DIRECT_QA.\nReply with the label only.\nRequest: {query}"
)
DECOMPOSE_PROMPT = (
    "TASK: decompose\nTask kind: {kind}\n"
    "List the subtasks you would run for this request, one per line."
)
CONFIRM_PROMPT = (
    "TASK: confirm-resources\nSubtask: {kind}\nTools: {tools}\n"
    "Reply OK if this selection is suitable."
)


@dataclass(frozen=True)
class SelectedResources:
    subtask: Subtask
    tools: tuple[str, ...]
    chunks: tuple[rag.RetrievalHit, ...]


@dataclass
class SubTaskResult:
    subtask_id: str
    kind: str
    answer_text: str
    payload: dict
    tool_calls: tuple[str, ...]
    raw: dict = field(default_factory=dict, repr=False)


@dataclass(frozen=True)
class Section:
    subtask_id: str
    kind: str
    answer_text: str
    payload: dict

    def to_dict(self) -> dict:
        return {
            "subtask_id": self.subtask_id,
            "kind": self.kind,
            "answer_text": self.answer_text,
            "payload": self.payload,
        }


@dataclass(frozen=True)
class FinalAnswer:
    text: str
    sections: tuple[Section, ...]
    transcript_ref: str

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "sections": [s.to_dict() for s in self.sections],
            "transcript_ref": self.transcript_ref,
        }


class RunStatus(Enum):
    COMPLETED = "COMPLETED"
    REJECTED = "REJECTED"
    FAILED = "FAILED"


@dataclass
class RunResult:
    status: RunStatus
    answer: FinalAnswer | None
    transcript: Transcript
    error: str | None = None


# -- deterministic result rendering -----------------------------------------


def render_result_summary(kind: str, payload: dict) -> str:
    """Operator-facing text for one subtask result, derived only from the
    structured payload so it is identical across backends."""
    if kind == "compress":
        events = payload["events"]
        top = events[0]
        return (
            f"Compressed {payload['batch']['size']} alarms into {len(events)} events. "
            f"Top event {top['key']} ({top['count']} alarms, max severity "
            f"{top['max_severity']})."
        )
    if kind == "prioritize":
        lines = [
            f"{i + 1}. {e['event']['key']} score {e['score']:.1f}"
            for i, e in enumerate(payload["ranking"])
        ]
        return "Priority ranking:\n" + "\n".join(lines)
    if kind == "suggest":
        s = payload["suggestion"]
        actions = " ".join(f"({i + 1}) {a}" for i, a in enumerate(s["actions"]))
        return (
            f"Handle {s['event_key']} first. Cause: {s['cause']} "
            f"Actions: {actions} Sources: {', '.join(s['source_refs'])}."
        )
    if kind == "qot_estimate":
        alloc = payload["allocation"]
        carried = [a for a in alloc["allocations"] if not a["blocked"]]
        blocked = len(alloc["allocations"]) - len(carried)
        lines = []
        worst = None
        for a in carried:
            ch = payload["gsnr"][a["demand_id"]]["channels"][0]
            lines.append(
                f"{a['demand_id']}: GSNR {ch['gsnr_db']:.2f} dB, margin "
                f"{ch['margin_db']:.2f} dB, channel {a['channel']}"
            )
            if worst is None or ch["margin_db"] < worst[1]:
                worst = (a["demand_id"], ch["margin_db"])
        head = (
            f"Estimated GSNR for {len(carried)} carried services ({blocked} blocked, "
            f"blocking {alloc['blocking_probability']:.4f}, utilization "
            f"{alloc['utilization']:.4f})."
        )
        if worst is not None:
            head += f" Worst margin {worst[1]:.2f} dB on {worst[0]}."
        return head + "\n" + "\n".join(lines)
    if kind == "analyze":
        findings = payload["findings"]
        if not findings:
            return "Network analysis found no issues."
        lines = [
            f"- {f['kind']} {f['subject']} (metric {f['metric']:.4f})" for f in findings
        ]
        return f"Network analysis found {len(findings)} finding(s):\n" + "\n".join(lines)
    if kind == "optimize":
        trace = payload["trace"]
        powers = ", ".join(
            f"{d}={p:.1f} dBm" for d, p in trace["final_launch_dbm"].items()
        )
        return (
            f"Optimized launch powers in {len(trace['steps'])} moves over "
            f"{trace['rounds']} rounds. Minimum margin {trace['initial_objective_db']:.2f}"
            f" -> {trace['final_objective_db']:.2f} dB. Final powers: {powers}."
        )
    if kind == "qa":
        hits = payload["hits"]
        top = hits[0]
        return f"Closest reference {top['ref']} (score {top['score']:.3f}): {top['text']}"
    raise UnknownSubtaskError(f"no renderer for subtask kind {kind!r}")


# ---------------------------------------------------------------------------
# The agent


@dataclass
class AgentConfig:
    backend: LlmBackend
    template: PromptTemplate = PromptTemplate(instruction="Answer the request.")
    technique: TechniqueConfig = TechniqueConfig()
    examples: tuple[FewShotExample, ...] = ()
    retrieval_enabled: bool = True
    retrieval_k: int = 4
    suggestion_k: int = 3
    approval_gate: ApprovalGate = field(default_factory=StaticApprovalGate)
    clock: Callable[[], int] = system_clock


class Agent:
    """Five-step orchestrator over an :class:`AgentSession`."""

    def __init__(self, config: AgentConfig):
        self.config = config

    # -- backend helpers -----------------------------------------------------

    def _complete(self, text: str) -> str:
        request = LlmRequest(messages=(ChatMessage("user", text),), temperature=0.0)
        return self.config.backend.complete(request)

    def _narrative(self, prompt: str) -> str:
        technique = self.config.technique
        if technique.technique is Technique.COT_SELF_CONSISTENCY:
            paths = [self._complete(prompt) for _ in range(technique.n_paths)]
            return self_consistency_vote(paths)
        return self._complete(prompt)

    # -- step 1: intent ------------------------------------------------------

    def analyze_intent(self, query: str) -> tuple[TaskKind, float, str]:
        """Backend classification at confidence 0.9, keyword fallback at 0.5."""
        reply = self._complete(INTENT_PROMPT.format(query=query))
        label = reply.strip().upper()
        for kind in TaskKind:
            if label == kind.value:
                return kind, 0.9, reply
        words = set(re.findall(r"[a-z0-9_]+", query.lower()))
        if words & ALARM_LEXICON:
            return TaskKind.ALARM_ANALYSIS, 0.5, reply
        if words & OPTIMIZATION_LEXICON:
            return TaskKind.NETWORK_OPTIMIZATION, 0.5, reply
        return TaskKind.DIRECT_QA, 0.5, reply

    # -- step 2: decomposition -----------------------------------------------

    def decompose(self, kind: TaskKind) -> AgentPlan:
        """Fixed per-kind plan; alarm and optimization plans cascade their
        three subtasks, direct QA is a single subtask."""
        kinds = PLAN_SHAPES[kind]
        subtasks = []
        for i, sk in enumerate(kinds):
            depends = (kinds[i - 1],) if i > 0 else ()
            subtasks.append(Subtask(id=sk, kind=sk, depends_on=depends))
        return AgentPlan(task_kind=kind, pattern=PlanPattern.CASCADED, subtasks=tuple(subtasks))

    # -- step 3: resource selection -------------------------------------------

    def select_resources(self, subtask: Subtask, session: AgentSession) -> SelectedResources:
        if subtask.kind not in SUBTASK_TOOLS:
            raise UnknownSubtaskError(f"no tool mapping for subtask kind {subtask.kind!r}")
        tools = SUBTASK_TOOLS[subtask.kind]
        chunks: tuple[rag.RetrievalHit, ...] = ()
        if self.config.retrieval_enabled and len(session.knowledge) > 0:
            chunks = tuple(
                session.knowledge.retrieve(
                    f"{subtask.kind} {' '.join(tools)}", k=self.config.retrieval_k
                )
            )
        return SelectedResources(subtask=subtask, tools=tools, chunks=chunks)

    # -- step 4: problem solving ----------------------------------------------

    def _run_tool(
        self,
        tool: str,
        subtask: Subtask,
        session: AgentSession,
        prior: dict[str, SubTaskResult],
        scratch: dict,
        query: str,
        transcript: Transcript,
    ) -> None:
        """Execute one mapped tool, recording a TOOL_CALL with its arguments
        and a digest of the result.  Outputs accumulate in ``scratch``."""
        if tool == "alarms.compress":
            batches = alarms_mod.window_batches(session.alarms)
            if not batches:
                raise ToolExecutionError("alarms.compress: session has no alarms")
            batch = batches[0]
            events = alarms_mod.compress(batch)
            args = {
                "alarm_count": len(batch.alarms),
                "window_start": batch.window_start,
                "window_end": batch.window_end,
            }
            scratch["batch"] = batch
            scratch["events"] = events
            scratch["payload"]["batch"] = {
                "window_start": batch.window_start,
                "window_end": batch.window_end,
                "size": len(batch.alarms),
            }
            scratch["payload"]["events"] = [e.to_dict() for e in events]
            result = scratch["payload"]["events"]
        elif tool == "alarms.correlate":
            events = scratch.get("events") or prior["compress"].raw["events"]
            scratch["events"] = events
            matrix = alarms_mod.correlate(events, rulebase=session.rulebase)
            scratch["matrix"] = matrix
            scratch["payload"]["matrix"] = [[float(v) for v in row] for row in matrix]
            args = {"event_count": len(events)}
            result = scratch["payload"]["matrix"]
        elif tool == "alarms.priority_scores":
            events = scratch["events"]
            entries = alarms_mod.priority_scores(events, scratch["matrix"])
            scratch["ranking"] = entries
            scratch["payload"]["ranking"] = [p.to_dict() for p in entries]
            args = {"event_count": len(events)}
            result = scratch["payload"]["ranking"]
        elif tool == "rag.retrieve":
            if subtask.kind == "suggest":
                ranking = prior["prioritize"].raw["ranking"]
                top = ranking[0]
                suggestion = alarms_mod.suggest(
                    top, session.manual.retrieve, k=self.config.suggestion_k
                )
                hits = session.manual.retrieve(
                    f"{top.event.alarm_type} {top.event.representative_description}",
                    self.config.suggestion_k,
                )
                args = {
                    "store": "manual",
                    "query": f"{top.event.alarm_type} {top.event.representative_description}",
                    "k": self.config.suggestion_k,
                }
                scratch["payload"]["hits"] = [
                    {"ref": h.chunk.ref, "score": h.score} for h in hits
                ]
                scratch["payload"]["suggestion"] = suggestion.to_dict()
                scratch["suggestion"] = suggestion
                result = scratch["payload"]["suggestion"]
            else:  # direct QA over the knowledge store
                hits = session.knowledge.retrieve(query, k=self.config.retrieval_k)
                args = {"store": "knowledge", "query": query, "k": self.config.retrieval_k}
                scratch["payload"]["hits"] = [h.to_dict() for h in hits]
                scratch["hits"] = hits
                result = scratch["payload"]["hits"]
        elif tool == "qot.estimate_gsnr":
            topology = session.topology
            if topology is None:
                raise ToolExecutionError("qot.estimate_gsnr: session has no topology")
            grid = session.effective_grid()
            report = netops.provision(
                session.demands, topology, grid, k=session.provision_k
            )
            gsnr_reports = netops.demand_gsnr_reports(
                session.demands, report, topology, grid, session.thresholds
            )
            session.last_allocation = report
            scratch["allocation"] = report
            scratch["gsnr_reports"] = gsnr_reports
            scratch["payload"]["allocation"] = report.to_dict()
            scratch["payload"]["gsnr"] = {
                did: rep.to_dict() for did, rep in sorted(gsnr_reports.items())
            }
            args = {"demand_count": len(session.demands), "k": session.provision_k}
            result = scratch["payload"]["gsnr"]
        elif tool == "netops.analyze_network":
            report = scratch.get("allocation") or prior["qot_estimate"].raw["allocation"]
            gsnr_reports = (
                scratch.get("gsnr_reports") or prior["qot_estimate"].raw["gsnr_reports"]
            )
            findings = netops.analyze_network(
                report, gsnr_reports, session.analysis_config
            )
            scratch["findings"] = findings
            scratch["payload"]["findings"] = [f.to_dict() for f in findings]
            scratch["payload"]["finding_count"] = len(findings)
            args = {"carried": len(report.carried), "finding_count": len(findings)}
            result = scratch["payload"]["findings"]
        elif tool == "netops.optimize_launch_power":
            topology = session.topology
            if topology is None:
                raise ToolExecutionError("netops.optimize_launch_power: session has no topology")
            grid = session.effective_grid()
            trace = netops.optimize_launch_power(
                session.demands,
                topology,
                grid,
                bounds_dbm=session.power_bounds_dbm,
                step_db=session.optimizer_step_db,
                max_rounds=session.optimizer_max_rounds,
                k=session.provision_k,
                thresholds=session.thresholds,
            )
            # the mutating step: the approved launch profile becomes live state
            session.apply_launch_profile(trace.final_launch_dbm)
            session.last_optimization = trace
            session.last_allocation = netops.provision(
                session.demands, topology, grid, k=session.provision_k
            )
            scratch["trace"] = trace
            scratch["payload"]["trace"] = trace.to_dict()
            args = {
                "demand_count": len(session.demands),
                "bounds_dbm": list(session.power_bounds_dbm),
                "step_db": session.optimizer_step_db,
                "max_rounds": session.optimizer_max_rounds,
            }
            result = scratch["payload"]["trace"]
        else:
            raise UnknownSubtaskError(f"unknown tool {tool!r}")

        transcript.append(
            Step.TOOL_CALL,
            {"tool": tool, "args": args, "result_digest": content_digest(result)},
        )

    def solve_subtask(
        self,
        resources: SelectedResources,
        session: AgentSession,
        prior: dict[str, SubTaskResult],
        query: str,
        transcript: Transcript,
    ) -> SubTaskResult:
        """Run the subtask's tools in order, then ask the backend for a
        narrative over the structured results."""
        subtask = resources.subtask
        scratch: dict = {"payload": {}}
        for tool in resources.tools:
            try:
                self._run_tool(tool, subtask, session, prior, scratch, query, transcript)
            except ToolExecutionError:
                raise
            except Exception as exc:
                raise ToolExecutionError(f"{tool}: {exc}") from exc
        payload = scratch["payload"]
        input_data = (
            f"subtask: {subtask.kind}\n"
            f"results: {json.dumps(payload, sort_keys=True)}"
        )
        prompt = render_prompt(
            replace(self.config.template, input_data=input_data),
            self.config.technique,
            retrieved=resources.chunks,
            examples=self.config.examples,
        )
        narrative = self._narrative(prompt)
        raw = {k: v for k, v in scratch.items() if k != "payload"}
        return SubTaskResult(
            subtask_id=subtask.id,
            kind=subtask.kind,
            answer_text=narrative,
            payload=payload,
            tool_calls=resources.tools,
            raw=raw,
        )

    # -- step 5: final answer --------------------------------------------------

    def finalize(
        self,
        plan: AgentPlan,
        results: dict[str, SubTaskResult],
        query: str,
        transcript_ref: str,
        last_chunks: Sequence[rag.RetrievalHit] = (),
    ) -> FinalAnswer:
        """Cascaded plans answer from the last subtask's result plus a
        backend summary of the chain; parallel plans concatenate per-subtask
        sections before the summary."""
        missing = [s.id for s in plan.subtasks if s.id not in results]
        if missing:
            raise IncompletePlanError(f"unexecuted subtask(s): {', '.join(missing)}")
        ordered = [results[s.id] for s in plan.subtasks]
        sections = tuple(
            Section(
                subtask_id=r.subtask_id,
                kind=r.kind,
                answer_text=r.answer_text,
                payload=r.payload,
            )
            for r in ordered
        )
        chain_lines = [
            f"[{r.kind}] {render_result_summary(r.kind, r.payload)}" for r in ordered
        ]
        summary_prompt = render_prompt(
            replace(
                self.config.template,
                input_data="TASK: summarize-run\n" + "\n".join(chain_lines),
            ),
            self.config.technique,
            retrieved=last_chunks,
            examples=self.config.examples,
        )
        summary = self._narrative(summary_prompt)
        if plan.pattern is PlanPattern.PARALLEL:
            body = "\n\n".join(chain_lines)
        else:
            body = render_result_summary(ordered[-1].kind, ordered[-1].payload)
        text = f"{body}\n\n{summary}" if summary else body
        return FinalAnswer(text=text, sections=sections, transcript_ref=transcript_ref)

    # -- the five-step loop ------------------------------------------------------

    def run(
        self,
        query: str,
        session: AgentSession,
        transcript: Transcript | None = None,
        job_id: str = "local",
    ) -> RunResult:
        if transcript is None:
            transcript = Transcript(clock=self.config.clock)
        try:
            return self._run(query, session, transcript, job_id)
        except Exception as exc:  # noqa: BLE001 - runs must fail closed, not crash
            logger.exception("agent run failed")
            transcript.append(
                Step.FINAL_ANSWER, {"status": RunStatus.FAILED.value, "error": str(exc)}
            )
            return RunResult(
                status=RunStatus.FAILED, answer=None, transcript=transcript, error=str(exc)
            )

    def _run(
        self, query: str, session: AgentSession, transcript: Transcript, job_id: str
    ) -> RunResult:
        kind, confidence, reply = self.analyze_intent(query)
        transcript.append(
            Step.INTENT_ANALYSIS,
            {
                "query": query,
                "task_kind": kind.value,
                "confidence": confidence,
                "backend_reply": reply,
            },
        )

        plan = self.decompose(kind)
        decomposition_note = self._complete(DECOMPOSE_PROMPT.format(kind=kind.value))
        transcript.append(
            Step.TASK_DECOMPOSITION,
            {"plan": plan.to_dict(), "backend_note": decomposition_note},
        )

        results: dict[str, SubTaskResult] = {}
        last_chunks: Sequence[rag.RetrievalHit] = ()
        for subtask in plan.subtasks:
            resources = self.select_resources(subtask, session)
            last_chunks = resources.chunks
            confirmation = self._complete(
                CONFIRM_PROMPT.format(kind=subtask.kind, tools=", ".join(resources.tools))
            )
            transcript.append(
                Step.RESOURCE_SELECTION,
                {
                    "subtask": subtask.id,
                    "tools": list(resources.tools),
                    "chunks": [
                        {"ref": h.chunk.ref, "score": h.score} for h in resources.chunks
                    ],
                    "backend_confirmation": confirmation,
                },
            )

            mutating = [t for t in resources.tools if TOOLS[t].mutating]
            if mutating:
                request = ApprovalRequest(
                    action=mutating[0],
                    description=f"subtask {subtask.id} applies {mutating[0]} to session state",
                    proposed={
                        "demand_count": len(session.demands),
                        "bounds_dbm": list(session.power_bounds_dbm),
                        "step_db": session.optimizer_step_db,
                    },
                )
                handle = self.config.approval_gate.open(request)
                transcript.append(
                    Step.PENDING_APPROVAL,
                    {
                        "ticket_id": handle.ticket_id,
                        "status": "PENDING",
                        "action": request.action,
                        "description": request.description,
                        "proposed": request.proposed,
                    },
                )
                decision, note = handle.wait()
                transcript.append(
                    Step.PENDING_APPROVAL,
                    {"ticket_id": handle.ticket_id, "status": decision, "note": note},
                )
                if decision != "APPROVED":
                    transcript.append(
                        Step.FINAL_ANSWER,
                        {
                            "status": RunStatus.REJECTED.value,
                            "ticket_id": handle.ticket_id,
                            "note": note,
                        },
                    )
                    return RunResult(
                        status=RunStatus.REJECTED,
                        answer=None,
                        transcript=transcript,
                        error=f"approval rejected: {note}",
                    )

            result = self.solve_subtask(resources, session, results, query, transcript)
            results[subtask.id] = result
            transcript.append(
                Step.PROBLEM_SOLVING,
                {
                    "subtask": subtask.id,
                    "tools": list(result.tool_calls),
                    "answer_text": result.answer_text,
                    "payload": result.payload,
                },
            )

        answer = self.finalize(plan, results, query, job_id, last_chunks)
        transcript.append(
            Step.FINAL_ANSWER,
            {"status": RunStatus.COMPLETED.value, "answer": answer.to_dict()},
        )
        return RunResult(status=RunStatus.COMPLETED, answer=answer, transcript=transcript)
