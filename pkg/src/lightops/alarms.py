"""Alarm triage pipeline: windowing, compression, correlation, priority
scoring, and handling suggestions backed by the alarm manual.

The pipeline is deterministic end to end: identical alarm streams produce
identical batches, compressed events, scores, and suggestions.  Every sort
has an explicit total order so no step depends on input dict ordering.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DimensionError,
    EmptyKnowledgeBaseError,
    ParseError,
    ValidationError,
)
from . import rag

logger = logging.getLogger(__name__)

DEFAULT_WINDOW_MS = 180_000  # three-minute event window
DEFAULT_BATCH_CAP = 25

# Relative contribution of severity, frequency, and correlation to the
# priority score.
DEFAULT_WEIGHTS = (0.5, 0.3, 0.2)

SEVERITY_TERM = {
    "CRITICAL": 1.0,
    "MAJOR": 0.75,
    "MINOR": 0.5,
    "WARNING": 0.25,
}


class Severity(IntEnum):
    WARNING = 1
    MINOR = 2
    MAJOR = 3
    CRITICAL = 4

    @classmethod
    def parse(cls, value: str) -> "Severity":
        try:
            return cls[value]
        except KeyError:
            raise ParseError(f"unknown severity {value!r}") from None


@dataclass(frozen=True)
class Alarm:
    id: str
    ts: int  # epoch milliseconds
    severity: Severity
    alarm_type: str
    source_ne: str
    description: str

    def __post_init__(self):
        problems = []
        if not self.id:
            problems.append("alarm id must be non-empty")
        if self.ts < 0:
            problems.append(f"alarm {self.id}: ts must be >= 0")
        if not self.alarm_type:
            problems.append(f"alarm {self.id}: alarm_type must be non-empty")
        if not self.source_ne:
            problems.append(f"alarm {self.id}: source_ne must be non-empty")
        if problems:
            raise ValidationError(problems)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "ts": self.ts,
            "severity": self.severity.name,
            "alarm_type": self.alarm_type,
            "source_ne": self.source_ne,
            "description": self.description,
        }


@dataclass(frozen=True)
class AlarmBatch:
    alarms: tuple[Alarm, ...]
    window_start: int
    window_end: int

    def __post_init__(self):
        if not self.alarms:
            raise ValidationError("batch must contain at least one alarm")
        for alarm in self.alarms:
            if not self.window_start <= alarm.ts <= self.window_end:
                raise ValidationError(
                    f"alarm {alarm.id} ts {alarm.ts} outside window "
                    f"[{self.window_start}, {self.window_end}]"
                )


@dataclass(frozen=True)
class CompressedEvent:
    """All alarms of one (type, network element) pair within a batch."""

    alarm_type: str
    source_ne: str
    count: int
    max_severity: Severity
    first_ts: int
    last_ts: int
    representative_description: str

    @property
    def key(self) -> str:
        return f"{self.alarm_type}@{self.source_ne}"

    def to_dict(self) -> dict:
        return {
            "alarm_type": self.alarm_type,
            "source_ne": self.source_ne,
            "key": self.key,
            "count": self.count,
            "max_severity": self.max_severity.name,
            "first_ts": self.first_ts,
            "last_ts": self.last_ts,
            "representative_description": self.representative_description,
        }


def window_batches(
    stream: Sequence[Alarm],
    window_ms: int = DEFAULT_WINDOW_MS,
    batch_cap: int = DEFAULT_BATCH_CAP,
) -> list[AlarmBatch]:
    """Pack a stream into batches greedily, left to right.

    Alarms are ordered by (ts, id); a batch closes when it holds
    ``batch_cap`` alarms or when the next alarm falls outside the window
    opened by the batch's first alarm.
    """
    if window_ms <= 0:
        raise ConfigError(f"window_ms must be > 0, got {window_ms}")
    if batch_cap < 1:
        raise ConfigError(f"batch_cap must be >= 1, got {batch_cap}")
    ordered = sorted(stream, key=lambda a: (a.ts, a.id))
    batches: list[AlarmBatch] = []
    current: list[Alarm] = []
    for alarm in ordered:
        if current and (
            len(current) >= batch_cap or alarm.ts > current[0].ts + window_ms
        ):
            batches.append(
                AlarmBatch(
                    alarms=tuple(current),
                    window_start=current[0].ts,
                    window_end=current[0].ts + window_ms,
                )
            )
            current = []
        current.append(alarm)
    if current:
        batches.append(
            AlarmBatch(
                alarms=tuple(current),
                window_start=current[0].ts,
                window_end=current[0].ts + window_ms,
            )
        )
    return batches


def compress(batch: AlarmBatch) -> list[CompressedEvent]:
    """Group a batch by (alarm_type, source_ne).

    The representative description is the earliest member's (ties by id).
    Events are ordered by (max severity desc, count desc, first ts asc,
    key lex); counts always sum to the batch size.
    """
    groups: dict[tuple[str, str], list[Alarm]] = {}
    for alarm in batch.alarms:
        groups.setdefault((alarm.alarm_type, alarm.source_ne), []).append(alarm)
    events = []
    for (alarm_type, source_ne), members in groups.items():
        members.sort(key=lambda a: (a.ts, a.id))
        events.append(
            CompressedEvent(
                alarm_type=alarm_type,
                source_ne=source_ne,
                count=len(members),
                max_severity=max(m.severity for m in members),
                first_ts=members[0].ts,
                last_ts=members[-1].ts,
                representative_description=members[0].description,
            )
        )
    events.sort(key=lambda e: (-int(e.max_severity), -e.count, e.first_ts, e.key))
    return events


# ---------------------------------------------------------------------------
# Correlation


@dataclass(frozen=True)
class Rulebase:
    """Expert pair rules: (type_a, type_b, same_ne) -> correlation weight.

    Type pairs are stored order-normalized, so lookups are symmetric.
    """

    rules: Mapping[tuple[str, str, bool], float]

    @staticmethod
    def _norm(type_a: str, type_b: str, same_ne: bool) -> tuple[str, str, bool]:
        a, b = sorted((type_a, type_b))
        return (a, b, same_ne)

    def lookup(self, type_a: str, type_b: str, same_ne: bool) -> float | None:
        return self.rules.get(self._norm(type_a, type_b, same_ne))

    @classmethod
    def from_json(cls, path: str | Path) -> "Rulebase":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(
                f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
            ) from exc
        if not isinstance(raw, list):
            raise ParseError(f"{path}: expected a list of rules")
        rules = {}
        for i, rule in enumerate(raw):
            where = f"rules[{i}]"
            if not isinstance(rule, dict) or set(rule) != {
                "type_a",
                "type_b",
                "same_ne",
                "weight",
            }:
                raise ParseError(f"{where}: expected type_a, type_b, same_ne, weight")
            weight = rule["weight"]
            if not isinstance(weight, (int, float)) or not 0 <= weight <= 1:
                raise ParseError(f"{where}: weight must be in [0, 1]")
            rules[cls._norm(rule["type_a"], rule["type_b"], bool(rule["same_ne"]))] = float(
                weight
            )
        return cls(rules=rules)


EMPTY_RULEBASE = Rulebase(rules={})


def correlate(
    events: Sequence[CompressedEvent],
    embedder: Callable[[str], np.ndarray] = rag.embed,
    rulebase: Rulebase = EMPTY_RULEBASE,
) -> np.ndarray:
    """Symmetric correlation matrix over compressed events.

    Off-diagonal entries are the maximum of the rulebase weight for the pair
    (when present) and the cosine similarity of the description embeddings
    clamped to [0, 1].  The diagonal is exactly 1.
    """
    n = len(events)
    matrix = np.zeros((n, n), dtype=np.float64)
    vectors = [embedder(e.representative_description) for e in events]
    for i in range(n):
        matrix[i, i] = 1.0
        for j in range(i + 1, n):
            semantic = max(0.0, min(1.0, rag.cosine(vectors[i], vectors[j])))
            rule = rulebase.lookup(
                events[i].alarm_type,
                events[j].alarm_type,
                events[i].source_ne == events[j].source_ne,
            )
            value = semantic if rule is None else max(rule, semantic)
            matrix[i, j] = value
            matrix[j, i] = value
    return matrix


# ---------------------------------------------------------------------------
# Priority scoring


@dataclass(frozen=True)
class PriorityEntry:
    event: CompressedEvent
    severity_term: float
    frequency_term: float
    correlation_term: float
    score: float

    def to_dict(self) -> dict:
        return {
            "event": self.event.to_dict(),
            "severity_term": self.severity_term,
            "frequency_term": self.frequency_term,
            "correlation_term": self.correlation_term,
            "score": self.score,
        }


def priority_scores(
    events: Sequence[CompressedEvent],
    matrix: np.ndarray,
    weights: tuple[float, float, float] = DEFAULT_WEIGHTS,
    severity_map: Mapping[str, float] = SEVERITY_TERM,
) -> list[PriorityEntry]:
    """Score and rank compressed events.

    score = 100 * (w_sev * severity + w_freq * count/max_count
                   + w_corr * mean off-diagonal correlation)

    Ranking is (score desc, severity desc, first ts asc, key lex).
    """
    n = len(events)
    if matrix.shape != (n, n):
        raise DimensionError(
            f"correlation matrix shape {matrix.shape} does not match {n} events"
        )
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ConfigError(f"weights must sum to 1, got {weights}")
    w_sev, w_freq, w_corr = weights
    max_count = max(e.count for e in events) if events else 1
    entries = []
    for i, event in enumerate(events):
        severity_term = severity_map[event.max_severity.name]
        frequency_term = event.count / max_count
        if n > 1:
            row = [float(matrix[i, j]) for j in range(n) if j != i]
            correlation_term = sum(row) / len(row)
        else:
            correlation_term = 0.0
        score = 100.0 * (
            w_sev * severity_term + w_freq * frequency_term + w_corr * correlation_term
        )
        entries.append(
            PriorityEntry(
                event=event,
                severity_term=severity_term,
                frequency_term=frequency_term,
                correlation_term=correlation_term,
                score=score,
            )
        )
    entries.sort(
        key=lambda p: (
            -p.score,
            -int(p.event.max_severity),
            p.event.first_ts,
            p.event.key,
        )
    )
    return entries


# ---------------------------------------------------------------------------
# Handling suggestions


@dataclass(frozen=True)
class Suggestion:
    event_key: str
    cause: str
    actions: tuple[str, ...]
    source_refs: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "event_key": self.event_key,
            "cause": self.cause,
            "actions": list(self.actions),
            "source_refs": list(self.source_refs),
        }


_GUIDE_MARKERS = r"alarm:|symptom:|meaning:|cause:|actions:"
_CAUSE_RE = re.compile(rf"(?i)\bcause:\s*(.*?)(?=\b(?:{_GUIDE_MARKERS})|$)", re.DOTALL)
_ACTIONS_RE = re.compile(rf"(?i)\bactions:\s*(.*?)(?=\b(?:{_GUIDE_MARKERS})|$)", re.DOTALL)
_BULLET_SPLIT_RE = re.compile(r"(?:^|\s)-\s+")


def _extract_guidance(texts: Sequence[str]) -> tuple[str, list[str]]:
    """Pull 'Cause:' and 'Actions:' content out of manual chunks.

    Chunk text is whitespace-flattened, so extraction keys on the marker
    words rather than on line starts; action items are split on their
    leading bullet dashes.
    """
    cause = ""
    actions: list[str] = []
    for text in texts:
        if not cause:
            cause_match = _CAUSE_RE.search(text)
            if cause_match:
                cause = " ".join(cause_match.group(1).split())
        actions_match = _ACTIONS_RE.search(text)
        if actions_match:
            for piece in _BULLET_SPLIT_RE.split(actions_match.group(1)):
                item = " ".join(piece.split())
                if item and item not in actions:
                    actions.append(item)
    if not cause and texts:
        flat = " ".join(texts[0].split())
        cause = flat.split(". ", 1)[0].rstrip(".") + "." if flat else ""
    return cause, actions


def suggest(
    top: PriorityEntry,
    retriever: Callable[[str, int], list[rag.RetrievalHit]],
    k: int = 3,
) -> Suggestion:
    """Handling suggestion for the top-priority event.

    The query is the event's alarm type plus its representative description;
    cause and actions come from the top-k retrieved manual chunks, and
    source_refs always names the chunks used.
    """
    query = f"{top.event.alarm_type} {top.event.representative_description}"
    hits = retriever(query, k)
    if not hits:
        raise EmptyKnowledgeBaseError("alarm manual returned no entries")
    cause, actions = _extract_guidance([h.chunk.text for h in hits])
    return Suggestion(
        event_key=top.event.key,
        cause=cause,
        actions=tuple(actions),
        source_refs=tuple(h.chunk.ref for h in hits),
    )


# ---------------------------------------------------------------------------
# Ingest parsing

_ALARM_KEYS = {"id", "ts", "severity", "alarm_type", "source_ne", "description"}


def parse_alarm_record(raw: dict, where: str = "alarm") -> Alarm:
    if not isinstance(raw, dict):
        raise ParseError(f"{where}: expected an object")
    unknown = sorted(set(raw) - _ALARM_KEYS)
    if unknown:
        raise ParseError(f"{where}: unknown key(s) {', '.join(unknown)}")
    missing = sorted(_ALARM_KEYS - set(raw))
    if missing:
        raise ParseError(f"{where}: missing key(s) {', '.join(missing)}")
    ts = raw["ts"]
    if isinstance(ts, bool) or not isinstance(ts, int):
        raise ParseError(f"{where}.ts: expected an integer epoch-ms timestamp")
    for key in ("id", "severity", "alarm_type", "source_ne", "description"):
        if not isinstance(raw[key], str):
            raise ParseError(f"{where}.{key}: expected a string")
    return Alarm(
        id=raw["id"],
        ts=ts,
        severity=Severity.parse(raw["severity"]),
        alarm_type=raw["alarm_type"],
        source_ne=raw["source_ne"],
        description=raw["description"],
    )


def parse_alarm_lines(text: str) -> tuple[list[Alarm], list[dict]]:
    """Parse line-delimited alarm records, accepting what parses.

    Returns (alarms, errors) where each error carries the 1-based line
    number and a message; blank lines are skipped.
    """
    alarms: list[Alarm] = []
    errors: list[dict] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            errors.append({"line": lineno, "error": f"invalid JSON: {exc.msg}"})
            continue
        try:
            alarms.append(parse_alarm_record(raw, where=f"line {lineno}"))
        except (ParseError, ValidationError) as exc:
            errors.append({"line": lineno, "error": str(exc)})
    return alarms, errors
