"""Exception types shared across the platform.

Every error raised by lightops derives from :class:`LightopsError` so callers
can catch platform failures with a single except clause.  The gateway maps
these onto HTTP status codes.
"""

from __future__ import annotations


class LightopsError(Exception):
    """Base class for all lightops errors."""


class ParseError(LightopsError):
    """A file or record is structurally malformed (bad JSON, unknown or
    missing fields).  The message carries line/field context."""


class ValidationError(LightopsError):
    """A structurally well-formed object violates a model invariant.

    ``violations`` lists every violation found, not just the first one.
    """

    def __init__(self, violations: list[str] | str):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class InfeasibleError(LightopsError):
    """Requested synthetic topology cannot exist (link count out of range)."""


class DomainError(LightopsError):
    """A numeric input is outside the domain of a physical formula."""


class UnknownModulationError(LightopsError):
    """Modulation format has no configured GSNR threshold."""


class EmptyRouteError(LightopsError):
    """A QoT estimate was requested over a route with no links."""


class NoPathError(LightopsError):
    """No loopless path exists between the requested endpoints."""


class NoCarriedDemandError(LightopsError):
    """Launch-power optimization was requested but no demand is carried."""


class ConsistencyError(LightopsError):
    """Cross-referenced analysis inputs disagree (e.g. a carried demand
    without a matching QoT report)."""


class ConfigError(LightopsError):
    """Invalid configuration value (weights, technique parameters, ...)."""


class DimensionError(LightopsError):
    """Matrix or vector dimensions do not match their companions."""


class EmptyKnowledgeBaseError(LightopsError):
    """Retrieval was requested against an empty store."""


class BackendError(LightopsError):
    """The language-model backend failed after exhausting retries."""


class UnknownSubtaskError(LightopsError):
    """A plan contains a subtask kind with no tool mapping."""


class ToolExecutionError(LightopsError):
    """A tool invocation raised; the original error message is preserved."""


class IncompletePlanError(LightopsError):
    """Finalization was requested for a plan with unexecuted subtasks."""


class MissingPayloadError(LightopsError):
    """A numeric key element references a payload field that is absent."""


class SessionNotFoundError(LightopsError):
    """Unknown session id."""


class TopologyNotFoundError(LightopsError):
    """Session creation referenced a topology that does not exist."""


class BusyError(LightopsError):
    """The session already has a run in flight."""


class UnknownTicketError(LightopsError):
    """Unknown approval ticket id."""


class AlreadyResolvedError(LightopsError):
    """The approval ticket was already resolved; tickets resolve once."""


class UnknownJobError(LightopsError):
    """The session has no job with the requested id."""


class UnknownServiceError(LightopsError):
    """The session has no service demand with the requested id."""


class UnknownEvalRunError(LightopsError):
    """Unknown evaluation run id."""
