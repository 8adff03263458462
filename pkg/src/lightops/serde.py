"""Canonical JSON serialization and content digests.

Digests are used wherever two serializations must be comparable byte for
byte: tool-result fingerprints in transcripts, session state snapshots, and
evaluation report identities.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any


def canonical_json(obj: Any) -> str:
    """Stable text form: sorted keys, tight separators, ASCII escapes."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def content_digest(obj: Any) -> str:
    """Hex SHA-256 of the canonical JSON form."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()
