"""Loaders for the data files shipped inside the package.

Everything here is deterministic: the topology file is a frozen artifact,
the manual and knowledge stores are rebuilt from the bundled text files
with the keyed-hash embedder, and the scripted backend is an ordered
matcher table.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from . import rag
from .agent import ScriptedBackend, load_scripted_fixture
from .alarms import Rulebase
from .netmodel import NetworkTopology, load_topology

TOPOLOGY_FILE = "conus_synthetic.topo"


def fixture_path(*parts: str) -> Path:
    """Absolute path of a bundled fixture file or directory."""
    base = resources.files("lightops").joinpath("fixtures")
    return Path(str(base.joinpath(*parts)))


def load_bundled_topology() -> NetworkTopology:
    """The 77-node / 99-link synthetic continental topology."""
    return load_topology(fixture_path(TOPOLOGY_FILE))


def load_manual_store() -> rag.VectorStore:
    """Maintenance-manual corpus, one document per alarm type."""
    store = rag.VectorStore()
    docs = rag.load_directory(fixture_path("manual"), kind=rag.DocKind.MANUAL)
    rag.index_documents(store, docs)
    return store


def load_knowledge_store() -> rag.VectorStore:
    """Background corpus used for prompt-side retrieval."""
    store = rag.VectorStore()
    docs = rag.load_directory(fixture_path("knowledge"), kind=rag.DocKind.KNOWLEDGE)
    rag.index_documents(store, docs)
    return store


def load_rulebase() -> Rulebase:
    """Pairwise alarm correlation rules."""
    return Rulebase.from_json(fixture_path("alarm_rules.json"))


def load_backend_fixture() -> ScriptedBackend:
    """The canned backend used by the demo flows and the evaluation runs."""
    return load_scripted_fixture(fixture_path("scripted_backend.json"))
