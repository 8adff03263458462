"""Deterministic retrieval over domain documents.

The embedder is a feature-hashed signed bag-of-words: tokens are lowercased
alphanumeric runs, each token hashes to one of 256 dimensions with a +/-1
sign, and the accumulated vector is L2-normalized.  Both hashes are keyed
BLAKE2 digests with fixed public keys, so the same text embeds to the same
vector on every platform and run.  Retrieval is an exact cosine scan; no
approximate index.
"""

from __future__ import annotations

import hashlib
import re
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, ParseError, ValidationError

EMBED_DIM = 256
# Public hash keys; changing either invalidates every persisted store.
INDEX_HASH_KEY = b"lightops.embed.index.v1"
SIGN_HASH_KEY = b"lightops.embed.sign.v1"

_STORE_MAGIC = b"LOVS"
_STORE_VERSION = 1

_TOKEN_RE = re.compile(r"[0-9a-z]+")


class DocKind(str, Enum):
    MANUAL = "manual"
    RULE = "rule"
    KNOWLEDGE = "knowledge"
    DATA_NOTE = "data_note"


@dataclass(frozen=True)
class Document:
    id: str
    kind: DocKind
    source: str
    text: str

    def __post_init__(self):
        if not self.id:
            raise ValidationError("document id must be non-empty")
        if not self.text.strip():
            raise ValidationError(f"document {self.id}: text must be non-empty")


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    seq: int
    text: str
    token_count: int

    @property
    def ref(self) -> str:
        return f"{self.doc_id}#{self.seq}"


def chunk_document(doc: Document, max_tokens: int = 200, overlap: int = 40) -> list[Chunk]:
    """Split on whitespace into overlapping windows of at most ``max_tokens``.

    Windows advance by (max_tokens - overlap); the window that reaches the
    end of the document is the last one, so a document of exactly N windows'
    worth of tokens produces no trailing sliver.
    """
    if max_tokens < 1:
        raise ConfigError(f"max_tokens must be >= 1, got {max_tokens}")
    if not 0 <= overlap < max_tokens:
        raise ConfigError(f"overlap must be in [0, max_tokens), got {overlap}")
    tokens = doc.text.split()
    step = max_tokens - overlap
    chunks = []
    start = 0
    while True:
        window = tokens[start : start + max_tokens]
        chunks.append(
            Chunk(doc_id=doc.id, seq=len(chunks), text=" ".join(window), token_count=len(window))
        )
        if start + max_tokens >= len(tokens):
            break
        start += step
    return chunks


def _hash_u64(key: bytes, token: str) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


def embed(text: str) -> np.ndarray:
    """Embed text to a unit-norm float64 vector of dimension ``EMBED_DIM``.

    Text with no alphanumeric tokens embeds to the zero vector.
    """
    vec = np.zeros(EMBED_DIM, dtype=np.float64)
    for token in _TOKEN_RE.findall(text.lower()):
        index = _hash_u64(INDEX_HASH_KEY, token) % EMBED_DIM
        sign = 1.0 if _hash_u64(SIGN_HASH_KEY, token) & 1 else -1.0
        vec[index] += sign
    norm = float(np.linalg.norm(vec))
    if norm > 0:
        vec /= norm
    return vec


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; 0.0 whenever either vector is zero."""
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    value = float(np.dot(a, b) / (na * nb))
    return max(-1.0, min(1.0, value))


@dataclass(frozen=True)
class RetrievalHit:
    chunk: Chunk
    score: float

    def to_dict(self) -> dict:
        return {
            "doc_id": self.chunk.doc_id,
            "seq": self.chunk.seq,
            "ref": self.chunk.ref,
            "score": self.score,
            "text": self.chunk.text,
        }


class VectorStore:
    """Exact-scan vector store keyed by (doc_id, seq)."""

    def __init__(self, embedder: Callable[[str], np.ndarray] = embed):
        self._embedder = embedder
        self._entries: dict[tuple[str, int], tuple[Chunk, np.ndarray]] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def upsert(self, chunks: Iterable[Chunk]) -> int:
        """Insert or replace chunk vectors; returns the number of records
        written."""
        count = 0
        for chunk in chunks:
            self._entries[(chunk.doc_id, chunk.seq)] = (chunk, self._embedder(chunk.text))
            count += 1
        return count

    def chunks(self) -> list[Chunk]:
        return [entry[0] for _, entry in sorted(self._entries.items())]

    def retrieve(self, query: str, k: int = 5) -> list[RetrievalHit]:
        """Top-k chunks by cosine similarity to the query embedding.

        Ordering is (score desc, doc_id asc, seq asc) so equal scores
        resolve deterministically.
        """
        if k < 1:
            raise ConfigError(f"k must be >= 1, got {k}")
        if not self._entries:
            return []
        qvec = self._embedder(query)
        scored = [
            (cosine(qvec, vec), chunk) for chunk, vec in self._entries.values()
        ]
        scored.sort(key=lambda item: (-item[0], item[1].doc_id, item[1].seq))
        return [RetrievalHit(chunk=c, score=s) for s, c in scored[:k]]

    # -- persistence --------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Versioned binary layout: magic, version, dimension, then
        length-prefixed records of (doc_id, seq, token_count, text, vector
        as little-endian float64)."""
        with open(path, "wb") as fh:
            fh.write(_STORE_MAGIC)
            fh.write(struct.pack("<HI", _STORE_VERSION, EMBED_DIM))
            for (doc_id, seq), (chunk, vec) in sorted(self._entries.items()):
                doc_bytes = doc_id.encode("utf-8")
                text_bytes = chunk.text.encode("utf-8")
                fh.write(struct.pack("<I", len(doc_bytes)))
                fh.write(doc_bytes)
                fh.write(struct.pack("<II", seq, chunk.token_count))
                fh.write(struct.pack("<I", len(text_bytes)))
                fh.write(text_bytes)
                fh.write(struct.pack(f"<{EMBED_DIM}d", *vec.tolist()))

    @classmethod
    def load(cls, path: str | Path, embedder: Callable[[str], np.ndarray] = embed) -> "VectorStore":
        data = Path(path).read_bytes()
        store = cls(embedder)
        offset = 0

        def take(n: int) -> bytes:
            nonlocal offset
            if offset + n > len(data):
                raise ParseError(f"{path}: truncated store file at byte {offset}")
            out = data[offset : offset + n]
            offset += n
            return out

        if take(4) != _STORE_MAGIC:
            raise ParseError(f"{path}: not a vector store file")
        version, dim = struct.unpack("<HI", take(6))
        if version != _STORE_VERSION:
            raise ParseError(f"{path}: unsupported store version {version}")
        if dim != EMBED_DIM:
            raise ParseError(f"{path}: dimension {dim} != expected {EMBED_DIM}")
        while offset < len(data):
            (doc_len,) = struct.unpack("<I", take(4))
            doc_id = take(doc_len).decode("utf-8")
            seq, token_count = struct.unpack("<II", take(8))
            (text_len,) = struct.unpack("<I", take(4))
            text = take(text_len).decode("utf-8")
            vec = np.array(struct.unpack(f"<{dim}d", take(8 * dim)), dtype=np.float64)
            chunk = Chunk(doc_id=doc_id, seq=seq, text=text, token_count=token_count)
            store._entries[(doc_id, seq)] = (chunk, vec)
        return store


def index_documents(
    store: VectorStore,
    documents: Sequence[Document],
    max_tokens: int = 200,
    overlap: int = 40,
) -> int:
    """Chunk and upsert documents; returns the number of chunks written."""
    total = 0
    for doc in documents:
        total += store.upsert(chunk_document(doc, max_tokens=max_tokens, overlap=overlap))
    return total


def load_directory(path: str | Path, kind: DocKind = DocKind.KNOWLEDGE) -> list[Document]:
    """Read every .txt file in a directory as one document (id = stem)."""
    directory = Path(path)
    docs = []
    for file in sorted(directory.glob("*.txt")):
        docs.append(
            Document(
                id=file.stem,
                kind=kind,
                source=str(file.name),
                text=file.read_text(encoding="utf-8"),
            )
        )
    return docs
