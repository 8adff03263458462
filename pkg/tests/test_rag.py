"""Chunking, hashed embeddings, and exact cosine retrieval."""

import random

import numpy as np
import pytest

from lightops.errors import ConfigError, ParseError, ValidationError
from lightops.rag import (
    EMBED_DIM,
    Chunk,
    DocKind,
    Document,
    VectorStore,
    chunk_document,
    cosine,
    embed,
    index_documents,
    load_directory,
)

import oracles


def doc(text, doc_id="doc", kind=DocKind.KNOWLEDGE):
    return Document(id=doc_id, kind=kind, source=f"{doc_id}.txt", text=text)


def words(n, prefix="w"):
    return " ".join(f"{prefix}{i}" for i in range(n))


# ---------------------------------------------------------------------------
# chunking


def test_exact_window_single_chunk():
    chunks = chunk_document(doc(words(200)), max_tokens=200, overlap=40)
    assert len(chunks) == 1
    assert chunks[0].token_count == 200
    assert chunks[0].seq == 0


def test_two_window_overlap_arithmetic():
    chunks = chunk_document(doc(words(360)), max_tokens=200, overlap=40)
    assert [c.token_count for c in chunks] == [200, 200]
    assert chunks[1].text.split()[0] == "w160"
    assert chunks[1].text.split()[-1] == "w359"


def test_empty_document_rejected():
    with pytest.raises(ValidationError):
        doc("   \n  ")


def test_overlap_must_be_below_window():
    with pytest.raises(ConfigError):
        chunk_document(doc(words(10)), max_tokens=5, overlap=5)
    with pytest.raises(ConfigError):
        chunk_document(doc(words(10)), max_tokens=0, overlap=0)


def test_chunk_invariants_and_lossless_reassembly():
    rng = random.Random(808)
    for _ in range(30):
        n = rng.randint(1, 900)
        max_tokens = rng.randint(2, 120)
        overlap = rng.randint(0, max_tokens - 1)
        document = doc(words(n))
        chunks = chunk_document(document, max_tokens=max_tokens, overlap=overlap)
        assert [c.seq for c in chunks] == list(range(len(chunks)))
        assert all(c.token_count <= max_tokens for c in chunks)
        assert all(c.token_count == len(c.text.split()) for c in chunks)
        # reassemble by dropping each later chunk's overlapped prefix
        reassembled = chunks[0].text.split()
        for chunk in chunks[1:]:
            reassembled.extend(chunk.text.split()[overlap:])
        assert reassembled == document.text.split()


# ---------------------------------------------------------------------------
# embedding


def test_embed_is_deterministic():
    a = embed("EDFA gain tilt across the C band")
    b = embed("EDFA gain tilt across the C band")
    assert np.array_equal(a, b)
    assert a.shape == (EMBED_DIM,)


def test_embed_empty_text_is_zero_vector():
    assert not embed("").any()
    assert not embed("!!! --- ???").any()


def test_embed_nonempty_is_unit_norm():
    for text in ("one", "alpha beta gamma", "Loss of signal detected"):
        assert np.linalg.norm(embed(text)) == pytest.approx(1.0, abs=1e-12)


def test_embed_similarity_ranking():
    anchor = embed("EDFA gain tilt")
    near = cosine(anchor, embed("EDFA gain tilt noise"))
    far = cosine(anchor, embed("routing wavelength assignment"))
    assert near > far


def test_cosine_symmetry_and_range():
    rng = random.Random(123)
    texts = [words(rng.randint(1, 12), prefix=f"t{i}x") for i in range(12)]
    vectors = [embed(t) for t in texts]
    for u in vectors:
        for v in vectors:
            assert cosine(u, v) == pytest.approx(cosine(v, u), abs=1e-15)
            assert -1.0 <= cosine(u, v) <= 1.0
    assert cosine(np.zeros(EMBED_DIM), vectors[0]) == 0.0


# ---------------------------------------------------------------------------
# vector store


def make_chunks(n, doc_id="d", text_of=None):
    text_of = text_of or (lambda i: f"chunk number {i} about topic {i % 5}")
    return [Chunk(doc_id=doc_id, seq=i, text=text_of(i), token_count=len(text_of(i).split()))
            for i in range(n)]


def test_upsert_counts_and_idempotence():
    store = VectorStore()
    chunks = make_chunks(3)
    assert store.upsert(chunks) == 3
    assert len(store) == 3
    assert store.upsert(chunks) == 3
    assert len(store) == 3


def test_upsert_replacement_reflects_in_retrieval():
    store = VectorStore()
    store.upsert([Chunk("d", 0, "amplifier noise figure", 3)])
    before = store.retrieve("amplifier noise figure", k=1)
    assert before[0].score == pytest.approx(1.0, abs=1e-12)
    store.upsert([Chunk("d", 0, "spectral occupancy table", 3)])
    assert len(store) == 1
    after = store.retrieve("amplifier noise figure", k=1)
    assert after[0].score < 1.0
    replaced = store.retrieve("spectral occupancy table", k=1)
    assert replaced[0].score == pytest.approx(1.0, abs=1e-12)


def test_retrieve_empty_store_returns_empty_list():
    assert VectorStore().retrieve("anything", k=5) == []


def test_retrieve_self_query_scores_one():
    store = VectorStore()
    store.upsert([Chunk("d", 0, "optical return loss check", 4)])
    hits = store.retrieve("optical return loss check", k=3)
    assert len(hits) == 1
    assert hits[0].score == pytest.approx(1.0, abs=1e-12)
    assert hits[0].chunk.ref == "d#0"


def test_retrieve_k_validation():
    store = VectorStore()
    with pytest.raises(ConfigError):
        store.retrieve("x", k=0)


def test_retrieve_matches_brute_force_scan():
    rng = random.Random(2468)
    store = VectorStore()
    all_chunks = []
    for d in range(20):
        for s in range(10):
            text = words(rng.randint(2, 9), prefix=f"v{rng.randrange(40)}q")
            chunk = Chunk(f"doc{d:02d}", s, text, len(text.split()))
            all_chunks.append(chunk)
    store.upsert(all_chunks)
    entries = [(c.doc_id, c.seq, embed(c.text)) for c in all_chunks]
    for _ in range(25):
        query = words(rng.randint(1, 6), prefix=f"v{rng.randrange(40)}q")
        k = rng.randint(1, 8)
        got = store.retrieve(query, k=k)
        want = oracles.brute_force_retrieve(entries, embed(query), k)
        assert [(h.chunk.doc_id, h.chunk.seq) for h in got] == [
            (doc_id, seq) for _, doc_id, seq in want
        ]
        for hit, (score, _, _) in zip(got, want):
            assert hit.score == pytest.approx(score, abs=1e-12)


def test_hits_sorted_with_deterministic_ties():
    store = VectorStore()
    store.upsert([
        Chunk("b", 0, "identical text here", 3),
        Chunk("a", 1, "identical text here", 3),
        Chunk("a", 0, "identical text here", 3),
    ])
    hits = store.retrieve("identical text here", k=3)
    assert [(h.chunk.doc_id, h.chunk.seq) for h in hits] == [
        ("a", 0), ("a", 1), ("b", 0),
    ]


# ---------------------------------------------------------------------------
# persistence and directory loading


def test_store_save_load_round_trip(tmp_path):
    store = VectorStore()
    store.upsert(make_chunks(17, doc_id="alpha"))
    store.upsert(make_chunks(5, doc_id="beta", text_of=lambda i: f"beta topic {i}"))
    path = tmp_path / "store.bin"
    store.save(path)
    loaded = VectorStore.load(path)
    assert len(loaded) == len(store)
    assert loaded.chunks() == store.chunks()
    query = "beta topic 3"
    assert [h.to_dict() for h in loaded.retrieve(query, k=4)] == [
        h.to_dict() for h in store.retrieve(query, k=4)
    ]


def test_store_load_rejects_corrupt_header(tmp_path):
    path = tmp_path / "store.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ParseError):
        VectorStore.load(path)


def test_index_documents_and_load_directory(tmp_path):
    (tmp_path / "first.txt").write_text(words(250), encoding="utf-8")
    (tmp_path / "second.txt").write_text("short document body", encoding="utf-8")
    (tmp_path / "ignored.md").write_text("not text", encoding="utf-8")
    docs = load_directory(tmp_path, kind=DocKind.MANUAL)
    assert [d.id for d in docs] == ["first", "second"]
    assert all(d.kind is DocKind.MANUAL for d in docs)
    store = VectorStore()
    count = index_documents(store, docs, max_tokens=200, overlap=40)
    assert count == len(store) == 3  # 250 tokens -> 2 chunks, short doc -> 1
