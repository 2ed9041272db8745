import math
import random

import numpy as np
import pytest

from claimlens.embedding import (
    Embedder,
    EmbeddingIndex,
    HashedBowEmbedder,
    cosine_similarity,
    normalize,
)
from claimlens.errors import DimensionMismatch, EmptyIndex, ProviderUnavailable, ZeroVector


class ListProvider:
    def __init__(self, vectors):
        self.vectors = vectors

    def embed(self, texts):
        return self.vectors[: len(texts)]


# --- embed_texts ---


def test_mock_provider_deterministic(embedder):
    a, b = embedder.embed_texts(["same text", "same text"])
    assert np.array_equal(a, b)
    again = embedder.embed_one("same text")
    assert np.array_equal(a, again)


def test_distinct_texts_not_identical(embedder):
    a, b = embedder.embed_texts(["aaa", "zzz"])
    assert cosine_similarity(a, b) < 1.0


def test_vectors_unit_norm(embedder):
    vectors = embedder.embed_texts(["one two three", "four five", "six"])
    for vec in vectors:
        assert abs(np.linalg.norm(vec) - 1.0) <= 1e-9


def test_mixed_dims_rejected():
    embedder = Embedder(ListProvider([[1.0, 0.0, 0.0], [1.0, 0.0]]))
    with pytest.raises(DimensionMismatch):
        embedder.embed_texts(["a", "b"])


def test_wrong_count_rejected():
    embedder = Embedder(ListProvider([[1.0, 0.0]]))
    with pytest.raises(ProviderUnavailable):
        embedder.embed_texts(["a", "b"])


def test_empty_text_rejected(embedder):
    with pytest.raises(ValueError):
        embedder.embed_texts([""])


def test_seed_changes_layout():
    a = Embedder(HashedBowEmbedder(dim=64, seed=0)).embed_one("token soup")
    b = Embedder(HashedBowEmbedder(dim=64, seed=1)).embed_one("token soup")
    assert not np.array_equal(a, b)


# --- cosine ---


def test_cosine_identity():
    v = normalize(np.array([1.0, 2.0, 3.0]))
    assert cosine_similarity(v, v) == pytest.approx(1.0)


def test_cosine_orthogonal():
    assert cosine_similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0


def test_cosine_antipodal():
    v = np.array([0.4, -0.3, 0.1])
    assert cosine_similarity(v, -v) == pytest.approx(-1.0)


def test_cosine_zero_vector():
    with pytest.raises(ZeroVector):
        cosine_similarity(np.zeros(3), np.array([1.0, 0.0, 0.0]))


def test_cosine_dim_mismatch():
    with pytest.raises(DimensionMismatch):
        cosine_similarity(np.ones(3), np.ones(4))


# --- index / top_k ---


def _angled(c: float) -> np.ndarray:
    return np.array([c, math.sqrt(1.0 - c * c)])


def test_top_k_known_similarities():
    index = EmbeddingIndex(dim=2)
    index.add("s1", _angled(0.9))
    index.add("s2", _angled(0.5))
    index.add("s3", _angled(0.1))
    got = index.top_k(np.array([1.0, 0.0]), 2)
    assert [sid for sid, _ in got] == ["s1", "s2"]
    assert got[0][1] == pytest.approx(0.9)
    assert got[1][1] == pytest.approx(0.5)


def test_top_k_larger_than_index():
    index = EmbeddingIndex(dim=2)
    index.add("s1", _angled(0.9))
    index.add("s2", _angled(0.5))
    got = index.top_k(np.array([1.0, 0.0]), 10)
    assert len(got) == 2


def test_top_k_tie_broken_by_id():
    index = EmbeddingIndex(dim=2)
    index.add("zz", _angled(0.5))
    index.add("aa", _angled(0.5))
    got = index.top_k(np.array([1.0, 0.0]), 2)
    assert [sid for sid, _ in got] == ["aa", "zz"]


def test_top_k_empty_index():
    with pytest.raises(EmptyIndex):
        EmbeddingIndex(dim=2).top_k(np.array([1.0, 0.0]), 1)


def test_duplicate_id_rejected():
    index = EmbeddingIndex(dim=2)
    index.add("s1", _angled(0.9))
    with pytest.raises(ValueError):
        index.add("s1", _angled(0.5))


def test_top_k_matches_full_sort_oracle():
    rng = random.Random(42)
    rows = []
    index = EmbeddingIndex(dim=16)
    for i in range(10_000):
        vec = np.array([rng.gauss(0, 1) for _ in range(16)])
        vec = vec / np.linalg.norm(vec)
        sid = f"seg{i:05d}"
        index.add(sid, vec)
        rows.append((sid, vec))
    query = normalize(np.array([rng.gauss(0, 1) for _ in range(16)]))
    sims = {sid: float(np.clip(np.dot(vec, query), -1, 1)) for sid, vec in rows}
    oracle = sorted(sims.items(), key=lambda kv: (-kv[1], kv[0]))
    for k in (1, 7, 100, 10_000, 20_000):
        got = index.top_k(query, k)
        expected = oracle[: min(k, len(oracle))]
        assert [sid for sid, _ in got] == [sid for sid, _ in expected]
        assert np.allclose(
            [s for _, s in got], [s for _, s in expected], atol=1e-12, rtol=0
        )


# --- persistence ---


def test_save_load_roundtrip_and_byte_identity(tmp_path, embedder):
    texts = [f"text number {i} about magnets" for i in range(20)]
    vectors = embedder.embed_texts(texts)
    index = EmbeddingIndex(dim=vectors[0].shape[0])
    index.add_batch([f"s{i}" for i in range(20)], vectors)

    dir_a = tmp_path / "a"
    dir_b = tmp_path / "b"
    index.save(str(dir_a), fingerprint="abc123")
    loaded, fingerprint = EmbeddingIndex.load(str(dir_a))
    assert fingerprint == "abc123"
    assert loaded.ids == index.ids
    loaded.save(str(dir_b), fingerprint="abc123")

    assert (dir_a / "vectors.bin").read_bytes() == (dir_b / "vectors.bin").read_bytes()
    assert (dir_a / "index_manifest.json").read_text() == (
        dir_b / "index_manifest.json"
    ).read_text()
