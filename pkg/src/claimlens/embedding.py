"""Text embeddings, a segment vector index, and cosine top-k queries.

Vectors are float64 numpy arrays, L2-normalized on ingest. Two providers are
built in: an HTTP endpoint speaking ``{"texts": [...]} -> {"vectors": [...]}``
and a deterministic local hashed bag-of-words embedder so the whole pipeline
runs offline. The index is write-once / read-many; concurrent queries are
safe.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import struct
from typing import Iterable, Protocol, Sequence

import numpy as np
import requests

from .errors import DimensionMismatch, EmptyIndex, ProviderUnavailable, Timeout, ZeroVector

_NORM_TOL = 1e-9


class EmbeddingProvider(Protocol):
    def embed(self, texts: Sequence[str]) -> list[list[float]]: ...


# ---------------------------------------------------------------------------
# Providers
# ---------------------------------------------------------------------------


class HashedBowEmbedder:
    """Deterministic local embedder: token-hash buckets over a fixed dim.

    Tokens are hashed with keyed blake2b so the layout depends only on
    (token, seed); identical text always yields an identical vector, on any
    platform. Intended for tests and offline runs, not semantic quality.
    """

    def __init__(self, dim: int = 256, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self._key = struct.pack("<q", seed)
        self._token_re = re.compile(r"[a-z0-9]+")

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(
            token.encode("utf-8"), digest_size=8, key=self._key
        ).digest()
        return int.from_bytes(digest, "little") % self.dim

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        out = []
        for text in texts:
            tokens = self._token_re.findall(text.lower())
            if not tokens:
                tokens = [text]
            vec = [0.0] * self.dim
            for token in tokens:
                vec[self._bucket(token)] += 1.0
            out.append(vec)
        return out


class HttpEmbeddingProvider:
    """Remote embeddings endpoint; token comes from the environment."""

    def __init__(
        self,
        endpoint: str,
        model: str = "",
        api_key: str | None = None,
        timeout: float = 30.0,
        max_attempts: int = 3,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(
            "CLAIMLENS_EMBED_API_KEY", ""
        )
        self.timeout = timeout
        self.max_attempts = max_attempts

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        payload: dict = {"texts": list(texts)}
        if self.model:
            payload["model"] = self.model
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for _ in range(self.max_attempts):
            try:
                resp = requests.post(
                    self.endpoint, json=payload, headers=headers, timeout=self.timeout
                )
                resp.raise_for_status()
                return resp.json()["vectors"]
            except requests.Timeout as exc:
                last_error = exc
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_error = exc
        if isinstance(last_error, requests.Timeout):
            raise Timeout(f"embedding endpoint timed out: {self.endpoint}")
        raise ProviderUnavailable(
            f"embedding endpoint failed after {self.max_attempts} attempts: {last_error}"
        )


# ---------------------------------------------------------------------------
# Embedding operations
# ---------------------------------------------------------------------------


class Embedder:
    """Normalizing front-end over a provider: enforces dims and unit norms."""

    def __init__(self, provider: EmbeddingProvider):
        self.provider = provider

    def embed_texts(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            return []
        for t in texts:
            if not isinstance(t, str) or not t:
                raise ValueError("texts must be non-empty strings")
        raw = self.provider.embed(texts)
        if len(raw) != len(texts):
            raise ProviderUnavailable(
                f"provider returned {len(raw)} vectors for {len(texts)} texts"
            )
        vectors = []
        dim = None
        for values in raw:
            vec = np.asarray(values, dtype=np.float64)
            if vec.ndim != 1:
                raise DimensionMismatch("provider returned a non-flat vector")
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise DimensionMismatch(
                    f"provider returned dims {dim} and {vec.shape[0]} in one batch"
                )
            if not np.all(np.isfinite(vec)):
                raise ProviderUnavailable("provider returned non-finite values")
            vectors.append(normalize(vec))
        return vectors

    def embed_one(self, text: str) -> np.ndarray:
        return self.embed_texts([text])[0]


def normalize(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ZeroVector("cannot normalize a zero vector")
    return vec / norm


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise DimensionMismatch(f"dims differ: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVector("cosine similarity undefined for zero vectors")
    value = float(np.dot(a, b)) / (norm_a * norm_b)
    return max(-1.0, min(1.0, value))


# ---------------------------------------------------------------------------
# Index
# ---------------------------------------------------------------------------


class EmbeddingIndex:
    """In-memory map of segment_id -> unit vector with exact top-k search."""

    def __init__(self, dim: int):
        self.dim = dim
        self._ids: list[str] = []
        self._rows: dict[str, int] = {}
        self._vectors: list[np.ndarray] = []
        self._matrix: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, segment_id: str) -> bool:
        return segment_id in self._rows

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    def add(self, segment_id: str, vector: np.ndarray) -> None:
        if segment_id in self._rows:
            raise ValueError(f"segment {segment_id!r} indexed twice")
        vec = np.asarray(vector, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise DimensionMismatch(
                f"vector dim {vec.shape} does not match index dim {self.dim}"
            )
        norm = float(np.linalg.norm(vec))
        if abs(norm - 1.0) > _NORM_TOL:
            vec = normalize(vec)
        self._rows[segment_id] = len(self._ids)
        self._ids.append(segment_id)
        self._vectors.append(vec)
        self._matrix = None

    def add_batch(self, ids: Iterable[str], vectors: Iterable[np.ndarray]) -> None:
        for segment_id, vec in zip(ids, vectors):
            self.add(segment_id, vec)

    def get(self, segment_id: str) -> np.ndarray:
        return self._vectors[self._rows[segment_id]]

    def _dense(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = np.vstack(self._vectors) if self._vectors else np.zeros((0, self.dim))
        return self._matrix

    def similarities(self, query: np.ndarray) -> np.ndarray:
        """Cosine of the (unit) query against every stored vector, index order."""
        if len(self) == 0:
            raise EmptyIndex("index holds no vectors")
        q = normalize(np.asarray(query, dtype=np.float64))
        sims = self._dense() @ q
        return np.clip(sims, -1.0, 1.0)

    def top_k(self, query: np.ndarray, k: int) -> list[tuple[str, float]]:
        """Top-k entries by descending similarity, ties by ascending id."""
        if k < 1:
            raise ValueError("k must be >= 1")
        sims = self.similarities(query)
        ranked = sorted(
            zip(self._ids, sims.tolist()), key=lambda item: (-item[1], item[0])
        )
        return ranked[: min(k, len(ranked))]

    # --- persistence: flat binary vectors + sidecar id manifest ---

    def save(self, directory: str, fingerprint: str = "") -> None:
        os.makedirs(directory, exist_ok=True)
        vec_path = os.path.join(directory, "vectors.bin")
        entries = []
        with open(vec_path, "wb") as fh:
            offset = 0
            for segment_id, vec in zip(self._ids, self._vectors):
                data = vec.astype("<f8").tobytes()
                fh.write(data)
                entries.append({"segment_id": segment_id, "offset": offset})
                offset += len(data)
        manifest = {
            "dim": self.dim,
            "count": len(self._ids),
            "config_fingerprint": fingerprint,
            "entries": entries,
        }
        with open(os.path.join(directory, "index_manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, directory: str) -> tuple["EmbeddingIndex", str]:
        manifest_path = os.path.join(directory, "index_manifest.json")
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        dim = manifest["dim"]
        index = cls(dim)
        raw = np.fromfile(os.path.join(directory, "vectors.bin"), dtype="<f8")
        count = manifest["count"]
        if raw.size != count * dim:
            raise DimensionMismatch(
                f"vectors.bin holds {raw.size} floats, expected {count * dim}"
            )
        matrix = raw.reshape(count, dim)
        for entry, row in zip(manifest["entries"], matrix):
            index.add(entry["segment_id"], row)
        return index, manifest.get("config_fingerprint", "")
