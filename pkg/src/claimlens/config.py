"""Pipeline configuration: every tunable in one place, with a stable fingerprint.

The fingerprint hashes all semantic parameters (everything that can change a
result). Execution-level settings (output directory, concurrency cap) and
provider pointers (endpoints, model names, transcript paths) are excluded:
moving artifacts or swapping where a provider lives does not invalidate them,
and what a provider actually answers is pinned by transcripts, not by config.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

from .errors import UsageError

# Execution-level and pointer fields, kept out of the fingerprint. Input
# locations (corpus, transcripts) are pointers too: their content shapes the
# artifacts directly, and a path string would tie fingerprints to a machine.
_NON_SEMANTIC_FIELDS = (
    "output_dir",
    "concurrency_cap",
    "corpus_path",
    "embed_endpoint",
    "embed_model",
    "chat_endpoint",
    "chat_model",
    "mock_dir",
)


@dataclass
class PipelineConfig:
    claim: str = ""
    corpus_path: str = ""
    output_dir: str = "out"

    # hierarchy shape
    max_depth: int = 3
    k_aspects: int = 5
    k_subaspects: int = 5
    k_keywords: int = 10

    # discriminative ranking
    pool_size: int = 100
    k_segments: int = 10
    beta: float = 1.0
    gamma: float = 1.0
    epsilon: float = 1e-6

    # relevance filtering
    delta: float = 0.5
    window: int = 10
    min_chars: int = 500

    # segmentation
    rank_mask: int = 11
    min_density_gain: float = 0.05
    min_segment_sentences: int = 2
    max_segments_per_doc: int = 50

    # embeddings
    embed_dim: int = 256
    embed_endpoint: str = ""
    embed_model: str = ""

    # chat provider
    chat_endpoint: str = ""
    chat_model: str = ""
    mock_dir: str = ""
    max_retries: int = 3
    temperatures: dict[str, float] = field(default_factory=dict)

    # classification
    classify_threshold: float = 0.9

    # execution
    concurrency_cap: int = 4
    seed: int = 0

    def validate(self) -> None:
        counts = {
            "k_aspects": self.k_aspects,
            "k_subaspects": self.k_subaspects,
            "k_keywords": self.k_keywords,
            "pool_size": self.pool_size,
            "k_segments": self.k_segments,
            "window": self.window,
            "embed_dim": self.embed_dim,
            "concurrency_cap": self.concurrency_cap,
        }
        for name, value in counts.items():
            if value < 1:
                raise UsageError(f"{name} must be >= 1, got {value}")
        if self.max_depth < 0:
            raise UsageError(f"max_depth must be >= 0, got {self.max_depth}")
        if not 0.0 < self.delta < 1.0:
            raise UsageError(f"delta must be in (0,1), got {self.delta}")
        if self.beta <= 0 or self.gamma <= 0:
            raise UsageError("beta and gamma must be positive")
        if self.epsilon <= 0:
            raise UsageError("epsilon must be positive")

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def fingerprint(self) -> str:
        """Hash of all semantic parameters, stable across runs and platforms."""
        payload = {
            k: v for k, v in self.to_dict().items() if k not in _NON_SEMANTIC_FIELDS
        }
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def load_config_file(path: str) -> dict[str, Any]:
    """Read a JSON config file into a plain dict (flags override it later)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    return data
