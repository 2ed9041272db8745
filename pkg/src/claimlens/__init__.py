"""Corpus-grounded claim deconstruction: aspect hierarchies with perspectives."""

from .config import PipelineConfig
from .corpus import Document, Segment, load_corpus, segment_document, segment_fixed_window
from .embedding import Embedder, EmbeddingIndex, HashedBowEmbedder, cosine_similarity
from .hierarchy import AspectHierarchy, AspectNode, HierarchyBuilder, build_hierarchy
from .llm_gateway import LlmGateway, MockChatProvider, PromptInstance, task_params
from .perspective import (
    FilterParams,
    PerspectiveSet,
    claim_representation,
    consensus_counts,
    discover_perspectives,
    relevance_boundary,
)
from .ranking import (
    KeywordQuery,
    RankingParams,
    ScoredSegment,
    discriminativeness,
    distractor_score,
    rank_segments,
    target_score,
    zipf_weighted_mean,
)

__version__ = "0.1.0"

__all__ = [
    "AspectHierarchy",
    "AspectNode",
    "Document",
    "Embedder",
    "EmbeddingIndex",
    "FilterParams",
    "HashedBowEmbedder",
    "HierarchyBuilder",
    "KeywordQuery",
    "LlmGateway",
    "MockChatProvider",
    "PerspectiveSet",
    "PipelineConfig",
    "PromptInstance",
    "RankingParams",
    "ScoredSegment",
    "Segment",
    "build_hierarchy",
    "claim_representation",
    "consensus_counts",
    "cosine_similarity",
    "discover_perspectives",
    "discriminativeness",
    "distractor_score",
    "load_corpus",
    "rank_segments",
    "relevance_boundary",
    "segment_document",
    "segment_fixed_window",
    "target_score",
    "task_params",
    "zipf_weighted_mean",
]
