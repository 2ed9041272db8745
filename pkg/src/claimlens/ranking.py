"""Aspect-discriminative segment ranking.

A segment is valuable for discovering subaspects of a node when it discusses
that node in depth and its sibling nodes not at all. Three scores capture
this:

* target score: a Zipf-weighted mean of the segment's clamped cosine
  similarity to the node's keyword queries, where the keyword at significance
  rank r carries weight 1/r;
* distractor score: half the mean plus half the max of the target score
  computed against each sibling's keyword set (breadth and depth of off-node
  discussion);
* discriminativeness: beta * target over gamma * distractor, with a small
  epsilon floor on the denominator so a zero distractor stays finite and
  ordered above every finite-distractor peer of equal target. A node with no
  siblings has no distractor term and scores its raw target.

Keyword queries carry the node's ancestry ("<keyword> with respect to
<labels root..node>") so a query rewards discussion anchored in the claim's
context, not the bare keyword. Scoring is pure and data-parallel across
segments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embedding import EmbeddingIndex
from .errors import EmptyKeywordSet, EmptyList, EmptyPool


@dataclass(frozen=True)
class KeywordQuery:
    keyword: str
    node_id: str
    query_text: str
    embedding: np.ndarray
    rank: int  # 1-based significance index within the node's keyword list


@dataclass(frozen=True)
class RankingParams:
    beta: float = 1.0
    gamma: float = 1.0
    pool_size: int = 100
    k_segments: int = 10
    epsilon: float = 1e-6


@dataclass(frozen=True)
class ScoredSegment:
    segment_id: str
    target: float
    distractor: float
    score: float


def keyword_query_text(keyword: str, ancestor_labels: Sequence[str]) -> str:
    """Contextualized query for one keyword; labels run root to owning node."""
    return f"{keyword} with respect to {', '.join(ancestor_labels)}"


def node_query_text(
    claim: str, label: str, description: str, keywords: Sequence[str]
) -> str:
    """Retrieval query for a node: claim, aspect, description, keyword list."""
    return (
        f"Claim: {claim}; Aspect: {label}: {description}; "
        f"Aspect Keywords: {', '.join(keywords)}"
    )


def zipf_weighted_mean(values: Sequence[float]) -> float:
    """Harmonically weighted mean: position r in the input carries weight 1/r.

    The input order is the significance order; values are NOT sorted first.
    """
    if len(values) == 0:
        raise EmptyList("cannot average an empty list")
    num = 0.0
    den = 0.0
    for r, value in enumerate(values, start=1):
        num += value / r
        den += 1.0 / r
    return num / den


def _query_matrix(queries: Sequence[KeywordQuery]) -> np.ndarray:
    return np.vstack([q.embedding for q in queries])


def _zipf_weights(k: int) -> np.ndarray:
    w = 1.0 / np.arange(1, k + 1, dtype=np.float64)
    return w / w.sum()


def batch_target_scores(
    segment_matrix: np.ndarray, queries: Sequence[KeywordQuery]
) -> np.ndarray:
    """Target score of every segment row against one keyword set.

    Cosine similarities are clamped to [0, 1] before weighting so the scores
    behave as rewards and the downstream ratio stays sign-stable.
    """
    if len(queries) == 0:
        raise EmptyKeywordSet("node has no keyword queries")
    sims = np.clip(segment_matrix @ _query_matrix(queries).T, 0.0, 1.0)
    return sims @ _zipf_weights(len(queries))


def target_score(segment: np.ndarray, queries: Sequence[KeywordQuery]) -> float:
    return float(batch_target_scores(segment.reshape(1, -1), queries)[0])


def batch_distractor_scores(
    segment_matrix: np.ndarray, sibling_sets: Sequence[Sequence[KeywordQuery]]
) -> np.ndarray:
    """Distractor score of every segment row: 0.5 * mean + 0.5 * max of the
    per-sibling target scores. No siblings means no distraction: all zeros.
    """
    n = segment_matrix.shape[0]
    if not sibling_sets:
        return np.zeros(n)
    per_sibling = np.stack(
        [batch_target_scores(segment_matrix, queries) for queries in sibling_sets]
    )  # (n_siblings, n_segments)
    return 0.5 * per_sibling.mean(axis=0) + 0.5 * per_sibling.max(axis=0)


def distractor_score(
    segment: np.ndarray, sibling_sets: Sequence[Sequence[KeywordQuery]]
) -> float:
    return float(batch_distractor_scores(segment.reshape(1, -1), sibling_sets)[0])


def discriminativeness(
    target: float, distractor: float | None, params: RankingParams
) -> float:
    """Reward/penalty ratio; ``distractor=None`` marks a node with no siblings,
    in which case the penalty term is dropped and the target stands alone.
    """
    if distractor is None:
        return target
    return (params.beta * target) / (params.gamma * max(distractor, params.epsilon))


def rank_segments(
    index: EmbeddingIndex,
    query_embedding: np.ndarray,
    target_queries: Sequence[KeywordQuery],
    sibling_sets: Sequence[Sequence[KeywordQuery]],
    params: RankingParams,
) -> list[ScoredSegment]:
    """Score the pool_size most query-similar segments, return the top k.

    Ordering is by descending discriminativeness, ties broken by ascending
    segment_id.
    """
    pool = index.top_k(query_embedding, params.pool_size)
    if not pool:
        raise EmptyPool("no candidate segments for node query")
    ids = [segment_id for segment_id, _ in pool]
    matrix = np.vstack([index.get(segment_id) for segment_id in ids])
    targets = batch_target_scores(matrix, target_queries)
    if sibling_sets:
        distractors = batch_distractor_scores(matrix, sibling_sets)
        scores = (params.beta * targets) / (
            params.gamma * np.maximum(distractors, params.epsilon)
        )
    else:
        distractors = np.zeros(len(ids))
        scores = targets.copy()
    scored = [
        ScoredSegment(
            segment_id=sid,
            target=float(t),
            distractor=float(d),
            score=float(s),
        )
        for sid, t, d, s in zip(ids, targets, distractors, scores)
    ]
    scored.sort(key=lambda item: (-item.score, item.segment_id))
    return scored[: params.k_segments]
