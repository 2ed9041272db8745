"""Perspective discovery over a built hierarchy.

Stages, in order:

1. A claim representation blends the claim embedding with the mean embedding
   of its coarse aspects ("<label> with respect to <claim>"), renormalized.
2. Segments long enough to judge are ranked by cosine to that representation
   and the relevance/irrelevance boundary rank is located by binary search on
   the local window's relevant fraction, caching every judgment so each
   segment is judged at most once.
3. Retained segments descend the hierarchy top-down: at each node the
   children within a relative similarity band of the best child are explored,
   and the segment attaches wherever descent terminates (possibly several
   leaves; the root if the tree has no aspects).
4. Every attached (segment, node) pair gets a stance judgment; per node the
   non-irrelevant segments form disjoint support / neutral / oppose buckets,
   each summarized into a perspective. Paper ids come from segment
   provenance, so one paper may appear in several buckets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .corpus import Segment
from .embedding import Embedder, EmbeddingIndex, normalize
from .errors import NoCoarseAspects
from .hierarchy import AspectHierarchy
from .llm_gateway import (
    LlmGateway,
    render_perspective_summarize,
    render_relevance_judge,
    render_stance_detect,
)

STANCES = ("support", "neutral", "oppose")

_STANCE_BY_LABEL = {
    "supports_claim": "support",
    "neutral_to_claim": "neutral",
    "opposes_claim": "oppose",
}


@dataclass(frozen=True)
class FilterParams:
    delta: float = 0.5
    window: int = 10
    min_chars: int = 500


@dataclass
class StanceBucket:
    summary: str = ""
    segment_ids: list[str] = field(default_factory=list)
    paper_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "summary": self.summary,
            "segment_ids": list(self.segment_ids),
            "paper_ids": list(self.paper_ids),
        }


@dataclass
class PerspectiveSet:
    support: StanceBucket = field(default_factory=StanceBucket)
    neutral: StanceBucket = field(default_factory=StanceBucket)
    oppose: StanceBucket = field(default_factory=StanceBucket)

    def bucket(self, stance: str) -> StanceBucket:
        return getattr(self, stance)

    def to_dict(self) -> dict[str, Any]:
        return {stance: self.bucket(stance).to_dict() for stance in STANCES}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PerspectiveSet":
        out = cls()
        for stance in STANCES:
            raw = data.get(stance, {})
            out.bucket(stance).summary = raw.get("summary", "")
            out.bucket(stance).segment_ids = list(raw.get("segment_ids", []))
            out.bucket(stance).paper_ids = list(raw.get("paper_ids", []))
        return out


@dataclass(frozen=True)
class ConsensusCounts:
    segments: dict[str, int]
    papers: dict[str, int]


# ---------------------------------------------------------------------------
# Claim representation
# ---------------------------------------------------------------------------


def coarse_query_text(label: str, claim: str) -> str:
    return f"{label} with respect to {claim}"


def claim_representation(
    claim: str, coarse_labels: Sequence[str], embedder: Embedder
) -> np.ndarray:
    """Blend of the claim embedding and the mean coarse-aspect embedding."""
    if not coarse_labels:
        raise NoCoarseAspects("claim representation needs at least one coarse aspect")
    claim_vec = embedder.embed_one(claim)
    child_vecs = embedder.embed_texts(
        [coarse_query_text(label, claim) for label in coarse_labels]
    )
    combined = 0.5 * (claim_vec + np.mean(child_vecs, axis=0))
    return normalize(combined)


# ---------------------------------------------------------------------------
# Relevance boundary
# ---------------------------------------------------------------------------


class CachingJudge:
    """Memoizes a rank -> bool relevance judge and counts fresh calls."""

    def __init__(self, fn: Callable[[int], bool]):
        self._fn = fn
        self.cache: dict[int, bool] = {}
        self.fresh_calls = 0
        self.cache_hits = 0

    def __call__(self, i: int) -> bool:
        if i in self.cache:
            self.cache_hits += 1
            return self.cache[i]
        verdict = self._fn(i)
        self.cache[i] = verdict
        self.fresh_calls += 1
        return verdict


def relevance_boundary(count: int, judge: Callable[[int], bool], params: FilterParams) -> int:
    """Smallest 0-based rank whose +/- window is mostly irrelevant.

    The relevance profile over the similarity ranking is assumed monotone
    non-increasing, so the first rank where the window's relevant fraction
    drops below delta is found by binary search. Returns ``count`` when no
    window is that sparse (everything relevant) and 0 when even the top
    window is (nothing relevant). Segments ranked below the returned value
    are the retained set.
    """
    if count == 0:
        return 0
    n = params.window

    def sparse(i: int) -> bool:
        lo, hi = max(0, i - n), min(count - 1, i + n)
        relevant = sum(1 for j in range(lo, hi + 1) if judge(j))
        return relevant / (hi - lo + 1) < params.delta

    lo, hi = 0, count
    while lo < hi:
        mid = (lo + hi) // 2
        if sparse(mid):
            hi = mid
        else:
            lo = mid + 1
    return lo


# ---------------------------------------------------------------------------
# Taxonomy-guided classification (simplified top-down descent)
# ---------------------------------------------------------------------------


def node_profile_text(label: str, description: str, keywords: Sequence[str]) -> str:
    return f"{label}: {description}; keywords: {', '.join(keywords)}"


def classify_segments(
    segment_ids: Sequence[str],
    tree: AspectHierarchy,
    embedder: Embedder,
    index: EmbeddingIndex,
    relative_threshold: float = 0.9,
) -> dict[str, list[str]]:
    """Attach each segment to the node(s) where its top-down descent ends.

    At every internal node the segment's similarity to each child profile is
    computed; children within ``relative_threshold`` of the best child are
    explored. Leaves reached collect the segment. A tree with no aspects
    attaches everything at the root.
    """
    profile_vec: dict[str, np.ndarray] = {}
    node_ids = [nid for nid in tree.sorted_ids() if nid != tree.root]
    if node_ids:
        texts = [
            node_profile_text(
                tree.node(nid).label, tree.node(nid).description, tree.node(nid).keywords
            )
            for nid in node_ids
        ]
        for nid, vec in zip(node_ids, embedder.embed_texts(texts)):
            profile_vec[nid] = vec

    attachments: dict[str, list[str]] = {nid: [] for nid in tree.nodes}
    for segment_id in segment_ids:
        seg_vec = index.get(segment_id)
        frontier = [tree.root]
        terminals: list[str] = []
        while frontier:
            node_id = frontier.pop(0)
            children = tree.node(node_id).children
            if not children:
                terminals.append(node_id)
                continue
            sims = {
                child: max(0.0, float(np.dot(seg_vec, profile_vec[child])))
                for child in children
            }
            best = max(sims.values())
            frontier.extend(
                child for child in children if sims[child] >= relative_threshold * best
            )
        for node_id in sorted(set(terminals)):
            attachments[node_id].append(segment_id)
    return attachments


# ---------------------------------------------------------------------------
# Stance detection, summaries, consensus
# ---------------------------------------------------------------------------


def detect_stance(
    gateway: LlmGateway,
    tree: AspectHierarchy,
    node_id: str,
    segment: Segment,
) -> str:
    node = tree.node(node_id)
    data = gateway.complete_json(
        render_stance_detect(
            claim=tree.claim,
            aspect=node.label,
            description=node.description,
            path=tree.path_string(node_id),
            segment_text=segment.text,
            segment_id=segment.segment_id,
            node_id=node_id,
        )
    )
    return data["stance"]


def summarize_perspectives(
    gateway: LlmGateway,
    tree: AspectHierarchy,
    node_id: str,
    buckets: dict[str, list[Segment]],
) -> PerspectiveSet:
    """One summary per non-empty stance bucket; paper ids deduped from provenance."""
    node = tree.node(node_id)
    out = PerspectiveSet()
    for stance in STANCES:
        segments = buckets.get(stance, [])
        bucket = out.bucket(stance)
        bucket.segment_ids = [s.segment_id for s in segments]
        bucket.paper_ids = sorted({s.doc_id for s in segments})
        if not segments:
            continue
        listing = "\n".join(f"[{i + 1}] {s.text}" for i, s in enumerate(segments))
        data = gateway.complete_json(
            render_perspective_summarize(
                claim=tree.claim,
                aspect=node.label,
                description=node.description,
                stance=stance,
                segments_text=listing,
                node_id=node_id,
            )
        )
        bucket.summary = data["summary"]
    return out


def consensus_counts(perspectives: PerspectiveSet) -> ConsensusCounts:
    return ConsensusCounts(
        segments={s: len(perspectives.bucket(s).segment_ids) for s in STANCES},
        papers={s: len(perspectives.bucket(s).paper_ids) for s in STANCES},
    )


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------


def discover_perspectives(
    gateway: LlmGateway,
    embedder: Embedder,
    index: EmbeddingIndex,
    segments: dict[str, Segment],
    tree: AspectHierarchy,
    params: FilterParams,
    relative_threshold: float = 0.9,
) -> AspectHierarchy:
    """Run filtering, classification, stance detection, and summarization.

    Mutates and returns the tree: every node ends up with classified
    attached_segments and a (possibly empty) perspective set.
    """
    coarse_labels = [c.label for c in tree.children_of(tree.root)]
    candidates = [
        seg
        for seg in sorted(segments.values(), key=lambda s: s.segment_id)
        if len(seg.text) >= params.min_chars and seg.segment_id in index
    ]

    retained: list[Segment] = []
    if candidates and coarse_labels:
        c0 = claim_representation(tree.claim, coarse_labels, embedder)
        sims = {
            seg.segment_id: float(np.dot(index.get(seg.segment_id), c0))
            for seg in candidates
        }
        ordered = sorted(candidates, key=lambda s: (-sims[s.segment_id], s.segment_id))

        def judge_rank(i: int) -> bool:
            seg = ordered[i]
            data = gateway.complete_json(
                render_relevance_judge(
                    tree.claim, coarse_labels, seg.text, seg.segment_id
                )
            )
            return data["answer"] == "Yes"

        judge = CachingJudge(judge_rank)
        boundary = relevance_boundary(len(ordered), judge, params)
        retained = ordered[:boundary]
        gateway.log.record(
            "relevance_filter",
            candidates=len(ordered),
            boundary=boundary,
            fresh_calls=judge.fresh_calls,
            cache_hits=judge.cache_hits,
        )

    attachments = classify_segments(
        [s.segment_id for s in retained], tree, embedder, index, relative_threshold
    )

    for node_id in tree.sorted_ids():
        node = tree.node(node_id)
        node.attached_segments = list(attachments.get(node_id, []))
        buckets: dict[str, list[Segment]] = {s: [] for s in STANCES}
        for segment_id in node.attached_segments:
            segment = segments[segment_id]
            label = detect_stance(gateway, tree, node_id, segment)
            stance = _STANCE_BY_LABEL.get(label)
            if stance is not None:  # irrelevant_to_claim drops the segment
                buckets[stance].append(segment)
        node.perspectives = summarize_perspectives(
            gateway, tree, node_id, buckets
        ).to_dict()
    return tree
