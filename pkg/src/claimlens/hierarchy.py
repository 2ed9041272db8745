"""Aspect hierarchy construction.

The tree starts as the bare claim (node "0", depth 0). Coarse aspects become
its children, then a breadth-first loop expands the frontier: every node in a
sibling group is keyword-enriched first (sibling keyword sets are an input to
the distractor score), then each node's discriminative segments are ranked
and handed to the LLM to propose between 2 and k subaspects, which join the
queue. Nodes at the configured maximum depth are leaves and are never
enriched or expanded; a node whose retrieval pool comes back empty is marked
a leaf rather than inventing children the corpus cannot ground.

Node ids are path slugs ("0", "0.1", "0.1.2") so serialized trees diff
cleanly and sort deterministically.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Any, Sequence

from .config import PipelineConfig
from .corpus import Segment
from .embedding import Embedder, EmbeddingIndex
from .errors import EmptyAspectList, EmptyIndex, EmptyPool, SchemaViolation, TooFewSubaspects
from .llm_gateway import (
    LlmGateway,
    OperationLog,
    render_coarse_aspects,
    render_keyword_extract,
    render_keyword_filter,
    render_subaspect_discovery,
)
from .ranking import (
    KeywordQuery,
    RankingParams,
    ScoredSegment,
    keyword_query_text,
    node_query_text,
    rank_segments,
)

ROOT_ID = "0"


@dataclass
class AspectNode:
    node_id: str
    label: str
    description: str
    keywords: list[str] = field(default_factory=list)
    parent: str | None = None
    children: list[str] = field(default_factory=list)
    depth: int = 0
    attached_segments: list[str] = field(default_factory=list)
    perspectives: dict[str, Any] | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "node_id": self.node_id,
            "label": self.label,
            "description": self.description,
            "keywords": list(self.keywords),
            "parent": self.parent,
            "children": list(self.children),
            "depth": self.depth,
            "attached_segments": list(self.attached_segments),
            "perspectives": self.perspectives,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AspectNode":
        return cls(
            node_id=data["node_id"],
            label=data["label"],
            description=data["description"],
            keywords=list(data.get("keywords", [])),
            parent=data.get("parent"),
            children=list(data.get("children", [])),
            depth=data["depth"],
            attached_segments=list(data.get("attached_segments", [])),
            perspectives=data.get("perspectives"),
        )


def _path_key(node_id: str) -> tuple[int, ...]:
    return tuple(int(part) for part in node_id.split("."))


class AspectHierarchy:
    """Single-rooted aspect tree with path-slug node ids."""

    def __init__(self, claim: str, max_depth: int):
        self.claim = claim
        self.max_depth = max_depth
        self.nodes: dict[str, AspectNode] = {
            ROOT_ID: AspectNode(node_id=ROOT_ID, label=claim, description="", depth=0)
        }
        self.root = ROOT_ID

    def node(self, node_id: str) -> AspectNode:
        return self.nodes[node_id]

    def add_child(
        self, parent_id: str, label: str, description: str, keywords: Sequence[str]
    ) -> AspectNode:
        parent = self.nodes[parent_id]
        child_id = f"{parent_id}.{len(parent.children) + 1}"
        child = AspectNode(
            node_id=child_id,
            label=label,
            description=description,
            keywords=list(keywords),
            parent=parent_id,
            depth=parent.depth + 1,
        )
        parent.children.append(child_id)
        self.nodes[child_id] = child
        return child

    def sorted_ids(self) -> list[str]:
        return sorted(self.nodes, key=_path_key)

    def children_of(self, node_id: str) -> list[AspectNode]:
        return [self.nodes[c] for c in self.nodes[node_id].children]

    def sibling_ids(self, node_id: str) -> list[str]:
        node = self.nodes[node_id]
        if node.parent is None:
            return []
        return [c for c in self.nodes[node.parent].children if c != node_id]

    def path_labels(self, node_id: str) -> list[str]:
        """Labels from the root claim down to the node, inclusive."""
        labels: list[str] = []
        current: str | None = node_id
        while current is not None:
            node = self.nodes[current]
            labels.append(node.label)
            current = node.parent
        return list(reversed(labels))

    def path_string(self, node_id: str) -> str:
        return " -> ".join(self.path_labels(node_id))

    def validate(self) -> None:
        seen: set[str] = set()
        queue = deque([self.root])
        while queue:
            node_id = queue.popleft()
            if node_id in seen:
                raise ValueError(f"cycle through node {node_id}")
            seen.add(node_id)
            node = self.nodes[node_id]
            if node.depth > self.max_depth:
                raise ValueError(f"node {node_id} exceeds max depth")
            for child_id in node.children:
                child = self.nodes[child_id]
                if child.parent != node_id or child.depth != node.depth + 1:
                    raise ValueError(f"bad link {node_id} -> {child_id}")
                queue.append(child_id)
        if seen != set(self.nodes):
            raise ValueError("tree is not connected")

    def to_dict(self, config_fingerprint: str = "", partial: bool = False) -> dict[str, Any]:
        return {
            "claim": self.claim,
            "config_fingerprint": config_fingerprint,
            "max_depth": self.max_depth,
            "partial": partial,
            "nodes": [self.nodes[nid].to_dict() for nid in self.sorted_ids()],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AspectHierarchy":
        tree = cls(data["claim"], data.get("max_depth", 0))
        tree.nodes = {}
        for node_data in data["nodes"]:
            node = AspectNode.from_dict(node_data)
            tree.nodes[node.node_id] = node
        tree.root = ROOT_ID
        return tree


# ---------------------------------------------------------------------------
# Builder
# ---------------------------------------------------------------------------


class HierarchyBuilder:
    """Drives coarse discovery, enrichment, ranking, and subaspect expansion."""

    def __init__(
        self,
        gateway: LlmGateway,
        embedder: Embedder,
        index: EmbeddingIndex,
        segments: dict[str, Segment],
        config: PipelineConfig,
        log: OperationLog | None = None,
    ):
        self.gateway = gateway
        self.embedder = embedder
        self.index = index
        self.segments = segments
        self.config = config
        self.log = log if log is not None else gateway.log
        self.ranking_params = RankingParams(
            beta=config.beta,
            gamma=config.gamma,
            pool_size=config.pool_size,
            k_segments=config.k_segments,
            epsilon=config.epsilon,
        )
        self.tree: AspectHierarchy | None = None  # in-progress tree, for salvage
        self._queries: dict[str, list[KeywordQuery]] = {}

    # --- coarse aspects ---

    def discover_coarse_aspects(self, tree: AspectHierarchy) -> list[AspectNode]:
        instance = render_coarse_aspects(tree.claim, self.config.k_aspects)
        data = self.gateway.complete_json(instance)
        aspects = data["aspects"]
        if not aspects:
            raise EmptyAspectList(f"no coarse aspects returned for {tree.claim!r}")
        created = [
            tree.add_child(tree.root, a["label"], a["description"], a["keywords"])
            for a in aspects
        ]
        self.log.record("coarse_aspects", count=len(created))
        return created

    # --- keyword enrichment ---

    def node_query(self, tree: AspectHierarchy, node_id: str) -> str:
        node = tree.node(node_id)
        return node_query_text(tree.claim, node.label, node.description, node.keywords)

    def enrich_keywords(self, tree: AspectHierarchy, node_id: str) -> list[str]:
        """Replace a node's keywords with corpus-grounded ones.

        Retrieves the node query's nearest segments, asks for up to
        2 * k_keywords candidate keywords from them, then filters to exactly
        k_keywords. Duplicates in the filtered list are collapsed; fewer than
        k_keywords distinct terms is a contract violation.
        """
        if len(self.index) == 0:
            raise EmptyIndex("cannot enrich keywords against an empty index")
        node = tree.node(node_id)
        query_vec = self.embedder.embed_one(self.node_query(tree, node_id))
        pool = self.index.top_k(query_vec, self.config.pool_size)
        contents = "\n".join(
            f"[{i + 1}] {self.segments[sid].text}" if sid in self.segments else f"[{i + 1}] {sid}"
            for i, (sid, _) in enumerate(pool)
        )
        extract = self.gateway.complete_json(
            render_keyword_extract(
                tree.claim,
                node.label,
                node.description,
                contents,
                2 * self.config.k_keywords,
            )
        )
        filtered = self.gateway.complete_json(
            render_keyword_filter(
                tree.claim,
                node.label,
                node.description,
                extract["keywords"],
                self.config.k_keywords,
            )
        )
        keywords = _dedupe(filtered["keywords"])
        if len(keywords) < self.config.k_keywords:
            raise SchemaViolation(
                f"keyword filter for node {node_id} returned "
                f"{len(keywords)} distinct terms, need {self.config.k_keywords}"
            )
        node.keywords = keywords
        self._queries.pop(node_id, None)
        self.log.record("enrich", node_id=node_id)
        return keywords

    def keyword_queries(self, tree: AspectHierarchy, node_id: str) -> list[KeywordQuery]:
        """Ancestry-contextualized keyword queries, embedded, in significance order."""
        if node_id not in self._queries:
            node = tree.node(node_id)
            ancestors = tree.path_labels(node_id)
            texts = [keyword_query_text(kw, ancestors) for kw in node.keywords]
            vectors = self.embedder.embed_texts(texts)
            self._queries[node_id] = [
                KeywordQuery(
                    keyword=kw,
                    node_id=node_id,
                    query_text=text,
                    embedding=vec,
                    rank=r,
                )
                for r, (kw, text, vec) in enumerate(zip(node.keywords, texts, vectors), 1)
            ]
        return self._queries[node_id]

    # --- discriminative ranking ---

    def rank_node_segments(self, tree: AspectHierarchy, node_id: str) -> list[ScoredSegment]:
        query_vec = self.embedder.embed_one(self.node_query(tree, node_id))
        target = self.keyword_queries(tree, node_id)
        siblings = [
            self.keyword_queries(tree, sid)
            for sid in tree.sibling_ids(node_id)
            if tree.node(sid).keywords
        ]
        ranked = rank_segments(
            self.index, query_vec, target, siblings, self.ranking_params
        )
        self.log.record(
            "rank",
            node_id=node_id,
            kept=len(ranked),
            scores=[
                {
                    "segment_id": s.segment_id,
                    "target": s.target,
                    "distractor": s.distractor,
                    "score": s.score,
                }
                for s in ranked
            ],
        )
        return ranked

    # --- subaspect discovery ---

    def discover_subaspects(
        self,
        tree: AspectHierarchy,
        node_id: str,
        ranked: Sequence[ScoredSegment],
    ) -> list[AspectNode]:
        node = tree.node(node_id)
        segments_text = "\n".join(
            f"[{i + 1}] {self.segments[s.segment_id].text}"
            if s.segment_id in self.segments
            else f"[{i + 1}] {s.segment_id}"
            for i, s in enumerate(ranked)
        )
        data = self.gateway.complete_json(
            render_subaspect_discovery(
                tree.claim,
                node.label,
                node.description,
                tree.path_string(node_id),
                segments_text,
                self.config.k_subaspects,
            )
        )
        subaspects = data["subaspects"]
        if len(subaspects) < 2:
            raise TooFewSubaspects(
                f"node {node_id} produced {len(subaspects)} subaspects, need >= 2"
            )
        children = [
            tree.add_child(node_id, a["label"], a["description"], a["keywords"])
            for a in subaspects
        ]
        self.log.record("discover", node_id=node_id, children=len(children))
        return children

    # --- full construction ---

    def build(self) -> AspectHierarchy:
        """Breadth-first expansion; nodes at max depth stay leaves."""
        tree = AspectHierarchy(self.config.claim, self.config.max_depth)
        self.tree = tree
        if self.config.max_depth == 0:
            return tree
        coarse = self.discover_coarse_aspects(tree)
        groups: deque[list[str]] = deque([[n.node_id for n in coarse]])
        while groups:
            group = groups.popleft()
            if tree.node(group[0]).depth >= self.config.max_depth:
                continue  # leaves: never enriched or expanded
            for node_id in group:
                self.enrich_keywords(tree, node_id)
            for node_id in group:
                try:
                    ranked = self.rank_node_segments(tree, node_id)
                except EmptyPool:
                    self.log.record("leaf", node_id=node_id, reason="empty_pool")
                    continue
                tree.node(node_id).attached_segments = [
                    s.segment_id for s in ranked
                ]
                children = self.discover_subaspects(tree, node_id, ranked)
                groups.append([c.node_id for c in children])
        tree.validate()
        return tree


def _dedupe(keywords: Sequence[str]) -> list[str]:
    """Collapse case-insensitive duplicates, keeping first-seen order."""
    seen: set[str] = set()
    out: list[str] = []
    for kw in keywords:
        key = kw.strip().lower()
        if key and key not in seen:
            seen.add(key)
            out.append(kw.strip())
    return out


def build_hierarchy(
    gateway: LlmGateway,
    embedder: Embedder,
    index: EmbeddingIndex,
    segments: dict[str, Segment],
    config: PipelineConfig,
    log: OperationLog | None = None,
) -> AspectHierarchy:
    return HierarchyBuilder(gateway, embedder, index, segments, config, log).build()
