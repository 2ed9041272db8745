"""Command-line orchestration of the staged pipeline.

Stages persist their artifacts (ingest -> build -> perspectives -> evaluate)
so the expensive steps can be resumed and mixed runs are detectable: every
artifact embeds the config fingerprint and stages refuse to consume artifacts
from a different one.

Exit codes: 0 success, 1 usage or input error, 2 provider failure,
3 schema or contract violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import corpus as corpus_mod
from . import errors
from .config import PipelineConfig, load_config_file
from .corpus import C99Params, Segment
from .embedding import (
    Embedder,
    EmbeddingIndex,
    HashedBowEmbedder,
    HttpEmbeddingProvider,
)
from .evaluation import evaluate_hierarchy, pairwise_compare, render_metric_table
from .hierarchy import AspectHierarchy, HierarchyBuilder
from .llm_gateway import HttpChatProvider, LlmGateway, MockChatProvider, OperationLog
from .perspective import (
    STANCES,
    FilterParams,
    PerspectiveSet,
    discover_perspectives,
)

_USAGE_ERRORS = (
    errors.UsageError,
    errors.MissingField,
    errors.DuplicateDocId,
    errors.EmptyDocument,
)
_PROVIDER_ERRORS = (errors.ProviderUnavailable, errors.JudgeFailure)


# ---------------------------------------------------------------------------
# Config assembly: defaults <- config file <- flags
# ---------------------------------------------------------------------------

_FLAG_FIELDS = [
    ("--claim", "claim", str, "root claim to deconstruct"),
    ("--corpus", "corpus_path", str, "corpus JSONL file"),
    ("--out", "output_dir", str, "artifact directory"),
    ("--max-depth", "max_depth", int, "maximum hierarchy depth"),
    ("--k-aspects", "k_aspects", int, "max coarse aspects"),
    ("--k-subaspects", "k_subaspects", int, "max subaspects per node"),
    ("--k-keywords", "k_keywords", int, "keywords per enriched node"),
    ("--pool-size", "pool_size", int, "retrieval pool size"),
    ("--k-segments", "k_segments", int, "discriminative segments kept per node"),
    ("--beta", "beta", float, "target score scaling"),
    ("--gamma", "gamma", float, "distractor score scaling"),
    ("--epsilon", "epsilon", float, "distractor denominator floor"),
    ("--delta", "delta", float, "relevance window fraction threshold"),
    ("--window", "window", int, "relevance window half-width"),
    ("--min-chars", "min_chars", int, "segment length floor for filtering"),
    ("--rank-mask", "rank_mask", int, "segmenter rank mask size"),
    ("--min-density-gain", "min_density_gain", float, "segmenter stop threshold"),
    ("--min-segment-sentences", "min_segment_sentences", int, "segment floor"),
    ("--max-segments-per-doc", "max_segments_per_doc", int, "segment cap"),
    ("--embed-dim", "embed_dim", int, "local embedder dimension"),
    ("--embed-endpoint", "embed_endpoint", str, "remote embeddings endpoint"),
    ("--embed-model", "embed_model", str, "remote embeddings model"),
    ("--chat-endpoint", "chat_endpoint", str, "chat completions endpoint"),
    ("--chat-model", "chat_model", str, "chat model name"),
    ("--mock-dir", "mock_dir", str, "scripted transcript directory"),
    ("--max-retries", "max_retries", int, "retries on invalid LLM JSON"),
    ("--classify-threshold", "classify_threshold", float, "descent threshold"),
    ("--concurrency", "concurrency_cap", int, "in-flight request cap"),
    ("--seed", "seed", int, "random seed"),
]


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override it")
    for flag, dest, typ, help_text in _FLAG_FIELDS:
        parser.add_argument(flag, dest=dest, type=typ, default=None, help=help_text)


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    merged = PipelineConfig().to_dict()
    if getattr(args, "config", None):
        merged.update(load_config_file(args.config))
    field_names = {f.name for f in dataclasses.fields(PipelineConfig)}
    for name in field_names:
        value = getattr(args, name, None)
        if value is not None:
            merged[name] = value
    config = PipelineConfig.from_dict(merged)
    config.validate()
    return config


# ---------------------------------------------------------------------------
# Providers and artifact paths
# ---------------------------------------------------------------------------


def make_embedder(config: PipelineConfig) -> Embedder:
    if config.embed_endpoint:
        return Embedder(HttpEmbeddingProvider(config.embed_endpoint, config.embed_model))
    return Embedder(HashedBowEmbedder(dim=config.embed_dim, seed=config.seed))


def make_gateway(config: PipelineConfig, log: OperationLog) -> LlmGateway:
    if config.mock_dir:
        provider = MockChatProvider.from_dir(config.mock_dir)
    elif config.chat_endpoint:
        provider = HttpChatProvider(config.chat_endpoint, config.chat_model)
    else:
        raise errors.UsageError(
            "no LLM provider configured: set --mock-dir or --chat-endpoint"
        )
    return LlmGateway(
        provider,
        log=log,
        max_in_flight=config.concurrency_cap,
        temperatures=config.temperatures,
        max_retries=config.max_retries,
    )


class Paths:
    def __init__(self, output_dir: str):
        self.root = Path(output_dir)
        self.segments = self.root / "segments.jsonl"
        self.index_dir = self.root
        self.index_manifest = self.root / "index_manifest.json"
        self.hierarchy = self.root / "hierarchy.json"
        self.operation_log = self.root / "operation_log.jsonl"
        self.perspectives = self.root / "hierarchy_perspectives.json"
        self.perspectives_log = self.root / "perspectives_log.jsonl"
        self.consensus = self.root / "consensus.tsv"
        self.metrics_json = self.root / "metrics.json"
        self.metrics_table = self.root / "metrics.txt"
        self.pairwise = self.root / "pairwise.json"


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, ensure_ascii=True)
        fh.write("\n")


def _load_hierarchy(path: str | Path) -> tuple[AspectHierarchy, dict]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise errors.UsageError(f"cannot read hierarchy file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise errors.UnreadableFile(f"hierarchy file {path} is not valid JSON: {exc}") from exc
    return AspectHierarchy.from_dict(data), data


def _check_fingerprint(found: str, config: PipelineConfig, what: str) -> None:
    expected = config.fingerprint()
    if found and found != expected:
        raise errors.FingerprintMismatch(
            f"{what} was produced under config fingerprint {found}, "
            f"current is {expected}; re-run earlier stages"
        )


def _load_segments(paths: Paths) -> dict[str, Segment]:
    if not paths.segments.exists():
        raise errors.UsageError(
            f"segment store {paths.segments} not found: run `claimlens ingest` first"
        )
    return {seg.segment_id: seg for seg in corpus_mod.read_segments(str(paths.segments))}


def _load_index(paths: Paths, config: PipelineConfig) -> EmbeddingIndex:
    if not paths.index_manifest.exists():
        raise errors.UsageError(
            f"embedding index {paths.index_manifest} not found: "
            "run `claimlens ingest` first"
        )
    index, fingerprint = EmbeddingIndex.load(str(paths.index_dir))
    _check_fingerprint(fingerprint, config, "embedding index")
    return index


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_ingest(config: PipelineConfig) -> int:
    if not config.corpus_path:
        raise errors.UsageError("ingest requires --corpus")
    paths = Paths(config.output_dir)
    paths.root.mkdir(parents=True, exist_ok=True)

    documents = corpus_mod.load_corpus(config.corpus_path)
    params = C99Params(
        rank_mask=config.rank_mask,
        min_density_gain=config.min_density_gain,
        min_segment_sentences=config.min_segment_sentences,
        max_segments=config.max_segments_per_doc,
    )
    segments: list[Segment] = []
    for doc in documents:
        segments.extend(corpus_mod.segment_document(doc, params))
    corpus_mod.write_segments(segments, str(paths.segments))

    embedder = make_embedder(config)
    index = EmbeddingIndex(dim=_probe_dim(embedder))
    batch = 64
    for i in range(0, len(segments), batch):
        chunk = segments[i : i + batch]
        vectors = embedder.embed_texts([s.text for s in chunk])
        index.add_batch([s.segment_id for s in chunk], vectors)
    index.save(str(paths.index_dir), fingerprint=config.fingerprint())
    print(
        f"ingested {len(documents)} documents into {len(segments)} segments; "
        f"index dim {index.dim} at {paths.root}"
    )
    return 0


def _probe_dim(embedder: Embedder) -> int:
    return embedder.embed_one("dimension probe").shape[0]


def cmd_build(config: PipelineConfig) -> int:
    if not config.claim:
        raise errors.UsageError("build requires --claim")
    paths = Paths(config.output_dir)
    segments = _load_segments(paths)
    index = _load_index(paths, config)
    log = OperationLog()
    gateway = make_gateway(config, log)
    embedder = make_embedder(config)
    builder = HierarchyBuilder(gateway, embedder, index, segments, config, log)
    try:
        tree = builder.build()
    except errors.ClaimLensError:
        if builder.tree is not None:
            _write_json(
                paths.hierarchy,
                builder.tree.to_dict(config.fingerprint(), partial=True),
            )
            log.write_jsonl(str(paths.operation_log))
            print(f"partial hierarchy persisted to {paths.hierarchy}", file=sys.stderr)
        raise
    _write_json(paths.hierarchy, tree.to_dict(config.fingerprint()))
    log.write_jsonl(str(paths.operation_log))
    print(f"hierarchy with {len(tree.nodes)} nodes at {paths.hierarchy}")
    return 0


def cmd_perspectives(config: PipelineConfig) -> int:
    paths = Paths(config.output_dir)
    if not paths.hierarchy.exists():
        raise errors.UsageError(
            f"hierarchy {paths.hierarchy} not found: run `claimlens build` first"
        )
    tree, data = _load_hierarchy(paths.hierarchy)
    _check_fingerprint(data.get("config_fingerprint", ""), config, "hierarchy")
    segments = _load_segments(paths)
    index = _load_index(paths, config)
    log = OperationLog()
    gateway = make_gateway(config, log)
    embedder = make_embedder(config)
    params = FilterParams(
        delta=config.delta, window=config.window, min_chars=config.min_chars
    )
    tree = discover_perspectives(
        gateway,
        embedder,
        index,
        segments,
        tree,
        params,
        relative_threshold=config.classify_threshold,
    )
    _write_json(paths.perspectives, tree.to_dict(config.fingerprint()))
    _write_consensus_table(tree, paths.consensus)
    log.write_jsonl(str(paths.perspectives_log))
    attached = sum(len(tree.node(n).attached_segments) for n in tree.nodes)
    if attached == 0:
        print("warning: no segments survived relevance filtering", file=sys.stderr)
    print(f"perspectives at {paths.perspectives}; consensus table at {paths.consensus}")
    return 0


def _write_consensus_table(tree: AspectHierarchy, path: Path) -> None:
    lines = ["node_id\tstance\tsegments\tpapers"]
    for node_id in tree.sorted_ids():
        node = tree.node(node_id)
        if node.perspectives is None:
            continue
        pset = PerspectiveSet.from_dict(node.perspectives)
        for stance in STANCES:
            bucket = pset.bucket(stance)
            lines.append(
                f"{node_id}\t{stance}\t{len(bucket.segment_ids)}\t{len(bucket.paper_ids)}"
            )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_evaluate(config: PipelineConfig, hierarchy_paths: list[str]) -> int:
    if not 1 <= len(hierarchy_paths) <= 2:
        raise errors.UsageError("evaluate takes one hierarchy file, or two for pairwise")
    for p in hierarchy_paths:
        if not Path(p).exists():
            raise errors.UsageError(f"hierarchy file {p} not found")
    paths = Paths(config.output_dir)
    log = OperationLog()
    gateway = make_gateway(config, log)

    if len(hierarchy_paths) == 1:
        tree, _ = _load_hierarchy(hierarchy_paths[0])
        segments: dict[str, Segment] = {}
        if paths.segments.exists():
            segments = {
                s.segment_id: s
                for s in corpus_mod.read_segments(str(paths.segments))
            }
        report = evaluate_hierarchy(tree, gateway, segments)
        paths.root.mkdir(parents=True, exist_ok=True)
        payload = {"config_fingerprint": config.fingerprint()}
        payload.update(report.to_dict())
        _write_json(paths.metrics_json, payload)
        table = render_metric_table(report)
        paths.metrics_table.write_text(table, encoding="utf-8")
        print(table, end="")
        return 0

    tree_a, _ = _load_hierarchy(hierarchy_paths[0])
    tree_b, _ = _load_hierarchy(hierarchy_paths[1])
    verdict = pairwise_compare(tree_a, tree_b, gateway)
    paths.root.mkdir(parents=True, exist_ok=True)
    _write_json(
        paths.pairwise,
        {
            "config_fingerprint": config.fingerprint(),
            "a": hierarchy_paths[0],
            "b": hierarchy_paths[1],
            "verdict": verdict,
        },
    )
    print(verdict)
    return 0


def cmd_report(hierarchy_path: str, fmt: str, out: str | None = None) -> int:
    if not Path(hierarchy_path).exists():
        raise errors.UsageError(f"hierarchy file {hierarchy_path} not found")
    tree, _ = _load_hierarchy(hierarchy_path)
    if fmt == "markdown":
        rendered = render_markdown(tree)
    elif fmt == "dot":
        rendered = render_dot(tree)
    else:
        raise errors.UnknownFormat(f"unknown report format {fmt!r}")
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(rendered, encoding="utf-8")
        print(f"report written to {out}")
    else:
        print(rendered, end="")
    return 0


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def _subtree_segments(tree: AspectHierarchy, node_id: str) -> int:
    node = tree.node(node_id)
    return len(node.attached_segments) + sum(
        _subtree_segments(tree, child) for child in node.children
    )


def render_markdown(tree: AspectHierarchy) -> str:
    """Indented tree, one bullet per node at its depth, with segment and
    stance counts (own counts, subtree rollup in parentheses)."""
    lines = [f"# {tree.claim}", ""]
    for node_id in tree.sorted_ids():
        node = tree.node(node_id)
        parts = [f"segments: {len(node.attached_segments)}"]
        if node.children:
            parts.append(f"subtree: {_subtree_segments(tree, node_id)}")
        if node.perspectives is not None:
            pset = PerspectiveSet.from_dict(node.perspectives)
            counts = "/".join(str(len(pset.bucket(s).paper_ids)) for s in STANCES)
            parts.append(f"papers s/n/o: {counts}")
        indent = "  " * node.depth
        lines.append(f"{indent}- **{node.label}** [{'; '.join(parts)}]")
    return "\n".join(lines) + "\n"


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def render_dot(tree: AspectHierarchy) -> str:
    lines = ["digraph aspects {", "  rankdir=LR;", "  node [shape=box];"]
    for node_id in tree.sorted_ids():
        node = tree.node(node_id)
        label = _dot_escape(f"{node.label}\\n({len(node.attached_segments)} segments)")
        lines.append(f'  "{node_id}" [label="{label}"];')
    for node_id in tree.sorted_ids():
        for child in tree.node(node_id).children:
            lines.append(f'  "{node_id}" -> "{child}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="claimlens",
        description="Deconstruct a claim into a corpus-grounded aspect hierarchy "
        "with stance-partitioned perspectives.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="segment the corpus and build the index")
    _add_config_flags(p_ingest)

    p_build = sub.add_parser("build", help="construct the aspect hierarchy")
    _add_config_flags(p_build)

    p_persp = sub.add_parser("perspectives", help="attach perspectives and consensus")
    _add_config_flags(p_persp)

    p_eval = sub.add_parser("evaluate", help="metric report, or pairwise with 2 files")
    _add_config_flags(p_eval)
    p_eval.add_argument("hierarchies", nargs="+", help="hierarchy JSON file(s)")

    p_report = sub.add_parser("report", help="render a hierarchy")
    p_report.add_argument("hierarchy", help="hierarchy JSON file")
    p_report.add_argument(
        "--format", dest="fmt", default="markdown", help="markdown or dot"
    )
    p_report.add_argument("--out-file", dest="out_file", default=None)
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "report":
        return cmd_report(args.hierarchy, args.fmt, args.out_file)
    config = resolve_config(args)
    if args.command == "ingest":
        return cmd_ingest(config)
    if args.command == "build":
        return cmd_build(config)
    if args.command == "perspectives":
        return cmd_perspectives(config)
    if args.command == "evaluate":
        return cmd_evaluate(config, args.hierarchies)
    raise errors.UsageError(f"unknown command {args.command!r}")


def main(argv: list[str] | None = None) -> int:
    try:
        return run(argv)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _PROVIDER_ERRORS as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return 2
    except errors.ClaimLensError as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
