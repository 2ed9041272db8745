"""Corpus ingestion and topical segmentation.

Documents are split into sentences with a rule-based splitter, then each
document is partitioned into contiguous topical segments. The main segmenter
is a divisive one: it builds a sentence-pair cosine similarity matrix over
stemmed term vectors, applies a local rank transform with a square mask, and
greedily inserts boundaries that maximize inside density, stopping once the
relative density gain drops below a threshold. A fixed-window segmenter is
provided as a deterministic fallback.

All functions here are pure: same document and parameters always produce the
same segment list, so documents can be processed in parallel safely.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import DuplicateDocId, EmptyDocument, MissingField, UnreadableFile

# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    text: str


@dataclass(frozen=True)
class Sentence:
    doc_id: str
    index: int
    text: str

    @property
    def terms(self) -> Counter:
        return extract_terms(self.text)


@dataclass(frozen=True)
class Segment:
    segment_id: str
    doc_id: str
    start: int
    end: int  # inclusive sentence index
    text: str


@dataclass(frozen=True)
class C99Params:
    """Divisive segmenter knobs: square rank mask, stop threshold, floors."""

    rank_mask: int = 11
    min_density_gain: float = 0.05
    min_segment_sentences: int = 2
    max_segments: int = 50


# ---------------------------------------------------------------------------
# Corpus loading
# ---------------------------------------------------------------------------

_REQUIRED_FIELDS = ("doc_id", "title", "text")


def load_corpus(path: str) -> list[Document]:
    """Read a JSONL corpus file (doc_id / title / text per line).

    Documents come back in file order. A record with a missing or blank
    field, a repeated doc_id, or an unparseable line is rejected with an
    error naming the offending record.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UnreadableFile(f"cannot read corpus file {path}: {exc}") from exc

    documents: list[Document] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise UnreadableFile(
                f"{path}: line {lineno} is not valid JSON: {exc}"
            ) from exc
        if not isinstance(record, dict):
            raise UnreadableFile(f"{path}: line {lineno} is not a JSON object")
        doc_id = record.get("doc_id", "")
        for name in _REQUIRED_FIELDS:
            value = record.get(name)
            if not isinstance(value, str) or not value.strip():
                raise MissingField(
                    f"record at line {lineno} (doc_id={doc_id!r}) "
                    f"is missing field {name!r}"
                )
        if doc_id in seen:
            raise DuplicateDocId(doc_id)
        seen.add(doc_id)
        documents.append(
            Document(doc_id=doc_id, title=record["title"], text=record["text"])
        )
    return documents


def write_segments(segments: list[Segment], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for seg in segments:
            record = {
                "segment_id": seg.segment_id,
                "doc_id": seg.doc_id,
                "start": seg.start,
                "end": seg.end,
                "text": seg.text,
            }
            fh.write(json.dumps(record, ensure_ascii=True) + "\n")


def read_segments(path: str) -> list[Segment]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UnreadableFile(f"cannot read segment store {path}: {exc}") from exc
    segments = []
    for line in lines:
        if not line.strip():
            continue
        rec = json.loads(line)
        segments.append(
            Segment(
                segment_id=rec["segment_id"],
                doc_id=rec["doc_id"],
                start=rec["start"],
                end=rec["end"],
                text=rec["text"],
            )
        )
    return segments


# ---------------------------------------------------------------------------
# Sentence splitting
# ---------------------------------------------------------------------------

# Guard list: a period after one of these does not end a sentence.
_ABBREVIATIONS = {
    "dr", "mr", "mrs", "ms", "prof", "sr", "jr", "st",
    "fig", "figs", "eq", "eqs", "sec", "ch", "vol", "no", "pp",
    "e.g", "i.e", "etc", "vs", "cf", "ca", "al", "approx", "resp",
}

_TERMINALS = ".!?"
_CLOSERS = "\"')]"


def split_sentences(text: str) -> list[str]:
    """Rule-based sentence splitting on terminal punctuation plus whitespace.

    Whitespace is normalized first; an abbreviation guard list keeps
    "Dr. Smith" and "e.g. this" inside one sentence. Deterministic and
    dependency-free by design.
    """
    text = " ".join(text.split())
    if not text:
        return []
    sentences: list[str] = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        if text[i] in _TERMINALS:
            j = i + 1
            while j < n and text[j] in _TERMINALS + _CLOSERS:
                j += 1
            at_boundary = j >= n or text[j] == " "
            if at_boundary and not (text[i] == "." and _guarded(text, i)):
                piece = text[start:j].strip()
                if piece:
                    sentences.append(piece)
                start = j
            i = j
        else:
            i += 1
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def _guarded(text: str, dot: int) -> bool:
    """True when the token ending at `dot` is a known abbreviation or initial."""
    k = dot - 1
    while k >= 0 and (text[k].isalnum() or text[k] == "."):
        k -= 1
    word = text[k + 1 : dot]
    if not word or not word[0].isalpha():
        return False
    if len(word) == 1:  # single-letter initial, "J. Smith"
        return True
    return word.lower().rstrip(".") in _ABBREVIATIONS or word.lower() in _ABBREVIATIONS


def sentences_of(doc: Document) -> list[Sentence]:
    pieces = split_sentences(doc.text)
    if not pieces:
        raise EmptyDocument(f"document {doc.doc_id!r} has no sentences")
    return [Sentence(doc.doc_id, i, s) for i, s in enumerate(pieces)]


# ---------------------------------------------------------------------------
# Terms: stopword filtering + light suffix stemming
# ---------------------------------------------------------------------------

_STOPWORDS = frozenset(
    """a about above after again against all am an and any are as at be because
    been before being below between both but by can did do does doing down
    during each few for from further had has have having he her here hers
    herself him himself his how i if in into is it its itself just me more
    most my myself nor not of off on once only or other our ours ourselves
    out over own same she should so some such than that the their theirs them
    themselves then there these they this those through to too under until up
    very was we were what when where which while who whom why will with you
    your yours yourself yourselves""".split()
)

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def _stem(word: str) -> str:
    """Small deterministic suffix stripper in the Porter tradition.

    Reproducibility matters more than linguistic accuracy here, so this
    handles the common inflectional endings only.
    """
    if len(word) <= 3:
        return word
    if word.endswith("sses"):
        return word[:-2]
    if word.endswith("ies"):
        return word[:-3] + "i"
    if word.endswith("ss"):
        return word
    if word.endswith("s") and len(word) > 4:
        word = word[:-1]
    for suffix in ("ational", "ization", "fulness", "iveness", "ousness"):
        if word.endswith(suffix) and len(word) > len(suffix) + 2:
            return word[: -len(suffix)]
    for suffix in ("ing", "edly", "ed", "ly", "ment", "ness", "tion", "ity"):
        if word.endswith(suffix) and len(word) - len(suffix) >= 3:
            stem = word[: -len(suffix)]
            if len(stem) >= 2 and stem[-1] == stem[-2]:  # "running" -> "run"
                stem = stem[:-1]
            return stem
    if word.endswith("y") and len(word) > 4:
        return word[:-1] + "i"
    return word


def extract_terms(text: str) -> Counter:
    """Stemmed, stopword-filtered token multiset for one sentence."""
    tokens = _TOKEN_RE.findall(text.lower())
    return Counter(_stem(t) for t in tokens if t not in _STOPWORDS)


# ---------------------------------------------------------------------------
# Divisive topical segmentation
# ---------------------------------------------------------------------------


def _similarity_matrix(term_counts: list[Counter]) -> np.ndarray:
    vocab: dict[str, int] = {}
    for counts in term_counts:
        for term in counts:
            if term not in vocab:
                vocab[term] = len(vocab)
    n = len(term_counts)
    if not vocab:
        return np.zeros((n, n))
    mat = np.zeros((n, len(vocab)))
    for i, counts in enumerate(term_counts):
        for term, count in counts.items():
            mat[i, vocab[term]] = count
    norms = np.linalg.norm(mat, axis=1)
    safe = np.where(norms == 0.0, 1.0, norms)
    unit = mat / safe[:, None]
    sim = unit @ unit.T
    # Quantize so the strict comparisons in the rank transform cannot flip on
    # last-ulp differences between BLAS implementations.
    return np.round(np.clip(sim, 0.0, 1.0), 9)


def _rank_transform(sim: np.ndarray, mask: int) -> np.ndarray:
    """Replace each cell by the fraction of its mask neighborhood it beats.

    The square mask is clipped at matrix edges; the center cell is excluded
    from the neighbor count.
    """
    n = sim.shape[0]
    radius = mask // 2
    rank = np.zeros_like(sim)
    for i in range(n):
        ilo, ihi = max(0, i - radius), min(n, i + radius + 1)
        for j in range(n):
            jlo, jhi = max(0, j - radius), min(n, j + radius + 1)
            window = sim[ilo:ihi, jlo:jhi]
            neighbors = window.size - 1
            if neighbors <= 0:
                continue
            rank[i, j] = np.count_nonzero(window < sim[i, j]) / neighbors
    return rank


def _block_sums(rank: np.ndarray) -> np.ndarray:
    """2D prefix sums so any diagonal block sum is O(1)."""
    padded = np.zeros((rank.shape[0] + 1, rank.shape[1] + 1))
    padded[1:, 1:] = np.cumsum(np.cumsum(rank, axis=0), axis=1)
    return padded


def _inside(prefix: np.ndarray, a: int, b: int) -> float:
    """Sum of rank values in the square block [a..b] x [a..b]."""
    return float(
        prefix[b + 1, b + 1] - prefix[a, b + 1] - prefix[b + 1, a] + prefix[a, a]
    )


def choose_boundaries(rank: np.ndarray, params: C99Params) -> list[int]:
    """Greedy divisive boundary placement maximizing inside density.

    Density is the total rank mass inside the diagonal segment blocks divided
    by their total area. Each step inserts the single boundary giving the
    largest density; insertion stops when the relative gain falls below the
    threshold, no admissible split remains, or the segment cap is reached.
    Returns the sorted list of boundary start indices (excluding 0).
    """
    n = rank.shape[0]
    min_len = params.min_segment_sentences
    prefix = _block_sums(rank)
    segments: list[tuple[int, int]] = [(0, n - 1)]

    def density(segs: list[tuple[int, int]]) -> float:
        mass = sum(_inside(prefix, a, b) for a, b in segs)
        area = sum((b - a + 1) ** 2 for a, b in segs)
        return mass / area if area else 0.0

    current = density(segments)
    while len(segments) < params.max_segments:
        best_density = None
        best_split: tuple[int, int] | None = None
        for idx, (a, b) in enumerate(segments):
            for cut in range(a + min_len, b - min_len + 2):
                trial = segments[:idx] + [(a, cut - 1), (cut, b)] + segments[idx + 1 :]
                d = density(trial)
                if best_density is None or d > best_density:
                    best_density = d
                    best_split = (idx, cut)
        if best_split is None:
            break
        if current > 0:
            gain = (best_density - current) / current
        else:
            gain = float("inf") if best_density > 0 else 0.0
        if gain < params.min_density_gain:
            break
        idx, cut = best_split
        a, b = segments[idx]
        segments[idx : idx + 1] = [(a, cut - 1), (cut, b)]
        current = best_density
    return [a for a, _ in segments[1:]]


def segment_document(doc: Document, params: C99Params | None = None) -> list[Segment]:
    """Partition a document into topical segments that tile its sentences."""
    params = params or C99Params()
    sentences = sentences_of(doc)
    n = len(sentences)
    if n == 1:
        return [_make_segment(doc, sentences, 0, 0)]
    sim = _similarity_matrix([s.terms for s in sentences])
    rank = _rank_transform(sim, params.rank_mask)
    boundaries = choose_boundaries(rank, params)
    edges = [0] + boundaries + [n]
    return [
        _make_segment(doc, sentences, edges[i], edges[i + 1] - 1)
        for i in range(len(edges) - 1)
    ]


def segment_fixed_window(
    doc: Document, window: int, stride: int | None = None
) -> list[Segment]:
    """Tile the document with consecutive windows of `window` sentences.

    Only tiling is supported: stride, when given, must equal window.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if stride is not None and stride != window:
        raise ValueError("stride must equal window (tiling only)")
    sentences = sentences_of(doc)
    out = []
    for start in range(0, len(sentences), window):
        end = min(start + window, len(sentences)) - 1
        out.append(_make_segment(doc, sentences, start, end))
    return out


def _make_segment(
    doc: Document, sentences: list[Sentence], start: int, end: int
) -> Segment:
    text = " ".join(s.text for s in sentences[start : end + 1])
    return Segment(
        segment_id=f"{doc.doc_id}#{start}-{end}",
        doc_id=doc.doc_id,
        start=start,
        end=end,
        text=text,
    )
