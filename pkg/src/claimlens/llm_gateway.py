"""Single choke point for LLM calls.

Everything that talks to a language model goes through :class:`LlmGateway`:
prompt templates, per-task sampling parameters, JSON parsing with schema
validation and bounded retries (the validation error is fed back into the
retry prompt), and an operation log recording task name, prompt hash, and
retry count for every outbound request.

Two providers ship with the package: a chat-completions-style HTTP provider
and a scripted mock keyed by (task, prompt hash) with task-level default
fallbacks, so a full pipeline run can be replayed byte-identically offline.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Protocol, Sequence

import jsonschema
import requests

from .errors import ProviderUnavailable, SchemaViolation, Timeout, UnknownTask, UnreadableFile

# ---------------------------------------------------------------------------
# Task registry: creative discovery samples hot, everything else cold
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LlmTask:
    name: str
    temperature: float
    top_p: float = 0.99
    max_retries: int = 3


TASKS: dict[str, LlmTask] = {
    task.name: task
    for task in (
        LlmTask("coarse_aspects", 0.3),
        LlmTask("keyword_extract", 0.3),
        LlmTask("keyword_filter", 0.3),
        LlmTask("subaspect_discovery", 0.7),
        LlmTask("relevance_judge", 0.3),
        LlmTask("stance_detect", 0.3),
        LlmTask("perspective_summarize", 0.3),
        LlmTask("eval_judge", 0.3),
        LlmTask("pairwise_judge", 0.3),
    )
}


def task_params(name: str) -> tuple[float, float]:
    """(temperature, top_p) registered for a task."""
    if name not in TASKS:
        raise UnknownTask(f"no such task: {name!r}")
    task = TASKS[name]
    return task.temperature, task.top_p


@dataclass
class PromptInstance:
    task: str
    rendered_text: str
    expected_schema: dict[str, Any]
    context: str = ""  # human-readable locus for error messages

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise UnknownTask(f"no such task: {self.task!r}")
        if not self.rendered_text.strip():
            raise ValueError("rendered prompt is empty")


def prompt_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Operation log
# ---------------------------------------------------------------------------


class OperationLog:
    """Append-only structured log shared by the gateway and the orchestrator."""

    def __init__(self) -> None:
        self.records: list[dict[str, Any]] = []
        self._lock = threading.Lock()

    def record(self, kind: str, **fields: Any) -> None:
        with self._lock:
            self.records.append({"kind": kind, **fields})

    def of_kind(self, kind: str) -> list[dict[str, Any]]:
        return [r for r in self.records if r["kind"] == kind]

    def write_jsonl(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for record in self.records:
                fh.write(json.dumps(record, ensure_ascii=True) + "\n")


# ---------------------------------------------------------------------------
# Providers
# ---------------------------------------------------------------------------


class ChatProvider(Protocol):
    def complete(self, task: LlmTask, prompt: str, base_hash: str) -> str: ...


class HttpChatProvider:
    """Chat-completions endpoint: POST {model, messages, temperature, top_p}."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        max_attempts: int = 3,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(
            "CLAIMLENS_CHAT_API_KEY", ""
        )
        self.timeout = timeout
        self.max_attempts = max_attempts

    def complete(self, task: LlmTask, prompt: str, base_hash: str) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": task.temperature,
            "top_p": task.top_p,
        }
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
                return resp.json()["content"]
            except requests.Timeout as exc:
                last_error = exc
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_error = exc
        if isinstance(last_error, requests.Timeout):
            raise Timeout(f"chat endpoint timed out: {self.endpoint}")
        raise ProviderUnavailable(
            f"chat endpoint failed after {self.max_attempts} attempts: {last_error}"
        )


class MockChatProvider:
    """Scripted provider for deterministic runs.

    The script maps each task name to fixture responses keyed by the hash of
    the originally rendered prompt, with an optional task-level ``default``.
    A response may be a single string or a list of strings consumed in call
    order (the last entry repeats), which lets tests script a malformed
    answer followed by a valid one.
    """

    def __init__(self, script: dict[str, dict[str, Any]]):
        self.script = script
        self._counts: dict[tuple[str, str], int] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_dir(cls, directory: str | Path) -> "MockChatProvider":
        """Load one ``<task>.json`` fixture file per task from a transcript dir."""
        directory = Path(directory)
        if not directory.is_dir():
            raise UnreadableFile(f"mock transcript directory {directory} not found")
        script: dict[str, dict[str, Any]] = {}
        for path in sorted(directory.glob("*.json")):
            task = path.stem
            with open(path, "r", encoding="utf-8") as fh:
                script[task] = json.load(fh)
        return cls(script)

    def complete(self, task: LlmTask, prompt: str, base_hash: str) -> str:
        entry = self.script.get(task.name, {})
        responses = entry.get("responses", {})
        value = responses.get(base_hash, entry.get("default"))
        if value is None:
            raise SchemaViolation(
                f"mock transcript has no fixture for task {task.name!r} "
                f"prompt hash {base_hash}"
            )
        if isinstance(value, list):
            with self._lock:
                key = (task.name, base_hash)
                n = self._counts.get(key, 0)
                self._counts[key] = n + 1
            value = value[min(n, len(value) - 1)]
        if not isinstance(value, str):
            value = json.dumps(value)
        return value


# ---------------------------------------------------------------------------
# Gateway
# ---------------------------------------------------------------------------

_RETRY_SUFFIX = (
    "\n\nYour previous output was invalid: {error}\n"
    "Return only corrected JSON that satisfies the requested format."
)


class LlmGateway:
    """Schema-validated JSON completion with bounded retry-on-error."""

    def __init__(
        self,
        provider: ChatProvider,
        log: OperationLog | None = None,
        max_in_flight: int = 4,
        temperatures: dict[str, float] | None = None,
        max_retries: int | None = None,
    ):
        self.provider = provider
        self.log = log if log is not None else OperationLog()
        self.temperatures = dict(temperatures or {})
        self.max_retries = max_retries
        self._sem = threading.BoundedSemaphore(max(1, max_in_flight))

    def _effective_task(self, name: str) -> LlmTask:
        if name not in TASKS:
            raise UnknownTask(f"no such task: {name!r}")
        task = TASKS[name]
        if name in self.temperatures:
            task = replace(task, temperature=self.temperatures[name])
        if self.max_retries is not None:
            task = replace(task, max_retries=self.max_retries)
        return task

    def complete_json(self, instance: PromptInstance) -> Any:
        task = self._effective_task(instance.task)
        base_hash = prompt_hash(instance.rendered_text)
        error_text: str | None = None
        for attempt in range(task.max_retries + 1):
            prompt = instance.rendered_text
            if error_text is not None:
                prompt += _RETRY_SUFFIX.format(error=error_text)
            try:
                with self._sem:
                    raw = self.provider.complete(task, prompt, base_hash)
            except SchemaViolation as exc:
                # Missing fixture in strict transcripts: annotate with locus.
                message = str(exc)
                if instance.context:
                    message += f" ({instance.context})"
                self._log_call(task, base_hash, attempt, "missing_fixture")
                raise SchemaViolation(message) from exc
            try:
                value = _parse_json(raw)
                jsonschema.validate(instance=value, schema=instance.expected_schema)
            except json.JSONDecodeError as exc:
                error_text = f"not valid JSON: {exc}"
                continue
            except jsonschema.ValidationError as exc:
                error_text = f"schema violation: {exc.message}"
                continue
            self._log_call(task, base_hash, attempt, "ok")
            return value
        self._log_call(task, base_hash, task.max_retries, "schema_violation")
        where = f" ({instance.context})" if instance.context else ""
        raise SchemaViolation(
            f"task {task.name!r} returned invalid output after "
            f"{task.max_retries} retries: {error_text}{where}"
        )

    def _log_call(self, task: LlmTask, base_hash: str, retries: int, status: str) -> None:
        self.log.record(
            "llm_call",
            task=task.name,
            prompt_hash=base_hash,
            retries=retries,
            status=status,
        )


def _parse_json(raw: str) -> Any:
    """Parse a model response, tolerating markdown code fences."""
    text = raw.strip()
    if text.startswith("```"):
        lines = text.splitlines()
        if lines[0].startswith("```"):
            lines = lines[1:]
        if lines and lines[-1].strip().startswith("```"):
            lines = lines[:-1]
        text = "\n".join(lines).strip()
    return json.loads(text)


# ---------------------------------------------------------------------------
# Prompt templates and response schemas
# ---------------------------------------------------------------------------


def _aspect_item_schema() -> dict[str, Any]:
    return {
        "type": "object",
        "required": ["label", "description", "keywords"],
        "properties": {
            "label": {"type": "string", "minLength": 1},
            "description": {"type": "string", "minLength": 1},
            "keywords": {
                "type": "array",
                "items": {"type": "string", "minLength": 1},
                "minItems": 10,
                "maxItems": 10,
            },
        },
    }


def aspects_schema(k_max: int) -> dict[str, Any]:
    return {
        "type": "object",
        "required": ["aspects"],
        "properties": {
            "aspects": {
                "type": "array",
                "maxItems": k_max,
                "items": _aspect_item_schema(),
            }
        },
    }


def subaspects_schema(k_max: int) -> dict[str, Any]:
    return {
        "type": "object",
        "required": ["subaspects"],
        "properties": {
            "subaspects": {
                "type": "array",
                "maxItems": k_max,
                "items": _aspect_item_schema(),
            }
        },
    }


def keywords_schema(min_items: int, max_items: int) -> dict[str, Any]:
    return {
        "type": "object",
        "required": ["keywords"],
        "properties": {
            "keywords": {
                "type": "array",
                "items": {"type": "string", "minLength": 1},
                "minItems": min_items,
                "maxItems": max_items,
            }
        },
    }


YES_NO_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["answer"],
    "properties": {"answer": {"enum": ["Yes", "No"]}},
}

STANCE_LABELS = (
    "supports_claim",
    "neutral_to_claim",
    "opposes_claim",
    "irrelevant_to_claim",
)

STANCE_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["stance"],
    "properties": {"stance": {"enum": list(STANCE_LABELS)}},
}

SUMMARY_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["summary"],
    "properties": {"summary": {"type": "string"}},
}

WINNER_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["winner"],
    "properties": {
        "winner": {"enum": ["A", "B", "tie"]},
        "rationale": {"type": "string"},
    },
}


def score_schema(allowed: Sequence[int]) -> dict[str, Any]:
    return {
        "type": "object",
        "required": ["score"],
        "properties": {
            "score": {"enum": list(allowed)},
            "rationale": {"type": "string"},
        },
    }


_COARSE_TEMPLATE = """\
For the claim, {claim}, output the list of up to {k} aspects that would be \
considered when evaluating it. These should be the high-level dimensions along \
which the claim could be validated. For each aspect, provide its label, a \
description of its significance to the claim, and exactly 10 relevant keywords \
ordered from most to least significant.
Your output should be in JSON format:
{{"aspects": [{{"label": "...", "description": "...", "keywords": ["...", "..."]}}]}}"""


def render_coarse_aspects(claim: str, k_aspects: int) -> PromptInstance:
    return PromptInstance(
        task="coarse_aspects",
        rendered_text=_COARSE_TEMPLATE.format(claim=claim, k=k_aspects),
        expected_schema=aspects_schema(k_aspects),
        context=f"claim={claim!r}",
    )


_EXTRACT_TEMPLATE = """\
The claim is: {claim}. You are analyzing it with a focus on the aspect \
{aspect}. The aspect, {aspect}, can be described as the following: {description}

Please extract at most {n} keywords related to the aspect {aspect} from the \
following documents:
{contents}
Ensure that the extracted keywords are diverse, specific, and highly relevant \
to the given aspect, ordered from most to least significant. Only output the \
keywords.
Your output should be in JSON format: {{"keywords": ["...", "..."]}}"""


def render_keyword_extract(
    claim: str, aspect: str, description: str, contents: str, max_keywords: int
) -> PromptInstance:
    return PromptInstance(
        task="keyword_extract",
        rendered_text=_EXTRACT_TEMPLATE.format(
            claim=claim,
            aspect=aspect,
            description=description,
            contents=contents,
            n=max_keywords,
        ),
        expected_schema=keywords_schema(1, max_keywords),
        context=f"aspect={aspect!r}",
    )


_FILTER_TEMPLATE = """\
Our claim is '{claim}'. With respect to the target aspect '{aspect}', identify \
exactly {k} relevant keywords from the provided list: {candidates}.

{aspect}: {description}

Merge terms with similar meanings, exclude relatively irrelevant ones, and \
output only the {k} final keywords ordered from most to least significant.
Your output should be in JSON format: {{"keywords": ["...", "..."]}}"""


def render_keyword_filter(
    claim: str, aspect: str, description: str, candidates: Sequence[str], k_keywords: int
) -> PromptInstance:
    return PromptInstance(
        task="keyword_filter",
        rendered_text=_FILTER_TEMPLATE.format(
            claim=claim,
            aspect=aspect,
            description=description,
            candidates=", ".join(candidates),
            k=k_keywords,
        ),
        expected_schema=keywords_schema(k_keywords, k_keywords),
        context=f"aspect={aspect!r}",
    )


_SUBASPECT_TEMPLATE = """\
Output the list of at minimum 2 and up to {k} subaspects of parent aspect \
{aspect} that would be considered when evaluating the claim, {claim}.
claim: {claim}
parent_aspect: {aspect}; {description}
path_to_parent_aspect: {path}
Ground your subaspects in the following corpus segments:
{segments}
Each subaspect should be a more granular component of the parent aspect, with \
its label, a description of its significance, and exactly 10 relevant keywords \
ordered from most to least significant.
Provide your output in the following JSON format:
{{"subaspects": [{{"label": "...", "description": "...", "keywords": ["...", "..."]}}]}}"""


def render_subaspect_discovery(
    claim: str,
    aspect: str,
    description: str,
    path: str,
    segments_text: str,
    k_subaspects: int,
) -> PromptInstance:
    return PromptInstance(
        task="subaspect_discovery",
        rendered_text=_SUBASPECT_TEMPLATE.format(
            claim=claim,
            aspect=aspect,
            description=description,
            path=path,
            segments=segments_text,
            k=k_subaspects,
        ),
        expected_schema=subaspects_schema(k_subaspects),
        context=f"aspect={aspect!r}",
    )


_RELEVANCE_TEMPLATE = """\
I am currently analyzing a claim based on a segment from the literature from \
several different aspects.
The segment is: {segment}
The claim is: {claim}
The aspects are: {aspects}
Please help me determine whether this segment is related to the claim so that \
I can analyze this claim based on it from at least one of these aspects. Your \
output should be 'Yes' or 'No' in JSON format: {{"answer": "..."}}"""


def render_relevance_judge(
    claim: str, aspects: Sequence[str], segment_text: str, segment_id: str = ""
) -> PromptInstance:
    return PromptInstance(
        task="relevance_judge",
        rendered_text=_RELEVANCE_TEMPLATE.format(
            segment=segment_text, claim=claim, aspects=", ".join(aspects)
        ),
        expected_schema=YES_NO_SCHEMA,
        context=f"segment={segment_id}",
    )


_STANCE_TEMPLATE = """\
You are a stance detector, which determines the stance that a segment from a \
paper has towards an aspect of a specific claim. Oftentimes, papers do not \
provide explicit, outright stances, so your job is to figure out what stance \
the data or statement that they are presenting implies.
Segment: {segment}

What is the segment's stance specifically with respect to {aspect} for if \
{claim}? {aspect} can be described as {description}.
Claim: {claim}
Aspect to consider: {aspect}: {description}
Path to aspect: {path}

Your stance options are the following:
- supports_claim: The segment either implicitly or explicitly indicates that \
the claim is true specific to the given aspect.
- neutral_to_claim: The segment is relevant to the claim and aspect, but does \
not indicate whether the claim is true specific to the given aspect.
- opposes_claim: The segment either implicitly or explicitly indicates that \
the claim is false specific to the given aspect.
- irrelevant_to_claim: The segment does not contain relevant information on \
the claim and the aspect.

Your output should be in JSON format: {{"stance": "..."}}"""


def render_stance_detect(
    claim: str,
    aspect: str,
    description: str,
    path: str,
    segment_text: str,
    segment_id: str = "",
    node_id: str = "",
) -> PromptInstance:
    return PromptInstance(
        task="stance_detect",
        rendered_text=_STANCE_TEMPLATE.format(
            segment=segment_text,
            aspect=aspect,
            claim=claim,
            description=description,
            path=path,
        ),
        expected_schema=STANCE_SCHEMA,
        context=f"segment={segment_id}, node={node_id}",
    )


_SUMMARY_TEMPLATE = """\
The claim is: {claim}
The aspect under analysis is: {aspect}: {description}
The following segments all take the '{stance}' stance towards the claim with \
respect to this aspect:
{segments}
Summarize the overarching perspective these segments hold: state the stance \
and the rationale behind it in two or three sentences.
Your output should be in JSON format: {{"summary": "..."}}"""


def render_perspective_summarize(
    claim: str,
    aspect: str,
    description: str,
    stance: str,
    segments_text: str,
    node_id: str = "",
) -> PromptInstance:
    return PromptInstance(
        task="perspective_summarize",
        rendered_text=_SUMMARY_TEMPLATE.format(
            claim=claim,
            aspect=aspect,
            description=description,
            stance=stance,
            segments=segments_text,
        ),
        expected_schema=SUMMARY_SCHEMA,
        context=f"node={node_id}, stance={stance}",
    )
