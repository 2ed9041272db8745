import json

import pytest

from claimlens.errors import SchemaViolation, UnknownTask
from claimlens.llm_gateway import (
    STANCE_SCHEMA,
    LlmGateway,
    MockChatProvider,
    OperationLog,
    PromptInstance,
    aspects_schema,
    prompt_hash,
    render_coarse_aspects,
    task_params,
)


def make_aspects(n=3, keywords=10):
    return {
        "aspects": [
            {
                "label": f"aspect {i}",
                "description": f"why aspect {i} matters",
                "keywords": [f"kw{i}-{j}" for j in range(keywords)],
            }
            for i in range(n)
        ]
    }


def gateway_with_default(task, response, **kwargs):
    provider = MockChatProvider({task: {"default": response}})
    return LlmGateway(provider, log=OperationLog(), **kwargs)


# --- task params ---


def test_coarse_aspects_params():
    assert task_params("coarse_aspects") == (0.3, 0.99)


def test_subaspect_discovery_params():
    assert task_params("subaspect_discovery") == (0.7, 0.99)


def test_keyword_and_judge_tasks_are_cold():
    for task in ("keyword_extract", "keyword_filter", "relevance_judge",
                 "stance_detect", "eval_judge", "pairwise_judge"):
        temperature, top_p = task_params(task)
        assert temperature == 0.3
        assert top_p == 0.99


def test_unknown_task():
    with pytest.raises(UnknownTask):
        task_params("foo")
    with pytest.raises(UnknownTask):
        PromptInstance(task="foo", rendered_text="x", expected_schema={})


# --- complete_json ---


def test_mock_round_trip():
    gateway = gateway_with_default("coarse_aspects", json.dumps(make_aspects()))
    got = gateway.complete_json(render_coarse_aspects("claim text", 5))
    assert [a["label"] for a in got["aspects"]] == ["aspect 0", "aspect 1", "aspect 2"]


def test_retry_after_malformed_json():
    gateway = gateway_with_default(
        "coarse_aspects", ["this is not json", json.dumps(make_aspects())]
    )
    got = gateway.complete_json(render_coarse_aspects("claim text", 5))
    assert len(got["aspects"]) == 3
    record = gateway.log.of_kind("llm_call")[-1]
    assert record["retries"] == 1
    assert record["status"] == "ok"


def test_schema_violation_after_retry_budget():
    gateway = gateway_with_default("coarse_aspects", "never json")
    with pytest.raises(SchemaViolation):
        gateway.complete_json(render_coarse_aspects("claim text", 5))
    record = gateway.log.of_kind("llm_call")[-1]
    assert record["status"] == "schema_violation"


def test_scripted_by_prompt_hash_beats_default():
    instance = render_coarse_aspects("specific claim", 5)
    h = prompt_hash(instance.rendered_text)
    provider = MockChatProvider(
        {
            "coarse_aspects": {
                "default": json.dumps(make_aspects(1)),
                "responses": {h: json.dumps(make_aspects(2))},
            }
        }
    )
    gateway = LlmGateway(provider, log=OperationLog())
    assert len(gateway.complete_json(instance)["aspects"]) == 2


def test_missing_fixture_names_context():
    provider = MockChatProvider({"coarse_aspects": {"responses": {}}})
    gateway = LlmGateway(provider, log=OperationLog())
    with pytest.raises(SchemaViolation, match="specific claim"):
        gateway.complete_json(render_coarse_aspects("specific claim", 5))


def test_code_fence_stripped():
    fenced = "```json\n" + json.dumps(make_aspects(1)) + "\n```"
    gateway = gateway_with_default("coarse_aspects", fenced)
    got = gateway.complete_json(render_coarse_aspects("claim", 5))
    assert len(got["aspects"]) == 1


# --- adversarial schema checks ---


def test_rejects_extra_stance_label():
    gateway = gateway_with_default("stance_detect", json.dumps({"stance": "maybe"}))
    instance = PromptInstance(
        task="stance_detect", rendered_text="judge this", expected_schema=STANCE_SCHEMA
    )
    with pytest.raises(SchemaViolation):
        gateway.complete_json(instance)


def test_rejects_missing_keyword_array():
    aspects = make_aspects(1)
    del aspects["aspects"][0]["keywords"]
    gateway = gateway_with_default("coarse_aspects", json.dumps(aspects))
    with pytest.raises(SchemaViolation):
        gateway.complete_json(render_coarse_aspects("claim", 5))


def test_rejects_non_list_aspects():
    gateway = gateway_with_default(
        "coarse_aspects", json.dumps({"aspects": "efficacy, safety"})
    )
    with pytest.raises(SchemaViolation):
        gateway.complete_json(render_coarse_aspects("claim", 5))


def test_rejects_wrong_keyword_count():
    gateway = gateway_with_default(
        "coarse_aspects", json.dumps(make_aspects(1, keywords=7))
    )
    with pytest.raises(SchemaViolation):
        gateway.complete_json(render_coarse_aspects("claim", 5))


def test_rejects_too_many_aspects():
    gateway = gateway_with_default("coarse_aspects", json.dumps(make_aspects(6)))
    with pytest.raises(SchemaViolation):
        gateway.complete_json(render_coarse_aspects("claim", 5))


# --- logging and overrides ---


def test_every_call_logged_with_hash():
    gateway = gateway_with_default("coarse_aspects", json.dumps(make_aspects()))
    instance = render_coarse_aspects("claim text", 5)
    gateway.complete_json(instance)
    gateway.complete_json(instance)
    calls = gateway.log.of_kind("llm_call")
    assert len(calls) == 2
    assert all(c["task"] == "coarse_aspects" for c in calls)
    assert all(c["prompt_hash"] == prompt_hash(instance.rendered_text) for c in calls)


def test_temperature_override():
    gateway = gateway_with_default(
        "coarse_aspects",
        json.dumps(make_aspects()),
        temperatures={"coarse_aspects": 0.9},
    )
    assert gateway._effective_task("coarse_aspects").temperature == 0.9


def test_max_retries_override_zero():
    gateway = gateway_with_default(
        "coarse_aspects", ["bad", json.dumps(make_aspects())], max_retries=0
    )
    with pytest.raises(SchemaViolation):
        gateway.complete_json(render_coarse_aspects("claim", 5))


def test_aspects_schema_shape():
    schema = aspects_schema(4)
    assert schema["properties"]["aspects"]["maxItems"] == 4
