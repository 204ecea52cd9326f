"""HTTP API behavior: golden-fixture equality, schemas, auth, errors,
caching, and atomic model swaps."""

from __future__ import annotations

import dataclasses

import jsonschema
import pytest
from fastapi.testclient import TestClient

from gradecast import Attribution, PipelineParams, StudentId
from gradecast.config import load_config
from gradecast.service import ModelStore, build_snapshot, create_app

from conftest import load_fixture

ERROR_SCHEMA = {
    "type": "object",
    "required": ["code", "message", "detail"],
    "properties": {
        "code": {"type": "string"},
        "message": {"type": "string"},
        "detail": {},
    },
    "additionalProperties": False,
}

PREDICTION_SCHEMA = {
    "type": "object",
    "required": [
        "student_id",
        "checkpoint",
        "model_version",
        "verdict",
        "risk_probability",
        "predicted_points",
        "predicted_grade",
        "attribution",
        "sentences",
    ],
    "properties": {
        "student_id": {"type": "string"},
        "checkpoint": {"type": "integer", "minimum": 1},
        "model_version": {"type": "integer", "minimum": 1},
        "verdict": {"enum": ["pass", "at_risk"]},
        "risk_probability": {"type": "number", "minimum": 0, "maximum": 1},
        "predicted_points": {"type": ["number", "null"], "minimum": 50, "maximum": 100},
        "predicted_grade": {"type": ["integer", "null"], "minimum": 6, "maximum": 10},
        "attribution": {
            "type": "object",
            "required": ["kind", "base_value", "prediction", "phi"],
            "properties": {
                "kind": {"enum": ["pass_probability", "grade_points"]},
                "base_value": {"type": "number"},
                "prediction": {"type": "number"},
                "phi": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["feature", "value"],
                        "properties": {
                            "feature": {"type": "string"},
                            "value": {"type": "number"},
                        },
                        "additionalProperties": False,
                    },
                },
            },
            "additionalProperties": False,
        },
        "sentences": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["text", "direction", "feature"],
                "properties": {
                    "text": {"type": "string", "minLength": 1},
                    "direction": {"enum": ["supports_pass", "increases_risk"]},
                    "feature": {"type": "string"},
                },
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}

GRADES_SCHEMA = {
    "type": "object",
    "required": ["student_id", "items", "earned_total", "max_total"],
    "properties": {
        "items": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["item_id", "kind", "max_points", "release_checkpoint", "earned"],
                "additionalProperties": False,
                "properties": {
                    "item_id": {"type": "string"},
                    "kind": {"type": "string"},
                    "max_points": {"type": "integer"},
                    "release_checkpoint": {"type": ["integer", "null"]},
                    "earned": {"type": ["integer", "null"]},
                },
            },
        },
        "earned_total": {"type": "integer"},
        "max_total": {"const": 100},
        "student_id": {"type": "string"},
    },
    "additionalProperties": False,
}

BEHAVIOR_SCHEMA = {
    "type": "object",
    "required": [
        "student_id",
        "checkpoint",
        "window",
        "total_clicks",
        "active_days",
        "inactive_days",
        "clicks_per_week",
        "longest_active_streak",
        "longest_inactive_streak",
    ],
    "properties": {
        "window": {
            "type": "object",
            "required": ["start", "end"],
            "additionalProperties": False,
            "properties": {"start": {"type": "string"}, "end": {"type": "string"}},
        },
        "clicks_per_week": {"type": "array", "items": {"type": "integer"}},
    },
}

HISTORY_SCHEMA = {
    "type": "object",
    "required": ["years"],
    "properties": {
        "years": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["year", "grade_counts", "total", "passability", "mean_grade"],
                "properties": {
                    "grade_counts": {
                        "type": "object",
                        "required": ["5", "6", "7", "8", "9", "10"],
                        "additionalProperties": False,
                        "patternProperties": {"^(5|6|7|8|9|10)$": {"type": "integer"}},
                    },
                    "passability": {"type": "number", "minimum": 0, "maximum": 1},
                },
            },
        }
    },
}


def auth_headers(api_meta) -> dict:
    return {"Authorization": f"Bearer {api_meta['token']}"}


def get(client, api_meta, path, **params):
    return client.get(path, params=params, headers=auth_headers(api_meta))


# ---------------------------------------------------------------------------
# Golden suite
# ---------------------------------------------------------------------------


def test_healthz_matches_golden(api_client):
    response = api_client.get("/healthz")
    assert response.status_code == 200
    assert response.json() == load_fixture("healthz")


@pytest.mark.parametrize(
    "fixture,student_key",
    [("prediction_pass", "pass_student"), ("prediction_at_risk", "at_risk_student")],
)
def test_prediction_matches_golden(api_client, api_meta, fixture, student_key):
    response = get(
        api_client,
        api_meta,
        f"/api/v1/students/{api_meta[student_key]}/prediction",
        checkpoint=api_meta["checkpoint"],
    )
    assert response.status_code == 200
    payload = response.json()
    assert payload == load_fixture(fixture)
    jsonschema.validate(payload, PREDICTION_SCHEMA)


def test_prediction_payload_internal_consistency(api_client, api_meta):
    for name in ("prediction_pass", "prediction_at_risk"):
        payload = load_fixture(name)
        att = payload["attribution"]
        total = att["base_value"] + sum(entry["value"] for entry in att["phi"])
        assert abs(total - att["prediction"]) <= 1e-9
        if payload["verdict"] == "at_risk":
            assert payload["predicted_points"] is None
            assert payload["predicted_grade"] is None
            assert payload["risk_probability"] >= 0.5
            # The attribution explains the gate's pass probability.
            assert abs(att["prediction"] - (1.0 - payload["risk_probability"])) <= 1e-9
        else:
            clamped = min(max(att["prediction"], 50.0), 100.0)
            assert abs(clamped - payload["predicted_points"]) <= 1e-9


def test_corrupted_fixture_fails_local_accuracy():
    payload = load_fixture("corrupted_prediction")
    att = payload["attribution"]
    total = att["base_value"] + sum(entry["value"] for entry in att["phi"])
    assert abs(total - att["prediction"]) > 1e-6


@pytest.mark.parametrize(
    "fixture,path,needs_checkpoint,schema",
    [
        ("grades", "/api/v1/students/{s}/grades", False, GRADES_SCHEMA),
        ("behavior", "/api/v1/students/{s}/behavior", True, BEHAVIOR_SCHEMA),
        ("percentile", "/api/v1/students/{s}/percentile", True, None),
        ("history", "/api/v1/course/history", False, HISTORY_SCHEMA),
        ("trends", "/api/v1/course/trends", False, None),
        ("effort", "/api/v1/course/effort", False, None),
        ("scheme", "/api/v1/course/scheme", False, None),
    ],
)
def test_endpoint_matches_golden(api_client, api_meta, fixture, path, needs_checkpoint, schema):
    url = path.format(s=api_meta["pass_student"])
    params = {"checkpoint": api_meta["checkpoint"]} if needs_checkpoint else {}
    response = get(api_client, api_meta, url, **params)
    assert response.status_code == 200
    payload = response.json()
    assert payload == load_fixture(fixture)
    if schema is not None:
        jsonschema.validate(payload, schema)


def test_no_demographic_fields_in_any_response():
    """Response objects never expose raw demographic attributes as fields."""
    import json as jsonlib
    from conftest import FIXTURE_DIR

    forbidden = {"gender", "disability", "schedule_group"}

    def walk(node):
        if isinstance(node, dict):
            assert not forbidden & set(node.keys())
            for v in node.values():
                walk(v)
        elif isinstance(node, list):
            for v in node:
                walk(v)

    for path in FIXTURE_DIR.glob("*.json"):
        walk(jsonlib.loads(path.read_text()))


# ---------------------------------------------------------------------------
# Errors and auth
# ---------------------------------------------------------------------------


def test_unknown_student_404(api_client, api_meta):
    response = get(api_client, api_meta, "/api/v1/students/nobody/prediction", checkpoint=1)
    assert response.status_code == 404
    payload = response.json()
    assert payload == load_fixture("error_unknown_student")
    assert payload["code"] == "unknown_student"
    jsonschema.validate(payload, ERROR_SCHEMA)


def test_checkpoint_out_of_range_400(api_client, api_meta):
    response = get(
        api_client,
        api_meta,
        f"/api/v1/students/{api_meta['pass_student']}/prediction",
        checkpoint=5,
    )
    assert response.status_code == 400
    payload = response.json()
    assert payload == load_fixture("error_checkpoint_out_of_range")
    assert payload["code"] == "checkpoint_out_of_range"


def test_non_integer_checkpoint_400(api_client, api_meta):
    response = get(
        api_client,
        api_meta,
        f"/api/v1/students/{api_meta['pass_student']}/prediction",
        checkpoint="soon",
    )
    assert response.status_code == 400
    assert response.json()["code"] == "bad_request"


def test_missing_token_401(api_client, api_meta):
    response = api_client.get(
        f"/api/v1/students/{api_meta['pass_student']}/prediction",
        params={"checkpoint": 1},
    )
    assert response.status_code == 401
    payload = response.json()
    assert payload == load_fixture("error_unauthorized")
    assert payload["code"] == "unauthorized"


def test_wrong_token_401(api_client, api_meta):
    response = api_client.get(
        "/api/v1/course/history", headers={"Authorization": "Bearer wrong"}
    )
    assert response.status_code == 401


def test_healthz_needs_no_token(api_client):
    assert api_client.get("/healthz").status_code == 200


def test_every_api_route_requires_token(api_client, api_meta):
    paths = [
        f"/api/v1/students/{api_meta['pass_student']}/prediction?checkpoint=1",
        f"/api/v1/students/{api_meta['pass_student']}/grades",
        f"/api/v1/students/{api_meta['pass_student']}/behavior?checkpoint=1",
        f"/api/v1/students/{api_meta['pass_student']}/percentile?checkpoint=1",
        "/api/v1/course/history",
        "/api/v1/course/trends",
        "/api/v1/course/effort",
        "/api/v1/course/scheme",
    ]
    for path in paths:
        assert api_client.get(path).status_code == 401, path
    assert api_client.post("/api/v1/admin/train").status_code == 401


def test_model_not_available_404(api_config, api_cohort, api_models, api_meta):
    partial = {k: v for k, v in api_models.items() if k != 3}
    client = TestClient(create_app(api_config, cohort=api_cohort, models=partial))
    response = client.get(
        f"/api/v1/students/{api_meta['pass_student']}/prediction",
        params={"checkpoint": 3},
        headers=auth_headers(api_meta),
    )
    assert response.status_code == 404
    payload = response.json()
    assert payload == load_fixture("error_model_not_available")
    assert payload["code"] == "model_not_available"


# ---------------------------------------------------------------------------
# Store behavior
# ---------------------------------------------------------------------------


def small_app(tmp_path, small_cohort, small_models, calendar, token="swap-token", n_trees=10):
    base = load_config(env={"GRADECAST_API_TOKEN": token})
    config = dataclasses.replace(
        base,
        model_dir=tmp_path / "models",
        pipeline=PipelineParams(seed=1, n_trees=n_trees),
    )
    app = create_app(config, cohort=small_cohort, models=small_models)
    return app, config


def test_prediction_cache_returns_identical_object(api_cohort, api_models, api_config):
    store = ModelStore(build_snapshot(api_cohort, api_models, version=1))
    snapshot = store.current
    student = api_cohort.students[0]
    first = store.predict(snapshot, student, 1)
    second = store.predict(snapshot, student, 1)
    assert second is first  # cache hit, not a recompute


def test_admin_train_bumps_version_and_persists(tmp_path, small_cohort, small_models, calendar):
    app, config = small_app(tmp_path, small_cohort, small_models, calendar)
    client = TestClient(app)
    headers = {"Authorization": "Bearer swap-token"}

    assert client.get("/healthz").json()["model_version"] == 1
    response = client.post("/api/v1/admin/train", headers=headers)
    assert response.status_code == 200
    assert response.json() == {"model_version": 2}
    assert client.get("/healthz").json()["model_version"] == 2
    saved = sorted(p.name for p in (tmp_path / "models").glob("checkpoint_*.json"))
    assert saved == [f"checkpoint_{i}.json" for i in (1, 2, 3, 4)]

    student = small_cohort.students[0].value
    payload = client.get(
        f"/api/v1/students/{student}/prediction", params={"checkpoint": 1}, headers=headers
    ).json()
    assert payload["model_version"] == 2


def test_failed_training_keeps_old_snapshot(
    tmp_path, small_cohort, small_models, calendar, monkeypatch
):
    app, config = small_app(tmp_path, small_cohort, small_models, calendar)
    client = TestClient(app)
    headers = {"Authorization": "Bearer swap-token"}

    import gradecast.service as service_module

    def boom(*args, **kwargs):
        raise RuntimeError("no data today")

    monkeypatch.setattr(service_module, "train_all", boom)
    response = client.post("/api/v1/admin/train", headers=headers)
    assert response.status_code == 500
    payload = response.json()
    assert payload["code"] == "train_failed"
    # The old snapshot keeps serving.
    assert client.get("/healthz").json()["model_version"] == 1
    student = small_cohort.students[0].value
    assert (
        client.get(
            f"/api/v1/students/{student}/prediction", params={"checkpoint": 1}, headers=headers
        ).status_code
        == 200
    )


def test_inconsistent_attribution_is_a_500(
    tmp_path, small_cohort, small_models, calendar, monkeypatch
):
    app, _ = small_app(tmp_path, small_cohort, small_models, calendar)
    client = TestClient(app)
    monkeypatch.setattr(Attribution, "check_local_accuracy", lambda self, tol=1e-9: False)
    student = small_cohort.students[0].value
    response = client.get(
        f"/api/v1/students/{student}/prediction",
        params={"checkpoint": 1},
        headers={"Authorization": "Bearer swap-token"},
    )
    assert response.status_code == 500
    assert response.json()["code"] == "attribution_inconsistent"


def test_snapshot_requires_matching_schema(api_cohort, api_models):
    from gradecast.pipeline import PipelineError

    wrong = dict(api_models)
    wrong[1] = dataclasses.replace(wrong[1], schema=wrong[2].schema)
    with pytest.raises(PipelineError):
        build_snapshot(api_cohort, wrong, version=1)
