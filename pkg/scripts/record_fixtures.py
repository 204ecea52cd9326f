"""Record the golden API fixtures used by the contract tests and the
dashboard. Rerunning regenerates byte-identical files because every input
is seeded and trained models carry no timestamps.

Usage: python3 scripts/record_fixtures.py
"""

from __future__ import annotations

import copy
import datetime as dt
import json
from pathlib import Path

from fastapi.testclient import TestClient

from gradecast import SynthParams, Verdict, default_calendar, generate_cohort, reference_scheme, train_all
from gradecast.config import load_config
from gradecast.service import create_app

ROOT = Path(__file__).resolve().parent.parent
FIXTURE_DIR = ROOT / "tests" / "fixtures" / "api"
TOKEN = "test-token"
CHECKPOINT = 2


def build():
    scheme = reference_scheme()
    calendar = default_calendar(dt.date(2021, 10, 1))
    cohort = generate_cohort(SynthParams(seed=42), scheme, calendar)
    config = load_config(env={"GRADECAST_API_TOKEN": TOKEN})
    models = train_all(cohort, calendar, config.pipeline)
    return config, cohort, models


def pick_students(client: TestClient, cohort) -> tuple[str, str]:
    """First pass-verdict and first at-risk-verdict student, sorted order."""
    pass_id = risk_id = None
    for student in cohort.students:
        response = client.get(
            f"/api/v1/students/{student.value}/prediction",
            params={"checkpoint": CHECKPOINT},
            headers={"Authorization": f"Bearer {TOKEN}"},
        )
        response.raise_for_status()
        verdict = response.json()["verdict"]
        if verdict == Verdict.PASS.value and pass_id is None:
            pass_id = student.value
        elif verdict == Verdict.AT_RISK.value and risk_id is None:
            risk_id = student.value
        if pass_id and risk_id:
            return pass_id, risk_id
    raise SystemExit("cohort lacks one of the two verdicts at this checkpoint")


def main() -> None:
    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
    config, cohort, models = build()
    app = create_app(config, cohort=cohort, models=models)
    client = TestClient(app)
    auth = {"Authorization": f"Bearer {TOKEN}"}

    pass_id, risk_id = pick_students(client, cohort)

    def record(name: str, response) -> dict:
        payload = response.json()
        path = FIXTURE_DIR / f"{name}.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        print(f"{name}: HTTP {response.status_code} -> {path.relative_to(ROOT)}")
        return payload

    record("healthz", client.get("/healthz"))
    at_risk = record(
        "prediction_at_risk",
        client.get(
            f"/api/v1/students/{risk_id}/prediction",
            params={"checkpoint": CHECKPOINT},
            headers=auth,
        ),
    )
    record(
        "prediction_pass",
        client.get(
            f"/api/v1/students/{pass_id}/prediction",
            params={"checkpoint": CHECKPOINT},
            headers=auth,
        ),
    )
    record("grades", client.get(f"/api/v1/students/{pass_id}/grades", headers=auth))
    record(
        "behavior",
        client.get(
            f"/api/v1/students/{pass_id}/behavior",
            params={"checkpoint": CHECKPOINT},
            headers=auth,
        ),
    )
    record(
        "percentile",
        client.get(
            f"/api/v1/students/{pass_id}/percentile",
            params={"checkpoint": CHECKPOINT},
            headers=auth,
        ),
    )
    record("history", client.get("/api/v1/course/history", headers=auth))
    record("trends", client.get("/api/v1/course/trends", headers=auth))
    record("effort", client.get("/api/v1/course/effort", headers=auth))
    record("scheme", client.get("/api/v1/course/scheme", headers=auth))

    record(
        "error_unknown_student",
        client.get(
            "/api/v1/students/nobody/prediction",
            params={"checkpoint": CHECKPOINT},
            headers=auth,
        ),
    )
    record(
        "error_checkpoint_out_of_range",
        client.get(
            f"/api/v1/students/{pass_id}/prediction",
            params={"checkpoint": 5},
            headers=auth,
        ),
    )
    record(
        "error_unauthorized",
        client.get(
            f"/api/v1/students/{pass_id}/prediction", params={"checkpoint": CHECKPOINT}
        ),
    )

    partial = {k: v for k, v in models.items() if k != 3}
    partial_app = create_app(config, cohort=cohort, models=partial)
    record(
        "error_model_not_available",
        TestClient(partial_app).get(
            f"/api/v1/students/{pass_id}/prediction",
            params={"checkpoint": 3},
            headers=auth,
        ),
    )

    # A deliberately inconsistent attribution for the dashboard's
    # client-side local-accuracy recheck.
    corrupted = copy.deepcopy(at_risk)
    corrupted["attribution"]["phi"][0]["value"] += 0.05
    (FIXTURE_DIR / "corrupted_prediction.json").write_text(
        json.dumps(corrupted, indent=2, sort_keys=True) + "\n"
    )
    print("corrupted_prediction: tampered copy of prediction_at_risk")

    meta = {
        "token": TOKEN,
        "checkpoint": CHECKPOINT,
        "pass_student": pass_id,
        "at_risk_student": risk_id,
        "cohort_seed": 42,
        "n_students": len(cohort.roster),
    }
    (FIXTURE_DIR / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"meta: {meta}")


if __name__ == "__main__":
    main()
