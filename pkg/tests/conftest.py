"""Shared fixtures: a reference scheme, a default calendar, and synthetic
cohorts sized for fast unit tests. Session scope keeps the expensive
generation and training work to one run per test session."""

from __future__ import annotations

import datetime as dt
import json
from pathlib import Path

import pytest

from gradecast import (
    AssessmentCalendar,
    Cohort,
    Component,
    Demographics,
    EffortBucket,
    EffortSurvey,
    Gender,
    HistoricalStats,
    PipelineParams,
    StudentId,
    SynthParams,
    VleEvent,
    assemble_cohort,
    default_calendar,
    generate_cohort,
    reference_scheme,
    train_all,
)
from gradecast.core import DateWindow, GradeScheme


@pytest.fixture(scope="session")
def scheme() -> GradeScheme:
    return reference_scheme()


@pytest.fixture(scope="session")
def calendar() -> AssessmentCalendar:
    return default_calendar(dt.date(2021, 10, 1))


@pytest.fixture(scope="session")
def small_cohort(scheme, calendar) -> Cohort:
    params = SynthParams(n_students=40, seed=7, target_fail_count=7, history_years=2)
    return generate_cohort(params, scheme, calendar)


@pytest.fixture(scope="session")
def full_cohort(scheme, calendar) -> Cohort:
    return generate_cohort(SynthParams(seed=1), scheme, calendar)


@pytest.fixture(scope="session")
def fast_params() -> PipelineParams:
    return PipelineParams(seed=42, n_trees=20)


@pytest.fixture(scope="session")
def small_models(small_cohort, calendar, fast_params):
    return train_all(small_cohort, calendar, fast_params)


FIXTURE_DIR = Path(__file__).parent / "fixtures" / "api"


def load_fixture(name: str) -> dict:
    return json.loads((FIXTURE_DIR / f"{name}.json").read_text())


@pytest.fixture(scope="session")
def api_meta() -> dict:
    return load_fixture("meta")


@pytest.fixture(scope="session")
def api_cohort(scheme, calendar, api_meta) -> Cohort:
    return generate_cohort(SynthParams(seed=api_meta["cohort_seed"]), scheme, calendar)


@pytest.fixture(scope="session")
def api_config(api_meta):
    from gradecast.config import load_config

    return load_config(env={"GRADECAST_API_TOKEN": api_meta["token"]})


@pytest.fixture(scope="session")
def api_models(api_cohort, calendar, api_config):
    return train_all(api_cohort, calendar, api_config.pipeline)


@pytest.fixture(scope="session")
def api_client(api_config, api_cohort, api_models):
    from fastapi.testclient import TestClient

    from gradecast.service import create_app

    app = create_app(api_config, cohort=api_cohort, models=api_models)
    return TestClient(app)


def _ts(day: dt.date, hour: int = 12, minute: int = 0) -> dt.datetime:
    return dt.datetime(
        day.year, day.month, day.day, hour, minute, tzinfo=dt.timezone.utc
    )


def make_event(
    student: str,
    day: dt.date,
    component: Component = Component.PAGE,
    action: str = "view",
    hour: int = 12,
    minute: int = 0,
) -> VleEvent:
    return VleEvent(
        student=StudentId(student),
        timestamp=_ts(day, hour, minute),
        component=component,
        action=action,
    )


def make_cohort(
    scheme: GradeScheme,
    window: DateWindow,
    events: list[VleEvent],
    grades: dict[str, dict[str, int]],
    demographics: dict[str, Demographics] | None = None,
    year: str = "2021/22",
) -> Cohort:
    """Hand-built cohort around explicit events and gradebooks.

    Students named only in ``grades`` or ``events`` are added to the
    roster with a default profile, so tests can stay terse.
    """
    roster: dict[StudentId, Demographics] = {}
    names = set(grades) | {e.student.value for e in events}
    if demographics:
        names |= set(demographics)
    for name in sorted(names):
        if demographics and name in demographics:
            roster[StudentId(name)] = demographics[name]
        else:
            roster[StudentId(name)] = Demographics(
                gender=Gender.FEMALE, disability=False, schedule_group="morning"
            )
    survey = EffortSurvey(
        course_year=year,
        buckets=(
            EffortBucket(0, 5, 3),
            EffortBucket(5, 10, 4),
            EffortBucket(10, None, 2),
        ),
    )
    history = (
        HistoricalStats(year="2019/20", grade_counts={5: 4, 6: 6, 7: 8, 8: 5, 9: 2, 10: 1}),
    )
    return assemble_cohort(
        roster=roster,
        events=events,
        grades={StudentId(s): g for s, g in grades.items()},
        survey=survey,
        history=history,
        scheme=scheme,
        window=window,
        year=year,
    )


def full_marks(scheme: GradeScheme, scale: float = 1.0) -> dict[str, int]:
    """A complete gradebook at ``scale`` of each item's maximum."""
    return {item.id: int(item.max_points * scale) for item in scheme.items}
