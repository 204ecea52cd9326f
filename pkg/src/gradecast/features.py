"""Checkpoint-sliced feature extraction and behavioral summaries.

A checkpoint sees only events strictly before its cutoff date and only the
grade items released by then, so every feature is computable on the day the
checkpoint model would actually run.

Feature schema order (names are stable across runs):

  gender one-hots, disability, schedule-group one-hots (groups sorted),
  clicks_pre_semester, clicks_month_<name> (one per elapsed month),
  clicks_component_<c> (all eight components, cumulative incl. pre-semester),
  first_interaction_offset_days, clicks_total_to_cutoff,
  points_<item> (one per released grade item, in scheme order).

Later checkpoints extend the schema by appending month and grade-item
columns, so an earlier schema is always an order-preserving subsequence of
a later one.
"""

from __future__ import annotations

import calendar
from dataclasses import dataclass
from datetime import date, timedelta, timezone
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import DateWindow, Gender, GradeScheme, StudentId
from .ingest import COMPONENT_ORDER, Cohort, VleEvent

SENTINEL_DESCRIPTION = "days in window + 1"


class FeatureError(ValueError):
    """Raised for unknown students or inconsistent checkpoint inputs."""


@dataclass(frozen=True)
class Checkpoint:
    """A monthly prediction point: data strictly before ``cutoff`` is visible."""

    index: int  # 1-based position in the semester
    label: str  # month name shown to students
    cutoff: date

    def __post_init__(self) -> None:
        if self.index < 1:
            raise FeatureError("checkpoint index must be >= 1")


@dataclass(frozen=True)
class AssessmentCalendar:
    """The semester's checkpoints, ordered with strictly increasing cutoffs.

    Grade-item release points are carried by the scheme's items;
    ``validate_scheme`` checks they all refer to real checkpoints.
    """

    checkpoints: tuple[Checkpoint, ...]

    def __post_init__(self) -> None:
        if not self.checkpoints:
            raise FeatureError("calendar needs at least one checkpoint")
        for i, cp in enumerate(self.checkpoints, start=1):
            if cp.index != i:
                raise FeatureError("checkpoint indexes must be consecutive from 1")
        cutoffs = [cp.cutoff for cp in self.checkpoints]
        if any(a >= b for a, b in zip(cutoffs, cutoffs[1:])):
            raise FeatureError("checkpoint cutoffs must strictly increase")

    def checkpoint(self, index: int) -> Checkpoint:
        if not 1 <= index <= len(self.checkpoints):
            raise FeatureError(
                f"checkpoint index {index} outside 1..{len(self.checkpoints)}"
            )
        return self.checkpoints[index - 1]

    def validate_scheme(self, scheme: GradeScheme) -> None:
        n = len(self.checkpoints)
        for item in scheme.items:
            if item.release_checkpoint is not None and item.release_checkpoint > n:
                raise FeatureError(
                    f"item {item.id!r} releases at checkpoint {item.release_checkpoint}, "
                    f"but the calendar has only {n}"
                )


def default_calendar(semester_start: date, n_checkpoints: int = 4) -> AssessmentCalendar:
    """Monthly checkpoints: checkpoint i summarizes the i-th semester month
    and cuts off on the first day of the following month."""
    checkpoints = tuple(
        Checkpoint(
            index=i,
            label=calendar.month_name[_add_months(semester_start, i - 1).month],
            cutoff=_add_months(semester_start, i),
        )
        for i in range(1, n_checkpoints + 1)
    )
    return AssessmentCalendar(checkpoints=checkpoints)


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str  # "numeric" or "one_hot"


@dataclass(frozen=True)
class FeatureMatrix:
    """Per-student feature vectors under one schema at one checkpoint."""

    schema: tuple[FeatureSpec, ...]
    rows: Mapping[StudentId, tuple[float, ...]]
    checkpoint: Checkpoint

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(spec.name for spec in self.schema)

    def vector(self, student: StudentId) -> tuple[float, ...]:
        try:
            return self.rows[student]
        except KeyError:
            raise FeatureError(f"student {student.value!r} has no feature row") from None

    def to_array(self, students: Sequence[StudentId] | None = None) -> np.ndarray:
        """Matrix in the given student order (default: sorted by id)."""
        if students is None:
            students = sorted(self.rows, key=lambda s: s.value)
        return np.array([self.vector(s) for s in students], dtype=np.float64)


def _add_months(day: date, months: int) -> date:
    month_index = day.month - 1 + months
    year = day.year + month_index // 12
    month = month_index % 12 + 1
    return date(year, month, 1)


def month_windows(semester_start: date, cutoff: date) -> list[tuple[str, DateWindow]]:
    """Calendar-month click buckets covering [semester_start, cutoff).

    The first bucket starts at ``semester_start`` even mid-month; the last
    extends to ``cutoff`` so the buckets partition the visible window.
    """
    if cutoff <= semester_start:
        raise FeatureError("checkpoint cutoff must fall after the semester start")
    windows: list[tuple[str, DateWindow]] = []
    start = semester_start
    while start < cutoff:
        next_start = _add_months(start, 1)
        end = min(next_start, cutoff)
        windows.append((calendar.month_name[start.month].lower(), DateWindow(start, end)))
        start = next_start
    return windows


def feature_schema(cohort: Cohort, checkpoint: Checkpoint, scheme: GradeScheme) -> tuple[FeatureSpec, ...]:
    groups = sorted({d.schedule_group for d in cohort.roster.values()})
    specs: list[FeatureSpec] = []
    for g in Gender:
        specs.append(FeatureSpec(f"gender_{g.value}", "one_hot"))
    specs.append(FeatureSpec("disability", "numeric"))
    for group in groups:
        specs.append(FeatureSpec(f"schedule_group_{group}", "one_hot"))
    specs.append(FeatureSpec("clicks_pre_semester", "numeric"))
    for month_name, _ in month_windows(cohort.window.start, checkpoint.cutoff):
        specs.append(FeatureSpec(f"clicks_month_{month_name}", "numeric"))
    for component in COMPONENT_ORDER:
        specs.append(FeatureSpec(f"clicks_component_{component.value}", "numeric"))
    specs.append(FeatureSpec("first_interaction_offset_days", "numeric"))
    specs.append(FeatureSpec("clicks_total_to_cutoff", "numeric"))
    for item in scheme.released_items(checkpoint.index):
        specs.append(FeatureSpec(f"points_{item.id}", "numeric"))
    return tuple(specs)


def extract_features(cohort: Cohort, checkpoint: Checkpoint, scheme: GradeScheme) -> FeatureMatrix:
    """Build the per-student feature matrix visible at a checkpoint.

    Clicks count all events with timestamp date < cutoff, including
    pre-semester activity; component totals are likewise cumulative. A
    student with no events gets zero counts and the no-interaction sentinel
    offset (days in window + 1). Released-but-ungraded items impute 0.
    """
    schema = feature_schema(cohort, checkpoint, scheme)
    months = month_windows(cohort.window.start, checkpoint.cutoff)
    groups = sorted({d.schedule_group for d in cohort.roster.values()})
    released = scheme.released_items(checkpoint.index)
    start = cohort.window.start
    cutoff = checkpoint.cutoff
    sentinel = float((cutoff - start).days + 1)

    pre: dict[StudentId, int] = {}
    month_clicks: dict[StudentId, list[int]] = {}
    component_clicks: dict[StudentId, dict[str, int]] = {}
    first_ts: dict[StudentId, date] = {}
    total: dict[StudentId, int] = {}

    for event in cohort.events:
        day = event.timestamp.astimezone(timezone.utc).date()
        if day >= cutoff:
            continue
        s = event.student
        total[s] = total.get(s, 0) + 1
        if s not in first_ts:
            first_ts[s] = day  # events arrive timestamp-sorted
        comps = component_clicks.setdefault(s, {})
        comps[event.component.value] = comps.get(event.component.value, 0) + 1
        if day < start:
            pre[s] = pre.get(s, 0) + 1
        else:
            buckets = month_clicks.setdefault(s, [0] * len(months))
            for i, (_, window) in enumerate(months):
                if window.contains(day):
                    buckets[i] += 1
                    break

    rows: dict[StudentId, tuple[float, ...]] = {}
    for student, demo in cohort.roster.items():
        vec: list[float] = []
        for g in Gender:
            vec.append(1.0 if demo.gender is g else 0.0)
        vec.append(1.0 if demo.disability else 0.0)
        for group in groups:
            vec.append(1.0 if demo.schedule_group == group else 0.0)
        vec.append(float(pre.get(student, 0)))
        buckets = month_clicks.get(student, [0] * len(months))
        vec.extend(float(c) for c in buckets)
        comps = component_clicks.get(student, {})
        for component in COMPONENT_ORDER:
            vec.append(float(comps.get(component.value, 0)))
        if student in first_ts:
            vec.append(float((first_ts[student] - start).days))
        else:
            vec.append(sentinel)
        vec.append(float(total.get(student, 0)))
        earned = cohort.grades.get(student, {})
        for item in released:
            vec.append(float(earned.get(item.id, 0)))
        assert len(vec) == len(schema)
        rows[student] = tuple(vec)

    return FeatureMatrix(schema=schema, rows=rows, checkpoint=checkpoint)


# ---------------------------------------------------------------------------
# Behavioral summaries for the dashboard
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BehaviorStats:
    """One student's activity summary over a date window.

    Invariants: active + inactive days = window days; weekly clicks sum to
    the total; streaks never exceed the window length.
    """

    student: StudentId
    window: DateWindow
    total_clicks: int
    active_days: int
    inactive_days: int
    clicks_per_week: tuple[int, ...]
    longest_active_streak: int
    longest_inactive_streak: int


@dataclass(frozen=True)
class TrendSeries:
    """Mean weekly clicks of past passing vs failing students."""

    window: DateWindow
    weeks: int
    passed_mean_weekly_clicks: tuple[float, ...]
    failed_mean_weekly_clicks: tuple[float, ...]
    passed_count: int
    failed_count: int


def _weeks_in(window: DateWindow) -> int:
    return -(-window.n_days // 7)


def _weekly_counts(days: Iterable[date], window: DateWindow) -> list[int]:
    weeks = _weeks_in(window)
    counts = [0] * weeks
    for day in days:
        if window.contains(day):
            counts[(day - window.start).days // 7] += 1
    return counts


def _streaks(active: Sequence[bool]) -> tuple[int, int]:
    longest_active = longest_inactive = 0
    run_active = run_inactive = 0
    for flag in active:
        if flag:
            run_active += 1
            run_inactive = 0
        else:
            run_inactive += 1
            run_active = 0
        longest_active = max(longest_active, run_active)
        longest_inactive = max(longest_inactive, run_inactive)
    return longest_active, longest_inactive


def behavior_stats(cohort: Cohort, student: StudentId, window: DateWindow) -> BehaviorStats:
    """Click activity summary for one student over ``window``."""
    if student not in cohort.roster:
        raise FeatureError(f"unknown student {student.value!r}")
    event_days = [
        e.timestamp.astimezone(timezone.utc).date()
        for e in cohort.events
        if e.student == student
    ]
    in_window = [d for d in event_days if window.contains(d)]
    active_set = set(in_window)
    day_flags = [
        (window.start + timedelta(days=i)) in active_set for i in range(window.n_days)
    ]
    longest_active, longest_inactive = _streaks(day_flags)
    return BehaviorStats(
        student=student,
        window=window,
        total_clicks=len(in_window),
        active_days=len(active_set),
        inactive_days=window.n_days - len(active_set),
        clicks_per_week=tuple(_weekly_counts(in_window, window)),
        longest_active_streak=longest_active,
        longest_inactive_streak=longest_inactive,
    )


def cohort_trends(cohort: Cohort) -> TrendSeries:
    """Mean weekly click curves of the training cohort, split by outcome.

    Requires final outcomes (a completed training year); a group with no
    students yields a zero curve and a zero count.
    """
    if not cohort.outcomes:
        raise FeatureError("cohort has no final outcomes to build trends from")
    window = cohort.window
    weeks = _weeks_in(window)

    days_by_student: dict[StudentId, list[date]] = {}
    for e in cohort.events:
        days_by_student.setdefault(e.student, []).append(
            e.timestamp.astimezone(timezone.utc).date()
        )

    sums = {True: np.zeros(weeks), False: np.zeros(weeks)}
    counts = {True: 0, False: 0}
    for student, outcome in cohort.outcomes.items():
        weekly = _weekly_counts(days_by_student.get(student, []), window)
        sums[outcome.passed] += np.asarray(weekly, dtype=np.float64)
        counts[outcome.passed] += 1

    def mean_curve(passed: bool) -> tuple[float, ...]:
        if counts[passed] == 0:
            return tuple(0.0 for _ in range(weeks))
        return tuple(float(v) for v in sums[passed] / counts[passed])

    return TrendSeries(
        window=window,
        weeks=weeks,
        passed_mean_weekly_clicks=mean_curve(True),
        failed_mean_weekly_clicks=mean_curve(False),
        passed_count=counts[True],
        failed_count=counts[False],
    )


def percentile_of(cohort: Cohort, student: StudentId, checkpoint: Checkpoint) -> float:
    """Fraction of roster students with a strictly lower released-points
    total; ties share the lower rank, so equal totals get equal percentiles."""
    if student not in cohort.roster:
        raise FeatureError(f"unknown student {student.value!r}")
    released_ids = [item.id for item in cohort.scheme.released_items(checkpoint.index)]

    def released_total(s: StudentId) -> int:
        earned = cohort.grades.get(s, {})
        return sum(earned.get(i, 0) for i in released_ids)

    totals = {s: released_total(s) for s in cohort.roster}
    mine = totals[student]
    below = sum(1 for v in totals.values() if v < mine)
    return below / len(totals)
