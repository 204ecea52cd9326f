"""CSV ingestion for the four course data sources plus history and survey.

Every parser validates strictly and raises :class:`IngestError` carrying the
1-based line number of the offending row. Parsers accept a file path, a text
or byte string, or an open text stream.

File formats (all with a mandatory header row):

* events.csv        student_id,timestamp,component,action
* gradebook.csv     student_id,item_id,points
* demographics.csv  student_id,gender,disability,schedule_group
* history.csv       year,grade,count
* survey.csv        bucket_low_hours,bucket_high_hours,count
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import IO, Mapping

import yaml

from .core import (
    DateWindow,
    Demographics,
    FinalOutcome,
    Gender,
    GradeScheme,
    StudentId,
    evaluate_outcome,
)

logger = logging.getLogger(__name__)

#: Events this far before the window start are still plausible course
#: activity (enrolment, orientation); anything earlier is dropped.
PRE_WINDOW_GRACE_DAYS = 60
#: Events this far after the window end are tolerated (resits, admin clicks).
POST_WINDOW_GRACE_DAYS = 30

EVENTS_HEADER = ["student_id", "timestamp", "component", "action"]
GRADEBOOK_HEADER = ["student_id", "item_id", "points"]
DEMOGRAPHICS_HEADER = ["student_id", "gender", "disability", "schedule_group"]
HISTORY_HEADER = ["year", "grade", "count"]
SURVEY_HEADER = ["bucket_low_hours", "bucket_high_hours", "count"]


class IngestError(ValueError):
    """A malformed row or file; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class Component(str, Enum):
    """VLE component taxonomy; anything unrecognized maps to OTHER."""

    RESOURCE = "resource"
    ASSIGNMENT = "assignment"
    QUIZ = "quiz"
    FORUM = "forum"
    PAGE = "page"
    URL = "url"
    FOLDER = "folder"
    OTHER = "other"


COMPONENT_ORDER: tuple[Component, ...] = tuple(Component)


@dataclass(frozen=True)
class VleEvent:
    """One logged click in the virtual learning environment."""

    student: StudentId
    timestamp: datetime  # tz-aware UTC, second resolution
    component: Component
    action: str


@dataclass(frozen=True)
class EffortBucket:
    """One histogram bucket of weekly self-reported study hours,
    [low_hours, high_hours); ``high_hours`` None means open-ended."""

    low_hours: int
    high_hours: int | None
    count: int


@dataclass(frozen=True)
class EffortSurvey:
    """Aggregate weekly-effort histogram for one course year.

    Collected from university-wide questionnaires, so it exists only as
    course-level counts, never per student.
    """

    course_year: str
    buckets: tuple[EffortBucket, ...]

    def __post_init__(self) -> None:
        prev_high: int | None = 0
        for i, b in enumerate(self.buckets):
            if b.count < 0:
                raise IngestError(f"survey bucket {i}: negative count")
            if b.high_hours is not None and b.high_hours <= b.low_hours:
                raise IngestError(f"survey bucket {i}: empty or inverted range")
            if prev_high is None:
                raise IngestError("open-ended survey bucket must be last")
            if b.low_hours < prev_high:
                raise IngestError(f"survey bucket {i}: overlaps previous bucket")
            prev_high = b.high_hours

    @property
    def respondents(self) -> int:
        return sum(b.count for b in self.buckets)


@dataclass(frozen=True)
class HistoricalStats:
    """Final-grade distribution of one past course year."""

    year: str
    grade_counts: Mapping[int, int]  # grade 5..10 -> student count

    def __post_init__(self) -> None:
        for grade, count in self.grade_counts.items():
            if grade not in (5, 6, 7, 8, 9, 10):
                raise IngestError(f"history year {self.year}: grade {grade} out of scale")
            if count < 0:
                raise IngestError(f"history year {self.year}: negative count")
        if self.total == 0:
            raise IngestError(f"history year {self.year}: no students")

    @property
    def total(self) -> int:
        return sum(self.grade_counts.values())

    @property
    def passability(self) -> float:
        """Fraction of the cohort that passed (grade above 5)."""
        return 1.0 - self.grade_counts.get(5, 0) / self.total

    @property
    def mean_grade(self) -> float:
        return sum(g * c for g, c in self.grade_counts.items()) / self.total


@dataclass(frozen=True)
class Cohort:
    """One course year's joined, validated dataset.

    ``window`` spans [semester start, semester end). ``outcomes`` holds the
    final result for every student whose gradebook covers the full scheme;
    in-flight years have an empty outcome map.
    """

    year: str
    window: DateWindow
    scheme: GradeScheme
    roster: Mapping[StudentId, Demographics]
    events: tuple[VleEvent, ...]
    grades: Mapping[StudentId, Mapping[str, int]]
    outcomes: Mapping[StudentId, FinalOutcome]
    survey: EffortSurvey
    history: tuple[HistoricalStats, ...]

    @property
    def students(self) -> tuple[StudentId, ...]:
        return tuple(sorted(self.roster, key=lambda s: s.value))


# ---------------------------------------------------------------------------
# Row mechanics
# ---------------------------------------------------------------------------


def _open_source(source: str | bytes | Path | IO[str]) -> IO[str]:
    if isinstance(source, Path):
        return source.open("r", encoding="utf-8", newline="")
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, str):
        return io.StringIO(source)
    return source


def _rows(source: str | bytes | Path | IO[str], header: list[str], name: str):
    """Yield (line_number, row) for each data row after validating the header."""
    stream = _open_source(source)
    reader = csv.reader(stream)
    try:
        first = next(reader)
    except StopIteration:
        raise IngestError(f"{name}: empty file, expected header {','.join(header)}") from None
    if [h.strip() for h in first] != header:
        raise IngestError(
            f"{name}: bad header {','.join(first)!r}, expected {','.join(header)}", line=1
        )
    for line, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise IngestError(f"{name}: expected {len(header)} fields, got {len(row)}", line)
        yield line, [f.strip() for f in row]


def _parse_int(text: str, what: str, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise IngestError(f"{what} must be an integer, got {text!r}", line) from None


def _parse_timestamp(text: str, line: int) -> datetime:
    """RFC 3339 timestamp with an explicit UTC designator (Z or +00:00).

    Values are truncated to second resolution, the event-log contract.
    """
    raw = text.strip()
    normalized = raw[:-1] + "+00:00" if raw.endswith(("Z", "z")) else raw
    try:
        ts = datetime.fromisoformat(normalized)
    except ValueError:
        raise IngestError(f"bad timestamp {text!r}", line) from None
    if ts.tzinfo is None:
        raise IngestError(f"timestamp {text!r} lacks a UTC offset", line)
    ts = ts.astimezone(timezone.utc)
    if ts.utcoffset() != timedelta(0):
        # astimezone already normalized; this guards a pathological tzinfo.
        raise IngestError(f"timestamp {text!r} is not UTC", line)
    return ts.replace(microsecond=0)


# ---------------------------------------------------------------------------
# Parsers
# ---------------------------------------------------------------------------


def parse_events(
    source: str | bytes | Path | IO[str], cohort_window: DateWindow
) -> list[VleEvent]:
    """Parse the VLE click log, sorted by timestamp (stable for ties).

    Events outside [window start - 60 days, window end + 30 days) are
    dropped, each logged at DEBUG plus one WARNING summary with the count.
    Unknown components map to :attr:`Component.OTHER`.
    """
    lo = cohort_window.start - timedelta(days=PRE_WINDOW_GRACE_DAYS)
    hi = cohort_window.end + timedelta(days=POST_WINDOW_GRACE_DAYS)
    events: list[VleEvent] = []
    dropped = 0
    for line, (student_id, ts_text, component_text, action) in _rows(
        source, EVENTS_HEADER, "events"
    ):
        if not student_id:
            raise IngestError("empty student_id", line)
        ts = _parse_timestamp(ts_text, line)
        day = ts.date()
        if not lo <= day < hi:
            dropped += 1
            logger.debug("events line %d: %s outside plausible window, dropped", line, ts_text)
            continue
        try:
            component = Component(component_text.lower())
        except ValueError:
            component = Component.OTHER
        if not action:
            raise IngestError("empty action", line)
        events.append(
            VleEvent(
                student=StudentId(student_id),
                timestamp=ts,
                component=component,
                action=action,
            )
        )
    if dropped:
        logger.warning("events: dropped %d event(s) outside the plausible window", dropped)
    events.sort(key=lambda e: e.timestamp)
    return events


def parse_gradebook(
    source: str | bytes | Path | IO[str], scheme: GradeScheme
) -> dict[StudentId, dict[str, int]]:
    """Parse per-item earned points. Rejects unknown items, fractional or
    out-of-range points, and duplicate (student, item) rows."""
    known = {item.id: item for item in scheme.items}
    grades: dict[StudentId, dict[str, int]] = {}
    for line, (student_id, item_id, points_text) in _rows(
        source, GRADEBOOK_HEADER, "gradebook"
    ):
        if not student_id:
            raise IngestError("empty student_id", line)
        item = known.get(item_id)
        if item is None:
            raise IngestError(f"unknown grade item {item_id!r}", line)
        points = _parse_int(points_text, f"points for {item_id!r}", line)
        if not 0 <= points <= item.max_points:
            raise IngestError(
                f"points {points} for {item_id!r} outside 0..{item.max_points}", line
            )
        per_student = grades.setdefault(StudentId(student_id), {})
        if item_id in per_student:
            raise IngestError(
                f"duplicate gradebook row for student {student_id!r}, item {item_id!r}",
                line,
            )
        per_student[item_id] = points
    return grades


_GENDER_ALIASES = {
    "male": Gender.MALE,
    "m": Gender.MALE,
    "female": Gender.FEMALE,
    "f": Gender.FEMALE,
}
_TRUTHY = {"1", "true", "yes"}
_FALSY = {"0", "false", "no"}


def parse_demographics(
    source: str | bytes | Path | IO[str],
) -> dict[StudentId, Demographics]:
    """Parse the enrolment roster; one row per student, duplicates rejected."""
    roster: dict[StudentId, Demographics] = {}
    for line, (student_id, gender_text, disability_text, group) in _rows(
        source, DEMOGRAPHICS_HEADER, "demographics"
    ):
        if not student_id:
            raise IngestError("empty student_id", line)
        sid = StudentId(student_id)
        if sid in roster:
            raise IngestError(f"duplicate roster row for student {student_id!r}", line)
        gender = _GENDER_ALIASES.get(gender_text.lower(), Gender.OTHER)
        if not gender_text:
            raise IngestError("empty gender", line)
        dis_text = disability_text.lower()
        if dis_text in _TRUTHY:
            disability = True
        elif dis_text in _FALSY:
            disability = False
        else:
            raise IngestError(f"bad disability flag {disability_text!r}", line)
        if not group:
            raise IngestError("empty schedule_group", line)
        roster[sid] = Demographics(gender=gender, disability=disability, schedule_group=group)
    return roster


def parse_history(source: str | bytes | Path | IO[str]) -> tuple[HistoricalStats, ...]:
    """Parse past-year grade distributions, one row per (year, grade).

    Years keep file order of first appearance; missing grades count 0.
    """
    per_year: dict[str, dict[int, int]] = {}
    seen: set[tuple[str, int]] = set()
    for line, (year, grade_text, count_text) in _rows(source, HISTORY_HEADER, "history"):
        if not year:
            raise IngestError("empty year", line)
        grade = _parse_int(grade_text, "grade", line)
        if grade not in (5, 6, 7, 8, 9, 10):
            raise IngestError(f"grade {grade} outside the 5..10 scale", line)
        count = _parse_int(count_text, "count", line)
        if count < 0:
            raise IngestError("negative count", line)
        if (year, grade) in seen:
            raise IngestError(f"duplicate history row for {year}, grade {grade}", line)
        seen.add((year, grade))
        counts = per_year.setdefault(year, {g: 0 for g in (5, 6, 7, 8, 9, 10)})
        counts[grade] = count
    return tuple(HistoricalStats(year=y, grade_counts=c) for y, c in per_year.items())


def parse_survey(source: str | bytes | Path | IO[str], course_year: str) -> EffortSurvey:
    """Parse the weekly-effort histogram. ``bucket_high_hours`` empty means
    open-ended and is only allowed on the last row."""
    buckets: list[EffortBucket] = []
    for line, (low_text, high_text, count_text) in _rows(source, SURVEY_HEADER, "survey"):
        low = _parse_int(low_text, "bucket_low_hours", line)
        if low < 0:
            raise IngestError("negative bucket_low_hours", line)
        high = None if high_text == "" else _parse_int(high_text, "bucket_high_hours", line)
        count = _parse_int(count_text, "count", line)
        buckets.append(EffortBucket(low_hours=low, high_hours=high, count=count))
    if not buckets:
        raise IngestError("survey: no buckets")
    return EffortSurvey(course_year=course_year, buckets=tuple(buckets))


def assemble_cohort(
    roster: Mapping[StudentId, Demographics],
    events: list[VleEvent],
    grades: Mapping[StudentId, Mapping[str, int]],
    survey: EffortSurvey,
    history: tuple[HistoricalStats, ...],
    scheme: GradeScheme,
    window: DateWindow,
    year: str,
) -> Cohort:
    """Join the parsed sources into one referentially consistent cohort.

    Every event and gradebook student must appear in the roster. Final
    outcomes are computed for students whose gradebook covers every scheme
    item; partial gradebooks (a running semester) yield no outcome.
    """
    if not roster:
        raise IngestError("empty roster")
    orphan_ids = sorted(
        {e.student.value for e in events if e.student not in roster}
        | {s.value for s in grades if s not in roster}
    )
    if orphan_ids:
        raise IngestError(
            "students missing from the roster: " + ", ".join(orphan_ids[:10])
        )

    all_items = set(scheme.item_ids)
    outcomes: dict[StudentId, FinalOutcome] = {}
    for student, earned in grades.items():
        if set(earned) == all_items:
            outcomes[student] = evaluate_outcome(dict(earned), scheme)

    return Cohort(
        year=year,
        window=window,
        scheme=scheme,
        roster=dict(roster),
        events=tuple(sorted(events, key=lambda e: e.timestamp)),
        grades={s: dict(g) for s, g in grades.items()},
        outcomes=outcomes,
        survey=survey,
        history=history,
    )


# ---------------------------------------------------------------------------
# Serializers (exact inverses of the parsers, used by the synthesizer)
# ---------------------------------------------------------------------------


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _csv_text(header: list[str], rows: list[list[str]]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return out.getvalue()


def write_events_csv(events: tuple[VleEvent, ...] | list[VleEvent]) -> str:
    rows = [
        [e.student.value, format_timestamp(e.timestamp), e.component.value, e.action]
        for e in events
    ]
    return _csv_text(EVENTS_HEADER, rows)


def write_gradebook_csv(grades: Mapping[StudentId, Mapping[str, int]]) -> str:
    rows = [
        [s.value, item_id, str(points)]
        for s in sorted(grades, key=lambda s: s.value)
        for item_id, points in sorted(grades[s].items())
    ]
    return _csv_text(GRADEBOOK_HEADER, rows)


def write_demographics_csv(roster: Mapping[StudentId, Demographics]) -> str:
    rows = [
        [
            s.value,
            roster[s].gender.value,
            "1" if roster[s].disability else "0",
            roster[s].schedule_group,
        ]
        for s in sorted(roster, key=lambda s: s.value)
    ]
    return _csv_text(DEMOGRAPHICS_HEADER, rows)


def write_history_csv(history: tuple[HistoricalStats, ...]) -> str:
    rows = [
        [h.year, str(grade), str(h.grade_counts.get(grade, 0))]
        for h in history
        for grade in (5, 6, 7, 8, 9, 10)
    ]
    return _csv_text(HISTORY_HEADER, rows)


def write_survey_csv(survey: EffortSurvey) -> str:
    rows = [
        [
            str(b.low_hours),
            "" if b.high_hours is None else str(b.high_hours),
            str(b.count),
        ]
        for b in survey.buckets
    ]
    return _csv_text(SURVEY_HEADER, rows)


COHORT_FILES = {
    "events": "events.csv",
    "gradebook": "gradebook.csv",
    "demographics": "demographics.csv",
    "history": "history.csv",
    "survey": "survey.csv",
}
MANIFEST_FILE = "cohort.yaml"


def load_cohort(
    directory: str | Path,
    scheme: GradeScheme,
    window: DateWindow | None = None,
    year: str | None = None,
) -> Cohort:
    """Load a cohort from a directory of the five standard CSV files.

    ``window`` and ``year`` default to the directory's ``cohort.yaml``
    manifest when present.
    """
    directory = Path(directory)
    if window is None or year is None:
        manifest_path = directory / MANIFEST_FILE
        if not manifest_path.exists():
            raise IngestError(
                f"{MANIFEST_FILE} not found in {directory}; pass window and year explicitly"
            )
        manifest = yaml.safe_load(manifest_path.read_text(encoding="utf-8"))
        if window is None:
            window = DateWindow(
                start=datetime.strptime(manifest["semester_start"], "%Y-%m-%d").date(),
                end=datetime.strptime(manifest["semester_end"], "%Y-%m-%d").date(),
            )
        if year is None:
            year = str(manifest["year"])

    roster = parse_demographics(directory / COHORT_FILES["demographics"])
    events = parse_events(directory / COHORT_FILES["events"], window)
    grades = parse_gradebook(directory / COHORT_FILES["gradebook"], scheme)
    history = parse_history(directory / COHORT_FILES["history"])
    survey = parse_survey(directory / COHORT_FILES["survey"], year)
    return assemble_cohort(roster, events, grades, survey, history, scheme, window, year)


def export_cohort(cohort: Cohort, directory: str | Path) -> list[Path]:
    """Write the five standard CSV files plus the ``cohort.yaml`` manifest.

    ``load_cohort`` on the result reconstructs an equal cohort (events in
    timestamp order; maps compare order-insensitively).
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    contents = {
        COHORT_FILES["events"]: write_events_csv(cohort.events),
        COHORT_FILES["gradebook"]: write_gradebook_csv(cohort.grades),
        COHORT_FILES["demographics"]: write_demographics_csv(cohort.roster),
        COHORT_FILES["history"]: write_history_csv(cohort.history),
        COHORT_FILES["survey"]: write_survey_csv(cohort.survey),
    }
    for name, text in contents.items():
        path = directory / name
        path.write_text(text, encoding="utf-8")
        written.append(path)

    manifest = {
        "year": cohort.year,
        "semester_start": cohort.window.start.isoformat(),
        "semester_end": cohort.window.end.isoformat(),
    }
    manifest_path = directory / MANIFEST_FILE
    manifest_path.write_text(yaml.safe_dump(manifest, sort_keys=True), encoding="utf-8")
    written.append(manifest_path)
    return written
