"""Course grading rules and the domain types shared by every other module.

The reference course scores students on a 0-100 grade-point scale that maps
onto final grades 5 (fail) through 10. Passing requires both at least 50
total grade points and at least 25 points from the formative part of the
course (assignments and quizzes combined).
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, datetime, timezone
from enum import Enum
from typing import Mapping

PASS_THRESHOLD_POINTS = 50
FORMATIVE_MIN_POINTS = 25

FAIL_GRADE = 5
GRADE_SCALE = (5, 6, 7, 8, 9, 10)


class GradingError(ValueError):
    """Raised when grade inputs violate the course grading rules."""


class ItemKind(str, Enum):
    ASSIGNMENT = "assignment"
    QUIZ = "quiz"
    MIDTERM = "midterm"
    ORAL_EXAM = "oral_exam"


#: Item kinds whose points count toward the formative (assignments + quizzes)
#: pass requirement.
FORMATIVE_KINDS = frozenset({ItemKind.ASSIGNMENT, ItemKind.QUIZ})


@dataclass(frozen=True)
class GradeItem:
    """One graded course component.

    ``release_checkpoint`` is the monthly checkpoint (1-4) at which the item's
    grade becomes visible to the prediction models, or ``None`` for items
    graded only at the very end of the course.
    """

    id: str
    kind: ItemKind
    max_points: int
    release_checkpoint: int | None = None

    def __post_init__(self) -> None:
        if self.max_points < 0:
            raise GradingError(f"item {self.id!r}: max_points must be >= 0")
        if self.release_checkpoint is not None and not 1 <= self.release_checkpoint <= 4:
            raise GradingError(
                f"item {self.id!r}: release_checkpoint must be in 1..4 or None"
            )


@dataclass(frozen=True)
class GradeScheme:
    """The grade composition of one course offering.

    Invariant: item maxima sum to exactly 100 grade points.
    """

    items: tuple[GradeItem, ...]
    pass_threshold_points: int = PASS_THRESHOLD_POINTS
    formative_min_points: int = FORMATIVE_MIN_POINTS

    def __post_init__(self) -> None:
        total = sum(item.max_points for item in self.items)
        if total != 100:
            raise GradingError(f"grade item maxima must sum to 100, got {total}")
        ids = [item.id for item in self.items]
        if len(set(ids)) != len(ids):
            raise GradingError("grade item ids must be unique")

    def item(self, item_id: str) -> GradeItem:
        for it in self.items:
            if it.id == item_id:
                return it
        raise KeyError(item_id)

    @property
    def item_ids(self) -> tuple[str, ...]:
        return tuple(item.id for item in self.items)

    def released_items(self, checkpoint_index: int) -> tuple[GradeItem, ...]:
        """Items whose grades are visible at the given checkpoint."""
        return tuple(
            item
            for item in self.items
            if item.release_checkpoint is not None
            and item.release_checkpoint <= checkpoint_index
        )


@dataclass(frozen=True)
class StudentId:
    """Opaque pseudonymous student identifier; carries no personal data."""

    value: str

    def __str__(self) -> str:
        return self.value


class Gender(str, Enum):
    MALE = "male"
    FEMALE = "female"
    OTHER = "other"


@dataclass(frozen=True)
class Demographics:
    gender: Gender
    disability: bool
    schedule_group: str


@dataclass(frozen=True)
class DateWindow:
    """Half-open date range [start, end); all windows in the system use
    this convention so day counts never double-count boundaries."""

    start: date
    end: date

    def __post_init__(self) -> None:
        if self.start >= self.end:
            raise GradingError(f"inverted date window: {self.start} >= {self.end}")

    @property
    def n_days(self) -> int:
        return (self.end - self.start).days

    def contains(self, day: date) -> bool:
        return self.start <= day < self.end

    def contains_ts(self, ts: datetime) -> bool:
        return self.contains(ts.astimezone(timezone.utc).date())


@dataclass(frozen=True)
class FinalOutcome:
    """A student's final course result under the conjunctive pass rule."""

    total_points: int
    formative_points: int
    passed: bool
    final_grade: int

    def __post_init__(self) -> None:
        if not 0 <= self.total_points <= 100:
            raise GradingError("total_points must be in 0..100")
        expected_passed = (
            self.total_points >= PASS_THRESHOLD_POINTS
            and self.formative_points >= FORMATIVE_MIN_POINTS
        )
        if self.passed != expected_passed:
            raise GradingError("passed flag inconsistent with pass rule")
        expected_grade = (
            grade_from_points(self.total_points) if self.passed else FAIL_GRADE
        )
        if self.final_grade != expected_grade:
            raise GradingError("final_grade inconsistent with total points and pass rule")


def grade_from_points(points: int) -> int:
    """Map total grade points (0-100) to the final grade scale 5-10.

    0-49 -> 5, 50-59 -> 6, 60-69 -> 7, 70-79 -> 8, 80-89 -> 9, 90-100 -> 10.
    """
    if not isinstance(points, int) or isinstance(points, bool):
        raise GradingError(f"points must be an integer, got {points!r}")
    if not 0 <= points <= 100:
        raise GradingError(f"points out of range 0..100: {points}")
    if points < 50:
        return 5
    return min(10, 6 + (points - 50) // 10)


def evaluate_outcome(earned: Mapping[str, int], scheme: GradeScheme) -> FinalOutcome:
    """Compute the final outcome from per-item earned points.

    Items absent from ``earned`` count as 0 (no submission). Fractional or
    out-of-bound points are rejected rather than rounded.
    """
    known = {item.id: item for item in scheme.items}
    for item_id, points in earned.items():
        if item_id not in known:
            raise GradingError(f"unknown grade item {item_id!r}")
        if not isinstance(points, int) or isinstance(points, bool):
            raise GradingError(f"item {item_id!r}: points must be an integer, got {points!r}")
        if not 0 <= points <= known[item_id].max_points:
            raise GradingError(
                f"item {item_id!r}: points {points} outside 0..{known[item_id].max_points}"
            )

    total = sum(earned.get(item.id, 0) for item in scheme.items)
    formative = sum(
        earned.get(item.id, 0) for item in scheme.items if item.kind in FORMATIVE_KINDS
    )
    passed = (
        total >= scheme.pass_threshold_points
        and formative >= scheme.formative_min_points
    )
    grade = grade_from_points(total) if passed else FAIL_GRADE
    return FinalOutcome(
        total_points=total, formative_points=formative, passed=passed, final_grade=grade
    )


def reference_scheme() -> GradeScheme:
    """The reference course: 8 assignments (35 pts), 2 quizzes (15 pts),
    2 midterms (15 pts each), 1 oral exam (20 pts).

    The release calendar spreads items over the four checkpoints; it is
    configuration, overridable via the service config file.
    """
    assignments = [
        GradeItem("assignment1", ItemKind.ASSIGNMENT, 4, release_checkpoint=1),
        GradeItem("assignment2", ItemKind.ASSIGNMENT, 4, release_checkpoint=1),
        GradeItem("assignment3", ItemKind.ASSIGNMENT, 4, release_checkpoint=2),
        GradeItem("assignment4", ItemKind.ASSIGNMENT, 4, release_checkpoint=2),
        GradeItem("assignment5", ItemKind.ASSIGNMENT, 4, release_checkpoint=2),
        GradeItem("assignment6", ItemKind.ASSIGNMENT, 5, release_checkpoint=3),
        GradeItem("assignment7", ItemKind.ASSIGNMENT, 5, release_checkpoint=3),
        GradeItem("assignment8", ItemKind.ASSIGNMENT, 5, release_checkpoint=3),
    ]
    quizzes = [
        GradeItem("quiz1", ItemKind.QUIZ, 7, release_checkpoint=1),
        GradeItem("quiz2", ItemKind.QUIZ, 8, release_checkpoint=3),
    ]
    midterms = [
        GradeItem("midterm1", ItemKind.MIDTERM, 15, release_checkpoint=2),
        GradeItem("midterm2", ItemKind.MIDTERM, 15, release_checkpoint=4),
    ]
    oral = [GradeItem("oral_exam", ItemKind.ORAL_EXAM, 20, release_checkpoint=None)]
    return GradeScheme(items=tuple(assignments + quizzes + midterms + oral))
