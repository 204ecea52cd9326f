"""Synthetic cohort generator with calibrated outcome statistics.

Each student gets a latent ability in [0, 1] that drives both grades and
VLE activity. The population is a mixture: a small disengaged group with
low ability (guaranteed fails) and an engaged group whose mean ability is
solved numerically so the cohort's expected mean final grade hits the
target. ``engagement_signal`` controls how strongly click volume couples
to ability; ``noise_scale`` scales all observation noise, and at 0 the
generator is a pure function of the latent abilities (clicks deterministic,
grades exactly ability * max per item).

All randomness flows from one numpy PCG64 generator seeded with
``params.seed``, so every noise level is reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, time, timedelta, timezone

import numpy as np

from .core import (
    DateWindow,
    Demographics,
    Gender,
    GradeScheme,
    StudentId,
    evaluate_outcome,
)
from .features import AssessmentCalendar, _add_months
from .ingest import (
    COMPONENT_ORDER,
    Cohort,
    Component,
    EffortBucket,
    EffortSurvey,
    HistoricalStats,
    VleEvent,
    assemble_cohort,
)

#: Long-run component shares of VLE clicks, in COMPONENT_ORDER.
COMPONENT_MIX = (0.28, 0.17, 0.12, 0.16, 0.10, 0.07, 0.05, 0.05)
#: Weekly-effort histogram buckets (hours) and their population shares.
SURVEY_BUCKETS = ((0, 2), (2, 4), (4, 6), (6, 8), (8, 10), (10, None))
SURVEY_WEIGHTS = (0.06, 0.20, 0.30, 0.24, 0.13, 0.07)
SURVEY_RESPONSE_RATE = 0.85

_DISENGAGED_ABILITY = (0.08, 0.40)
_PRE_SEMESTER_DAYS = 14
_PRE_DAILY_FACTOR = 0.3
_WEEKEND_WEIGHT = 0.45
_ITEM_NOISE_SD = 0.05


class SynthError(ValueError):
    """Raised for unsatisfiable or invalid generator parameters."""


@dataclass(frozen=True)
class SynthParams:
    """Generator knobs; the defaults reproduce a plausible reference year
    (around 106 students, mean grade near 7.8, about 18 fails)."""

    n_students: int = 106
    seed: int = 42
    engagement_signal: float = 0.7
    target_mean_grade: float = 7.8
    target_fail_count: int = 18
    gender_mix: tuple[float, float, float] = (0.55, 0.40, 0.05)
    disability_rate: float = 0.05
    schedule_groups: tuple[str, ...] = ("morning", "afternoon", "evening")
    noise_scale: float = 1.0
    ability_spread: float = 0.13
    base_daily_clicks: float = 3.5
    history_years: int = 3

    def __post_init__(self) -> None:
        if self.n_students < 10:
            raise SynthError("n_students must be >= 10")
        if not 0.0 <= self.engagement_signal <= 1.0:
            raise SynthError("engagement_signal must be in [0, 1]")
        if self.noise_scale < 0.0:
            raise SynthError("noise_scale must be >= 0")
        if not 0 <= self.target_fail_count <= self.n_students:
            raise SynthError("target_fail_count must be in 0..n_students")
        if abs(sum(self.gender_mix) - 1.0) > 1e-9:
            raise SynthError("gender_mix must sum to 1")
        if not 0.0 <= self.disability_rate <= 1.0:
            raise SynthError("disability_rate must be in [0, 1]")
        if not self.schedule_groups:
            raise SynthError("schedule_groups must be non-empty")
        if self.ability_spread <= 0.0:
            raise SynthError("ability_spread must be > 0")
        if self.base_daily_clicks <= 0.0:
            raise SynthError("base_daily_clicks must be > 0")
        if self.history_years < 0:
            raise SynthError("history_years must be >= 0")


def _norm_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def _expected_grade(mu: float, sigma: float) -> float:
    """E[final grade] of an engaged student with ability ~ N(mu, sigma).

    A student with ability a scores about 100a total points, so the grade
    is 5 plus one point per 10-point band boundary cleared.
    """
    return 5.0 + sum(
        _norm_cdf((mu - t) / sigma) for t in (0.5, 0.6, 0.7, 0.8, 0.9)
    )


def _solve_engaged_mean(params: SynthParams, n_disengaged: int) -> float:
    """Engaged-group mean ability hitting the target cohort mean grade."""
    n_engaged = params.n_students - n_disengaged
    if n_engaged == 0:
        if abs(params.target_mean_grade - 5.0) > 0.5:
            raise SynthError("every student fails, so the mean grade must be 5")
        return _DISENGAGED_ABILITY[1]
    target = (
        params.target_mean_grade * params.n_students - 5.0 * n_disengaged
    ) / n_engaged
    if not 5.0 < target < 10.0:
        raise SynthError(
            f"target mean grade {params.target_mean_grade} unreachable with "
            f"{params.target_fail_count} target fails"
        )
    lo, hi = 0.0, 1.5
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if _expected_grade(mid, params.ability_spread) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _click_factor(ability: np.ndarray, signal: float) -> np.ndarray:
    """Per-student click-volume multiplier, mean about 1.

    At signal 0 everyone shares the same volume; at 1 it ranges over
    [0.25, 2.0] strictly increasing in ability.
    """
    return (1.0 - signal) + signal * (0.25 + 1.75 * ability)


def _apportion(total: int, weights: np.ndarray) -> np.ndarray:
    """Deterministic integer split of ``total`` proportional to weights
    (diff of rounded cumulative sums, a largest-remainder variant)."""
    cum = np.cumsum(weights) / weights.sum()
    marks = np.floor(total * cum + 0.5).astype(np.int64)
    return np.diff(marks, prepend=0)


def _day_weights(window: DateWindow) -> np.ndarray:
    days = [window.start + timedelta(days=i) for i in range(window.n_days)]
    return np.array(
        [(_WEEKEND_WEIGHT if d.weekday() >= 5 else 1.0) for d in days],
        dtype=np.float64,
    )


_ACTIVE_ACTION = {
    Component.ASSIGNMENT: "submit",
    Component.QUIZ: "attempt",
    Component.FORUM: "post",
}


def _component_cycle(length: int = 100) -> tuple[Component, ...]:
    counts = _apportion(length, np.asarray(COMPONENT_MIX))
    cycle: list[Component] = []
    for comp, c in zip(COMPONENT_ORDER, counts):
        cycle.extend([comp] * int(c))
    return tuple(cycle)


_COMPONENT_CYCLE = _component_cycle()


def _student_events(
    student: StudentId,
    total_clicks: int,
    window: DateWindow,
    day_weights: np.ndarray,
    rng: np.random.Generator,
    noisy: bool,
) -> list[VleEvent]:
    if total_clicks <= 0:
        return []
    if noisy:
        lam = total_clicks * day_weights / day_weights.sum()
        per_day = rng.poisson(lam)
    else:
        per_day = _apportion(total_clicks, day_weights)

    events: list[VleEvent] = []
    seq = 0
    for offset, count in enumerate(per_day):
        count = int(count)
        if count == 0:
            continue
        day = window.start + timedelta(days=offset)
        if noisy:
            seconds = np.sort(rng.integers(8 * 3600, 23 * 3600, size=count))
        else:
            seconds = (8 * 3600 + (np.arange(count) + 0.5) * (15 * 3600) / count).astype(
                np.int64
            )
        for sec in seconds:
            if noisy:
                component = COMPONENT_ORDER[
                    rng.choice(len(COMPONENT_ORDER), p=COMPONENT_MIX)
                ]
            else:
                component = _COMPONENT_CYCLE[seq % len(_COMPONENT_CYCLE)]
            active = _ACTIVE_ACTION.get(component)
            if active is not None and (
                rng.random() < 1 / 3 if noisy else seq % 3 == 2
            ):
                action = active
            else:
                action = "view"
            ts = datetime.combine(day, time(0), tzinfo=timezone.utc) + timedelta(
                seconds=int(sec)
            )
            events.append(
                VleEvent(student=student, timestamp=ts, component=component, action=action)
            )
            seq += 1
    return events


def _draw_abilities(params: SynthParams, rng: np.random.Generator) -> np.ndarray:
    n = params.n_students
    n_dis = min(max(params.target_fail_count - 2, 0), n)
    mu = _solve_engaged_mean(params, n_dis)
    abilities = np.empty(n, dtype=np.float64)
    dis = rng.uniform(*_DISENGAGED_ABILITY, size=n_dis)
    eng = np.clip(
        rng.normal(mu, params.ability_spread, size=n - n_dis), 0.02, 0.995
    )
    order = rng.permutation(n)
    abilities[order[:n_dis]] = dis
    abilities[order[n_dis:]] = eng
    return abilities


def _grades_for(
    abilities: np.ndarray,
    scheme: GradeScheme,
    rng: np.random.Generator,
    noise_scale: float,
) -> list[dict[str, int]]:
    out: list[dict[str, int]] = []
    for a in abilities:
        earned: dict[str, int] = {}
        for item in scheme.items:
            frac = a
            if noise_scale > 0.0:
                frac = a + noise_scale * rng.normal(0.0, _ITEM_NOISE_SD)
            frac = min(max(frac, 0.0), 1.0)
            earned[item.id] = int(math.floor(frac * item.max_points + 0.5))
        out.append(earned)
    return out


def _year_label(start_year: int) -> str:
    return f"{start_year}/{(start_year + 1) % 100:02d}"


def generate_cohort(
    params: SynthParams, scheme: GradeScheme, calendar: AssessmentCalendar
) -> Cohort:
    """Generate a full course year: roster, click log, complete gradebook,
    effort survey, and grade history for preceding years.

    The semester spans the first day of the month before the first
    checkpoint cutoff up to the last cutoff (exclusive).
    """
    calendar.validate_scheme(scheme)
    start = _add_months(calendar.checkpoints[0].cutoff, -1)
    window = DateWindow(start=start, end=calendar.checkpoints[-1].cutoff)
    year = _year_label(start.year)
    rng = np.random.Generator(np.random.PCG64(params.seed))
    noisy = params.noise_scale > 0.0
    n = params.n_students

    abilities = _draw_abilities(params, rng)
    width = len(str(n))
    students = [StudentId(f"s{i + 1:0{width}d}") for i in range(n)]

    genders = list(Gender)
    roster: dict[StudentId, Demographics] = {}
    for i, s in enumerate(students):
        gender = genders[rng.choice(len(genders), p=params.gender_mix)]
        disability = bool(rng.random() < params.disability_rate)
        group = params.schedule_groups[int(rng.integers(len(params.schedule_groups)))]
        roster[s] = Demographics(gender=gender, disability=disability, schedule_group=group)

    grades_list = _grades_for(abilities, scheme, rng, params.noise_scale)
    grades = {s: g for s, g in zip(students, grades_list)}

    factors = _click_factor(abilities, params.engagement_signal)
    semester_weights = _day_weights(window)
    pre_window = DateWindow(start - timedelta(days=_PRE_SEMESTER_DAYS), start)
    pre_weights = _day_weights(pre_window)

    events: list[VleEvent] = []
    for i, s in enumerate(students):
        total = int(round(params.base_daily_clicks * window.n_days * factors[i]))
        pre_total = int(
            round(params.base_daily_clicks * _PRE_DAILY_FACTOR * _PRE_SEMESTER_DAYS * factors[i])
        )
        events.extend(_student_events(s, pre_total, pre_window, pre_weights, rng, noisy))
        events.extend(_student_events(s, total, window, semester_weights, rng, noisy))

    respondents = int(round(SURVEY_RESPONSE_RATE * n))
    if noisy:
        counts = rng.multinomial(respondents, SURVEY_WEIGHTS)
    else:
        counts = _apportion(respondents, np.asarray(SURVEY_WEIGHTS))
    survey = EffortSurvey(
        course_year=year,
        buckets=tuple(
            EffortBucket(low_hours=lo, high_hours=hi, count=int(c))
            for (lo, hi), c in zip(SURVEY_BUCKETS, counts)
        ),
    )

    history = tuple(
        _history_year(params, scheme, _year_label(start.year - offset), offset)
        for offset in range(params.history_years, 0, -1)
    )

    return assemble_cohort(
        roster=roster,
        events=events,
        grades=grades,
        survey=survey,
        history=history,
        scheme=scheme,
        window=window,
        year=year,
    )


def _history_year(
    params: SynthParams, scheme: GradeScheme, year: str, offset: int
) -> HistoricalStats:
    """Grade distribution of a past year drawn from the same population
    model with a year-specific child seed."""
    rng = np.random.Generator(np.random.PCG64(params.seed * 1009 + 77 * offset))
    abilities = _draw_abilities(params, rng)
    grade_counts = {g: 0 for g in (5, 6, 7, 8, 9, 10)}
    for earned in _grades_for(abilities, scheme, rng, params.noise_scale):
        grade_counts[evaluate_outcome(earned, scheme).final_grade] += 1
    return HistoricalStats(year=year, grade_counts=grade_counts)
