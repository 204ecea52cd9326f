// HTML string renderers for every dashboard panel plus the page assembly.
// Renderers are pure functions of the view state; the only client-side
// computation beyond formatting is the attribution consistency recheck.

import { columnChart, escapeXml, lineChart, pieChart, signedBarChart } from "./charts.js";
import { attributionIsConsistent } from "./integrity.js";
import type { Checkpoint, Resource, ViewState } from "./state.js";
import { CHECKPOINTS } from "./state.js";
import type {
  Attribution,
  BehaviorPayload,
  EffortPayload,
  GradesPayload,
  HistoryPayload,
  PercentilePayload,
  PredictionPayload,
  SchemePayload,
  TrendsPayload,
} from "./types.js";

export const escapeHtml = escapeXml;

const ATTRIBUTION_BARS = 8;

export type RiskBand = "low" | "elevated" | "high";

export function riskBand(riskProbability: number): RiskBand {
  if (riskProbability < 0.5) {
    return "low";
  }
  return riskProbability < 0.75 ? "elevated" : "high";
}

function formatNumber(value: number, digits = 1): string {
  return value.toFixed(digits).replace(/\.0+$/, "");
}

function formatPercent(fraction: number): string {
  return `${Math.round(fraction * 100)}%`;
}

function panel(name: string, title: string, body: string, extraClass = ""): string {
  return (
    `<section class="panel${extraClass ? ` ${extraClass}` : ""}" data-panel="${name}">` +
    `<h2>${escapeHtml(title)}</h2>${body}</section>`
  );
}

function errorBody(code: string, message: string): string {
  const friendly =
    code === "model_not_available"
      ? "This checkpoint is not yet available. Check back after the next monthly update."
      : message;
  return `<p class="panel-error" data-error-code="${escapeHtml(code)}">${escapeHtml(friendly)}</p>`;
}

/** Shared loading/error/ready envelope so a failed fetch never hides a panel. */
function panelFor<T>(
  name: string,
  title: string,
  resource: Resource<T>,
  render: (data: T) => string,
): string {
  if (resource.status === "loading") {
    return panel(name, title, '<p class="loading">loading&hellip;</p>');
  }
  if (resource.status === "error") {
    return panel(name, title, errorBody(resource.code, resource.message), "panel-failed");
  }
  return panel(name, title, render(resource.data));
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

function attributionChart(attribution: Attribution): string {
  const top = [...attribution.phi]
    .sort((a, b) => Math.abs(b.value) - Math.abs(a.value) || a.feature.localeCompare(b.feature))
    .slice(0, ATTRIBUTION_BARS);
  const unit = attribution.kind === "pass_probability" ? "pass probability" : "grade points";
  const scale = attribution.kind === "pass_probability" ? 100 : 1;
  const bars = top.map((entry) => ({
    label: entry.feature,
    value: entry.value * scale,
  }));
  const chart = signedBarChart(bars, `What is moving your ${unit}`);
  const base = attribution.base_value * scale;
  const caption =
    attribution.kind === "pass_probability"
      ? `course-average starting point: ${formatNumber(base)} percentage points`
      : `course-average starting point: ${formatNumber(base)} points`;
  return `<figure class="attribution">${chart}<figcaption class="base-value">${escapeHtml(caption)}</figcaption></figure>`;
}

function sentenceList(prediction: PredictionPayload): string {
  const items = prediction.sentences
    .map(
      (sentence) =>
        `<li class="sentence sentence-${sentence.direction}">${escapeHtml(sentence.text)}</li>`,
    )
    .join("");
  return `<ul class="sentences">${items}</ul>`;
}

function integrityBadge(attribution: Attribution): string {
  if (attributionIsConsistent(attribution)) {
    return "";
  }
  return (
    '<p class="integrity-warning" data-testid="integrity-warning">' +
    "The explanation below does not add up to the shown prediction. " +
    "Treat it with caution and reload the page.</p>"
  );
}

function renderPassPrediction(prediction: PredictionPayload): string {
  const grade = prediction.predicted_grade ?? NaN;
  const points = prediction.predicted_points ?? NaN;
  return (
    `<p class="headline" data-testid="predicted-grade">On track to pass with grade ` +
    `<strong class="grade">${grade}</strong></p>` +
    `<p class="subline">projected ${formatNumber(points)} of 100 points</p>` +
    integrityBadge(prediction.attribution) +
    sentenceList(prediction) +
    attributionChart(prediction.attribution)
  );
}

function renderAtRiskPrediction(prediction: PredictionPayload): string {
  const band = riskBand(prediction.risk_probability);
  return (
    `<p class="headline at-risk-notice" data-testid="at-risk-notice">` +
    "Right now you are at risk of not passing this course.</p>" +
    `<p class="subline risk-band" data-risk-band="${band}">risk level: ${band}</p>` +
    integrityBadge(prediction.attribution) +
    sentenceList(prediction) +
    attributionChart(prediction.attribution)
  );
}

export function renderPredictionPanel(resource: Resource<PredictionPayload>): string {
  return panelFor("prediction", "Your outlook", resource, (prediction) =>
    prediction.verdict === "at_risk"
      ? renderAtRiskPrediction(prediction)
      : renderPassPrediction(prediction),
  );
}

// ---------------------------------------------------------------------------
// Grades and scheme
// ---------------------------------------------------------------------------

export function renderGradesPanel(resource: Resource<GradesPayload>, checkpoint: Checkpoint): string {
  return panelFor("grades", "Your points", resource, (grades) => {
    const rows = grades.items
      .map((item) => {
        const released = item.release_checkpoint !== null && item.release_checkpoint <= checkpoint;
        const earned = released ? `${item.earned} / ${item.max_points}` : "not yet graded";
        return (
          `<tr class="${released ? "released" : "pending"}">` +
          `<td>${escapeHtml(item.item_id)}</td><td>${escapeHtml(item.kind)}</td>` +
          `<td>${earned}</td></tr>`
        );
      })
      .join("");
    const percent = Math.round((grades.earned_total / grades.max_total) * 100);
    return (
      `<div class="progress" role="progressbar" aria-valuenow="${grades.earned_total}" ` +
      `aria-valuemin="0" aria-valuemax="${grades.max_total}">` +
      `<div class="progress-fill" style="width: ${percent}%"></div></div>` +
      `<p class="progress-label">${grades.earned_total} / ${grades.max_total} points so far</p>` +
      `<table class="grades"><thead><tr><th>item</th><th>kind</th><th>points</th></tr></thead>` +
      `<tbody>${rows}</tbody></table>`
    );
  });
}

export function renderCompositionPanel(resource: Resource<SchemePayload>): string {
  return panelFor("composition", "How the grade is composed", resource, (scheme) => {
    const byKind = new Map<string, number>();
    for (const item of scheme.items) {
      byKind.set(item.kind, (byKind.get(item.kind) ?? 0) + item.max_points);
    }
    const slices = [...byKind.entries()].map(([kind, points]) => ({
      label: `${kind} (${points})`,
      value: points,
    }));
    const legend = slices
      .map((s, i) => `<li class="legend-item legend-${i}">${escapeHtml(s.label)}</li>`)
      .join("");
    return (
      pieChart(slices, "Points per assessment kind") +
      `<ul class="legend">${legend}</ul>` +
      `<p class="pass-rule">pass: at least ${scheme.pass_threshold_points} total points and ` +
      `${scheme.formative_min_points} assignment + quiz points</p>`
    );
  });
}

// ---------------------------------------------------------------------------
// Activity
// ---------------------------------------------------------------------------

function behaviorStats(behavior: BehaviorPayload): string {
  return (
    `<dl class="behavior-stats">` +
    `<dt>clicks so far</dt><dd data-stat="total-clicks">${behavior.total_clicks}</dd>` +
    `<dt>active days</dt><dd data-stat="active-days">${behavior.active_days}</dd>` +
    `<dt>inactive days</dt><dd data-stat="inactive-days">${behavior.inactive_days}</dd>` +
    `<dt>longest active streak</dt><dd data-stat="active-streak">${behavior.longest_active_streak}</dd>` +
    `<dt>longest inactive streak</dt><dd data-stat="inactive-streak">${behavior.longest_inactive_streak}</dd>` +
    `</dl>`
  );
}

function comparisonChart(behavior: BehaviorPayload, trends: Resource<TrendsPayload>): string {
  if (trends.status === "loading") {
    return '<p class="loading">loading&hellip;</p>';
  }
  if (trends.status === "error") {
    return errorBody(trends.code, trends.message);
  }
  const chart = lineChart(
    [
      {
        label: `passed students, mean (${trends.data.passed_count})`,
        points: trends.data.passed_mean_weekly_clicks,
        cssClass: "series-passed",
      },
      {
        label: `failed students, mean (${trends.data.failed_count})`,
        points: trends.data.failed_mean_weekly_clicks,
        cssClass: "series-failed",
      },
      { label: "you", points: behavior.clicks_per_week, cssClass: "series-student" },
    ],
    "Your weekly clicks against last year's passed and failed students",
  );
  return (
    `<figure class="comparison">${chart}` +
    `<figcaption>weekly clicks: you vs last year's passed and failed students</figcaption></figure>`
  );
}

export function renderBehaviorPanel(
  behavior: Resource<BehaviorPayload>,
  trends: Resource<TrendsPayload>,
): string {
  return panelFor(
    "behavior",
    "Your activity",
    behavior,
    (data) => comparisonChart(data, trends) + behaviorStats(data),
  );
}

export function renderPercentilePanel(resource: Resource<PercentilePayload>): string {
  return panelFor("percentile", "Compared to the course", resource, (payload) => {
    const percent = formatPercent(payload.percentile);
    return (
      `<p class="percentile" data-testid="percentile">You have been more active than ` +
      `<strong>${percent}</strong> of the course so far.</p>`
    );
  });
}

// ---------------------------------------------------------------------------
// Course context
// ---------------------------------------------------------------------------

export function renderHistoryPanel(resource: Resource<HistoryPayload>): string {
  return panelFor("history", "Previous years", resource, (history) => {
    if (history.years.length === 0) {
      return '<p class="empty" data-state="empty">no data from previous years</p>';
    }
    return history.years
      .map((year) => {
        const columns = Object.entries(year.grade_counts)
          .sort(([a], [b]) => Number(a) - Number(b))
          .map(([grade, count]) => ({ label: grade, value: count }));
        return (
          `<figure class="history-year">` +
          columnChart(columns, `Final grades in ${year.year}`) +
          `<figcaption>${escapeHtml(year.year)}: ${formatPercent(year.passability)} passed ` +
          `(${year.total} students, mean grade ${formatNumber(year.mean_grade)})</figcaption></figure>`
        );
      })
      .join("");
  });
}

export function renderEffortPanel(resource: Resource<EffortPayload>): string {
  return panelFor("effort", "Weekly effort of past students", resource, (effort) => {
    const columns = effort.buckets.map((bucket) => ({
      label: bucket.high_hours === null ? `${bucket.low_hours}+ h` : `${bucket.low_hours}-${bucket.high_hours} h`,
      value: bucket.count,
    }));
    return (
      columnChart(columns, "Self-reported weekly hours") +
      `<p class="effort-caption">${effort.respondents} students surveyed in ${escapeHtml(effort.course_year)}</p>`
    );
  });
}

export function renderHelpPanel(state: ViewState): string {
  const items = state.helpLinks
    .map((link) => `<li><a href="${escapeHtml(link.href)}">${escapeHtml(link.label)}</a></li>`)
    .join("");
  return panel("help", "Where to get support", `<ul class="help-links">${items}</ul>`);
}

// ---------------------------------------------------------------------------
// Page assembly
// ---------------------------------------------------------------------------

function checkpointSelector(selected: Checkpoint): string {
  const buttons = CHECKPOINTS.map(
    (index) =>
      `<button type="button" class="checkpoint-button${index === selected ? " active" : ""}" ` +
      `data-checkpoint="${index}" aria-pressed="${index === selected}">Checkpoint ${index}</button>`,
  ).join("");
  return `<nav class="checkpoints" aria-label="checkpoint selection">${buttons}</nav>`;
}

export type Flow = "pass" | "at-risk" | "pending";

export function flowFor(prediction: Resource<PredictionPayload>): Flow {
  if (prediction.status !== "ready") {
    return "pending";
  }
  return prediction.data.verdict === "at_risk" ? "at-risk" : "pass";
}

export function renderDashboard(state: ViewState): string {
  const flow = flowFor(state.prediction);
  const shared = [
    renderGradesPanel(state.grades, state.checkpoint),
    renderCompositionPanel(state.scheme),
    renderPercentilePanel(state.percentile),
    renderHistoryPanel(state.history),
    renderEffortPanel(state.effort),
  ];
  const panels =
    flow === "at-risk"
      ? [
          renderPredictionPanel(state.prediction),
          renderBehaviorPanel(state.behavior, state.trends),
          renderHelpPanel(state),
          ...shared,
        ]
      : [renderPredictionPanel(state.prediction), ...shared];
  return (
    `<main class="dashboard" data-flow="${flow}" data-student="${escapeHtml(state.studentId)}" ` +
    `data-checkpoint="${state.checkpoint}">` +
    `<header class="masthead"><h1>Course outlook for ${escapeHtml(state.studentId)}</h1>` +
    checkpointSelector(state.checkpoint) +
    `</header>${panels.join("")}</main>`
  );
}
