// Payload shapes of the /api/v1 JSON contract. Field names mirror the wire
// format exactly; nothing here is recomputed client-side except the
// local-accuracy recheck in integrity.ts.

export type Verdict = "pass" | "at_risk";
export type AttributionKind = "pass_probability" | "grade_points";
export type SentenceDirection = "supports_pass" | "increases_risk";

export interface PhiEntry {
  feature: string;
  value: number;
}

export interface Attribution {
  kind: AttributionKind;
  base_value: number;
  prediction: number;
  phi: PhiEntry[];
}

export interface ExplanationSentence {
  feature: string;
  direction: SentenceDirection;
  text: string;
}

export interface PredictionPayload {
  student_id: string;
  checkpoint: number;
  model_version: number;
  verdict: Verdict;
  risk_probability: number;
  /** null whenever verdict is "at_risk" */
  predicted_points: number | null;
  predicted_grade: number | null;
  attribution: Attribution;
  sentences: ExplanationSentence[];
}

export interface GradeItemPayload {
  item_id: string;
  kind: string;
  max_points: number;
  /** null for items only graded after the semester (no checkpoint sees them) */
  release_checkpoint: number | null;
  earned: number;
}

export interface GradesPayload {
  student_id: string;
  items: GradeItemPayload[];
  earned_total: number;
  max_total: number;
}

export interface DateWindowPayload {
  start: string;
  end: string;
}

export interface BehaviorPayload {
  student_id: string;
  checkpoint: number;
  window: DateWindowPayload;
  total_clicks: number;
  active_days: number;
  inactive_days: number;
  clicks_per_week: number[];
  longest_active_streak: number;
  longest_inactive_streak: number;
}

export interface PercentilePayload {
  student_id: string;
  checkpoint: number;
  percentile: number;
}

export interface HistoryYearPayload {
  year: string;
  grade_counts: Record<string, number>;
  total: number;
  mean_grade: number;
  passability: number;
}

export interface HistoryPayload {
  years: HistoryYearPayload[];
}

export interface TrendsPayload {
  window: DateWindowPayload;
  weeks: number;
  passed_count: number;
  failed_count: number;
  passed_mean_weekly_clicks: number[];
  failed_mean_weekly_clicks: number[];
}

export interface EffortBucketPayload {
  low_hours: number;
  /** null marks the open-ended top bucket */
  high_hours: number | null;
  count: number;
}

export interface EffortPayload {
  course_year: string;
  respondents: number;
  buckets: EffortBucketPayload[];
}

export interface SchemeItemPayload {
  id: string;
  kind: string;
  max_points: number;
  release_checkpoint: number | null;
}

export interface SchemePayload {
  items: SchemeItemPayload[];
  pass_threshold_points: number;
  formative_min_points: number;
}

export interface HealthzPayload {
  status: string;
  model_version: number;
}

export interface ErrorEnvelope {
  code: string;
  message: string;
  detail: unknown;
}

export interface HelpLink {
  label: string;
  href: string;
}
