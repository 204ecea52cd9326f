// View state and the fetch orchestration around it. Panels load
// independently: each arriving resource re-renders just by pushing a new
// immutable state through the onChange callback. No DOM access here, so the
// whole flow is testable in Node against fixture-backed fetches.

import { ApiClient, ApiRequestError } from "./api.js";
import type {
  BehaviorPayload,
  EffortPayload,
  GradesPayload,
  HelpLink,
  HistoryPayload,
  PercentilePayload,
  PredictionPayload,
  SchemePayload,
  TrendsPayload,
} from "./types.js";

export type Resource<T> =
  | { status: "loading" }
  | { status: "ready"; data: T }
  | { status: "error"; code: string; message: string };

export const LOADING = { status: "loading" } as const;

export const CHECKPOINTS = [1, 2, 3, 4] as const;
export type Checkpoint = (typeof CHECKPOINTS)[number];

export function isCheckpoint(value: number): value is Checkpoint {
  return Number.isInteger(value) && value >= 1 && value <= 4;
}

/** Selected checkpoint from a location search string; anything invalid maps to 1. */
export function checkpointFromUrl(search: string): Checkpoint {
  const raw = new URLSearchParams(search).get("checkpoint");
  const parsed = raw === null ? NaN : Number(raw);
  return isCheckpoint(parsed) ? (parsed as Checkpoint) : 1;
}

/** The same search string with the checkpoint replaced; other params survive. */
export function urlWithCheckpoint(search: string, checkpoint: Checkpoint): string {
  const params = new URLSearchParams(search);
  params.set("checkpoint", String(checkpoint));
  return `?${params.toString()}`;
}

export const DEFAULT_HELP_LINKS: HelpLink[] = [
  { label: "Ask a question in the course forum", href: "#forum" },
  { label: "Book a consultation with the teaching staff", href: "#consultation" },
  { label: "Study-skills and time-planning guide", href: "#study-guide" },
];

export interface ViewState {
  studentId: string;
  checkpoint: Checkpoint;
  helpLinks: HelpLink[];
  prediction: Resource<PredictionPayload>;
  grades: Resource<GradesPayload>;
  behavior: Resource<BehaviorPayload>;
  percentile: Resource<PercentilePayload>;
  history: Resource<HistoryPayload>;
  trends: Resource<TrendsPayload>;
  effort: Resource<EffortPayload>;
  scheme: Resource<SchemePayload>;
}

export function initialState(
  studentId: string,
  checkpoint: Checkpoint,
  helpLinks: HelpLink[] = DEFAULT_HELP_LINKS,
): ViewState {
  return {
    studentId,
    checkpoint,
    helpLinks,
    prediction: LOADING,
    grades: LOADING,
    behavior: LOADING,
    percentile: LOADING,
    history: LOADING,
    trends: LOADING,
    effort: LOADING,
    scheme: LOADING,
  };
}

function toErrorResource(error: unknown): Resource<never> {
  if (error instanceof ApiRequestError) {
    return { status: "error", code: error.code, message: error.message };
  }
  return { status: "error", code: "network_error", message: String(error) };
}

interface CheckpointSlice {
  prediction: Resource<PredictionPayload>;
  behavior: Resource<BehaviorPayload>;
  percentile: Resource<PercentilePayload>;
}

type ResourceKey = Exclude<keyof ViewState, "studentId" | "checkpoint" | "helpLinks">;

export class DashboardController {
  state: ViewState;
  private readonly client: ApiClient;
  private readonly onChange: (state: ViewState) => void;
  private readonly checkpointCache = new Map<Checkpoint, CheckpointSlice>();

  constructor(
    client: ApiClient,
    studentId: string,
    checkpoint: Checkpoint,
    onChange: (state: ViewState) => void,
    helpLinks?: HelpLink[],
  ) {
    this.client = client;
    this.onChange = onChange;
    this.state = initialState(studentId, checkpoint, helpLinks);
  }

  /** Fetch everything for the initial render; resolves when all panels settled. */
  async start(): Promise<void> {
    const { studentId } = this.state;
    await Promise.all([
      this.loadInto("grades", this.client.grades(studentId)),
      this.loadInto("history", this.client.history()),
      this.loadInto("trends", this.client.trends()),
      this.loadInto("effort", this.client.effort()),
      this.loadInto("scheme", this.client.scheme()),
      this.loadCheckpointSlice(this.state.checkpoint),
    ]);
  }

  /**
   * Switch checkpoints. Out-of-range indexes are ignored (the UI only offers
   * 1..4); re-selecting an already-fetched checkpoint restores it from cache
   * without touching the network.
   */
  async selectCheckpoint(index: number): Promise<void> {
    if (!isCheckpoint(index)) {
      return;
    }
    const cached = this.checkpointCache.get(index);
    if (cached !== undefined) {
      this.update({ checkpoint: index, ...cached });
      return;
    }
    this.update({
      checkpoint: index,
      prediction: LOADING,
      behavior: LOADING,
      percentile: LOADING,
    });
    await this.loadCheckpointSlice(index);
  }

  private async loadCheckpointSlice(checkpoint: Checkpoint): Promise<void> {
    const { studentId } = this.state;
    await Promise.all([
      this.loadInto("prediction", this.client.prediction(studentId, checkpoint)),
      this.loadInto("behavior", this.client.behavior(studentId, checkpoint)),
      this.loadInto("percentile", this.client.percentile(studentId, checkpoint)),
    ]);
    if (this.state.checkpoint === checkpoint) {
      this.checkpointCache.set(checkpoint, {
        prediction: this.state.prediction,
        behavior: this.state.behavior,
        percentile: this.state.percentile,
      });
    }
  }

  private async loadInto<K extends ResourceKey>(
    key: K,
    request: Promise<ViewState[K] extends Resource<infer T> ? T : never>,
  ): Promise<void> {
    try {
      const data = await request;
      this.update({ [key]: { status: "ready", data } } as Partial<ViewState>);
    } catch (error) {
      this.update({ [key]: toErrorResource(error) } as Partial<ViewState>);
    }
  }

  private update(patch: Partial<ViewState>): void {
    this.state = { ...this.state, ...patch };
    this.onChange(this.state);
  }
}
