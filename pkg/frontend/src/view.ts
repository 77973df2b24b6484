/**
 * Session view state and its reducer.
 *
 * The view is a pure fold over what the control endpoint actually said:
 * get_state replies, command acknowledgements, and pushed metric events.
 * Nothing here simulates the session — the budget line, stage series,
 * underrun markers, and waveform strips all come straight from those
 * messages, so a widget can never show state the session has not
 * acknowledged.
 */

import { MetricEvent, SessionParams, SessionState, StageTimings } from "./protocol.js";

export const MAX_SERIES = 512;

export interface MetricPoint {
  stepId: number;
  stages: StageTimings;
  totalStagesMs: number;
  budgetMs: number;
  underrun: boolean;
  dropped: boolean;
  stem: string;
  timestamp: number;
}

export interface SessionView {
  /** false once the connection drops; the panel becomes read-only. */
  connected: boolean;
  params: SessionParams | null;
  predictedStem: string | null;
  playing: boolean;
  finished: boolean;
  playbackCursor: number;
  underruns: number;
  /** Budget line in ms, exactly as last reported by the session. */
  budgetMs: number | null;
  series: MetricPoint[];
  underrunSteps: number[];
  waveforms: { mixture: number[]; predicted: number[] };
  /** Last rejection reason, verbatim from the server. */
  lastError: string | null;
}

export function stageTotal(stages: StageTimings): number {
  return (
    stages.client_to_server +
    stages.encode +
    stages.sampling +
    stages.decode +
    stages.server_to_client
  );
}

export function initialView(): SessionView {
  return {
    connected: false,
    params: null,
    predictedStem: null,
    playing: false,
    finished: false,
    playbackCursor: 0,
    underruns: 0,
    budgetMs: null,
    series: [],
    underrunSteps: [],
    waveforms: { mixture: [], predicted: [] },
    lastError: null,
  };
}

export function applyConnect(view: SessionView): SessionView {
  return { ...view, connected: true, lastError: null };
}

/** Disconnect freezes the last acknowledged state behind a read-only banner. */
export function applyDisconnect(view: SessionView): SessionView {
  return { ...view, connected: false };
}

export function applyStateReply(view: SessionView, state: SessionState): SessionView {
  return {
    ...view,
    params: state.params,
    predictedStem: state.predicted_stem,
    playing: state.playing,
    finished: state.finished,
    playbackCursor: state.playback_cursor,
    underruns: state.underruns,
    budgetMs: state.rt_budget_ms,
    waveforms: state.waveforms,
  };
}

export function applyMetric(view: SessionView, ev: MetricEvent): SessionView {
  const point: MetricPoint = {
    stepId: ev.step_id,
    stages: ev.stages,
    totalStagesMs: stageTotal(ev.stages),
    budgetMs: ev.rt_budget_ms,
    underrun: ev.underrun,
    dropped: ev.dropped,
    stem: ev.stem,
    timestamp: ev.timestamp,
  };
  const series = [...view.series, point].slice(-MAX_SERIES);
  const underrunSteps =
    ev.underrun || ev.dropped
      ? [...view.underrunSteps, ev.step_id].slice(-MAX_SERIES)
      : view.underrunSteps;
  return {
    ...view,
    series,
    underrunSteps,
    budgetMs: ev.rt_budget_ms,
    predictedStem: ev.stem || view.predictedStem,
  };
}

/** Server rejected a command: keep state untouched, surface the reason. */
export function applyRejection(view: SessionView, reason: string): SessionView {
  return { ...view, lastError: reason };
}

export function clearError(view: SessionView): SessionView {
  return { ...view, lastError: null };
}

/** Steps where the reported budget differs from the previous point. */
export function budgetChanges(view: SessionView): { stepId: number; budgetMs: number }[] {
  const changes: { stepId: number; budgetMs: number }[] = [];
  let prev: number | null = null;
  for (const p of view.series) {
    if (prev === null || p.budgetMs !== prev) {
      changes.push({ stepId: p.stepId, budgetMs: p.budgetMs });
      prev = p.budgetMs;
    }
  }
  return changes;
}
