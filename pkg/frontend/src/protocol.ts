/**
 * Wire schema of the TCP control endpoint: newline-delimited JSON.
 *
 * Requests carry {id, cmd, ...}; the endpoint answers with an id-matched
 * reply ({id, ok: true, result} or {id, ok: false, error}) and pushes
 * per-cycle metric events as {event: "metric", data}. Everything the
 * console renders is decoded here first, so a malformed or unexpected
 * message is rejected at the boundary instead of corrupting view state.
 */

import { z } from "zod";

export const StageTimingsSchema = z.object({
  client_to_server: z.number(),
  encode: z.number(),
  sampling: z.number(),
  decode: z.number(),
  server_to_client: z.number(),
});
export type StageTimings = z.infer<typeof StageTimingsSchema>;

export const MetricEventSchema = z.object({
  step_id: z.number().int(),
  stages: StageTimingsSchema,
  underrun: z.boolean(),
  rt_budget_ms: z.number(),
  total_ms: z.number(),
  timestamp: z.number(),
  dropped: z.boolean(),
  stem: z.string(),
});
export type MetricEvent = z.infer<typeof MetricEventSchema>;

export const SessionParamsSchema = z.object({
  T_seconds: z.number(),
  sample_rate: z.number().int(),
  step_ratio: z.string(),
  lookahead_w: z.number().int(),
  fade_samples: z.number().int(),
  packet_size: z.number().int(),
  latent_frames: z.number().int(),
  latent_bins: z.number().int(),
});
export type SessionParams = z.infer<typeof SessionParamsSchema>;

export const SessionStateSchema = z.object({
  params: SessionParamsSchema,
  predicted_stem: z.string(),
  playing: z.boolean(),
  finished: z.boolean(),
  playback_cursor: z.number().int(),
  underruns: z.number().int(),
  rt_budget_ms: z.number(),
  waveforms: z.object({
    mixture: z.array(z.number()),
    predicted: z.array(z.number()),
  }),
});
export type SessionState = z.infer<typeof SessionStateSchema>;

export const ReplySchema = z.object({
  id: z.number().int().nullable().optional(),
  ok: z.boolean(),
  result: z.unknown().optional(),
  error: z.string().optional(),
});
export type Reply = z.infer<typeof ReplySchema>;

export const PushSchema = z.object({
  event: z.literal("metric"),
  data: MetricEventSchema,
});

/** One inbound line, either an id-matched reply or a pushed event. */
export const InboundSchema = z.union([PushSchema, ReplySchema]);
export type Inbound = z.infer<typeof InboundSchema>;

export const STEMS = ["bass", "drums", "guitar", "piano"] as const;
export type Stem = (typeof STEMS)[number];

/** Commands the panel can emit; each widget interaction maps to one. */
export type ControlCommand =
  | { cmd: "get_state" }
  | { cmd: "play" }
  | { cmd: "stop" }
  | { cmd: "next" }
  | { cmd: "clean" }
  | { cmd: "verbose"; on: boolean }
  | { cmd: "write"; path: string }
  | { cmd: "select_instrument"; stem: string }
  | {
      cmd: "set_params";
      params: Partial<{
        step_ratio: string;
        lookahead_w: number;
        fade_samples: number;
        packet_size: number;
      }>;
    };

export function parseInbound(line: string): Inbound {
  return InboundSchema.parse(JSON.parse(line));
}
