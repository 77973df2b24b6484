import { describe, expect, it } from "vitest";

import { MetricEvent, SessionState } from "../src/protocol.js";
import {
  applyConnect,
  applyDisconnect,
  applyMetric,
  applyRejection,
  applyStateReply,
  budgetChanges,
  initialView,
  MAX_SERIES,
  stageTotal,
} from "../src/view.js";

function metric(overrides: Partial<MetricEvent> = {}): MetricEvent {
  return {
    step_id: 0,
    stages: {
      client_to_server: 17,
      encode: 40,
      sampling: 1175,
      decode: 141,
      server_to_client: 25,
    },
    underrun: false,
    rt_budget_ms: 1500,
    total_ms: 1400,
    timestamp: 0,
    dropped: false,
    stem: "bass",
    ...overrides,
  };
}

function state(overrides: Partial<SessionState> = {}): SessionState {
  return {
    params: {
      T_seconds: 6.0,
      sample_rate: 44100,
      step_ratio: "1/4",
      lookahead_w: 1,
      fade_samples: 882,
      packet_size: 4410,
      latent_frames: 64,
      latent_bins: 64,
    },
    predicted_stem: "bass",
    playing: false,
    finished: false,
    playback_cursor: 0,
    underruns: 0,
    rt_budget_ms: 1500,
    waveforms: { mixture: [0, 0.5], predicted: [0] },
    ...overrides,
  };
}

describe("connection state", () => {
  it("starts disconnected with nothing rendered", () => {
    const v = initialView();
    expect(v.connected).toBe(false);
    expect(v.params).toBeNull();
    expect(v.budgetMs).toBeNull();
    expect(v.series).toEqual([]);
  });

  it("disconnect freezes acknowledged state behind the read-only flag", () => {
    let v = applyStateReply(applyConnect(initialView()), state());
    v = applyDisconnect(v);
    expect(v.connected).toBe(false);
    expect(v.params?.step_ratio).toBe("1/4"); // last known values remain visible
    expect(v.budgetMs).toBe(1500);
  });
});

describe("state replies", () => {
  it("adopts every field from the session verbatim", () => {
    const v = applyStateReply(
      initialView(),
      state({ playing: true, playback_cursor: 132300, underruns: 2 }),
    );
    expect(v.playing).toBe(true);
    expect(v.playbackCursor).toBe(132300);
    expect(v.underruns).toBe(2);
    expect(v.predictedStem).toBe("bass");
    expect(v.waveforms.mixture).toEqual([0, 0.5]);
  });

  it("the budget line is the session's number, not a local computation", () => {
    const v = applyStateReply(initialView(), state({ rt_budget_ms: 750 }));
    expect(v.budgetMs).toBe(750);
  });
});

describe("metric events", () => {
  it("chart totals equal the sum of the event's stages", () => {
    const ev = metric();
    const v = applyMetric(initialView(), ev);
    expect(v.series).toHaveLength(1);
    expect(v.series[0].totalStagesMs).toBe(stageTotal(ev.stages));
    expect(v.series[0].totalStagesMs).toBe(17 + 40 + 1175 + 141 + 25);
  });

  it("tracks underrun and dropped steps as markers", () => {
    let v = initialView();
    v = applyMetric(v, metric({ step_id: 0 }));
    v = applyMetric(v, metric({ step_id: 1, underrun: true }));
    v = applyMetric(v, metric({ step_id: 2, dropped: true, underrun: true }));
    expect(v.underrunSteps).toEqual([1, 2]);
  });

  it("budget line follows the latest event and changes are detectable", () => {
    let v = initialView();
    v = applyMetric(v, metric({ step_id: 0, rt_budget_ms: 1500 }));
    v = applyMetric(v, metric({ step_id: 1, rt_budget_ms: 1500 }));
    v = applyMetric(v, metric({ step_id: 2, rt_budget_ms: 750 }));
    expect(v.budgetMs).toBe(750);
    expect(budgetChanges(v)).toEqual([
      { stepId: 0, budgetMs: 1500 },
      { stepId: 2, budgetMs: 750 },
    ]);
  });

  it("an instrument switch shows up from the event stream", () => {
    let v = applyMetric(initialView(), metric({ step_id: 0, stem: "bass" }));
    v = applyMetric(v, metric({ step_id: 1, stem: "drums" }));
    expect(v.predictedStem).toBe("drums");
  });

  it("the series is bounded", () => {
    let v = initialView();
    for (let i = 0; i < MAX_SERIES + 40; i++) v = applyMetric(v, metric({ step_id: i }));
    expect(v.series).toHaveLength(MAX_SERIES);
    expect(v.series[0].stepId).toBe(40);
  });
});

describe("rejections", () => {
  it("surfaces the server reason verbatim and leaves state untouched", () => {
    const before = applyStateReply(initialView(), state());
    const after = applyRejection(before, "step_ratio must be in (0, 1], got 5/3");
    expect(after.lastError).toBe("step_ratio must be in (0, 1], got 5/3");
    expect(after.params).toEqual(before.params);
    expect(after.budgetMs).toBe(before.budgetMs);
  });
});
