/**
 * Panel controller: binds the control client to the session view.
 *
 * Every panel interaction maps 1:1 onto a control command. Parameter
 * edits are pre-validated against the currently acknowledged geometry;
 * edits that fail never leave the client. Accepted commands go out, and
 * only the reply (or a later metric event) moves the view. Rejections
 * from the session land in the view verbatim.
 */

import { EventEmitter } from "node:events";

import { ControlClient } from "./client.js";
import { MetricEvent, Reply, SessionStateSchema, STEMS } from "./protocol.js";
import {
  Geometry,
  parseRatio,
  validateFade,
  validateLookahead,
  validatePacketSize,
  validateRatio,
} from "./validate.js";
import {
  SessionView,
  applyConnect,
  applyDisconnect,
  applyMetric,
  applyRejection,
  applyStateReply,
  initialView,
} from "./view.js";

export class ConsoleController extends EventEmitter {
  view: SessionView = initialView();

  constructor(private readonly client: ControlClient) {
    super();
    client.on("connect", () => {
      this.update(applyConnect(this.view));
      // the only state fetch: everything after this arrives by push or reply
      this.refresh().catch(() => undefined);
    });
    client.on("disconnect", () => this.update(applyDisconnect(this.view)));
    client.on("metric", (ev: MetricEvent) => this.update(applyMetric(this.view, ev)));
  }

  private update(next: SessionView): void {
    this.view = next;
    this.emit("view", next);
  }

  private geometry(): Geometry | null {
    const p = this.view.params;
    if (!p) return null;
    return {
      T_seconds: p.T_seconds,
      sample_rate: p.sample_rate,
      latent_frames: p.latent_frames,
      lookahead_w: p.lookahead_w,
      fade_samples: p.fade_samples,
    };
  }

  async refresh(): Promise<void> {
    const reply = await this.client.request("get_state");
    this.ingest(reply);
  }

  /** Fold a reply into the view: rejection reason or refreshed state. */
  private ingest(reply: Reply): Reply {
    if (!reply.ok) {
      this.update(applyRejection(this.view, reply.error ?? "rejected"));
      return reply;
    }
    const state = SessionStateSchema.safeParse(reply.result);
    if (state.success) {
      this.update(applyStateReply(this.view, state.data));
    }
    return reply;
  }

  private async send(cmd: string, fields: Record<string, unknown> = {}): Promise<Reply> {
    const reply = this.ingest(await this.client.request(cmd, fields));
    if (reply.ok && cmd !== "get_state") {
      // acknowledged mutation: re-read so widgets show session truth
      await this.refresh();
    }
    return reply;
  }

  /** Inline rejection result for an edit that never reached the session. */
  private rejectLocal(reason: string): Reply {
    this.update(applyRejection(this.view, reason));
    return { ok: false, error: reason };
  }

  async setRatio(text: string): Promise<Reply> {
    const geo = this.geometry();
    if (!geo) return this.rejectLocal("no session state yet");
    const check = validateRatio(text, geo);
    if (!check.ok) return this.rejectLocal(check.reason);
    const r = parseRatio(text)!;
    return this.send("set_params", { params: { step_ratio: `${r.num}/${r.den}` } });
  }

  async setLookahead(w: number): Promise<Reply> {
    const geo = this.geometry();
    if (!geo) return this.rejectLocal("no session state yet");
    const ratio = parseRatio(this.view.params!.step_ratio)!;
    const check = validateLookahead(w, geo, ratio);
    if (!check.ok) return this.rejectLocal(check.reason);
    return this.send("set_params", { params: { lookahead_w: w } });
  }

  async setFade(fade: number): Promise<Reply> {
    const geo = this.geometry();
    if (!geo) return this.rejectLocal("no session state yet");
    const ratio = parseRatio(this.view.params!.step_ratio)!;
    const check = validateFade(fade, geo, ratio);
    if (!check.ok) return this.rejectLocal(check.reason);
    return this.send("set_params", { params: { fade_samples: fade } });
  }

  async setPacketSize(size: number): Promise<Reply> {
    const check = validatePacketSize(size);
    if (!check.ok) return this.rejectLocal(check.reason);
    return this.send("set_params", { params: { packet_size: size } });
  }

  async selectInstrument(stem: string): Promise<Reply> {
    if (!(STEMS as readonly string[]).includes(stem)) {
      return this.rejectLocal(`unknown stem ${JSON.stringify(stem)}`);
    }
    return this.send("select_instrument", { stem });
  }

  play(): Promise<Reply> {
    return this.send("play");
  }

  stop(): Promise<Reply> {
    return this.send("stop");
  }

  next(): Promise<Reply> {
    return this.send("next");
  }

  clean(): Promise<Reply> {
    return this.send("clean");
  }

  write(path: string): Promise<Reply> {
    return this.send("write", { path });
  }
}
