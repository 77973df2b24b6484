/**
 * TCP control client: one connection, newline-delimited JSON.
 *
 * Requests get monotonically increasing ids and resolve when the
 * id-matched reply arrives; metric events pushed in between (including
 * the backlog replayed on connect) are delivered through the "metric"
 * listener in arrival order. On disconnect every pending request is
 * rejected and reconnect attempts back off exponentially; nothing else
 * is polled.
 */

import { EventEmitter } from "node:events";
import * as net from "node:net";

import { MetricEvent, Reply, parseInbound } from "./protocol.js";

export interface ControlClientEvents {
  metric: (ev: MetricEvent) => void;
  connect: () => void;
  disconnect: () => void;
  error: (err: Error) => void;
}

export interface ControlClientOptions {
  host: string;
  port: number;
  requestTimeoutMs?: number;
  reconnect?: boolean;
  backoffMs?: number;
  backoffMaxMs?: number;
}

interface Pending {
  resolve: (reply: Reply) => void;
  reject: (err: Error) => void;
  timer: NodeJS.Timeout;
}

export class ControlClient extends EventEmitter {
  private readonly opts: Required<ControlClientOptions>;
  private sock: net.Socket | null = null;
  private buf = "";
  private nextId = 0;
  private pending = new Map<number, Pending>();
  private closed = false;
  private backoff: number;
  private reconnectTimer: NodeJS.Timeout | null = null;
  connected = false;

  constructor(opts: ControlClientOptions) {
    super();
    this.opts = {
      requestTimeoutMs: 10_000,
      reconnect: true,
      backoffMs: 250,
      backoffMaxMs: 8_000,
      ...opts,
    };
    this.backoff = this.opts.backoffMs;
  }

  connect(): Promise<void> {
    return new Promise((resolve, reject) => {
      const sock = net.createConnection({
        host: this.opts.host,
        port: this.opts.port,
      });
      sock.setEncoding("utf8");
      const onFirstError = (err: Error) => reject(err);
      sock.once("error", onFirstError);
      sock.once("connect", () => {
        sock.removeListener("error", onFirstError);
        this.attach(sock);
        resolve();
      });
    });
  }

  private attach(sock: net.Socket): void {
    this.sock = sock;
    this.buf = "";
    this.connected = true;
    this.backoff = this.opts.backoffMs;
    sock.on("data", (chunk: string) => this.onData(chunk));
    sock.on("error", (err: Error) => this.emit("error", err));
    sock.on("close", () => this.onClose());
    this.emit("connect");
  }

  private onData(chunk: string): void {
    this.buf += chunk;
    let nl;
    while ((nl = this.buf.indexOf("\n")) >= 0) {
      const line = this.buf.slice(0, nl);
      this.buf = this.buf.slice(nl + 1);
      if (!line.trim()) continue;
      let msg;
      try {
        msg = parseInbound(line);
      } catch (err) {
        this.emit("error", new Error(`unparseable control message: ${err}`));
        continue;
      }
      if ("event" in msg) {
        this.emit("metric", msg.data);
        continue;
      }
      const id = msg.id;
      if (typeof id === "number" && this.pending.has(id)) {
        const p = this.pending.get(id)!;
        this.pending.delete(id);
        clearTimeout(p.timer);
        p.resolve(msg);
      }
      // replies without a known id (e.g. malformed-JSON reports) are dropped
    }
  }

  private onClose(): void {
    const wasConnected = this.connected;
    this.connected = false;
    this.sock = null;
    for (const [, p] of this.pending) {
      clearTimeout(p.timer);
      p.reject(new Error("connection closed"));
    }
    this.pending.clear();
    if (wasConnected) this.emit("disconnect");
    if (!this.closed && this.opts.reconnect) this.scheduleReconnect();
  }

  private scheduleReconnect(): void {
    if (this.reconnectTimer) return;
    const delay = this.backoff;
    this.backoff = Math.min(this.backoff * 2, this.opts.backoffMaxMs);
    this.reconnectTimer = setTimeout(() => {
      this.reconnectTimer = null;
      if (this.closed) return;
      this.connect().catch(() => this.scheduleReconnect());
    }, delay);
    this.reconnectTimer.unref?.();
  }

  /** Send one command; resolves with the id-matched reply (ok or error). */
  request(cmd: string, fields: Record<string, unknown> = {}): Promise<Reply> {
    if (!this.sock || !this.connected) {
      return Promise.reject(new Error("not connected"));
    }
    const id = this.nextId++;
    const line = JSON.stringify({ id, cmd, ...fields }) + "\n";
    return new Promise<Reply>((resolve, reject) => {
      const timer = setTimeout(() => {
        this.pending.delete(id);
        reject(new Error(`request ${cmd} timed out`));
      }, this.opts.requestTimeoutMs);
      timer.unref?.();
      this.pending.set(id, { resolve, reject, timer });
      this.sock!.write(line, (err) => {
        if (err) {
          this.pending.delete(id);
          clearTimeout(timer);
          reject(err);
        }
      });
    });
  }

  close(): void {
    this.closed = true;
    if (this.reconnectTimer) {
      clearTimeout(this.reconnectTimer);
      this.reconnectTimer = null;
    }
    this.sock?.destroy();
    this.sock = null;
    this.connected = false;
  }
}
