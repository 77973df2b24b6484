/**
 * HTTP face of the console: serves the static panel and bridges it to
 * the controller. The browser receives view snapshots over a
 * server-sent-event stream (pushed on every change, no polling) and
 * posts panel interactions, each of which maps to exactly one control
 * command.
 */

import * as http from "node:http";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

import express, { Request, Response } from "express";

import { ConsoleController } from "./console.js";
import { Reply } from "./protocol.js";

const PUBLIC_DIR = path.join(path.dirname(fileURLToPath(import.meta.url)), "..", "public");

export function buildApp(controller: ConsoleController): express.Express {
  const app = express();
  app.use(express.json());
  app.use(express.static(PUBLIC_DIR));

  app.get("/api/view", (_req: Request, res: Response) => {
    res.json(controller.view);
  });

  app.get("/api/events", (req: Request, res: Response) => {
    res.writeHead(200, {
      "Content-Type": "text/event-stream",
      "Cache-Control": "no-cache",
      Connection: "keep-alive",
    });
    const push = () => res.write(`data: ${JSON.stringify(controller.view)}\n\n`);
    push();
    controller.on("view", push);
    req.on("close", () => controller.off("view", push));
  });

  const act = (fn: (body: Record<string, unknown>) => Promise<Reply>) =>
    async (req: Request, res: Response) => {
      try {
        res.json(await fn(req.body ?? {}));
      } catch (err) {
        res.status(502).json({ ok: false, error: String(err) });
      }
    };

  app.post("/api/ratio", act((b) => controller.setRatio(String(b.value ?? ""))));
  app.post("/api/lookahead", act((b) => controller.setLookahead(Number(b.value))));
  app.post("/api/fade", act((b) => controller.setFade(Number(b.value))));
  app.post("/api/packet-size", act((b) => controller.setPacketSize(Number(b.value))));
  app.post("/api/instrument", act((b) => controller.selectInstrument(String(b.stem ?? ""))));
  app.post("/api/play", act(() => controller.play()));
  app.post("/api/stop", act(() => controller.stop()));
  app.post("/api/next", act(() => controller.next()));
  app.post("/api/clean", act(() => controller.clean()));
  app.post("/api/write", act((b) => controller.write(String(b.path ?? ""))));

  return app;
}

export function startHttp(
  controller: ConsoleController,
  port: number,
  host = "127.0.0.1",
): Promise<http.Server> {
  const app = buildApp(controller);
  return new Promise((resolve) => {
    const server = app.listen(port, host, () => resolve(server));
  });
}
