/**
 * End-to-end tests against a real session process.
 *
 * A session is spawned via its CLI with the TCP control endpoint enabled
 * and held (no auto-play); the console drives it exactly the way the
 * panel would. Skipped when python3 or the session package is absent.
 */

import { ChildProcess, spawn, spawnSync } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import * as path from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ControlClient } from "../src/client.js";
import { ConsoleController } from "../src/console.js";

const sessionAvailable =
  spawnSync("python3", ["-c", "import rtaccomp"], { timeout: 30_000 }).status === 0;

const MAKE_INPUT = `
import sys
import numpy as np
from rtaccomp.audiofile import write_stems
from rtaccomp.window import WindowConfig

cfg = WindowConfig()
n = 8 * cfg.step_samples
rng = np.random.default_rng(0)
write_stems(sys.argv[1], cfg.sample_rate, {
    "bass": np.zeros(n, dtype=np.float32),
    "drums": (rng.standard_normal(n) * 0.2).astype(np.float32),
    "guitar": (rng.standard_normal(n) * 0.1).astype(np.float32),
    "piano": np.zeros(n, dtype=np.float32),
})
`;

function waitFor(
  check: () => boolean,
  label: string,
  timeoutMs = 30_000,
): Promise<void> {
  return new Promise((resolve, reject) => {
    const started = Date.now();
    const tick = () => {
      if (check()) return resolve();
      if (Date.now() - started > timeoutMs) {
        return reject(new Error(`timed out waiting for ${label}`));
      }
      setTimeout(tick, 20);
    };
    tick();
  });
}

function spawnSession(inputWav: string): Promise<{ child: ChildProcess; port: number }> {
  const child = spawn(
    "python3",
    [
      "-m",
      "rtaccomp.cli",
      "perform",
      "--input",
      inputWav,
      "--generator",
      "echo:0",
      "--time-scale",
      "0.05",
      "--control-port",
      "0",
      "--hold",
    ],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  return new Promise((resolve, reject) => {
    let out = "";
    const timer = setTimeout(
      () => reject(new Error(`session never announced its port; output: ${out}`)),
      30_000,
    );
    child.stdout!.setEncoding("utf8");
    child.stdout!.on("data", (chunk: string) => {
      out += chunk;
      const m = /control endpoint on tcp:\/\/127\.0\.0\.1:(\d+)/.exec(out);
      if (m) {
        clearTimeout(timer);
        resolve({ child, port: Number(m[1]) });
      }
    });
    child.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`session exited early (code ${code}): ${out}`));
    });
  });
}

describe.skipIf(!sessionAvailable)("console against a live session", () => {
  let workDir: string;
  let child: ChildProcess;
  let client: ControlClient;
  let controller: ConsoleController;

  beforeAll(async () => {
    workDir = mkdtempSync(path.join(tmpdir(), "console-it-"));
    const inputWav = path.join(workDir, "input.wav");
    const gen = spawnSync("python3", ["-c", MAKE_INPUT, inputWav], { timeout: 60_000 });
    expect(gen.status, String(gen.stderr)).toBe(0);

    const spawned = await spawnSession(inputWav);
    child = spawned.child;
    client = new ControlClient({ host: "127.0.0.1", port: spawned.port });
    controller = new ConsoleController(client);
    await client.connect();
    await waitFor(() => controller.view.params !== null, "initial session state");
  });

  afterAll(() => {
    client?.close();
    child?.kill("SIGTERM");
    rmSync(workDir, { recursive: true, force: true });
  });

  it("renders the session's own parameters and budget", () => {
    const v = controller.view;
    expect(v.connected).toBe(true);
    expect(v.params?.step_ratio).toBe("1/4");
    expect(v.params?.lookahead_w).toBe(1);
    expect(v.budgetMs).toBe(1500);
    expect(v.predictedStem).toBe("bass");
  });

  it("ratio change lands at the next boundary and moves the budget 1500 -> 750", async () => {
    // two cycles on the original ratio
    await controller.next();
    await controller.next();
    await waitFor(() => controller.view.series.length >= 2, "first two metric events");
    for (const p of controller.view.series.slice(0, 2)) {
      expect(p.budgetMs).toBe(1500);
    }

    // stage the edit mid-session: acknowledged but not yet applied
    const reply = await controller.setRatio("1/8");
    expect(reply.ok).toBe(true);
    expect(controller.view.params?.step_ratio).toBe("1/4");
    expect(controller.view.budgetMs).toBe(1500);

    // the very next boundary runs on the new ratio
    await controller.next();
    await waitFor(() => controller.view.series.length >= 3, "post-change metric event");
    const series = controller.view.series;
    expect(series[2].stepId).toBe(2);
    expect(series[2].budgetMs).toBe(750);
    expect(controller.view.budgetMs).toBe(750);
    expect(controller.view.params?.step_ratio).toBe("1/8");
  });

  it("instrument switch is reflected within one cycle", async () => {
    const reply = await controller.selectInstrument("drums");
    expect(reply.ok).toBe(true);
    const before = controller.view.series.length;
    await controller.next();
    await waitFor(
      () => controller.view.series.length > before,
      "metric event after instrument switch",
    );
    const last = controller.view.series[controller.view.series.length - 1];
    expect(last.stem).toBe("drums");
    expect(controller.view.predictedStem).toBe("drums");
  });

  it("pre-validation rejects a zero-context ratio without a round trip", async () => {
    const before = controller.view.series.length;
    const reply = await controller.setRatio("1/2");
    expect(reply.ok).toBe(false);
    expect(reply.error).toMatch(/no observed context/);
    expect(controller.view.lastError).toMatch(/no observed context/);
    expect(controller.view.series.length).toBe(before); // nothing was sent
  });

  it("session rejections come back verbatim", async () => {
    const reply = await client.request("set_params", {
      params: { step_ratio: "5/3" },
    });
    expect(reply.ok).toBe(false);
    expect(reply.error).toContain("step_ratio must be in (0, 1]");
  });

  it("losing the session flips the view to read-only", async () => {
    const frozen = controller.view.params;
    child.kill("SIGKILL");
    await waitFor(() => !controller.view.connected, "disconnect notification");
    expect(controller.view.connected).toBe(false);
    expect(controller.view.params).toEqual(frozen); // last state stays visible
  });
});
