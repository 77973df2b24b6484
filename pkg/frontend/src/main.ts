/**
 * Entry point: connect to a session's TCP control endpoint and serve
 * the panel.
 *
 *   node dist/main.js --control-host 127.0.0.1 --control-port 9100 --http-port 8080
 */

import { parseArgs } from "node:util";
import { AddressInfo } from "node:net";

import { ControlClient } from "./client.js";
import { ConsoleController } from "./console.js";
import { startHttp } from "./server.js";

async function main(): Promise<void> {
  const { values } = parseArgs({
    options: {
      "control-host": { type: "string", default: "127.0.0.1" },
      "control-port": { type: "string" },
      "http-host": { type: "string", default: "127.0.0.1" },
      "http-port": { type: "string", default: "8080" },
    },
  });
  if (!values["control-port"]) {
    console.error("usage: main --control-port PORT [--control-host H] [--http-port P]");
    process.exit(2);
  }

  const client = new ControlClient({
    host: values["control-host"]!,
    port: Number(values["control-port"]),
  });
  const controller = new ConsoleController(client);
  client.on("error", (err) => console.error(`control: ${err.message}`));
  client.on("disconnect", () => console.error("control connection lost; read-only until reconnect"));

  await client.connect();
  const server = await startHttp(controller, Number(values["http-port"]), values["http-host"]);
  const addr = server.address() as AddressInfo;
  console.log(`console on http://${addr.address}:${addr.port}`);

  const shutdown = () => {
    client.close();
    server.close(() => process.exit(0));
  };
  process.on("SIGINT", shutdown);
  process.on("SIGTERM", shutdown);
}

main().catch((err) => {
  console.error(err);
  process.exit(1);
});
