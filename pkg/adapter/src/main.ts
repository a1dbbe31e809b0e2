/**
 * Reference estimator adapter: newline-delimited JSON over stdin/stdout.
 *
 * The first line is the host greeting; the adapter replies with its own
 * version line and then answers one request per line until EOF. It never
 * crashes on malformed input and never emits NaN: every failure becomes a
 * structured error response.
 *
 * Usage: node dist/main.js --estimator naive|iptw
 */

import * as readline from "node:readline";
import { parseArgs } from "node:util";

import {
  designFromColumns,
  EstimatorError,
  iptwEstimate,
  naiveEstimate,
  predictOutcomes,
} from "./estimators";
import {
  EstimateResponse,
  parseMessage,
  PROTOCOL_VERSION,
  serializeMessage,
  validateRequest,
  WireError,
} from "./wire";

export type EstimatorId = "naive" | "iptw";

export function handleRequestLine(line: string, estimator: EstimatorId): string {
  let requestId = "";
  try {
    const doc = parseMessage(line);
    requestId = typeof doc["request_id"] === "string" ? (doc["request_id"] as string) : "";
    const req = validateRequest(doc);
    const weights = req.weights;

    if (req.task === "predict_outcomes") {
      const design = designFromColumns(req.columns, req.roles);
      const predictions = predictOutcomes(design, weights);
      return serializeMessage({ request_id: requestId, status: "ok", predictions });
    }

    const design = designFromColumns(req.columns, req.roles);
    let estimate: number;
    if (estimator === "naive") {
      estimate = naiveEstimate(design.t, design.y, weights);
    } else {
      if (weights !== undefined) {
        throw new EstimatorError("iptw does not honor unit weights");
      }
      estimate = iptwEstimate(design);
    }
    const response: EstimateResponse = { request_id: requestId, status: "ok", estimate };
    return serializeMessage(response);
  } catch (err) {
    const message = err instanceof Error ? err.message : String(err);
    return serializeMessage({ request_id: requestId, status: "error", message });
  }
}

export function main(): void {
  const { values } = parseArgs({
    options: { estimator: { type: "string", default: "naive" } },
  });
  const estimator = values.estimator === "iptw" ? "iptw" : "naive";

  const rl = readline.createInterface({ input: process.stdin, terminal: false });
  let greeted = false;
  rl.on("line", (line) => {
    if (!line.trim()) return;
    if (!greeted) {
      greeted = true; // host greeting consumed; answer with our version
      process.stdout.write(
        serializeMessage({ protocol_version: PROTOCOL_VERSION }) + "\n");
      return;
    }
    process.stdout.write(handleRequestLine(line, estimator) + "\n");
  });
}

if (require.main === module) {
  main();
}

export { WireError };
