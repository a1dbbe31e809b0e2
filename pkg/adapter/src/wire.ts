/**
 * Wire types and message validation for the stdio estimator protocol.
 *
 * One JSON object per line in both directions; NaN and infinities are
 * forbidden, so every outgoing number is checked before serialization and
 * every incoming document is checked after parsing.
 */

export const PROTOCOL_VERSION = "1";

export interface EstimateRequest {
  protocol_version: string;
  request_id: string;
  task: "ate" | "risk_difference" | "predict_outcomes";
  columns: Record<string, (number | string)[]>;
  roles: Record<string, string>;
  weights?: number[];
}

export interface EstimateResponse {
  request_id: string;
  status: "ok" | "error";
  estimate?: number;
  predictions?: number[];
  message?: string;
}

export class WireError extends Error {}

function assertFiniteDeep(value: unknown, path: string): void {
  if (typeof value === "number") {
    if (!Number.isFinite(value)) {
      throw new WireError(`non-finite number at ${path}`);
    }
  } else if (Array.isArray(value)) {
    value.forEach((v, i) => assertFiniteDeep(v, `${path}[${i}]`));
  } else if (value !== null && typeof value === "object") {
    for (const [k, v] of Object.entries(value)) {
      assertFiniteDeep(v, `${path}.${k}`);
    }
  }
}

/** Parse one incoming line; throws WireError on malformed or non-finite content. */
export function parseMessage(line: string): Record<string, unknown> {
  let doc: unknown;
  try {
    doc = JSON.parse(line);
  } catch (err) {
    throw new WireError(`malformed message: ${(err as Error).message}`);
  }
  if (doc === null || typeof doc !== "object" || Array.isArray(doc)) {
    throw new WireError("message must be a JSON object");
  }
  assertFiniteDeep(doc, "$");
  return doc as Record<string, unknown>;
}

/** Serialize one outgoing message, refusing non-finite numbers. */
export function serializeMessage(doc: EstimateResponse | Record<string, unknown>): string {
  assertFiniteDeep(doc, "$");
  return JSON.stringify(doc);
}

export function validateRequest(doc: Record<string, unknown>): EstimateRequest {
  const task = doc["task"];
  if (task !== "ate" && task !== "risk_difference" && task !== "predict_outcomes") {
    throw new WireError(`unknown task ${JSON.stringify(task)}`);
  }
  const columns = doc["columns"];
  const roles = doc["roles"];
  if (columns === null || typeof columns !== "object" || Array.isArray(columns)) {
    throw new WireError("columns must be a map of arrays");
  }
  if (roles === null || typeof roles !== "object" || Array.isArray(roles)) {
    throw new WireError("roles must be a map of strings");
  }
  const lengths = new Set<number>();
  for (const [name, values] of Object.entries(columns as Record<string, unknown>)) {
    if (!Array.isArray(values)) {
      throw new WireError(`column ${name} is not an array`);
    }
    lengths.add(values.length);
  }
  const weights = doc["weights"];
  if (weights !== undefined) {
    if (!Array.isArray(weights)) {
      throw new WireError("weights must be an array");
    }
    lengths.add(weights.length);
  }
  if (lengths.size > 1) {
    throw new WireError("request arrays must share one length");
  }
  return doc as unknown as EstimateRequest;
}
