import { describe, expect, it } from "vitest";

import { handleRequestLine } from "../src/main";
import { parseMessage, serializeMessage, validateRequest, WireError } from "../src/wire";

function request(overrides: Record<string, unknown> = {}): string {
  return JSON.stringify({
    protocol_version: "1",
    request_id: "r1",
    task: "ate",
    columns: { t: [1, 1, 0, 0], y: [3, 3, 1, 1], c: [0.5, -0.5, 0.25, -0.25] },
    roles: { t: "treatment", y: "outcome", c: "covariate" },
    ...overrides,
  });
}

describe("parseMessage", () => {
  it("rejects malformed json", () => {
    expect(() => parseMessage("{nope")).toThrow(WireError);
  });

  it("rejects non-finite numbers", () => {
    expect(() => parseMessage('{"estimate": 1e999}')).toThrow(WireError);
  });

  it("rejects non-object payloads", () => {
    expect(() => parseMessage("[1,2]")).toThrow(WireError);
  });
});

describe("serializeMessage", () => {
  it("refuses NaN", () => {
    expect(() => serializeMessage({ request_id: "x", status: "ok", estimate: NaN }))
      .toThrow(WireError);
  });
});

describe("validateRequest", () => {
  it("rejects unknown tasks", () => {
    expect(() => validateRequest(JSON.parse(request({ task: "bogus" }))))
      .toThrow(WireError);
  });

  it("rejects ragged arrays", () => {
    const doc = JSON.parse(request({ columns: { t: [1, 0], y: [1] } }));
    expect(() => validateRequest(doc)).toThrow(WireError);
  });
});

describe("handleRequestLine", () => {
  it("answers the naive fixture with 2", () => {
    const resp = JSON.parse(handleRequestLine(request(), "naive"));
    expect(resp.status).toBe("ok");
    expect(resp.request_id).toBe("r1");
    expect(resp.estimate).toBeCloseTo(2, 12);
  });

  it("returns per-row predictions", () => {
    const resp = JSON.parse(handleRequestLine(request({ task: "predict_outcomes" }), "naive"));
    expect(resp.status).toBe("ok");
    expect(resp.predictions).toHaveLength(4);
    resp.predictions.forEach((p: number) => expect(Number.isFinite(p)).toBe(true));
  });

  it("turns degenerate input into a structured error", () => {
    const line = request({
      columns: { t: [1, 1], y: [3, 1], c: [0.5, -0.5] },
    });
    const resp = JSON.parse(handleRequestLine(line, "naive"));
    expect(resp.status).toBe("error");
    expect(resp.message).toMatch(/arm/);
  });

  it("never throws on malformed lines", () => {
    const resp = JSON.parse(handleRequestLine("{broken", "naive"));
    expect(resp.status).toBe("error");
  });

  it("rejects weights for iptw", () => {
    const resp = JSON.parse(handleRequestLine(request({ weights: [1, 1, 1, 1] }), "iptw"));
    expect(resp.status).toBe("error");
  });

  it("honors weights for naive", () => {
    const resp = JSON.parse(handleRequestLine(request({ weights: [1, 1, 1, 1] }), "naive"));
    expect(resp.status).toBe("ok");
    expect(resp.estimate).toBeCloseTo(2, 12);
  });
});
