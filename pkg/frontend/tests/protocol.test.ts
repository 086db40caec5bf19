import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";

import Ajv2020 from "ajv/dist/2020.js";
import { describe, expect, test } from "vitest";

import {
  ProtocolError,
  captureReference,
  encodeFrame,
  panelCommand,
  parseFrame,
  setStandoff,
  simpleCommand,
  startPartialMission,
  startTagSearch,
  startVisualInspection,
  teleopCommand,
  startFullMission,
} from "../src/protocol.js";

const here = dirname(fileURLToPath(import.meta.url));
const DOCS = join(here, "..", "..", "docs");

const schema = JSON.parse(readFileSync(join(DOCS, "protocol.schema.json"), "utf8"));
const ajv = new Ajv2020({ strict: false });
const validate = ajv.compile(schema);

function goldenLines(): string[] {
  return readFileSync(join(DOCS, "golden-frames.ndjson"), "utf8")
    .split("\n")
    .filter((l) => l.trim().length > 0);
}

describe("frame codec", () => {
  test("parses every golden capture and round-trips its content", () => {
    for (const line of goldenLines()) {
      const frame = parseFrame(line);
      // re-encoding may format numbers differently but must carry the
      // same JSON value
      expect(JSON.parse(encodeFrame(frame))).toEqual(JSON.parse(line));
    }
  });

  test("golden captures cover all seven kinds", () => {
    const kinds = new Set(goldenLines().map((l) => parseFrame(l).kind));
    expect(kinds).toEqual(new Set([
      "hello", "state_snapshot", "view_frame", "event", "command", "heartbeat", "error",
    ]));
  });

  test.each([
    ["not json", "{nope"],
    ["array", "[1,2]"],
    ["unknown kind", '{"kind":"levitate","seq":1,"payload":{}}'],
    ["negative seq", '{"kind":"hello","seq":-1,"payload":{}}'],
    ["float seq", '{"kind":"hello","seq":1.5,"payload":{}}'],
    ["payload not object", '{"kind":"hello","seq":1,"payload":3}'],
  ])("rejects %s", (_name, text) => {
    expect(() => parseFrame(text)).toThrow(ProtocolError);
  });

  test("missing payload defaults to empty object", () => {
    expect(parseFrame('{"kind":"heartbeat","seq":2}').payload).toEqual({});
  });

  test("encoding sorts keys like the server does", () => {
    const text = encodeFrame({ kind: "hello", seq: 1, payload: { b: 2, a: 1 } });
    expect(text).toBe('{"kind":"hello","payload":{"a":1,"b":2},"seq":1}');
  });
});

describe("command builders emit schema-valid frames", () => {
  const builders = [
    startFullMission(),
    startPartialMission([{ rack: 0, side: "front" }]),
    startTagSearch("PLT-0042"),
    startVisualInspection({ rack: 1, side: "back", section: 3, tier: 2 }),
    simpleCommand("pause"),
    simpleCommand("resume"),
    simpleCommand("abort"),
    simpleCommand("complete"),
    teleopCommand({ x_c: 0.3, y_c: 0, z_c: -0.1, yaw_input: 0, trigger_held: false, timestamp: 5 }),
    captureReference({ x_c: 0, y_c: 0, z_c: 0, yaw_input: 0, trigger_held: false, timestamp: 4 }),
    panelCommand("left"),
    setStandoff(0.4),
  ];

  test.each(builders.map((b) => [b.action, b] as const))("%s", (_action, payload) => {
    const doc = JSON.parse(encodeFrame({ kind: "command", seq: 1, payload }));
    expect(validate(doc), JSON.stringify(validate.errors)).toBe(true);
  });

  test("standoff fraction is clamped into [0, 1]", () => {
    expect(setStandoff(3).fraction).toBe(1);
    expect(setStandoff(-2).fraction).toBe(0);
  });
});
