import { describe, expect, it } from "vitest";

import { parseManifest } from "../src/manifest.js";
import { fixtureJson } from "./helpers.js";

const GOOD = {
  asset_id: "demo",
  width: 80,
  height: 60,
  modes: ["lambertian", "ptm"],
  exposure: 0.9,
};

describe("parseManifest", () => {
  it("accepts a real exported manifest", async () => {
    const doc = await fixtureJson<unknown>("bundle", "manifest.json");
    const manifest = parseManifest(doc);
    expect(manifest.asset_id).toBe("fixture-full");
    expect(manifest.width).toBe(80);
    expect(manifest.height).toBe(60);
    expect(manifest.modes).toEqual(["lambertian", "ptm"]);
    expect(manifest.exposure).toBeGreaterThan(0);
  });

  it("accepts a single-mode manifest", () => {
    const manifest = parseManifest({ ...GOOD, modes: ["ptm"] });
    expect(manifest.modes).toEqual(["ptm"]);
  });

  it.each([
    ["not an object", [1, 2], "JSON object"],
    ["unknown key", { ...GOOD, gamma: 2.2 }, "unknown keys: gamma"],
    ["missing asset_id", { ...GOOD, asset_id: undefined }, "asset_id"],
    ["empty asset_id", { ...GOOD, asset_id: "" }, "asset_id"],
    ["fractional width", { ...GOOD, width: 2.5 }, "width"],
    ["zero height", { ...GOOD, height: 0 }, "height"],
    ["empty modes", { ...GOOD, modes: [] }, "modes"],
    ["unknown mode", { ...GOOD, modes: ["hsh"] }, "unsupported mode"],
    ["duplicate modes", { ...GOOD, modes: ["ptm", "ptm"] }, "unique"],
    ["negative exposure", { ...GOOD, exposure: -1 }, "exposure"],
    ["string exposure", { ...GOOD, exposure: "1.0" }, "exposure"],
  ])("rejects %s", (_label, doc, message) => {
    expect(() => parseManifest(doc)).toThrow(message);
  });
});
