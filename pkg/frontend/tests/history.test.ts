import { describe, expect, it } from "vitest";

import { History } from "../src/history.js";
import { diffHeatmap, applyWindow } from "../src/pixels.js";

describe("History", () => {
  it("caps at 50 entries, dropping the oldest", () => {
    const history = new History();
    for (let i = 0; i < 60; i += 1) {
      history.add({ caseId: "c", prompt: null, promptArea: 0, pngBase64: `p${i}` });
    }
    expect(history.length).toBe(50);
    expect(history.list()[0].pngBase64).toBe("p10");
    expect(history.list()[49].index).toBe(59);
  });

  it("entries are immutable once recorded", () => {
    const history = new History();
    const entry = history.add({ caseId: "c", prompt: "lesion", promptArea: -1, pngBase64: "x" });
    expect(() => {
      (entry as { pngBase64: string }).pngBase64 = "tampered";
    }).toThrow();
    expect(history.get(entry.index)?.pngBase64).toBe("x");
  });
});

describe("pixels", () => {
  it("diff heatmap is zero for identical buffers", () => {
    const a = new Uint8Array([1, 2, 3, 4]);
    const heat = diffHeatmap(a, a);
    for (let i = 0; i < 4; i += 1) {
      expect(heat[i * 4]).toBe(0);
      expect(heat[i * 4 + 3]).toBe(255);
    }
  });

  it("diff heatmap scales to the peak difference", () => {
    const heat = diffHeatmap(new Uint8Array([0, 0]), new Uint8Array([10, 5]));
    expect(heat[0]).toBe(255);
    expect(heat[4]).toBe(128);
  });

  it("rejects mismatched buffers", () => {
    expect(() => diffHeatmap(new Uint8Array(2), new Uint8Array(3))).toThrow();
  });

  it("windowing clamps and rescales", () => {
    expect(applyWindow(0, 0, 255)).toBe(0);
    expect(applyWindow(255, 0, 255)).toBe(255);
    expect(applyWindow(64, 64, 128)).toBe(0);
    expect(applyWindow(128, 64, 128)).toBe(255);
    expect(applyWindow(50, 100, 200)).toBe(0);
  });
});
