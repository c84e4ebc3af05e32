/**
 * What-if history: each synthesis appends an immutable record (the prompt
 * that produced it, the returned image, metrics when present). Capped at 50
 * entries to bound memory; oldest entries fall off first.
 */

import type { RleMask } from "./rle.js";
import type { SynthesisMetrics } from "./api.js";

export interface HistoryEntry {
  readonly index: number;
  readonly caseId: string;
  readonly prompt: RleMask | "lesion" | null;
  readonly promptArea: number;
  readonly pngBase64: string;
  readonly metrics?: SynthesisMetrics;
}

const CAP = 50;

export class History {
  private entries: HistoryEntry[] = [];
  private counter = 0;

  add(entry: Omit<HistoryEntry, "index">): HistoryEntry {
    const record = Object.freeze({ ...entry, index: this.counter });
    this.counter += 1;
    this.entries.push(record);
    if (this.entries.length > CAP) {
      this.entries.shift();
    }
    return record;
  }

  list(): readonly HistoryEntry[] {
    return this.entries;
  }

  get(index: number): HistoryEntry | undefined {
    return this.entries.find((e) => e.index === index);
  }

  get length(): number {
    return this.entries.length;
  }

  clear(): void {
    this.entries = [];
  }
}
