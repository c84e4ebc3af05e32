/**
 * The client-side prompt bitmap: a binary grid painted with disc strokes.
 * Strokes clip at the borders; an undo stack (depth 20) restores previous
 * states. The bitmap always matches the selected case's resolution.
 */

export type PaintMode = "add" | "erase";

export interface StrokePoint {
  x: number;
  y: number;
}

const UNDO_DEPTH = 20;

export class PromptMask {
  readonly height: number;
  readonly width: number;
  data: Uint8Array;
  private undoStack: Uint8Array[] = [];

  constructor(height: number, width: number) {
    this.height = height;
    this.width = width;
    this.data = new Uint8Array(height * width);
  }

  clone(): Uint8Array {
    return this.data.slice();
  }

  isEmpty(): boolean {
    return !this.data.some((v) => v !== 0);
  }

  area(): number {
    let n = 0;
    for (const v of this.data) n += v;
    return n;
  }

  private pushUndo(): void {
    this.undoStack.push(this.data.slice());
    if (this.undoStack.length > UNDO_DEPTH) {
      this.undoStack.shift();
    }
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (!prev) return false;
    this.data = prev;
    return true;
  }

  clear(): void {
    if (this.isEmpty()) return;
    this.pushUndo();
    this.data = new Uint8Array(this.height * this.width);
  }

  setFrom(data: Uint8Array): void {
    if (data.length !== this.data.length) {
      throw new Error("mask size mismatch");
    }
    this.pushUndo();
    this.data = data.slice();
  }

  /** Rasterize a disc stroke path onto the mask (union for add, difference
   * for erase). Out-of-bounds parts of the stroke are clipped. */
  paint(path: StrokePoint[], radius: number, mode: PaintMode): void {
    if (path.length === 0) return;
    this.pushUndo();
    const value = mode === "add" ? 1 : 0;
    const r2 = radius * radius;
    for (const point of path) {
      const x0 = Math.max(0, Math.ceil(point.x - radius));
      const x1 = Math.min(this.width - 1, Math.floor(point.x + radius));
      const y0 = Math.max(0, Math.ceil(point.y - radius));
      const y1 = Math.min(this.height - 1, Math.floor(point.y + radius));
      for (let y = y0; y <= y1; y += 1) {
        for (let x = x0; x <= x1; x += 1) {
          const dx = x - point.x;
          const dy = y - point.y;
          if (dx * dx + dy * dy <= r2) {
            this.data[y * this.width + x] = value;
          }
        }
      }
    }
  }
}
