/**
 * The single-page app: case browser, side-by-side contrasts, brush-painted
 * ROI prompt overlay, synthesis trigger, and a what-if history with
 * per-pixel difference views. At most one synthesis request is in flight;
 * the controls freeze while it runs.
 */

import { ApiClient, ApiError, CaseImages, CaseSummary } from "./api.js";
import { History, HistoryEntry } from "./history.js";
import { PromptMask, StrokePoint } from "./mask.js";
import { applyWindow, diffHeatmap } from "./pixels.js";
import { encodeMask } from "./rle.js";

const SCALE = 4; // screen pixels per image pixel

interface CaseView {
  summary: CaseSummary;
  images: CaseImages;
  grays: { x1: Uint8Array; x2: Uint8Array; y: Uint8Array; lesion: Uint8Array };
}

async function pngToGray(pngBase64: string): Promise<{ data: Uint8Array; w: number; h: number }> {
  const img = new Image();
  img.src = `data:image/png;base64,${pngBase64}`;
  await img.decode();
  const canvas = document.createElement("canvas");
  canvas.width = img.naturalWidth;
  canvas.height = img.naturalHeight;
  const ctx = canvas.getContext("2d")!;
  ctx.drawImage(img, 0, 0);
  const rgba = ctx.getImageData(0, 0, canvas.width, canvas.height).data;
  const gray = new Uint8Array(canvas.width * canvas.height);
  for (let i = 0; i < gray.length; i += 1) {
    gray[i] = rgba[i * 4];
  }
  return { data: gray, w: canvas.width, h: canvas.height };
}

export class App {
  private api: ApiClient;
  private history = new History();
  private mask: PromptMask | null = null;
  private current: CaseView | null = null;
  private pending = false;
  private brushRadius = 2.5;
  private erase = false;
  private windowLo = 0;
  private windowHi = 255;
  private lastResult: { gray: Uint8Array; entry: HistoryEntry } | null = null;
  private compareWith: HistoryEntry | null = null;
  private stroke: StrokePoint[] = [];

  private root: HTMLElement;
  private els: Record<string, HTMLElement> = {};

  constructor(root: HTMLElement, baseUrl = "") {
    this.root = root;
    this.api = new ApiClient(baseUrl);
  }

  async start(): Promise<void> {
    this.render();
    try {
      const cases = await this.api.listCases();
      const select = this.els.caseSelect as HTMLSelectElement;
      select.innerHTML = "";
      for (const c of cases) {
        const option = document.createElement("option");
        option.value = c.id;
        option.textContent = `${c.id} (${c.split})`;
        select.appendChild(option);
      }
      if (cases.length > 0) {
        await this.selectCase(cases[0].id, cases);
      }
      select.onchange = () => void this.selectCase(select.value, cases);
    } catch (err) {
      this.toast(err instanceof Error ? err.message : String(err));
    }
  }

  private async selectCase(id: string, cases: CaseSummary[]): Promise<void> {
    const summary = cases.find((c) => c.id === id);
    if (!summary) return;
    const images = await this.api.caseImages(id);
    const [x1, x2, y, lesion] = await Promise.all([
      pngToGray(images.x1.png_base64),
      pngToGray(images.x2.png_base64),
      pngToGray(images.y.png_base64),
      pngToGray(images.lesion.png_base64),
    ]);
    this.current = { summary, images, grays: { x1: x1.data, x2: x2.data, y: y.data, lesion: lesion.data } };
    this.mask = new PromptMask(x1.h, x1.w);
    this.history.clear();
    this.lastResult = null;
    this.compareWith = null;
    this.redraw();
  }

  // -- painting --------------------------------------------------------------

  private canvasPoint(event: PointerEvent, canvas: HTMLCanvasElement): StrokePoint {
    const rect = canvas.getBoundingClientRect();
    return {
      x: ((event.clientX - rect.left) / rect.width) * this.mask!.width,
      y: ((event.clientY - rect.top) / rect.height) * this.mask!.height,
    };
  }

  private bindPainting(canvas: HTMLCanvasElement): void {
    canvas.onpointerdown = (event) => {
      if (!this.mask || this.pending) return;
      canvas.setPointerCapture(event.pointerId);
      this.stroke = [this.canvasPoint(event, canvas)];
    };
    canvas.onpointermove = (event) => {
      if (!this.mask || this.stroke.length === 0) return;
      this.stroke.push(this.canvasPoint(event, canvas));
      this.previewStroke();
    };
    const finish = () => {
      if (!this.mask || this.stroke.length === 0) return;
      this.mask.paint(this.stroke, this.brushRadius, this.erase ? "erase" : "add");
      this.stroke = [];
      this.redraw();
    };
    canvas.onpointerup = finish;
    canvas.onpointercancel = finish;
  }

  private previewStroke(): void {
    // live feedback: draw the committed mask plus the in-flight stroke
    const preview = new PromptMask(this.mask!.height, this.mask!.width);
    preview.data = this.mask!.clone();
    preview.paint(this.stroke, this.brushRadius, this.erase ? "erase" : "add");
    this.drawOverlayFrom(preview.data);
  }

  // -- synthesis ---------------------------------------------------------------

  private async synthesize(useOracle: boolean): Promise<void> {
    if (!this.current || !this.mask || this.pending) return;
    this.pending = true;
    this.setControlsEnabled(false);
    try {
      const prompt = useOracle
        ? ("lesion" as const)
        : this.mask.isEmpty()
          ? null
          : encodeMask(this.mask.data, this.mask.height, this.mask.width);
      const response = await this.api.synthesize(this.current.summary.id, prompt, true);
      const gray = (await pngToGray(response.y_hat.png_base64)).data;
      const entry = this.history.add({
        caseId: response.case_id,
        prompt,
        promptArea: useOracle ? -1 : this.mask.area(),
        pngBase64: response.y_hat.png_base64,
        metrics: response.metrics,
      });
      this.lastResult = { gray, entry };
      this.redraw();
    } catch (err) {
      if (err instanceof ApiError) {
        this.toast(`server error ${err.status}: ${err.message}`);
      } else {
        this.toast(err instanceof Error ? err.message : String(err));
      }
    } finally {
      this.pending = false;
      this.setControlsEnabled(true);
    }
  }

  // -- rendering ----------------------------------------------------------------

  private render(): void {
    this.root.innerHTML = `
      <div class="bar">
        <select id="caseSelect"></select>
        <label>brush <input id="brush" type="range" min="1" max="8" step="0.5" value="2.5"></label>
        <label><input id="erase" type="checkbox"> erase</label>
        <button id="undo">undo</button>
        <button id="clear">clear mask</button>
        <button id="synth">synthesize</button>
        <button id="oracle">oracle lesion</button>
        <label>window <input id="window" type="range" min="0" max="254" value="0"></label>
        <span id="status"></span>
      </div>
      <div class="panels">
        <figure><canvas id="x1"></canvas><figcaption>input contrast 1 + prompt</figcaption></figure>
        <figure><canvas id="x2"></canvas><figcaption>input contrast 2</figcaption></figure>
        <figure><canvas id="truth"></canvas><figcaption>ground truth</figcaption></figure>
        <figure><canvas id="result"></canvas><figcaption id="resultLabel">synthesis</figcaption></figure>
        <figure><canvas id="diff"></canvas><figcaption>|difference| vs selected run</figcaption></figure>
      </div>
      <div id="metrics" class="metrics"></div>
      <div id="history" class="history"></div>
      <div id="toast" class="toast"></div>
    `;
    for (const id of ["caseSelect", "brush", "erase", "undo", "clear", "synth", "oracle",
                      "window", "status", "x1", "x2", "truth", "result", "diff",
                      "metrics", "history", "toast", "resultLabel"]) {
      this.els[id] = this.root.querySelector(`#${id}`)!;
    }
    (this.els.brush as HTMLInputElement).oninput = (e) => {
      this.brushRadius = Number((e.target as HTMLInputElement).value);
    };
    (this.els.erase as HTMLInputElement).onchange = (e) => {
      this.erase = (e.target as HTMLInputElement).checked;
    };
    (this.els.undo as HTMLButtonElement).onclick = () => {
      if (this.mask?.undo()) this.redraw();
    };
    (this.els.clear as HTMLButtonElement).onclick = () => {
      this.mask?.clear();
      this.redraw();
    };
    (this.els.synth as HTMLButtonElement).onclick = () => void this.synthesize(false);
    (this.els.oracle as HTMLButtonElement).onclick = () => void this.synthesize(true);
    (this.els.window as HTMLInputElement).oninput = (e) => {
      this.windowLo = Number((e.target as HTMLInputElement).value);
      this.windowHi = 255;
      this.redraw();
    };
    this.bindPainting(this.els.x1 as HTMLCanvasElement);
  }

  private setControlsEnabled(enabled: boolean): void {
    for (const id of ["synth", "oracle", "undo", "clear", "caseSelect"]) {
      (this.els[id] as HTMLButtonElement).disabled = !enabled;
    }
    this.els.status.textContent = enabled ? "" : "synthesizing...";
  }

  private drawGray(canvas: HTMLCanvasElement, gray: Uint8Array, windowed = false): void {
    if (!this.mask) return;
    const { width, height } = this.mask;
    canvas.width = width * SCALE;
    canvas.height = height * SCALE;
    const ctx = canvas.getContext("2d")!;
    const image = ctx.createImageData(width, height);
    for (let i = 0; i < gray.length; i += 1) {
      const v = windowed ? applyWindow(gray[i], this.windowLo, this.windowHi) : gray[i];
      image.data[i * 4 + 0] = v;
      image.data[i * 4 + 1] = v;
      image.data[i * 4 + 2] = v;
      image.data[i * 4 + 3] = 255;
    }
    const off = document.createElement("canvas");
    off.width = width;
    off.height = height;
    off.getContext("2d")!.putImageData(image, 0, 0);
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
  }

  private drawOverlayFrom(maskData: Uint8Array): void {
    if (!this.current || !this.mask) return;
    const canvas = this.els.x1 as HTMLCanvasElement;
    this.drawGray(canvas, this.current.grays.x1);
    const ctx = canvas.getContext("2d")!;
    ctx.fillStyle = "rgba(255, 80, 40, 0.45)";
    const { width, height } = this.mask;
    for (let y = 0; y < height; y += 1) {
      for (let x = 0; x < width; x += 1) {
        if (maskData[y * width + x]) {
          ctx.fillRect(x * SCALE, y * SCALE, SCALE, SCALE);
        }
      }
    }
  }

  private redraw(): void {
    if (!this.current || !this.mask) return;
    this.drawOverlayFrom(this.mask.data);
    this.drawGray(this.els.x2 as HTMLCanvasElement, this.current.grays.x2);
    this.drawGray(this.els.truth as HTMLCanvasElement, this.current.grays.y);
    if (this.lastResult) {
      this.drawGray(this.els.result as HTMLCanvasElement, this.lastResult.gray, true);
      const m = this.lastResult.entry.metrics;
      this.els.metrics.textContent = m
        ? `run #${this.lastResult.entry.index}: PSNR ${m.psnr_db.toFixed(2)} dB, ` +
          `SSIM ${m.ssim.toFixed(4)}, NMSE ${m.nmse.toFixed(4)}`
        : `run #${this.lastResult.entry.index}`;
      this.drawDiff();
    }
    this.drawHistory();
  }

  private async drawDiff(): Promise<void> {
    if (!this.lastResult || !this.mask) return;
    const other = this.compareWith ?? this.lastResult.entry;
    const otherGray = (await pngToGray(other.pngBase64)).data;
    const heat = diffHeatmap(this.lastResult.gray, otherGray);
    const canvas = this.els.diff as HTMLCanvasElement;
    const { width, height } = this.mask;
    canvas.width = width * SCALE;
    canvas.height = height * SCALE;
    const image = new ImageData(new Uint8ClampedArray(heat), width, height);
    const off = document.createElement("canvas");
    off.width = width;
    off.height = height;
    off.getContext("2d")!.putImageData(image, 0, 0);
    const ctx = canvas.getContext("2d")!;
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
  }

  private drawHistory(): void {
    const container = this.els.history;
    container.innerHTML = "";
    for (const entry of this.history.list()) {
      const img = document.createElement("img");
      img.src = `data:image/png;base64,${entry.pngBase64}`;
      img.title = `run #${entry.index}` + (entry.metrics ? ` PSNR ${entry.metrics.psnr_db.toFixed(2)}` : "");
      img.className = "thumb";
      img.onclick = () => {
        this.compareWith = entry;
        (this.els.resultLabel as HTMLElement).textContent = `synthesis (diffing vs run #${entry.index})`;
        void this.drawDiff();
      };
      container.appendChild(img);
    }
  }

  private toast(message: string): void {
    this.els.toast.textContent = message;
    setTimeout(() => {
      if (this.els.toast.textContent === message) this.els.toast.textContent = "";
    }, 4000);
  }
}
