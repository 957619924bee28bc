/** Application wiring: DOM, events, and the fetch/submit loop. */

import { ApiClient } from "./api.js";
import { hitTest, sceneBbox, segmentFromFeature } from "./geometry.js";
import { AppModel, keyToCode } from "./model.js";
import { DEFAULT_PALETTE, SAFE_PALETTE, type Palette } from "./palette.js";
import { OfflineQueue } from "./queue.js";
import {
  chmToCanvas,
  DEFAULT_LAYERS,
  drawScene,
  type Scene,
  type SceneLayers,
} from "./render.js";
import type { FilterName } from "./types.js";
import { Viewport } from "./viewport.js";

const FLUSH_INTERVAL_MS = 5000;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

class App {
  private api = new ApiClient("");
  private model = new AppModel();
  private queue = new OfflineQueue(
    (r) => this.api.postLabel(r),
    window.localStorage,
  );
  private scene: Scene = {
    segments: [],
    chm: null,
    chmCanvas: null,
    basemapImage: null,
  };
  private view = new Viewport(800, 600);
  private layers: SceneLayers = { ...DEFAULT_LAYERS };
  private palette: Palette = DEFAULT_PALETTE;
  private filter: FilterName = "unlabeled";
  private canvas = el<HTMLCanvasElement>("map");
  private status = el<HTMLElement>("status");
  private dragging = false;
  private dragMoved = false;
  private lastX = 0;
  private lastY = 0;

  async boot(): Promise<void> {
    this.resize();
    window.addEventListener("resize", () => this.resize());
    this.bindEvents();
    await this.reload(true);
    window.addEventListener("online", () => void this.flushQueue());
    window.setInterval(() => void this.flushQueue(), FLUSH_INTERVAL_MS);
  }

  /** Fetch everything the map needs; each layer degrades independently. */
  private async reload(fit: boolean): Promise<void> {
    try {
      const [collection, progress] = await Promise.all([
        this.api.segments(),
        this.api.progress().catch(() => null),
      ]);
      this.model.load(collection.features.map(segmentFromFeature), progress);
      this.scene.segments = this.model.segments;
      this.renderLegend();
      this.renderProgress(progress?.n_labeled ?? 0, progress?.n_segments ?? 0);
    } catch (err) {
      this.say(`load failed: ${String(err)} — read-only until reload`, true);
      return;
    }
    try {
      this.scene.chm = await this.api.chmGrid();
      this.scene.chmCanvas = this.scene.chm ? chmToCanvas(this.scene.chm) : null;
    } catch {
      this.scene.chm = null; // polygons-only backdrop
    }
    try {
      const blob = await this.api.basemap();
      this.scene.basemapImage = blob ? await createImageBitmap(blob) : null;
    } catch {
      this.scene.basemapImage = null; // CHM-only backdrop
    }
    if (fit && this.scene.segments.length > 0) {
      this.view.fit(sceneBbox(this.scene.segments));
    }
    this.say(`${this.scene.segments.length} segments loaded`);
    this.draw();
  }

  private bindEvents(): void {
    this.canvas.addEventListener("mousedown", (e) => {
      this.dragging = true;
      this.dragMoved = false;
      this.lastX = e.offsetX;
      this.lastY = e.offsetY;
    });
    this.canvas.addEventListener("mousemove", (e) => {
      if (!this.dragging) return;
      const dx = e.offsetX - this.lastX;
      const dy = e.offsetY - this.lastY;
      if (Math.abs(dx) + Math.abs(dy) > 2) this.dragMoved = true;
      this.view.panBy(dx, dy);
      this.lastX = e.offsetX;
      this.lastY = e.offsetY;
      this.draw();
    });
    window.addEventListener("mouseup", (e) => {
      if (!this.dragging) return;
      this.dragging = false;
      if (!this.dragMoved && e.target === this.canvas) {
        const [wx, wy] = this.view.toWorld(this.lastX, this.lastY);
        const hit = hitTest(this.scene.segments, wx, wy);
        this.model.select(hit ? hit.id : null);
        this.showSelection();
        this.draw();
      }
    });
    this.canvas.addEventListener("wheel", (e) => {
      e.preventDefault();
      this.view.zoomAt(e.offsetX, e.offsetY, e.deltaY < 0 ? 1.2 : 1 / 1.2);
      this.draw();
    });
    window.addEventListener("keydown", (e) => {
      if (e.target instanceof HTMLInputElement) return;
      this.onKey(e.key);
    });

    el<HTMLSelectElement>("filter").addEventListener("change", (e) => {
      this.filter = (e.target as HTMLSelectElement).value as FilterName;
      this.say(`filter: ${this.filter} (${this.model.filteredIds(this.filter).length} segments)`);
    });
    el<HTMLInputElement>("safe-colors").addEventListener("change", (e) => {
      this.palette = (e.target as HTMLInputElement).checked
        ? SAFE_PALETTE
        : DEFAULT_PALETTE;
      this.renderLegend();
      this.draw();
    });
    el<HTMLInputElement>("show-disagreement").addEventListener("change", (e) => {
      this.layers.disagreement = (e.target as HTMLInputElement).checked;
      this.draw();
    });
    el<HTMLAnchorElement>("export").href = this.api.labelsCsvUrl();
  }

  private onKey(key: string): void {
    if (key === "n" || key === "ArrowRight") {
      if (this.model.step(this.filter, 1) === null) {
        this.say(`no segments match filter '${this.filter}'`);
      }
      this.showSelection();
      this.draw();
      return;
    }
    if (key === "p" || key === "ArrowLeft") {
      if (this.model.step(this.filter, -1) === null) {
        this.say(`no segments match filter '${this.filter}'`);
      }
      this.showSelection();
      this.draw();
      return;
    }
    if (key === "v") {
      const s = this.model.selected();
      if (s && s.labelCode !== null) {
        void this.sendLabel(s.id, s.labelCode, "verified");
      }
      return;
    }
    if (key === "Escape") {
      this.model.select(null);
      this.showSelection();
      this.draw();
      return;
    }
    const code = keyToCode(key, this.model.speciesNames);
    if (code !== null) this.labelSelected(code);
  }

  /** Shared by species keys and legend buttons. */
  private labelSelected(code: number): void {
    const s = this.model.selected();
    if (!s) {
      this.say("select a segment first");
      return;
    }
    void this.sendLabel(s.id, code, "proposed");
  }

  private async sendLabel(
    id: number,
    code: number,
    status: "proposed" | "verified",
  ): Promise<void> {
    const record = {
      segment_id: id,
      species_code: code,
      status,
      annotator: el<HTMLInputElement>("annotator").value,
      note: el<HTMLInputElement>("note").value,
    };
    const outcome = await this.queue.submit(record);
    if (outcome.delivered) {
      this.model.applyLabel(id, code, status);
      el<HTMLInputElement>("note").value = "";
      const name = this.model.speciesNames[String(code)] ?? "skip";
      this.say(`segment ${id}: ${name} (${status})`);
      this.draw();
      void this.api
        .progress()
        .then((p) => this.renderProgress(p.n_labeled, p.n_segments))
        .catch(() => undefined);
    } else if (outcome.queued) {
      this.say(`offline — label for segment ${id} queued`, true);
    } else {
      this.say(`rejected: ${outcome.error}`, true);
    }
  }

  private async flushQueue(): Promise<void> {
    if (this.queue.pending().length === 0) return;
    const result = await this.queue.flush();
    if (result.delivered > 0) {
      this.say(`reconnected — delivered ${result.delivered} queued label(s)`);
      await this.reload(false);
    }
    for (const r of result.rejected) {
      this.say(`queued label rejected: ${r.error}`, true);
    }
  }

  private showSelection(): void {
    const s = this.model.selected();
    const box = el<HTMLElement>("selection");
    if (!s) {
      box.textContent = "nothing selected";
      return;
    }
    const pred =
      s.predictedCode !== null
        ? `model: ${this.model.speciesNames[String(s.predictedCode)] ?? s.predictedCode}` +
          (s.disagreement > 0 ? ` (disagreement ${s.disagreement.toFixed(2)})` : "")
        : "no prediction";
    const label =
      s.labelCode !== null
        ? `label: ${this.model.speciesNames[String(s.labelCode)] ?? "skip"} [${s.labelStatus}]`
        : "unlabeled";
    box.textContent = `segment ${s.id} — ${pred} — ${label}`;
  }

  private renderLegend(): void {
    const legend = el<HTMLElement>("legend");
    legend.innerHTML = "";
    const entries = Object.entries(this.model.speciesNames).sort(
      (a, b) => Number(a[0]) - Number(b[0]),
    );
    for (const [code, name] of entries) {
      legend.append(
        this.legendButton(Number(code), `${code} ${name}`,
          this.palette.species[Number(code)] ?? "#888"),
      );
    }
    legend.append(this.legendButton(0, "0 skip", this.palette.unknown));
  }

  /** Legend entries double as label buttons for the selected segment. */
  private legendButton(code: number, text: string, color: string): HTMLButtonElement {
    const item = document.createElement("button");
    item.type = "button";
    item.className = "legend-item";
    item.title = `label selected segment (key ${code})`;
    const swatch = document.createElement("i");
    swatch.style.background = color;
    item.append(swatch, text);
    item.addEventListener("click", () => this.labelSelected(code));
    return item;
  }

  private renderProgress(labeled: number, total: number): void {
    el<HTMLElement>("progress").textContent = total
      ? `${labeled}/${total} labeled`
      : "";
  }

  private say(message: string, isError = false): void {
    this.status.textContent = message;
    this.status.classList.toggle("error", isError);
  }

  private resize(): void {
    const rect = this.canvas.parentElement?.getBoundingClientRect();
    this.view.width = this.canvas.width = Math.max(320, rect?.width ?? 800);
    this.view.height = this.canvas.height = Math.max(
      240,
      (rect?.height ?? 640) - 4,
    );
    this.draw();
  }

  private draw(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    drawScene(
      ctx,
      this.scene,
      this.view,
      this.palette,
      this.layers,
      this.model.selectedId,
    );
  }
}

void new App().boot();
