/** Browser wiring: binds the DOM to a Session and keeps both in sync. */

import { ALL_PROMPTS, ApiClient, ApiError } from "./api.js";
import { SyncedViewport } from "./compare.js";
import { buildMeshScene, drawMeshScene } from "./mesh-view.js";
import { countForegroundRgba } from "./silhouette.js";
import { PreviewMode, Session } from "./state.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

function serviceUrl(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get("service") ?? "http://127.0.0.1:8000";
}

class App {
  private readonly api = new ApiClient(serviceUrl());
  private session: Session | null = null;
  private readonly viewport = new SyncedViewport();
  private meshCache: { vertices: number[][]; faces: number[][] } | null = null;
  private lastRenderedIndex = -1;

  constructor() {
    $<HTMLFormElement>("bind-form").addEventListener("submit", (e) => {
      e.preventDefault();
      void this.bind($<HTMLInputElement>("project-id").value.trim());
    });
    $<HTMLSelectElement>("prompt-select").replaceChildren(
      ...ALL_PROMPTS.map((p) => {
        const option = document.createElement("option");
        option.value = p;
        option.textContent = p;
        return option;
      }),
    );
    $<HTMLButtonElement>("generate-button").addEventListener("click", () => {
      void this.generate();
    });
    for (const mode of ["depth", "mesh", "overlay"] as PreviewMode[]) {
      $<HTMLButtonElement>(`tab-${mode}`).addEventListener("click", () => {
        this.session?.setPreviewMode(mode);
      });
    }
    this.wireViewport();
  }

  private banner(text: string, retry?: () => void): void {
    const banner = $("banner");
    banner.replaceChildren();
    banner.hidden = text === "";
    if (text === "") return;
    banner.append(text);
    if (retry) {
      const button = document.createElement("button");
      button.textContent = "Retry";
      button.addEventListener("click", retry);
      banner.append(" ", button);
    }
  }

  private async bind(projectId: string): Promise<void> {
    if (!projectId) return;
    this.banner("");
    try {
      const session = await Session.bind(this.api, projectId);
      this.session = session;
      this.meshCache = null;
      this.lastRenderedIndex = -1;
      session.onUpdate(() => this.render());
      $<HTMLImageElement>("compare-left-img").src = this.api.imageUrl(
        `/projects/${projectId}/reference.png`,
      );
      this.render();
    } catch (error) {
      if (error instanceof ApiError) {
        this.banner(`cannot bind project: ${error.message}`);
      } else {
        this.banner("service unreachable.", () => void this.bind(projectId));
      }
    }
  }

  private render(): void {
    const session = this.session;
    if (!session) return;
    $("workspace").hidden = false;

    this.renderSliders(session);
    this.renderPreview(session);
    this.renderHistory(session);
    this.renderComparison(session);
    $("connection").textContent =
      session.connection === "ok" ? "" : "connection lost; edits not saved";
  }

  private renderSliders(session: Session): void {
    const container = $("sliders");
    for (const slider of session.sliders()) {
      let row = document.getElementById(`slider-row-${slider.name}`);
      if (!row) {
        row = document.createElement("div");
        row.id = `slider-row-${slider.name}`;
        row.className = "slider-row";
        row.innerHTML = `
          <label>${slider.name}</label>
          <input type="range" step="any">
          <output></output>
          <span class="slider-error"></span>`;
        const input = row.querySelector("input")!;
        input.addEventListener("input", () => {
          this.session?.setSlider(slider.name, Number(input.value));
        });
        container.append(row);
      }
      const input = row.querySelector("input")!;
      input.min = String(slider.min);
      input.max = String(slider.max);
      if (document.activeElement !== input) input.value = String(slider.value);
      row.querySelector("output")!.textContent = slider.value.toFixed(2);
      row.querySelector(".slider-error")!.textContent = slider.error ?? "";
      row.classList.toggle("dirty", slider.dirty);
    }
  }

  private renderPreview(session: Session): void {
    for (const mode of ["depth", "mesh", "overlay"] as PreviewMode[]) {
      $(`tab-${mode}`).classList.toggle("active", session.previewMode === mode);
      $(`preview-${mode}`).hidden = session.previewMode !== mode;
    }
    if (session.historyIndex !== this.lastRenderedIndex) {
      this.lastRenderedIndex = session.historyIndex;
      const url = this.api.imageUrl(
        `/projects/${session.projectId}/conditioning.png?v=${session.historyIndex}`,
      );
      $<HTMLImageElement>("depth-img").src = url;
      $<HTMLImageElement>("overlay-depth").src = url;
      void this.refreshMesh(session);
      void this.refreshSilhouetteReadout(session);
    }
  }

  private async refreshMesh(session: Session): Promise<void> {
    try {
      this.meshCache = await session.api.getMesh(session.projectId);
    } catch {
      return; // keep the previous mesh on transient failures
    }
    const canvas = $<HTMLCanvasElement>("mesh-canvas");
    const scene = buildMeshScene(this.meshCache, canvas.width, canvas.height);
    const ctx = canvas.getContext("2d");
    if (ctx) drawMeshScene(ctx, scene);
  }

  private async refreshSilhouetteReadout(session: Session): Promise<void> {
    try {
      const bytes = await session.api.getConditioningPng(session.projectId);
      const bitmap = await createImageBitmap(new Blob([bytes as unknown as BlobPart]));
      const canvas = document.createElement("canvas");
      canvas.width = bitmap.width;
      canvas.height = bitmap.height;
      const ctx = canvas.getContext("2d")!;
      ctx.drawImage(bitmap, 0, 0);
      const data = ctx.getImageData(0, 0, bitmap.width, bitmap.height).data;
      const count = countForegroundRgba(data, bitmap.width, bitmap.height);
      $("fg-count").textContent = `${count} silhouette px`;
    } catch {
      $("fg-count").textContent = "";
    }
  }

  private renderHistory(session: Session): void {
    const list = $("history-entries");
    list.replaceChildren(
      ...session.entries.map((entry) => {
        const li = document.createElement("li");
        const edits = Object.entries(entry.edits)
          .map(([k, v]) => `${k}=${v.toFixed(2)}`)
          .join(", ");
        li.textContent = `#${entry.index} ${entry.kind}${edits ? ` (${edits})` : ""}`;
        return li;
      }),
    );
    const gens = $("history-generations");
    gens.replaceChildren(
      ...session.generations.map((record) => {
        const li = document.createElement("li");
        const button = document.createElement("button");
        button.textContent = `#${record.index} "${record.prompt}" @ history ${record.history_index}`;
        button.addEventListener("click", () => session.selectGeneration(record.index));
        if (session.comparisonIndex === record.index) button.classList.add("active");
        li.append(button, ` digest ${record.request_digest.slice(0, 12)}…`);
        return li;
      }),
    );
  }

  private renderComparison(session: Session): void {
    const img = $<HTMLImageElement>("compare-right-img");
    if (session.comparisonIndex === null) {
      img.removeAttribute("src");
      return;
    }
    img.src = this.api.imageUrl(
      `/projects/${session.projectId}/generations/${session.comparisonIndex}/output.png`,
    );
    $<HTMLImageElement>("overlay-gen").src = img.src;
  }

  private async generate(): Promise<void> {
    const session = this.session;
    if (!session) return;
    const prompt = $<HTMLSelectElement>("prompt-select").value;
    const toast = $("toast");
    toast.textContent = "generating…";
    try {
      await session.triggerGeneration(prompt);
      toast.textContent = "";
    } catch (error) {
      toast.textContent =
        error instanceof ApiError ? error.message : "service unreachable";
    }
  }

  private wireViewport(): void {
    for (const side of ["left", "right"]) {
      const content = $(`compare-${side}-content`);
      this.viewport.attach((t) => {
        content.style.transform = `translate(${t.tx}px, ${t.ty}px) scale(${t.scale})`;
      });
    }
    const container = $("compare");
    container.addEventListener("wheel", (e) => {
      e.preventDefault();
      const rect = (e.currentTarget as HTMLElement).getBoundingClientRect();
      const pane = (e.clientX - rect.left) % (rect.width / 2);
      this.viewport.zoomAt(pane, e.clientY - rect.top, e.deltaY < 0 ? 1.2 : 1 / 1.2);
    });
    let dragging = false;
    container.addEventListener("pointerdown", () => (dragging = true));
    window.addEventListener("pointerup", () => (dragging = false));
    container.addEventListener("pointermove", (e) => {
      if (dragging) this.viewport.panBy(e.movementX, e.movementY);
    });
    $("compare-reset").addEventListener("click", () => this.viewport.reset());
  }
}

new App();
