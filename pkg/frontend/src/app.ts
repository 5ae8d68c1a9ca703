// Console shell: one queue view plus at most one open review session,
// wired to the service client. Rendering is a full redraw from current
// state, and all state is rebuilt from server responses on reload; the
// only client-side facts are the operator's in-progress choices.

import type { ConsoleApi } from "./api.js";
import { QueueController, renderQueue } from "./queue.js";
import {
  ReviewController,
  type FrameView,
  type ImageDecoder,
  type OverlayMode,
} from "./review.js";
import type { RgbaImage } from "./overlay.js";
import { RAW_LABELS, type RawLabel } from "./types.js";

export type AppOptions = {
  api: ConsoleApi;
  decode: ImageDecoder;
  operator: string;
  pageSize?: number;
  // Clock for age display, in seconds; injectable for tests.
  now?: () => number;
};

const ZOOM_LEVELS = [1, 2, 3] as const;

export class ConsoleApp {
  readonly queue: QueueController;
  review: ReviewController | null = null;
  lastView: FrameView | null = null;

  private readonly root: Element;
  private readonly api: ConsoleApi;
  private readonly decode: ImageDecoder;
  private readonly operator: string;
  private readonly now: () => number;
  private readonly keyListener: (event: KeyboardEvent) => void;
  pending: Promise<void> = Promise.resolve();

  constructor(root: Element, options: AppOptions) {
    this.root = root;
    this.api = options.api;
    this.decode = options.decode;
    this.operator = options.operator;
    this.now = options.now ?? (() => Date.now() / 1000);
    this.queue = new QueueController(this.api, options.pageSize ?? 20);
    this.keyListener = (event) => this.handleKey(event);
  }

  async start(): Promise<void> {
    this.root.ownerDocument.addEventListener(
      "keydown",
      this.keyListener as EventListener,
    );
    await this.queue.load();
    this.render();
  }

  stop(): void {
    this.root.ownerDocument.removeEventListener(
      "keydown",
      this.keyListener as EventListener,
    );
  }

  async openReview(id: string): Promise<void> {
    const session = new ReviewController(this.api, this.decode, id);
    await session.open();
    this.review = session;
    await this.refreshView();
  }

  async closeReview(): Promise<void> {
    this.review = null;
    this.lastView = null;
    await this.queue.load();
    this.render();
  }

  async gotoPage(page: number): Promise<void> {
    await this.queue.load(page);
    this.render();
  }

  async setOverlay(mode: OverlayMode): Promise<void> {
    if (!this.review) return;
    this.review.setOverlay(mode);
    await this.refreshView();
  }

  async setCursor(index: number): Promise<void> {
    if (!this.review) return;
    this.review.setCursor(index);
    await this.refreshView();
  }

  async setZoom(zoom: number): Promise<void> {
    if (!this.review) return;
    this.review.setZoom(zoom);
    await this.refreshView();
  }

  chooseDraft(label: RawLabel): void {
    if (!this.review) return;
    this.review.chooseDraft(label);
    this.render();
  }

  // Optimistic flow: the item leaves the queue view immediately, the
  // server confirms or the view is reconciled. On conflict the session
  // stays open showing the server's message.
  async submitLabel(): Promise<void> {
    const session = this.review;
    if (!session || !session.canSubmit) return;
    const snapshot = this.queue.removeItem(session.state.inspectionId);
    try {
      await session.submit(this.operator);
      this.review = null;
      this.lastView = null;
    } catch {
      // Reconcile with the server; if it cannot be reached, put the
      // optimistic removal back so nothing silently disappears.
      await this.queue.load();
      if (this.queue.state.unreachable) {
        this.queue.restoreItems(snapshot);
      }
      this.render();
      return;
    }
    await this.queue.load();
    this.render();
  }

  private async refreshView(): Promise<void> {
    if (this.review) {
      this.lastView = await this.review.currentView();
    }
    this.render();
  }

  private handleKey(event: KeyboardEvent): void {
    if (!this.review) return;
    const digit = Number.parseInt(event.key, 10);
    if (digit >= 1 && digit <= RAW_LABELS.length) {
      this.chooseDraft(RAW_LABELS[digit - 1]);
      return;
    }
    if (event.key === "Enter") {
      this.pending = this.submitLabel();
    } else if (event.key === "ArrowRight") {
      this.pending = this.setCursor(this.review.state.cursor + 1);
    } else if (event.key === "ArrowLeft") {
      this.pending = this.setCursor(this.review.state.cursor - 1);
    }
  }

  render(): void {
    const doc = this.root.ownerDocument;
    this.root.textContent = "";
    if (this.review) {
      this.root.appendChild(this.renderReview(doc, this.review));
      return;
    }
    const host = doc.createElement("div");
    this.root.appendChild(host);
    renderQueue(
      host,
      this.queue.state,
      {
        onOpen: (id) => {
          this.pending = this.openReview(id);
        },
        onPage: (page) => {
          this.pending = this.gotoPage(page);
        },
        onRetry: () => {
          this.pending = this.gotoPage(this.queue.state.page);
        },
      },
      this.now(),
    );
  }

  private renderReview(doc: Document, session: ReviewController): Element {
    const state = session.state;
    const panel = doc.createElement("section");
    panel.className = "review";
    panel.setAttribute("data-id", state.inspectionId);

    const header = doc.createElement("header");
    const title = doc.createElement("h2");
    title.textContent = state.inspectionId;
    header.appendChild(title);
    const summary = doc.createElement("p");
    summary.className = "review-summary";
    const record = state.record;
    summary.textContent = record?.prediction
      ? `predicted ${record.prediction.class_name} at ` +
        `${(record.prediction.confidence * 100).toFixed(0)}% ` +
        `(${record.decision ?? "-"}, model v${record.model_version ?? "-"})`
      : "not classified yet";
    header.appendChild(summary);
    const close = doc.createElement("button");
    close.className = "close";
    close.textContent = "Back to queue";
    close.addEventListener("click", () => {
      this.pending = this.closeReview();
    });
    header.appendChild(close);
    panel.appendChild(header);

    panel.appendChild(this.renderFrameArea(doc));
    panel.appendChild(this.renderFrameNav(doc, session));
    panel.appendChild(this.renderOverlayToggle(doc, session));
    panel.appendChild(this.renderZoomPicker(doc, session));
    panel.appendChild(this.renderLabelPicker(doc, session));

    const submit = doc.createElement("button");
    submit.className = "submit";
    submit.textContent = `Submit label as ${this.operator}`;
    submit.disabled = !session.canSubmit;
    submit.addEventListener("click", () => {
      this.pending = this.submitLabel();
    });
    panel.appendChild(submit);

    if (state.error) {
      const error = doc.createElement("p");
      error.className = "review-error";
      error.textContent = state.error;
      panel.appendChild(error);
    }
    return panel;
  }

  private renderFrameArea(doc: Document): Element {
    const area = doc.createElement("div");
    area.className = "frame-area";
    const canvas = doc.createElement("canvas");
    canvas.className = "frame-view";
    const view = this.lastView;
    if (view) {
      canvas.width = view.image.width;
      canvas.height = view.image.height;
      paintImage(canvas, view.image);
    }
    area.appendChild(canvas);
    if (view?.legend) {
      const legend = doc.createElement("p");
      legend.className = "overlay-legend";
      legend.textContent = view.legend;
      area.appendChild(legend);
    }
    if (view?.notice) {
      const notice = doc.createElement("p");
      notice.className = "overlay-notice";
      notice.textContent = view.notice;
      area.appendChild(notice);
    }
    return area;
  }

  private renderFrameNav(doc: Document, session: ReviewController): Element {
    const state = session.state;
    const nav = doc.createElement("nav");
    nav.className = "frame-nav";
    const prev = doc.createElement("button");
    prev.className = "frame-prev";
    prev.textContent = "<";
    prev.disabled = state.cursor === 0;
    prev.addEventListener("click", () => {
      this.pending = this.setCursor(state.cursor - 1);
    });
    const label = doc.createElement("span");
    label.className = "frame-cursor";
    label.textContent = `frame ${state.cursor + 1} of ${state.frameCount}`;
    const next = doc.createElement("button");
    next.className = "frame-next";
    next.textContent = ">";
    next.disabled = state.cursor >= state.frameCount - 1;
    next.addEventListener("click", () => {
      this.pending = this.setCursor(state.cursor + 1);
    });
    nav.appendChild(prev);
    nav.appendChild(label);
    nav.appendChild(next);
    return nav;
  }

  private renderOverlayToggle(doc: Document, session: ReviewController): Element {
    const nav = doc.createElement("nav");
    nav.className = "overlay-toggle";
    const modes: Array<[OverlayMode, string]> = [
      ["raw", "Raw frame"],
      ["lrp_clean", "Evidence: clean"],
      ["lrp_dirty", "Evidence: dirty"],
    ];
    for (const [mode, text] of modes) {
      const button = doc.createElement("button");
      button.setAttribute("data-mode", mode);
      button.className =
        session.state.overlay === mode ? "mode active" : "mode";
      button.textContent = text;
      button.addEventListener("click", () => {
        this.pending = this.setOverlay(mode);
      });
      nav.appendChild(button);
    }
    return nav;
  }

  private renderZoomPicker(doc: Document, session: ReviewController): Element {
    const nav = doc.createElement("nav");
    nav.className = "zoom-picker";
    for (const level of ZOOM_LEVELS) {
      const button = doc.createElement("button");
      button.setAttribute("data-zoom", String(level));
      button.className =
        session.state.zoom === level ? "zoom active" : "zoom";
      button.textContent = `${level}x`;
      button.addEventListener("click", () => {
        this.pending = this.setZoom(level);
      });
      nav.appendChild(button);
    }
    return nav;
  }

  private renderLabelPicker(doc: Document, session: ReviewController): Element {
    const picker = doc.createElement("div");
    picker.className = "label-picker";
    RAW_LABELS.forEach((label, index) => {
      const button = doc.createElement("button");
      button.setAttribute("data-label", label);
      button.className =
        session.state.draft === label ? "label chosen" : "label";
      button.textContent = `${index + 1} ${label.replace("_", " ")}`;
      button.addEventListener("click", () => this.chooseDraft(label));
      picker.appendChild(button);
    });
    return picker;
  }
}

// Blit onto a 2d canvas when one exists; test environments without a
// canvas backend still exercise the full compositing path via lastView.
function paintImage(canvas: HTMLCanvasElement, image: RgbaImage): void {
  const ctx =
    typeof canvas.getContext === "function" ? canvas.getContext("2d") : null;
  if (!ctx || typeof ctx.putImageData !== "function") return;
  const pixels = new ImageData(
    new Uint8ClampedArray(image.data),
    image.width,
    image.height,
  );
  ctx.putImageData(pixels, 0, 0);
}
