// One operator reviewing one inspection: frame cursor, overlay choice,
// draft label, submission. All facts shown come from server responses;
// the only client-held state is the operator's in-progress choices.

import { ApiError, UnreachableError, type ConsoleApi } from "./api.js";
import {
  composeFrameView,
  describeOverlay,
  type RgbaImage,
} from "./overlay.js";
import type {
  Explanation,
  InspectionRecord,
  RawLabel,
} from "./types.js";

// The two relevance views mirror the class the evidence argues for:
// "lrp_clean" explains the clean logit, "lrp_dirty" the dirty logit.
export type OverlayMode = "raw" | "lrp_clean" | "lrp_dirty";

export const OVERLAY_TARGETS: Record<
  Exclude<OverlayMode, "raw">,
  { classIndex: number; className: string }
> = {
  lrp_clean: { classIndex: 0, className: "clean" },
  lrp_dirty: { classIndex: 2, className: "dirty" },
};

export type ImageDecoder = (pngBase64: string) => Promise<RgbaImage>;

export type FrameView = {
  image: RgbaImage;
  legend: string | null;
  // Set when the overlay was requested but no explanation is
  // available; the raw frame is shown instead.
  notice: string | null;
};

export type ReviewState = {
  inspectionId: string;
  record: InspectionRecord | null;
  frameCount: number;
  cursor: number;
  overlay: OverlayMode;
  zoom: number;
  draft: RawLabel | null;
  submitting: boolean;
  error: string | null;
};

const OVERLAY_OPACITY = 0.6;

export class ReviewController {
  readonly state: ReviewState;
  private readonly api: ConsoleApi;
  private readonly decode: ImageDecoder;
  private readonly frameCache = new Map<number, RgbaImage>();
  private readonly explanationCache = new Map<number, Explanation>();

  constructor(api: ConsoleApi, decode: ImageDecoder, inspectionId: string) {
    this.api = api;
    this.decode = decode;
    this.state = {
      inspectionId,
      record: null,
      frameCount: 0,
      cursor: 0,
      overlay: "raw",
      zoom: 1,
      draft: null,
      submitting: false,
      error: null,
    };
  }

  async open(): Promise<void> {
    this.state.record = await this.api.getInspection(this.state.inspectionId);
    const first = await this.api.getFrame(this.state.inspectionId, 0);
    this.state.frameCount = first.frame_count;
    this.frameCache.set(0, await this.decode(first.image_png_base64));
    this.state.cursor = 0;
  }

  setCursor(index: number): void {
    const limit = Math.max(1, this.state.frameCount);
    this.state.cursor = Math.min(Math.max(index, 0), limit - 1);
  }

  setOverlay(mode: OverlayMode): void {
    this.state.overlay = mode;
  }

  setZoom(zoom: number): void {
    if (Number.isInteger(zoom) && zoom >= 1 && zoom <= 8) {
      this.state.zoom = zoom;
    }
  }

  chooseDraft(label: RawLabel): void {
    this.state.draft = label;
    this.state.error = null;
  }

  get canSubmit(): boolean {
    return (
      this.state.draft !== null &&
      !this.state.submitting &&
      this.state.record?.status !== "labeled"
    );
  }

  private async frameAt(index: number): Promise<RgbaImage> {
    const cached = this.frameCache.get(index);
    if (cached) return cached;
    const payload = await this.api.getFrame(this.state.inspectionId, index);
    this.state.frameCount = payload.frame_count;
    const image = await this.decode(payload.image_png_base64);
    this.frameCache.set(index, image);
    return image;
  }

  private async explanationFor(classIndex: number): Promise<Explanation> {
    const cached = this.explanationCache.get(classIndex);
    if (cached) return cached;
    const explanation = await this.api.getExplanation(
      this.state.inspectionId,
      classIndex,
    );
    this.explanationCache.set(classIndex, explanation);
    return explanation;
  }

  // The composited frame for the current cursor/overlay/zoom. A missing
  // explanation degrades to the raw frame plus a notice; it never
  // blanks the view or throws at the operator.
  async currentView(): Promise<FrameView> {
    const frame = await this.frameAt(this.state.cursor);
    if (this.state.overlay === "raw") {
      return {
        image: composeFrameView(frame, null, 0, this.state.zoom),
        legend: null,
        notice: null,
      };
    }
    const target = OVERLAY_TARGETS[this.state.overlay];
    let explanation: Explanation;
    try {
      explanation = await this.explanationFor(target.classIndex);
    } catch (err) {
      if (err instanceof ApiError || err instanceof UnreachableError) {
        return {
          image: composeFrameView(frame, null, 0, this.state.zoom),
          legend: null,
          notice: `No explanation available (${err.message}); showing the raw frame.`,
        };
      }
      throw err;
    }
    const entry = explanation.frames[this.state.cursor];
    if (!entry) {
      return {
        image: composeFrameView(frame, null, 0, this.state.zoom),
        legend: null,
        notice: `No relevance map for frame ${this.state.cursor}; showing the raw frame.`,
      };
    }
    const heat = await this.decode(entry.heatmap_png_base64);
    return {
      image: composeFrameView(frame, heat, OVERLAY_OPACITY, this.state.zoom),
      legend: describeOverlay(entry, target.className),
      notice: null,
    };
  }

  // POST the chosen label. The caller owns the optimistic queue update;
  // this resolves with the updated record or rejects with the server's
  // error (409 when someone already labeled it).
  async submit(operator: string): Promise<InspectionRecord> {
    if (this.state.draft === null) {
      throw new Error("choose a label before submitting");
    }
    if (this.state.submitting) {
      throw new Error("submission already in flight");
    }
    this.state.submitting = true;
    try {
      const updated = await this.api.submitLabel(
        this.state.inspectionId,
        this.state.draft,
        operator,
      );
      this.state.record = updated;
      this.state.error = null;
      return updated;
    } catch (err) {
      this.state.error =
        err instanceof ApiError && err.isConflict
          ? `Label conflict: ${err.message}`
          : err instanceof Error
            ? err.message
            : String(err);
      throw err;
    } finally {
      this.state.submitting = false;
    }
  }
}
