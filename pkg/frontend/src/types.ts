// Wire types for the triage service's JSON contract. Field names and
// value vocabularies mirror the server's serialization exactly; the
// console never invents values of its own for any of these.

export const RAW_LABELS = [
  "clean",
  "slightly_dirty",
  "dirty",
  "very_dirty",
  "obstructed",
] as const;

export type RawLabel = (typeof RAW_LABELS)[number];

export type InspectionStatus =
  | "received"
  | "classified"
  | "dispatched_urgent"
  | "queued_review"
  | "queued_low"
  | "labeled";

export type TriageAction = "urgent_clean" | "human_review" | "low_priority";

export type VideoPrediction = {
  video_id: string;
  tally: number[];
  class_index: number;
  class_name: string;
  tie: boolean;
  confidence: number;
};

export type InspectionRecord = {
  id: string;
  frames_dir: string;
  submitted_at: number;
  status: InspectionStatus;
  prediction: VideoPrediction | null;
  decision: TriageAction | null;
  model_version: number | null;
  label: RawLabel | null;
  labeled_by: string | null;
  labeled_at: number | null;
};

export type QueuePage = {
  items: InspectionRecord[];
  total: number;
  page: number;
  page_size: number;
};

export type ExplanationFrame = {
  frame_index: number;
  score: number;
  input_sum: number;
  absorbed: number;
  heatmap_png_base64: string;
};

export type Explanation = {
  inspection_id: string;
  model_version: number;
  target_class: number;
  rule: string;
  frames: ExplanationFrame[];
};

export type FrameImage = {
  inspection_id: string;
  frame_index: number;
  frame_count: number;
  image_png_base64: string;
};

export type ModelEntry = {
  version: number;
  checkpoint_path: string;
  manifest_hash: string;
  metrics: Record<string, number>;
  status: "candidate" | "approved" | "production" | "retired";
  approved_by: string | null;
};
