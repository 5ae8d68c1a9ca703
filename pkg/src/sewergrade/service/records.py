"""Service domain records: inspections, triage rules, registry, pipeline runs."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from ..dataset import RawLabel
from ..evaluation import VideoPrediction
from ..model import CLASS_NAMES

__all__ = [
    "InspectionStatus",
    "TriageAction",
    "TriageRules",
    "triage",
    "InspectionRecord",
    "ModelStatus",
    "ModelRegistryEntry",
    "PIPELINE_STEPS",
    "StepResult",
    "PipelineRun",
    "LABELABLE_STATUSES",
    "ACTION_TO_STATUS",
]


class InspectionStatus(str, Enum):
    RECEIVED = "received"
    CLASSIFIED = "classified"
    DISPATCHED_URGENT = "dispatched_urgent"
    QUEUED_REVIEW = "queued_review"
    QUEUED_LOW = "queued_low"
    LABELED = "labeled"


class TriageAction(str, Enum):
    URGENT_CLEAN = "urgent_clean"
    HUMAN_REVIEW = "human_review"
    LOW_PRIORITY = "low_priority"


# Once triaged, an inspection waits in exactly one of these for its label.
LABELABLE_STATUSES = frozenset(
    {
        InspectionStatus.DISPATCHED_URGENT,
        InspectionStatus.QUEUED_REVIEW,
        InspectionStatus.QUEUED_LOW,
    }
)

ACTION_TO_STATUS = {
    TriageAction.URGENT_CLEAN: InspectionStatus.DISPATCHED_URGENT,
    TriageAction.HUMAN_REVIEW: InspectionStatus.QUEUED_REVIEW,
    TriageAction.LOW_PRIORITY: InspectionStatus.QUEUED_LOW,
}


@dataclass(frozen=True)
class TriageRules:
    """Confidence gate for automatic routing; below it a human decides."""

    confidence_threshold: float = 0.7

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValueError(
                f"confidence threshold must lie in [0, 1], "
                f"got {self.confidence_threshold}"
            )


def triage(
    class_index: int, confidence: float, rules: TriageRules | None = None
) -> TriageAction:
    """Route a classified inspection.

    Low confidence always goes to a human, regardless of class. Confident
    dirty/very_dirty dispatches a cleaning crew; confident clean or
    slightly_dirty parks in the low-priority queue.
    """
    rules = rules or TriageRules()
    if not 0 <= class_index < len(CLASS_NAMES):
        raise ValueError(f"class index {class_index} out of range")
    if not 0.0 <= confidence <= 1.0:
        raise ValueError(f"confidence {confidence} outside [0, 1]")
    if confidence < rules.confidence_threshold:
        return TriageAction.HUMAN_REVIEW
    if class_index >= 2:
        return TriageAction.URGENT_CLEAN
    return TriageAction.LOW_PRIORITY


@dataclass
class InspectionRecord:
    id: str
    frames_dir: str
    submitted_at: float
    status: InspectionStatus = InspectionStatus.RECEIVED
    prediction: VideoPrediction | None = None
    decision: TriageAction | None = None
    model_version: int | None = None
    label: RawLabel | None = None
    labeled_by: str | None = None
    labeled_at: float | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "frames_dir": self.frames_dir,
            "submitted_at": self.submitted_at,
            "status": self.status.value,
            "prediction": None
            if self.prediction is None
            else {
                "video_id": self.prediction.video_id,
                "tally": list(self.prediction.tally),
                "class_index": self.prediction.class_index,
                "class_name": self.prediction.class_name,
                "tie": self.prediction.tie,
                "confidence": self.prediction.confidence,
            },
            "decision": None if self.decision is None else self.decision.value,
            "model_version": self.model_version,
            "label": None if self.label is None else self.label.value,
            "labeled_by": self.labeled_by,
            "labeled_at": self.labeled_at,
        }


class ModelStatus(str, Enum):
    CANDIDATE = "candidate"
    APPROVED = "approved"
    PRODUCTION = "production"
    RETIRED = "retired"


@dataclass
class ModelRegistryEntry:
    version: int
    checkpoint_path: str
    manifest_hash: str
    metrics: dict[str, float] = field(default_factory=dict)
    status: ModelStatus = ModelStatus.CANDIDATE
    approved_by: str | None = None

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "checkpoint_path": self.checkpoint_path,
            "manifest_hash": self.manifest_hash,
            "metrics": dict(self.metrics),
            "status": self.status.value,
            "approved_by": self.approved_by,
        }


# Retraining stages, in their fixed execution order. A failure stops the
# run: later steps never appear in its results.
PIPELINE_STEPS = (
    "dataset_balancing_split",
    "stabilization_frame_selection",
    "frame_resizing",
    "model_training",
    "model_evaluation",
)


@dataclass
class StepResult:
    name: str
    ok: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "ok": self.ok, "detail": dict(self.detail)}


@dataclass
class PipelineRun:
    id: str
    trigger: str
    started_at: float
    status: str = "running"
    steps: list[StepResult] = field(default_factory=list)
    candidate_version: int | None = None
    inputs_hash: str | None = None
    error: str | None = None
    finished_at: float | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "trigger": self.trigger,
            "started_at": self.started_at,
            "status": self.status,
            "steps": [s.to_dict() for s in self.steps],
            "candidate_version": self.candidate_version,
            "inputs_hash": self.inputs_hash,
            "error": self.error,
            "finished_at": self.finished_at,
        }
