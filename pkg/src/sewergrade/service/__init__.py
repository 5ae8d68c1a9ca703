"""Inspection triage: event-sourced state, model registry, retraining."""

from .core import QueuePage, TriageService
from .pipeline import DefaultPipelineRunner, PipelineConfig
from .records import (
    ACTION_TO_STATUS,
    LABELABLE_STATUSES,
    PIPELINE_STEPS,
    InspectionRecord,
    InspectionStatus,
    ModelRegistryEntry,
    ModelStatus,
    PipelineRun,
    StepResult,
    TriageAction,
    TriageRules,
    triage,
)
from .store import Event, EventLog

__all__ = [
    "TriageService",
    "QueuePage",
    "DefaultPipelineRunner",
    "PipelineConfig",
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
    "Event",
    "EventLog",
]
