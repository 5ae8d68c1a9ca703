"""Stateful triage service: classify, queue, label, retrain, promote.

All mutations funnel through one lock and land in the append-only event
log, so a restart replays the log and arrives at the same state. Heavy
work (frame decoding, inference, pipeline steps) runs outside the lock;
collaborators (model loader, frame processor, pipeline runner) are
injectable so tests can swap them for fakes.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..checkpoint import load_checkpoint
from ..dataset import RawLabel
from ..errors import (
    IllegalTransitionError,
    NoProductionModelError,
    PipelineBusyError,
    PromotionError,
    ServiceError,
    UnknownInspectionError,
    UnknownModelVersionError,
)
from ..evaluation import VideoPrediction, classify_video
from ..frames import load_frames, process_sequence
from ..lrp import RULE_ZERO, explain_video, render_heatmap
from ..model import predict_batch
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
from .store import EventLog

__all__ = ["TriageService", "QueuePage"]


@dataclass(frozen=True)
class QueuePage:
    items: list
    total: int
    page: int
    page_size: int


def _default_frame_processor(frames_dir) -> np.ndarray:
    sequence = load_frames(frames_dir)
    tensors, _, _ = process_sequence(sequence)
    return tensors


def _default_model_loader(checkpoint_path):
    network, _ = load_checkpoint(checkpoint_path)
    return network


class TriageService:
    def __init__(
        self,
        state_dir,
        rules: TriageRules | None = None,
        frames_per_classification: int = 10,
        retrain_threshold: int = 40,
        seed: int = 0,
        model_loader: Callable | None = None,
        frame_processor: Callable | None = None,
        pipeline_runner: Callable | None = None,
        clock: Callable[[], float] = time.time,
    ):
        if frames_per_classification < 1:
            raise ValueError("frames_per_classification must be at least 1")
        if retrain_threshold < 1:
            raise ValueError("retrain_threshold must be at least 1")
        self.state_dir = Path(state_dir)
        self.state_dir.mkdir(parents=True, exist_ok=True)
        (self.state_dir / "models").mkdir(exist_ok=True)
        (self.state_dir / "reports").mkdir(exist_ok=True)
        self.rules = rules or TriageRules()
        self.frames_per_classification = frames_per_classification
        self.retrain_threshold = retrain_threshold
        self.seed = seed
        self._clock = clock
        self._model_loader = model_loader or _default_model_loader
        self._frame_processor = frame_processor or _default_frame_processor
        if pipeline_runner is None:
            from .pipeline import DefaultPipelineRunner

            pipeline_runner = DefaultPipelineRunner(self.state_dir, seed=seed)
        self._pipeline_runner = pipeline_runner

        self._lock = threading.RLock()
        self._pipeline_guard = threading.Lock()
        self._pipeline_threads: list[threading.Thread] = []
        self._log = EventLog(self.state_dir / "events.jsonl")
        self.manifest_path = self.state_dir / "ingestion_manifest.jsonl"

        self._inspections: dict[str, InspectionRecord] = {}
        self._registry: dict[int, ModelRegistryEntry] = {}
        self._runs: dict[str, PipelineRun] = {}
        self._production_version: int | None = None
        self._model_cache: dict[int, object] = {}
        self._submission_count = 0
        self._labels_since_retrain = 0
        self._replay()

    # -- event sourcing -------------------------------------------------

    def _emit(self, kind: str, payload: dict) -> None:
        self._log.append(kind, payload, ts=self._clock())

    def _replay(self) -> None:
        for event in self._log.replay():
            self._apply(event.kind, event.payload, event.ts)
        # A run left unfinished by a crash can never complete now.
        for run in self._runs.values():
            if run.status == "running":
                run.status = "failed"
                run.error = "interrupted by restart"

    def _apply(self, kind: str, payload: dict, ts: float) -> None:
        if kind == "inspection_submitted":
            self._inspections[payload["id"]] = InspectionRecord(
                id=payload["id"], frames_dir=payload["frames_dir"], submitted_at=ts
            )
            self._submission_count += 1
        elif kind == "inspection_classified":
            record = self._inspections[payload["id"]]
            p = payload["prediction"]
            record.prediction = VideoPrediction(
                video_id=p["video_id"],
                tally=tuple(p["tally"]),
                class_index=p["class_index"],
                class_name=p["class_name"],
                tie=p["tie"],
                confidence=p["confidence"],
            )
            record.decision = TriageAction(payload["decision"])
            record.status = InspectionStatus(payload["status"])
            record.model_version = payload["model_version"]
        elif kind == "inspection_labeled":
            record = self._inspections[payload["id"]]
            record.label = RawLabel(payload["raw_label"])
            record.labeled_by = payload["operator"]
            record.labeled_at = ts
            record.status = InspectionStatus.LABELED
            self._labels_since_retrain = payload["counter_after"]
        elif kind == "model_registered":
            entry = ModelRegistryEntry(
                version=payload["version"],
                checkpoint_path=payload["checkpoint_path"],
                manifest_hash=payload["manifest_hash"],
                metrics=payload["metrics"],
                status=ModelStatus(payload["status"]),
            )
            self._registry[entry.version] = entry
        elif kind == "model_promoted":
            previous = payload["previous"]
            if previous is not None and previous in self._registry:
                self._registry[previous].status = ModelStatus.RETIRED
            entry = self._registry[payload["version"]]
            entry.status = ModelStatus.PRODUCTION
            entry.approved_by = payload["approver"]
            self._production_version = payload["version"]
        elif kind == "pipeline_started":
            self._runs[payload["run_id"]] = PipelineRun(
                id=payload["run_id"], trigger=payload["trigger"], started_at=ts
            )
            self._labels_since_retrain = payload["counter_after"]
        elif kind == "pipeline_step":
            run = self._runs[payload["run_id"]]
            run.steps.append(
                StepResult(
                    name=payload["name"], ok=payload["ok"], detail=payload["detail"]
                )
            )
        elif kind == "pipeline_finished":
            run = self._runs[payload["run_id"]]
            run.status = payload["status"]
            run.candidate_version = payload["candidate_version"]
            run.inputs_hash = payload["inputs_hash"]
            run.error = payload["error"]
            run.finished_at = ts
        else:
            raise ServiceError(f"unknown event kind {kind!r} in log")

    # -- model registry -------------------------------------------------

    def register_model(
        self,
        checkpoint_path,
        manifest_hash: str = "",
        metrics: dict | None = None,
    ) -> ModelRegistryEntry:
        with self._lock:
            version = max(self._registry, default=0) + 1
            entry = ModelRegistryEntry(
                version=version,
                checkpoint_path=str(checkpoint_path),
                manifest_hash=manifest_hash,
                metrics=dict(metrics or {}),
            )
            self._registry[version] = entry
            self._emit(
                "model_registered",
                {
                    "version": version,
                    "checkpoint_path": entry.checkpoint_path,
                    "manifest_hash": manifest_hash,
                    "metrics": entry.metrics,
                    "status": entry.status.value,
                },
            )
            return entry

    def promote_model(self, version: int, approver: str) -> ModelRegistryEntry:
        """Candidate becomes production; the old production retires.

        The swap happens under the state lock, so a reader never sees an
        instant with zero production models once one exists. Requests that
        already picked up the old model simply finish on it.
        """
        if not approver:
            raise ValueError("an approver id is required to promote")
        with self._lock:
            entry = self._registry.get(version)
            if entry is None:
                raise UnknownModelVersionError(version)
            if entry.status is not ModelStatus.CANDIDATE:
                raise PromotionError(
                    f"version {version} is {entry.status.value}, not a candidate"
                )
            previous = self._production_version
            if previous is not None:
                self._registry[previous].status = ModelStatus.RETIRED
            entry.status = ModelStatus.PRODUCTION
            entry.approved_by = approver
            self._production_version = version
            self._emit(
                "model_promoted",
                {"version": version, "approver": approver, "previous": previous},
            )
            return entry

    def production_model(self) -> ModelRegistryEntry:
        with self._lock:
            if self._production_version is None:
                raise NoProductionModelError("no model has been promoted yet")
            return self._registry[self._production_version]

    def list_models(self) -> list[ModelRegistryEntry]:
        with self._lock:
            return [self._registry[v] for v in sorted(self._registry)]

    def _network_for(self, version: int):
        with self._lock:
            if version in self._model_cache:
                return self._model_cache[version]
            entry = self._registry.get(version)
            if entry is None:
                raise UnknownModelVersionError(version)
            path = entry.checkpoint_path
        network = self._model_loader(path)
        with self._lock:
            self._model_cache[version] = network
        return network

    # -- inspections ----------------------------------------------------

    def _frame_indices(self, inspection_id: str, available: int) -> np.ndarray:
        """Deterministic per-inspection pick of K frames to classify."""
        digest = hashlib.sha256(inspection_id.encode("utf-8")).digest()
        entropy = (self.seed, int.from_bytes(digest[:8], "big"))
        rng = np.random.default_rng(np.random.SeedSequence(entropy))
        k = min(self.frames_per_classification, available)
        return np.sort(rng.choice(available, size=k, replace=False))

    def submit_inspection(
        self, frames_dir, inspection_id: str | None = None
    ) -> InspectionRecord:
        with self._lock:
            version = self._production_version
            if version is None:
                raise NoProductionModelError(
                    "cannot classify: no production model is deployed"
                )
            if inspection_id is None:
                inspection_id = f"insp_{self._submission_count + 1:06d}"
            if inspection_id in self._inspections:
                raise ServiceError(f"inspection id {inspection_id!r} already exists")
            record = InspectionRecord(
                id=inspection_id,
                frames_dir=str(frames_dir),
                submitted_at=self._clock(),
            )
            self._inspections[inspection_id] = record
            self._submission_count += 1
            self._emit(
                "inspection_submitted",
                {"id": inspection_id, "frames_dir": str(frames_dir)},
            )
        network = self._network_for(version)

        # Heavy part, outside the lock: decode, stabilize, classify.
        tensors = self._frame_processor(frames_dir)
        picks = self._frame_indices(inspection_id, len(tensors))
        predictions = predict_batch(network, tensors[picks])
        vote = classify_video(inspection_id, predictions)
        action = triage(vote.class_index, vote.confidence, self.rules)

        with self._lock:
            record.prediction = vote
            record.decision = action
            record.status = ACTION_TO_STATUS[action]
            record.model_version = version
            self._emit(
                "inspection_classified",
                {
                    "id": inspection_id,
                    "prediction": {
                        "video_id": vote.video_id,
                        "tally": list(vote.tally),
                        "class_index": vote.class_index,
                        "class_name": vote.class_name,
                        "tie": vote.tie,
                        "confidence": vote.confidence,
                    },
                    "decision": action.value,
                    "status": record.status.value,
                    "model_version": version,
                },
            )
            return record

    def get_inspection(self, inspection_id: str) -> InspectionRecord:
        with self._lock:
            record = self._inspections.get(inspection_id)
            if record is None:
                raise UnknownInspectionError(inspection_id)
            return record

    def submit_label(
        self, inspection_id: str, raw_label, operator: str
    ) -> InspectionRecord:
        """Record a human verdict and feed it to the training inbox.

        The manifest append and the counter bump happen under the same
        lock as the state change, so a labeled inspection lands in the
        ingestion manifest exactly once.
        """
        if not operator:
            raise ValueError("an operator id is required to label")
        label = RawLabel(raw_label)
        start_run = False
        with self._lock:
            record = self._inspections.get(inspection_id)
            if record is None:
                raise UnknownInspectionError(inspection_id)
            if record.status not in LABELABLE_STATUSES:
                raise IllegalTransitionError(
                    f"inspection {inspection_id} is {record.status.value}; "
                    f"labels are accepted only from a queued state"
                )
            record.label = label
            record.labeled_by = operator
            record.labeled_at = self._clock()
            record.status = InspectionStatus.LABELED
            with self.manifest_path.open("a", encoding="utf-8") as fh:
                fh.write(
                    json.dumps(
                        {
                            "id": record.id,
                            "frames_dir": record.frames_dir,
                            "raw_label": label.value,
                        },
                        separators=(",", ":"),
                    )
                    + "\n"
                )
            self._labels_since_retrain += 1
            self._emit(
                "inspection_labeled",
                {
                    "id": inspection_id,
                    "raw_label": label.value,
                    "operator": operator,
                    "counter_after": self._labels_since_retrain,
                },
            )
            if self._labels_since_retrain >= self.retrain_threshold:
                # Only claim the trigger if no run is going; otherwise the
                # counter keeps accumulating and the next label retries.
                if self._pipeline_guard.acquire(blocking=False):
                    self._labels_since_retrain -= self.retrain_threshold
                    start_run = True
        if start_run:
            self._launch_run("threshold", background=True)
        return record

    @property
    def labels_until_retrain(self) -> int:
        with self._lock:
            return max(0, self.retrain_threshold - self._labels_since_retrain)

    # -- queue ----------------------------------------------------------

    def queue_listing(
        self,
        status: str | InspectionStatus | None = None,
        page: int = 0,
        page_size: int = 20,
    ) -> QueuePage:
        """Urgent dispatches first, then everything else oldest-first."""
        if page < 0 or page_size < 1:
            raise ValueError("page must be >= 0 and page_size >= 1")
        wanted = None if status is None else InspectionStatus(status)
        with self._lock:
            if wanted is None:
                items = [
                    r
                    for r in self._inspections.values()
                    if r.status in LABELABLE_STATUSES
                ]
            else:
                items = [r for r in self._inspections.values() if r.status is wanted]
            items.sort(
                key=lambda r: (
                    0 if r.status is InspectionStatus.DISPATCHED_URGENT else 1,
                    r.submitted_at,
                    r.id,
                )
            )
            start = page * page_size
            return QueuePage(
                items=items[start : start + page_size],
                total=len(items),
                page=page,
                page_size=page_size,
            )

    # -- explanations ---------------------------------------------------

    def explain_inspection(
        self, inspection_id: str, target_class: int, rule: str = RULE_ZERO
    ) -> dict:
        """Relevance heatmaps for the frames that were actually voted on,
        produced by the model version that classified the inspection."""
        with self._lock:
            record = self._inspections.get(inspection_id)
            if record is None:
                raise UnknownInspectionError(inspection_id)
            if record.prediction is None or record.model_version is None:
                raise IllegalTransitionError(
                    f"inspection {inspection_id} has not been classified yet"
                )
            version = record.model_version
        network = self._network_for(version)
        tensors = self._frame_processor(record.frames_dir)
        picks = self._frame_indices(inspection_id, len(tensors))
        explanation = explain_video(network, tensors[picks], target_class, rule=rule)

        from PIL import Image

        frames = []
        for index, rmap in zip(picks.tolist(), explanation.maps):
            buffer = io.BytesIO()
            Image.fromarray(render_heatmap(rmap)).save(buffer, format="PNG")
            frames.append(
                {
                    "frame_index": index,
                    "score": rmap.score,
                    "input_sum": rmap.input_sum,
                    "absorbed": rmap.absorbed,
                    "heatmap_png_base64": base64.b64encode(
                        buffer.getvalue()
                    ).decode("ascii"),
                }
            )
        return {
            "inspection_id": inspection_id,
            "model_version": version,
            "target_class": int(target_class),
            "rule": rule,
            "frames": frames,
        }

    def frame_image(self, inspection_id: str, index: int) -> dict:
        """One of the frames the classifier voted on, as an encoded PNG.

        Uses the same deterministic pick as classification and
        explanation, so frame k here is the frame that relevance map k
        explains."""
        with self._lock:
            record = self._inspections.get(inspection_id)
            if record is None:
                raise UnknownInspectionError(inspection_id)
        tensors = self._frame_processor(record.frames_dir)
        picks = self._frame_indices(inspection_id, len(tensors))
        if not 0 <= index < len(picks):
            raise ValueError(
                f"frame index {index} out of range [0, {len(picks)})"
            )

        from PIL import Image

        pixels = np.clip(tensors[picks[index]] * 255.0, 0, 255).astype(np.uint8)
        buffer = io.BytesIO()
        Image.fromarray(pixels).save(buffer, format="PNG")
        return {
            "inspection_id": inspection_id,
            "frame_index": int(index),
            "frame_count": int(len(picks)),
            "image_png_base64": base64.b64encode(buffer.getvalue()).decode("ascii"),
        }

    # -- pipeline -------------------------------------------------------

    def run_pipeline(self, trigger: str = "manual", wait: bool = True) -> PipelineRun:
        """Run the five retraining steps; raises if one is in flight."""
        if not self._pipeline_guard.acquire(blocking=False):
            raise PipelineBusyError("a pipeline run is already in progress")
        return self._launch_run(trigger, background=not wait)

    def _launch_run(self, trigger: str, background: bool) -> PipelineRun:
        # Caller must hold the pipeline guard; it is released when the run
        # finishes.
        with self._lock:
            run = PipelineRun(
                id=f"run_{len(self._runs) + 1:04d}",
                trigger=trigger,
                started_at=self._clock(),
            )
            self._runs[run.id] = run
            self._emit(
                "pipeline_started",
                {
                    "run_id": run.id,
                    "trigger": trigger,
                    "counter_after": self._labels_since_retrain,
                },
            )
        if background:
            thread = threading.Thread(
                target=self._execute_run, args=(run,), daemon=True
            )
            self._pipeline_threads.append(thread)
            thread.start()
            return run
        self._execute_run(run)
        return run

    def _execute_run(self, run: PipelineRun) -> None:
        try:
            inputs_hash = self._hash_inputs()
            context = {
                "run_id": run.id,
                "manifest_path": self.manifest_path,
                "seed": self.seed,
            }
            for step in PIPELINE_STEPS:
                try:
                    detail = self._pipeline_runner(step, context) or {}
                except Exception as err:
                    with self._lock:
                        result = StepResult(step, ok=False, detail={"error": str(err)})
                        run.steps.append(result)
                        run.status = "failed"
                        run.error = f"{step}: {err}"
                        run.inputs_hash = inputs_hash
                        run.finished_at = self._clock()
                        self._emit(
                            "pipeline_step",
                            {
                                "run_id": run.id,
                                "name": step,
                                "ok": False,
                                "detail": result.detail,
                            },
                        )
                        self._emit(
                            "pipeline_finished",
                            {
                                "run_id": run.id,
                                "status": "failed",
                                "candidate_version": None,
                                "inputs_hash": inputs_hash,
                                "error": run.error,
                            },
                        )
                    return
                with self._lock:
                    run.steps.append(StepResult(step, ok=True, detail=detail))
                    self._emit(
                        "pipeline_step",
                        {"run_id": run.id, "name": step, "ok": True, "detail": detail},
                    )
            entry = self.register_model(
                checkpoint_path=context.get("checkpoint_path", ""),
                manifest_hash=inputs_hash,
                metrics=context.get("metrics", {}),
            )
            with self._lock:
                run.status = "succeeded"
                run.candidate_version = entry.version
                run.inputs_hash = inputs_hash
                run.finished_at = self._clock()
                self._emit(
                    "pipeline_finished",
                    {
                        "run_id": run.id,
                        "status": "succeeded",
                        "candidate_version": entry.version,
                        "inputs_hash": inputs_hash,
                        "error": None,
                    },
                )
        finally:
            self._pipeline_guard.release()

    def _hash_inputs(self) -> str:
        hasher = hashlib.sha256()
        hasher.update(str(self.seed).encode("ascii"))
        if self.manifest_path.exists():
            hasher.update(self.manifest_path.read_bytes())
        return hasher.hexdigest()

    def get_run(self, run_id: str) -> PipelineRun:
        with self._lock:
            run = self._runs.get(run_id)
            if run is None:
                raise KeyError(run_id)
            return run

    def list_runs(self) -> list[PipelineRun]:
        with self._lock:
            return [self._runs[k] for k in sorted(self._runs)]

    def join_pipelines(self, timeout: float | None = None) -> None:
        """Wait for background runs; call before asserting on their output."""
        for thread in list(self._pipeline_threads):
            thread.join(timeout)
        self._pipeline_threads = [
            t for t in self._pipeline_threads if t.is_alive()
        ]
