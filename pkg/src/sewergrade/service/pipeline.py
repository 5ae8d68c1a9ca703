"""Default retraining pipeline over the service's ingestion manifest.

Each stage is a method; the service invokes them one at a time, in the
fixed order, through ``__call__``. A stage communicates with later ones
via instance scratch (the upstream guard guarantees one run at a time)
and hands results back to the service by mutating the shared context
dict ("checkpoint_path", "metrics").
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ..checkpoint import save_checkpoint
from ..dataset import (
    VideoRecord,
    assemble_image_dataset,
    read_manifest,
    split_by_video,
    undersample,
)
from ..errors import DatasetError, ServiceError
from ..evaluation import ImageEvaluation, classify_video, evaluation_report
from ..frames import load_frames, process_sequence
from ..model import build_sewernet, predict_batch
from ..training import TrainConfig, load_image_arrays, train

__all__ = ["PipelineConfig", "DefaultPipelineRunner"]


@dataclass(frozen=True)
class PipelineConfig:
    train_fraction: float = 0.7
    rounding: str = "largest_remainder"
    # The library-wide TrainConfig default is deliberately conservative;
    # a retraining run needs a rate that moves in a bounded epoch budget.
    train: TrainConfig = TrainConfig(
        learning_rate=1e-3, batch_size=32, epochs=10, patience=3
    )


class DefaultPipelineRunner:
    def __init__(
        self, state_dir, seed: int = 0, config: PipelineConfig | None = None
    ):
        self.state_dir = Path(state_dir)
        self.seed = seed
        self.config = config or PipelineConfig()
        self._scratch: dict = {}

    def __call__(self, step: str, context: dict) -> dict:
        handlers = {
            "dataset_balancing_split": self._balance_and_split,
            "stabilization_frame_selection": self._find_stable_frames,
            "frame_resizing": self._materialize_frames,
            "model_training": self._train_model,
            "model_evaluation": self._evaluate_model,
        }
        if step not in handlers:
            raise ServiceError(f"unknown pipeline step {step!r}")
        return handlers[step](context)

    def _balance_and_split(self, context: dict) -> dict:
        manifest_path = Path(context["manifest_path"])
        if not manifest_path.exists():
            raise DatasetError(
                "ingestion manifest is empty; label some inspections first"
            )
        records = read_manifest(manifest_path)
        if not records:
            raise DatasetError(
                "ingestion manifest is empty; label some inspections first"
            )
        balanced = undersample(records, self.seed)
        split = split_by_video(
            balanced,
            train_fraction=self.config.train_fraction,
            seed=self.seed,
            rounding=self.config.rounding,
        )
        self._scratch = {"records": split}
        train_count = sum(1 for r in split if r.split == "train")
        return {
            "labeled_videos": len(records),
            "balanced_videos": len(split),
            "train_videos": train_count,
            "validation_videos": len(split) - train_count,
        }

    def _find_stable_frames(self, context: dict) -> dict:
        """Pick each video's stable-prefix frames and turn them into
        network-ready tensors; the next stage writes them out."""
        records = self._scratch["records"]
        tensors: dict[str, np.ndarray] = {}
        low_confidence = 0
        for record in records:
            stack, segment, _ = process_sequence(load_frames(record.frames_dir))
            tensors[record.id] = stack
            low_confidence += int(segment.low_confidence)
        self._scratch["tensors"] = tensors
        return {"videos": len(tensors), "low_confidence": low_confidence}

    def _materialize_frames(self, context: dict) -> dict:
        records = self._scratch["records"]
        tensors = self._scratch.pop("tensors")
        base = self.state_dir / "runs" / context["run_id"] / "frames"
        processed: list[VideoRecord] = []
        written = 0
        for record in records:
            out_dir = base / record.id
            out_dir.mkdir(parents=True, exist_ok=True)
            stack = tensors.pop(record.id)
            for i in range(stack.shape[0]):
                frame = np.clip(np.rint(stack[i] * 255.0), 0, 255).astype(np.uint8)
                Image.fromarray(frame).save(out_dir / f"frame_{i:03d}.png")
                written += 1
            processed.append(
                VideoRecord(
                    id=record.id,
                    frames_dir=str(out_dir),
                    raw_label=record.raw_label,
                    split=record.split,
                )
            )
        self._scratch["records"] = processed
        return {"images": written, "output_dir": str(base)}

    def _train_model(self, context: dict) -> dict:
        dataset = assemble_image_dataset(self._scratch["records"])
        train_samples = dataset.split("train")
        val_samples = dataset.split("validation")
        train_x, train_y = load_image_arrays(train_samples)
        val_x, val_y = load_image_arrays(val_samples)
        network = build_sewernet(self.seed)
        checkpoint, report = train(
            network, train_x, train_y, val_x, val_y, self.config.train
        )
        out_path = self.state_dir / "models" / f"{context['run_id']}.swnt"
        out_path.parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(checkpoint, out_path, metadata={"run_id": context["run_id"]})
        context["checkpoint_path"] = str(out_path)
        # The validation arrays and the trained network feed the final stage.
        self._scratch.update(
            network=network, val_samples=val_samples, val_arrays=(val_x, val_y)
        )
        return {
            "train_images": int(train_x.shape[0]),
            "validation_images": int(val_x.shape[0]),
            "epochs_run": report.epochs_run,
            "best_epoch": report.best_epoch,
            "best_val_accuracy": report.best_val_accuracy,
            "checkpoint": str(out_path),
        }

    def _evaluate_model(self, context: dict) -> dict:
        network = self._scratch["network"]
        val_samples = self._scratch["val_samples"]
        val_x, val_y = self._scratch["val_arrays"]
        predictions = predict_batch(network, val_x)
        images = [
            ImageEvaluation(
                video_id=s.video_id, truth=int(y), prediction=p, path=s.path
            )
            for s, y, p in zip(val_samples, val_y, predictions)
        ]
        by_video: dict[str, list[int]] = {}
        for i, sample in enumerate(val_samples):
            by_video.setdefault(sample.video_id, []).append(i)
        videos = []
        for video_id in sorted(by_video):
            indices = by_video[video_id]
            vote = classify_video(video_id, [predictions[i] for i in indices])
            videos.append((int(val_y[indices[0]]), vote))
        report_path = self.state_dir / "reports" / f"{context['run_id']}.html"
        report_path.parent.mkdir(parents=True, exist_ok=True)
        summary = evaluation_report(images, videos, report_path, seed=self.seed)
        context["metrics"] = {
            "image_accuracy": summary.image_metrics.accuracy,
            "video_accuracy": summary.video_metrics.accuracy,
            "image_neighbor_rate": summary.image_metrics.neighbor_rate,
            "video_neighbor_rate": summary.video_metrics.neighbor_rate,
        }
        self._scratch = {}
        return {"report": str(report_path), **context["metrics"]}
