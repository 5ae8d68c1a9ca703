"""Vote-based video classification, confusion matrices, and the HTML report.

The headline numbers from the original full-scale corpus are kept here as
reference constants; that corpus is private, so they are context for the
report reader, not a target the local metrics are asserted against.
"""

from __future__ import annotations

import base64
import html
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import CLASS_NAMES, NUM_CLASSES, Prediction

__all__ = [
    "REFERENCE_IMAGE_ACCURACY",
    "REFERENCE_VIDEO_ACCURACY",
    "REFERENCE_NEIGHBOR_RATE",
    "VideoPrediction",
    "ConfusionMatrix",
    "MetricSummary",
    "ImageEvaluation",
    "classify_video",
    "confusion_matrix",
    "accuracy_metrics",
    "evaluation_report",
]

# Historical reference values measured on the full-scale private corpus.
REFERENCE_IMAGE_ACCURACY = 0.537
REFERENCE_VIDEO_ACCURACY = 0.557
REFERENCE_NEIGHBOR_RATE = 0.347


@dataclass(frozen=True)
class VideoPrediction:
    """One video's verdict from voting over its frame predictions."""

    video_id: str
    tally: tuple[int, ...]
    class_index: int
    class_name: str
    tie: bool
    confidence: float


@dataclass(frozen=True)
class ConfusionMatrix:
    """Row = ground truth, column = prediction."""

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def normalized(self) -> np.ndarray:
        """Rows scaled to sum to 1; empty rows stay all-zero."""
        sums = self.counts.sum(axis=1, keepdims=True)
        safe = np.where(sums == 0, 1, sums)
        return self.counts / safe

    @property
    def empty_rows(self) -> tuple[bool, ...]:
        return tuple(bool(s == 0) for s in self.counts.sum(axis=1))


@dataclass(frozen=True)
class MetricSummary:
    """Fractions of exact, off-by-one, and worse predictions.

    ``severe_rate`` is computed by subtraction so the three fields sum to
    exactly 1.0 in float arithmetic.
    """

    accuracy: float
    neighbor_rate: float
    severe_rate: float


def classify_video(
    video_id: str, frame_predictions: Sequence[Prediction]
) -> VideoPrediction:
    """Majority vote over frames; ties go to the dirtier class."""
    if not frame_predictions:
        raise ValueError(f"video {video_id!r} has no frame predictions to vote on")
    tally = [0] * NUM_CLASSES
    for pred in frame_predictions:
        tally[pred.class_index] += 1
    top = max(tally)
    winners = [i for i, count in enumerate(tally) if count == top]
    winner = winners[-1]
    confidences = [
        p.confidence for p in frame_predictions if p.class_index == winner
    ]
    return VideoPrediction(
        video_id=video_id,
        tally=tuple(tally),
        class_index=winner,
        class_name=CLASS_NAMES[winner],
        tie=len(winners) > 1,
        confidence=float(np.mean(confidences)),
    )


def confusion_matrix(pairs: Sequence[tuple[int, int]]) -> ConfusionMatrix:
    counts = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    for truth, predicted in pairs:
        if not (0 <= truth < NUM_CLASSES and 0 <= predicted < NUM_CLASSES):
            raise ValueError(f"label pair ({truth}, {predicted}) out of range")
        counts[truth, predicted] += 1
    return ConfusionMatrix(counts=counts)


def accuracy_metrics(matrix: ConfusionMatrix) -> MetricSummary:
    counts = matrix.counts
    total = counts.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    rows, cols = np.indices(counts.shape)
    distance = np.abs(rows - cols)
    accuracy = float(counts[distance == 0].sum() / total)
    neighbor = float(counts[distance == 1].sum() / total)
    # subtracting the rounded sum keeps accuracy + neighbor + severe == 1.0
    # exactly in float arithmetic
    return MetricSummary(
        accuracy=accuracy,
        neighbor_rate=neighbor,
        severe_rate=1.0 - (accuracy + neighbor),
    )


@dataclass(frozen=True)
class ImageEvaluation:
    """One frame's outcome, with an optional path for report sampling."""

    video_id: str
    truth: int
    prediction: Prediction
    path: str | None = None


@dataclass(frozen=True)
class EvaluationSummary:
    image_metrics: MetricSummary
    video_metrics: MetricSummary
    image_matrix: ConfusionMatrix
    video_matrix: ConfusionMatrix
    report_path: Path


def _matrix_table(matrix: ConfusionMatrix, caption: str) -> str:
    normalized = matrix.normalized
    head = "".join(f"<th>{html.escape(name)}</th>" for name in CLASS_NAMES)
    rows = []
    for i, name in enumerate(CLASS_NAMES):
        cells = "".join(
            f"<td>{normalized[i, j]:.3f}<br><small>{int(matrix.counts[i, j])}</small></td>"
            for j in range(NUM_CLASSES)
        )
        rows.append(f"<tr><th>{html.escape(name)}</th>{cells}</tr>")
    return (
        f"<table class='confusion'><caption>{html.escape(caption)}</caption>"
        f"<tr><th>truth \\ predicted</th>{head}</tr>{''.join(rows)}</table>"
    )


def _metric_rows(label: str, metrics: MetricSummary) -> str:
    return (
        f"<tr><th>{html.escape(label)}</th>"
        f"<td>{metrics.accuracy:.4f}</td>"
        f"<td>{metrics.neighbor_rate:.4f}</td>"
        f"<td>{metrics.severe_rate:.4f}</td></tr>"
    )


def _embed_png(path: str) -> str | None:
    try:
        data = Path(path).read_bytes()
    except OSError:
        return None
    return base64.b64encode(data).decode("ascii")


def _sample_gallery(
    images: Sequence[ImageEvaluation], per_class: int, rng: np.random.Generator
) -> str:
    sections = []
    for class_index, name in enumerate(CLASS_NAMES):
        candidates = [
            ev for ev in images if ev.truth == class_index and ev.path is not None
        ]
        take = min(per_class, len(candidates))
        chosen = (
            [candidates[i] for i in rng.choice(len(candidates), take, replace=False)]
            if take
            else []
        )
        cards = []
        for ev in chosen:
            encoded = _embed_png(ev.path)
            if encoded is None:
                continue
            cards.append(
                "<figure>"
                f"<img src='data:image/png;base64,{encoded}' width='150' height='150'>"
                f"<figcaption>true: {CLASS_NAMES[ev.truth]}<br>"
                f"predicted: {ev.prediction.class_name} "
                f"({ev.prediction.confidence:.2f})</figcaption></figure>"
            )
        sections.append(
            f"<h3>{html.escape(name)}</h3><div class='gallery'>{''.join(cards)}</div>"
        )
    return "".join(sections)


def evaluation_report(
    images: Sequence[ImageEvaluation],
    videos: Sequence[tuple[int, VideoPrediction]],
    out_path,
    samples_per_class: int = 3,
    seed: int = 0,
) -> EvaluationSummary:
    """Write a self-contained HTML review document and return the metrics."""
    if not images or not videos:
        raise ValueError("need at least one image and one video evaluation")
    image_matrix = confusion_matrix(
        [(ev.truth, ev.prediction.class_index) for ev in images]
    )
    video_matrix = confusion_matrix(
        [(truth, vp.class_index) for truth, vp in videos]
    )
    image_metrics = accuracy_metrics(image_matrix)
    video_metrics = accuracy_metrics(video_matrix)

    gallery = _sample_gallery(images, samples_per_class, np.random.default_rng(seed))
    metrics_json = json.dumps(
        {
            "image": image_metrics.__dict__,
            "video": video_metrics.__dict__,
            "counts": {"images": len(images), "videos": len(videos)},
        },
        indent=1,
    )
    document = f"""<!DOCTYPE html>
<html><head><meta charset="utf-8"><title>Obstruction grading report</title>
<style>
body {{ font-family: sans-serif; margin: 2em; }}
table.confusion {{ border-collapse: collapse; margin: 1em 0; }}
table.confusion td, table.confusion th {{ border: 1px solid #999; padding: 4px 10px; text-align: center; }}
.gallery {{ display: flex; gap: 1em; flex-wrap: wrap; }}
figure {{ margin: 0; text-align: center; font-size: 0.8em; }}
</style></head><body>
<h1>Obstruction grading report</h1>
<h2>Metrics</h2>
<table class="confusion">
<tr><th>scope</th><th>accuracy</th><th>neighbor</th><th>severe</th></tr>
{_metric_rows("image-wise", image_metrics)}
{_metric_rows("video-wise", video_metrics)}
<tr><th>reference (full corpus)</th><td>{REFERENCE_IMAGE_ACCURACY:.3f} image / {REFERENCE_VIDEO_ACCURACY:.3f} video</td><td>{REFERENCE_NEIGHBOR_RATE:.3f}</td><td>-</td></tr>
</table>
<p>Reference row: historical values from the original full-scale corpus,
shown for context only.</p>
<h2 id="image-matrix">Image-wise confusion</h2>
{_matrix_table(image_matrix, "image-wise, row-normalized")}
<h2 id="video-matrix">Video-wise confusion</h2>
{_matrix_table(video_matrix, "video-wise, row-normalized")}
<h2>Sampled frames</h2>
{gallery}
<script type="application/json" id="metrics">{metrics_json}</script>
</body></html>
"""
    out_path = Path(out_path)
    out_path.write_text(document, encoding="utf-8")
    return EvaluationSummary(
        image_metrics=image_metrics,
        video_metrics=video_metrics,
        image_matrix=image_matrix,
        video_matrix=video_matrix,
        report_path=out_path,
    )
