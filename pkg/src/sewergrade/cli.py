"""Command-line entry points for the grading toolkit.

Every option can also come from an environment variable with the
SEWERGRADE_<COMMAND>_<OPTION> naming scheme; explicit flags win.
"""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path

import click
import numpy as np
from PIL import Image

from .checkpoint import load_checkpoint, save_checkpoint
from .dataset import (
    assemble_image_dataset,
    read_manifest,
    split_by_video,
    undersample,
    write_manifest,
)
from .evaluation import ImageEvaluation, classify_video, evaluation_report
from .frames import load_frames, process_sequence
from .lrp import RULE_EPSILON, RULE_ZERO, explain_video, render_heatmap
from .model import build_sewernet, predict_batch
from .synthetic import generate_dataset
from .training import TrainConfig, load_image_arrays, train


@click.group()
def cli():
    """Grade sewer obstructions from CCTV frame sequences."""


def _to_png(tensor: np.ndarray) -> Image.Image:
    return Image.fromarray(
        np.clip(np.rint(tensor * 255.0), 0, 255).astype(np.uint8)
    )


@cli.command("extract-frames")
@click.option(
    "--in",
    "in_dir",
    required=True,
    type=click.Path(exists=True, file_okay=False),
    help="Directory of raw video frames (PNG or PPM, name order = time).",
)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--window", default=15, show_default=True, help="Smoothing window.")
@click.option("--fps", default=10.0, show_default=True, help="Capture rate.")
def extract_frames(in_dir, out_dir, window, fps):
    """Select a video's stable frames and write network-ready 150x150 PNGs."""
    sequence = load_frames(in_dir, fps=fps)
    tensors, segment, trajectory = process_sequence(sequence, window=window)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, tensor in enumerate(tensors):
        _to_png(tensor).save(out / f"frame_{i:03d}.png")
    sidecar = {
        "source": str(in_dir),
        "frames": int(tensors.shape[0]),
        "segment": {
            "start": segment.start,
            "end": segment.end,
            "onset": segment.onset,
            "low_confidence": segment.low_confidence,
        },
        "window": trajectory.window,
    }
    (out / "selection.json").write_text(json.dumps(sidecar, indent=2) + "\n")
    flag = " (low confidence)" if segment.low_confidence else ""
    click.echo(f"wrote {tensors.shape[0]} frames to {out}{flag}")


@cli.command("prepare-dataset")
@click.option(
    "--manifest", required=True, type=click.Path(exists=True, dir_okay=False)
)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--train-fraction", default=0.7, show_default=True)
@click.option(
    "--rounding",
    type=click.Choice(["half_up", "largest_remainder"]),
    default="half_up",
    show_default=True,
)
def prepare_dataset(manifest, seed, out_dir, train_fraction, rounding):
    """Balance classes and assign a leak-free video-level split."""
    records = read_manifest(manifest)
    balanced = undersample(records, seed)
    split = split_by_video(
        balanced, train_fraction=train_fraction, seed=seed, rounding=rounding
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    split_path = out / "split_manifest.jsonl"
    write_manifest(split, split_path)
    train_count = sum(1 for r in split if r.split == "train")
    click.echo(f"{len(records)} videos in, {len(split)} kept after balancing")
    click.echo(
        f"train {train_count} / validation {len(split) - train_count}"
        f" -> {split_path}"
    )


@cli.command("synth")
@click.option("--classes", default=4, show_default=True, type=click.IntRange(1, 4))
@click.option("--videos-per-class", required=True, type=click.IntRange(min=1))
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def synth(classes, videos_per_class, seed, out_dir):
    """Render a seeded synthetic inspection corpus with ground truth."""
    records, manifest = generate_dataset(
        out_dir, videos_per_class, seed, classes=classes
    )
    click.echo(f"rendered {len(records)} videos, manifest at {manifest}")


def _nan_to_none(value: float):
    return None if isinstance(value, float) and math.isnan(value) else value


@cli.command("train")
@click.option(
    "--manifest", required=True, type=click.Path(exists=True, dir_okay=False)
)
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="JSON with TrainConfig fields; omitted fields keep defaults.",
)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def train_command(manifest, config_path, out_path):
    """Fit the grader on a split manifest and write the checkpoint."""
    overrides = json.loads(Path(config_path).read_text()) if config_path else {}
    try:
        config = TrainConfig(**overrides)
    except TypeError as err:
        raise click.ClickException(f"bad training config: {err}") from err
    dataset = assemble_image_dataset(read_manifest(manifest))
    train_x, train_y = load_image_arrays(dataset.train)
    val_x = val_y = None
    if dataset.validation:
        val_x, val_y = load_image_arrays(dataset.validation)
    network = build_sewernet(config.seed)
    checkpoint, report = train(network, train_x, train_y, val_x, val_y, config)
    save_checkpoint(checkpoint, out_path)
    report_doc = {
        "epochs_run": report.epochs_run,
        "best_epoch": report.best_epoch,
        "best_val_accuracy": _nan_to_none(report.best_val_accuracy),
        "stopped_early": report.stopped_early,
        "wall_seconds": report.wall_seconds,
        "history": [
            {k: _nan_to_none(v) for k, v in dataclasses.asdict(stats).items()}
            for stats in report.history
        ],
    }
    report_path = Path(out_path).with_suffix(".report.json")
    report_path.write_text(json.dumps(report_doc, indent=2) + "\n")
    click.echo(
        f"trained {report.epochs_run} epochs"
        f" (best epoch {report.best_epoch}) -> {out_path}"
    )
    click.echo(f"report -> {report_path}")


@cli.command("explain")
@click.option("--ckpt", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--frames",
    "frames_dir",
    required=True,
    type=click.Path(exists=True, file_okay=False),
    help="Directory of 150x150 PNGs, e.g. the output of extract-frames.",
)
@click.option("--class", "target_class", required=True, type=click.IntRange(0, 3))
@click.option(
    "--rule",
    type=click.Choice([RULE_ZERO, RULE_EPSILON]),
    default=RULE_ZERO,
    show_default=True,
)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def explain(ckpt, frames_dir, target_class, rule, out_dir):
    """Write per-frame relevance heatmaps plus a relevance ledger."""
    network, _ = load_checkpoint(ckpt)
    paths = sorted(Path(frames_dir).glob("*.png"))
    if not paths:
        raise click.ClickException(f"no PNG frames in {frames_dir}")
    stack = np.stack(
        [
            np.asarray(Image.open(p).convert("RGB"), dtype=np.float32) / 255.0
            for p in paths
        ]
    )
    if stack.shape[1:] != (150, 150, 3):
        raise click.ClickException(
            f"frames must be 150x150 RGB, got {stack.shape[1:]}"
        )
    explanation = explain_video(network, stack, target_class, rule=rule)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for path, rmap in zip(paths, explanation.maps):
        Image.fromarray(render_heatmap(rmap)).save(out / f"{path.stem}_heat.png")
    Image.fromarray(render_heatmap(explanation.mean)).save(out / "mean_heat.png")
    ledger = {
        "target_class": target_class,
        "rule": rule,
        "frames": [
            {
                "frame": path.name,
                "score": rmap.score,
                "input_sum": rmap.input_sum,
                "absorbed": rmap.absorbed,
            }
            for path, rmap in zip(paths, explanation.maps)
        ],
    }
    (out / "relevance.json").write_text(json.dumps(ledger, indent=2) + "\n")
    click.echo(f"explained {len(paths)} frames -> {out}")


@cli.command("evaluate")
@click.option("--ckpt", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--manifest", required=True, type=click.Path(exists=True, dir_okay=False)
)
@click.option("--out", "out_html", default="report.html", show_default=True)
@click.option("--json", "out_json", default=None, help="Also write metrics JSON.")
@click.option(
    "--split",
    "split_name",
    type=click.Choice(["train", "validation"]),
    default="validation",
    show_default=True,
)
def evaluate_command(ckpt, manifest, out_html, out_json, split_name):
    """Score a checkpoint on one split and write the review report."""
    network, _ = load_checkpoint(ckpt)
    dataset = assemble_image_dataset(read_manifest(manifest))
    samples = dataset.split(split_name)
    if not samples:
        raise click.ClickException(f"manifest has no {split_name} samples")
    images, labels = load_image_arrays(samples)
    predictions = predict_batch(network, images)
    evaluations = [
        ImageEvaluation(video_id=s.video_id, truth=int(y), prediction=p, path=s.path)
        for s, y, p in zip(samples, labels, predictions)
    ]
    by_video: dict[str, list[int]] = {}
    for i, sample in enumerate(samples):
        by_video.setdefault(sample.video_id, []).append(i)
    videos = []
    for video_id in sorted(by_video):
        indices = by_video[video_id]
        vote = classify_video(video_id, [predictions[i] for i in indices])
        videos.append((int(labels[indices[0]]), vote))
    summary = evaluation_report(evaluations, videos, out_html)
    metrics = {
        "image": dataclasses.asdict(summary.image_metrics),
        "video": dataclasses.asdict(summary.video_metrics),
        "images": len(evaluations),
        "videos": len(videos),
    }
    if out_json:
        Path(out_json).write_text(json.dumps(metrics, indent=2) + "\n")
    click.echo(
        f"image accuracy {summary.image_metrics.accuracy:.3f}, "
        f"video accuracy {summary.video_metrics.accuracy:.3f}"
    )
    click.echo(f"report -> {summary.report_path}")


@cli.command("serve")
@click.option("--state", "state_dir", required=True, type=click.Path(file_okay=False))
@click.option(
    "--rules",
    "rules_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="JSON with TriageRules fields.",
)
@click.option("--port", default=8000, show_default=True, type=click.IntRange(1, 65535))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--retrain-threshold", default=40, show_default=True, type=int)
@click.option("--frames-per-classification", default=10, show_default=True, type=int)
def serve(
    state_dir,
    rules_path,
    port,
    host,
    seed,
    retrain_threshold,
    frames_per_classification,
):
    """Run the triage HTTP service."""
    import uvicorn

    from .service import TriageRules, TriageService
    from .service.api import create_app

    rules = TriageRules()
    if rules_path:
        try:
            rules = TriageRules(**json.loads(Path(rules_path).read_text()))
        except TypeError as err:
            raise click.ClickException(f"bad rules file: {err}") from err
    service = TriageService(
        state_dir,
        rules=rules,
        frames_per_classification=frames_per_classification,
        retrain_threshold=retrain_threshold,
        seed=seed,
    )
    app = create_app(service)
    click.echo(f"triage service on {host}:{port}, state in {state_dir}")
    uvicorn.run(app, host=host, port=port)


def main():
    cli(auto_envvar_prefix="SEWERGRADE")


if __name__ == "__main__":
    main()
