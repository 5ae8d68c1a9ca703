"""Dataset engineering: labels, manifests, balancing, and the video split.

Videos are the unit of splitting. Images never cross the train/validation
boundary independently of their source video, which is what keeps frames
from one recording out of both sides.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetError

__all__ = [
    "RawLabel",
    "MergedLabel",
    "MERGED_ORDER",
    "merge_label",
    "merged_index",
    "VideoRecord",
    "read_manifest",
    "write_manifest",
    "merge_classes",
    "undersample",
    "split_by_video",
    "ImageSample",
    "ImageDataset",
    "assemble_image_dataset",
    "image_distribution",
    "FRAMES_PER_VIDEO",
]

FRAMES_PER_VIDEO = 30


class RawLabel(str, enum.Enum):
    """Operator ground truth as recorded in the field."""

    CLEAN = "clean"
    SLIGHTLY_DIRTY = "slightly_dirty"
    DIRTY = "dirty"
    VERY_DIRTY = "very_dirty"
    OBSTRUCTED = "obstructed"


class MergedLabel(str, enum.Enum):
    """Training classes, ordered by severity. Fully blocked pipes are
    folded into very_dirty: both need the same urgent response and the
    raw obstructed class is too rare to learn on its own."""

    CLEAN = "clean"
    SLIGHTLY_DIRTY = "slightly_dirty"
    DIRTY = "dirty"
    VERY_DIRTY = "very_dirty"


MERGED_ORDER = (
    MergedLabel.CLEAN,
    MergedLabel.SLIGHTLY_DIRTY,
    MergedLabel.DIRTY,
    MergedLabel.VERY_DIRTY,
)


def merge_label(raw: RawLabel) -> MergedLabel:
    if raw == RawLabel.OBSTRUCTED:
        return MergedLabel.VERY_DIRTY
    return MergedLabel(raw.value)


def merged_index(label: MergedLabel) -> int:
    return MERGED_ORDER.index(label)


@dataclass
class VideoRecord:
    """One inspection video: identity, frame location, and ground truth."""

    id: str
    frames_dir: str
    raw_label: RawLabel
    split: str | None = None
    seed: int | None = None

    @property
    def label(self) -> MergedLabel:
        return merge_label(self.raw_label)


def read_manifest(path) -> list[VideoRecord]:
    """Line-delimited JSON, one video per line."""
    records = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            doc = json.loads(line)
            records.append(
                VideoRecord(
                    id=str(doc["id"]),
                    frames_dir=str(doc["frames_dir"]),
                    raw_label=RawLabel(doc["raw_label"]),
                    split=doc.get("split"),
                    seed=doc.get("seed"),
                )
            )
        except (KeyError, ValueError) as exc:
            raise DatasetError(f"{path}:{lineno}: bad manifest record: {exc}") from exc
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise DatasetError(f"{path}: duplicate video ids")
    return records


def write_manifest(records: list[VideoRecord], path) -> None:
    lines = []
    for r in records:
        doc = {"id": r.id, "frames_dir": r.frames_dir, "raw_label": r.raw_label.value}
        if r.split is not None:
            doc["split"] = r.split
        if r.seed is not None:
            doc["seed"] = r.seed
        lines.append(json.dumps(doc, sort_keys=True))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def merge_classes(records: list[VideoRecord]) -> dict[MergedLabel, list[VideoRecord]]:
    """Group by merged label; total count is preserved by construction."""
    groups: dict[MergedLabel, list[VideoRecord]] = {label: [] for label in MERGED_ORDER}
    for record in records:
        groups[record.label].append(record)
    return groups


def undersample(records: list[VideoRecord], seed: int) -> list[VideoRecord]:
    """Uniformly downsample every class to the rarest class's count.

    Selection is a pure function of (record ids, seed): candidates are
    sorted by id before drawing, so input order cannot change the result.
    """
    groups = merge_classes(records)
    sizes = {label: len(members) for label, members in groups.items()}
    empty = [label.value for label, n in sizes.items() if n == 0]
    if empty:
        raise DatasetError(f"cannot balance: no videos for classes {empty}")
    floor = min(sizes.values())
    rng = np.random.default_rng(seed)
    kept: list[VideoRecord] = []
    for label in MERGED_ORDER:
        members = sorted(groups[label], key=lambda r: r.id)
        chosen = rng.choice(len(members), size=floor, replace=False)
        kept.extend(members[i] for i in sorted(chosen))
    return kept


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def split_by_video(
    records: list[VideoRecord],
    train_fraction: float = 0.7,
    seed: int = 0,
    rounding: str = "half_up",
) -> list[VideoRecord]:
    """Assign each video to train or validation, stratified by class.

    rounding="half_up" sizes each class's train count independently as
    round-half-up(fraction * n). rounding="largest_remainder" sizes the
    total train budget first and distributes the leftover units to the
    largest fractional remainders (ties fall to the severer class), which
    is how mixed 103/104 allocations arise from a uniform 148-per-class
    input. Both modes split whole videos only.
    """
    if not 0.0 < train_fraction <= 1.0:
        raise DatasetError(f"train_fraction must be in (0, 1], got {train_fraction}")
    if rounding not in ("half_up", "largest_remainder"):
        raise DatasetError(f"unknown rounding mode {rounding!r}")
    groups = merge_classes(records)
    if train_fraction < 1.0:
        thin = [l.value for l, members in groups.items() if 0 < len(members) < 2]
        if thin:
            raise DatasetError(f"classes with fewer than 2 videos cannot split: {thin}")

    sizes = [len(groups[label]) for label in MERGED_ORDER]
    if rounding == "half_up" or train_fraction == 1.0:
        train_counts = [_round_half_up(train_fraction * n) for n in sizes]
    else:
        budget = _round_half_up(train_fraction * sum(sizes))
        bases = [math.floor(train_fraction * n) for n in sizes]
        remainders = [train_fraction * n - b for n, b in zip(sizes, bases)]
        leftover = budget - sum(bases)
        # Ties fall to the higher class index: the severer classes keep
        # the extra training video.
        order = sorted(range(len(sizes)), key=lambda i: (remainders[i], i), reverse=True)
        train_counts = list(bases)
        for i in order[:leftover]:
            train_counts[i] += 1

    rng = np.random.default_rng(seed)
    out: list[VideoRecord] = []
    for label, want in zip(MERGED_ORDER, train_counts):
        members = sorted(groups[label], key=lambda r: r.id)
        if not members:
            continue
        if train_fraction < 1.0:
            # Keep both sides nonempty for any usable fraction.
            want = min(max(want, 1), len(members) - 1)
        perm = rng.permutation(len(members))
        chosen_train = {members[i].id for i in perm[:want]}
        for member in members:
            member.split = "train" if member.id in chosen_train else "validation"
            out.append(member)
    return out


@dataclass(frozen=True)
class ImageSample:
    video_id: str
    label_index: int
    path: str


@dataclass
class ImageDataset:
    """Frame-level view of a split manifest."""

    train: list[ImageSample] = field(default_factory=list)
    validation: list[ImageSample] = field(default_factory=list)

    def split(self, name: str) -> list[ImageSample]:
        if name == "train":
            return self.train
        if name == "validation":
            return self.validation
        raise KeyError(name)


def assemble_image_dataset(
    records: list[VideoRecord], frames_per_video: int = FRAMES_PER_VIDEO
) -> ImageDataset:
    """Expand split videos into per-frame samples.

    Every video contributes exactly its first `frames_per_video` frames
    in lexicographic order; a directory with fewer is an error. Frames
    inherit their video's split, which is what makes the split leak-free
    at the image level.
    """
    dataset = ImageDataset()
    for record in records:
        if record.split not in ("train", "validation"):
            raise DatasetError(f"video {record.id} has no split assignment")
        frame_dir = Path(record.frames_dir)
        files = sorted(
            p for p in frame_dir.iterdir()
            if p.is_file() and p.suffix.lower() in (".png", ".ppm")
        ) if frame_dir.is_dir() else []
        if len(files) < frames_per_video:
            raise DatasetError(
                f"video {record.id}: {len(files)} frames in {frame_dir}, "
                f"need {frames_per_video}"
            )
        samples = [
            ImageSample(record.id, merged_index(record.label), str(p))
            for p in files[:frames_per_video]
        ]
        dataset.split(record.split).extend(samples)
    return dataset


def image_distribution(
    records: list[VideoRecord], frames_per_video: int = FRAMES_PER_VIDEO
) -> dict[str, dict[str, int]]:
    """Expected per-class image counts per split: videos x frames."""
    out = {
        "train": {label.value: 0 for label in MERGED_ORDER},
        "validation": {label.value: 0 for label in MERGED_ORDER},
    }
    for record in records:
        if record.split not in out:
            raise DatasetError(f"video {record.id} has no split assignment")
        out[record.split][record.label.value] += frames_per_video
    return out
