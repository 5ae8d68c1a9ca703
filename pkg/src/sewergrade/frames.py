"""Frame pipeline: from a raw inspection recording to 30 clean tensors.

Sewer recordings hold the camera still for a few seconds and then zoom
toward the far end of the pipe. Only the still prefix is usable, so the
pipeline measures inter-frame motion, smooths it, finds where the zoom
begins, takes the first 30 frames before it, and preprocesses each one
to a 150x150x3 tensor scaled to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    FrameTooSmallError,
    MixedResolutionError,
    TooFewFramesError,
    UndecodableFrameError,
)

__all__ = [
    "FrameSequence",
    "MotionTrajectory",
    "StableSegment",
    "load_frames",
    "to_grayscale",
    "motion_signal",
    "smooth",
    "detect_stable_prefix",
    "select_frames",
    "preprocess",
    "bilinear_resize",
    "process_sequence",
]

MIN_FRAMES = 30
# Luma weights for grayscale conversion.
LUMA = np.array([0.299, 0.587, 0.114])
# Motion is measured on every 4th pixel in both axes; plenty for global
# zoom detection at a fraction of the cost.
MOTION_DECIMATION = 4

FRAME_SUFFIXES = (".png", ".ppm")


@dataclass
class FrameSequence:
    """Ordered 8-bit RGB frames sharing one resolution."""

    frames: np.ndarray  # (T, H, W, 3) uint8
    fps: float = 10.0
    names: tuple[str, ...] = ()

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def resolution(self) -> tuple[int, int]:
        return self.frames.shape[1], self.frames.shape[2]


@dataclass
class MotionTrajectory:
    """Raw and smoothed per-transition motion magnitudes."""

    raw: np.ndarray
    smoothed: np.ndarray
    window: int


@dataclass
class StableSegment:
    """Frame range [start, end) judged free of zoom motion."""

    start: int
    end: int
    onset: int | None = None
    low_confidence: bool = False

    def __len__(self) -> int:
        return self.end - self.start


def load_frames(directory, fps: float = 10.0, min_frames: int = MIN_FRAMES) -> FrameSequence:
    """Read PNG/PPM frames in lexicographic (= temporal) order."""
    directory = Path(directory)
    paths = sorted(
        p for p in directory.iterdir()
        if p.is_file() and p.suffix.lower() in FRAME_SUFFIXES
    )
    if len(paths) < min_frames:
        raise TooFewFramesError(
            f"{directory}: found {len(paths)} frames, need at least {min_frames}"
        )
    frames = []
    resolution = None
    for path in paths:
        try:
            with Image.open(path) as img:
                arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
        except (UnidentifiedImageError, OSError, SyntaxError) as exc:
            raise UndecodableFrameError(f"cannot decode {path}: {exc}") from exc
        if resolution is None:
            resolution = arr.shape[:2]
        elif arr.shape[:2] != resolution:
            raise MixedResolutionError(
                f"{path}: resolution {arr.shape[:2]} != first frame {resolution}"
            )
        frames.append(arr)
    return FrameSequence(
        frames=np.stack(frames), fps=fps, names=tuple(p.name for p in paths)
    )


def to_grayscale(frame: np.ndarray) -> np.ndarray:
    """Luma-weighted grayscale in float64, full [0, 255] scale."""
    return np.asarray(frame, dtype=np.float64) @ LUMA


def motion_signal(frames: np.ndarray | FrameSequence) -> np.ndarray:
    """Mean absolute grayscale difference between consecutive frames.

    Value t compares frames t and t+1 on a 4x-decimated grid, so the
    signal has length (frame count - 1).
    """
    if isinstance(frames, FrameSequence):
        frames = frames.frames
    frames = np.asarray(frames)
    if frames.shape[0] < 2:
        raise ValueError("motion signal needs at least 2 frames")
    small = frames[:, ::MOTION_DECIMATION, ::MOTION_DECIMATION, :]
    gray = small.astype(np.float64) @ LUMA
    return np.abs(np.diff(gray, axis=0)).mean(axis=(1, 2))


def smooth(signal: np.ndarray, window: int = 15) -> np.ndarray:
    """Centered moving average; edge windows shrink instead of padding."""
    signal = np.asarray(signal, dtype=np.float64)
    if window % 2 == 0 or window < 1:
        raise ValueError(f"window must be odd and positive, got {window}")
    if window > signal.shape[0]:
        raise ValueError(f"window {window} larger than signal {signal.shape[0]}")
    n = signal.shape[0]
    half = window // 2
    csum = np.concatenate(([0.0], np.cumsum(signal)))
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, n)
    return (csum[hi] - csum[lo]) / (hi - lo)


def detect_stable_prefix(
    smoothed: np.ndarray,
    threshold_ratio: float = 1.5,
    persistence: int = 5,
    baseline_len: int = 30,
) -> StableSegment:
    """Find the frame range before the zoom begins.

    The threshold is relative — threshold_ratio times the median of the
    first baseline_len samples — because absolute motion scale varies
    wildly between recordings. The onset is the first index at which the
    signal has stayed above threshold for `persistence` consecutive
    samples; the persistence lag deliberately offsets the centered
    smoothing window's look-ahead, which is what keeps detection within
    a few samples of the true zoom start.

    Degenerate inputs never raise: a signal too short to baseline, or an
    onset inside the first 30 frames, falls back to [0, 30) with the
    low-confidence flag set.
    """
    smoothed = np.asarray(smoothed, dtype=np.float64)
    n = smoothed.shape[0]
    if n < baseline_len:
        # Too short to establish a baseline; take everything, flag it.
        return StableSegment(start=0, end=n + 1, onset=None, low_confidence=True)
    threshold = threshold_ratio * float(np.median(smoothed[:baseline_len]))
    above = smoothed > threshold
    run = 0
    onset = None
    for i, flag in enumerate(above):
        run = run + 1 if flag else 0
        if run >= persistence:
            onset = i
            break
    if onset is None:
        return StableSegment(start=0, end=n + 1, onset=None, low_confidence=False)
    if onset < MIN_FRAMES:
        return StableSegment(start=0, end=MIN_FRAMES, onset=onset, low_confidence=True)
    return StableSegment(start=0, end=onset, onset=onset, low_confidence=False)


def select_frames(sequence: FrameSequence, segment: StableSegment) -> np.ndarray:
    """Exactly the first 30 consecutive frames of the segment, never more,
    never fewer, never a variable count."""
    if segment.start < 0 or segment.end > len(sequence):
        raise ValueError(
            f"segment [{segment.start}, {segment.end}) outside sequence of {len(sequence)}"
        )
    if len(segment) < MIN_FRAMES:
        raise ValueError(f"segment holds {len(segment)} frames, need {MIN_FRAMES}")
    return sequence.frames[segment.start : segment.start + MIN_FRAMES]


def bilinear_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bilinear resampling in float64.

    Interpolation uses the v0 + f*(v1-v0) form, so constant images stay
    bit-exactly constant.
    """
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[:2]

    def axis_coords(src: int, dst: int):
        # Pixel centers: output center maps into source coordinates.
        pos = (np.arange(dst) + 0.5) * (src / dst) - 0.5
        pos = np.clip(pos, 0.0, src - 1.0)
        i0 = np.floor(pos).astype(np.intp)
        i1 = np.minimum(i0 + 1, src - 1)
        return i0, i1, pos - i0

    y0, y1, fy = axis_coords(h, out_h)
    x0, x1, fx = axis_coords(w, out_w)

    rows = image[y0] + fy[:, None, None] * (image[y1] - image[y0])
    out = rows[:, x0] + fx[None, :, None] * (rows[:, x1] - rows[:, x0])
    return out


# Geometry constants for preprocessing: raw 360x640 frames carry an
# 80-column black border on each side; the content region is 360x480.
BORDERED_RESOLUTION = (360, 640)
CONTENT_RESOLUTION = (360, 480)
BORDER_COLUMNS = 80
TARGET_SIDE = 150


def preprocess(frame: np.ndarray) -> np.ndarray:
    """One raw frame to a 150x150x3 float32 tensor in [0, 1].

    (a) 360x640 frames lose the 80-column border on each side;
    (b) anything larger than 360x480 is central-cropped to 360x480;
    (c) bilinear resize to 150x150; (d) scale by 1/255.
    """
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise FrameTooSmallError(f"expected an RGB frame, got shape {frame.shape}")
    h, w = frame.shape[:2]
    if (h, w) == BORDERED_RESOLUTION:
        frame = frame[:, BORDER_COLUMNS : w - BORDER_COLUMNS, :]
        h, w = frame.shape[:2]
    ch, cw = CONTENT_RESOLUTION
    if h < ch or w < cw:
        raise FrameTooSmallError(
            f"frame {h}x{w} smaller than required content region {ch}x{cw}"
        )
    if (h, w) != (ch, cw):
        top = (h - ch) // 2
        left = (w - cw) // 2
        frame = frame[top : top + ch, left : left + cw, :]
    out = bilinear_resize(frame, TARGET_SIDE, TARGET_SIDE) / 255.0
    return out.astype(np.float32)


def process_sequence(
    sequence: FrameSequence, window: int = 15
) -> tuple[np.ndarray, StableSegment, MotionTrajectory]:
    """Full pipeline for one video: (30, 150, 150, 3) tensors in [0, 1],
    plus the segment and trajectory that produced them."""
    raw = motion_signal(sequence)
    window = min(window, len(raw) if len(raw) % 2 else len(raw) - 1)
    smoothed = smooth(raw, window)
    segment = detect_stable_prefix(smoothed)
    if segment.end > len(sequence):
        segment = StableSegment(
            segment.start, len(sequence), segment.onset, segment.low_confidence
        )
    selected = select_frames(sequence, segment)
    tensors = np.stack([preprocess(f) for f in selected])
    return tensors, segment, MotionTrajectory(raw=raw, smoothed=smoothed, window=window)
