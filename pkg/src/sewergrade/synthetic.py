"""Procedural inspection footage for pipeline tests and desk-scale training.

Each video shows the inside of a pipe: concentric joint rings shrinking
toward a vanishing point, a darker drainage canal along the bottom, and,
for the dirtier classes, a sediment blob occluding part of that canal.
The clip holds still for a prefix and then zooms, which gives the frame
pipeline a realistic onset to detect. Everything is a pure function of
the spec's seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .dataset import RawLabel, VideoRecord, write_manifest
from .errors import DatasetError

__all__ = [
    "FILL_RANGES",
    "SyntheticSpec",
    "SyntheticVideo",
    "render_video",
    "write_video",
    "generate_dataset",
]

# Obstruction area as a fraction of canal area, per class level. The
# ranges are disjoint and increase with severity so neighbor classes stay
# geometrically adjacent the way real obstruction levels are.
FILL_RANGES: tuple[tuple[float, float], ...] = (
    (0.0, 0.02),
    (0.05, 0.15),
    (0.2, 0.4),
    (0.45, 0.8),
)

FRAME_HEIGHT = 360
FRAME_WIDTH = 640
BORDER = 80  # black columns on each side; content spans [80, 560)


@dataclass(frozen=True)
class SyntheticSpec:
    """Everything that determines one rendered video."""

    class_level: int
    seed: int
    total_frames: int = 65
    static_frames: int = 40
    zoom_rate: float = 0.025
    ring_count: int = 8
    noise_amplitude: float = 1.2
    illumination_slope: float = 0.25
    rain: bool = False
    fill_ranges: tuple[tuple[float, float], ...] = FILL_RANGES

    def __post_init__(self):
        if not 0 <= self.class_level <= 3:
            raise DatasetError(f"class level must be 0..3, got {self.class_level}")
        if self.total_frames < 60:
            raise DatasetError(f"need at least 60 frames, got {self.total_frames}")
        if not 30 <= self.static_frames < self.total_frames:
            raise DatasetError(
                f"static prefix {self.static_frames} must cover the 30-frame "
                f"selection and end before frame {self.total_frames}"
            )
        lo_prev, hi_prev = -1.0, -1.0
        for lo, hi in self.fill_ranges:
            if not (0.0 <= lo <= hi <= 1.0) or lo < hi_prev:
                raise DatasetError(f"fill ranges must be disjoint and increasing: {self.fill_ranges}")
            lo_prev, hi_prev = lo, hi


@dataclass
class SyntheticVideo:
    """Rendered frames plus the ground truth the tests need."""

    frames: np.ndarray  # (T, 360, 640, 3) uint8
    raw_label: RawLabel
    class_level: int
    fill_fraction: float  # measured |blob ∩ canal| / |canal| at zoom 1
    first_zoom_frame: int
    onset_signal_index: int  # first motion-signal sample the zoom affects
    canal_mask: np.ndarray = field(repr=False)  # content-region bools, zoom 1
    obstruction_mask: np.ndarray = field(repr=False)


class _Scene:
    """Geometry and shading for one video, evaluated at any zoom factor."""

    def __init__(self, spec: SyntheticSpec, rng: np.random.Generator):
        self.spec = spec
        h, w = FRAME_HEIGHT, FRAME_WIDTH - 2 * BORDER
        self.h, self.w = h, w
        self.cy = 0.45 * h + rng.uniform(-8, 8)
        self.cx = 0.5 * w + rng.uniform(-10, 10)
        yy, xx = np.mgrid[0:h, 0:w]
        self.dy = yy - self.cy
        self.dx = xx - self.cx
        # Ring radii walk inward geometrically toward the vanishing point.
        base = 0.62 * w * (1 + rng.uniform(-0.05, 0.05))
        step = rng.uniform(0.66, 0.72)
        self.radii = np.array([base * step**k for k in range(spec.ring_count)])
        self.ring_width = 3.0
        self.canal_half0 = 24.0 + rng.uniform(-3, 3)
        self.canal_slope = 0.45 + rng.uniform(-0.05, 0.05)
        self.mottle_py = rng.uniform(0, np.pi)
        self.mottle_px = rng.uniform(0, np.pi)
        # Obstruction center sits low in the canal.
        self.ob_cy = self.cy + 0.58 * (h - self.cy) + rng.uniform(-6, 6)
        self.ob_cx = self.cx + rng.uniform(-6, 6)
        self.ob_aspect = 0.62
        self.illum = (
            1.08 - spec.illumination_slope * (yy / h)
        )  # headlight falls off downward

    def canal_mask(self, zoom: float = 1.0) -> np.ndarray:
        u = self.dy / zoom
        v = self.dx / zoom
        return (u > 0) & (np.abs(v) < self.canal_half0 + self.canal_slope * u)

    def obstruction_mask(self, scale: float, zoom: float = 1.0) -> np.ndarray:
        if scale <= 0:
            return np.zeros((self.h, self.w), dtype=bool)
        u = self.dy / zoom - (self.ob_cy - self.cy)
        v = self.dx / zoom - (self.ob_cx - self.cx)
        ellipse = (v / scale) ** 2 + (u / (self.ob_aspect * scale)) ** 2 < 1.0
        return ellipse & self.canal_mask(zoom)

    def fit_obstruction(self, target_fill: float) -> tuple[float, float]:
        """Binary-search the blob scale whose measured canal coverage is
        closest to the target; returns (scale, measured fraction)."""
        canal = self.canal_mask(1.0)
        canal_px = int(canal.sum())
        if target_fill <= 0 or canal_px == 0:
            return 0.0, 0.0
        lo, hi = 0.0, float(max(self.h, self.w))
        for _ in range(48):
            mid = 0.5 * (lo + hi)
            frac = self.obstruction_mask(mid).sum() / canal_px
            if frac < target_fill:
                lo = mid
            else:
                hi = mid
        scale = 0.5 * (lo + hi)
        measured = float(self.obstruction_mask(scale).sum() / canal_px)
        return scale, measured

    def render(self, zoom: float, ob_scale: float) -> np.ndarray:
        """Shaded content region (H, W) float32 before noise."""
        u = self.dy / zoom
        v = self.dx / zoom
        d = np.sqrt(u * u + v * v)
        img = 140.0 - 80.0 * np.exp(-d / 150.0)  # pipe darkens into the distance
        for r in self.radii:
            img[np.abs(d - r) < self.ring_width] += 70.0
        canal = (u > 0) & (np.abs(v) < self.canal_half0 + self.canal_slope * u)
        img[canal] = 62.0
        if ob_scale > 0:
            blob = self.obstruction_mask(ob_scale, zoom)
            mottle = 150.0 + 30.0 * np.sin(0.33 * u + self.mottle_py) * np.cos(
                0.29 * v + self.mottle_px
            )
            img[blob] = mottle[blob]
        return (img * self.illum).astype(np.float32)


def render_video(spec: SyntheticSpec) -> SyntheticVideo:
    """Render all frames; bit-identical for identical specs."""
    rng = np.random.default_rng(spec.seed)
    scene = _Scene(spec, rng)

    lo, hi = spec.fill_ranges[spec.class_level]
    if spec.class_level == 0:
        target = 0.0
    else:
        # Stay a hair inside the band so pixel quantization cannot leak out.
        pad = min(0.01, 0.25 * (hi - lo))
        target = rng.uniform(lo + pad, hi - pad)
    ob_scale, measured = scene.fit_obstruction(target)

    if spec.class_level == 3:
        raw = RawLabel.OBSTRUCTED if rng.random() < 0.5 else RawLabel.VERY_DIRTY
    else:
        raw = (RawLabel.CLEAN, RawLabel.SLIGHTLY_DIRTY, RawLabel.DIRTY)[spec.class_level]

    static = scene.render(1.0, ob_scale)
    frames = np.zeros((spec.total_frames, FRAME_HEIGHT, FRAME_WIDTH, 3), dtype=np.uint8)
    for t in range(spec.total_frames):
        if t < spec.static_frames:
            content = static
        else:
            zoom = (1.0 + spec.zoom_rate) ** (t - spec.static_frames + 1)
            content = scene.render(zoom, ob_scale)
        noisy = content + rng.normal(0.0, spec.noise_amplitude, content.shape)
        if spec.rain:
            # A few bright vertical streaks that move frame to frame.
            cols = rng.integers(0, scene.w, size=6)
            tops = rng.integers(0, scene.h - 40, size=6)
            for c, top in zip(cols, tops):
                noisy[top : top + 40, c] += 45.0
        channel = np.clip(noisy, 0, 255).astype(np.uint8)
        frames[t, :, BORDER : FRAME_WIDTH - BORDER, :] = channel[..., None]

    return SyntheticVideo(
        frames=frames,
        raw_label=raw,
        class_level=spec.class_level,
        fill_fraction=measured,
        first_zoom_frame=spec.static_frames,
        onset_signal_index=spec.static_frames - 1,
        canal_mask=scene.canal_mask(1.0),
        obstruction_mask=scene.obstruction_mask(ob_scale, 1.0),
    )


def write_video(video: SyntheticVideo, out_dir) -> list[Path]:
    """One PNG per frame, zero-padded names so lexicographic = temporal."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for t, frame in enumerate(video.frames):
        path = out_dir / f"frame_{t:04d}.png"
        Image.fromarray(frame).save(path)
        paths.append(path)
    return paths


def generate_dataset(
    out_root,
    videos_per_class: int,
    seed: int,
    classes: int = 4,
    total_frames: int = 65,
    manifest_name: str = "manifest.jsonl",
) -> tuple[list[VideoRecord], Path]:
    """Render a labeled corpus to disk plus its manifest.

    Static prefix lengths vary per video (seeded) so onset detection is
    exercised at different positions. Ground truth goes to a sidecar
    JSON-lines file next to the manifest.
    """
    import json

    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(seed)
    master = np.random.default_rng(seeds)
    records: list[VideoRecord] = []
    truth_lines = []
    for level in range(classes):
        for i in range(videos_per_class):
            video_seed = int(master.integers(0, 2**63 - 1))
            static = int(master.integers(38, 47))
            spec = SyntheticSpec(
                class_level=level,
                seed=video_seed,
                total_frames=total_frames,
                static_frames=min(static, total_frames - 15),
            )
            video = render_video(spec)
            vid = f"video_c{level}_{i:03d}"
            frames_dir = out_root / vid
            write_video(video, frames_dir)
            records.append(
                VideoRecord(
                    id=vid,
                    frames_dir=str(frames_dir),
                    raw_label=video.raw_label,
                    seed=video_seed,
                )
            )
            truth_lines.append(
                json.dumps(
                    {
                        "id": vid,
                        "class_level": level,
                        "fill_fraction": video.fill_fraction,
                        "first_zoom_frame": video.first_zoom_frame,
                        "onset_signal_index": video.onset_signal_index,
                    }
                )
            )
    manifest_path = out_root / manifest_name
    write_manifest(records, manifest_path)
    (out_root / "truth.jsonl").write_text("\n".join(truth_lines) + "\n")
    return records, manifest_path
