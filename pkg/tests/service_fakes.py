"""Hand-driven stand-ins for the triage service's heavy collaborators.

The real model loader, frame pipeline, and retraining runner cost seconds
to minutes; these fakes answer instantly and let a test choose outcomes
per submission, so the state-machine suites stay fast and deterministic.
"""

from __future__ import annotations

import threading
from types import SimpleNamespace

import numpy as np

from sewergrade.service import TriageService


class ContentNetwork:
    """Reads its verdict off pixel (0, 0) of each frame: channel 0 holds
    class/3, channel 1 holds margin/10. Softmax of a one-hot logit row
    with margin m gives confidence e^m / (e^m + 3), so margin 5 is a
    confident call (0.98) and margin 0.5 a shaky one (0.35)."""

    def __init__(self):
        self.spec = SimpleNamespace(input_shape=(150, 150, 3))
        self.batch_sizes: list[int] = []

    def forward(self, images, mode="eval", rng=None):
        images = np.asarray(images)
        self.batch_sizes.append(int(images.shape[0]))
        logits = np.zeros((images.shape[0], 4))
        for i, frame in enumerate(images):
            cls = int(round(float(frame[0, 0, 0]) * 3))
            logits[i, cls] = float(frame[0, 0, 1]) * 10.0
        return logits


def scripted_frames(class_index: int = 2, margin: float = 5.0, count: int = 12):
    """A frame stack the ContentNetwork will score as requested."""
    frames = np.zeros((count, 150, 150, 3), dtype=np.float32)
    frames[:, 0, 0, 0] = class_index / 3.0
    frames[:, 0, 0, 1] = margin / 10.0
    return frames


class StubRunner:
    """Pipeline step executor that records calls and can fail or block."""

    def __init__(self, fail_at: str | None = None, block_at: str | None = None):
        self.calls: list[str] = []
        self.fail_at = fail_at
        self.block_at = block_at
        self.entered = threading.Event()
        self._release = threading.Event()

    def __call__(self, step: str, context: dict) -> dict:
        self.calls.append(step)
        if step == self.block_at:
            self.entered.set()
            if not self._release.wait(timeout=30):
                raise RuntimeError("test never released the blocked step")
        if step == self.fail_at:
            raise RuntimeError(f"injected failure at {step}")
        if step == "model_training":
            context["checkpoint_path"] = f"stub_{context['run_id']}.swnt"
        if step == "model_evaluation":
            context["metrics"] = {"video_accuracy": 0.93}
        return {"step": step}

    def release(self) -> None:
        self._release.set()


def make_service(state_dir, frames_by_dir: dict | None = None, **overrides):
    """Service wired to fakes; keyword overrides reach the constructor.

    frames_by_dir maps a frames_dir string to the stack the processor
    should return for it; unknown dirs get a confident class-2 stack.
    """
    table = dict(frames_by_dir or {})

    def processor(frames_dir):
        return table.get(str(frames_dir), scripted_frames())

    network = ContentNetwork()
    settings = dict(
        frames_per_classification=10,
        retrain_threshold=40,
        seed=0,
        model_loader=lambda path: network,
        frame_processor=processor,
        pipeline_runner=StubRunner(),
    )
    settings.update(overrides)
    return TriageService(state_dir, **settings)


def deploy_model(service, path: str = "ckpt_v1.swnt"):
    """Register and promote one model so classification can run."""
    entry = service.register_model(path, manifest_hash="seed-hash")
    service.promote_model(entry.version, approver="qa")
    return entry
