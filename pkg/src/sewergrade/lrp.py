"""Layer-wise relevance propagation and signed heatmap rendering.

The target-class logit is redistributed backward through the stack until
every input pixel carries a signed share of it. Dense and conv layers use
the z-rule (each input's share is proportional to its contribution to the
pre-activation), max-pool routes everything to the stored winner, ReLU and
dropout pass relevance through, flatten only reshapes. Bias terms absorb
relevance rather than redistributing it; the absorbed total is reported so
the books still balance: input sum + absorbed = logit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .model import NUM_CLASSES, SewerNet
from .nn import ops

__all__ = [
    "RULE_ZERO",
    "RULE_EPSILON",
    "RelevanceMap",
    "VideoExplanation",
    "lrp",
    "render_heatmap",
    "explain_video",
]

RULE_ZERO = "lrp_zero"
RULE_EPSILON = "lrp_epsilon"
_RULES = (RULE_ZERO, RULE_EPSILON)


@dataclass(frozen=True)
class RelevanceMap:
    """Signed per-pixel relevance for one image and one target class."""

    values: np.ndarray
    target_class: int
    score: float
    absorbed: float
    rule: str

    @property
    def input_sum(self) -> float:
        return float(self.values.sum())


@dataclass(frozen=True)
class VideoExplanation:
    maps: tuple[RelevanceMap, ...]
    mean: RelevanceMap


def _stabilized(z: np.ndarray, relevance: np.ndarray, rule: str, epsilon: float):
    """Per-unit relevance/denominator ratio, guarded against zero division."""
    if rule == RULE_EPSILON:
        denom = z + epsilon * np.where(z >= 0, 1.0, -1.0)
        return relevance / denom
    dead = z == 0
    return np.where(dead, 0.0, relevance / np.where(dead, 1.0, z))


def dense_relevance(x, weights, bias, z, relevance, rule=RULE_ZERO, epsilon=1e-6):
    """z-rule for a dense layer: returns (input relevance, absorbed)."""
    s = _stabilized(z, relevance, rule, epsilon)
    r_in = x * (s @ weights.T)
    return r_in, float((bias * s).sum())


def _conv_relevance(layer, x, z, relevance, cache, rule, epsilon):
    s = _stabilized(z, relevance, rule, epsilon)
    grad_x, _, _ = ops.conv2d_backward(s, cache)
    # One bias per output channel, applied at every spatial position.
    absorbed = float((s.sum(axis=(0, 1)) * layer.bias).sum())
    return x * grad_x, absorbed


def _as_float64(network: SewerNet) -> SewerNet:
    return network if network.dtype == np.float64 else network.astype(np.float64)


def _validate(network: SewerNet, image: np.ndarray, target_class: int, rule, epsilon):
    if rule not in _RULES:
        raise ValueError(f"rule must be one of {_RULES}, got {rule!r}")
    if rule == RULE_EPSILON and epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not 0 <= target_class < NUM_CLASSES:
        raise ValueError(
            f"target class {target_class} out of range [0, {NUM_CLASSES})"
        )
    if image.shape != network.spec.input_shape:
        raise ShapeError(
            f"image shape {image.shape} != expected {network.spec.input_shape}"
        )


def _propagate(net64: SewerNet, image64: np.ndarray, target_class, rule, epsilon):
    inputs = []
    caches = []
    out = image64
    for layer in net64.layers:
        inputs.append(out)
        out, cache = layer.forward(out, "eval", None)
        caches.append(cache)
    score = float(out[target_class])

    relevance = np.zeros(NUM_CLASSES, dtype=np.float64)
    relevance[target_class] = score
    absorbed = 0.0
    z = out
    for layer, x, cache in zip(
        reversed(net64.layers), reversed(inputs), reversed(caches)
    ):
        if layer.kind == "dense":
            relevance, taken = dense_relevance(
                x, layer.weights, layer.bias, z, relevance, rule, epsilon
            )
            absorbed += taken
        elif layer.kind == "conv2d":
            relevance, taken = _conv_relevance(
                layer, x, z, relevance, cache, rule, epsilon
            )
            absorbed += taken
        elif layer.kind == "maxpool2x2":
            relevance = ops.maxpool2x2_backward(relevance, cache)
        elif layer.kind == "flatten":
            relevance = relevance.reshape(x.shape)
        # relu and dropout (eval) pass relevance through unchanged
        z = x
    return RelevanceMap(
        values=relevance,
        target_class=int(target_class),
        score=score,
        absorbed=absorbed,
        rule=rule,
    )


def lrp(
    network: SewerNet,
    image,
    target_class: int,
    rule: str = RULE_ZERO,
    epsilon: float = 1e-6,
) -> RelevanceMap:
    """Attribute the target-class logit to input pixels."""
    image = np.asarray(image)
    _validate(network, image, target_class, rule, epsilon)
    net64 = _as_float64(network)
    return _propagate(net64, image.astype(np.float64), target_class, rule, epsilon)


def render_heatmap(relevance) -> np.ndarray:
    """Signed relevance as an RGB image: red positive, blue negative,
    white neutral. Each map is scaled by its own max magnitude."""
    values = relevance.values if isinstance(relevance, RelevanceMap) else relevance
    plane = np.asarray(values, dtype=np.float64)
    if plane.ndim == 3:
        plane = plane.sum(axis=2)
    peak = np.abs(plane).max()
    unit = plane / peak if peak > 0 else np.zeros_like(plane)
    fade = np.rint(255.0 * (1.0 - np.abs(unit))).astype(np.uint8)
    image = np.empty(plane.shape + (3,), dtype=np.uint8)
    positive = unit >= 0
    image[..., 0] = np.where(positive, 255, fade)
    image[..., 1] = fade
    image[..., 2] = np.where(positive, fade, 255)
    return image


def explain_video(
    network: SewerNet,
    frames,
    target_class: int,
    rule: str = RULE_ZERO,
    epsilon: float = 1e-6,
) -> VideoExplanation:
    """Per-frame relevance maps plus their elementwise mean."""
    frames = np.asarray(frames)
    if frames.ndim != 4 or frames.shape[0] == 0:
        raise ShapeError(f"expected a (T, H, W, C) frame stack, got {frames.shape}")
    _validate(network, frames[0], target_class, rule, epsilon)
    net64 = _as_float64(network)
    maps = tuple(
        _propagate(net64, frame.astype(np.float64), target_class, rule, epsilon)
        for frame in frames
    )
    mean = RelevanceMap(
        values=np.mean([m.values for m in maps], axis=0),
        target_class=int(target_class),
        score=float(np.mean([m.score for m in maps])),
        absorbed=float(np.mean([m.absorbed for m in maps])),
        rule=rule,
    )
    return VideoExplanation(maps=maps, mean=mean)
