"""The obstruction-grading CNN: fixed architecture, build, and inference.

The network takes a 150x150x3 image scaled to [0, 1] and yields four
logits ordered by severity: clean, slightly_dirty, dirty, very_dirty.
The layer sequence is fixed; its identity is captured in a fingerprint
so weight files can refuse to load into a different topology.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .nn.layers import Conv2D, Dense, Dropout, Flatten, MaxPool2x2, ReLU
from .nn.ops import LayerCache, softmax

__all__ = [
    "CLASS_NAMES",
    "NUM_CLASSES",
    "INPUT_SHAPE",
    "LayerSpec",
    "ArchitectureSpec",
    "sewernet_spec",
    "SewerNet",
    "build_sewernet",
    "Prediction",
    "predict",
    "CensusRow",
]

CLASS_NAMES = ("clean", "slightly_dirty", "dirty", "very_dirty")
NUM_CLASSES = 4
INPUT_SHAPE = (150, 150, 3)


@dataclass(frozen=True)
class LayerSpec:
    """One row of the architecture: kind plus the fields that kind needs."""

    kind: str
    name: str
    kernel: int = 0
    out_channels: int = 0
    units: int = 0
    rate: float = 0.0


@dataclass(frozen=True)
class ArchitectureSpec:
    input_shape: tuple[int, int, int]
    classes: int
    layers: tuple[LayerSpec, ...]

    def canonical_json(self) -> str:
        doc = {
            "input_shape": list(self.input_shape),
            "classes": self.classes,
            "layers": [
                {
                    "kind": l.kind,
                    "name": l.name,
                    "kernel": l.kernel,
                    "out_channels": l.out_channels,
                    "units": l.units,
                    "rate": l.rate,
                }
                for l in self.layers
            ],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


def sewernet_spec() -> ArchitectureSpec:
    """The production topology; every build and weight file refers to it."""
    return ArchitectureSpec(
        input_shape=INPUT_SHAPE,
        classes=NUM_CLASSES,
        layers=(
            LayerSpec("conv2d", "conv1", kernel=3, out_channels=32),
            LayerSpec("relu", "relu1"),
            LayerSpec("maxpool2x2", "pool1"),
            LayerSpec("conv2d", "conv2", kernel=3, out_channels=32),
            LayerSpec("relu", "relu2"),
            LayerSpec("maxpool2x2", "pool2"),
            LayerSpec("conv2d", "conv3", kernel=3, out_channels=64),
            LayerSpec("relu", "relu3"),
            LayerSpec("maxpool2x2", "pool3"),
            LayerSpec("flatten", "flatten"),
            LayerSpec("dense", "fc1", units=1024),
            LayerSpec("relu", "relu4"),
            LayerSpec("dropout", "drop1", rate=0.5),
            LayerSpec("dense", "logits", units=NUM_CLASSES),
        ),
    )


@dataclass(frozen=True)
class CensusRow:
    name: str
    kind: str
    output_shape: tuple[int, ...]
    param_count: int


class SewerNet:
    """A built network: ordered layers plus the spec they came from."""

    def __init__(self, spec: ArchitectureSpec, layers: list, dtype=np.float32):
        self.spec = spec
        self.layers = layers
        self.dtype = np.dtype(dtype)

    # -- construction -------------------------------------------------

    @classmethod
    def build(cls, spec: ArchitectureSpec, seed: int, dtype=np.float32) -> "SewerNet":
        """Seeded He-style init; identical seeds give identical weights."""
        dtype = np.dtype(dtype)
        # One child stream per layer keeps each layer's draw independent
        # of edits elsewhere in the stack.
        streams = np.random.SeedSequence(seed).spawn(len(spec.layers))
        layers = []
        shape = spec.input_shape
        for layer_spec, ss in zip(spec.layers, streams):
            rng = np.random.default_rng(ss)
            if layer_spec.kind == "conv2d":
                layer = Conv2D.initialize(
                    layer_spec.name, layer_spec.kernel, shape[2],
                    layer_spec.out_channels, rng, dtype,
                )
            elif layer_spec.kind == "maxpool2x2":
                layer = MaxPool2x2(layer_spec.name)
            elif layer_spec.kind == "relu":
                layer = ReLU(layer_spec.name)
            elif layer_spec.kind == "flatten":
                layer = Flatten(layer_spec.name)
            elif layer_spec.kind == "dense":
                # The output layer starts at zero so an untrained network
                # scores every class evenly; hidden dense layers keep the
                # ReLU-scaled draw.
                layer = Dense.initialize(
                    layer_spec.name, shape[0], layer_spec.units, rng, dtype,
                    zero_weights=layer_spec is spec.layers[-1],
                )
            elif layer_spec.kind == "dropout":
                layer = Dropout(layer_spec.name, layer_spec.rate)
            else:
                raise ValueError(f"unknown layer kind {layer_spec.kind!r}")
            shape = layer.output_shape(shape)
            layers.append(layer)
        if shape != (spec.classes,):
            raise ShapeError(f"architecture ends in {shape}, wanted ({spec.classes},)")
        return cls(spec, layers, dtype)

    def astype(self, dtype) -> "SewerNet":
        """Copy of the network with parameters cast (float64 verification)."""
        clone = SewerNet.build(self.spec, seed=0, dtype=dtype)
        clone.load_params({k: v.astype(dtype) for k, v in self.params().items()})
        return clone

    # -- parameters ---------------------------------------------------

    def params(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for layer in self.layers:
            out.update(layer.params())
        return out

    def load_params(self, values: dict[str, np.ndarray]) -> None:
        own = self.params()
        if set(values) != set(own):
            raise ShapeError(
                f"parameter names disagree: missing {sorted(set(own) - set(values))}, "
                f"unexpected {sorted(set(values) - set(own))}"
            )
        for layer in self.layers:
            for name in layer.params():
                new = np.asarray(values[name])
                if new.shape != layer.params()[name].shape:
                    raise ShapeError(
                        f"{name}: shape {new.shape} != {layer.params()[name].shape}"
                    )
                attr = name.split(".", 1)[1]
                setattr(layer, attr, new.astype(self.dtype, copy=False))

    def param_count(self) -> int:
        return sum(layer.param_count() for layer in self.layers)

    def layer_census(self) -> list[CensusRow]:
        """Output shape and parameter count per layer, by shape algebra."""
        rows = []
        shape = self.spec.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
            rows.append(CensusRow(layer.name, layer.kind, tuple(shape), layer.param_count()))
        return rows

    # -- execution ----------------------------------------------------

    def forward(self, x, mode: str = "eval", rng=None, with_caches: bool = False):
        """Run the stack; train mode applies dropout and needs an rng."""
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        out = np.asarray(x, dtype=self.dtype)
        caches: list[LayerCache] = []
        for layer in self.layers:
            out, cache = layer.forward(out, mode, rng)
            caches.append(cache)
        if with_caches:
            return out, caches
        return out

    def backward(self, grad_logits, caches: list[LayerCache]):
        """Walk the caches in reverse; returns (grad_input, named grads)."""
        if len(caches) != len(self.layers):
            raise ShapeError(f"{len(caches)} caches for {len(self.layers)} layers")
        grads: dict[str, np.ndarray] = {}
        grad = np.asarray(grad_logits)
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            grad, layer_grads = layer.backward(grad, cache)
            grads.update(layer_grads)
        return grad, grads


def build_sewernet(seed: int, dtype=np.float32) -> SewerNet:
    return SewerNet.build(sewernet_spec(), seed, dtype)


def forward_logits(network: SewerNet, image, mode: str = "eval", rng=None) -> np.ndarray:
    """Single-image entry point; validates shape and [0, 1] scaling."""
    image = np.asarray(image)
    if image.shape != network.spec.input_shape:
        raise ShapeError(
            f"image shape {image.shape} != expected {network.spec.input_shape}"
        )
    if image.size and (image.min() < -1e-6 or image.max() > 1.0 + 1e-6):
        raise ValueError("image must be scaled to [0, 1] before inference")
    return network.forward(image, mode=mode, rng=rng)


@dataclass(frozen=True)
class Prediction:
    """Per-frame verdict: class index, probabilities, and confidence."""

    class_index: int
    class_name: str
    probabilities: tuple[float, ...]
    confidence: float


def predict(network: SewerNet, image) -> Prediction:
    """Eval-mode forward plus softmax; confidence is the winning probability."""
    logits = forward_logits(network, image, mode="eval")
    probs = softmax(logits.astype(np.float64))
    idx = int(np.argmax(probs))
    return Prediction(
        class_index=idx,
        class_name=CLASS_NAMES[idx],
        probabilities=tuple(float(p) for p in probs),
        confidence=float(probs[idx]),
    )


def predict_batch(
    network: SewerNet, images, batch_size: int = 64
) -> list[Prediction]:
    """Vectorized eval-mode predict over (N, 150, 150, 3).

    Processed in chunks of batch_size: convolution workspaces scale with
    the batch, so a single full-set forward would exhaust memory on
    large sets."""
    images = np.asarray(images)
    if images.ndim != 4 or images.shape[1:] != network.spec.input_shape:
        raise ShapeError(f"batch shape {images.shape} != (N, *{network.spec.input_shape})")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    chunks = [
        network.forward(images[start : start + batch_size], mode="eval")
        for start in range(0, images.shape[0], batch_size)
    ]
    logits = np.concatenate(chunks) if chunks else np.empty((0, 4), np.float32)
    probs = softmax(logits.astype(np.float64))
    out = []
    for row in probs:
        idx = int(np.argmax(row))
        out.append(
            Prediction(
                class_index=idx,
                class_name=CLASS_NAMES[idx],
                probabilities=tuple(float(p) for p in row),
                confidence=float(row[idx]),
            )
        )
    return out
