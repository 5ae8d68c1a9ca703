"""Parameter-holding layer objects built on the functional kernels.

Layers never keep per-call state: forward returns a fresh LayerCache so
a loaded network stays immutable during inference and safe for
concurrent readers.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from . import ops
from .ops import LayerCache

__all__ = ["Conv2D", "MaxPool2x2", "Dense", "ReLU", "Dropout", "Flatten"]


def _he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    # Fan-in-scaled uniform init keeps pre-activation variance flat ~2/fan_in.
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Conv2D:
    """3x3-style convolution layer with 'same' padding and its own weights."""

    kind = "conv2d"

    def __init__(self, name: str, kernels: np.ndarray, bias: np.ndarray):
        self.name = name
        self.kernels = kernels
        self.bias = bias

    @classmethod
    def initialize(
        cls, name: str, kernel_side: int, in_channels: int, out_channels: int,
        rng: np.random.Generator, dtype=np.float32,
    ) -> "Conv2D":
        fan_in = kernel_side * kernel_side * in_channels
        kernels = _he_uniform(
            rng, (kernel_side, kernel_side, in_channels, out_channels), fan_in, dtype
        )
        bias = np.zeros(out_channels, dtype=dtype)
        return cls(name, kernels, bias)

    def forward(self, x, mode: str, rng=None):
        cache = LayerCache()
        return ops.conv2d_forward(x, self.kernels, self.bias, cache), cache

    def backward(self, grad_out, cache: LayerCache):
        grad_x, grad_k, grad_b = ops.conv2d_backward(grad_out, cache)
        return grad_x, {f"{self.name}.kernels": grad_k, f"{self.name}.bias": grad_b}

    def params(self) -> dict[str, np.ndarray]:
        return {f"{self.name}.kernels": self.kernels, f"{self.name}.bias": self.bias}

    def param_count(self) -> int:
        return self.kernels.size + self.bias.size

    def output_shape(self, in_shape):
        h, w, c = in_shape
        if c != self.kernels.shape[2]:
            raise ShapeError(f"{self.name}: input channels {c} != {self.kernels.shape[2]}")
        return (h, w, self.kernels.shape[3])


class MaxPool2x2:
    kind = "maxpool2x2"

    def __init__(self, name: str):
        self.name = name

    def forward(self, x, mode: str, rng=None):
        cache = LayerCache()
        return ops.maxpool2x2_forward(x, cache), cache

    def backward(self, grad_out, cache: LayerCache):
        return ops.maxpool2x2_backward(grad_out, cache), {}

    def params(self):
        return {}

    def param_count(self) -> int:
        return 0

    def output_shape(self, in_shape):
        h, w, c = in_shape
        return (-(-h // 2), -(-w // 2), c)


class Dense:
    kind = "dense"

    def __init__(self, name: str, weights: np.ndarray, bias: np.ndarray):
        self.name = name
        self.weights = weights
        self.bias = bias

    @classmethod
    def initialize(
        cls, name: str, in_features: int, out_features: int,
        rng: np.random.Generator, dtype=np.float32, zero_weights: bool = False,
    ) -> "Dense":
        """Fan-in-scaled uniform weights, or all zeros for a layer that
        should start with no preference among its outputs (the ReLU-variance
        argument behind the scaled init only applies under a ReLU)."""
        if zero_weights:
            weights = np.zeros((in_features, out_features), dtype=dtype)
        else:
            weights = _he_uniform(rng, (in_features, out_features), in_features, dtype)
        bias = np.zeros(out_features, dtype=dtype)
        return cls(name, weights, bias)

    def forward(self, x, mode: str, rng=None):
        cache = LayerCache()
        return ops.dense_forward(x, self.weights, self.bias, cache), cache

    def backward(self, grad_out, cache: LayerCache):
        grad_x, grad_w, grad_b = ops.dense_backward(grad_out, cache)
        return grad_x, {f"{self.name}.weights": grad_w, f"{self.name}.bias": grad_b}

    def params(self) -> dict[str, np.ndarray]:
        return {f"{self.name}.weights": self.weights, f"{self.name}.bias": self.bias}

    def param_count(self) -> int:
        return self.weights.size + self.bias.size

    def output_shape(self, in_shape):
        (f,) = in_shape
        if f != self.weights.shape[0]:
            raise ShapeError(f"{self.name}: input width {f} != {self.weights.shape[0]}")
        return (self.weights.shape[1],)


class ReLU:
    kind = "relu"

    def __init__(self, name: str):
        self.name = name

    def forward(self, x, mode: str, rng=None):
        cache = LayerCache()
        return ops.relu_forward(x, cache), cache

    def backward(self, grad_out, cache: LayerCache):
        return ops.relu_backward(grad_out, cache), {}

    def params(self):
        return {}

    def param_count(self) -> int:
        return 0

    def output_shape(self, in_shape):
        return in_shape


class Dropout:
    kind = "dropout"

    def __init__(self, name: str, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.name = name
        self.rate = rate

    def forward(self, x, mode: str, rng=None):
        cache = LayerCache()
        return ops.dropout_forward(x, self.rate, mode, rng, cache), cache

    def backward(self, grad_out, cache: LayerCache):
        return ops.dropout_backward(grad_out, cache), {}

    def params(self):
        return {}

    def param_count(self) -> int:
        return 0

    def output_shape(self, in_shape):
        return in_shape


class Flatten:
    kind = "flatten"

    def __init__(self, name: str):
        self.name = name

    def forward(self, x, mode: str, rng=None):
        x = np.asarray(x)
        cache = LayerCache()
        if x.ndim == 3:
            cache.store("flatten", in_shape=x.shape, single=True)
            return x.reshape(-1), cache
        if x.ndim == 4:
            cache.store("flatten", in_shape=x.shape, single=False)
            return x.reshape(x.shape[0], -1), cache
        raise ShapeError(f"flatten expects rank 3 or 4, got {x.ndim}")

    def backward(self, grad_out, cache: LayerCache):
        saved = cache.fetch("flatten")
        return np.asarray(grad_out).reshape(saved["in_shape"]), {}

    def params(self):
        return {}

    def param_count(self) -> int:
        return 0

    def output_shape(self, in_shape):
        n = 1
        for d in in_shape:
            n *= d
        return (n,)
