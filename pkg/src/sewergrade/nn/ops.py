"""Dense-tensor kernels with explicit forward and backward passes.

Every operation works on row-major numpy arrays. Image-like tensors are
channels-last, (H, W, C); vectors are flat (F,). Each op also accepts a
leading batch axis and returns gradients with the same layout it was fed.

There is no autodiff graph: a forward call records exactly what its
backward pass needs in a LayerCache, and the matching backward consumes
that cache. Training runs in float32; verification suites run the same
code paths in float64.
"""

from __future__ import annotations

import numpy as np

from ..errors import CacheError, NonFiniteError, ShapeError

__all__ = [
    "LayerCache",
    "require_finite",
    "conv2d_forward",
    "conv2d_backward",
    "maxpool2x2_forward",
    "maxpool2x2_backward",
    "dense_forward",
    "dense_backward",
    "relu_forward",
    "relu_backward",
    "dropout_forward",
    "dropout_backward",
    "softmax",
    "softmax_cross_entropy",
    "softmax_cross_entropy_batch",
]


class LayerCache:
    """Carries forward-pass state to the matching backward pass.

    A cache is single-writer: each forward overwrites it, each backward
    validates that it was filled by the right kind of forward. Reading
    does not clear it, so gradient checks may call backward repeatedly.
    """

    __slots__ = ("kind", "data")

    def __init__(self) -> None:
        self.kind: str | None = None
        self.data: dict = {}

    def store(self, kind: str, **items) -> None:
        self.kind = kind
        self.data = items

    def fetch(self, kind: str) -> dict:
        if self.kind is None:
            raise CacheError(f"{kind} backward called before any forward")
        if self.kind != kind:
            raise CacheError(f"{kind} backward called on a {self.kind} cache")
        return self.data


def require_finite(arr: np.ndarray, what: str) -> np.ndarray:
    """Reject NaN/Inf; non-finite values are an error state, not data."""
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite values in {what}")
    return arr


def _as_batch(x, rank: int, what: str) -> tuple[np.ndarray, bool]:
    """Promote a single sample to a batch of one; report which it was."""
    x = np.asarray(x)
    if x.ndim == rank - 1:
        return x[None], True
    if x.ndim == rank:
        return x, False
    raise ShapeError(f"{what}: expected rank {rank - 1} or {rank}, got {x.ndim}")


# ---------------------------------------------------------------------------
# convolution


def conv2d_forward(x, kernels, bias, cache: LayerCache | None = None) -> np.ndarray:
    """Stride-1 2D convolution with zero 'same' padding.

    x: (H, W, C) or (N, H, W, C); kernels: (kh, kw, C, K); bias: (K,).
    Kernel sides must be odd so the padded output keeps the input's
    spatial size exactly.
    """
    kernels = np.asarray(kernels)
    bias = np.asarray(bias)
    xb, single = _as_batch(x, 4, "conv2d input")
    if kernels.ndim != 4:
        raise ShapeError(f"conv2d kernels must be (kh, kw, C, K), got {kernels.shape}")
    kh, kw, kc, k = kernels.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d kernel sides must be odd, got {kh}x{kw}")
    n, h, w, c = xb.shape
    if c != kc:
        raise ShapeError(f"conv2d channels mismatch: input {c}, kernels {kc}")
    if bias.shape != (k,):
        raise ShapeError(f"conv2d bias must be ({k},), got {bias.shape}")

    ph, pw = kh // 2, kw // 2
    xp = np.pad(xb, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    dtype = np.result_type(xb, kernels)
    acc = np.zeros((n * h * w, k), dtype=dtype)
    # One GEMM per kernel offset; the slice walks the padded input so the
    # window stays inside bounds for every output position.
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, i : i + h, j : j + w, :].reshape(n * h * w, c)
            acc += patch @ kernels[i, j]
    acc += bias
    out = acc.reshape(n, h, w, k)
    if cache is not None:
        cache.store("conv2d", x=xb, kernels=kernels, single=single)
    return require_finite(out[0] if single else out, "conv2d output")


def conv2d_backward(grad_out, cache: LayerCache):
    """Gradients of conv2d_forward: (grad_input, grad_kernels, grad_bias)."""
    saved = cache.fetch("conv2d")
    xb, kernels, single = saved["x"], saved["kernels"], saved["single"]
    gb, _ = _as_batch(grad_out, 4, "conv2d grad")
    kh, kw, c, k = kernels.shape
    n, h, w, _ = xb.shape
    if gb.shape != (n, h, w, k):
        raise ShapeError(f"conv2d grad shape {gb.shape} != output shape {(n, h, w, k)}")

    ph, pw = kh // 2, kw // 2
    xp = np.pad(xb, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    dtype = np.result_type(gb, kernels)
    g_flat = gb.reshape(n * h * w, k)
    grad_b = g_flat.sum(axis=0)
    grad_k = np.empty((kh, kw, c, k), dtype=dtype)
    grad_xp = np.zeros(xp.shape, dtype=dtype)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, i : i + h, j : j + w, :].reshape(n * h * w, c)
            grad_k[i, j] = patch.T @ g_flat
            grad_xp[:, i : i + h, j : j + w, :] += (g_flat @ kernels[i, j].T).reshape(
                n, h, w, c
            )
    grad_x = grad_xp[:, ph : ph + h, pw : pw + w, :]
    if single:
        grad_x = grad_x[0]
    require_finite(grad_x, "conv2d grad_input")
    require_finite(grad_k, "conv2d grad_kernels")
    require_finite(grad_b, "conv2d grad_bias")
    return grad_x, grad_k, grad_b


# ---------------------------------------------------------------------------
# pooling


def maxpool2x2_forward(x, cache: LayerCache | None = None) -> np.ndarray:
    """2x2 max pooling, stride 2, ceil mode.

    Odd trailing rows/columns form truncated windows: the input is padded
    with -inf, which can never win, so winner indices always address real
    input positions.
    """
    xb, single = _as_batch(x, 4, "maxpool input")
    n, h, w, c = xb.shape
    h2, w2 = -(-h // 2), -(-w // 2)
    if h % 2 or w % 2:
        xb_p = np.pad(
            xb,
            ((0, 0), (0, h2 * 2 - h), (0, w2 * 2 - w), (0, 0)),
            constant_values=-np.inf,
        )
    else:
        xb_p = xb
    win = (
        xb_p.reshape(n, h2, 2, w2, 2, c)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(n, h2, w2, c, 4)
    )
    winners = win.argmax(axis=4).astype(np.uint8)
    out = np.take_along_axis(win, winners[..., None].astype(np.intp), axis=4)[..., 0]
    if cache is not None:
        cache.store("maxpool", winners=winners, in_shape=(n, h, w, c), single=single)
    return require_finite(out[0] if single else out, "maxpool output")


def maxpool2x2_backward(grad_out, cache: LayerCache) -> np.ndarray:
    """Routes each window's gradient to the position that won the max."""
    saved = cache.fetch("maxpool")
    winners, single = saved["winners"], saved["single"]
    n, h, w, c = saved["in_shape"]
    gb, _ = _as_batch(grad_out, 4, "maxpool grad")
    if gb.shape != winners.shape:
        raise ShapeError(f"maxpool grad shape {gb.shape} != output shape {winners.shape}")
    _, h2, w2, _ = winners.shape
    gwin = np.zeros((n, h2, w2, c, 4), dtype=gb.dtype)
    np.put_along_axis(gwin, winners[..., None].astype(np.intp), gb[..., None], axis=4)
    gp = (
        gwin.reshape(n, h2, w2, c, 2, 2)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(n, h2 * 2, w2 * 2, c)
    )
    grad_x = gp[:, :h, :w, :]
    if single:
        grad_x = grad_x[0]
    return require_finite(grad_x, "maxpool grad_input")


# ---------------------------------------------------------------------------
# dense


def dense_forward(x, weights, bias, cache: LayerCache | None = None) -> np.ndarray:
    """Affine layer: x @ weights + bias, x (F,) or (N, F), weights (F, M)."""
    weights = np.asarray(weights)
    bias = np.asarray(bias)
    xb, single = _as_batch(x, 2, "dense input")
    if weights.ndim != 2:
        raise ShapeError(f"dense weights must be 2-D, got {weights.shape}")
    f, m = weights.shape
    if xb.shape[1] != f:
        raise ShapeError(f"dense input width {xb.shape[1]} != weight rows {f}")
    if bias.shape != (m,):
        raise ShapeError(f"dense bias must be ({m},), got {bias.shape}")
    out = xb @ weights + bias
    if cache is not None:
        cache.store("dense", x=xb, weights=weights, single=single)
    return require_finite(out[0] if single else out, "dense output")


def dense_backward(grad_out, cache: LayerCache):
    """Gradients of dense_forward: (grad_input, grad_weights, grad_bias)."""
    saved = cache.fetch("dense")
    xb, weights, single = saved["x"], saved["weights"], saved["single"]
    gb, _ = _as_batch(grad_out, 2, "dense grad")
    if gb.shape != (xb.shape[0], weights.shape[1]):
        raise ShapeError(
            f"dense grad shape {gb.shape} != output shape {(xb.shape[0], weights.shape[1])}"
        )
    grad_x = gb @ weights.T
    grad_w = xb.T @ gb
    grad_b = gb.sum(axis=0)
    if single:
        grad_x = grad_x[0]
    require_finite(grad_x, "dense grad_input")
    require_finite(grad_w, "dense grad_weights")
    require_finite(grad_b, "dense grad_bias")
    return grad_x, grad_w, grad_b


# ---------------------------------------------------------------------------
# activations and regularization


def relu_forward(x, cache: LayerCache | None = None) -> np.ndarray:
    """Elementwise max(x, 0)."""
    x = np.asarray(x)
    out = np.maximum(x, 0)
    if cache is not None:
        cache.store("relu", mask=x > 0)
    return require_finite(out, "relu output")


def relu_backward(grad_out, cache: LayerCache) -> np.ndarray:
    saved = cache.fetch("relu")
    mask = saved["mask"]
    grad_out = np.asarray(grad_out)
    if grad_out.shape != mask.shape:
        raise ShapeError(f"relu grad shape {grad_out.shape} != input shape {mask.shape}")
    return grad_out * mask


def dropout_forward(
    x, rate: float, mode: str, rng: np.random.Generator | None = None,
    cache: LayerCache | None = None,
) -> np.ndarray:
    """Inverted dropout: train-mode outputs are scaled by 1/(1-rate).

    Eval mode (and rate 0) is the identity, so no inference-time rescale
    is ever needed.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"dropout mode must be 'train' or 'eval', got {mode!r}")
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    x = np.asarray(x)
    if mode == "eval" or rate == 0.0:
        if cache is not None:
            cache.store("dropout", mask=None, scale=1.0)
        return x
    if rng is None:
        raise ValueError("train-mode dropout needs a random generator")
    mask = rng.random(x.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    out = x * (mask.astype(x.dtype) * x.dtype.type(scale))
    if cache is not None:
        cache.store("dropout", mask=mask, scale=scale)
    return require_finite(out, "dropout output")


def dropout_backward(grad_out, cache: LayerCache) -> np.ndarray:
    saved = cache.fetch("dropout")
    mask, scale = saved["mask"], saved["scale"]
    grad_out = np.asarray(grad_out)
    if mask is None:
        return grad_out
    if grad_out.shape != mask.shape:
        raise ShapeError(f"dropout grad shape {grad_out.shape} != mask shape {mask.shape}")
    return grad_out * (mask.astype(grad_out.dtype) * grad_out.dtype.type(scale))


# ---------------------------------------------------------------------------
# loss


def softmax(logits) -> np.ndarray:
    """Numerically stable softmax over the last axis."""
    z = np.asarray(logits)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, label: int):
    """Loss and d(loss)/d(logits) for one sample.

    The max is subtracted before exponentiation, so arbitrarily large
    logits cannot overflow.
    """
    logits = np.asarray(logits)
    if logits.ndim != 1:
        raise ShapeError(f"softmax_cross_entropy wants a flat logit vector, got {logits.shape}")
    if not 0 <= label < logits.shape[0]:
        raise ValueError(f"label {label} out of range for {logits.shape[0]} classes")
    z = logits - logits.max()
    log_probs = z - np.log(np.exp(z).sum())
    loss = -log_probs[label]
    grad = np.exp(log_probs)
    grad[label] -= 1.0
    require_finite(grad, "softmax_cross_entropy grad")
    return float(loss), grad.astype(logits.dtype, copy=False)


def softmax_cross_entropy_batch(logits, labels):
    """Batch-mean loss and gradient: grad rows already carry the 1/N factor."""
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(
            f"batch loss wants (N, K) logits and (N,) labels, got {logits.shape} and {labels.shape}"
        )
    n, k = logits.shape
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError("labels out of range")
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(n)
    loss = float(-log_probs[rows, labels].mean())
    grad = np.exp(log_probs)
    grad[rows, labels] -= 1.0
    grad /= n
    require_finite(grad, "softmax_cross_entropy_batch grad")
    return loss, grad.astype(logits.dtype, copy=False)
