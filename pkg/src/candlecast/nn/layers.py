"""Layer operations with hand-written backward passes.

Activations are NHWC (batch, height, width, channels). Convolution kernels
are stored as (3, 3, C_in, C_out). All ops are dtype-preserving, so the same
code runs in float32 for training and float64 for gradient checks.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError

KERNEL = 3


def _im2col(x: np.ndarray) -> np.ndarray:
    """(N, H, W, C) -> (N, H, W, 9*C), zero padded, taps ordered (dy, dx, c)."""
    n, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    return np.concatenate([xp[:, dy : dy + h, dx : dx + w, :] for dy in range(KERNEL) for dx in range(KERNEL)], axis=3)


def _batched(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ContractError(f"expected HWC or NHWC input, got shape {x.shape}")


def conv2d_forward(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """3x3 convolution, stride 1, same (zero) padding. Accepts HWC or NHWC."""
    xb, single = _batched(x)
    if kernels.shape[:2] != (KERNEL, KERNEL) or kernels.ndim != 4:
        raise ContractError(f"kernels must be (3, 3, C_in, C_out), got {kernels.shape}")
    if kernels.shape[2] != xb.shape[3] or bias.shape != (kernels.shape[3],):
        raise ContractError(f"input {x.shape} / kernels {kernels.shape} / bias {bias.shape} mismatch")
    n, h, w, _ = xb.shape
    cols = _im2col(xb).reshape(n * h * w, -1)
    out = (cols @ kernels.reshape(-1, kernels.shape[3]) + bias).reshape(n, h, w, -1)
    return out[0] if single else out


def conv2d_backward(upstream: np.ndarray, x: np.ndarray, kernels: np.ndarray):
    """Returns (grad_input, grad_kernels, grad_bias)."""
    xb, single = _batched(x)
    gb, _ = _batched(upstream)
    n, h, w, c = xb.shape
    f = kernels.shape[3]
    if gb.shape != (n, h, w, f):
        raise ContractError(f"upstream {upstream.shape} does not match forward output {(n, h, w, f)}")
    g2 = gb.reshape(-1, f)
    cols = _im2col(xb).reshape(n * h * w, -1)
    grad_k = (cols.T @ g2).reshape(kernels.shape)
    grad_b = g2.sum(axis=0)
    gcols = (g2 @ kernels.reshape(-1, f).T).reshape(n, h, w, KERNEL, KERNEL, c)
    gxp = np.zeros((n, h + 2, w + 2, c), dtype=gcols.dtype)
    for dy in range(KERNEL):
        for dx in range(KERNEL):
            gxp[:, dy : dy + h, dx : dx + w, :] += gcols[:, :, :, dy, dx, :]
    gx = gxp[:, 1:-1, 1:-1, :]
    return (gx[0] if single else gx), grad_k, grad_b


def maxpool2x2(x: np.ndarray):
    """2x2 max-pool, stride 2; a trailing odd row/column is dropped.

    Returns (output, cache). Ties go to the first position in row-major
    order within the block.
    """
    xb, single = _batched(x)
    n, h, w, c = xb.shape
    if h < 2 or w < 2:
        raise ContractError(f"max-pool needs H, W >= 2, got {h}x{w}")
    ho, wo = h // 2, w // 2
    blocks = xb[:, : 2 * ho, : 2 * wo, :].reshape(n, ho, 2, wo, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, ho, wo, c, 4)
    arg = blocks.argmax(axis=4)
    out = np.take_along_axis(blocks, arg[..., None], axis=4)[..., 0]
    cache = (xb.shape, arg, single)
    return (out[0] if single else out), cache


def maxpool2x2_backward(upstream: np.ndarray, cache) -> np.ndarray:
    shape, arg, single = cache
    gb, _ = _batched(upstream)
    n, h, w, c = shape
    ho, wo = h // 2, w // 2
    blocks = np.zeros((n, ho, wo, c, 4), dtype=gb.dtype)
    np.put_along_axis(blocks, arg[..., None], gb[..., None], axis=4)
    gx = np.zeros(shape, dtype=gb.dtype)
    gx[:, : 2 * ho, : 2 * wo, :] = blocks.reshape(n, ho, wo, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, 2 * ho, 2 * wo, c)
    return gx[0] if single else gx


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(upstream: np.ndarray, x: np.ndarray) -> np.ndarray:
    return upstream * (x > 0)


def dropout(x: np.ndarray, rate: float, rng: np.random.Generator | None, training: bool):
    """Inverted dropout. Returns (output, mask); mask is None when inactive."""
    if not 0 <= rate < 1:
        raise ContractError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0:
        return x, None
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / x.dtype.type(1 - rate)
    return x * mask, mask


def dropout_backward(upstream: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    return upstream if mask is None else upstream * mask


def dense(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """x (N, D_in) @ weight (D_in, D_out) + bias."""
    if x.shape[-1] != weight.shape[0] or bias.shape != (weight.shape[1],):
        raise ContractError(f"dense input {x.shape} / weight {weight.shape} / bias {bias.shape} mismatch")
    return x @ weight + bias


def dense_backward(upstream: np.ndarray, x: np.ndarray, weight: np.ndarray):
    return upstream @ weight.T, x.T @ upstream, upstream.sum(axis=0)


def flatten(x: np.ndarray) -> np.ndarray:
    return x.reshape(x.shape[0], -1)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean negative log-likelihood of ``labels`` and its gradient wrt logits."""
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    idx = np.arange(n)
    labels = np.asarray(labels, dtype=np.int64)
    loss = -log_p[idx, labels].mean()
    grad = np.exp(log_p)
    grad[idx, labels] -= 1
    return loss, grad / n


# --- stateful layers ------------------------------------------------------


class Layer:
    name: str = ""
    params: dict[str, np.ndarray]
    grads: dict[str, np.ndarray]

    def __init__(self, name: str = ""):
        self.name = name
        self.params = {}
        self.grads = {}

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Conv2D(Layer):
    def __init__(self, c_in: int, c_out: int, name: str = ""):
        super().__init__(name)
        self.params = {"kernel": np.zeros((KERNEL, KERNEL, c_in, c_out), np.float32), "bias": np.zeros(c_out, np.float32)}

    def forward(self, x, training=False):
        self._x = x
        return conv2d_forward(x, self.params["kernel"], self.params["bias"])

    def backward(self, upstream):
        gx, self.grads["kernel"], self.grads["bias"] = conv2d_backward(upstream, self._x, self.params["kernel"])
        return gx


class ReLU(Layer):
    def forward(self, x, training=False):
        self._x = x
        return relu(x)

    def backward(self, upstream):
        return relu_backward(upstream, self._x)


class MaxPool2D(Layer):
    def forward(self, x, training=False):
        out, self._cache = maxpool2x2(x)
        return out

    def backward(self, upstream):
        return maxpool2x2_backward(upstream, self._cache)


class Dropout(Layer):
    def __init__(self, rate: float, name: str = ""):
        super().__init__(name)
        if not 0 <= rate < 1:
            raise ContractError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = np.random.default_rng(0)

    def forward(self, x, training=False):
        out, self._mask = dropout(x, self.rate, self.rng, training)
        return out

    def backward(self, upstream):
        return dropout_backward(upstream, self._mask)


class Flatten(Layer):
    def forward(self, x, training=False):
        self._shape = x.shape
        return flatten(x)

    def backward(self, upstream):
        return upstream.reshape(self._shape)


class Dense(Layer):
    def __init__(self, d_in: int, d_out: int, name: str = ""):
        super().__init__(name)
        self.params = {"weight": np.zeros((d_in, d_out), np.float32), "bias": np.zeros(d_out, np.float32)}

    def forward(self, x, training=False):
        self._x = x
        return dense(x, self.params["weight"], self.params["bias"])

    def backward(self, upstream):
        gx, self.grads["weight"], self.grads["bias"] = dense_backward(upstream, self._x, self.params["weight"])
        return gx


def residual_forward(x: np.ndarray, k1, b1, k2, b2):
    """ReLU(x + conv2(ReLU(conv1(x)))). Returns (output, cache)."""
    if k1.shape[2] != x.shape[-1] or k2.shape[3] != x.shape[-1]:
        raise ContractError(f"residual block needs C -> C convolutions, input has {x.shape[-1]} channels")
    h1 = conv2d_forward(x, k1, b1)
    a1 = relu(h1)
    h2 = conv2d_forward(a1, k2, b2)
    s = x + h2
    return relu(s), (x, h1, a1, s)


def residual_backward(upstream: np.ndarray, cache, k1, k2):
    """Returns (grad_input, grad_k1, grad_b1, grad_k2, grad_b2)."""
    x, h1, a1, s = cache
    gs = relu_backward(upstream, s)
    ga1, gk2, gb2 = conv2d_backward(gs, a1, k2)
    gx_inner, gk1, gb1 = conv2d_backward(relu_backward(ga1, h1), x, k1)
    return gs + gx_inner, gk1, gb1, gk2, gb2


class Residual(Layer):
    """Two same-width 3x3 convolutions with an identity shortcut."""

    def __init__(self, channels: int, name: str = ""):
        super().__init__(name)
        z = lambda: np.zeros((KERNEL, KERNEL, channels, channels), np.float32)
        self.params = {"kernel1": z(), "bias1": np.zeros(channels, np.float32), "kernel2": z(), "bias2": np.zeros(channels, np.float32)}

    def forward(self, x, training=False):
        p = self.params
        out, self._cache = residual_forward(x, p["kernel1"], p["bias1"], p["kernel2"], p["bias2"])
        return out

    def backward(self, upstream):
        gx, *g = residual_backward(upstream, self._cache, self.params["kernel1"], self.params["kernel2"])
        self.grads.update(zip(("kernel1", "bias1", "kernel2", "bias2"), g))
        return gx
