"""Layer primitives with hand-written backward closures.

Each primitive computes its forward pass on raw arrays and registers one fused gradient
closure, instead of composing many small graph nodes. ``primitive`` dispatches by name.
Sequence tensors are channel-last: (batch, sequence, channels).
"""
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit, log_softmax as _log_softmax, softmax as _softmax

from src.app.errors import ShapeError
from src.app.nn.tensor import Tensor, as_tensor


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise ShapeError(message)


# ------------------- AFFINE -------------------

def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """y = x @ W + b over the last axis; W has shape (in, out)."""
    _check(x.shape[-1] == weight.shape[0], f"linear expects last dim {weight.shape[0]}, got {x.shape}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    out = x2 @ weight.data
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = g.reshape(-1, weight.shape[1])
        x.accumulate((g2 @ weight.data.T).reshape(x.shape))
        weight.accumulate(x2.T @ g2)
        if bias is not None:
            bias.accumulate(g2.sum(axis=0))
    return Tensor.result(out.reshape(*lead, weight.shape[1]), parents, backward)


# pointwise convolution over a channel-last sequence is the same map
pointwise_conv1d = linear


# ------------------- CONVOLUTIONS -------------------

def depthwise_conv1d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Per-channel convolution along the sequence axis with same-length padding.

    x: (B, L, C); weight: (K, C) with K odd; bias: (C,).
    """
    _check(x.ndim == 3, f"depthwise_conv1d expects (B, L, C), got {x.shape}")
    k, channels = weight.shape
    _check(k % 2 == 1, f"depthwise kernel size must be odd, got {k}")
    _check(channels == x.shape[2], f"depthwise weight has {channels} channels, input has {x.shape[2]}")
    pad = k // 2
    length = x.shape[1]
    padded = np.pad(x.data, ((0, 0), (pad, pad), (0, 0)))
    windows = sliding_window_view(padded, k, axis=1)  # (B, L, C, K)
    out = np.einsum('blck,kc->blc', windows, weight.data)
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        weight.accumulate(np.einsum('blck,blc->kc', windows, g))
        if bias is not None:
            bias.accumulate(g.sum(axis=(0, 1)))
        grad_padded = np.zeros_like(padded)
        for tap in range(k):
            grad_padded[:, tap:tap + length, :] += g * weight.data[tap]
        x.accumulate(grad_padded[:, pad:pad + length, :])
    return Tensor.result(out, parents, backward)


def conv1d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Channel-first convolution with same-length padding.

    x: (B, C_in, N); weight: (C_out, C_in, K) with K odd; bias: (C_out,).
    """
    _check(x.ndim == 3, f"conv1d expects (B, C, N), got {x.shape}")
    c_out, c_in, k = weight.shape
    _check(c_in == x.shape[1], f"conv1d weight expects {c_in} input channels, got {x.shape[1]}")
    _check(k % 2 == 1, f"conv1d kernel size must be odd, got {k}")
    pad = k // 2
    length = x.shape[2]
    padded = np.pad(x.data, ((0, 0), (0, 0), (pad, pad)))
    windows = sliding_window_view(padded, k, axis=2)  # (B, C_in, N, K)
    out = np.einsum('bcnk,ock->bon', windows, weight.data)
    if bias is not None:
        out = out + bias.data[None, :, None]
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        weight.accumulate(np.einsum('bcnk,bon->ock', windows, g))
        if bias is not None:
            bias.accumulate(g.sum(axis=(0, 2)))
        grad_padded = np.zeros_like(padded)
        for tap in range(k):
            grad_padded[:, :, tap:tap + length] += np.einsum('bon,oc->bcn', g, weight.data[:, :, tap])
        x.accumulate(grad_padded[:, :, pad:pad + length])
    return Tensor.result(out, parents, backward)


# ------------------- NORMALIZATION -------------------

def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last (channel) axis."""
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    lead_axes = tuple(range(x.ndim - 1))

    def backward(g):
        gamma.accumulate((g * xhat).sum(axis=lead_axes))
        beta.accumulate(g.sum(axis=lead_axes))
        dxhat = g * gamma.data
        x.accumulate(inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)))
    return Tensor.result(xhat * gamma.data + beta.data, (x, gamma, beta), backward)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Batch normalization over (batch, sequence) per channel of a (B, L, C) input.

    In training mode the batch statistics normalize the input and update the running
    buffers in place; in inference mode the running buffers are used.
    """
    axes = (0, 1)
    if not training:
        inv = 1.0 / np.sqrt(running_var + eps)
        xhat = (x.data - running_mean) * inv

        def backward_eval(g):
            gamma.accumulate((g * xhat).sum(axis=axes))
            beta.accumulate(g.sum(axis=axes))
            x.accumulate(g * gamma.data * inv)
        return Tensor.result(xhat * gamma.data + beta.data, (x, gamma, beta), backward_eval)

    count = x.shape[0] * x.shape[1]
    mu = x.data.mean(axis=axes)
    var = x.data.var(axis=axes)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    running_mean *= 1 - momentum
    running_mean += momentum * mu
    running_var *= 1 - momentum
    running_var += momentum * var * count / max(count - 1, 1)

    def backward(g):
        gamma.accumulate((g * xhat).sum(axis=axes))
        beta.accumulate(g.sum(axis=axes))
        dxhat = g * gamma.data
        x.accumulate(inv * (dxhat - dxhat.mean(axis=axes) - xhat * (dxhat * xhat).mean(axis=axes)))
    return Tensor.result(xhat * gamma.data + beta.data, (x, gamma, beta), backward)


# ------------------- ACTIVATIONS -------------------

def sigmoid(x: Tensor) -> Tensor:
    s = expit(x.data)
    return Tensor.result(s, (x,), lambda g: x.accumulate(g * s * (1 - s)))


def silu(x: Tensor) -> Tensor:
    s = expit(x.data)
    return Tensor.result(x.data * s, (x,), lambda g: x.accumulate(g * s * (1 + x.data * (1 - s))))


def glu(x: Tensor, axis: int = -1) -> Tensor:
    """Split ``axis`` into halves (a, b) and return a * sigmoid(b)."""
    _check(x.shape[axis] % 2 == 0, f"glu needs an even size along axis {axis}, got {x.shape}")
    a, b = np.split(x.data, 2, axis=axis)
    gate = expit(b)

    def backward(g):
        x.accumulate(np.concatenate([g * gate, g * a * gate * (1 - gate)], axis=axis))
    return Tensor.result(a * gate, (x,), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    y = _softmax(x.data, axis=axis)
    return Tensor.result(y, (x,), lambda g: x.accumulate(y * (g - (g * y).sum(axis=axis, keepdims=True))))


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    y = _log_softmax(x.data, axis=axis)
    p = np.exp(y)
    return Tensor.result(y, (x,), lambda g: x.accumulate(g - p * g.sum(axis=axis, keepdims=True)))


# ------------------- REGULARIZATION / POOLING -------------------

def dropout(x: Tensor, p: float, training: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout; the identity outside training or when ``p`` is 0."""
    if not training or p <= 0:
        return x
    rng = rng if rng is not None else np.random.default_rng()
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return Tensor.result(x.data * mask, (x,), lambda g: x.accumulate(g * mask))


def avg_pool1d(x: Tensor, kernel: int, stride: Optional[int] = None) -> Tensor:
    """Average pooling over the last axis of a (B, C, N) input, dropping incomplete windows."""
    stride = stride or kernel
    length = x.shape[-1]
    _check(length >= kernel, f"avg_pool1d kernel {kernel} longer than input {length}")
    n_out = (length - kernel) // stride + 1
    index = np.arange(n_out)[:, None] * stride + np.arange(kernel)[None, :]
    windows = x.data[..., index]  # (..., n_out, kernel)

    def backward(g):
        full = np.zeros_like(x.data)
        share = g / kernel
        # window starts are distinct, so each tap scatters to unique positions
        for tap in range(kernel):
            full[..., index[:, tap]] += share
        x.accumulate(full)
    return Tensor.result(windows.mean(axis=-1), (x,), backward)


def global_avg_pool(x: Tensor, axis: int = -1) -> Tensor:
    return x.mean(axis=axis)


# ------------------- LOSS -------------------

def cross_entropy(logits: Tensor, targets: np.ndarray, smoothing: float = 0.0) -> Tensor:
    """Mean cross-entropy against label-smoothed one-hot targets."""
    _check(logits.ndim == 2, f"cross_entropy expects (B, K) logits, got {logits.shape}")
    n_classes = logits.shape[1]
    targets = np.asarray(targets, dtype=np.int64)
    soft = np.full(logits.shape, smoothing / n_classes, dtype=logits.dtype)
    soft[np.arange(len(targets)), targets] += 1.0 - smoothing
    logp = log_softmax(logits, axis=1)
    return -(logp * as_tensor(soft, logits.dtype)).sum(axis=1).mean()


PRIMITIVES: Dict[str, Callable[..., Tensor]] = {
    "linear": linear,
    "pointwise_conv1d": pointwise_conv1d,
    "depthwise_conv1d": depthwise_conv1d,
    "conv1d": conv1d,
    "batch_norm": batch_norm,
    "layer_norm": layer_norm,
    "silu": silu,
    "sigmoid": sigmoid,
    "glu": glu,
    "softmax": softmax,
    "log_softmax": log_softmax,
    "dropout": dropout,
    "avg_pool1d": avg_pool1d,
    "global_avg_pool": global_avg_pool,
}


def primitive(kind: str, *inputs, **params) -> Tensor:
    """Run the primitive named ``kind``; the result carries its gradient closure."""
    if kind not in PRIMITIVES:
        raise ShapeError(f"unknown primitive '{kind}'")
    return PRIMITIVES[kind](*inputs, **params)
