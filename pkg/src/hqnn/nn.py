"""A minimal NumPy network stack: valid convolution, average pooling, dense
layers, ReLU, softmax cross-entropy and Adam.

Forward functions accept an optional leading batch axis.  Each ``*_backward``
returns the vector-Jacobian products for the matching forward call.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError(f"inconsistent dense shapes {self.weights.shape}, {self.bias.shape}")

    @classmethod
    def init(cls, n_in: int, n_out: int, rng: np.random.Generator) -> "DenseLayer":
        limit = np.sqrt(6.0 / (n_in + n_out))
        return cls(rng.uniform(-limit, limit, (n_out, n_in)), np.zeros(n_out))


@dataclass
class Conv2DLayer:
    kernel: np.ndarray  # (out_ch, in_ch, kh, kw)
    bias: np.ndarray  # (out_ch,)
    stride: int = 1

    def __post_init__(self):
        if self.kernel.ndim != 4 or self.bias.shape != (self.kernel.shape[0],):
            raise ValueError(f"inconsistent conv shapes {self.kernel.shape}, {self.bias.shape}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")

    @classmethod
    def init(cls, in_ch: int, out_ch: int, size: int, rng: np.random.Generator,
             stride: int = 1) -> "Conv2DLayer":
        fan_in = in_ch * size * size
        limit = np.sqrt(6.0 / fan_in)
        return cls(rng.uniform(-limit, limit, (out_ch, in_ch, size, size)), np.zeros(out_ch), stride)


def _batched(x: np.ndarray, ndim: int):
    x = np.asarray(x, dtype=float)
    if x.ndim == ndim:
        return x[None], True
    if x.ndim != ndim + 1:
        raise ValueError(f"expected {ndim}-d input (optionally batched), got shape {x.shape}")
    return x, False


def _windows(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    # x: (B, C, H, W) -> (B, C, H', W', kh, kw)
    return sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]


def conv2d_forward(layer: Conv2DLayer, x: np.ndarray) -> np.ndarray:
    x, single = _batched(x, 3)
    out_ch, in_ch, kh, kw = layer.kernel.shape
    if x.shape[1] != in_ch:
        raise ValueError(f"expected {in_ch} input channels, got {x.shape[1]}")
    if x.shape[2] < kh or x.shape[3] < kw:
        raise ValueError(f"input {x.shape[2:]} smaller than kernel {(kh, kw)}")
    win = _windows(x, kh, kw, layer.stride)
    out = np.einsum("bchwij,ocij->bohw", win, layer.kernel, optimize=True)
    out += layer.bias[None, :, None, None]
    return out[0] if single else out


def conv2d_backward(layer: Conv2DLayer, x: np.ndarray, grad_out: np.ndarray):
    """Return ``(d_kernel, d_bias, d_input)``; batch gradients are summed."""
    x, single = _batched(x, 3)
    g = grad_out[None] if single else grad_out
    _, _, kh, kw = layer.kernel.shape
    s = layer.stride
    win = _windows(x, kh, kw, s)
    d_kernel = np.einsum("bchwij,bohw->ocij", win, g, optimize=True)
    d_bias = g.sum(axis=(0, 2, 3))
    d_x = np.zeros_like(x)
    ho, wo = g.shape[2], g.shape[3]
    contrib = np.einsum("bohw,ocij->bchwij", g, layer.kernel, optimize=True)
    for i in range(kh):
        for j in range(kw):
            d_x[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s] += contrib[..., i, j]
    return d_kernel, d_bias, (d_x[0] if single else d_x)


def avgpool_forward(x: np.ndarray, window: int) -> np.ndarray:
    x, single = _batched(x, 3)
    b, c, h, w = x.shape
    if h % window or w % window:
        raise ValueError(f"window {window} does not divide input {h}x{w}")
    out = x.reshape(b, c, h // window, window, w // window, window).mean(axis=(3, 5))
    return out[0] if single else out


def avgpool_backward(grad_out: np.ndarray, window: int) -> np.ndarray:
    g = np.repeat(np.repeat(grad_out, window, axis=-2), window, axis=-1)
    return g / (window * window)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * (x > 0)


def dense_forward(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != layer.weights.shape[1]:
        raise ValueError(f"dense layer expects {layer.weights.shape[1]} inputs, got {x.shape[-1]}")
    return x @ layer.weights.T + layer.bias


def dense_backward(layer: DenseLayer, x: np.ndarray, grad_out: np.ndarray):
    """Return ``(d_weights, d_bias, d_input)``; batch gradients are summed."""
    x2 = np.atleast_2d(x)
    g2 = np.atleast_2d(grad_out)
    d_w = g2.T @ x2
    d_b = g2.sum(axis=0)
    d_x = grad_out @ layer.weights
    return d_w, d_b, d_x


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, label):
    """Loss ``-log softmax(logits)[label]`` and its gradient w.r.t. the logits.

    With a batch of logits (B, C) and labels (B,), returns per-sample losses
    and per-sample gradients.
    """
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(label)
    c = logits.shape[-1]
    if c < 2:
        raise ValueError("need at least two classes")
    if np.any(labels < 0) or np.any(labels >= c):
        raise ValueError(f"label out of range for {c} classes: {label}")
    z = logits - np.max(logits, axis=-1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=-1))
    onehot = np.eye(c)[labels]
    loss = log_norm - np.sum(z * onehot, axis=-1)
    grad = softmax(logits) - onehot
    return (float(loss) if loss.ndim == 0 else loss), grad


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params, grads, key="param"):
    """One bias-corrected Adam update of a single array; returns the new array.

    ``state`` is advanced in place. To update several arrays under one step
    counter use :func:`adam_update`.
    """
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape:
        raise ValueError(f"shape mismatch: params {params.shape} vs grads {grads.shape}")
    state.step += 1
    return _adam_apply(state, key, params, grads)


def _adam_apply(state: AdamState, key, params, grads):
    m = state.m.get(key, np.zeros_like(params))
    v = state.v.get(key, np.zeros_like(params))
    if m.shape != params.shape:
        raise ValueError(f"moment shape {m.shape} does not match {params.shape}")
    m = state.beta1 * m + (1 - state.beta1) * grads
    v = state.beta2 * v + (1 - state.beta2) * grads**2
    state.m[key], state.v[key] = m, v
    m_hat = m / (1 - state.beta1**state.step)
    v_hat = v / (1 - state.beta2**state.step)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def adam_update(state: AdamState, params: dict, grads: dict) -> dict:
    """Adam over a dict of named arrays sharing one step counter."""
    state.step += 1
    return {k: _adam_apply(state, k, params[k], grads[k]) if k in grads else params[k]
            for k in params}
