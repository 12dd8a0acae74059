"""Pure-numpy hot kernels (fallback backend): depthwise temporal conv + SiLU."""

from __future__ import annotations

import numpy as np


def dwconv_forward(h: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Depthwise conv over the time axis, zero 'same' padding.

    h: (B, T, C); kernel: (K, C) with K odd. out[b,t,c] = sum_j k[j,c] * h[b,t+j-K//2,c].
    """
    b, t, c = h.shape
    k = kernel.shape[0]
    pad = k // 2
    hp = np.zeros((b, t + 2 * pad, c), dtype=h.dtype)
    hp[:, pad : pad + t, :] = h
    out = np.zeros_like(h)
    for j in range(k):
        out += kernel[j] * hp[:, j : j + t, :]
    return out


def dwconv_backward(h: np.ndarray, kernel: np.ndarray, dout: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients w.r.t. input and kernel for dwconv_forward."""
    b, t, c = h.shape
    k = kernel.shape[0]
    pad = k // 2
    hp = np.zeros((b, t + 2 * pad, c), dtype=h.dtype)
    hp[:, pad : pad + t, :] = h

    dhp = np.zeros_like(hp)
    dk = np.zeros_like(kernel)
    for j in range(k):
        dhp[:, j : j + t, :] += kernel[j] * dout
        dk[j] = np.einsum("btc,btc->c", dout, hp[:, j : j + t, :])
    return dhp[:, pad : pad + t, :], dk


def silu(u: np.ndarray) -> np.ndarray:
    """x * sigmoid(x), elementwise."""
    return u / (1.0 + np.exp(-u))


def silu_grad(u: np.ndarray) -> np.ndarray:
    """Derivative of silu, elementwise."""
    s = 1.0 / (1.0 + np.exp(-u))
    return s * (1.0 + u * (1.0 - s))
