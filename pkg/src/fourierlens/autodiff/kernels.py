"""Plain numpy kernels behind the tape ops (no graph bookkeeping here)."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv_out_size(h: int, k: int, stride: int, padding: int) -> int:
    return (h + 2 * padding - k) // stride + 1


def _windows(x, kh, kw, stride, padding):
    # (B, C, Ho, Wo, kh, kw) view
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv2d(x: np.ndarray, w: np.ndarray, stride: int, padding: int) -> np.ndarray:
    """Cross-correlation, x (B,C,H,W) with w (O,C,kh,kw) -> (B,O,Ho,Wo)."""
    kh, kw = w.shape[2:]
    win = _windows(x, kh, kw, stride, padding)
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # (B,Ho,Wo,O)
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv2d_input_grad(g: np.ndarray, w: np.ndarray, x_hw: tuple[int, int], stride: int, padding: int) -> np.ndarray:
    """Adjoint of conv2d in its input argument."""
    b, _, ho, wo = g.shape
    _, c, kh, kw = w.shape
    h, wd = x_hw
    cols = np.tensordot(g, w, axes=([1], [0]))  # (B,Ho,Wo,C,kh,kw)
    cols = cols.transpose(0, 3, 4, 5, 1, 2)  # (B,C,kh,kw,Ho,Wo)
    hp, wp = h + 2 * padding, wd + 2 * padding
    out = np.zeros((b, c, hp, wp), dtype=np.result_type(g, w))
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[:, :, i, j]
    if padding:
        out = out[:, :, padding : padding + h, padding : padding + wd]
    return np.ascontiguousarray(out)


def conv2d_weight_grad(x: np.ndarray, g: np.ndarray, k_hw: tuple[int, int], stride: int, padding: int) -> np.ndarray:
    """Adjoint of conv2d in its weight argument."""
    win = _windows(x, k_hw[0], k_hw[1], stride, padding)  # (B,C,Ho,Wo,kh,kw)
    return np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))  # (O,C,kh,kw)


def avgpool2d(x: np.ndarray, k: int) -> np.ndarray:
    b, c, h, w = x.shape
    return x.reshape(b, c, h // k, k, w // k, k).mean(axis=(3, 5))


def avgpool2d_adjoint(g: np.ndarray, k: int) -> np.ndarray:
    return np.repeat(np.repeat(g, k, axis=2), k, axis=3) / (k * k)


def maxpool2d(x: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Returns pooled values and the flat in-window argmax (first max wins)."""
    b, c, h, w = x.shape
    blocks = x.reshape(b, c, h // k, k, w // k, k).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(b, c, h // k, w // k, k * k)
    idx = np.argmax(blocks, axis=-1)  # argmax returns the first occurrence
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool2d_scatter(g: np.ndarray, idx: np.ndarray, k: int) -> np.ndarray:
    b, c, ho, wo = g.shape
    blocks = np.zeros((b, c, ho, wo, k * k), dtype=g.dtype)
    np.put_along_axis(blocks, idx[..., None], g[..., None], axis=-1)
    blocks = blocks.reshape(b, c, ho, wo, k, k).transpose(0, 1, 2, 4, 3, 5)
    return blocks.reshape(b, c, ho * k, wo * k)


def maxpool2d_gather(h: np.ndarray, idx: np.ndarray, k: int) -> np.ndarray:
    b, c, hh, ww = h.shape
    blocks = h.reshape(b, c, hh // k, k, ww // k, k).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(b, c, hh // k, ww // k, k * k)
    return np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]


def dft2_packed(z: np.ndarray, inverse: bool) -> np.ndarray:
    """Unitary 2D (I)DFT over axes (-3, -2) of a (..., N, N, 2) real/imag array."""
    c = z[..., 0] + 1j * z[..., 1]
    f = np.fft.ifft2(c, norm="ortho") if inverse else np.fft.fft2(c, norm="ortho")
    return np.stack([f.real, f.imag], axis=-1).astype(z.dtype, copy=False)


def log_softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(z, axis=axis, keepdims=True)
    s = z - m
    return s - np.log(np.sum(np.exp(s), axis=axis, keepdims=True))


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(z, axis=axis, keepdims=True)
    e = np.exp(z - m)
    return e / np.sum(e, axis=axis, keepdims=True)
