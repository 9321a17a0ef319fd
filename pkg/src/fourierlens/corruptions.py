"""Frequency-targeted input transforms and the l2 PGD attack.

Images are (C, N, N) or (B, C, N, N) arrays in [0, 1]. Filters act on each
channel independently in the zero-shifted unitary Fourier domain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spectral as sp
from .errors import DegenerateSpectrumError, DimensionError
from .sensitivity import input_gradient


@dataclass(frozen=True)
class FourierMode:
    u: int
    v: int
    epsilon: float
    phase: str = "cosine"  # or "random"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.phase not in ("cosine", "random"):
            raise ValueError(f"unknown phase {self.phase!r}")


def hermitian_partner(n: int, u: int, v: int) -> tuple[int, int]:
    """Shifted index of the conjugate partner of shifted (u, v)."""
    c = n // 2
    return (2 * c - u) % n, (2 * c - v) % n


def fourier_mode_noise(n: int, mode: FourierMode, rng: np.random.Generator | None = None) -> np.ndarray:
    """Real N x N perturbation supported on one mode and its conjugate, l2 norm = epsilon."""
    if not (0 <= mode.u < n and 0 <= mode.v < n):
        raise ValueError(f"mode ({mode.u}, {mode.v}) outside {n}x{n}")
    c = n // 2
    if (mode.u, mode.v) == (c, c):
        raise ValueError("the DC mode is a brightness shift, not a Fourier-noise corruption")
    if mode.phase == "random":
        if rng is None:
            raise ValueError("random phase needs an rng")
        phi = rng.uniform(0.0, 2 * np.pi)
    else:
        phi = 0.0
    spec = np.zeros((n, n), dtype=np.complex128)
    pu, pv = hermitian_partner(n, mode.u, mode.v)
    if (pu, pv) == (mode.u, mode.v):
        # self-conjugate (Nyquist) modes carry a real coefficient
        spec[mode.u, mode.v] = 1.0 if np.cos(phi) >= 0 else -1.0
    else:
        spec[mode.u, mode.v] = np.exp(1j * phi)
        spec[pu, pv] = np.exp(-1j * phi)
    img = np.fft.ifft2(np.fft.ifftshift(spec), norm="ortho").real
    return img * (mode.epsilon / np.linalg.norm(img))


def apply_additive(image: np.ndarray, perturbation: np.ndarray, clip: bool = True) -> np.ndarray:
    out = np.asarray(image) + np.asarray(perturbation)  # (N,N) broadcasts over channels
    return np.clip(out, 0.0, 1.0) if clip else out


def _per_channel_filter(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    x = np.asarray(image, dtype=np.float64)
    if x.shape[-1] != x.shape[-2] or x.shape[-1] % 2:
        raise DimensionError(f"expected square even images, got {x.shape}")
    f = np.fft.fftshift(np.fft.fft2(x, norm="ortho"), axes=(-2, -1))
    f = f * mask
    return np.fft.ifft2(np.fft.ifftshift(f, axes=(-2, -1)), norm="ortho").real


def _sq_dist(n: int) -> np.ndarray:
    c = n // 2
    u, v = np.meshgrid(np.arange(n) - c, np.arange(n) - c, indexing="ij")
    return u * u + v * v


def _within(n: int, r: float) -> np.ndarray:
    """Exact distance <= r, compared on integer squared offsets so r = N/sqrt(2) keeps the corners."""
    return _sq_dist(n) <= r * r * (1 + 1e-12)


def radial_mask(n: int, r: float) -> np.ndarray:
    """1 where the exact distance to the center is <= r."""
    return _within(n, r).astype(np.float64)


def radial_filter(image: np.ndarray, r: float) -> np.ndarray:
    if r < 0:
        raise ValueError("radius must be non-negative")
    n = np.asarray(image).shape[-1]
    return _per_channel_filter(image, radial_mask(n, r))


def band_mask(n: int, lo: float, hi: float) -> np.ndarray:
    mask = _within(n, hi) & (_sq_dist(n) >= lo * lo * (1 - 1e-12))
    if lo == 0:
        mask[n // 2, n // 2] = True
    else:
        mask[n // 2, n // 2] = False
    return mask.astype(np.float64)


def band_pass_filter(image: np.ndarray, lo: float, hi: float, contrast_maximise: bool = False) -> np.ndarray:
    """Keep coefficients with lo <= distance <= hi (DC only when lo == 0)."""
    if lo < 0 or lo > hi:
        raise ValueError(f"need 0 <= lo <= hi, got lo={lo}, hi={hi}")
    n = np.asarray(image).shape[-1]
    out = _per_channel_filter(image, band_mask(n, lo, hi))
    if contrast_maximise:
        lo_v = out.min(axis=(-2, -1), keepdims=True)
        span = out.max(axis=(-2, -1), keepdims=True) - lo_v
        out = np.where(span > 0, (out - lo_v) / np.where(span > 0, span, 1.0), 0.0)
    return out


def patch_shuffle(image: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Split into a k x k grid of squares and permute them uniformly at random.

    One permutation is drawn per image and shared by its channels.
    """
    x = np.asarray(image)
    n = x.shape[-1]
    if k < 1 or n % k:
        raise ValueError(f"k={k} must divide the image side {n}")
    s = n // k
    lead = x.shape[:-2]
    tiles = x.reshape(*lead, k, s, k, s)
    tiles = np.moveaxis(tiles, -3, -2).reshape(*lead, k * k, s, s)  # (..., k*k, s, s)
    if x.ndim == 4:
        out = np.empty_like(tiles)
        for i in range(x.shape[0]):
            out[i] = tiles[i][:, rng.permutation(k * k)]
    else:
        out = tiles[..., rng.permutation(k * k), :, :]
    out = out.reshape(*lead, k, k, s, s)
    out = np.moveaxis(out, -2, -3).reshape(x.shape)
    return out


def gaussian_noise(image: np.ndarray, sigma: float, rng: np.random.Generator, clip: bool = True) -> np.ndarray:
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    x = np.asarray(image)
    if sigma == 0:
        return x.copy()
    out = x + rng.normal(0.0, sigma, size=x.shape)
    return np.clip(out, 0.0, 1.0) if clip else out


def _norms(d: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(d.reshape(d.shape[0], -1) ** 2, axis=1)).reshape(-1, *([1] * (d.ndim - 1)))


def pgd_l2(
    model,
    x: np.ndarray,
    y,
    epsilon: float,
    steps: int = 7,
    step_size: float | None = None,
    rng: np.random.Generator | None = None,
    random_start: bool = False,
    clip: bool = True,
    return_delta: bool = False,
    loss_fn=None,
):
    """Untargeted l2 PGD on the CE loss, per sample.

    delta <- Proj_{||delta|| <= eps}(delta + alpha * g / ||g||), starting at 0
    (or uniformly in the ball with ``random_start``). Clipping to [0, 1]
    happens once, after the last step. Samples whose gradient vanishes keep
    their delta for that step.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    alpha = epsilon / steps if step_size is None else step_size
    xb = np.asarray(x, dtype=np.float64)
    single = xb.ndim == 3
    if single:
        xb = xb[None]
    yb = np.atleast_1d(np.asarray(y, dtype=np.int64))
    delta = np.zeros_like(xb)
    if random_start:
        if rng is None:
            raise ValueError("random_start needs an rng")
        d = rng.normal(size=xb.shape)
        radius = epsilon * rng.random(len(xb)) ** (1.0 / d[0].size)
        delta = d / _norms(d) * radius.reshape(-1, *([1] * (xb.ndim - 1)))
    for _ in range(steps):
        g = input_gradient(model, xb + delta, yb, loss_fn).astype(np.float64)
        gn = _norms(g)
        ok = gn > 0
        step = np.where(ok, alpha * g / np.where(ok, gn, 1.0), 0.0)
        delta = delta + step
        dn = _norms(delta)
        delta = np.where(dn > epsilon, delta * (epsilon / np.where(dn > 0, dn, 1.0)), delta)
    x_adv = xb + delta
    if clip:
        x_adv = np.clip(x_adv, 0.0, 1.0)
    x_adv = x_adv.astype(np.asarray(x).dtype, copy=False)
    if single:
        x_adv, delta = x_adv[0], delta[0]
    return (x_adv, delta) if return_delta else x_adv


def perturbation_spectrum(delta: np.ndarray) -> sp.RadialProfile:
    """Full-normalization radial profile of the channel-averaged perturbation."""
    d = np.asarray(delta, dtype=np.float64)
    if d.ndim == 3:
        d = d.mean(axis=0)
    if d.ndim != 2:
        raise DimensionError(f"expected (C,N,N) or (N,N), got {np.asarray(delta).shape}")
    if not np.any(d):
        raise DegenerateSpectrumError("zero perturbation has no spectrum")
    return sp.radial_profile(sp.power_matrix(sp.fftshift(sp.dft2_unitary(d))))
