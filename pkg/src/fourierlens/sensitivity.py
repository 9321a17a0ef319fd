"""Fourier-sensitivity of differentiable image models.

The input-gradient of the loss is channel-averaged, passed through the unitary
DFT and binned by radius. Because the inverse DFT is unitary, the transformed
gradient is exactly the gradient with respect to the Fourier coordinates of
the input; :func:`basis_trick_check` verifies that numerically for any
operator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from . import spectral as sp
from .autodiff import Tensor
from .errors import ContractError, DegenerateSpectrumError, DimensionError

# (x batch as Tensor, labels) -> scalar Tensor, summed over samples so that the
# gradient of sample i only involves sample i's loss.
LossFn = Callable[[Tensor, np.ndarray], Tensor]


def ce_sum_loss(model) -> LossFn:
    def loss(x: Tensor, y: np.ndarray) -> Tensor:
        logits = model(x)
        return ad.softmax_cross_entropy(logits, y) * float(x.shape[0])

    return loss


def _batched(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x)
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise DimensionError(f"expected (C,N,N) or (B,C,N,N), got {x.shape}")


def input_gradient(model, x, y, loss_fn: LossFn | None = None) -> np.ndarray:
    """Gradient of the per-sample CE loss with respect to the pixels.

    Accepts one sample (C,N,N) with a scalar label, or a batch.
    """
    xb, single = _batched(x)
    yb = np.atleast_1d(np.asarray(y, dtype=np.int64))
    loss_fn = loss_fn or ce_sum_loss(model)
    dtype = getattr(getattr(model, "cfg", None), "dtype", np.float64)
    leaf = ad.parameter(np.array(xb, dtype=dtype))
    g = ad.grad_input(loss_fn(leaf, yb), leaf).data
    return g[0] if single else g


def fourier_input_gradient(model, x, y, loss_fn: LossFn | None = None) -> sp.Spectrum:
    """Shifted unitary DFT of the channel-averaged input-gradient of one sample."""
    g = input_gradient(model, x, y, loss_fn)
    if g.ndim != 3:
        raise DimensionError("fourier_input_gradient takes a single sample")
    return sp.fftshift(sp.dft2_unitary(g.mean(axis=0)))


def gradient_power_maps(grads: np.ndarray) -> np.ndarray:
    """(B,C,N,N) input-gradients -> (B,N,N) shifted power matrices."""
    g = np.asarray(grads, dtype=np.float64).mean(axis=1)
    f = np.fft.fftshift(np.fft.fft2(g, norm="ortho"), axes=(-2, -1))
    return f.real**2 + f.imag**2


def sample_sensitivity(model, x, y, loss_fn: LossFn | None = None) -> sp.RadialProfile:
    spec = fourier_input_gradient(model, x, y, loss_fn)
    return sp.radial_profile(sp.power_matrix(spec))


def coordinate_fd_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, a: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central differences of f with respect to the coordinates x_a = A^{-1} x.

    The image is reconstructed as Re(A x_a); for complex A the result is
    d/dRe + i d/dIm per coordinate.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    a = np.asarray(a)
    m = x.size
    if a.shape != (m, m):
        raise DimensionError(f"operator must be {m}x{m}, got {a.shape}")
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > 1e12:
        raise ValueError("operator is not invertible")
    xa = np.linalg.solve(a, x.astype(np.result_type(a, np.float64)))

    def f_a(coords):
        return f(np.real(a @ coords))

    complex_op = np.iscomplexobj(a)
    fd = np.zeros(m, dtype=np.complex128)
    for i in range(m):
        e = np.zeros(m, dtype=xa.dtype)
        e[i] = step
        d_re = (f_a(xa + e) - f_a(xa - e)) / (2 * step)
        d_im = (f_a(xa + 1j * e) - f_a(xa - 1j * e)) / (2 * step) if complex_op else 0.0
        fd[i] = d_re + 1j * d_im
    return fd


def basis_trick_check(
    f: Callable[[np.ndarray], float],
    grad_f: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    a: np.ndarray,
    step: float = 1e-5,
    require_unitary: bool = True,
    unitary_tol: float = 1e-8,
    relative: bool = False,
) -> float:
    """Max residual between A^{-1} J_f(x) and finite differences in A-coordinates.

    ``x`` is a real vector of length m, ``a`` an invertible (m, m) matrix,
    possibly complex, with x = A x_a. The identity holds iff A is unitary;
    pass ``require_unitary=False`` to measure how it fails for other
    operators. With ``relative`` the residual is divided by max |A^{-1} J|.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    a = np.asarray(a)
    m = x.size
    if a.shape != (m, m):
        raise DimensionError(f"operator must be {m}x{m}, got {a.shape}")
    if require_unitary:
        gram = a.conj().T @ a
        if np.max(np.abs(gram - np.eye(m))) > unitary_tol:
            raise ContractError("operator is not unitary within tolerance")
    fd = coordinate_fd_gradient(f, x, a, step)
    predicted = np.linalg.solve(a, np.asarray(grad_f(x), dtype=np.float64).ravel().astype(np.result_type(a, np.float64)))
    residual = float(np.max(np.abs(predicted - fd)))
    if relative:
        scale = float(np.max(np.abs(predicted)))
        return residual / scale if scale > 0 else residual
    return residual


def unitary_dft_matrix(n: int) -> np.ndarray:
    """(n*n, n*n) matrix of the unitary 2D DFT on row-major flattened images.

    Its conjugate transpose is the inverse transform, the operator whose
    coordinates are the Fourier coefficients.
    """
    w = np.exp(-2j * np.pi * np.outer(np.arange(n), np.arange(n)) / n) / np.sqrt(n)
    return np.kron(w, w)


@dataclass
class SensitivityReport:
    mean: sp.RadialProfile
    std: np.ndarray
    n_samples: int
    n_skipped: int
    fingerprint: str
    full_map: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def band_masses(self, n: int) -> tuple[float, float, float]:
        return sp.band_masses(self.mean, n)


def _profiles_from_power(power: np.ndarray, n: int):
    """Per-sample full profiles; degenerate rows come back as None."""
    rmap = sp.radial_index_map(n)
    out = []
    for p in power:
        try:
            out.append(sp.radial_profile(sp.PowerMatrix(p, n), rmap).values)
        except DegenerateSpectrumError:
            out.append(None)
    return out


def model_sensitivity(
    model,
    dataset,
    n_samples: int,
    seed: int = 0,
    with_full_map: bool = False,
    loss_fn: LossFn | None = None,
    batch_size: int = 128,
) -> SensitivityReport:
    """Mean and sample std of per-sample profiles over a seeded random subset."""
    images, labels = np.asarray(dataset.images), np.asarray(dataset.labels)
    if n_samples > len(images):
        raise ValueError(f"n_samples={n_samples} exceeds dataset size {len(images)}")
    idx = np.random.default_rng(seed).choice(len(images), size=n_samples, replace=False)
    return sensitivity_of(model, images[idx], labels[idx], with_full_map, loss_fn, batch_size)


def sensitivity_of(model, images, labels, with_full_map=False, loss_fn=None, batch_size=128) -> SensitivityReport:
    """Sensitivity report over exactly the given samples, in order."""
    n = images.shape[-1]
    profiles, maps = [], []
    for i in range(0, len(images), batch_size):
        grads = input_gradient(model, images[i : i + batch_size], labels[i : i + batch_size], loss_fn)
        power = gradient_power_maps(grads)
        for prof, p in zip(_profiles_from_power(power, n), power):
            profiles.append(prof)
            if prof is not None and with_full_map:
                total = p.sum() - p[n // 2, n // 2]
                maps.append(p / total)
    valid = [p for p in profiles if p is not None]
    skipped = len(profiles) - len(valid)
    if not valid:
        raise DegenerateSpectrumError("every sampled input-gradient is degenerate")
    stack = np.stack(valid)
    std = stack.std(axis=0, ddof=1) if len(valid) > 1 else np.zeros(stack.shape[1])
    std[np.ptp(stack, axis=0) == 0] = 0.0  # the rounded mean can leave ~1e-17 on constant columns
    fingerprint = model.fingerprint() if hasattr(model, "fingerprint") else "custom"
    return SensitivityReport(
        mean=sp.RadialProfile(stack.mean(axis=0), sp.Normalization.FULL),
        std=std,
        n_samples=len(valid),
        n_skipped=skipped,
        fingerprint=fingerprint,
        full_map=np.mean(maps, axis=0) if with_full_map else None,
        metadata={"std": "sample (ddof=1)", "full_map": "per-sample power / P_Total, then mean"},
    )
