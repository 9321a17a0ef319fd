"""Unitary 2D DFT, zero-shifting, power matrices and radial binning.

Conventions
-----------
* Images are square ``n x n`` with ``n`` even. Odd sizes are rejected.
* The forward transform is scaled by ``1/n`` (``1/sqrt(n*n)``), which makes
  it unitary: Parseval holds and the adjoint equals the inverse.
* After shifting, DC sits at ``(n // 2, n // 2)`` (0-based).
* Radial distances are Euclidean distances to the center rounded half away
  from zero. Bins run ``k = 1 .. floor(n / sqrt(2))``; coefficients whose
  rounded radius exceeds the last bin are folded into it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ContractError, DegenerateSpectrumError, DimensionError

EPS_DIV = 1e-12


class Normalization(str, enum.Enum):
    FULL = "full"  # P_k: divide by all non-DC power
    INSCRIBED = "inscribed"  # P~_k: divide by non-DC power with radius <= n/2


def _check_square_even(shape: tuple[int, ...]) -> int:
    if len(shape) != 2 or shape[0] != shape[1]:
        raise DimensionError(f"expected a square 2D array, got shape {shape}")
    n = shape[0]
    if n < 2 or n % 2:
        raise DimensionError(f"side length must be even and >= 2, got {n}")
    return n


@dataclass(frozen=True, eq=False)
class Spectrum:
    data: np.ndarray
    n: int
    shifted: bool = False

    def __post_init__(self):
        data = np.array(self.data, dtype=np.complex128)
        n = _check_square_even(data.shape)
        if n != self.n:
            raise DimensionError(f"data is {n}x{n} but n={self.n}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)


@dataclass(frozen=True, eq=False)
class PowerMatrix:
    p: np.ndarray
    n: int


@dataclass(frozen=True, eq=False)
class RadialIndexMap:
    n: int
    center: tuple[int, int]
    radius_of: np.ndarray  # rounded, unclipped
    counts: np.ndarray  # counts[r] for r = 0 .. radius_of.max()

    @property
    def n_bins(self) -> int:
        return n_radial_bins(self.n)

    def binned(self) -> np.ndarray:
        """Radius per cell with the outer corners folded into the last bin."""
        return np.minimum(self.radius_of, self.n_bins)

    def bin_counts(self) -> np.ndarray:
        """Number of cells per bin, index 0 is DC, index k is bin k."""
        return np.bincount(self.binned().ravel(), minlength=self.n_bins + 1)


@dataclass(frozen=True, eq=False)
class RadialProfile:
    values: np.ndarray  # values[k - 1] is bin k
    normalization: Normalization

    @property
    def radii(self) -> np.ndarray:
        return np.arange(1, len(self.values) + 1)

    def __getitem__(self, k: int) -> float:
        """1-based access, matching radius indices."""
        if not 1 <= k <= len(self.values):
            raise IndexError(k)
        return float(self.values[k - 1])


def n_radial_bins(n: int) -> int:
    return int(math.floor(n / math.sqrt(2)))


def dft2_unitary(image: np.ndarray) -> Spectrum:
    """Unshifted unitary DFT of a real square image."""
    x = np.asarray(image)
    n = _check_square_even(x.shape)
    if not np.all(np.isfinite(x)):
        raise ValueError("image contains non-finite values")
    data = np.fft.fft2(x.astype(np.float64, copy=False), norm="ortho")
    return Spectrum(data, n, shifted=False)


def idft2_unitary(spec: Spectrum, real: bool = False, tol: float = 1e-6) -> np.ndarray:
    """Inverse of :func:`dft2_unitary`.

    With ``real=True`` the imaginary residue is checked against ``tol``
    (relative to the largest magnitude) and the real part is returned.
    """
    if spec.shifted:
        raise ContractError("idft2_unitary expects an unshifted spectrum; call ifftshift first")
    out = np.fft.ifft2(spec.data, norm="ortho")
    if real:
        residue = imaginary_residue(out)
        if residue > tol:
            raise ValueError(f"spectrum is not Hermitian: imaginary residue {residue:.3g} > {tol:g}")
        return out.real.copy()
    return out


def imaginary_residue(z: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(z))), 1.0)
    return float(np.max(np.abs(z.imag))) / scale


def fftshift(spec: Spectrum) -> Spectrum:
    if spec.shifted:
        return spec
    return Spectrum(np.fft.fftshift(spec.data), spec.n, shifted=True)


def ifftshift(spec: Spectrum) -> Spectrum:
    if not spec.shifted:
        return spec
    return Spectrum(np.fft.ifftshift(spec.data), spec.n, shifted=False)


def power_matrix(spec: Spectrum) -> PowerMatrix:
    if not spec.shifted:
        raise ContractError("power_matrix expects a shifted spectrum")
    d = spec.data
    return PowerMatrix(d.real**2 + d.imag**2, spec.n)


@lru_cache(maxsize=None)
def _radius_grid(n: int) -> np.ndarray:
    c = n // 2
    u, v = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    dist = np.sqrt((u - c) ** 2 + (v - c) ** 2)
    r = np.floor(dist + 0.5).astype(np.int64)  # half away from zero for dist >= 0
    r.setflags(write=False)
    return r


@lru_cache(maxsize=None)
def distance_grid(n: int) -> np.ndarray:
    """Exact (unrounded) distance of every shifted cell to the center."""
    c = n // 2
    u, v = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    d = np.sqrt((u - c) ** 2 + (v - c) ** 2)
    d.setflags(write=False)
    return d


def radial_index_map(n: int) -> RadialIndexMap:
    if n < 2 or n % 2:
        raise DimensionError(f"side length must be even and >= 2, got {n}")
    r = _radius_grid(n)
    return RadialIndexMap(n=n, center=(n // 2, n // 2), radius_of=r, counts=np.bincount(r.ravel()))


@lru_cache(maxsize=None)
def binning_matrix(n: int, shifted: bool = True) -> np.ndarray:
    """``(n*n, n_bins)`` 0/1 matrix mapping flattened power to radial bins 1..K.

    DC maps to no column. With ``shifted=False`` rows follow the unshifted
    layout, so the matrix can be applied directly to unshifted spectra.
    """
    rmap = radial_index_map(n)
    binned = rmap.binned()
    if not shifted:
        binned = np.fft.ifftshift(binned)
    k = rmap.n_bins
    m = np.zeros((n * n, k))
    flat = binned.ravel()
    rows = np.nonzero(flat > 0)[0]
    m[rows, flat[rows] - 1] = 1.0
    m.setflags(write=False)
    return m


def band_powers(p: PowerMatrix, rmap: RadialIndexMap | None = None) -> np.ndarray:
    """Raw (unnormalized) power per bin k = 1 .. K."""
    rmap = rmap or radial_index_map(p.n)
    if rmap.n != p.n:
        raise DimensionError(f"power matrix n={p.n} but index map n={rmap.n}")
    sums = np.bincount(rmap.binned().ravel(), weights=p.p.ravel(), minlength=rmap.n_bins + 1)
    return sums[1:]


def radial_profile(
    p: PowerMatrix,
    rmap: RadialIndexMap | None = None,
    normalization: Normalization | str = Normalization.FULL,
) -> RadialProfile:
    normalization = Normalization(normalization)
    bands = band_powers(p, rmap)
    if normalization is Normalization.FULL:
        total = bands.sum()
    else:
        total = bands[: p.n // 2].sum()
    if not total > EPS_DIV:
        raise DegenerateSpectrumError(
            f"non-DC power {total:.3g} is below {EPS_DIV:g}; the gradient has vanished"
        )
    return RadialProfile(bands / total, normalization)


def image_profile(image: np.ndarray, normalization: Normalization | str = Normalization.FULL) -> RadialProfile:
    """Radial power profile of a real 2D array (convenience wrapper)."""
    spec = fftshift(dft2_unitary(image))
    return radial_profile(power_matrix(spec), normalization=normalization)


def band_masses(profile: RadialProfile, n: int) -> tuple[float, float, float]:
    """(low, mid, high) mass split at n/6 and n/3.

    low = sum k <= n/6, mid = n/6 < k <= n/3, high = k > n/3.
    """
    k = profile.radii
    v = profile.values
    low = float(v[k <= n / 6].sum())
    mid = float(v[(k > n / 6) & (k <= n / 3)].sum())
    high = float(v[k > n / 3].sum())
    return low, mid, high


def profile_entropy(values: np.ndarray) -> float:
    """Shannon entropy (nats) of a non-negative vector normalized to sum 1."""
    v = np.asarray(values, dtype=np.float64)
    v = v / v.sum()
    nz = v[v > 0]
    return float(-(nz * np.log(nz)).sum())
