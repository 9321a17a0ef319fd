"""Robustness evaluations over a dataset: filtering, Fourier-mode noise,
patch-shuffle and PGD perturbation spectra."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import spearmanr

from .. import spectral as sp
from ..corruptions import FourierMode, apply_additive, fourier_mode_noise, patch_shuffle, perturbation_spectrum, pgd_l2, radial_filter
from ..errors import DegenerateSpectrumError


def _ordered_map(fn, items, threads: int) -> list:
    """map() that keeps input order; results do not depend on the schedule."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def sample_indices(total: int, n_samples: int | None, seed: int) -> np.ndarray:
    if n_samples is None or n_samples >= total:
        return np.arange(total)
    return np.sort(np.random.default_rng(seed).choice(total, size=n_samples, replace=False))


def sample_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for one (seed, stream...) coordinate."""
    return np.random.default_rng(np.random.SeedSequence([seed, *stream]))


def filter_eval(model, dataset, radii) -> list[tuple[float, float]]:
    """Rows (r, accuracy) under the per-channel radial low-pass mask."""
    images, labels = dataset.images, dataset.labels
    rows = []
    for r in radii:
        filtered = radial_filter(images, float(r)).astype(images.dtype)
        rows.append((float(r), model.accuracy(filtered, labels)))
    return rows


def patch_eval(model, dataset, ks, seed: int = 0) -> list[tuple[int, float]]:
    """Rows (k, accuracy) under k x k patch-shuffle; sample i uses stream (seed, k, i)."""
    images, labels = dataset.images, dataset.labels
    rows = []
    for k in ks:
        shuffled = np.stack([patch_shuffle(img, int(k), sample_rng(seed, int(k), i)) for i, img in enumerate(images)])
        rows.append((int(k), model.accuracy(shuffled, labels)))
    return rows


def heatmap_modes(n: int) -> list[tuple[int, int]]:
    """Non-DC shifted indices (u, v) that are lexicographically <= their conjugate partner."""
    c = n // 2
    out = []
    for u in range(n):
        for v in range(n):
            if (u, v) == (c, c):
                continue
            if (u, v) <= ((2 * c - u) % n, (2 * c - v) % n):
                out.append((u, v))
    return out


@dataclass
class Heatmap:
    errors: np.ndarray  # (N, N) error rate per shifted mode; DC left at 0
    evaluated: np.ndarray  # (N, N) bool, False only at DC
    epsilon: float
    n_samples: int

    def per_radius(self) -> np.ndarray:
        """Mean error over the evaluated cells of each rounded radius k = 1..K."""
        n = self.errors.shape[0]
        r = sp.radial_index_map(n).binned()
        out = np.zeros(sp.n_radial_bins(n))
        for k in range(1, len(out) + 1):
            cells = (r == k) & self.evaluated
            out[k - 1] = self.errors[cells].mean()
        return out


def fourier_noise_heatmap(model, dataset, epsilon: float, n_samples: int | None = None, seed: int = 0, threads: int = 1) -> Heatmap:
    """Error rate when one cosine Fourier mode of l2 norm epsilon is added to
    every sampled image, for each mode of the half-plane; the conjugate cell
    gets the same value."""
    n = dataset.n
    idx = sample_indices(len(dataset), n_samples, seed)
    images, labels = dataset.images[idx], dataset.labels[idx]
    modes = heatmap_modes(n)

    def error_at(mode):
        noise = fourier_mode_noise(n, FourierMode(mode[0], mode[1], epsilon))
        noisy = apply_additive(images, noise, clip=True).astype(images.dtype)
        return float(np.mean(model.predict(noisy) != labels))

    rates = _ordered_map(error_at, modes, threads)
    errors = np.zeros((n, n))
    evaluated = np.zeros((n, n), dtype=bool)
    c = n // 2
    for (u, v), e in zip(modes, rates):
        pu, pv = (2 * c - u) % n, (2 * c - v) % n
        errors[u, v] = errors[pu, pv] = e
        evaluated[u, v] = evaluated[pu, pv] = True
    return Heatmap(errors, evaluated, float(epsilon), len(idx))


def fourier_noise_eval(model, dataset, eps_list, n_samples: int | None = None, seed: int = 0, threads: int = 1):
    """Rows (epsilon, k, error): per-radius mean heatmap error for each epsilon."""
    rows, maps = [], []
    for eps in eps_list:
        hm = fourier_noise_heatmap(model, dataset, eps, n_samples, seed, threads)
        maps.append(hm)
        for k, e in enumerate(hm.per_radius(), start=1):
            rows.append((float(eps), k, e))
    return rows, maps


def sensitivity_density(profile_values: np.ndarray, n: int) -> np.ndarray:
    """Per-coefficient sensitivity: the radius-k share divided by its cell count."""
    counts = sp.radial_index_map(n).bin_counts()[1:]
    return np.asarray(profile_values, dtype=np.float64) / counts


def rank_alignment(a, b) -> float | None:
    """Spearman rank correlation (average ranks for ties); None when either side is constant."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return None
    return float(spearmanr(a, b).statistic)


@dataclass
class AttackSpectrum:
    mean_profile: sp.RadialProfile
    n_used: int
    n_zero: int
    success_rate: float

    def low_mass(self, n: int) -> float:
        return sp.band_masses(self.mean_profile, n)[0]


def attack_spectrum(
    model,
    dataset,
    epsilon: float,
    steps: int = 7,
    step_size: float | None = None,
    n_samples: int | None = 64,
    seed: int = 0,
) -> AttackSpectrum:
    """Mean full-normalization profile of per-sample PGD perturbations."""
    idx = sample_indices(len(dataset), n_samples, seed)
    x, y = dataset.images[idx], dataset.labels[idx]
    x_adv, delta = pgd_l2(model, x, y, epsilon, steps=steps, step_size=step_size, return_delta=True)
    profiles, zero = [], 0
    for d in delta:
        try:
            profiles.append(perturbation_spectrum(d).values)
        except DegenerateSpectrumError:
            zero += 1
    if not profiles:
        raise DegenerateSpectrumError("every PGD perturbation vanished")
    success = float(np.mean(model.predict(x_adv) != y))
    mean = sp.RadialProfile(np.mean(profiles, axis=0), sp.Normalization.FULL)
    return AttackSpectrum(mean, len(profiles), zero, success)
