"""Datasets: CIFAR-10 binary batches and frequency-planted synthetic images."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .. import spectral as sp
from ..errors import ConfigError, DimensionError, FormatError

CIFAR_RECORD = 1 + 3 * 32 * 32
SPLITS = ("train", "test")


@dataclass
class Dataset:
    images: np.ndarray  # (B, C, N, N) float32 in [0, 1]
    labels: np.ndarray  # (B,) int64
    classes: int
    split: str = "train"
    provenance: str = ""

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4 and len(self.images):
            raise DimensionError(f"images must be (B, C, N, N), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise DimensionError("images and labels differ in length")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise ValueError("labels out of range for class count")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n(self) -> int:
        return self.images.shape[-1]

    @property
    def channels(self) -> int:
        return self.images.shape[1]

    def subset(self, idx, split: str | None = None) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.images[idx], self.labels[idx], self.classes, split or self.split, self.provenance)


def load_cifar_binary(path, max_samples: int | None = None) -> Dataset:
    """Parse CIFAR-10 binary records: 1 label byte + 3072 channel-planar pixel bytes."""
    blob = Path(path).read_bytes()
    if len(blob) % CIFAR_RECORD:
        offset = len(blob) - len(blob) % CIFAR_RECORD
        raise FormatError(f"truncated CIFAR record starting at byte offset {offset}")
    count = len(blob) // CIFAR_RECORD
    if max_samples is not None:
        count = min(count, max_samples)
    raw = np.frombuffer(blob, dtype=np.uint8, count=count * CIFAR_RECORD).reshape(count, CIFAR_RECORD)
    labels = raw[:, 0].astype(np.int64)
    bad = np.nonzero(labels >= 10)[0]
    if bad.size:
        raise FormatError(f"label byte {labels[bad[0]]} >= 10 at byte offset {bad[0] * CIFAR_RECORD}")
    images = raw[:, 1:].reshape(count, 3, 32, 32).astype(np.float32) / 255.0
    return Dataset(images, labels, classes=10, split="train", provenance=f"cifar10-binary:{Path(path).name}")


@dataclass(frozen=True)
class SynthConfig:
    n: int = 16
    classes: int = 4
    class_bands: tuple[tuple[int, int], ...] = ((1, 2), (3, 4), (5, 6), (7, 8))
    distractor_band: tuple[int, int] | None = None
    distractor_amplitude: float = 0.0
    # optional class-correlated high-band cue, one band per class
    shortcut_bands: tuple[tuple[int, int], ...] | None = None
    shortcut_amplitude: float = 0.0
    samples_per_class: int = 500
    noise_sigma: float = 0.0
    # "random": fresh phases per image, so classes differ in band energy only;
    # "fixed": one phase set per class (a template), so class evidence is linear
    phases: str = "random"
    channels: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "class_bands", tuple(tuple(int(v) for v in b) for b in self.class_bands))
        if self.distractor_band is not None:
            object.__setattr__(self, "distractor_band", tuple(int(v) for v in self.distractor_band))
        if self.shortcut_bands is not None:
            object.__setattr__(self, "shortcut_bands", tuple(tuple(int(v) for v in b) for b in self.shortcut_bands))
        validate_synth(self)


def validate_synth(cfg: SynthConfig) -> None:
    if cfg.n < 2 or cfg.n % 2:
        raise ConfigError(f"n must be even, got {cfg.n}")
    if len(cfg.class_bands) != cfg.classes:
        raise ConfigError(f"{cfg.classes} classes but {len(cfg.class_bands)} bands")
    top = sp.n_radial_bins(cfg.n)
    _check_disjoint(cfg.class_bands, top, "class")
    if cfg.shortcut_bands is not None:
        if len(cfg.shortcut_bands) != cfg.classes:
            raise ConfigError(f"{cfg.classes} classes but {len(cfg.shortcut_bands)} shortcut bands")
        _check_disjoint(cfg.shortcut_bands, top, "shortcut")
    if cfg.distractor_band is not None:
        lo, hi = cfg.distractor_band
        if not 1 <= lo <= hi <= top:
            raise ConfigError(f"distractor band ({lo}, {hi}) outside 1..{top}")
    if cfg.phases not in ("random", "fixed"):
        raise ConfigError(f"phases must be 'random' or 'fixed', got {cfg.phases!r}")
    if min(cfg.distractor_amplitude, cfg.shortcut_amplitude, cfg.noise_sigma) < 0:
        raise ConfigError("amplitudes must be non-negative")


def _check_disjoint(bands, top: int, what: str) -> None:
    for lo, hi in bands:
        if not 1 <= lo <= hi <= top:
            raise ConfigError(f"{what} band ({lo}, {hi}) outside 1..{top}")
    ordered = sorted(bands)
    for (_, hi), (lo, _) in zip(ordered, ordered[1:]):
        if lo <= hi:
            raise ConfigError(f"{what} bands overlap: {ordered}")


def band_modes(n: int, lo: int, hi: int) -> np.ndarray:
    """One representative per conjugate pair of shifted cells with rounded radius in [lo, hi]."""
    r = sp.radial_index_map(n).binned()
    c = n // 2
    picked = []
    seen = set()
    for u in range(n):
        for v in range(n):
            if not lo <= r[u, v] <= hi or (u, v) == (c, c):
                continue
            partner = ((2 * c - u) % n, (2 * c - v) % n)
            if partner in seen:
                continue
            seen.add((u, v))
            picked.append((u, v))
    return np.array(picked, dtype=np.int64).reshape(-1, 2)


def _mode_images(n: int, modes: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """(S, M) phases for M modes -> (S, N, N) sum of unit-norm real modes."""
    c = n // 2
    out = np.zeros((phases.shape[0], n, n))
    a = np.arange(n)
    for (u, v), phi in zip(modes, phases.T):
        fu, fv = (u - c) / n, (v - c) / n
        arg = 2 * np.pi * (fu * a[:, None] + fv * a[None, :])
        pattern_c = np.cos(arg)
        pattern_s = np.sin(arg)
        nc, ns = np.linalg.norm(pattern_c), np.linalg.norm(pattern_s)
        if ns < 1e-9:  # self-conjugate mode: only the cosine exists
            out += np.sign(np.cos(phi))[:, None, None] * (pattern_c / nc)
        else:
            # cos(arg + phi) has norm sqrt(n*n/2) for non-self-conjugate modes
            unit = np.sqrt(2.0) / n
            out += unit * (np.cos(phi)[:, None, None] * pattern_c - np.sin(phi)[:, None, None] * pattern_s)
    return out


def _minmax(x: np.ndarray) -> np.ndarray:
    lo = x.min(axis=(-2, -1), keepdims=True)
    span = x.max(axis=(-2, -1), keepdims=True) - lo
    return (x - lo) / np.where(span > 0, span, 1.0)


def gen_synthetic_freq_dataset(cfg: SynthConfig, split: str = "train") -> Dataset:
    """Each image is the sum of all class-band modes with random phases (unit
    norm each), plus shared distractor-band modes scaled by the distractor
    amplitude, plus a Gaussian floor, min-max normalized per channel.
    With ``shortcut_bands`` set, class c also gets the modes of its shortcut
    band scaled by ``shortcut_amplitude``: a redundant high-frequency cue.
    """
    if split not in SPLITS:
        raise ConfigError(f"split must be one of {SPLITS}, got {split!r}")
    rng = np.random.default_rng([cfg.seed, SPLITS.index(split)])
    n = cfg.n
    total = cfg.classes * cfg.samples_per_class
    labels = np.repeat(np.arange(cfg.classes), cfg.samples_per_class)
    labels = labels[rng.permutation(total)]
    images = np.zeros((total, cfg.channels, n, n))
    distract = band_modes(n, *cfg.distractor_band) if cfg.distractor_band else None
    # templates come from their own stream so train and test splits share them
    template_rng = np.random.default_rng([cfg.seed, 0x7E1])

    def class_phases(count, modes):
        if cfg.phases == "fixed":
            return np.broadcast_to(template_rng.uniform(0, 2 * np.pi, size=(1, len(modes))), (count, len(modes)))
        return rng.uniform(0, 2 * np.pi, size=(count, len(modes)))

    for c, (lo, hi) in enumerate(cfg.class_bands):
        modes = band_modes(n, lo, hi)
        idx = np.nonzero(labels == c)[0]
        for ch in range(cfg.channels):
            images[idx, ch] = _mode_images(n, modes, class_phases(len(idx), modes))
    if cfg.shortcut_bands is not None and cfg.shortcut_amplitude > 0:
        for c, (lo, hi) in enumerate(cfg.shortcut_bands):
            modes = band_modes(n, lo, hi)
            idx = np.nonzero(labels == c)[0]
            for ch in range(cfg.channels):
                images[idx, ch] += cfg.shortcut_amplitude * _mode_images(n, modes, class_phases(len(idx), modes))
    if distract is not None and cfg.distractor_amplitude > 0:
        for ch in range(cfg.channels):
            phases = rng.uniform(0, 2 * np.pi, size=(total, len(distract)))
            images[:, ch] += cfg.distractor_amplitude * _mode_images(n, distract, phases)
    if cfg.noise_sigma > 0:
        images += rng.normal(0.0, cfg.noise_sigma, size=images.shape)
    images = _minmax(images)
    provenance = f"synthetic:n={n},bands={list(cfg.class_bands)},seed={cfg.seed}"
    return Dataset(images.astype(np.float32), labels, cfg.classes, split, provenance)


def train_test(cfg: SynthConfig, test_per_class: int) -> tuple[Dataset, Dataset]:
    """A train split from ``cfg`` and an independent test split (own sample stream, shared templates)."""
    train = gen_synthetic_freq_dataset(cfg, "train")
    test = gen_synthetic_freq_dataset(replace(cfg, samples_per_class=test_per_class), "test")
    return train, test

