"""Fourier-regularization: band penalties on the input-gradient spectrum.

The penalty is built from tape nodes (input-gradient -> unitary DFT ->
squared modulus -> radial bins), so the combined objective can be
differentiated with respect to the parameters by a second backward pass.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import spectral as sp
from .autodiff import Tensor
from .errors import ContractError, DegenerateSpectrumError, DivergenceError
from .nn import Model, OptimState, ce_loss, sgd_step
from .sensitivity import gradient_power_maps, input_gradient


class Kind(str, enum.Enum):
    NONE = "none"
    LSF = "LSF"
    MSF = "MSF"
    HSF = "HSF"
    ASF = "ASF"


@dataclass(frozen=True)
class RegularizerSpec:
    kind: Kind = Kind.NONE
    lam: float = 0.5
    n: int = 16
    eps_div: float = 1e-12
    eps_log: float = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")

    @property
    def radii(self) -> np.ndarray:
        return np.arange(1, sp.n_radial_bins(self.n) + 1)

    @property
    def penalized(self) -> np.ndarray:
        """Boolean mask over k = 1..K of the bands LSF/MSF/HSF penalize."""
        k, n = self.radii, self.n
        if self.kind is Kind.LSF:
            return k > n / 6
        if self.kind is Kind.MSF:
            return (k < n / 6) | (k > n / 3)
        if self.kind is Kind.HSF:
            return k < n / 3
        raise ContractError(f"{self.kind.value} has no penalized band set")

    @property
    def entropy_bands(self) -> int:
        return self.n // 2

    @property
    def active(self) -> bool:
        return self.kind is not Kind.NONE


def gradient_band_powers(grad_x: Tensor) -> Tensor:
    """(B,C,N,N) input-gradient node -> (B,K) raw power per radius, DC dropped."""
    n = grad_x.shape[-1]
    g = grad_x.mean(axis=1)
    f = ad.dft2_real(g)
    power = f.square().sum(axis=-1).reshape(g.shape[0], n * n)
    return power @ Tensor(sp.binning_matrix(n, shifted=False).astype(grad_x.dtype))


def sfs_loss(bands: Tensor, spec: RegularizerSpec) -> Tensor:
    """Per-sample regularizer on (B,K) band powers, averaged over the batch."""
    if not spec.active:
        raise ContractError("regularizer kind 'none' has no loss; skip it instead")
    if spec.kind is Kind.ASF:
        m = spec.entropy_bands
        sel = np.zeros((bands.shape[1], m), dtype=bands.dtype)
        sel[np.arange(m), np.arange(m)] = 1.0
        inner = bands @ Tensor(sel)
        pt = ad.div_eps(inner, inner.sum(axis=1, keepdims=True), spec.eps_div)
        per_sample = (pt * (pt + spec.eps_log).log()).sum(axis=1)
    else:
        pk = ad.div_eps(bands, bands.sum(axis=1, keepdims=True), spec.eps_div)
        mask = Tensor(spec.penalized.astype(bands.dtype))
        per_sample = (pk * mask).sum(axis=1)
    return per_sample.mean()


def sfs_value(power_bands: np.ndarray, spec: RegularizerSpec) -> float:
    """Numpy evaluation of :func:`sfs_loss` on (B,K) band powers."""
    with ad.no_grad():
        return sfs_loss(Tensor(np.asarray(power_bands, dtype=np.float64)), spec).item()


def combined_loss(model: Model, images, labels, spec: RegularizerSpec) -> tuple[Tensor, dict]:
    """L_CE + lambda * L_SFS with both terms reported in the diagnostics."""
    x = ad.parameter(np.asarray(images, dtype=model.cfg.dtype))
    labels = np.asarray(labels, dtype=np.int64)
    logits = model(x)
    ce = ce_loss(logits, labels)
    diag = {"ce": ce.item(), "sfs": float("nan"), "logits": logits.data}
    if not spec.active:
        return ce, diag
    # Summed CE gives every sample the gradient of its own loss.
    gx = ad.grad_input(ce * float(x.shape[0]), x, create_graph=spec.lam > 0)
    reg = sfs_loss(gradient_band_powers(gx), spec)
    diag["sfs"] = reg.item()
    if spec.lam == 0:
        return ce, diag
    return ce + reg * spec.lam, diag


@dataclass
class EpochLog:
    """Per-epoch means; ``sfs`` is None without a regularizer and the masses
    are None on epochs that were not probed."""

    epoch: int
    ce: float
    sfs: float | None
    acc: float
    low_mass: float | None
    mid_mass: float | None
    high_mass: float | None

    FIELDS = ("epoch", "ce", "sfs", "acc", "low_mass", "mid_mass", "high_mass")

    def row(self) -> tuple:
        return tuple(getattr(self, f) for f in self.FIELDS)


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    seed: int = 0
    probe_size: int = 64
    gaussian_sigma: float = 0.0
    augment: bool = False  # random crop (pad 2) + horizontal flip
    pgd_train: dict | None = None  # {"epsilon": .., "steps": .., "step_size": ..}
    log_every: int = 1
    extra: dict = field(default_factory=dict)


def probe_masses(model: Model, images, labels) -> tuple[float | None, float | None, float | None]:
    n = images.shape[-1]
    power = gradient_power_maps(input_gradient(model, images, labels))
    rmap = sp.radial_index_map(n)
    profs = []
    for p in power:
        try:
            profs.append(sp.radial_profile(sp.PowerMatrix(p, n), rmap).values)
        except DegenerateSpectrumError:
            continue
    if not profs:
        return (None, None, None)
    mean = sp.RadialProfile(np.mean(profs, axis=0), sp.Normalization.FULL)
    return sp.band_masses(mean, n)


def _augment(rng, xb):
    b, c, n, _ = xb.shape
    padded = np.pad(xb, ((0, 0), (0, 0), (2, 2), (2, 2)), mode="reflect")
    out = np.empty_like(xb)
    offs = rng.integers(0, 5, size=(b, 2))
    flips = rng.random(b) < 0.5
    for i in range(b):
        u, v = offs[i]
        crop = padded[i, :, u : u + n, v : v + n]
        out[i] = crop[:, :, ::-1] if flips[i] else crop
    return out


def train_regularized(
    model: Model,
    dataset,
    spec: RegularizerSpec,
    optim: OptimState,
    train: TrainConfig,
) -> tuple[Model, list[EpochLog]]:
    """Minibatch SGD on the combined objective. Mutates and returns ``model``."""
    images = np.asarray(dataset.images, dtype=model.cfg.dtype)
    labels = np.asarray(dataset.labels, dtype=np.int64)
    rng = np.random.default_rng(train.seed)
    probe_idx = np.sort(rng.choice(len(images), size=min(train.probe_size, len(images)), replace=False))
    probe_x, probe_y = images[probe_idx], labels[probe_idx]
    log: list[EpochLog] = []
    for epoch in range(1, train.epochs + 1):
        order = rng.permutation(len(images))
        ce_sum = sfs_sum = 0.0
        correct = batches = 0
        for start in range(0, len(order), train.batch_size):
            sel = order[start : start + train.batch_size]
            xb, yb = images[sel], labels[sel]
            if train.augment:
                xb = _augment(rng, xb)
            if train.gaussian_sigma > 0:
                xb = xb + rng.normal(0.0, train.gaussian_sigma, size=xb.shape).astype(xb.dtype)
            if train.pgd_train:
                from .corruptions import pgd_l2

                xb = pgd_l2(model, xb, yb, rng=rng, **train.pgd_train)
            loss, diag = combined_loss(model, xb, yb, spec)
            if not math.isfinite(loss.item()):
                raise DivergenceError(f"non-finite loss at epoch {epoch}", epoch)
            grads = ad.grad(loss, model.params)
            sgd_step(model.params, [g.data for g in grads], optim)
            if not all(np.all(np.isfinite(p.data)) for p in model.params):
                raise DivergenceError(f"non-finite parameters at epoch {epoch}", epoch)
            ce_sum += diag["ce"]
            sfs_sum += diag["sfs"] if spec.active else 0.0
            correct += int(np.sum(np.argmax(diag["logits"], axis=1) == yb))
            batches += 1
        if epoch % train.log_every == 0 or epoch == train.epochs:
            low, mid, high = probe_masses(model, probe_x, probe_y)
        else:
            low = mid = high = None
        log.append(
            EpochLog(
                epoch=epoch,
                ce=ce_sum / max(batches, 1),
                sfs=sfs_sum / max(batches, 1) if spec.active else None,
                acc=correct / max(len(order), 1),
                low_mass=low,
                mid_mass=mid,
                high_mass=high,
            )
        )
    return model, log
