import numpy as np
import pytest

from fourierlens import autodiff as ad
from fourierlens import spectral as sp
from fourierlens.autodiff import Tensor
from fourierlens.corruptions import (
    FourierMode,
    apply_additive,
    band_pass_filter,
    fourier_mode_noise,
    gaussian_noise,
    hermitian_partner,
    patch_shuffle,
    perturbation_spectrum,
    pgd_l2,
    radial_filter,
)
from fourierlens.errors import DegenerateSpectrumError
from fourierlens.sensitivity import sample_sensitivity
from oracles import enumerate_radii, naive_dft2


class Linear:
    """Logits = x.flat @ W + b; enough of the model interface for PGD."""

    def __init__(self, w, b):
        self.w, self.b = w, b

    def __call__(self, x):
        return x.reshape(x.shape[0], -1) @ Tensor(self.w) + Tensor(self.b)

    def predict(self, images):
        return np.argmax(images.reshape(len(images), -1) @ self.w + self.b, axis=1)


def ce(model, x, y):
    with ad.no_grad():
        return ad.softmax_cross_entropy(model(Tensor(x)), y).item()


# -- Fourier-mode noise ---------------------------------------------------------


def test_horizontal_cosine_mode():
    n = 16
    d = fourier_mode_noise(n, FourierMode(n // 2, n // 2 + 1, 4.0))
    assert np.linalg.norm(d) == pytest.approx(4.0, abs=1e-9)
    a = np.arange(n)
    expected = np.cos(2 * np.pi * a / n)[None, :] * np.ones((n, 1))
    expected *= 4.0 / np.linalg.norm(expected)
    assert np.allclose(d, expected, atol=1e-12)


@pytest.mark.parametrize("phase", ["cosine", "random"])
def test_mode_support_norm_and_realness(phase):
    n = 8
    rng = np.random.default_rng(0)
    for u in range(n):
        for v in range(n):
            if (u, v) == (n // 2, n // 2):
                continue
            d = fourier_mode_noise(n, FourierMode(u, v, 2.5, phase), rng)
            assert np.linalg.norm(d) == pytest.approx(2.5, abs=1e-9)
            f = np.fft.fftshift(naive_dft2(d))
            assert np.max(np.abs(np.fft.ifft2(np.fft.ifftshift(f), norm="ortho").imag)) <= 1e-9
            p = np.abs(f) ** 2
            support = {(u, v), hermitian_partner(n, u, v)}
            outside = sum(p[i, j] for i in range(n) for j in range(n) if (i, j) not in support)
            assert outside <= 1e-12 * p.sum()


def test_random_phase_is_seeded():
    mode = FourierMode(2, 3, 1.0, "random")
    a = fourier_mode_noise(8, mode, np.random.default_rng(7))
    b = fourier_mode_noise(8, mode, np.random.default_rng(7))
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        fourier_mode_noise(8, mode)


def test_mode_errors():
    with pytest.raises(ValueError):
        fourier_mode_noise(8, FourierMode(4, 4, 1.0))
    with pytest.raises(ValueError):
        fourier_mode_noise(8, FourierMode(8, 0, 1.0))
    with pytest.raises(ValueError):
        FourierMode(1, 1, 0.0)


def test_apply_additive():
    x = np.random.default_rng(0).random((2, 8, 8))
    assert np.array_equal(apply_additive(x, np.zeros((8, 8))), x)
    assert np.all(apply_additive(np.ones((1, 4, 4)), np.full((4, 4), 0.3)) == 1.0)
    d = fourier_mode_noise(8, FourierMode(3, 5, 1.5))
    assert np.linalg.norm(apply_additive(x, d, clip=False)[0] - x[0]) == pytest.approx(1.5)


# -- filters ----------------------------------------------------------------------


def test_radial_filter_identity_and_dc(rng):
    x = rng.random((3, 16, 16))
    assert np.allclose(radial_filter(x, 16 / np.sqrt(2)), x, atol=1e-6)
    dc = radial_filter(x, 0)
    assert np.allclose(dc, x.mean(axis=(-2, -1), keepdims=True) * np.ones_like(x), atol=1e-12)


def test_radial_filter_matches_naive_mask_oracle(rng):
    n, r = 32, 5
    x = rng.random((n, n))
    f = np.fft.fftshift(naive_dft2(x))
    c = n // 2
    for u in range(n):
        for v in range(n):
            if np.hypot(u - c, v - c) > r:
                f[u, v] = 0
    # inverse of the unitary transform is its conjugate
    k = np.arange(n)
    w = np.exp(2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)
    ref = (w @ np.fft.ifftshift(f) @ w).real
    assert np.max(np.abs(radial_filter(x, r) - ref)) <= 1e-6


def test_radial_filter_idempotent_and_energy_non_increasing(rng):
    x = rng.random((2, 3, 16, 16))
    for r in (0.5, 2, 3.7, 8):
        once = radial_filter(x, r)
        assert np.max(np.abs(radial_filter(once, r) - once)) <= 1e-9
        assert np.sum(once**2) <= np.sum(x**2) + 1e-9
    with pytest.raises(ValueError):
        radial_filter(x, -1)


def test_radial_mask_uses_exact_distance():
    # (1, 1) offset has distance 1.414: kept at r = 1.5 but not at r = 1.4, although it rounds to 1
    x = np.zeros((8, 8))
    x[0, 0] = 1.0
    f_hi = np.fft.fftshift(np.fft.fft2(radial_filter(x, 1.5), norm="ortho"))
    f_lo = np.fft.fftshift(np.fft.fft2(radial_filter(x, 1.4), norm="ortho"))
    assert abs(f_hi[5, 5]) > 0.1 and abs(f_lo[5, 5]) < 1e-12


def test_band_pass(rng):
    x = rng.random((2, 16, 16))
    assert np.allclose(band_pass_filter(x, 0, np.inf), x, atol=1e-9)
    assert np.array_equal(band_pass_filter(x, 0, 5), radial_filter(x, 5))
    hp = band_pass_filter(x, 3, np.inf)
    assert np.allclose(hp.mean(axis=(-2, -1)), 0, atol=1e-12)  # DC dropped when lo > 0
    shown = band_pass_filter(x, 3, 6, contrast_maximise=True)
    assert np.allclose(shown.min(axis=(-2, -1)), 0) and np.allclose(shown.max(axis=(-2, -1)), 1)
    with pytest.raises(ValueError):
        band_pass_filter(x, 5, 2)


def _one_over_f2_images(count, n, rng):
    c = n // 2
    u, v = np.meshgrid(np.arange(n) - c, np.arange(n) - c, indexing="ij")
    d = np.hypot(u, v)
    amp = np.where(d > 0, 1.0 / np.maximum(d, 1) ** 2, 0.0)
    out = []
    for _ in range(count):
        noise = np.fft.fftshift(np.fft.fft2(rng.normal(size=(n, n))))
        out.append(np.fft.ifft2(np.fft.ifftshift(noise * amp)).real)
    return np.stack(out)


def test_high_pass_keeps_little_energy_of_1_over_f2_images(rng):
    imgs = _one_over_f2_images(20, 32, rng)
    kept = band_pass_filter(imgs, 10, np.inf)
    assert np.sum(kept**2) / np.sum(imgs**2) < 0.10


# -- patch shuffle ----------------------------------------------------------------


def test_patch_shuffle_k1_identity(rng):
    x = rng.random((3, 8, 8))
    assert np.array_equal(patch_shuffle(x, 1, np.random.default_rng(0)), x)


def test_patch_shuffle_preserves_histograms(rng):
    x = rng.random((4, 3, 8, 8))
    for k in (2, 4, 8):
        out = patch_shuffle(x, k, np.random.default_rng(k))
        assert np.array_equal(np.sort(out.reshape(4, 3, -1), axis=-1), np.sort(x.reshape(4, 3, -1), axis=-1))


def test_patch_shuffle_golden_k2_n4():
    marker = np.arange(16, dtype=float).reshape(1, 4, 4)
    out = patch_shuffle(marker, 2, np.random.default_rng(2024))
    golden = [[10, 11, 2, 3], [14, 15, 6, 7], [8, 9, 0, 1], [12, 13, 4, 5]]
    assert out.astype(int).tolist() == [golden]


def test_patch_shuffle_shares_permutation_across_channels(rng):
    x = rng.random((3, 8, 8))
    full = patch_shuffle(x, 4, np.random.default_rng(5))
    for ch in range(3):
        assert np.array_equal(full[ch], patch_shuffle(x[ch : ch + 1], 4, np.random.default_rng(5))[0])


def test_patch_shuffle_moves_whole_tiles(rng):
    x = rng.random((1, 8, 8))
    out = patch_shuffle(x, 2, np.random.default_rng(3))
    tiles = {x[0, i : i + 4, j : j + 4].tobytes() for i in (0, 4) for j in (0, 4)}
    assert {out[0, i : i + 4, j : j + 4].tobytes() for i in (0, 4) for j in (0, 4)} == tiles


def test_patch_shuffle_rejects_non_divisor():
    with pytest.raises(ValueError):
        patch_shuffle(np.zeros((1, 8, 8)), 3, np.random.default_rng(0))


# -- gaussian noise -----------------------------------------------------------------


def test_gaussian_noise_statistics():
    x = np.zeros((1000, 1000))
    out = gaussian_noise(x, 0.1, np.random.default_rng(0), clip=False)
    assert abs(out.mean()) <= 0.001
    assert abs(out.std() - 0.1) <= 0.001
    assert np.array_equal(gaussian_noise(x[:3, :3], 0.0, np.random.default_rng(0)), x[:3, :3])
    clipped = gaussian_noise(np.full((50, 50), 0.5), 1.0, np.random.default_rng(1))
    assert clipped.min() >= 0 and clipped.max() <= 1
    with pytest.raises(ValueError):
        gaussian_noise(x, -0.1, np.random.default_rng(0))


# -- PGD ------------------------------------------------------------------------------


def _linear_model(rng, m=16):
    return Linear(rng.normal(size=(m, 2)), np.zeros(2))


def test_pgd_one_step_linear_closed_form(rng):
    model = _linear_model(rng)
    x = rng.random((1, 4, 4))
    for alpha, eps in ((0.3, 1.0), (2.0, 0.5)):
        _, delta = pgd_l2(model, x, 0, eps, steps=1, step_size=alpha, clip=False, return_delta=True)
        logits = x.ravel() @ model.w
        p = np.exp(logits - logits.max())
        p /= p.sum()
        g = model.w @ (p - np.array([1.0, 0.0]))
        assert np.allclose(delta.ravel(), min(alpha, eps) * g / np.linalg.norm(g), atol=1e-12)


def test_pgd_stays_in_ball(rng):
    for trial in range(100):
        model = _linear_model(rng)
        x = rng.random((2, 1, 4, 4))
        eps = rng.uniform(0.1, 2.0)
        for steps in (1, 3, 7):
            _, delta = pgd_l2(model, x, [0, 1], eps, steps=steps, step_size=eps, return_delta=True, clip=False)
            assert np.all(np.sqrt((delta**2).sum(axis=(1, 2, 3))) <= eps * (1 + 1e-12))
        _, delta = pgd_l2(model, x, [0, 1], eps, steps=2, rng=np.random.default_rng(trial), random_start=True, return_delta=True)
        assert np.all(np.sqrt((delta**2).sum(axis=(1, 2, 3))) <= eps * (1 + 1e-12))


def test_pgd_increases_loss_monotonically_on_linear_model(rng):
    model = _linear_model(rng)
    x = rng.random((1, 4, 4))
    losses = [ce(model, x[None], [1])]
    for steps in range(1, 8):
        adv = pgd_l2(model, x, 1, 1.0, steps=steps, step_size=1.0 / 7, clip=False)
        losses.append(ce(model, adv[None], [1]))
    assert all(b >= a - 1e-12 for a, b in zip(losses, losses[1:]))


def test_pgd_zero_gradient_keeps_delta_and_clips(rng):
    model = Linear(np.zeros((16, 2)), np.zeros(2))
    x = rng.random((1, 1, 4, 4))
    adv, delta = pgd_l2(model, x, [0], 1.0, return_delta=True)
    assert np.array_equal(delta, np.zeros_like(x)) and np.array_equal(adv, x)
    with pytest.raises(ValueError):
        pgd_l2(model, x, [0], 0.0)


# -- perturbation spectrum ----------------------------------------------------------------


def test_perturbation_spectrum_single_mode():
    n = 16
    d = fourier_mode_noise(n, FourierMode(n // 2 + 3, n // 2 + 4, 1.0))  # distance exactly 5
    prof = perturbation_spectrum(d[None])
    assert prof[5] == pytest.approx(1.0, abs=1e-12)


def test_perturbation_spectrum_of_white_noise_follows_counts():
    n = 16
    rng = np.random.default_rng(0)
    profiles = [perturbation_spectrum(rng.normal(size=(n, n))).values for _ in range(400)]
    r = enumerate_radii(n)
    counts = np.array([(r == k).sum() for k in range(1, r.max() + 1)], dtype=float)
    assert np.allclose(np.mean(profiles, axis=0), counts / counts.sum(), atol=0.01)


def test_perturbation_spectrum_matches_sensitivity_binning(rng):
    d = rng.normal(size=(1, 8, 8))
    via_sens = sample_sensitivity(None, np.zeros((1, 8, 8)), 0, lambda x, y: (x * Tensor(d)).sum())
    assert np.array_equal(perturbation_spectrum(d).values, via_sens.values)


def test_perturbation_spectrum_errors():
    with pytest.raises(DegenerateSpectrumError):
        perturbation_spectrum(np.zeros((1, 8, 8)))
    assert sp.n_radial_bins(8) == len(perturbation_spectrum(np.eye(8)).values)
