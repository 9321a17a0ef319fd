import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fourierlens import spectral as sp
from fourierlens.errors import ContractError, DegenerateSpectrumError, DimensionError
from oracles import enumerate_radii, naive_dft2, naive_profile


def test_constant_image_maps_to_dc_only():
    spec = sp.dft2_unitary(np.full((4, 4), 0.7))
    assert spec.data[0, 0] == pytest.approx(4 * 0.7)
    rest = np.abs(spec.data).copy()
    rest[0, 0] = 0
    assert rest.max() < 1e-9


def test_matches_naive_dft_8x8(rng):
    x = rng.normal(size=(8, 8))
    assert np.max(np.abs(sp.dft2_unitary(x).data - naive_dft2(x))) <= 1e-6


def test_parseval_and_round_trip(rng):
    x = rng.normal(size=(16, 16))
    spec = sp.dft2_unitary(x)
    assert np.sum(np.abs(spec.data) ** 2) == pytest.approx(np.sum(x**2), rel=1e-6)
    back = sp.idft2_unitary(spec, real=True)
    assert np.max(np.abs(back - x)) <= 1e-6


def test_dc_only_inverse_gives_constant():
    data = np.zeros((6, 6), dtype=complex)
    data[0, 0] = 6 * 0.25
    out = sp.idft2_unitary(sp.Spectrum(data, 6), real=True)
    assert np.allclose(out, 0.25)


def test_broken_hermitian_pair_is_detected(rng):
    spec = sp.dft2_unitary(rng.normal(size=(8, 8)))
    data = spec.data.copy()
    data[1, 2] += 0.5j  # partner (7, 6) untouched
    out = sp.idft2_unitary(sp.Spectrum(data, 8))
    assert sp.imaginary_residue(out) > 1e-6
    with pytest.raises(ValueError):
        sp.idft2_unitary(sp.Spectrum(data, 8), real=True)


def test_hermitian_symmetry_of_real_input(rng):
    f = sp.dft2_unitary(rng.normal(size=(8, 8))).data
    n = 8
    for u in range(n):
        for v in range(n):
            assert f[u, v] == pytest.approx(np.conj(f[(-u) % n, (-v) % n]), abs=1e-9)


def test_linearity(rng):
    x, y = rng.normal(size=(2, 8, 8))
    a, b = 1.7, -0.3
    lhs = sp.dft2_unitary(a * x + b * y).data
    rhs = a * sp.dft2_unitary(x).data + b * sp.dft2_unitary(y).data
    assert np.max(np.abs(lhs - rhs)) <= 1e-6


@pytest.mark.parametrize("shape", [(4, 6), (5, 5), (8,), (2, 4, 4)])
def test_bad_shapes_raise_dimension_error(shape):
    with pytest.raises(DimensionError):
        sp.dft2_unitary(np.zeros(shape))


def test_non_finite_raises_value_error():
    x = np.zeros((4, 4))
    x[1, 1] = np.nan
    with pytest.raises(ValueError):
        sp.dft2_unitary(x)


def test_spectrum_does_not_freeze_caller_array():
    data = np.zeros((4, 4), dtype=complex)
    sp.Spectrum(data, 4)
    data[0, 0] = 1.0  # still writable


def test_shift_moves_dc_to_center_and_is_involution(rng):
    spec = sp.dft2_unitary(np.ones((4, 4)))
    shifted = sp.fftshift(spec)
    assert shifted.shifted
    assert abs(shifted.data[2, 2]) == pytest.approx(4.0)
    x = sp.dft2_unitary(rng.normal(size=(8, 8)))
    assert np.array_equal(sp.ifftshift(sp.fftshift(x)).data, x.data)
    assert np.array_equal(np.fft.fftshift(np.fft.fftshift(x.data)), x.data)


def test_shift_permutes_power(rng):
    x = sp.dft2_unitary(rng.normal(size=(8, 8)))
    p = sp.power_matrix(sp.fftshift(x)).p
    d = x.data
    assert np.array_equal(np.sort(p.ravel()), np.sort((d.real**2 + d.imag**2).ravel()))


def test_power_matrix_three_four_five():
    data = np.zeros((4, 4), dtype=complex)
    data[1, 3] = 3 + 4j
    p = sp.power_matrix(sp.Spectrum(data, 4, shifted=True)).p
    assert p[1, 3] == 25.0
    assert p.sum() == 25.0


def test_power_matrix_requires_shift(rng):
    with pytest.raises(ContractError):
        sp.power_matrix(sp.dft2_unitary(rng.normal(size=(4, 4))))


def test_idft_rejects_shifted(rng):
    with pytest.raises(ContractError):
        sp.idft2_unitary(sp.fftshift(sp.dft2_unitary(rng.normal(size=(4, 4)))))


def test_power_centrosymmetric_and_matches_oracle(rng):
    x = rng.normal(size=(8, 8))
    p = sp.power_matrix(sp.fftshift(sp.dft2_unitary(x))).p
    oracle = np.abs(np.fft.fftshift(naive_dft2(x))) ** 2
    assert np.max(np.abs(p - oracle)) <= 1e-6
    c = 4
    for u in range(1, 8):
        for v in range(1, 8):
            assert p[u, v] == pytest.approx(p[2 * c - u, 2 * c - v], abs=1e-9)


@pytest.mark.parametrize("n", [2, 4, 8, 16, 32])
def test_radius_map_matches_enumeration(n):
    rmap = sp.radial_index_map(n)
    assert np.array_equal(rmap.binned(), enumerate_radii(n))
    assert rmap.radius_of[n // 2, n // 2] == 0
    assert rmap.counts.sum() == n * n
    assert rmap.radius_of.max() <= round(n / np.sqrt(2))
    assert rmap.n_bins == int(np.floor(n / np.sqrt(2)))


def test_rounding_half_away_from_zero():
    # integer offsets never land exactly on k + 0.5, so check both sides of the boundary
    r = sp.radial_index_map(16).radius_of
    c = 8
    assert r[c, c + 1] == 1
    assert r[c + 1, c + 1] == 1  # 1.414
    assert r[c + 2, c + 1] == 2  # 2.236
    assert r[c + 2, c + 2] == 3  # 2.828


def test_binning_matrix_agrees_with_band_powers(rng):
    n = 8
    p = rng.random((n, n))
    pm = sp.PowerMatrix(p, n)
    assert np.allclose(p.ravel() @ sp.binning_matrix(n), sp.band_powers(pm))
    unshifted = np.fft.ifftshift(p)
    assert np.allclose(unshifted.ravel() @ sp.binning_matrix(n, shifted=False), sp.band_powers(pm))


def test_single_coefficient_at_radius_three():
    p = np.zeros((16, 16))
    p[8, 11] = 2.0
    prof = sp.radial_profile(sp.PowerMatrix(p, 16))
    assert prof[3] == 1.0
    assert prof.values.sum() == 1.0


def test_uniform_power_profile_matches_counts():
    n = 8
    prof = sp.radial_profile(sp.PowerMatrix(np.ones((n, n)), n))
    r = enumerate_radii(n)
    expected = np.array([(r == k).sum() for k in range(1, r.max() + 1)]) / (n * n - 1)
    assert np.allclose(prof.values, expected, atol=1e-12)


def test_inscribed_normalization(rng):
    n = 16
    p = rng.random((n, n))
    prof = sp.radial_profile(sp.PowerMatrix(p, n), normalization="inscribed")
    assert prof.values[: n // 2].sum() == pytest.approx(1.0, abs=1e-12)
    assert prof.values[n // 2 :].sum() > 0  # outer bands still reported
    assert np.allclose(prof.values, naive_profile(p, inscribed=True))


def test_dc_only_is_degenerate():
    p = np.zeros((8, 8))
    p[4, 4] = 5.0
    with pytest.raises(DegenerateSpectrumError):
        sp.radial_profile(sp.PowerMatrix(p, 8))


def test_band_masses_partition():
    prof = sp.RadialProfile(np.full(11, 1 / 11), sp.Normalization.FULL)
    low, mid, high = sp.band_masses(prof, 16)
    assert low == pytest.approx(2 / 11)  # k = 1, 2
    assert mid == pytest.approx(3 / 11)  # k = 3, 4, 5
    assert high == pytest.approx(6 / 11)
    assert low + mid + high == pytest.approx(1.0)


def test_profile_entropy_uniform():
    assert sp.profile_entropy(np.ones(8)) == pytest.approx(np.log(8))


@given(
    n=st.sampled_from([4, 8, 16]),
    seed=st.integers(0, 2**32 - 1),
)
def test_profile_sums_to_one_property(n, seed):
    x = np.random.default_rng(seed).normal(size=(n, n))
    prof = sp.image_profile(x)
    assert prof.values.sum() == pytest.approx(1.0, abs=1e-6)
    assert np.all(prof.values >= 0)


@given(arrays(np.float64, (8, 8), elements=st.floats(-1e3, 1e3)))
def test_parseval_property(x):
    spec = sp.dft2_unitary(x)
    assert np.sum(np.abs(spec.data) ** 2) == pytest.approx(np.sum(x**2), rel=1e-6, abs=1e-9)
