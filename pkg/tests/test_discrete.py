import math

import numpy as np
import pytest
from scipy import integrate

from buoywhittle.discrete import (
    SamplingScheme,
    aliased_sdf_matrix,
    approx_autocovariance,
    expected_periodogram,
    expected_periodogram_and_gradient,
    expected_periodogram_direct,
)
from buoywhittle.models import DEEP_WATER, SCENARIOS, PhysicalContext, jonswap_sdf, sdf_matrix

from conftest import random_theta

DELTA = 0.78125


def test_riemann_sum_equals_lag_zero():
    # with folds the fine-grid sum integrates the aliased spectrum over one period
    th = SCENARIOS[1]
    scheme = SamplingScheme(DELTA, 128, alias_folds=3)
    c0 = approx_autocovariance(th, DEEP_WATER, scheme).at(0)
    M = scheme.grid_size
    w = 2 * np.pi * np.arange(-M // 2, M // 2 + 1) / (M * DELTA)
    weight = np.ones(w.size)
    weight[[0, -1]] = 0.5  # +/- the grid edge share one ordinate
    F = aliased_sdf_matrix(w, th, DEEP_WATER, scheme)
    riemann = np.einsum("w,wab->ab", weight, F) * 2 * np.pi / (M * DELTA)
    assert np.max(np.abs(c0 - riemann)) <= 1e-10 * abs(c0[0, 0])


def test_lag_zero_variance_matches_integral():
    th = SCENARIOS[1]
    scheme = SamplingScheme(DELTA, 256, alias_folds=6, grid_factor=16)
    var, _ = integrate.quad(lambda w: 2 * jonswap_sdf(w, th), 1e-3, 60, limit=400, points=[th.omega_p])
    c0 = approx_autocovariance(th, DEEP_WATER, scheme).at(0)[0, 0].real
    assert c0 == pytest.approx(var, rel=1e-6)


@pytest.mark.parametrize("n", [16, 65, 128])
def test_fft_path_equals_direct_lag_sum(n, rng):
    for _ in range(3):
        th = random_theta(rng)
        scheme = SamplingScheme(DELTA, n)
        fast = expected_periodogram(th, DEEP_WATER, scheme)
        acv = approx_autocovariance(th, DEEP_WATER, scheme)
        slow = expected_periodogram_direct(acv, scheme.frequencies)
        assert np.max(np.abs(fast - slow)) <= 1e-12 * np.max(np.abs(slow))


def test_direct_lag_sum_against_periodogram_expectation():
    # E[I] = (delta / 2 pi n) sum_{s,t} c(s - t) e^{-i w (s - t) delta}, written out as a double sum
    th = SCENARIOS[2]
    n = 24
    scheme = SamplingScheme(DELTA, n)
    acv = approx_autocovariance(th, DEEP_WATER, scheme)
    w = scheme.frequencies[3]
    total = np.zeros((3, 3), dtype=complex)
    for s in range(n):
        for t in range(n):
            total += acv.at(s - t) * np.exp(-1j * w * (s - t) * DELTA)
    total *= DELTA / (2 * np.pi * n)
    np.testing.assert_allclose(expected_periodogram(th, DEEP_WATER, scheme)[3], total, rtol=1e-11, atol=1e-14)


def test_expected_periodogram_hermitian_psd(rng):
    th = random_theta(rng)
    E = expected_periodogram(th, PhysicalContext(water_depth=30.0), SamplingScheme(DELTA, 256))
    np.testing.assert_allclose(E, np.conj(np.swapaxes(E, -1, -2)), atol=1e-14)
    eig = np.linalg.eigvalsh(E[1:])
    assert np.all(eig >= -1e-10 * eig.max())


def test_blurring_vanishes_with_n():
    th = SCENARIOS[1]
    devs = []
    for n in (256, 1024, 4096):
        scheme = SamplingScheme(DELTA, n, alias_folds=4)
        E = expected_periodogram(th, DEEP_WATER, scheme)
        F = aliased_sdf_matrix(scheme.frequencies, th, DEEP_WATER, scheme)
        band = (scheme.frequencies > 0.4) & (scheme.frequencies < 3.0)
        devs.append(np.max(np.abs(E[band] - F[band])) / np.max(np.abs(F[band])))
    assert devs[0] > devs[1] > devs[2]


def test_selection_subsets_full_output():
    th = SCENARIOS[1]
    scheme = SamplingScheme(DELTA, 200)
    E = expected_periodogram(th, DEEP_WATER, scheme)
    idx = [3, 50, 100]
    np.testing.assert_array_equal(expected_periodogram(th, DEEP_WATER, scheme, idx), E[idx])


def test_expected_periodogram_gradient_finite_difference(rng):
    scheme = SamplingScheme(DELTA, 128)
    for _ in range(3):
        th = random_theta(rng).to_array()
        E, dE = expected_periodogram_and_gradient(th, DEEP_WATER, scheme)
        scale = np.max(np.abs(E))
        for i in range(9):
            h = 1e-6 * max(1.0, abs(th[i]))
            up, dn = th.copy(), th.copy()
            up[i] += h
            dn[i] -= h
            fd = (expected_periodogram(up, DEEP_WATER, scheme) - expected_periodogram(dn, DEEP_WATER, scheme)) / (2 * h)
            # the fine grid may straddle the peak kink; scale by the largest entry
            assert np.max(np.abs(dE[i] - fd)) <= 1e-5 * max(scale, np.max(np.abs(fd)))


def test_continuous_model_matrix_unchanged_without_folds():
    th = SCENARIOS[1]
    w = np.linspace(0.1, 4.0, 17)
    np.testing.assert_array_equal(aliased_sdf_matrix(w, th, DEEP_WATER, SamplingScheme(DELTA, 64)), sdf_matrix(w, th))


def test_scheme_validation():
    with pytest.raises(ValueError):
        SamplingScheme(0.0, 10)
    with pytest.raises(ValueError):
        SamplingScheme(1.0, 1)
    assert SamplingScheme(1.0, 5, grid_factor=3).grid_size % 2 == 0
    assert SamplingScheme(0.5, 10).nyquist == pytest.approx(math.pi / 0.5)
