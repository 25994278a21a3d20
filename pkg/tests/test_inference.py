import logging
import math

import numpy as np
import pytest

from buoywhittle.discrete import SamplingScheme, expected_periodogram
from buoywhittle.inference import (
    DataError,
    FitConfig,
    FrequencySelection,
    Periodogram,
    SeaStateSample,
    debiased_whittle_loglik,
    expected_fisher,
    fit,
    initial_parameters,
    inverse_and_logdet,
    periodogram,
    whittle_loglik,
)
from buoywhittle.models import DEEP_WATER, SCENARIOS, TWO_PI, PhysicalContext, sdf_matrix
from buoywhittle.simulation import SimulationSpec, simulate

from conftest import random_theta

DELTA = 0.78125


def noise_sample(n=64, seed=0):
    return SeaStateSample.from_array(np.random.default_rng(seed).standard_normal((n, 3)), DELTA)


def exact_periodogram(theta, n, ctx=DEEP_WATER):
    return Periodogram(expected_periodogram(theta, ctx, SamplingScheme(DELTA, n)), n, DELTA)


# ---------------------------------------------------------------- data and periodogram


def test_sample_validation():
    with pytest.raises(DataError):
        SeaStateSample(np.zeros((10, 2)), 1.0)
    data = np.random.default_rng(1).standard_normal((10, 3))
    data[4, 1] = np.nan
    with pytest.raises(DataError, match="sample 4"):
        SeaStateSample(data, 1.0)
    data = np.random.default_rng(1).standard_normal((10, 3))
    data[:, 2] = 3.0
    with pytest.raises(DataError, match="constant"):
        SeaStateSample.from_array(data, 1.0)


def test_significant_wave_height_of_sinusoid():
    t = np.arange(4096) * 0.5
    A = 1.7
    z = A * np.sin(2 * np.pi * 64 / 4096 * np.arange(4096))
    s = SeaStateSample(np.column_stack([z, np.cos(t), np.sin(t)]), 0.5)
    assert s.significant_wave_height == pytest.approx(4 * A / math.sqrt(2), rel=1e-12)


@pytest.mark.parametrize("n", [63, 64])
def test_parseval(n):
    s = noise_sample(n)
    freqs, vals = periodogram(s).full()
    lhs = np.einsum("waa->", vals).real * TWO_PI / (n * DELTA)
    assert lhs == pytest.approx(np.sum(s.channels**2) / n, rel=1e-12)
    assert freqs.size == n


def test_cosine_oracle():
    n, j, A = 128, 9, 0.8
    t = np.arange(n)
    z = A * np.cos(TWO_PI * j * t / n)
    data = np.column_stack([z, np.sin(TWO_PI * 3 * t / n), np.cos(TWO_PI * 5 * t / n)])
    I = periodogram(SeaStateSample(data, DELTA)).values
    assert I[j, 0, 0].real == pytest.approx(A**2 * n * DELTA / (8 * np.pi), rel=1e-12)
    assert I[j + 1, 0, 0].real == pytest.approx(0.0, abs=1e-20)


def test_periodogram_rank_one_hermitian():
    I = periodogram(noise_sample(50)).values
    np.testing.assert_allclose(I, np.conj(np.swapaxes(I, -1, -2)), atol=1e-15)
    assert np.all(np.linalg.matrix_rank(I[1:], tol=1e-10) == 1)


def test_selection_band_and_weights():
    sel = FrequencySelection.band(64, DELTA, 0.5, math.pi / DELTA)
    assert np.all(sel.frequencies >= 0.5)
    assert sel.indices[-1] == 32
    assert sel.weights[-1] == 1.0 and np.all(sel.weights[:-1] == 2.0)
    odd = FrequencySelection.band(63, DELTA)
    assert np.all(odd.weights == 2.0)
    with pytest.raises(ValueError):
        FrequencySelection.band(64, DELTA, 10.0, 20.0)


# ---------------------------------------------------------------- likelihoods


def test_inverse_and_logdet_matches_numpy(rng):
    A = rng.standard_normal((20, 3, 3)) + 1j * rng.standard_normal((20, 3, 3))
    H = A @ np.conj(np.swapaxes(A, -1, -2)) + 0.1 * np.eye(3)
    inv, logdet, singular = inverse_and_logdet(H)
    np.testing.assert_allclose(inv, np.linalg.inv(H), rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(logdet, np.linalg.slogdet(H)[1], rtol=1e-12)
    assert not singular.any()
    _, ld, sing = inverse_and_logdet(np.zeros((2, 3, 3), dtype=complex))
    assert sing.all() and np.all(np.isneginf(ld))


def test_naive_implementation_oracle():
    # explicit loop over every nonzero Fourier frequency, negative ones included
    n = 64
    th = SCENARIOS[1]
    s = simulate(SimulationSpec(th, SamplingScheme(DELTA, n)), 3, demean=True)
    P = s.channels
    t = np.arange(n)
    E_pos = expected_periodogram(th, DEEP_WATER, SamplingScheme(DELTA, n))
    dw = wh = 0.0
    for j in range(-n // 2 + 1, n // 2 + 1):
        if j == 0:
            continue
        w = TWO_PI * j / (n * DELTA)
        if abs(w) < 0.3:  # below the band the continuous model underflows
            continue
        J = math.sqrt(DELTA / (TWO_PI * n)) * (np.exp(-1j * w * t * DELTA) @ P)
        I = np.outer(J, np.conj(J))
        E = E_pos[j] if j > 0 else np.conj(E_pos[-j])
        if j == n // 2:
            E = E.real.astype(complex)
        F = sdf_matrix(np.array([w]), th)[0]
        for model, acc in ((E, "dw"), (F, "wh")):
            val = math.log(np.linalg.det(model).real) + np.trace(I @ np.linalg.inv(model)).real
            if acc == "dw":
                dw -= val
            else:
                wh -= val
    pg = periodogram(s)
    sel = FrequencySelection.band(n, DELTA, 0.3)
    assert debiased_whittle_loglik(pg, th, selection=sel) == pytest.approx(dw, rel=1e-10)
    assert whittle_loglik(pg, th, selection=sel) == pytest.approx(wh, rel=1e-10)


def test_trace_term_equals_three_per_ordinate():
    n = 128
    th = SCENARIOS[1]
    pg = exact_periodogram(th, n)
    sel = FrequencySelection.band(n, DELTA, 0.3, 3.0)
    _, logdet, _ = inverse_and_logdet(pg.at(sel))
    ll = debiased_whittle_loglik(pg, th, selection=sel)
    trace_part = -ll - np.sum(sel.weights * logdet)
    assert trace_part == pytest.approx(3 * np.sum(sel.weights), rel=1e-10)


def test_scaling_alpha_shifts_loglik_by_logdet():
    n = 128
    th = SCENARIOS[1]
    sel = FrequencySelection.band(n, DELTA, 0.3, 3.0)
    pg = exact_periodogram(th, n)
    pg2 = Periodogram(2 * pg.values, n, DELTA)
    l1 = debiased_whittle_loglik(pg, th, selection=sel)
    l2 = debiased_whittle_loglik(pg2, th.replace(alpha=2 * th.alpha), selection=sel)
    assert l2 - l1 == pytest.approx(-3 * math.log(2) * np.sum(sel.weights), rel=1e-10)


def test_exact_periodogram_maximises_debiased_loglik():
    n = 256
    th = SCENARIOS[1]
    pg = exact_periodogram(th, n)
    sel = FrequencySelection.band(n, DELTA, 0.4, 3.0)
    best = debiased_whittle_loglik(pg, th, selection=sel)
    for name, factor in (("alpha", 1.05), ("omega_p", 1.01), ("gamma", 0.9), ("sigma_l", 1.1), ("beta", 0.9)):
        other = th.replace(**{name: getattr(th, name) * factor})
        assert debiased_whittle_loglik(pg, other, selection=sel) < best


@pytest.mark.parametrize("objective", ["whittle", "debiased"])
def test_loglik_gradient_finite_difference(objective, rng):
    n = 128
    func = whittle_loglik if objective == "whittle" else debiased_whittle_loglik
    s = simulate(SimulationSpec(SCENARIOS[1], SamplingScheme(DELTA, n)), 0, demean=True)
    pg = periodogram(s)
    sel = FrequencySelection.band(n, DELTA, 0.35, 3.5)
    for _ in range(3):
        th = random_theta(rng).to_array()
        _, grad = func(pg, th, selection=sel, gradient=True)
        for i in range(9):
            h = 1e-6 * max(1.0, abs(th[i]))
            up, dn = th.copy(), th.copy()
            up[i] += h
            dn[i] -= h
            fd = (func(pg, up, selection=sel) - func(pg, dn, selection=sel)) / (2 * h)
            assert grad[i] == pytest.approx(fd, rel=1e-5, abs=1e-6 * (1 + np.max(np.abs(grad))))


def test_singular_model_gives_minus_infinity(caplog):
    n = 64
    pg = periodogram(noise_sample(n))
    # far below the peak the continuous model underflows to an exactly singular matrix
    sel = FrequencySelection(np.array([1, 10]), n, DELTA)
    with caplog.at_level(logging.WARNING, logger="buoywhittle"):
        value, grad = whittle_loglik(pg, SCENARIOS[1], selection=sel, gradient=True)
    assert value == -np.inf
    assert np.all(np.isnan(grad))
    assert "singular" in caplog.text


def test_vertical_channel_only():
    n = 128
    th = SCENARIOS[1]
    pg = exact_periodogram(th, n)
    sel = FrequencySelection.band(n, DELTA, 0.4, 3.0)
    zz = pg.at(sel)[:, 0, 0].real
    expected = -np.sum(sel.weights * (np.log(zz) + 1.0))
    assert debiased_whittle_loglik(pg, th, selection=sel, channels=(0,)) == pytest.approx(expected, rel=1e-12)


# ---------------------------------------------------------------- expected information


def test_fisher_symmetric_psd_and_additive():
    n = 256
    th = SCENARIOS[1]
    scheme = SamplingScheme(DELTA, n)
    a = FrequencySelection.band(n, DELTA, 0.4, 1.0)
    b = FrequencySelection.band(n, DELTA, 1.0 + 1e-9, 3.0)
    both = FrequencySelection(np.concatenate([a.indices, b.indices]), n, DELTA)
    Fa, Fb, Fab = (expected_fisher(th, DEEP_WATER, scheme, s) for s in (a, b, both))
    np.testing.assert_allclose(Fab, Fab.T, rtol=1e-14)
    assert np.all(np.linalg.eigvalsh(Fab) > 0)
    np.testing.assert_allclose(Fa + Fb, Fab, rtol=1e-10, atol=1e-12 * np.abs(Fab).max())


def test_score_variance_matches_fisher():
    # each interior index stands for a conjugate pair, so the score of the symmetric sum has
    # variance 4 F when ordinates are independent; on the energetic band at moderate n the
    # leakage correlation between neighbouring ordinates is small
    n = 1024
    th = SCENARIOS[1]
    scheme = SamplingScheme(DELTA, n)
    sel = FrequencySelection.band(n, DELTA, 0.6, 1.6)
    F = expected_fisher(th, DEEP_WATER, scheme, sel)
    scores = []
    for rep in range(400):
        s = simulate(SimulationSpec(th, scheme, seed=5), rep)
        scores.append(debiased_whittle_loglik(periodogram(s), th, selection=sel, gradient=True)[1])
    S = np.array(scores)
    ratio = S.var(axis=0) / (4 * np.diag(F))
    # a variance from 400 draws carries about 7 percent Monte Carlo error
    assert 0.8 < np.median(ratio) < 1.35
    assert np.all((ratio > 0.7) & (ratio < 1.6))
    assert np.all(np.abs(S.mean(axis=0)) < 4 * S.std(axis=0) / np.sqrt(len(S)))


# ---------------------------------------------------------------- initialisation and fitting


def test_initial_parameters_on_exact_input():
    th = SCENARIOS[1]
    pg = exact_periodogram(th, 2304)
    init = initial_parameters(pg, FrequencySelection.band(2304, DELTA, 0.4), refine=False)
    assert init.omega_p == pytest.approx(th.omega_p, rel=0.02)
    assert init.phi_m == pytest.approx(th.phi_m, abs=1e-6)
    assert init.gamma == 3.3 and init.sigma_l == 0.55


def test_refined_start_recovers_marginal_on_exact_input():
    # the expected periodogram itself maximises the debiased likelihood at the truth
    th = SCENARIOS[3]
    pg = exact_periodogram(th.replace(gamma=1.6), 1024)
    init = initial_parameters(pg, FrequencySelection.band(1024, DELTA, 0.5), standard={"gamma": 3.3})
    np.testing.assert_allclose(init.to_array()[:4], th.replace(gamma=1.6).to_array()[:4], rtol=1e-4)
    assert init.sigma_l == 0.55 and init.nu == 2.7


@pytest.fixture(scope="module")
def scenario_fits():
    out = {}
    for key in (1, 3):
        th = SCENARIOS[key]
        s = simulate(SimulationSpec(th, SamplingScheme(DELTA, 2304), seed=77), 0, demean=True)
        sel = FrequencySelection.band(2304, DELTA, 0.5 * th.omega_p)
        out[key] = (s, sel, fit(s, FitConfig(selection=sel)))
    return out


def test_fit_recovers_scenario_one(scenario_fits):
    _, _, res = scenario_fits[1]
    th = SCENARIOS[1]
    assert res.converged
    est = res.theta_hat
    se = res.std_errors
    for i, name in enumerate(("alpha", "omega_p", "gamma", "r", "phi_m", "beta", "nu", "sigma_l", "sigma_r")):
        assert abs(getattr(est, name) - getattr(th, name)) < 5 * se[i], name
    lo, hi = res.ci95[1]
    assert lo < est.omega_p < hi


def test_fit_flags_gamma_boundary(scenario_fits):
    _, _, res = scenario_fits[3]
    assert res.converged
    assert res.theta_hat.gamma >= 1.0
    if res.theta_hat.gamma - 1.0 < 1e-4:
        assert res.boundary_flags["gamma"]


def test_fit_is_deterministic(scenario_fits):
    s, sel, res = scenario_fits[1]
    again = fit(s, FitConfig(selection=sel))
    np.testing.assert_array_equal(again.theta_hat.to_array(), res.theta_hat.to_array())


def test_fit_with_fixed_parameters():
    th = SCENARIOS[1]
    s = simulate(SimulationSpec(th, SamplingScheme(DELTA, 1024), seed=3), 0, demean=True)
    sel = FrequencySelection.band(1024, DELTA, 0.4)
    res = fit(s, FitConfig(selection=sel, channels=(0,), free=("alpha", "omega_p", "gamma", "r"), init=th))
    assert res.converged
    np.testing.assert_array_equal(res.theta_hat.to_array()[4:], th.to_array()[4:])
    assert np.all(res.std_errors[4:] == 0)
    assert res.theta_hat.omega_p == pytest.approx(th.omega_p, rel=0.03)


def test_fit_finite_depth():
    ctx = PhysicalContext(water_depth=25.0)
    th = SCENARIOS[1]
    s = simulate(SimulationSpec(th, SamplingScheme(DELTA, 1024), ctx, seed=4), 0, demean=True)
    sel = FrequencySelection.band(1024, DELTA, 0.4)
    res = fit(s, FitConfig(selection=sel, ctx=ctx))
    assert res.converged
    assert res.theta_hat.omega_p == pytest.approx(th.omega_p, rel=0.03)


def test_bad_objective_rejected():
    with pytest.raises(ValueError):
        fit(noise_sample(), FitConfig(objective="nope"))
