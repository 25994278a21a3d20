"""Nonparametric cross-spectra, directional Fourier coefficients and the classical competitor fits.

Directional moments follow ``c_n = a_n + i b_n = int D(phi) exp(i n phi) dphi``.
Direction grids are periodic, ``phi_k = 2 pi k / K``, so the trapezoid rule
reduces to ``(2 pi / K) * sum``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import optimize, signal

from .inference import SeaStateSample, STANDARD_SHAPE, inverse_and_logdet
from .models import (
    DEEP_WATER,
    TWO_PI,
    PhysicalContext,
    _shape_terms,
    dispersion_wavenumber,
    jonswap_gradient,
    jonswap_sdf,
    transfer_function,
    wrap_angle,
    wrap_terms,
)

logger = logging.getLogger(__name__)

ZZ_FLOOR = 1e-12


# --------------------------------------------------------------------------
# cross-spectral estimation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CrossSpectralEstimate:
    """Hermitian 3x3 spectral matrix estimates at non-negative frequencies (rad/s)."""

    frequencies: np.ndarray
    values: np.ndarray
    method: str
    delta: float
    settings: dict = field(default_factory=dict)

    def restrict(self, low: float, high: float) -> "CrossSpectralEstimate":
        keep = (self.frequencies >= low) & (self.frequencies <= high)
        return CrossSpectralEstimate(self.frequencies[keep], self.values[keep], self.method, self.delta, self.settings)


def sine_tapers(n: int, k: int) -> np.ndarray:
    """Orthonormal sine tapers ``sqrt(2/(n+1)) sin(pi j (t+1)/(n+1))``, ``j = 1..k``; shape ``(k, n)``."""
    t = np.arange(1, n + 1)
    j = np.arange(1, k + 1)[:, None]
    return math.sqrt(2.0 / (n + 1)) * np.sin(np.pi * j * t / (n + 1))


def _tapered_matrices(data: np.ndarray, tapers: np.ndarray, delta: float) -> np.ndarray:
    """Average of ``J_k J_k^H`` over tapers; each taper has unit energy."""
    # data (..., n, 3), tapers (k, n) -> J (..., k, m, 3)
    J = math.sqrt(delta / TWO_PI) * np.fft.rfft(tapers[:, :, None] * data[..., None, :, :], axis=-2)
    return np.einsum("...kwa,...kwb->...wab", J, np.conj(J)) / tapers.shape[0]


def cross_spectra(sample: SeaStateSample, method: str = "multitaper", n_tapers: int = 8, tapers=None,
                  nperseg: int = 256, overlap: float = 0.5, window: str = "hann") -> CrossSpectralEstimate:
    """Multitaper (sine tapers) or Welch estimate of the spectral matrix.

    Scaled like the periodogram: ``sum f(w_j) * 2 pi / (n delta)`` over all
    Fourier frequencies approximates the lag-zero covariance.  ``tapers``
    overrides the sine family with explicit unit-energy rows.
    """
    data = sample.channels
    n = sample.n
    if method == "multitaper":
        if tapers is None:
            if not 1 <= n_tapers < n:
                raise ValueError(f"n_tapers must lie in 1..{n - 1}, got {n_tapers}")
            tapers = sine_tapers(n, n_tapers)
        tapers = np.atleast_2d(np.asarray(tapers, dtype=float))
        if tapers.shape[1] != n:
            raise ValueError("taper length must equal the record length")
        values = _tapered_matrices(data, tapers, sample.delta)
        freqs = TWO_PI * np.arange(n // 2 + 1) / (n * sample.delta)
        settings = {"n_tapers": tapers.shape[0]}
    elif method == "welch":
        if not 2 <= nperseg <= n:
            raise ValueError(f"nperseg must lie in 2..{n}, got {nperseg}")
        step = max(1, int(round(nperseg * (1.0 - overlap))))
        win = signal.get_window(window, nperseg, fftbins=True)
        win = win / np.sqrt(np.sum(win**2))
        segs = sliding_window_view(data, nperseg, axis=0)[::step]  # (s, 3, nperseg)
        segs = np.swapaxes(segs, 1, 2)
        segs = segs - segs.mean(axis=1, keepdims=True)
        values = _tapered_matrices(segs, win[None], sample.delta).mean(axis=0)
        freqs = TWO_PI * np.arange(nperseg // 2 + 1) / (nperseg * sample.delta)
        settings = {"nperseg": nperseg, "overlap": overlap, "window": window, "segments": segs.shape[0]}
    else:
        raise ValueError(f"unknown cross-spectral method {method!r}")
    values = 0.5 * (values + np.conj(np.swapaxes(values, -1, -2)))
    return CrossSpectralEstimate(freqs, values, method, sample.delta, settings)


# --------------------------------------------------------------------------
# directional Fourier coefficients
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FourierCoefficients:
    """First- and second-order directional coefficients; NaN where ``f_zz`` is below the floor."""

    frequencies: np.ndarray
    a1: np.ndarray
    b1: np.ndarray
    a2: np.ndarray
    b2: np.ndarray
    defined: np.ndarray

    @property
    def c1(self) -> np.ndarray:
        return self.a1 + 1j * self.b1

    @property
    def c2(self) -> np.ndarray:
        return self.a2 + 1j * self.b2

    @property
    def gross_violation(self) -> np.ndarray:
        """Frequencies whose first moment exceeds one by more than estimation noise plausibly allows."""
        return self.defined & (np.abs(self.c1) > 1.1)


def depth_tanh(omega, ctx: PhysicalContext) -> np.ndarray:
    """``tanh(k h)`` at ``omega`` (ones in deep water)."""
    omega = np.asarray(omega, dtype=float)
    if ctx.deep:
        return np.ones_like(omega)
    out = np.ones_like(omega)
    pos = omega > 0
    out[pos] = np.tanh(dispersion_wavenumber(omega[pos], ctx) * ctx.water_depth)
    return out


def fourier_coefficients(est: CrossSpectralEstimate, ctx: PhysicalContext = DEEP_WATER,
                         floor: float = ZZ_FLOOR) -> FourierCoefficients:
    """``a1 = Im f_xz / f_zz``, ``b1 = Im f_yz / f_zz``, ``a2 = (f_xx - f_yy) / f_zz``, ``b2 = 2 Re f_xy / f_zz``.

    Horizontal channels are scaled by ``tanh(kh)`` in finite depth.
    """
    F = est.values
    zz = F[:, 0, 0].real
    defined = (zz > floor * np.max(zz)) & (est.frequencies > 0)
    th = depth_tanh(est.frequencies, ctx)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(defined, 1.0 / zz, np.nan)
        a1 = F[:, 1, 0].imag * inv * th
        b1 = F[:, 2, 0].imag * inv * th
        a2 = (F[:, 1, 1].real - F[:, 2, 2].real) * inv * th**2
        b2 = 2.0 * F[:, 1, 2].real * inv * th**2
    return FourierCoefficients(est.frequencies, a1, b1, a2, b2, defined)


def direction_grid(n_directions: int = 180) -> np.ndarray:
    return TWO_PI * np.arange(n_directions) / n_directions


def _normalise(D: np.ndarray) -> np.ndarray:
    area = D.sum(axis=-1, keepdims=True) * (TWO_PI / D.shape[-1])
    with np.errstate(divide="ignore", invalid="ignore"):
        return D / area


@dataclass(frozen=True)
class DirectionalEstimate:
    """Nonparametric spreading ``D(w, phi)`` on a periodic direction grid; NaN rows are undefined."""

    frequencies: np.ndarray
    directions: np.ndarray
    values: np.ndarray
    method: str


def mlm_spreading(est: CrossSpectralEstimate, ctx: PhysicalContext = DEEP_WATER,
                  n_directions: int = 180, floor: float = ZZ_FLOOR) -> DirectionalEstimate:
    """Maximum likelihood method: ``D(phi) ~ 1 / (G(phi)^H f^{-1} G(phi))``, renormalised."""
    phi = direction_grid(n_directions)
    zz = est.values[:, 0, 0].real
    ok = (zz > floor * np.max(zz)) & (est.frequencies > 0)
    D = np.full((est.frequencies.size, n_directions), np.nan)
    if np.any(ok):
        inv, _, singular = inverse_and_logdet(est.values[ok])
        G = transfer_function(phi, ctx, est.frequencies[ok][:, None])  # (m, K, 3)
        quad = np.einsum("wka,wab,wkb->wk", np.conj(G), inv, G).real
        with np.errstate(divide="ignore"):
            vals = np.where(quad > 0, 1.0 / quad, np.nan)
        vals[singular] = np.nan
        D[ok] = _normalise(vals)
    return DirectionalEstimate(est.frequencies, phi, D, "mlm")


def mem_from_moments(c1: np.ndarray, c2: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Maximum entropy spreading from the first two circular moments (unnormalised grid values)."""
    c1 = np.asarray(c1)[..., None]
    c2 = np.asarray(c2)[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        p1 = (c1 - c2 * np.conj(c1)) / (1.0 - np.abs(c1) ** 2)
        p2 = c2 - c1 * p1
        num = 1.0 - p1 * np.conj(c1) - p2 * np.conj(c2)
        den = np.abs(1.0 - p1 * np.exp(-1j * phi) - p2 * np.exp(-2j * phi)) ** 2
        return (num.real / den) / TWO_PI


def mem_spreading(est: CrossSpectralEstimate, ctx: PhysicalContext = DEEP_WATER,
                  n_directions: int = 180, floor: float = ZZ_FLOOR) -> DirectionalEstimate:
    """Maximum entropy method from ``c1``, ``c2``; clipped at zero and renormalised."""
    phi = direction_grid(n_directions)
    coef = fourier_coefficients(est, ctx, floor)
    D = mem_from_moments(coef.c1, coef.c2, phi)
    D = np.where(np.isfinite(D), np.clip(D, 0.0, None), np.nan)
    D[~coef.defined] = np.nan
    return DirectionalEstimate(est.frequencies, phi, _normalise(D), "mem")


# --------------------------------------------------------------------------
# least-squares fits
# --------------------------------------------------------------------------


@dataclass
class CompetitorFit:
    """Estimates from a classical technique; ``values`` maps parameter names to floats."""

    values: dict
    converged: bool
    message: str = ""
    excluded: int = 0


def _initial_marginal(omega, fzz):
    k = int(np.argmax(fzz))
    wp = float(omega[k])
    g, r = STANDARD_SHAPE["gamma"], STANDARD_SHAPE["r"]
    alpha = float(fzz[k]) * wp**r * math.exp(r / 4.0) / g
    return np.array([alpha, wp, g, r])


def ls_marginal_fit(est: CrossSpectralEstimate, omega_grid=None, log_scale: bool = False,
                    init=None) -> CompetitorFit:
    """Least squares of the JONSWAP density against ``f_zz`` by bounded quasi-Newton (L-BFGS-B).

    ``omega_grid`` restricts the fit to a band ``(low, high)`` or to explicit
    estimate frequencies.  Linear-scale residuals by default.
    """
    omega, fzz = _select_band(est, omega_grid)
    fzz = fzz[:, 0, 0].real
    x0 = np.asarray(init, dtype=float) if init is not None else _initial_marginal(omega, fzz)
    scale = x0.copy()
    if log_scale:
        pos = fzz > 0
        omega, target = omega[pos], np.log(fzz[pos])
    else:
        target = fzz
    norm = float(np.sum(target**2)) or 1.0

    def objective(u):
        th = np.concatenate([u * scale, np.zeros(5)])
        f = jonswap_sdf(omega, th)
        df = jonswap_gradient(omega, th)
        if log_scale:
            with np.errstate(divide="ignore"):
                model = np.log(f)
            dmodel = df / f
        else:
            model, dmodel = f, df
        res = model - target
        if not np.all(np.isfinite(res)):
            return math.inf, np.zeros(4)
        return float(res @ res) / norm, 2.0 * (dmodel @ res) * scale / norm

    bounds = [(1e-12 / scale[0], None), (1e-6 / scale[1], None), (1.0 / scale[2], None), (1.0 / scale[3], None)]
    u0 = np.clip(np.ones(4), [b[0] for b in bounds], None)
    opts = {"maxiter": 1000, "ftol": 1e-15, "gtol": 1e-10}
    res = optimize.minimize(objective, u0, jac=True, method="L-BFGS-B", bounds=bounds, options=opts)
    if not res.success:
        # line-search stalls at this ftol are usually round-off; one warm restart
        res = optimize.minimize(objective, res.x, jac=True, method="L-BFGS-B", bounds=bounds, options=opts)
    ok = bool(res.success)
    message = str(res.message)
    if not ok and np.isfinite(res.fun):
        lo = np.array([b[0] for b in bounds])
        g = np.asarray(res.jac, dtype=float)
        projected = np.where((res.x - lo <= 1e-12) & (g > 0), 0.0, g)
        if np.max(np.abs(projected)) < 1e-6:
            ok, message = True, f"{message} (projected gradient below 1e-6)"
    est_vals = res.x * scale
    names = ("alpha", "omega_p", "gamma", "r")
    return CompetitorFit(dict(zip(names, map(float, est_vals))), ok, message)


def _select_band(est, omega_grid):
    if omega_grid is None:
        keep = est.frequencies > 0
    elif len(omega_grid) == 2 and not isinstance(omega_grid, np.ndarray):
        lo, hi = omega_grid
        keep = (est.frequencies >= lo) & (est.frequencies <= hi) & (est.frequencies > 0)
    else:
        keep = np.isin(est.frequencies, np.asarray(omega_grid, dtype=float))
    if not np.any(keep):
        raise ValueError("no estimate frequencies in the requested grid")
    return est.frequencies[keep], est.values[keep]


WIDE = 1.5  # above this width the Fourier series form of the wrapped normal is cheaper


def _wrapped_gaussian_and_derivs(phi, mean, sigma):
    """Wrapped normal density and its derivatives w.r.t. the mean and the width.

    Narrow components sum shifted Gaussians; wide ones use the Fourier series
    ``(1 + 2 sum_p exp(-p^2 s^2 / 2) cos(p (phi - mean))) / (2 pi)``.
    Both are truncated below double precision.
    """
    centred = np.mod(phi - mean + np.pi, TWO_PI) - np.pi
    sigma = np.broadcast_to(sigma, np.broadcast(centred, sigma).shape)
    centred = np.broadcast_to(centred, sigma.shape)
    val = np.zeros(sigma.shape)
    dmean = np.zeros_like(val)
    dsig = np.zeros_like(val)
    narrow = sigma <= WIDE
    if np.any(narrow):
        c, sg = centred[narrow], sigma[narrow]
        v = np.zeros_like(c)
        dm = np.zeros_like(c)
        ds = np.zeros_like(c)
        norm = 1.0 / (sg * math.sqrt(TWO_PI))
        K = wrap_terms(sg)
        for k in range(-K, K + 1):
            u = (c - TWO_PI * k) / sg
            g = np.exp(-0.5 * u * u) * norm
            v += g
            dm += g * u / sg
            ds += g * (u * u - 1.0) / sg
        val[narrow], dmean[narrow], dsig[narrow] = v, dm, ds
    wide = ~narrow
    if np.any(wide):
        c, sg = centred[wide], sigma[wide]
        v = np.ones_like(c)
        dm = np.zeros_like(c)
        ds = np.zeros_like(c)
        P = int(math.ceil(math.sqrt(2.0 * 40.0) / WIDE))
        for p in range(1, P + 1):
            e = 2.0 * np.exp(-0.5 * p * p * sg * sg)
            cos, sin = np.cos(p * c), np.sin(p * c)
            v += e * cos
            dm += e * p * sin
            ds -= e * p * p * sg * cos
        val[wide], dmean[wide], dsig[wide] = v / TWO_PI, dm / TWO_PI, ds / TWO_PI
    return val, dmean, dsig


SPREADING_NAMES = ("phi_m", "beta", "nu", "sigma_l", "sigma_r")
MIN_WIDTH = 1e-3


# bounds on the free vector (phi_m, beta, nu, sigma_l - sigma_r, sigma_r)
FREE_LOWER = (-math.inf, 0.0, 0.0, MIN_WIDTH, 0.0)
FREE_UPPER = (math.inf, TWO_PI, math.inf, math.inf, math.inf)


def _spreading_values(u, omega_p) -> dict:
    th = _spreading_from_free(u, omega_p)
    return {"phi_m": float(th[4] % TWO_PI), "beta": float(th[5]), "nu": float(th[6]),
            "sigma_l": float(th[7]), "sigma_r": float(th[8])}


def _spreading_from_free(u, omega_p):
    """Free vector ``(phi_m, beta, nu, sigma_l - sigma_r, sigma_r)`` to a nine-parameter array."""
    th = np.zeros(9)
    th[1] = omega_p
    th[4], th[5], th[6] = u[0], u[1], u[2]
    th[7] = u[3] + u[4]
    th[8] = u[4]
    return th


def model_spreading_and_gradient(omega, phi, theta):
    """``D(w, phi)`` on a grid and its derivatives w.r.t. ``(phi_m, beta, nu, sigma_l, sigma_r)``."""
    aw = np.abs(np.asarray(omega, dtype=float))[:, None]
    phi_s, sigma, dps, dsg = _shape_terms(aw, theta)
    m1, m2 = theta[4] + 0.5 * phi_s, theta[4] - 0.5 * phi_s
    v1, dm1, ds1 = _wrapped_gaussian_and_derivs(phi[None, :], m1, sigma)
    v2, dm2, ds2 = _wrapped_gaussian_and_derivs(phi[None, :], m2, sigma)
    D = 0.5 * (v1 + v2)
    d_phim = 0.5 * (dm1 + dm2)
    d_phis = 0.25 * (dm1 - dm2)
    d_sigma = 0.5 * (ds1 + ds2)
    grads = np.stack([
        d_phim,
        d_phis * dps["beta"],
        d_phis * dps["nu"],
        d_sigma * dsg["sigma_l"],
        d_sigma * dsg["sigma_r"],
    ])
    return D, grads


def _bounded_lsq(residuals, jacobian, u0, lower, upper, max_nfev):
    """Bounded trust-region least squares with an active-set polish.

    Trust-region iterations crawl when the minimum sits on a bound; if the
    first run stops there without converging, the bound-active variables are
    frozen, the rest re-solved, and convergence accepted when the frozen
    gradients point out of the feasible box.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    u0 = np.clip(u0, lower + 1e-9, upper - 1e-9)
    opts = dict(method="trf", x_scale="jac", xtol=1e-8, ftol=1e-8, gtol=1e-8)
    res = optimize.least_squares(residuals, u0, jac=jacobian, bounds=(lower, upper), max_nfev=max_nfev, **opts)
    if res.success:
        return res.x, True, str(res.message)
    span = np.where(np.isfinite(upper - lower), upper - lower, 1.0)
    at_lo = res.x - lower < 1e-6 * span
    at_hi = upper - res.x < 1e-6 * span
    active = at_lo | at_hi
    if not np.any(active):
        return res.x, False, str(res.message)
    free = ~active
    fixed = np.where(at_lo, lower, upper)

    def full(v):
        u = fixed.copy()
        u[free] = v
        return u

    sub = optimize.least_squares(lambda v: residuals(full(v)), res.x[free], jac=lambda v: jacobian(full(v))[:, free],
                                 bounds=(lower[free], upper[free]), max_nfev=max_nfev, **opts)
    u = full(sub.x)
    grad = jacobian(u).T @ residuals(u)
    # at a lower bound the cost must not decrease inwards (grad >= 0); at an upper bound grad <= 0
    kkt = np.all(grad[at_lo] >= -1e-8 * (1 + np.abs(grad).max())) and np.all(grad[at_hi] <= 1e-8 * (1 + np.abs(grad).max()))
    ok = bool(sub.success and kkt)
    return u, ok, str(sub.message) + ("" if kkt else " (bound multipliers of the wrong sign)")


def ls_spreading_fit(dhat: DirectionalEstimate, theta_marginal: dict, omega_grid=None, init=None,
                     max_iter: int = 300) -> CompetitorFit:
    """Least squares of the model spreading function against ``dhat`` over frequency and direction.

    Bounded trust-region least squares on ``(phi_m, beta, nu, sigma_l -
    sigma_r, sigma_r)`` so the angular width stays positive.
    """
    omega = dhat.frequencies
    keep = np.all(np.isfinite(dhat.values), axis=1) & (omega > 0)
    if omega_grid is not None:
        lo, hi = omega_grid
        keep &= (omega >= lo) & (omega <= hi)
    if not np.any(keep):
        return CompetitorFit({k: math.nan for k in SPREADING_NAMES}, False, "no defined directional slices")
    omega, target, phi = omega[keep], dhat.values[keep], dhat.directions
    omega_p = float(theta_marginal["omega_p"])
    if init is None:
        # start at the standard shape and the direction of the strongest peak
        k = int(np.argmin(np.abs(omega - omega_p)))
        c1 = np.sum(target[k] * np.exp(1j * phi))
        init = {"phi_m": math.atan2(c1.imag, c1.real) % TWO_PI, **{n: STANDARD_SHAPE[n] for n in SPREADING_NAMES[1:]}}
    u0 = np.array([init["phi_m"], init["beta"], init["nu"], max(init["sigma_l"] - init["sigma_r"], 0.05), init["sigma_r"]])
    # d(phi_m, beta, nu, sigma_l, sigma_r) / d(free vector)
    jac_map = np.array([[1, 0, 0, 0, 0], [0, 1, 0, 0, 0], [0, 0, 1, 0, 0], [0, 0, 0, 1, 1], [0, 0, 0, 0, 1]], float)
    cache = {}

    def evaluate(u):
        key = u.tobytes()
        if key not in cache:
            cache.clear()
            D, dD = model_spreading_and_gradient(omega, phi, _spreading_from_free(u, omega_p))
            cache[key] = (D, dD)
        return cache[key]

    def residuals(u):
        return (evaluate(u)[0] - target).ravel()

    def jacobian(u):
        dD = evaluate(u)[1]
        return (dD.reshape(5, -1).T) @ jac_map

    x, ok, message = _bounded_lsq(residuals, jacobian, u0, FREE_LOWER, FREE_UPPER, max_iter)
    return CompetitorFit(_spreading_values(x, omega_p), ok, message)


# --------------------------------------------------------------------------
# moments matching
# --------------------------------------------------------------------------


def _moment_model(mu, h, s):
    """``c1, c2`` of an equal-weight two-arm wrapped normal with arms ``mu +/- h`` and width ``s``."""
    e1 = np.exp(-0.5 * s * s)
    e2 = np.exp(-2.0 * s * s)
    c1 = np.exp(1j * mu) * np.cos(h) * e1
    c2 = np.exp(2j * mu) * np.cos(2 * h) * e2
    return c1, c2


def _moment_residuals(p, c1, c2):
    mu, h, s = p[:, 0], p[:, 1], p[:, 2]
    m1, m2 = _moment_model(mu, h, s)
    r = np.stack([m1.real - c1.real, m1.imag - c1.imag, m2.real - c2.real, m2.imag - c2.imag], axis=1)
    e1 = np.exp(-0.5 * s * s)
    e2 = np.exp(-2.0 * s * s)
    J = np.empty(p.shape[:1] + (4, 3))
    d1_mu = 1j * m1
    d1_h = -np.exp(1j * mu) * np.sin(h) * e1
    d1_s = -s * m1
    d2_mu = 2j * m2
    d2_h = -2.0 * np.exp(2j * mu) * np.sin(2 * h) * e2
    d2_s = -4.0 * s * m2
    for col, (a, b) in enumerate(((d1_mu, d2_mu), (d1_h, d2_h), (d1_s, d2_s))):
        J[:, 0, col], J[:, 1, col] = a.real, a.imag
        J[:, 2, col], J[:, 3, col] = b.real, b.imag
    return r, J


def moments_stage1(c1, c2, max_iter: int = 200, tol: float = 1e-12):
    """Per-frequency ``(mu, h, s)`` with ``h = phi_s / 2`` in ``[0, pi/2]`` and ``s >= 0`` minimising
    ``|c1(theta) - c1|^2 + |c2(theta) - c2|^2``.  Points whose fit is
    essentially uniform (``|c1| < 1e-6``) count as not converged.

    A vectorised projected Levenberg-Marquardt run started from the exact
    inversion of the moduli (``v = exp(-s^2)`` solves ``v^2 - 2|c1|^2 v + B = 0``
    with ``B = Re(c2 exp(-2 i mu))``) and from two fixed starts; the best end
    point is kept.  Returns ``(params, converged)``.
    """
    c1 = np.asarray(c1, dtype=complex)
    c2 = np.asarray(c2, dtype=complex)
    m = c1.size
    best = np.full((m, 3), np.nan)
    best_cost = np.full(m, np.inf)
    best_conv = np.zeros(m, dtype=bool)
    mu0 = np.angle(c1)
    mod1 = np.clip(np.abs(c1), 1e-6, 1.0)
    B = (c2 * np.exp(-2j * mu0)).real
    v = np.clip(mod1**2 + np.sqrt(np.clip(mod1**4 - B, 0.0, None)), 1e-12, 1.0)
    s_exact = np.sqrt(-np.log(v))
    h_exact = np.arccos(np.clip(mod1 / np.sqrt(v), 0.0, 1.0))
    s_fixed = np.sqrt(np.clip(-2.0 * np.log(np.clip(mod1, 1e-6, 1.0 - 1e-9)), 1e-3, 3.0))
    starts = [(h_exact, s_exact), (np.full(m, 0.1), s_fixed), (np.full(m, 1.0), np.full(m, 0.5))]
    lo = np.array([-np.inf, 0.0, 0.0])
    hi = np.array([np.inf, 0.5 * np.pi, np.inf])
    for h0, s0 in starts:
        p = np.column_stack([mu0, h0, s0])
        lam = np.full(m, 1e-3)
        r, J = _moment_residuals(p, c1, c2)
        cost = np.sum(r * r, axis=1)
        conv = np.zeros(m, dtype=bool)
        for _ in range(max_iter):
            g = np.einsum("wri,wr->wi", J, r)
            A = np.einsum("wri,wrj->wij", J, J)
            diag = np.einsum("wii->wi", A)
            diag = diag + 1e-9 * np.sum(diag, axis=1, keepdims=True) + 1e-30
            A_damped = A + lam[:, None, None] * (np.eye(3) * diag[:, :, None])
            step = -np.linalg.solve(A_damped, g[..., None])[..., 0]
            trial = np.clip(p + step, lo, hi)
            r_t, J_t = _moment_residuals(trial, c1, c2)
            cost_t = np.sum(r_t * r_t, axis=1)
            better = (cost_t < cost) & ~conv
            small = np.max(np.abs(trial - p), axis=1) < tol * (1.0 + np.max(np.abs(p), axis=1))
            conv |= (better & ((cost - cost_t) < tol * (cost + tol))) | (small & ~better) | (cost < 1e-28)
            p = np.where(better[:, None], trial, p)
            r = np.where(better[:, None], r_t, r)
            J = np.where(better[:, None, None], J_t, J)
            cost = np.where(better, cost_t, cost)
            lam = np.where(better, np.maximum(lam * 0.3, 1e-10), lam * 10.0)
            conv |= lam > 1e12
            if np.all(conv):
                break
        take = cost < best_cost
        best = np.where(take[:, None], p, best)
        best_cost = np.where(take, cost, best_cost)
        best_conv = np.where(take, conv, best_conv)
    # a near-uniform fit carries no information on the width: treat as not identified
    fitted_c1, _ = _moment_model(best[:, 0], best[:, 1], best[:, 2])
    identified = np.abs(fitted_c1) > 1e-6
    return best, best_conv & np.isfinite(best_cost) & identified


def _wrap(a):
    return np.mod(a + np.pi, TWO_PI) - np.pi


def moments_matching_fit(est: CrossSpectralEstimate, ctx: PhysicalContext, omega_grid, theta_marginal: dict,
                         init=None) -> CompetitorFit:
    """Two-stage moments matching.

    Stage 1 matches ``c1, c2`` per frequency (:func:`moments_stage1`).  Stage 2
    fits the shape functions for separation and width, and a common mean
    direction, through the stage-1 values by bounded least squares.
    """
    coef = fourier_coefficients(est, ctx)
    omega = coef.frequencies
    keep = coef.defined.copy()
    if omega_grid is not None:
        lo, hi = omega_grid
        keep &= (omega >= lo) & (omega <= hi)
    if not np.any(keep):
        raise ValueError("no defined coefficients in the requested band")
    p, conv = moments_stage1(coef.c1[keep], coef.c2[keep])
    if np.any(~conv):
        logger.info("moments matching: stage 1 did not converge at %d of %d frequencies", int(np.sum(~conv)), conv.size)
    omega = omega[keep][conv]
    p = p[conv]
    excluded = int(np.sum(~conv))
    if omega.size < 5:
        return CompetitorFit({k: math.nan for k in SPREADING_NAMES}, False, "too few stage-1 frequencies", excluded)
    omega_p = float(theta_marginal["omega_p"])
    mu, phis, sig = p[:, 0], 2.0 * p[:, 1], p[:, 2]
    weights = est.values[keep][conv][:, 0, 0].real
    c = np.sum(weights * np.exp(1j * mu))
    phi_m0 = math.atan2(c.imag, c.real)
    if init is None:
        init = {n: STANDARD_SHAPE[n] for n in SPREADING_NAMES[1:]}
    u0 = np.array([phi_m0, init["beta"], init["nu"], max(init["sigma_l"] - init["sigma_r"], 0.05), init["sigma_r"]])

    def residuals(u):
        th = _spreading_from_free(u, omega_p)
        ps, sg, _, _ = _shape_terms(omega, th)
        return np.concatenate([_wrap(mu - u[0]), phis - ps, sig - sg])

    def jacobian(u):
        th = _spreading_from_free(u, omega_p)
        _, _, dps, dsg = _shape_terms(omega, th)
        m = omega.size
        J = np.zeros((3 * m, 5))
        J[:m, 0] = -1.0
        J[m : 2 * m, 1] = -dps["beta"]
        J[m : 2 * m, 2] = -dps["nu"]
        J[2 * m :, 3] = -dsg["sigma_l"]
        J[2 * m :, 4] = -(dsg["sigma_l"] + dsg["sigma_r"])
        return J

    x, ok, message = _bounded_lsq(residuals, jacobian, u0, FREE_LOWER, FREE_UPPER, 500)
    return CompetitorFit(_spreading_values(x, omega_p), ok, message, excluded)


# --------------------------------------------------------------------------
# diagnostics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DiagnosticSeries:
    """Significant wave height, mean direction per frequency and the error function ``R(w)``."""

    hs: float
    frequencies: np.ndarray
    mean_direction: np.ndarray
    error_fn: np.ndarray


def error_function(est: CrossSpectralEstimate, ctx: PhysicalContext = DEEP_WATER) -> np.ndarray:
    """``R(w) = log(f_xx + f_yy) + 2 log tanh(kh) - log f_zz``; zero for data matching the model."""
    F = est.values
    th = depth_tanh(est.frequencies, ctx)
    with np.errstate(divide="ignore", invalid="ignore"):
        R = np.log(F[:, 1, 1].real + F[:, 2, 2].real) + 2.0 * np.log(th) - np.log(F[:, 0, 0].real)
    R[est.frequencies <= 0] = np.nan
    return R


def mean_direction(coef: FourierCoefficients) -> np.ndarray:
    """First circular moment direction ``atan2(b1, a1)`` in ``[0, 2 pi)``."""
    return wrap_angle(np.arctan2(coef.b1, coef.a1))


def diagnostics(data, ctx: PhysicalContext = DEEP_WATER, hs: float | None = None, **spectral) -> DiagnosticSeries:
    """Diagnostics from a sample (multitaper by default) or from a ready cross-spectral estimate.

    ``hs`` must be supplied with an estimate; a sample yields it directly.
    """
    if isinstance(data, SeaStateSample):
        hs = 4.0 * float(np.std(data.channels[:, 0]))
        est = cross_spectra(data, **spectral)
    else:
        est = data
        if hs is None:
            # integrate the vertical spectrum over both half-axes
            dw = np.gradient(est.frequencies) if est.frequencies.size > 1 else np.ones(1)
            hs = 4.0 * math.sqrt(max(2.0 * float(np.sum(est.values[:, 0, 0].real * dw)), 0.0))
    coef = fourier_coefficients(est, ctx)
    return DiagnosticSeries(float(hs), est.frequencies, mean_direction(coef), error_function(est, ctx))
