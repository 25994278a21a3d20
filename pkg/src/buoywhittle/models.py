"""Continuous-frequency wind-sea models for three-dimensional buoy displacement.

The frequency-direction spectrum is ``S(w, phi) = f(w) D(w, phi)`` with a
JONSWAP marginal ``f`` and a bimodal wrapped Gaussian spreading function
``D``.  Directions are *coming from*, in radians clockwise from North.  The
observed channels are ordered ``(z, x, y)``: vertical, northward and eastward
displacement.

Spectral matrices are plain complex arrays of shape ``(..., 3, 3)`` indexed
``[row, column]`` over the channels, with ``f[..., 1, 0]`` the (x, z) entry.
For a real-valued process ``f(-w) = conj(f(w))``; the transfer function is
``[1, i cos(phi), i sin(phi)]`` for ``w > 0`` and its conjugate for ``w < 0``.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields
from typing import Sequence, Union

import numpy as np

TWO_PI = 2.0 * np.pi


def wrap_angle(phi):
    """Angle(s) reduced to ``[0, 2 pi)``.

    Plain ``mod`` rounds tiny negative angles up to exactly ``2 pi``; those map to 0.
    """
    wrapped = np.mod(phi, TWO_PI)
    if np.ndim(wrapped) == 0:
        return 0.0 if wrapped >= TWO_PI else float(wrapped)
    return np.where(wrapped >= TWO_PI, 0.0, wrapped)

PARAMETER_NAMES = (
    "alpha",
    "omega_p",
    "gamma",
    "r",
    "phi_m",
    "beta",
    "nu",
    "sigma_l",
    "sigma_r",
)
N_PARAMS = len(PARAMETER_NAMES)

# peak-width constants of the JONSWAP enhancement, below/above the peak
JONSWAP_WIDTH_LOW = 0.07
JONSWAP_WIDTH_HIGH = 0.09


class ModelDomainError(ValueError):
    """Raised when a model is evaluated outside its domain."""


@dataclass(frozen=True)
class Parameters:
    """The nine wind-sea parameters.

    ``alpha, omega_p, gamma, r`` shape the marginal spectrum and
    ``phi_m, beta, nu, sigma_l, sigma_r`` the spreading function.  ``phi_m`` is
    wrapped into ``[0, 2*pi)`` on construction.
    """

    alpha: float
    omega_p: float
    gamma: float
    r: float
    phi_m: float
    beta: float
    nu: float
    sigma_l: float
    sigma_r: float

    def __post_init__(self):
        for f in fields(self):
            value = float(getattr(self, f.name))
            if not math.isfinite(value):
                raise ModelDomainError(f"{f.name} must be finite, got {value}")
            object.__setattr__(self, f.name, value)
        object.__setattr__(self, "phi_m", wrap_angle(self.phi_m))
        if self.alpha <= 0:
            raise ModelDomainError(f"alpha must be > 0, got {self.alpha}")
        if self.omega_p <= 0:
            raise ModelDomainError(f"omega_p must be > 0, got {self.omega_p}")
        if self.gamma < 1:
            raise ModelDomainError(f"gamma must be >= 1, got {self.gamma}")
        if self.r <= 1:
            raise ModelDomainError(f"r must be > 1, got {self.r}")
        if not 0 <= self.beta < TWO_PI:
            raise ModelDomainError(f"beta must lie in [0, 2pi), got {self.beta}")
        for name in ("nu", "sigma_l", "sigma_r"):
            if getattr(self, name) < 0:
                raise ModelDomainError(f"{name} must be >= 0, got {getattr(self, name)}")

    def to_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "Parameters":
        values = np.asarray(values, dtype=float)
        if values.shape != (N_PARAMS,):
            raise ValueError(f"expected {N_PARAMS} parameter values, got shape {values.shape}")
        return cls(*values.tolist())

    def replace(self, **changes) -> "Parameters":
        values = dict(zip(PARAMETER_NAMES, astuple(self)))
        values.update(changes)
        return Parameters(**values)

    def as_dict(self) -> dict:
        return dict(zip(PARAMETER_NAMES, astuple(self)))


ThetaLike = Union[Parameters, Sequence[float], np.ndarray]


def _theta_array(theta: ThetaLike) -> np.ndarray:
    if isinstance(theta, Parameters):
        return theta.to_array()
    arr = np.asarray(theta, dtype=float)
    if arr.shape != (N_PARAMS,):
        raise ValueError(f"expected {N_PARAMS} parameter values, got shape {arr.shape}")
    return arr


# Simulation scenarios: fetch-limited sea, constant angular width, and the
# Pierson-Moskowitz case on the gamma = 1 boundary.
SCENARIOS = {
    1: Parameters(0.7, 0.8, 3.3, 5.0, np.pi / 2, 4.0, 2.7, 0.55, 0.26),
    2: Parameters(0.7, 1.1, 3.3, 5.0, np.pi / 2, 4.0, 2.7, 0.55, 0.00),
    3: Parameters(0.7, 1.0, 1.0, 5.0, np.pi / 2, 4.0, 2.7, 0.55, 0.26),
}


@dataclass(frozen=True)
class PhysicalContext:
    """Gravity (m/s^2) and still-water depth (m); ``water_depth=None`` is deep water."""

    gravity: float = 9.81
    water_depth: float | None = None

    def __post_init__(self):
        if not self.gravity > 0:
            raise ModelDomainError(f"gravity must be > 0, got {self.gravity}")
        if self.water_depth is not None:
            if math.isinf(self.water_depth):
                object.__setattr__(self, "water_depth", None)
            elif not self.water_depth > 0:
                raise ModelDomainError(f"water depth must be > 0, got {self.water_depth}")

    @property
    def deep(self) -> bool:
        return self.water_depth is None


DEEP_WATER = PhysicalContext()


@dataclass(frozen=True)
class SpreadingShape:
    """Arm means, peak separation and angular width at one or more frequencies."""

    phi_m1: np.ndarray
    phi_m2: np.ndarray
    phi_s: np.ndarray
    sigma_w: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        """True where the angular width is strictly positive."""
        return np.asarray(self.sigma_w) > 0


def _check_finite(omega):
    omega = np.asarray(omega, dtype=float)
    if not np.all(np.isfinite(omega)):
        raise ModelDomainError("angular frequency must be finite")
    return omega


# --------------------------------------------------------------------------
# marginal spectrum
# --------------------------------------------------------------------------


def _jonswap_log_terms(aw, theta):
    """log f and d(log f)/d(alpha, omega_p, gamma, r) for ``aw = |w| > 0``."""
    alpha, omega_p, gamma, r = theta[:4]
    u = aw / omega_p
    width = np.where(aw <= omega_p, JONSWAP_WIDTH_LOW, JONSWAP_WIDTH_HIGH)
    delta = np.exp(-0.5 * ((u - 1.0) / width) ** 2)
    q = (omega_p / aw) ** 4
    log_gamma = np.log(gamma)
    logf = np.log(alpha) - r * np.log(aw) - 0.25 * r * q + delta * log_gamma
    dlog = np.empty((4,) + np.shape(aw))
    dlog[0] = 1.0 / alpha
    ddelta_dwp = delta * (u - 1.0) * u / (width**2 * omega_p)
    dlog[1] = -r * q / omega_p + log_gamma * ddelta_dwp
    dlog[2] = delta / gamma
    dlog[3] = -np.log(aw) - 0.25 * q
    return logf, dlog


def jonswap_sdf(omega, theta: ThetaLike):
    """JONSWAP spectral density ``f(w)`` (two-sided, m^2 s/rad).

    Even in ``w`` and exactly zero at ``w = 0``.
    """
    omega = _check_finite(omega)
    th = _theta_array(theta)
    aw = np.abs(omega)
    pos = aw > 0
    out = np.zeros_like(aw)
    if np.any(pos):
        logf, _ = _jonswap_log_terms(aw[pos], th)
        out[pos] = np.exp(logf)
    return out if out.ndim else float(out)


def jonswap_gradient(omega, theta: ThetaLike) -> np.ndarray:
    """Partial derivatives of :func:`jonswap_sdf` w.r.t. ``(alpha, omega_p, gamma, r)``.

    Returns an array of shape ``(4,) + omega.shape``.
    """
    omega = _check_finite(omega)
    th = _theta_array(theta)
    aw = np.abs(omega)
    pos = aw > 0
    out = np.zeros((4,) + aw.shape)
    if np.any(pos):
        logf, dlog = _jonswap_log_terms(aw[pos], th)
        out[:, pos] = np.exp(logf) * dlog
    return out


# --------------------------------------------------------------------------
# spreading
# --------------------------------------------------------------------------


def _shape_terms(aw, theta):
    """Separation and width, plus derivatives w.r.t. (omega_p, beta, nu) and (omega_p, sigma_l, sigma_r)."""
    omega_p, beta, nu, sigma_l, sigma_r = theta[1], theta[5], theta[6], theta[7], theta[8]
    ratio = omega_p / aw
    above = ratio < 1.0
    m = np.where(above, ratio, 1.0)
    decay = np.exp(-nu * m)
    phi_s = beta * decay
    bracket = 4.0 * ratio**2 - ratio**8
    sigma = sigma_l - sigma_r / 3.0 * bracket
    d_phi_s = {
        "omega_p": np.where(above, -nu * phi_s / aw, 0.0),
        "beta": decay,
        "nu": -m * phi_s,
    }
    d_sigma = {
        "omega_p": -sigma_r / 3.0 * (8.0 * ratio - 8.0 * ratio**7) / aw,
        "sigma_l": np.ones_like(aw),
        "sigma_r": -bracket / 3.0,
    }
    return phi_s, sigma, d_phi_s, d_sigma


def spreading_shape(omega, theta: ThetaLike) -> SpreadingShape:
    """Arm means ``phi_m +/- phi_s/2`` and angular width at frequency ``omega``."""
    omega = _check_finite(omega)
    if np.any(omega == 0):
        raise ModelDomainError("spreading shape is singular at omega = 0")
    th = _theta_array(theta)
    phi_s, sigma, _, _ = _shape_terms(np.abs(omega), th)
    return SpreadingShape(
        phi_m1=th[4] + phi_s / 2.0,
        phi_m2=th[4] - phi_s / 2.0,
        phi_s=phi_s,
        sigma_w=sigma,
    )


def wrap_terms(sigma) -> int:
    """Number of 2*pi shifts per side needed for a wrapped Gaussian of width ``sigma``."""
    smax = float(np.max(np.abs(sigma)))
    return max(1, math.ceil(8.0 * smax / TWO_PI) + 1)


def wrapped_gaussian(phi, mean, sigma):
    """Wrapped normal density on the circle (broadcasting).

    Widths up to 1.5 rad sum shifted Gaussians; wider ones use the rapidly
    converging Fourier series ``(1 + 2 sum_p exp(-p^2 s^2/2) cos(p x)) / 2 pi``.
    """
    phi = np.asarray(phi, dtype=float)
    mean = np.asarray(mean, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    centred = np.mod(phi - mean + np.pi, TWO_PI) - np.pi
    centred, sigma = np.broadcast_arrays(centred, sigma)
    out = np.empty(centred.shape)
    narrow = sigma <= 1.5
    if np.any(narrow):
        c, s = centred[narrow], sigma[narrow]
        K = wrap_terms(s)
        total = np.zeros_like(c)
        for k in range(-K, K + 1):
            total += np.exp(-0.5 * ((c - TWO_PI * k) / s) ** 2)
        out[narrow] = total / (s * math.sqrt(TWO_PI))
    if not np.all(narrow):
        c, s = centred[~narrow], sigma[~narrow]
        P = math.ceil(9.0 / float(np.min(s))) + 1  # exp(-p^2 s^2 / 2) < 1e-17 beyond P
        total = np.ones_like(c)
        for p in range(1, P + 1):
            total += 2.0 * np.exp(-0.5 * (p * s) ** 2) * np.cos(p * c)
        out[~narrow] = total / TWO_PI
    return out


def spreading_density(omega, phi, theta: ThetaLike):
    """Bimodal wrapped Gaussian spreading function ``D(w, phi)`` (1/rad).

    ``omega`` and ``phi`` broadcast against each other.  Raises
    :class:`ModelDomainError` where the angular width is not positive.
    """
    shape = spreading_shape(omega, theta)
    if not np.all(shape.valid):
        bad = np.asarray(shape.sigma_w)[~np.asarray(shape.valid)]
        raise ModelDomainError(
            f"angular width must be positive; got sigma_w = {np.ravel(bad)[0]:.6g}"
        )
    value = 0.5 * (
        wrapped_gaussian(phi, shape.phi_m1, shape.sigma_w)
        + wrapped_gaussian(phi, shape.phi_m2, shape.sigma_w)
    )
    return value if np.ndim(value) else float(value)


def freq_dir_spectrum(omega, phi, theta: ThetaLike):
    """Frequency-direction spectrum ``S(w, phi) = f(w) D(w, phi)``; zero at ``w = 0``."""
    omega = _check_finite(omega)
    phi = np.asarray(phi, dtype=float)
    omega_b, phi_b = np.broadcast_arrays(omega, phi)
    out = np.zeros(omega_b.shape)
    nz = omega_b != 0
    if np.any(nz):
        out[nz] = jonswap_sdf(omega_b[nz], theta) * spreading_density(
            omega_b[nz], phi_b[nz], theta
        )
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# dispersion and the spectral density matrix
# --------------------------------------------------------------------------


class DispersionSolverError(RuntimeError):
    """Raised when the dispersion relation could not be solved."""


def dispersion_wavenumber(omega, ctx: PhysicalContext = DEEP_WATER, tol: float = 1e-13):
    """Wavenumber ``k >= 0`` solving ``w^2 = g k tanh(k h)`` (``k = w^2/g`` in deep water)."""
    omega = _check_finite(omega)
    if np.any(omega < 0):
        raise ModelDomainError("dispersion relation expects omega >= 0")
    g = ctx.gravity
    k_deep = omega**2 / g
    if ctx.deep:
        return k_deep if k_deep.ndim else float(k_deep)
    h = ctx.water_depth
    out = np.zeros_like(omega)
    pos = omega > 0
    w2 = omega[pos] ** 2
    # Newton on F(x) = x tanh(x) - w^2 h / g with x = k h, started from the
    # shallow/deep blend x0 = y / sqrt(tanh(y)); converges monotonically.
    y = w2 * h / g
    x = y / np.sqrt(np.tanh(y))
    for _ in range(100):
        t = np.tanh(x)
        F = x * t - y
        dF = t + x * (1.0 - t * t)
        step = F / dF
        x = x - step
        if np.all(np.abs(step) <= tol * np.maximum(x, 1.0)):
            break
    residual = np.abs(x * np.tanh(x) - y)
    if np.any(residual > 1e-10 * np.maximum(y, 1.0)):
        raise DispersionSolverError(
            f"dispersion solver did not converge, max residual {residual.max():.3g}"
        )
    out[pos] = x / h
    return out if out.ndim else float(out)


def depth_factor(omega, ctx: PhysicalContext = DEEP_WATER):
    """``1/tanh(k h)`` scaling of the horizontal channels (1 in deep water)."""
    omega = np.asarray(omega, dtype=float)
    if ctx.deep:
        return np.ones_like(omega)
    aw = np.abs(omega)
    out = np.ones_like(aw)
    pos = aw > 0
    k = dispersion_wavenumber(aw[pos], ctx)
    out[pos] = 1.0 / np.tanh(k * ctx.water_depth)
    return out


def _assemble(f, phi_m, phi_s, sigma, sign, t):
    """Model matrix from marginal density and spreading moments (broadcast)."""
    A = np.exp(-0.5 * sigma**2)
    B = np.exp(-2.0 * sigma**2)
    ch = np.cos(phi_s / 2.0)
    C1 = np.cos(phi_m) * ch * A
    S1 = np.sin(phi_m) * ch * A
    cs = np.cos(phi_s) * B
    Q = np.cos(2.0 * phi_m) * cs
    P = np.sin(2.0 * phi_m) * cs
    shape = np.broadcast(f, sigma, phi_s, t).shape
    out = np.zeros(shape + (3, 3), dtype=complex)
    xz = 1j * sign * f * C1 * t
    yz = 1j * sign * f * S1 * t
    out[..., 0, 0] = f
    out[..., 1, 0] = xz
    out[..., 0, 1] = np.conj(xz)
    out[..., 2, 0] = yz
    out[..., 0, 2] = np.conj(yz)
    t2 = t * t
    out[..., 1, 1] = 0.5 * f * (1.0 + Q) * t2
    out[..., 2, 2] = 0.5 * f * (1.0 - Q) * t2
    out[..., 1, 2] = out[..., 2, 1] = 0.5 * f * P * t2
    return out


def sdf_matrix(omega, theta: ThetaLike, ctx: PhysicalContext = DEEP_WATER) -> np.ndarray:
    """3x3 spectral density matrix of ``(z, x, y)`` at ``omega`` (shape ``omega.shape + (3, 3)``).

    Closed form of the transfer-function integral over direction.  Zero at
    ``omega = 0``.
    """
    omega = _check_finite(omega)
    th = _theta_array(theta)
    aw = np.abs(omega)
    safe = np.where(aw > 0, aw, 1.0)
    f = jonswap_sdf(omega, th)
    phi_s, sigma, _, _ = _shape_terms(safe, th)
    return _assemble(f, th[4], phi_s, sigma, np.sign(omega), depth_factor(omega, ctx))


def sdf_matrix_and_gradient(omega, theta: ThetaLike, ctx: PhysicalContext = DEEP_WATER):
    """Model matrix and its partial derivatives w.r.t. all nine parameters.

    Returns ``(F, dF)`` with ``dF`` of shape ``(9,) + omega.shape + (3, 3)``.
    Derivatives at the ``gamma = 1``, ``beta = 0`` and ``sigma_r = 0``
    boundaries are the one-sided (interior) limits.
    """
    omega = _check_finite(omega)
    th = _theta_array(theta)
    aw = np.abs(omega)
    pos = aw > 0
    safe = np.where(pos, aw, 1.0)
    sign = np.sign(omega)
    t = depth_factor(omega, ctx)
    t2 = t * t

    f = np.zeros_like(aw)
    df = np.zeros((4,) + aw.shape)
    if np.any(pos):
        logf, dlog = _jonswap_log_terms(aw[pos], th)
        f[pos] = np.exp(logf)
        df[:, pos] = f[pos] * dlog
    phi_m = th[4]
    phi_s, sigma, d_phi_s, d_sigma = _shape_terms(safe, th)

    A = np.exp(-0.5 * sigma**2)
    B = np.exp(-2.0 * sigma**2)
    ch, sh = np.cos(phi_s / 2.0), np.sin(phi_s / 2.0)
    cm, sm = np.cos(phi_m), np.sin(phi_m)
    c2m, s2m = np.cos(2.0 * phi_m), np.sin(2.0 * phi_m)
    cs, ss = np.cos(phi_s), np.sin(phi_s)
    C1, S1 = cm * ch * A, sm * ch * A
    Q, P = c2m * cs * B, s2m * cs * B

    F = _assemble(f, phi_m, phi_s, sigma, sign, t)

    # derivatives of (C1, S1, Q, P) w.r.t. phi_m, phi_s, sigma
    dC1 = (-sm * ch * A, -0.5 * cm * sh * A, -sigma * C1)
    dS1 = (cm * ch * A, -0.5 * sm * sh * A, -sigma * S1)
    dQ = (-2.0 * P, -c2m * ss * B, -4.0 * sigma * Q)
    dP = (2.0 * Q, -s2m * ss * B, -4.0 * sigma * P)

    def directional(i):
        """Matrix derivative through the i-th spreading quantity with f fixed."""
        out = np.zeros(aw.shape + (3, 3), dtype=complex)
        xz = 1j * sign * f * dC1[i] * t
        yz = 1j * sign * f * dS1[i] * t
        out[..., 1, 0] = xz
        out[..., 0, 1] = np.conj(xz)
        out[..., 2, 0] = yz
        out[..., 0, 2] = np.conj(yz)
        out[..., 1, 1] = 0.5 * f * dQ[i] * t2
        out[..., 2, 2] = -0.5 * f * dQ[i] * t2
        out[..., 1, 2] = out[..., 2, 1] = 0.5 * f * dP[i] * t2
        return out

    unit = _assemble(np.ones_like(f), phi_m, phi_s, sigma, sign, t)
    d_phi_m, d_by_phi_s, d_by_sigma = directional(0), directional(1), directional(2)

    dF = np.zeros((N_PARAMS,) + F.shape, dtype=complex)
    for j in range(4):
        dF[j] = df[j][..., None, None] * unit
    dF[1] += d_phi_s["omega_p"][..., None, None] * d_by_phi_s
    dF[1] += d_sigma["omega_p"][..., None, None] * d_by_sigma
    dF[4] = d_phi_m
    dF[5] = d_phi_s["beta"][..., None, None] * d_by_phi_s
    dF[6] = d_phi_s["nu"][..., None, None] * d_by_phi_s
    dF[7] = d_sigma["sigma_l"][..., None, None] * d_by_sigma
    dF[8] = d_sigma["sigma_r"][..., None, None] * d_by_sigma
    return F, dF


def sdf_matrix_gradient(omega, theta: ThetaLike, ctx: PhysicalContext = DEEP_WATER) -> np.ndarray:
    """Partial derivatives of :func:`sdf_matrix` w.r.t. each parameter, shape ``(9,) + omega.shape + (3, 3)``."""
    return sdf_matrix_and_gradient(omega, theta, ctx)[1]


def transfer_function(phi, ctx: PhysicalContext = DEEP_WATER, omega=None) -> np.ndarray:
    """Displacement transfer vector ``[1, i cos(phi), i sin(phi)] / tanh(k h)`` for ``omega > 0``.

    Heave-pitch-roll or other instruments would replace this vector; the
    closed-form :func:`sdf_matrix` is specific to displacement buoys.
    """
    phi = np.asarray(phi, dtype=float)
    t = np.ones(()) if omega is None else depth_factor(np.abs(omega), ctx)
    G = np.empty(np.broadcast(phi, t).shape + (3,), dtype=complex)
    G[..., 0] = 1.0
    G[..., 1] = 1j * np.cos(phi) * t
    G[..., 2] = 1j * np.sin(phi) * t
    return G
