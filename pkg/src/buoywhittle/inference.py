"""Periodograms, (debiased) Whittle likelihoods and Fisher-scoring fits."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .discrete import (
    SamplingScheme,
    aliased_sdf_matrix_and_gradient,
    expected_periodogram,
    expected_periodogram_and_gradient,
    fourier_frequencies,
)
from .models import (
    DEEP_WATER,
    N_PARAMS,
    PARAMETER_NAMES,
    TWO_PI,
    Parameters,
    PhysicalContext,
    ThetaLike,
    _theta_array,
)

logger = logging.getLogger(__name__)

CHANNELS = ("z", "x", "y")
DET_FLOOR = 1e-300

# standard shape values used to initialise fits (typical bimodal spreading, JONSWAP gamma)
STANDARD_SHAPE = {"gamma": 3.3, "r": 5.0, "beta": 4.0, "nu": 2.7, "sigma_l": 0.55, "sigma_r": 0.26}


class DataError(ValueError):
    """Raised for invalid observational input (non-finite or degenerate data)."""


# --------------------------------------------------------------------------
# data containers
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SeaStateSample:
    """An ``n x 3`` displacement record ``(z, x, y)`` in metres sampled every ``delta`` seconds."""

    channels: np.ndarray
    delta: float
    start_time: Optional[str] = None
    demeaned: bool = False

    def __post_init__(self):
        data = np.asarray(self.channels, dtype=float)
        if data.ndim != 2 or data.shape[1] != 3:
            raise DataError(f"expected an (n, 3) array of z, x, y displacements, got shape {data.shape}")
        if data.shape[0] < 2:
            raise DataError("a sea state needs at least two samples")
        if not np.all(np.isfinite(data)):
            bad = int(np.argwhere(~np.isfinite(data))[0, 0])
            raise DataError(f"non-finite displacement at sample {bad}")
        if not self.delta > 0:
            raise DataError(f"sampling interval must be positive, got {self.delta}")
        object.__setattr__(self, "channels", data)

    @classmethod
    def from_array(cls, data, delta: float, start_time=None, demean: bool = True) -> "SeaStateSample":
        """Validate a record and (by default) remove channel means; constant channels are rejected."""
        data = np.array(data, dtype=float, copy=True)
        sample = cls(data, float(delta), start_time)
        if demean:
            spread = np.ptp(sample.channels, axis=0)
            for name, s in zip(CHANNELS, spread):
                if s == 0:
                    raise DataError(f"channel {name} is constant; degenerate sea state")
            sample = cls(sample.channels - sample.channels.mean(axis=0), sample.delta, start_time, True)
        return sample

    @property
    def n(self) -> int:
        return self.channels.shape[0]

    @property
    def significant_wave_height(self) -> float:
        return 4.0 * float(np.std(self.channels[:, 0]))


@dataclass(frozen=True)
class FrequencySelection:
    """Non-negative Fourier indices ``j`` entering a likelihood (``j = 0`` is never included).

    Each interior index stands for the conjugate pair ``+/- j``; the Nyquist
    index (even ``n``) is its own conjugate.
    """

    indices: np.ndarray
    n: int
    delta: float
    low_cut: float = 0.0
    high_cut: float = math.inf

    def __post_init__(self):
        idx = np.unique(np.asarray(self.indices, dtype=int))
        if idx.size == 0:
            raise ValueError("frequency selection is empty")
        if idx[0] <= 0 or idx[-1] > self.n // 2:
            raise ValueError("selection indices must lie in 1..n//2")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def band(cls, n: int, delta: float, low_cut: float = 0.0, high_cut: float | None = None, exclude=()) -> "FrequencySelection":
        """All Fourier frequencies in ``[low_cut, high_cut]`` except zero and any ``exclude`` indices."""
        if high_cut is None:
            high_cut = math.pi / delta
        if not low_cut < high_cut:
            raise ValueError(f"low_cut ({low_cut}) must be below high_cut ({high_cut})")
        freqs = fourier_frequencies(n, delta)
        keep = (freqs >= low_cut) & (freqs <= high_cut) & (np.arange(freqs.size) > 0)
        keep[np.asarray(exclude, dtype=int)] = False
        idx = np.flatnonzero(keep)
        if idx.size == 0:
            raise ValueError(f"no Fourier frequencies in [{low_cut}, {high_cut}] rad/s")
        return cls(idx, n, delta, low_cut, high_cut)

    @property
    def frequencies(self) -> np.ndarray:
        return 2.0 * np.pi * self.indices / (self.n * self.delta)

    @property
    def weights(self) -> np.ndarray:
        """Multiplicity of each index in the symmetric (both half-axes) sum."""
        w = np.full(self.indices.size, 2.0)
        if self.n % 2 == 0:
            w[self.indices == self.n // 2] = 1.0
        return w

    def __len__(self) -> int:
        return self.indices.size


@dataclass(frozen=True)
class Periodogram:
    """Rank-one periodogram matrices ``J J^H`` at ``j = 0..n//2``."""

    values: np.ndarray
    n: int
    delta: float

    @property
    def frequencies(self) -> np.ndarray:
        return fourier_frequencies(self.n, self.delta)

    def full(self):
        """Frequencies and matrices over all of ``Omega_n`` (``j = -ceil(n/2)+1 .. floor(n/2)``)."""
        n = self.n
        j = np.arange(-((n + 1) // 2) + 1, n // 2 + 1)
        vals = np.where((j < 0)[:, None, None], np.conj(self.values[np.abs(j)]), self.values[np.abs(j)])
        return 2.0 * np.pi * j / (n * self.delta), vals

    def at(self, selection: FrequencySelection) -> np.ndarray:
        return self.values[selection.indices]


def dft(sample: SeaStateSample) -> np.ndarray:
    """Scaled DFT ``J(w_j) = sqrt(delta / (2 pi n)) sum_t P_t exp(-i t delta w_j)`` for ``j = 0..n//2``."""
    scale = math.sqrt(sample.delta / (2.0 * math.pi * sample.n))
    return scale * np.fft.rfft(sample.channels, axis=0)


def periodogram(sample: SeaStateSample) -> Periodogram:
    J = dft(sample)
    return Periodogram(J[:, :, None] * np.conj(J[:, None, :]), sample.n, sample.delta)


# --------------------------------------------------------------------------
# likelihoods
# --------------------------------------------------------------------------


def inverse_and_logdet(A: np.ndarray):
    """Inverse and log-determinant of stacked Hermitian matrices.

    3x3 matrices use the closed-form adjugate.  Returns ``(inv, logdet,
    singular)`` where ``singular`` marks determinants below ``1e-300`` (their
    inverse is set to zero and ``logdet`` to ``-inf``).
    """
    p = A.shape[-1]
    if p == 1:
        det = A[..., 0, 0].real
        singular = ~(det > DET_FLOOR)
        safe = np.where(singular, 1.0, det)
        inv = (1.0 / safe)[..., None, None] * np.ones_like(A)
    elif p == 3:
        a, b, c = A[..., 0, 0], A[..., 0, 1], A[..., 0, 2]
        d, e, f = A[..., 1, 0], A[..., 1, 1], A[..., 1, 2]
        g, h, i = A[..., 2, 0], A[..., 2, 1], A[..., 2, 2]
        adj = np.empty_like(A)
        adj[..., 0, 0] = e * i - f * h
        adj[..., 0, 1] = c * h - b * i
        adj[..., 0, 2] = b * f - c * e
        adj[..., 1, 0] = f * g - d * i
        adj[..., 1, 1] = a * i - c * g
        adj[..., 1, 2] = c * d - a * f
        adj[..., 2, 0] = d * h - e * g
        adj[..., 2, 1] = b * g - a * h
        adj[..., 2, 2] = a * e - b * d
        det = (a * adj[..., 0, 0] + b * adj[..., 1, 0] + c * adj[..., 2, 0]).real
        singular = ~(det > DET_FLOOR)
        safe = np.where(singular, 1.0, det)
        inv = adj / safe[..., None, None]
    else:
        sign, logabs = np.linalg.slogdet(A)
        det = (sign * np.exp(logabs)).real
        singular = ~(det > DET_FLOOR)
        inv = np.linalg.inv(np.where(singular[..., None, None], np.eye(p), A))
        safe = np.where(singular, 1.0, det)
    inv = np.where(singular[..., None, None], 0.0, inv)
    logdet = np.where(singular, -np.inf, np.log(safe))
    return inv, logdet, singular


def whittle_terms(I: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Per-frequency contributions ``log|M| + tr(I M^{-1})`` (``+inf`` where ``M`` is singular)."""
    inv, logdet, singular = inverse_and_logdet(M)
    trace = np.einsum("...ab,...ba->...", I, inv).real
    return np.where(singular, np.inf, logdet + trace)


def _sub(A, channels):
    ch = np.asarray(channels)
    return A[..., ch[:, None], ch[None, :]]


def _objective(I, M, dM, weights, channels, need_grad):
    """Symmetric-sum objective, its gradient and the expected information.

    ``I`` and ``M`` hold one matrix per selected non-negative frequency; the
    weights count each conjugate pair twice, so the expected negative Hessian
    of the objective is ``2 * info``.
    """
    I = _sub(I, channels)
    M = _sub(M, channels)
    inv, logdet, singular = inverse_and_logdet(M)
    if np.any(singular):
        return -np.inf, None, None, np.flatnonzero(singular)
    trace = np.einsum("wab,wba->w", I, inv).real
    value = -float(np.sum(weights * (logdet + trace)))
    if not need_grad:
        return value, None, None, None
    dM = _sub(dM, channels)
    A = np.einsum("wab,jwbc->jwac", inv, dM)  # M^{-1} dM_j
    # d/dj [log|M| + tr(I M^-1)] = tr(M^-1 dM_j) - tr(M^-1 I M^-1 dM_j)
    B = inv @ I @ inv
    dterm = np.einsum("jwaa->jw", A).real - np.einsum("wab,jwba->jw", B, dM).real
    grad = -dterm @ weights
    info = 0.5 * np.einsum("jwab,kwba,w->jk", A, A, weights).real
    info = 0.5 * (info + info.T)
    return value, grad, info, None


def _scheme_for(pgram: Periodogram, scheme: SamplingScheme | None) -> SamplingScheme:
    if scheme is None:
        return SamplingScheme(pgram.delta, pgram.n)
    if scheme.n != pgram.n or not math.isclose(scheme.delta, pgram.delta):
        raise ValueError("sampling scheme does not match the periodogram")
    return scheme


def _selection_for(pgram: Periodogram, selection) -> FrequencySelection:
    if selection is None:
        return FrequencySelection.band(pgram.n, pgram.delta)
    if isinstance(selection, FrequencySelection):
        return selection
    return FrequencySelection(np.asarray(selection), pgram.n, pgram.delta)


def _model_matrices(objective, theta, ctx, scheme, selection, need_grad):
    if objective == "debiased":
        if need_grad:
            return expected_periodogram_and_gradient(theta, ctx, scheme, selection)
        return expected_periodogram(theta, ctx, scheme, selection), None
    if objective == "whittle":
        M, dM = aliased_sdf_matrix_and_gradient(selection.frequencies, theta, ctx, scheme)
        return M, (dM if need_grad else None)
    raise ValueError(f"unknown objective {objective!r}; expected 'debiased' or 'whittle'")


def _loglik(objective, pgram, theta, ctx, scheme, selection, gradient, channels):
    scheme = _scheme_for(pgram, scheme)
    selection = _selection_for(pgram, selection)
    M, dM = _model_matrices(objective, _theta_array(theta), ctx, scheme, selection, gradient)
    value, grad, _, singular = _objective(pgram.at(selection), M, dM, selection.weights, channels, gradient)
    if singular is not None:
        logger.warning(
            "singular model matrix at %d selected frequencies (first %.6g rad/s)",
            singular.size,
            selection.frequencies[singular[0]],
        )
        grad = np.full(N_PARAMS, np.nan) if gradient else None
    return (value, grad) if gradient else value


def whittle_loglik(pgram: Periodogram, theta: ThetaLike, ctx: PhysicalContext = DEEP_WATER,
                   scheme: SamplingScheme | None = None, selection=None, gradient: bool = False,
                   channels: Sequence[int] = (0, 1, 2)):
    """Whittle log-likelihood ``-sum [log|f| + tr(I f^{-1})]`` over ``+/-`` selected frequencies.

    ``f`` is the (aliased) model matrix.  Returns ``-inf`` (and a NaN gradient)
    when the model is singular at a selected frequency.
    """
    return _loglik("whittle", pgram, theta, ctx, scheme, selection, gradient, channels)


def debiased_whittle_loglik(pgram: Periodogram, theta: ThetaLike, ctx: PhysicalContext = DEEP_WATER,
                            scheme: SamplingScheme | None = None, selection=None, gradient: bool = False,
                            channels: Sequence[int] = (0, 1, 2)):
    """Debiased Whittle log-likelihood: the Whittle form with the expected periodogram as the model."""
    return _loglik("debiased", pgram, theta, ctx, scheme, selection, gradient, channels)


def expected_fisher(theta: ThetaLike, ctx: PhysicalContext, scheme: SamplingScheme, selection,
                    objective: str = "debiased", channels: Sequence[int] = (0, 1, 2),
                    params: Sequence[int] | None = None) -> np.ndarray:
    """Expected information ``sum tr(E^-1 dE_j E^-1 dE_k)`` over distinct selected ordinates.

    Each conjugate pair counts once (the Nyquist ordinate, being real, counts
    one half), so the inverse is the asymptotic covariance of the estimator.
    ``params`` limits the conditioning check to the parameters being
    estimated; the full 9 x 9 matrix is always returned.
    """
    if not isinstance(selection, FrequencySelection):
        selection = FrequencySelection(np.asarray(selection), scheme.n, scheme.delta)
    M, dM = _model_matrices(objective, _theta_array(theta), ctx, scheme, selection, True)
    Msub = _sub(M, channels)
    inv, _, singular = inverse_and_logdet(Msub)
    if np.any(singular):
        raise np.linalg.LinAlgError("model matrix singular at a selected frequency")
    A = np.einsum("wab,jwbc->jwac", inv, _sub(dM, channels))
    info = 0.5 * np.einsum("jwab,kwba,w->jk", A, A, selection.weights).real
    info = 0.5 * (info + info.T)
    idx = np.arange(N_PARAMS) if params is None else np.asarray(params, dtype=int)
    cond = np.linalg.cond(info[np.ix_(idx, idx)])
    if not np.isfinite(cond) or cond > 1e14:
        logger.warning("expected information is ill-conditioned (condition number %.3g)", cond)
    return info


# --------------------------------------------------------------------------
# initialisation
# --------------------------------------------------------------------------


def smooth_matrices(values: np.ndarray, half_width: int) -> np.ndarray:
    """Daniell (running mean) smoothing over frequency, truncated at the ends."""
    if half_width <= 0:
        return values.copy()
    kernel = np.ones(2 * half_width + 1)
    flat = values.reshape(values.shape[0], -1)
    num = np.apply_along_axis(lambda v: np.convolve(v, kernel, mode="same"), 0, flat)
    den = np.convolve(np.ones(values.shape[0]), kernel, mode="same")
    return (num / den[:, None]).reshape(values.shape)


def initial_parameters(pgram: Periodogram, selection=None, half_width: int | None = None,
                       standard: dict | None = None, refine: bool = True) -> Parameters:
    """Start values: peak frequency and its mean direction from a smoothed periodogram.

    The remaining shape parameters take standard values and ``alpha`` matches
    the model peak height to the smoothed vertical spectrum at the peak.  With
    ``refine`` the four marginal parameters are then replaced by a
    vertical-only debiased Whittle fit from that start.  The smoothed peak is
    a poor guide for flat spectra (``gamma`` near 1), and a full fit started
    far from the marginal optimum can stall where the two spreading modes
    merge (``nu`` growing without bound).
    """
    selection = _selection_for(pgram, selection)
    if half_width is None:
        half_width = max(2, pgram.n // 256)
    shape = dict(STANDARD_SHAPE)
    if standard:
        shape.update(standard)
    smooth = smooth_matrices(pgram.values, half_width)
    zz = smooth[selection.indices, 0, 0].real
    k = int(np.argmax(zz))
    freqs = selection.frequencies
    omega_p = float(np.clip(freqs[k], freqs[0], freqs[-1]))
    peak = smooth[selection.indices[k]]
    a1 = peak[1, 0].imag / peak[0, 0].real
    b1 = peak[2, 0].imag / peak[0, 0].real
    phi_m = math.atan2(b1, a1) % TWO_PI
    g, r = shape["gamma"], shape["r"]
    alpha = zz[k] * omega_p**r * math.exp(r / 4.0) / g
    start = Parameters(alpha, omega_p, g, r, phi_m, shape["beta"], shape["nu"], shape["sigma_l"], shape["sigma_r"])
    return _refine_marginal(pgram, selection, start) if refine else start


def _refine_marginal(pgram: Periodogram, selection, start: Parameters) -> Parameters:
    """Marginal parameters from a vertical-only fit; ``start`` is kept if that fit fails."""
    marginal = PARAMETER_NAMES[:4]
    try:
        res = fit(pgram, FitConfig(selection=selection, init=start, channels=(0,), free=marginal))
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as err:
        logger.debug("marginal start fit failed: %s", err)
        return start
    if not res.converged:
        return start
    return start.replace(**{name: getattr(res.theta_hat, name) for name in marginal})


# --------------------------------------------------------------------------
# optimisation
# --------------------------------------------------------------------------

LOG_SCALED = (0, 1)  # alpha and omega_p are optimised on the log scale


@dataclass(frozen=True)
class ParameterBounds:
    """Box bounds on the nine parameters (``phi_m`` is periodic and never bounded)."""

    lower: tuple = (0.0, 0.0, 1.0, 1.0, -math.inf, 0.0, 0.0, 0.0, 0.0)
    upper: tuple = (math.inf, math.inf, math.inf, math.inf, math.inf, TWO_PI, math.inf, math.inf, math.inf)
    # keep the angular width positive at its minimum (sigma_l - sigma_r > 0)
    width_feasibility: bool = True


@dataclass
class FitConfig:
    """Settings for :func:`fit`.

    ``free`` lists the parameter names to estimate (others stay at ``init``);
    ``channels`` picks the record channels, e.g. ``(0,)`` for a vertical-only
    fit.
    """

    objective: str = "debiased"
    ctx: PhysicalContext = DEEP_WATER
    low_cut: float = 0.0
    high_cut: Optional[float] = None
    selection: Optional[FrequencySelection] = None
    init: Optional[Parameters] = None
    bounds: ParameterBounds = field(default_factory=ParameterBounds)
    alias_folds: int = 0
    channels: tuple = (0, 1, 2)
    free: Optional[tuple] = None
    max_iter: int = 200
    grad_tol: float = 1e-6
    step_tol: float = 1e-10
    armijo: float = 1e-4
    barrier_start: float = 1e-2
    barrier_min: float = 1e-10
    barrier_decay: float = 0.1
    boundary_eps: float = 1e-4


@dataclass
class FitResult:
    """Estimates with expected-information covariance and optimiser diagnostics."""

    theta_hat: Parameters
    covariance: np.ndarray
    ci95: np.ndarray
    objective: float
    converged: bool
    iterations: int
    gradient_norm: float
    boundary_flags: dict
    free: tuple
    message: str = ""
    fisher_condition: float = math.nan

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def as_row(self) -> dict:
        row = {}
        est = self.theta_hat.to_array()
        for i, name in enumerate(PARAMETER_NAMES):
            row[name] = est[i]
            row[f"{name}_lo"] = self.ci95[i, 0]
            row[f"{name}_hi"] = self.ci95[i, 1]
        row["objective"] = self.objective
        row["converged"] = self.converged
        row["iterations"] = self.iterations
        row["gradient_norm"] = self.gradient_norm
        row["boundary"] = ";".join(k for k, v in self.boundary_flags.items() if v)
        return row


class _Problem:
    """Objective, barrier and scoring system in the optimisation coordinates."""

    def __init__(self, I, config, scheme, selection, theta0):
        self.I = I
        self.config = config
        self.scheme = scheme
        self.selection = selection
        self.weights = selection.weights
        self.total = float(self.weights.sum())
        self.theta0 = theta0.copy()
        names = config.free if config.free is not None else PARAMETER_NAMES
        self.free = np.array([PARAMETER_NAMES.index(nm) for nm in names])
        lo = np.array(config.bounds.lower, dtype=float)
        hi = np.array(config.bounds.upper, dtype=float)
        self.lo, self.hi = lo[self.free], hi[self.free]
        self.logged = np.isin(self.free, LOG_SCALED)
        self.width_pair = None
        if config.bounds.width_feasibility and 7 in self.free and 8 in self.free:
            self.width_pair = (int(np.flatnonzero(self.free == 7)[0]), int(np.flatnonzero(self.free == 8)[0]))

    def theta(self, x):
        th = self.theta0.copy()
        vals = np.array(x, dtype=float)
        vals[self.logged] = np.exp(vals[self.logged])
        th[self.free] = vals
        return th

    def to_x(self, theta):
        vals = np.array(theta[self.free], dtype=float)
        vals[self.logged] = np.log(vals[self.logged])
        return vals

    def barrier_bounds(self):
        lo = np.where(self.logged, -np.inf, self.lo)
        hi = np.where(self.logged, np.inf, self.hi)
        return lo, hi

    def feasible_start(self, x):
        lo, hi = self.barrier_bounds()
        width = np.where(np.isfinite(hi - lo), hi - lo, 1.0)
        margin = np.minimum(1e-2, 0.05 * width)
        x = np.where(np.isfinite(lo), np.maximum(x, lo + margin), x)
        x = np.where(np.isfinite(hi), np.minimum(x, hi - margin), x)
        if self.width_pair is not None:
            i, j = self.width_pair
            if x[i] - x[j] < 1e-2:
                x[j] = max(0.5 * x[i], lo[j] + 0.5 * (x[i] - lo[j])) if x[i] > lo[j] else x[j]
                x[i] = max(x[i], x[j] + 1e-2)
        return x

    def barrier(self, x):
        """Sum of log-distances to finite bounds with gradient and (negative) Hessian."""
        lo, hi = self.barrier_bounds()
        val = 0.0
        g = np.zeros_like(x)
        H = np.zeros((x.size, x.size))
        fl, fh = np.isfinite(lo), np.isfinite(hi)
        dl = x[fl] - lo[fl]
        dh = hi[fh] - x[fh]
        if np.any(dl <= 0) or np.any(dh <= 0):
            return -np.inf, g, H
        val += np.sum(np.log(dl)) + np.sum(np.log(dh))
        g[fl] += 1.0 / dl
        g[fh] -= 1.0 / dh
        H[np.flatnonzero(fl), np.flatnonzero(fl)] += 1.0 / dl**2
        H[np.flatnonzero(fh), np.flatnonzero(fh)] += 1.0 / dh**2
        if self.width_pair is not None:
            i, j = self.width_pair
            d = x[i] - x[j]
            if d <= 0:
                return -np.inf, g, H
            val += math.log(d)
            v = np.zeros_like(x)
            v[i], v[j] = 1.0, -1.0
            g += v / d
            H += np.outer(v, v) / d**2
        return val, g, H

    def max_step(self, x, p, fraction=0.995):
        lo, hi = self.barrier_bounds()
        t = 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            down = (p < 0) & np.isfinite(lo)
            if np.any(down):
                t = min(t, fraction * np.min((lo[down] - x[down]) / p[down]))
            up = (p > 0) & np.isfinite(hi)
            if np.any(up):
                t = min(t, fraction * np.min((hi[up] - x[up]) / p[up]))
        if self.width_pair is not None:
            i, j = self.width_pair
            dp = p[i] - p[j]
            if dp < 0:
                t = min(t, fraction * (x[i] - x[j]) / -dp)
        return t

    def evaluate(self, x, need_grad):
        th = self.theta(x)
        try:
            M, dM = _model_matrices(self.config.objective, th, self.config.ctx, self.scheme, self.selection, need_grad)
        except (ValueError, FloatingPointError):
            return -np.inf, None, None
        if not np.all(np.isfinite(M)):
            return -np.inf, None, None
        if need_grad:
            dM = dM[self.free]
        value, grad, info, singular = _objective(self.I, M, dM, self.weights, self.config.channels, need_grad)
        if singular is not None or not np.isfinite(value):
            return -np.inf, None, None
        if not need_grad:
            return value, None, None
        jac = np.where(self.logged, self.theta(x)[self.free], 1.0)
        with np.errstate(over="ignore", invalid="ignore"):
            grad = grad * jac
            info = info * np.outer(jac, jac)
        if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(info))):
            return -np.inf, None, None
        return value, grad, info


def _solve(H, g):
    """Solve ``H p = g`` for symmetric PSD ``H``, adding a ridge when needed."""
    scale = np.maximum(np.abs(np.diag(H)), 1e-300)
    D = 1.0 / np.sqrt(scale)
    Hs = H * np.outer(D, D)
    ridge = 0.0
    for _ in range(12):
        try:
            L = np.linalg.cholesky(Hs + ridge * np.eye(H.shape[0]))
            y = np.linalg.solve(L, g * D)
            return D * np.linalg.solve(L.T, y)
        except np.linalg.LinAlgError:
            ridge = 1e-10 if ridge == 0.0 else ridge * 100.0
    return D * np.linalg.lstsq(Hs, g * D, rcond=None)[0]


def fit(sample: SeaStateSample | Periodogram, config: FitConfig | None = None) -> FitResult:
    """Maximise the (debiased) Whittle likelihood by Fisher scoring within parameter bounds.

    Bounds are handled with a logarithmic barrier whose weight shrinks every
    iteration; steps are damped to stay strictly feasible and accepted by an
    Armijo backtracking search.  The covariance is the inverse expected
    information at the estimate.  Non-convergence is reported, not raised.
    """
    config = config or FitConfig()
    if config.objective not in ("debiased", "whittle"):
        raise ValueError(f"objective must be 'debiased' or 'whittle', got {config.objective!r}")
    pgram = sample if isinstance(sample, Periodogram) else periodogram(sample)
    scheme = SamplingScheme(pgram.delta, pgram.n, alias_folds=config.alias_folds)
    if config.selection is not None:
        selection = config.selection
    else:
        selection = FrequencySelection.band(pgram.n, pgram.delta, config.low_cut, config.high_cut)
    init = config.init if config.init is not None else initial_parameters(pgram, selection)
    theta0 = init.to_array()
    prob = _Problem(pgram.at(selection), config, scheme, selection, theta0)
    total = prob.total

    x = prob.feasible_start(prob.to_x(theta0))
    mu = config.barrier_start
    converged = False
    message = "maximum iterations reached"
    value, grad, info = prob.evaluate(x, True)
    if not np.isfinite(value):
        raise ValueError("objective is not finite at the initial parameters")
    gnorm = math.inf
    it = 0
    for it in range(1, config.max_iter + 1):
        bval, bgrad, bH = prob.barrier(x)
        phi = value / total + mu * bval
        g = grad / total + mu * bgrad
        H = 2.0 * info / total + mu * bH
        gnorm = float(np.max(np.abs(g)))
        p = _solve(H, g)
        at_floor = mu <= config.barrier_min * (1 + 1e-12)
        if at_floor and gnorm < config.grad_tol:
            converged, message = True, "gradient tolerance reached"
            break
        slope = float(g @ p)
        if slope <= 0:
            p, slope = g.copy(), float(g @ g)
        t = prob.max_step(x, p)
        accepted = False
        for _ in range(40):
            x_new = x + t * p
            v_new, _, _ = prob.evaluate(x_new, False)
            b_new, _, _ = prob.barrier(x_new)
            phi_new = v_new / total + mu * b_new
            if np.isfinite(phi_new) and phi_new >= phi + config.armijo * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            if not at_floor:
                mu = max(config.barrier_min, mu * config.barrier_decay)
                continue
            converged = gnorm < math.sqrt(config.grad_tol)
            message = "line search failed" + (" near a stationary point" if converged else "")
            break
        step = t * p
        x = x_new
        value, grad, info = prob.evaluate(x, True)
        if at_floor and np.max(np.abs(step)) < config.step_tol * (1.0 + np.max(np.abs(x))):
            converged, message = True, "step tolerance reached"
            break
        mu = max(config.barrier_min, mu * config.barrier_decay)

    theta_hat = prob.theta(x)
    theta_hat[4] = theta_hat[4] % TWO_PI

    free = prob.free
    cov = np.zeros((N_PARAMS, N_PARAMS))
    cond = math.nan
    try:
        full_info = expected_fisher(theta_hat, config.ctx, scheme, selection, config.objective, config.channels,
                                    params=free)
        sub = full_info[np.ix_(free, free)]
        cond = float(np.linalg.cond(sub))
        cov_sub = np.linalg.pinv(sub, hermitian=True)
        cov[np.ix_(free, free)] = cov_sub
    except np.linalg.LinAlgError:
        cov[np.ix_(free, free)] = np.nan
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    ci = np.column_stack([theta_hat - 1.959963984540054 * se, theta_hat + 1.959963984540054 * se])

    lo = np.array(config.bounds.lower, dtype=float)
    hi = np.array(config.bounds.upper, dtype=float)
    flags = {}
    for i, name in enumerate(PARAMETER_NAMES):
        near = i in free and (
            (np.isfinite(lo[i]) and theta_hat[i] - lo[i] < config.boundary_eps)
            or (np.isfinite(hi[i]) and hi[i] - theta_hat[i] < config.boundary_eps)
        )
        flags[name] = bool(near)
    if theta_hat[5] >= TWO_PI:
        theta_hat[5] = np.nextafter(TWO_PI, 0.0)
    return FitResult(
        theta_hat=Parameters.from_array(theta_hat),
        covariance=cov,
        ci95=ci,
        objective=float(value),
        converged=bool(converged),
        iterations=it,
        gradient_norm=gnorm,
        boundary_flags=flags,
        free=tuple(PARAMETER_NAMES[i] for i in free),
        message=message,
        fisher_condition=cond,
    )
