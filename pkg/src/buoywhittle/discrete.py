"""From continuous-time models to finite samples: aliasing, autocovariance, expected periodogram.

Fourier frequencies of a length-``n`` record with sampling interval ``delta``
are ``2*pi*j/(n*delta)``.  Expected periodograms are returned on the
non-negative half ``j = 0..n//2`` (the negative half is the complex
conjugate for a real-valued process).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import DEEP_WATER, PhysicalContext, ThetaLike, sdf_matrix_and_gradient

__all__ = [
    "SamplingScheme",
    "CovarianceSequence",
    "NumericalConsistencyError",
    "fourier_frequencies",
    "aliased_sdf_matrix",
    "aliased_sdf_matrix_and_gradient",
    "approx_autocovariance",
    "expected_periodogram",
    "expected_periodogram_gradient",
    "expected_periodogram_and_gradient",
    "expected_periodogram_direct",
    "lag_window_transform",
]


class NumericalConsistencyError(RuntimeError):
    """Raised when a numerical approximation fails an internal consistency check."""


@dataclass(frozen=True)
class SamplingScheme:
    """Regular sampling: interval ``delta`` (s), ``n`` samples, ``alias_folds`` Nyquist folds per side.

    ``grid_factor`` sets the fine frequency grid ``M = grid_factor * n`` used
    to approximate the autocovariance.
    """

    delta: float
    n: int
    alias_folds: int = 0
    grid_factor: int = 4

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n}")
        if int(self.alias_folds) != self.alias_folds or self.alias_folds < 0:
            raise ValueError(f"alias_folds must be a non-negative integer, got {self.alias_folds}")
        if int(self.grid_factor) != self.grid_factor or self.grid_factor < 2:
            raise ValueError(f"grid_factor must be an integer >= 2, got {self.grid_factor}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def nyquist(self) -> float:
        return np.pi / self.delta

    @property
    def grid_size(self) -> int:
        M = self.grid_factor * self.n
        return M + (M % 2)

    @property
    def frequencies(self) -> np.ndarray:
        """Non-negative Fourier frequencies ``j = 0..n//2`` (rad/s)."""
        return fourier_frequencies(self.n, self.delta)


def fourier_frequencies(n: int, delta: float) -> np.ndarray:
    return 2.0 * np.pi * np.arange(n // 2 + 1) / (n * delta)


@dataclass(frozen=True)
class CovarianceSequence:
    """Autocovariance ``c(tau*delta)`` for ``tau = -(n-1)..(n-1)``; ``lags[n - 1]`` is lag zero."""

    lags: np.ndarray
    delta: float

    @property
    def n(self) -> int:
        return (self.lags.shape[0] + 1) // 2

    def at(self, tau: int) -> np.ndarray:
        return self.lags[tau + self.n - 1]


def aliased_sdf_matrix_and_gradient(omega, theta: ThetaLike, ctx: PhysicalContext, scheme: SamplingScheme):
    """Folded model matrix ``sum_j f(w + 2 pi j / delta)`` over ``|j| <= alias_folds`` and its gradient."""
    omega = np.asarray(omega, dtype=float)
    F, dF = sdf_matrix_and_gradient(omega, theta, ctx)
    shift = 2.0 * np.pi / scheme.delta
    for j in range(1, scheme.alias_folds + 1):
        for s in (j, -j):
            Fj, dFj = sdf_matrix_and_gradient(omega + s * shift, theta, ctx)
            F = F + Fj
            dF = dF + dFj
    return F, dF


def aliased_sdf_matrix(omega, theta: ThetaLike, ctx: PhysicalContext = DEEP_WATER, scheme: SamplingScheme | None = None):
    """Model matrix of the sampled process; with ``alias_folds = 0`` this is the continuous model."""
    if scheme is None:
        raise TypeError("a SamplingScheme is required")
    return aliased_sdf_matrix_and_gradient(omega, theta, ctx, scheme)[0]


def _grid_values(theta, ctx, scheme, gradient):
    """Aliased matrices on the fine grid ``2 pi k / (M delta)``, k = 0..M/2."""
    M = scheme.grid_size
    omega = 2.0 * np.pi * np.arange(M // 2 + 1) / (M * scheme.delta)
    F, dF = aliased_sdf_matrix_and_gradient(omega, theta, ctx, scheme)
    if not gradient:
        dF = None
    return M, F, dF


def _acv_from_grid(values, M, delta, axis):
    """Real autocovariance at lags 0..M-1 from half-grid spectral values.

    The Nyquist ordinate enters through its real part, the symmetric average of
    the two band edges, so the result is exactly real.
    """
    return (2.0 * np.pi / delta) * np.fft.irfft(values, n=M, axis=axis)


def _check_dc(F):
    dc = F[0]
    scale = max(np.max(np.abs(F)), 1e-300)
    if np.max(np.abs(dc.imag)) > 1e-10 * scale:
        raise NumericalConsistencyError("zero-frequency spectral matrix is not real")


def approx_autocovariance(theta: ThetaLike, ctx: PhysicalContext, scheme: SamplingScheme) -> CovarianceSequence:
    """Approximate ``c(tau*delta)`` by inverse FFT of the aliased model on the fine grid."""
    M, F, _ = _grid_values(theta, ctx, scheme, gradient=False)
    _check_dc(F)
    full = _acv_from_grid(F, M, scheme.delta, axis=0)
    n = scheme.n
    lags = np.concatenate([full[M - n + 1 :], full[:n]], axis=0)
    return CovarianceSequence(lags=lags, delta=scheme.delta)


def lag_window_transform(acv_head, acv_tail, n, delta, axis=0):
    """Expected periodogram on ``j = 0..n//2`` from lags ``0..n-1`` and ``-(n-1)..-1``.

    ``acv_head[tau]`` holds lag ``tau`` and ``acv_tail[tau]`` lag ``tau - n``
    (``acv_tail[0]`` unused); the triangle kernel folds both into one length-n
    FFT.
    """
    tau = np.arange(n, dtype=float)
    shape = [1] * acv_head.ndim
    shape[axis] = n
    w = (tau / n).reshape(shape)
    g = (1.0 - w) * acv_head + w * acv_tail
    return (delta / (2.0 * np.pi)) * np.fft.rfft(g, axis=axis)


def _ep_from_grid(values, M, scheme, axis):
    full = _acv_from_grid(values, M, scheme.delta, axis=axis)
    n = scheme.n
    head = np.take(full, np.arange(n), axis=axis)
    tail_idx = (np.arange(n) - n) % M
    tail = np.take(full, tail_idx, axis=axis)
    return lag_window_transform(head, tail, n, scheme.delta, axis=axis)


def _select(E, selection, axis):
    if selection is None:
        return E
    idx = np.asarray(selection, dtype=int)
    return np.take(E, idx, axis=axis)


def _indices(selection):
    if selection is None:
        return None
    return getattr(selection, "indices", selection)


def expected_periodogram(theta: ThetaLike, ctx: PhysicalContext, scheme: SamplingScheme, selection=None) -> np.ndarray:
    """Expected periodogram ``E[I(w_j)]`` of the sampled model.

    Returned at the requested non-negative Fourier indices (all of
    ``0..n//2`` when ``selection`` is ``None``), shape ``(m, 3, 3)``.
    ``selection`` is a :class:`~buoywhittle.inference.FrequencySelection` or a
    sequence of indices.
    """
    M, F, _ = _grid_values(theta, ctx, scheme, gradient=False)
    _check_dc(F)
    E = _ep_from_grid(F, M, scheme, axis=0)
    return _select(E, _indices(selection), axis=0)


def expected_periodogram_and_gradient(theta: ThetaLike, ctx: PhysicalContext, scheme: SamplingScheme, selection=None):
    """Expected periodogram and its nine parameter derivatives in one pass.

    Returns ``(E, dE)`` with shapes ``(m, 3, 3)`` and ``(9, m, 3, 3)``.
    """
    M, F, dF = _grid_values(theta, ctx, scheme, gradient=True)
    _check_dc(F)
    stacked = np.concatenate([F[None], dF], axis=0)
    E_all = _ep_from_grid(stacked, M, scheme, axis=1)
    idx = _indices(selection)
    E_all = _select(E_all, idx, axis=1)
    return E_all[0], E_all[1:]


def expected_periodogram_gradient(theta: ThetaLike, ctx: PhysicalContext, scheme: SamplingScheme, selection=None) -> np.ndarray:
    """Derivatives of :func:`expected_periodogram` w.r.t. the nine parameters, shape ``(9, m, 3, 3)``."""
    return expected_periodogram_and_gradient(theta, ctx, scheme, selection)[1]


def expected_periodogram_direct(acv: CovarianceSequence, omega) -> np.ndarray:
    """Direct O(n^2) triangle-kernel lag sum at arbitrary frequencies (reference path)."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    n = acv.n
    tau = np.arange(-(n - 1), n)
    weights = 1.0 - np.abs(tau) / n
    phase = np.exp(-1j * np.outer(omega, tau) * acv.delta)
    return (acv.delta / (2.0 * np.pi)) * np.einsum("wt,t,tab->wab", phase, weights, acv.lags)

