"""Gaussian simulation of buoy displacement records from the frequency-direction model."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .discrete import SamplingScheme, _grid_values, approx_autocovariance
from .inference import SeaStateSample
from .models import DEEP_WATER, Parameters, PhysicalContext, ThetaLike, _theta_array


class SimulationWarning(UserWarning):
    """Issued when the requested simulation method falls back to another."""


@dataclass(frozen=True)
class SimulationSpec:
    """What to simulate: parameters, physical context, sampling and seed.

    ``method`` is ``"spectral"`` (random-phase synthesis on the fine frequency
    grid of the sampling scheme) or ``"circulant"`` (circulant embedding of the
    model autocovariance, falling back to spectral synthesis when the
    embedding is not non-negative definite).
    """

    theta: Parameters
    scheme: SamplingScheme
    ctx: PhysicalContext = DEEP_WATER
    seed: int = 0
    method: str = "spectral"

    def __post_init__(self):
        if self.method not in ("spectral", "circulant"):
            raise ValueError(f"unknown simulation method {self.method!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not isinstance(self.theta, Parameters):
            object.__setattr__(self, "theta", Parameters.from_array(_theta_array(self.theta)))

    @property
    def n(self) -> int:
        return self.scheme.n

    @property
    def delta(self) -> float:
        return self.scheme.delta


def make_rng(seed: int, replication: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, replication)``; independent of run order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(replication)])))


def _psd_sqrt(A: np.ndarray, what: str, tol: float = 1e-6) -> np.ndarray:
    """Stacked Hermitian square roots ``L`` with ``L L^H = A``.

    Negative eigenvalues down to ``-tol`` times the largest eigenvalue of the
    whole stack are treated as round-off and clipped.
    """
    A = 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))
    lam, V = np.linalg.eigh(A)
    scale = max(float(np.max(np.abs(lam))), 1e-300)
    if np.any(lam < -tol * scale):
        raise np.linalg.LinAlgError(f"{what} is not non-negative definite")
    return V * np.sqrt(np.clip(lam, 0.0, None))[..., None, :]


def _synthesise(cov_half: np.ndarray, N: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Real series ``sum_k Z_k exp(2 pi i k t / N)``, ``t < n``, with ``Cov(Z_k) = cov_half[k]``.

    ``cov_half`` covers ``k = 0..N/2``; ``Z_{N-k}`` is the conjugate of ``Z_k``,
    the ``k = 0`` and ``k = N/2`` coefficients are real.
    """
    half = N // 2
    p = cov_half.shape[-1]
    Z = np.zeros((N, p), dtype=complex)
    L_all = _psd_sqrt(cov_half, "spectral matrix")
    L_mid = L_all[1:half]
    xi = (rng.standard_normal((half - 1, p)) + 1j * rng.standard_normal((half - 1, p))) / np.sqrt(2.0)
    Z[1:half] = np.einsum("kab,kb->ka", L_mid, xi)
    Z[half + 1 :] = np.conj(Z[1:half][::-1])
    for k in (0, half):
        # real coefficients: the real part of the edge matrices is the covariance
        L = _psd_sqrt(cov_half[k].real, "edge spectral matrix", tol=1.0)
        Z[k] = L @ rng.standard_normal(p)
    return (N * np.fft.ifft(Z, axis=0)).real[:n]


def simulate_spectral(spec: SimulationSpec, rng: np.random.Generator) -> np.ndarray:
    scheme = spec.scheme
    M, F, _ = _grid_values(spec.theta.to_array(), spec.ctx, scheme, gradient=False)
    cov = F * (2.0 * np.pi / (M * spec.delta))
    return _synthesise(cov, M, spec.n, rng)


def _circulant_eigen(theta, ctx, scheme, half):
    """Eigen-matrices (per-coefficient covariances) of the period-``2 half`` block circulant."""
    ext = SamplingScheme(scheme.delta, half + 1, scheme.alias_folds, scheme.grid_factor)
    lags = approx_autocovariance(theta, ctx, ext).lags  # lags -half..half
    mid = 0.5 * (lags[2 * half] + lags[2 * half].T)  # symmetrised so each eigen-matrix is Hermitian
    row = np.concatenate([lags[half : 2 * half], mid[None], lags[1:half]], axis=0)
    return np.fft.fft(row, axis=0)[: half + 1] / (2 * half)


def simulate_circulant(spec: SimulationSpec, rng: np.random.Generator, max_doublings: int = 3) -> np.ndarray:
    """Circulant embedding of the model autocovariance; lags ``0..n-1`` are reproduced exactly.

    The embedding period starts at ``2n`` and doubles while the circulant is
    not non-negative definite.
    """
    theta = spec.theta.to_array()
    half = spec.n
    for attempt in range(max_doublings + 1):
        lam = _circulant_eigen(theta, spec.ctx, spec.scheme, half)
        try:
            return _synthesise(lam, 2 * half, spec.n, rng)
        except np.linalg.LinAlgError:
            if attempt == max_doublings:
                raise
            half *= 2


def simulate(spec: SimulationSpec, replication: int = 0, rng: np.random.Generator | None = None,
             demean: bool = False) -> SeaStateSample:
    """Draw one displacement record.

    The draw depends only on ``(spec.seed, replication)`` unless a generator
    is passed explicitly.
    """
    if rng is None:
        rng = make_rng(spec.seed, replication)
    if spec.method == "circulant":
        state = rng.bit_generator.state
        try:
            data = simulate_circulant(spec, rng)
        except np.linalg.LinAlgError as err:
            warnings.warn(f"circulant embedding failed ({err}); using spectral synthesis", SimulationWarning, stacklevel=2)
            rng.bit_generator.state = state
            data = simulate_spectral(spec, rng)
    else:
        data = simulate_spectral(spec, rng)
    if demean:
        return SeaStateSample.from_array(data, spec.delta)
    return SeaStateSample(data, spec.delta)
