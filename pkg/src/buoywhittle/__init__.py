"""Parametric frequency-direction spectra for heave-pitch-roll buoys, fitted by debiased Whittle likelihood."""

from .discrete import (
    CovarianceSequence,
    NumericalConsistencyError,
    SamplingScheme,
    aliased_sdf_matrix,
    approx_autocovariance,
    expected_periodogram,
    expected_periodogram_and_gradient,
    expected_periodogram_direct,
    expected_periodogram_gradient,
    fourier_frequencies,
)
from .inference import (
    DataError,
    FitConfig,
    FitResult,
    FrequencySelection,
    ParameterBounds,
    Periodogram,
    SeaStateSample,
    debiased_whittle_loglik,
    expected_fisher,
    fit,
    initial_parameters,
    periodogram,
    whittle_loglik,
)
from .models import (
    DEEP_WATER,
    PARAMETER_NAMES,
    SCENARIOS,
    DispersionSolverError,
    ModelDomainError,
    Parameters,
    PhysicalContext,
    dispersion_wavenumber,
    freq_dir_spectrum,
    jonswap_sdf,
    sdf_matrix,
    sdf_matrix_gradient,
    spreading_density,
    spreading_shape,
    transfer_function,
)
from .simulation import SimulationSpec, simulate

__version__ = "0.1.0"
