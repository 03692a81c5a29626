"""Imaginary-time correlation curvature, quantum-geometric sum rules and Mori coefficients."""
from .bloch import BlochModel, KPoint, Variant, bands, d_vector, velocity
from .bounds import (
    BoundConstants,
    bound_constants,
    check_bound,
    rho0_band,
    rho0_spectral,
    saturation_sweep,
)
from .geometry import BandGrid, berry_curvature, build_band_grid, chern_number, quantum_metric
from .matsubara import (
    SpectralDensity,
    TauCorrelator,
    alternating_sum,
    band_density,
    curvature_at_midpoint,
    kernel,
    matsubara_transform,
    spectral_correlator,
)
from .mori import (
    EDSystem,
    MoriChain,
    b1_bound_check,
    build_chain,
    kubo_mori_inner,
    liouvillian_moment,
    mori_coefficients,
    nested_correlator,
    resolvent_sigma,
)

__version__ = "0.1.0"
