"""Numerical laboratory for 2D vorticity dynamics and inviscid-limit diagnostics."""

from .experiments import ConvergenceReport, LadderConfig, run_ladder
from .flows import (
    FlowEnsemble,
    feynman_kac_vorticity,
    geodesic_distance,
    integrate_backward_flow,
    integrate_stochastic_flow,
    lagrangian_vorticity,
    measure_preservation_defect,
    seed_grid,
)
from .freespace import (
    FreeField,
    KernelPair,
    PaddedGrid,
    biot_savart_freespace,
    build_kernels,
    serfati_rhs,
    solve_nse_freespace,
    star_convolution,
    zero_mean_check,
)
from .initial_data import initial_datum, initial_datum_freespace
from .metrics import (
    RateFit,
    StabilityReport,
    fit_rate,
    osgood_bound,
    q_eps,
    renormalization_defect,
    stability_report,
)
from .solvers import (
    SolverSettings,
    SteadyCarrier,
    Trajectory,
    energy,
    enstrophy,
    solve_linear_advection_diffusion,
    solve_nse,
    step_vorticity,
)
from .spectral import (
    SpectralField,
    TorusGrid,
    VelocityField,
    biot_savart,
    curl,
    dealias,
    divergence,
    lp_norm,
    sample_at,
    spectral_derivative,
    upsample,
)

__all__ = [
    "TorusGrid", "SpectralField", "VelocityField",
    "biot_savart", "curl", "divergence", "dealias", "lp_norm", "sample_at",
    "spectral_derivative", "upsample",
    "SolverSettings", "SteadyCarrier", "Trajectory",
    "step_vorticity", "solve_nse", "solve_linear_advection_diffusion",
    "energy", "enstrophy",
    "FlowEnsemble", "seed_grid", "geodesic_distance",
    "integrate_backward_flow", "integrate_stochastic_flow",
    "lagrangian_vorticity", "feynman_kac_vorticity", "measure_preservation_defect",
    "StabilityReport", "RateFit", "q_eps", "stability_report", "osgood_bound",
    "fit_rate", "renormalization_defect",
    "PaddedGrid", "FreeField", "KernelPair",
    "biot_savart_freespace", "build_kernels", "star_convolution", "serfati_rhs",
    "solve_nse_freespace", "zero_mean_check",
    "initial_datum", "initial_datum_freespace",
    "LadderConfig", "ConvergenceReport", "run_ladder",
]

__version__ = "0.1.0"
