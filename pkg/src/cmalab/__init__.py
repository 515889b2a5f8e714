"""Numerical toolbox for complex Monge-Ampere energies, flows and sharp-constant experiments."""

__version__ = "0.1.0"

from .domains import (
    GridField,
    PlanarGrid,
    RadialBall,
    RadialProfile,
    grid_integrate,
    grid_laplacian,
    radial_integrate,
)
from .exceptions import *  # noqa: F401,F403
from .flows import (
    FlowParams,
    FlowState,
    FlowTrace,
    MoserTrudingerFlow,
    SobolevDescentFlow,
    planar_flow_step,
    radial_flow_step,
    run_flow,
    stationarity_residual,
)
from .functionals import (
    ConventionConstants,
    FunctionalReport,
    beta_delta,
    cutoff_F,
    cutoff_f,
    e_psi,
    eta,
    functional_report,
    j_delta,
    lambda_mt,
    lorentz_zygmund_norm,
    lp_norm,
    ma_energy,
    ma_mass,
    mt_functional,
    mt_integral,
    mt_series,
    psh_seminorm,
)
from .lab import (
    EstimateRecord,
    LogCuspFamily,
    beta_iteration_schedule,
    bm_profile,
    classify_growth,
    estimate_mt_alpha,
    estimate_sobolev_T,
    g_llogl_check,
    make_log_cusp,
    norm_concentration_check,
)
from .planar import PoissonSystem, brezis_merle_check, poisson_solve
from .radial import RadialRHS, admissibility_project, radial_ma_apply, radial_ma_solve
from .slices import SlicePotential, boundary_terms, slice_mass_check, slice_potential
