"""dpflow: differentially private optimal power flow on radial feeders.

The package couples a LinDistFlow optimal-power-flow model with a
Gaussian-noise load-obfuscation mechanism: noise calibrated from a privacy
budget (epsilon, delta) and adjacency magnitudes beta is absorbed by DER
recourse policies found via chance-constrained second-order-cone programs,
so that released dispatch quantities carry calibrated randomness while grid
limits hold with high probability.  Monte-Carlo and brute-force validation
oracles check the privacy and feasibility claims at desk scale.
"""

from .ccopf import (
    AffineSolution,
    DEFAULT_ETAS,
    VARIANTS,
    expected_quadratic_cost,
    solve_ccopf,
)
from .cli_io import RunConfig, dispatch, emit_results
from .conic_core import BuildError, ConicProgram, SolveReport, solve
from .dopf import (
    DispatchSolution,
    SolveError,
    assemble_dopf,
    extract_dispatch,
    solve_dopf,
)
from .grid_model import (
    GridError,
    RadialGrid,
    TopologyError,
    TopologyIndex,
    build_topology,
    bundled_case_path,
    load_case_file,
    reactive_load,
)
from .mechanism import (
    GaussianSampler,
    MechanismError,
    PrivacyLedger,
    RealizedDispatch,
    gaussian_sampler,
    realize,
    run_dp_ccopf,
    run_output_perturbation,
)
from .privacy_calibration import (
    PrivacyError,
    PrivacySpec,
    adjacent_dataset,
    calibrate_sigma,
    cvar_factor,
    default_delta,
    gaussian_sigma,
    z_quantile,
)
from .validation import (
    Histogram,
    McReport,
    OracleError,
    RatioReport,
    SweepRow,
    TimeseriesTrace,
    cc_violation_mask,
    cc_violation_rate,
    cvar_sweep,
    demand_multiplier,
    dp_ratio_check,
    mc_validate,
    op_infeasibility_rate,
    op_infeasible_mask,
    sensitivity_oracle,
    std_floor_check,
    timeseries_demo,
    wilson_half_width,
)

__version__ = "1.0.0"

__all__ = [
    "AffineSolution",
    "BuildError",
    "ConicProgram",
    "DEFAULT_ETAS",
    "DispatchSolution",
    "GaussianSampler",
    "GridError",
    "Histogram",
    "McReport",
    "MechanismError",
    "OracleError",
    "PrivacyError",
    "PrivacyLedger",
    "PrivacySpec",
    "RadialGrid",
    "RatioReport",
    "RealizedDispatch",
    "RunConfig",
    "SolveError",
    "SolveReport",
    "SweepRow",
    "TimeseriesTrace",
    "TopologyError",
    "TopologyIndex",
    "VARIANTS",
    "adjacent_dataset",
    "assemble_dopf",
    "build_topology",
    "bundled_case_path",
    "calibrate_sigma",
    "cc_violation_mask",
    "cc_violation_rate",
    "cvar_factor",
    "cvar_sweep",
    "default_delta",
    "demand_multiplier",
    "dispatch",
    "dp_ratio_check",
    "emit_results",
    "expected_quadratic_cost",
    "extract_dispatch",
    "gaussian_sampler",
    "gaussian_sigma",
    "load_case_file",
    "mc_validate",
    "op_infeasibility_rate",
    "op_infeasible_mask",
    "realize",
    "reactive_load",
    "run_dp_ccopf",
    "run_output_perturbation",
    "sensitivity_oracle",
    "solve",
    "solve_ccopf",
    "solve_dopf",
    "std_floor_check",
    "timeseries_demo",
    "wilson_half_width",
    "z_quantile",
]
