"""Time-discretized fixed-point solver for incompressible flow in Leray form.

The equation is marched one transformed-time unit at a time: each step runs
linearized sweeps with the transport coefficient frozen at the previous
sweep, the pressure eliminated through a gradient-kernel integral, and (in
controls-on mode) an auxiliary field with bounded consumption sources keeping
the growth ledgers honest.
"""

__version__ = "0.1.0"

from .grids import (FREE_SPACE, TORUS, Grid, NormReport, ScalarField,
                    VectorField, decay_check, divergence, dump_field,
                    load_field, make_grid, norms)
from .kernels import (GaussianKernelSpec, PoissonKernelSpec, convolve,
                      heat_kernel, leray_pressure, leray_rhs, poisson_kernel,
                      poisson_kernel_grad, pressure_identity_residual)
from .parametrix import (DkExpansion, DriftSpec, LevySeries, constant_drift,
                         dk_coefficients, estimate_gamma_constant,
                         levy_gamma, param_fundamental, zero_drift)
from .linparab import Backend, LinearProblem, Trajectory, cross_validate, \
    solve_cauchy
from .control import (BoundsLedger, BumpPartition, ConsumptionField,
                      ThresholdSets, build_partition, build_phi,
                      build_threshold_sets, r_source, solve_r)
from .scheme import (IterationState, MarchResult, StepReport, StepSchedule,
                     burgers_march, global_march, local_fixed_point,
                     psi_gap_diagnostic, rho_schedule)
from .boundary import (BoundaryDensity, BoundaryDomain, HeatGamma, RobinData,
                       boundary_step, fd_robin_reference, k_gamma,
                       solve_density)
from .config import RunConfig, parse_config
from .runner import run, run_boundary_bench
from .validate import validate
from . import oracles

__all__ = [
    "FREE_SPACE", "TORUS", "Grid", "NormReport", "ScalarField", "VectorField",
    "decay_check", "divergence", "dump_field", "load_field", "make_grid",
    "norms",
    "GaussianKernelSpec", "PoissonKernelSpec", "convolve", "heat_kernel",
    "leray_pressure", "leray_rhs", "poisson_kernel", "poisson_kernel_grad",
    "pressure_identity_residual",
    "DkExpansion", "DriftSpec", "LevySeries", "constant_drift",
    "dk_coefficients", "estimate_gamma_constant", "levy_gamma",
    "param_fundamental", "zero_drift",
    "Backend", "LinearProblem", "Trajectory", "cross_validate",
    "solve_cauchy",
    "BoundsLedger", "BumpPartition", "ConsumptionField", "ThresholdSets",
    "build_partition", "build_phi", "build_threshold_sets", "r_source",
    "solve_r",
    "IterationState", "MarchResult", "StepReport", "StepSchedule",
    "burgers_march", "global_march", "local_fixed_point",
    "psi_gap_diagnostic", "rho_schedule",
    "BoundaryDensity", "BoundaryDomain", "HeatGamma", "RobinData",
    "boundary_step", "fd_robin_reference", "k_gamma", "solve_density",
    "RunConfig", "parse_config", "run", "run_boundary_bench", "validate",
]
