"""Coupled fluid-elastic channel solver with fractional-norm instrumentation."""

from .geometry import ChannelGeometry, InterfacePatch, build_geometry, normal_at
from .fields import (
    CutoffFunction,
    FlowMapState,
    SpaceTimeField,
    cofactor,
    cofactor_difference,
    flow_map,
    make_cutoff,
    piola_residual,
    read_snapshot,
    write_snapshot,
)
from .norms import (
    NormReport,
    NormSpec,
    interface_trace_norm,
    p01_experiment,
    slobodeckij_seminorm,
    spacetime_norm,
    spatial_fractional_norm,
    verify_interpolation,
    verify_trace_inequality,
)
from .stokes import (
    NumericalFailure,
    StokesProblem,
    StokesSolution,
    StokesSolver,
    divergence_decomposition,
    initial_pressure,
    solve_stokes,
)
from .wave import TraceReport, WaveProblem, WaveSolution, hidden_regularity_report, normal_trace, solve_wave
from .fsi import (
    DriverContext,
    IterationState,
    SchemeParameters,
    assemble_nonlinear_forcing,
    compute_parameters,
    iterate_to_fixed_point,
    linear_lambda_step,
    make_context,
    nonlinear_pi_step,
    verify_coupled_solution,
)

__version__ = "0.1.0"
