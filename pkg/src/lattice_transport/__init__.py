"""Energy-transport model for ultracold atoms in optical lattices.

Kinetic coefficients and moment inversion on the momentum torus, plus
semi-implicit finite-difference solvers for the high-temperature
(n, W) system on the periodic unit interval, with a verification harness
for conservation, monotonicity, steady states, and convergence orders.
"""

from .kinetics import (
    ClosedFormIntegrals,
    DualVariables,
    ModelParams,
    MomentPair,
    Multipliers,
    QuadratureSpec,
    appendix_closed_forms,
    band_energy,
    diffusion_matrix,
    dual_coefficients,
    entropy_density,
    equilibrium,
    gamma,
    moments,
    omega,
    torus_integrate,
    velocity,
)
from .inversion import (
    InversionSettings,
    NoConvergenceError,
    SingularJacobianError,
    invert_moments,
    jacobian_det_formula,
    mb_closed_forms,
    selfconsistent_density,
)
from .solver import (
    InitialCondition,
    InvariantViolationError,
    LinearSolveFailure,
    PeriodicGrid1D,
    PicardNoConvergenceError,
    SimulationError,
    SolverConfig,
    State,
    ZeroPivotError,
    cyclic_tridiagonal_solve,
    g_mobility,
    run_simulation,
    step_implicit_picard,
    step_semi_implicit,
    step_zeroth_order,
)
from .diagnostics import (
    DegenerateFitError,
    DiagnosticsRecord,
    SteadyPrediction,
    check_positivity_condition,
    fit_decay,
    predict_steady,
    record,
)
from .harness import ConvergenceReport, restrict_to_coarse, spatial_study, temporal_study

__version__ = "0.1.0"
