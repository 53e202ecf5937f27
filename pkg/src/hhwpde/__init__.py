"""ADI finite-difference pricing of European and barrier options under the
Heston-Hull-White hybrid model, with a semi-closed-form validation path and
a convergence-benchmark CLI."""

from .adi import StepperConfig, integrate, step_cs, step_do, step_hv, step_mcs
from .analytic import b_integral, bond_price, call_price, call_price_table, char_fn, probability
from .discretize import (
    SemidiscreteSystem,
    SplitOperator,
    assemble,
    coeff_backward,
    coeff_central,
    coeff_forward,
    coeff_second,
    initial_vector,
)
from .grid import (
    Grid3D,
    GridMode,
    GridSpec,
    Mesh1D,
    build_grid,
    build_r_mesh,
    build_s_mesh,
    build_uniform_meshes,
    build_v_mesh,
    default_spec,
    smoothness_report,
    with_barrier,
)
from .harness import (
    ConvergenceTable,
    ErrorReport,
    ReferenceCache,
    RegionOfInterest,
    fit_order,
    mc_oracle,
    run_experiment,
    spatial_error,
    temporal_error,
    uniform_comparison,
)
from .linalg import BandedLU, BandedMatrix, SingularPivotError, SparseOperator, band_factor, band_solve, sparse_apply
from .model import (
    CaseId,
    HHWParams,
    OptionKind,
    OptionSpec,
    SchemeId,
    case_params,
    feller_satisfied,
    gamma_measure,
    mean_reversion,
    theta_default,
    with_zero_cross_correlations,
)

__version__ = "0.1.0"
