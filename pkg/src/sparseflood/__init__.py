"""Sparse permeability-field reconstruction from waterflood well data.

The package couples a two-phase immiscible flow simulator with an
iteratively reweighted Gauss-Newton solver whose lp sparsity penalty lives
in an orthonormal 2D DCT domain, either added to the data misfit with a
weight alpha or multiplied into it so the weight sets itself.
"""

from .forward_models import (
    GridGeometry,
    LinearModel,
    ObservationSet,
    RockFluidProps,
    Schedule,
    SinglePhaseModel,
    SolverFailure,
    StateSnapshot,
    TwoPhaseModel,
    WellSpec,
    extract_observations,
    simulate_linear,
    simulate_two_phase,
    solve_single_phase,
)
from .irls import (
    IterationRecord,
    SolverConfig,
    additive_cost,
    additive_step,
    compute_beta,
    compute_epsilon,
    compute_weights,
    multiplicative_cost,
    multiplicative_step,
    run_additive,
    run_multiplicative,
    sparsity_term,
)
from .sensitivity import (
    JacobianMatrix,
    jacobian_adjoint_single_phase,
    jacobian_fd,
    jacobian_linear,
    linearized_data,
)
from .transform import DctBasis, truncate_top_fraction

__version__ = "0.1.0"
