"""Mean-field classical spin systems on finite state spaces.

Computes the thermodynamic pressure by three independent routes — exact
finite-N enumeration, the extended variational principle (EVP), and the
Gibbs-de Finetti principle (GdFP) — and cross-verifies them through
finite-N inequalities, cavity bounds, and minimax duality.
"""

from .duality import SaddleAudit, lagrangian, maximize_over_mu, minimize_over_nu, saddle_audit
from .evp import (
    AtomicMetaMeasure,
    CappedEvpResult,
    CavityValues,
    EvpSolution,
    cavity_values,
    evp_gradient,
    evp_objective,
    minimize_evp_capped,
    pushforward_cavity,
    solve_evp,
)
from .exact import (
    ExtrapolationResult,
    FiniteNReport,
    PressureRow,
    PressureTable,
    dense_hamiltonian,
    empirical_hamiltonian,
    extrapolate_pressure,
    fit_pressure_limit,
    gibbs_function,
    gibbs_measure,
    hamiltonian,
    occupancy_vectors,
    pressure,
    verify_finite_n,
)
from .gdfp import (
    GdfpSolution,
    RegularityReport,
    gdfp_gradient,
    gdfp_objective,
    regularity_report,
    self_consistent_map,
    solve_gdfp,
)
from .interaction import Interaction, ShapeClass, classify_shape, symmetrize
from .models import ModelError, ModelSpec, barycenter, build, builtin, quad_cost, quad_criticality
from .simplex import OptimizerError, project_capped_simplex
from .state_space import (
    CapExceededError,
    DenseProductMeasure,
    DiscreteMeasure,
    OccupancyVector,
    StateSpace,
    empirical_measure,
    log_mean_exp,
    relative_entropy,
    relative_entropy_dense,
)

__version__ = "0.1.0"
