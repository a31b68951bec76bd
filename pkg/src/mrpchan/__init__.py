"""Exact and Monte Carlo mutual information of Markov-renewal Poisson channels.

The pipeline: build a semi-Markov kernel (``kernels``), project it onto the
observable transitions (``filtering``, exact in the Laplace domain via
``laplace``), track the observer's posterior and hazards (``intensity``),
solve the renewal equations for finite-horizon information (``renewal``),
take limits for the information rate (``limits``), and fall back to marginal
Monte Carlo where no closed form exists (``simulate``).  ``models`` ships the
worked examples and ``cli`` the command-line front end.
"""

from .errors import (
    CapabilityError,
    ConditioningWarning,
    FilterDegeneracyError,
    InputError,
    MrpChanError,
    NonConvergentSeriesError,
    RefinementError,
    StructuralError,
    UnstableDensityError,
)
from .exppoly import ExpPolyDensity
from .kernels import (
    GeneratorSpec,
    SemiMarkovKernel,
    smk_from_competing,
    smk_from_conditional,
    smk_from_generator,
)
from .laplace import RationalLT, invert_lt, lt_of, neumann_series, numeric_inverse
from .filtering import (
    FilterOutput,
    ModulatedKernel,
    TransitionClassMap,
    anderson_filter,
    as_filter_output,
    augment,
    coarse_grain,
    marginal_filter,
    modulated_kernel,
    observable_states,
    transient_row,
    with_transient,
)
from .intensity import (
    HazardEval,
    ThetaState,
    hazard_recurrent,
    hazard_transient,
    path_log_density,
    theta_init,
    theta_update,
)
from .renewal import (
    GridFunction,
    PhiCurve,
    exact_mi_curve,
    integrate_mi_term,
    phi_evolution,
    renewal_density_exact,
    volterra_solve,
)
from .limits import (
    HoldingTimeLaw,
    MirChannel,
    MirTerms,
    StationarySummary,
    dentropy,
    dri_checklist,
    expected_log_survival,
    holding_time_law,
    interarrival_density,
    mir_3state_forms,
    mir_channel,
    mir_mrp,
    phi_rate_renewal,
    stationary,
)
from .simulate import (
    MCEstimate,
    StaticMiGrid,
    Trajectory,
    mc_mi_dynamic,
    mc_mi_static,
    simulate_mrp,
)
from .models import (
    GeneModel,
    GeneModelParams,
    LeakageModel,
    LeakageModelParams,
    build_gene_model,
    build_leakage_model,
    poisson_kernel,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
