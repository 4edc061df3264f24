"""Fixed-grid integrators for sampling scalar linear diffusions,
validated against analytic Gaussian-mixture oracles."""

from .diffusion import (
    DiffusionSpec,
    VpSchedule,
    rho_of_t,
    t_of_rho,
    transition,
    vesde,
    vpsde,
)
from .errors import (
    ConfigError,
    DegenerateNodesError,
    DiffintError,
    DivergenceError,
    DomainError,
    GridMismatchError,
    OracleTrustError,
    ParameterError,
    QuadratureError,
)
from .oracle import (
    EpsilonField,
    GaussianMixture,
    Trajectory,
    em_simulate,
    em_terminal_batch,
    epsilon_field,
    marginal_at,
    pf_loglik,
    reference_self_check,
    reference_solve,
    score,
)
from .samplers import (
    IPNDM_BLEND,
    SAMPLER_NAMES,
    SolverRun,
    ddim_sample,
    ddim_step,
    ei_score_sample,
    euler_sample,
    ipndm_sample,
    rho_ab_sample,
    rho_rk_sample,
    run_sampler,
    sddim_sample,
    sddim_step,
    tab_sample,
)
from .timegrid import TimeGrid, log_rho, make_grid, power_rho, power_t, quadratic, uniform
from .weights import WeightTable, lagrange_basis, rho_ab_weights, tab_weights

__version__ = "0.1.0"
