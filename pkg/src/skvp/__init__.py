"""Sherrington-Kirkpatrick model with a variance profile: state evolution, free energy, AMP and exact Gibbs oracles."""
from .amp import AmpTrace, NbTrace, PolyAmpTrace, amp_error, amp_run, nb_run, poly_amp_run
from .free_energy import (
    FixedPointNotConverged,
    FreeEnergyReport,
    asymptotic_free_energy,
    mc_free_energy,
    scalar_free_energy,
)
from .gibbs import (
    ENUM_CAP,
    ExactGibbs,
    GibbsStats,
    OverlapSample,
    cavity_stats,
    exact_gibbs,
    glauber_chain,
    hamiltonian,
    log_partition,
    overlap,
    sample_replicas,
    stats,
    tap_residual,
)
from .polyapprox import Polynomial, PolyFitError, PolyStateEvolution, fit_tanh_poly, poly_state_evolution
from .profile import (
    AssumptionReport,
    VarianceProfile,
    build_banded_toeplitz,
    build_circulant_deformation,
    build_mean_field,
    build_sparse_random,
    from_spec,
    validate,
)
from .sampler import (
    CouplingMatrix,
    GaussianField,
    SpectralBoundReport,
    sample_coupling,
    sample_coupling_pair,
    sample_field,
    spectral_report,
)
from .scalar import (
    GaussianQuadrature,
    ModelParams,
    StateEvolution,
    default_quadrature,
    g_func,
    gauss_expect,
    gauss_hermite,
    iterate_q,
    normal_trapezoid,
    onsager_coeff,
    solve_fixed_point,
)

__version__ = "0.1.0"
