"""Lancaster bivariate probabilities: construction, Gibbs spectra, verification.

The package builds bivariate laws whose density against the product of their
margins expands diagonally in the margins' orthonormal polynomials, runs the
associated two-component Gibbs samplers (whose x-chain eigenvalues are the
squared expansion coefficients), screens candidate coefficient sequences via
truncated moment-problem conditions, and scans triple-product kernels for
positivity.
"""

from .measures import (
    MeasureSpec,
    MeasureError,
    gaussian_measure,
    gaussian_loc_scale_measure,
    poisson_measure,
    binomial_measure,
    negative_binomial_measure,
    gamma_measure,
    gamma_scaled_measure,
    hyperbolic_measure,
    beta_measure,
    jacobi_symmetric_measure,
    beta_binomial_measure,
    cartier_dunau_measure,
)
from .orthopoly import (
    DEGREE_CAP,
    MomentSequence,
    RecurrenceCoeffs,
    moments,
    recurrence,
    eval_orthonormal,
    orthonormal_table,
    leading_coeff,
    quadrature,
    gram_matrix,
)
from .nef import (
    NefSpec,
    DYPrior,
    make_nef,
    mean_map,
    psi,
    dy_prior,
    mean_reparam,
    mixture_marginal,
    jorgensen_contains,
)
from .lancaster import (
    LancasterSequence,
    BivariateLancaster,
    VerifyReport,
    seq_buja,
    seq_beta_binomial,
    seq_eagleson,
    seq_hyperbolic_beta,
    seq_geometric_cross,
    seq_product,
    density_truncated,
    verify_moment_representation,
    estimate_rho,
    kibble_laplace,
    BujaModel,
    BetaBinomialModel,
    EaglesonGammaModel,
    KibbleMoranModel,
)
from .gibbs import (
    ConjugateModel,
    ChainTrace,
    make_model,
    run_x_chain,
    exact_transition_matrix,
    spectral_eigencheck,
    autocorrelation_vs_spectrum,
    chisq_decay_bound,
)
from .triplekernel import (
    KernelSpec,
    PositivityReport,
    series_K,
    jacobi_delta,
    jacobi_Ka,
    extremal_sigma_z,
    elliptical_contour_check,
    positivity_scan,
    default_kernel_spec,
)

__version__ = "0.1.0"
