"""AMP with side information: priors, conditional denoisers, state evolution, experiments."""

from .models import (
    BgPrior,
    BddPrior,
    GgPrior,
    SiChannel,
    SignalPair,
    sample_bg,
    sample_gg,
    sample_bdd_pair,
    sample_bdd_step,
    sample_bdd_stationary,
    make_si,
    signal_second_moment,
)
from .gaussian import (
    GaussianDensityParams,
    log_gauss_pdf,
    gauss_product,
    joint_density_log,
    joint_cond_mean,
    matched_filter_mu,
    matched_filter_var,
)
from .denoisers import (
    DenoiserContext,
    eta,
    eta_prime,
    eta_bg,
    eta_bg_prime,
    eta_bdd,
    eta_bdd_prime,
    eta_gg,
    eta_gg_prime,
    eta_no_si,
    eta_no_si_prime,
    eta_bg_no_si,
    eta_bg_no_si_prime,
)
from .measurement import (
    MeasurementOperator,
    Measurements,
    make_dense,
    make_toeplitz,
    measure,
)
from .engine import (
    AmpConfig,
    AmpResult,
    AmpDivergenceError,
    amp_run,
    run_no_si,
    onsager_coeff,
)
from .state_evolution import (
    SeTrace,
    EffectiveChannel,
    se_step,
    se_run,
    se_gaussian_si_step,
    effective_channel,
    phase_grid,
)
from .oracle import (
    UnreliableEstimateError,
    QuadratureError,
    oracle_posterior_mean_quadrature,
    oracle_posterior_mean_no_si,
    oracle_posterior_mean_mc,
    oracle_joint_density,
)

__version__ = "0.1.0"

__all__ = [
    "BgPrior", "BddPrior", "GgPrior", "SiChannel", "SignalPair",
    "sample_bg", "sample_gg", "sample_bdd_pair", "sample_bdd_step",
    "sample_bdd_stationary", "make_si", "signal_second_moment",
    "GaussianDensityParams", "log_gauss_pdf", "gauss_product",
    "joint_density_log", "joint_cond_mean", "matched_filter_mu", "matched_filter_var",
    "DenoiserContext", "eta", "eta_prime", "eta_bg", "eta_bg_prime",
    "eta_bdd", "eta_bdd_prime", "eta_gg", "eta_gg_prime",
    "eta_no_si", "eta_no_si_prime", "eta_bg_no_si", "eta_bg_no_si_prime",
    "MeasurementOperator", "Measurements", "make_dense", "make_toeplitz", "measure",
    "AmpConfig", "AmpResult", "AmpDivergenceError", "amp_run", "run_no_si", "onsager_coeff",
    "SeTrace", "EffectiveChannel", "se_step", "se_run", "se_gaussian_si_step",
    "effective_channel", "phase_grid",
    "UnreliableEstimateError", "QuadratureError",
    "oracle_posterior_mean_quadrature", "oracle_posterior_mean_no_si",
    "oracle_posterior_mean_mc", "oracle_joint_density",
]
