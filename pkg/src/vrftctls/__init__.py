"""VRFT controller tuning with OLS, instrumental-variable and CTLS estimators."""

from .campaign import CampaignConfig, CampaignReport, ConfigError, load_config, run_campaign, validate_config
from .estimators import (
    CTLS,
    IV,
    OLS,
    CtlsProblem,
    EstimateResult,
    build_filter_bank,
    ctls_cost,
    ctls_estimate,
    iv_estimate,
    ols_estimate,
    toeplitz_from_filter,
)
from .metrics import closed_loop_cost, method_stats, mse_stats, stability_rate, summarize_distribution
from .optim import OptimOptions, nelder_mead
from .sig_sim import LoopMode, NoiseSpec, prbs, simulate_closed_loop, simulate_open_loop
from .tf_algebra import RationalTF, filter_seq, impulse_response, is_stable, tf_feedback, tf_simplify
from .vrft_core import (
    ControllerStructure,
    assemble_controller,
    build_lf,
    ideal_controller,
    ideal_parameters,
    vrft_regressors,
)

__version__ = "0.1.0"
