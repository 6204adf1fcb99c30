"""Plug-and-play Monte Carlo: Langevin posterior sampling with score priors."""

from .core import (
    BatchStreams,
    ContractError,
    GaussianMixture,
    RngStream,
    gmm_logpdf,
    gmm_sample,
    gmm_score,
)
from .diagnostics import (
    FitError,
    Grid2D,
    GridCoverageWarning,
    GridPosterior,
    PixelStats,
    Posterior,
    classify_modes,
    conjugate_posterior,
    em_fit_gmm,
    grid_fi,
    grid_kl,
    sample_stats,
)
from .likelihoods import (
    ClosureLikelihood,
    ClosureSystem,
    GaussianLinearLikelihood,
    MaskedFourierLikelihood,
    simulate_measurements,
)
from .priors import ScoreModel, mmse_denoise, smoothed_score
from .samplers import (
    AnnealingSchedule,
    ChainConfig,
    DivergedChainError,
    SampleBatch,
    pmc_pnp_step,
    pmc_red_step,
    run_batch,
    schedule_at,
)

__version__ = "0.1.0"
