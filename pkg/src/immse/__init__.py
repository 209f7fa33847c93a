"""Likelihood estimation for diffusion denoisers via the I-MMSE relation."""

__version__ = "0.1.0"

from .channel import CosineScheduleConfig, NoisySample, add_noise, alpha_to_timestep, scaled_input, timestep_to_alpha
from .core_math import (
    GaussianSpec,
    LogisticSampler,
    covering_sampler,
    estimate_moments,
    f_sigma,
    jacobi_eigendecomposition,
    make_rng,
    moment_matched_sampler,
    nats_to_bpd,
    sample_alpha,
)
from .denoise import (
    DiagonalGmm,
    DiscreteAtoms,
    EnsembleSpec,
    SoftDiscretized,
    build_ensemble,
    discrete_denoiser,
    gaussian_denoiser,
    gaussian_fallback,
    gmm_denoiser,
    soft_discretize,
)
from .estimate import (
    MseCurve,
    NllEstimate,
    TailConstants,
    continuous_from_curve,
    convert_density,
    dequantize,
    discrete_from_curve,
    estimation_gap_check,
    mmse_gaussian,
    mse_curve,
    nll_continuous,
    nll_discrete,
    nll_pointwise,
    pointwise_mse,
    tail_constants,
    variational_diffusion_loss,
    verify_high_snr_limit,
    verify_pointwise_immse,
)
from .nn import MlpDenoiser, TrainConfig, TrainResult, as_denoiser, load_checkpoint, save_checkpoint, train
from .variance import BootstrapReport, bootstrap_nll, clt_std_error
