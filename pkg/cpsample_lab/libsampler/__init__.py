from cpsample_lab.libsampler.cpsample import cpsample_generate
from cpsample_lab.libsampler.ddim import ddim_generate, ddpm_generate
from cpsample_lab.libsampler.guidance import (
    classifier_guided_eps,
    cp_epsilon_hat,
    cp_guidance,
    log_prob_gradient,
)
from cpsample_lab.libsampler.rejection import rejection_sample
from cpsample_lab.libsampler.sampler import GuidanceConfig, SampleRun, sample_rng

__all__ = [
    "GuidanceConfig",
    "SampleRun",
    "classifier_guided_eps",
    "cp_epsilon_hat",
    "cp_guidance",
    "cpsample_generate",
    "ddim_generate",
    "ddpm_generate",
    "log_prob_gradient",
    "rejection_sample",
    "sample_rng",
]
