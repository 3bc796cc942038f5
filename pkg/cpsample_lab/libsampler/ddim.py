"""Unguided sampler: deterministic DDIM, or DDPM ancestral sampling with ancestral=True.

Given a classifier, p(y=1 | x_t, t) is traced along the unguided trajectories for comparison
with CPSample runs; it never changes the samples.
"""

from cpsample_lab.libmodels import prob1
from cpsample_lab.libsampler import sampler


class Sampler(sampler.Sampler):
    SAMPLER_NAME = "ddim"

    def __init__(self, denoiser, schedule, cfg=None, ancestral=False, **kwargs):
        super().__init__(denoiser, schedule, cfg, **kwargs)
        self.ancestral = ancestral
        if ancestral:
            self.SAMPLER_NAME = "ddpm"

    def eps_hat(self, x, t):
        p1 = None
        if self.classifier is not None and self.cfg.record_trace:
            p1 = prob1(self.classifier, x, t)
        return self.denoiser.predict(x, t), p1, None


def ddim_generate(denoiser, schedule, n, seed, cfg=None, dim=None, **kwargs):
    return Sampler(denoiser, schedule, cfg, **kwargs).generate(n, seed, dim)


def ddpm_generate(denoiser, schedule, n, seed, dim=None, **kwargs):
    return Sampler(denoiser, schedule, ancestral=True, **kwargs).generate(n, seed, dim)
