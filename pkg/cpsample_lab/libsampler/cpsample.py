"""CPSample: DDIM with the noise prediction pushed away from confidently memorized labels."""

from cpsample_lab.libsampler import sampler
from cpsample_lab.libsampler.guidance import cp_guidance


class Sampler(sampler.Sampler):
    SAMPLER_NAME = "cpsample"

    def custom_init(self):
        if self.classifier is None:
            raise ValueError("CPSample needs a classifier")

    def eps_hat(self, x, t):
        eps = self.denoiser.predict(x, t)
        return cp_guidance(eps, self.classifier, x, t, self.cfg, self.schedule)


def cpsample_generate(denoiser, classifier, schedule, cfg, n, seed, dim=None, **kwargs):
    return Sampler(denoiser, schedule, cfg, classifier=classifier, **kwargs).generate(n, seed, dim)
