"""Always-on classifier guidance toward one fixed label."""

import numpy as np

from cpsample_lab.libmodels import prob1
from cpsample_lab.libsampler import sampler
from cpsample_lab.libsampler.guidance import log_prob_gradient


class Sampler(sampler.Sampler):
    SAMPLER_NAME = "guided"

    def __init__(self, denoiser, schedule, cfg=None, target_y=1, **kwargs):
        self.target_y = target_y
        super().__init__(denoiser, schedule, cfg, **kwargs)

    def custom_init(self):
        if self.classifier is None:
            raise ValueError("classifier guidance needs a classifier")
        if self.target_y not in (0, 1):
            raise ValueError(f"target label must be 0 or 1, got {self.target_y}")

    def eps_hat(self, x, t):
        eps = self.denoiser.predict(x, t)
        p1 = prob1(self.classifier, x, t)
        on = np.ones(len(x), dtype=bool)
        if self.cfg.scale == 0:
            return eps, p1, on
        labels = np.full(len(x), self.target_y, dtype=np.uint8)
        grad = log_prob_gradient(self.classifier, x, t, labels)
        return eps - self.cfg.scale * np.sqrt(1.0 - self.schedule.alpha_bar[t]) * grad, p1, on
