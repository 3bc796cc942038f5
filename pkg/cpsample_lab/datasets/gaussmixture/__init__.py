"""Ring of isotropic Gaussians in the plane."""

import numpy as np

from cpsample_lab.libdataset import generator


class Generator(generator.Generator):
    GENERATOR_NAME = "gauss-mixture-2d"
    DATA_DIM = 2

    def custom_init(self):
        self.modes = int(self.config.get("modes", 8))
        self.radius = float(self.config.get("radius", 2.0))
        self.std = float(self.config.get("std", 0.3))
        angles = 2 * np.pi * np.arange(self.modes) / self.modes
        self.centers = self.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)

    def draw(self, n, rng):
        which = rng.integers(0, self.modes, size=n)
        return self.centers[which] + self.std * rng.standard_normal((n, 2))
