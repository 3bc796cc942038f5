"""Procedural 8x8 images: one filled rectangle or one cross on a dark background, with
pixel jitter. Values lie in [-1, 1]; images are flattened row-major to 64 values."""

import numpy as np

from cpsample_lab.libdataset import generator

SIDE = 8


class Generator(generator.Generator):
    GENERATOR_NAME = "tiny-shapes-8x8"
    DATA_DIM = SIDE * SIDE

    def custom_init(self):
        self.jitter = float(self.config.get("jitter", 0.05))

    def rectangle(self, rng):
        img = np.full((SIDE, SIDE), -1.0)
        h, w = rng.integers(2, 6, size=2)
        top, left = rng.integers(0, SIDE - h + 1), rng.integers(0, SIDE - w + 1)
        img[top : top + h, left : left + w] = 1.0
        return img

    def cross(self, rng):
        img = np.full((SIDE, SIDE), -1.0)
        arm = rng.integers(1, 4)
        r, c = rng.integers(arm, SIDE - arm, size=2)
        img[r - arm : r + arm + 1, c] = 1.0
        img[r, c - arm : c + arm + 1] = 1.0
        return img

    def draw(self, n, rng):
        out = np.empty((n, self.DATA_DIM))
        for i in range(n):
            img = self.cross(rng) if rng.random() < 0.5 else self.rectangle(rng)
            img = img + self.jitter * rng.standard_normal(img.shape)
            out[i] = np.clip(img, -1.0, 1.0).reshape(-1)
        return out
