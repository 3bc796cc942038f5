"""Dataset generator base class. Every dataset kind under datasets/ inherits this."""

import logging
from dataclasses import dataclass, field

import numpy as np

from cpsample_lab.common import ConfigException
from cpsample_lab.libtensor import Tensor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DatasetSpec:
    kind: str
    n: int
    n_test: int
    seed: int
    # kind-specific knobs, eg: radius/std for the mixture
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 2:
            raise ConfigException("dataset.n", f"dataset.n must be >= 2, got {self.n}")
        if self.n_test < 0:
            message = f"dataset.n_test must be >= 0, got {self.n_test}"
            raise ConfigException("dataset.n_test", message)


class Generator:
    GENERATOR_NAME = "NOT SET"
    DATA_DIM = None
    MAX_REDRAWS = 10

    def __init__(self, config=None):
        self.config = dict(config or {})
        self.custom_init()

    def custom_init(self):
        """For overriding"""
        pass

    def draw(self, n, rng):
        """n points as an [n, DATA_DIM] array."""
        raise NotImplementedError("draw() must be implemented by a subclass")

    def generate(self, n, n_test, seed):
        """(train, test) with no point in common. Exact duplicates are dropped and redrawn."""
        rng = np.random.default_rng(seed)
        want = n + n_test
        rows, seen = [], set()
        for _ in range(self.MAX_REDRAWS):
            for row in self.draw(want - len(rows), rng):
                key = row.tobytes()
                if key not in seen:
                    seen.add(key)
                    rows.append(row)
            if len(rows) == want:
                break
        else:
            raise ValueError(f"{self.GENERATOR_NAME}: could not draw {want} distinct points")
        data = np.stack(rows)
        log.info("%s: %d train + %d test points", self.GENERATOR_NAME, n, n_test)
        return Tensor(data[:n]), Tensor(data[n:])
